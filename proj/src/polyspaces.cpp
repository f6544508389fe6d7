#include "hdgplus/polyspaces.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <memory>
#include <mutex>

namespace hdgplus {

namespace {

void check_order(int order) {
  if (order < 0) throw InvalidArgument("quadrature order must be >= 0");
  if (order > kMaxQuadratureOrder)
    throw InvalidArgument("quadrature order " + std::to_string(order) + " exceeds the supported maximum " +
                          std::to_string(kMaxQuadratureOrder));
}

}  // namespace

void gauss_jacobi01(int n, int alpha, std::vector<double>& x, std::vector<double>& w) {
  if (n < 1) throw InvalidArgument("Gauss-Jacobi rule needs at least one point");
  const double a = alpha, b = 0.0;
  MatX J = MatX::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double s = 2.0 * i + a + b;
    J(i, i) = i == 0 ? (b - a) / (a + b + 2.0) : (b * b - a * a) / (s * (s + 2.0));
    if (i + 1 < n) {
      const double m = i + 1.0;
      const double t = 2.0 * m + a + b;
      const double off = std::sqrt(4.0 * m * (m + a) * (m + b) * (m + a + b) / (t * t * (t + 1.0) * (t - 1.0)));
      J(i, i + 1) = J(i + 1, i) = off;
    }
  }
  Eigen::SelfAdjointEigenSolver<MatX> es(J);
  const double mu0 = std::pow(2.0, a + b + 1.0) * std::tgamma(a + 1.0) * std::tgamma(b + 1.0) / std::tgamma(a + b + 2.0);
  const double scale = std::pow(2.0, -(a + 1.0));
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    x[i] = 0.5 * (1.0 + es.eigenvalues()(i));
    const double v = es.eigenvectors()(0, i);
    w[i] = mu0 * v * v * scale;
  }
}

TetQuadrature quad_tet(int order) {
  check_order(order);
  const int n = (order + 2) / 2;
  std::vector<double> xa, wa, xb, wb, xc, wc;
  gauss_jacobi01(n, 0, xa, wa);
  gauss_jacobi01(n, 1, xb, wb);
  gauss_jacobi01(n, 2, xc, wc);
  TetQuadrature q;
  q.exactness = 2 * n - 1;
  q.points.reserve(n * n * n);
  q.weights.reserve(n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < n; ++l) {
        const double c = xc[l], bb = xb[j], aa = xa[i];
        q.points.emplace_back(aa * (1 - bb) * (1 - c), bb * (1 - c), c);
        q.weights.push_back(wa[i] * wb[j] * wc[l]);
      }
  return q;
}

TriQuadrature quad_tri(int order) {
  check_order(order);
  const int n = (order + 2) / 2;
  std::vector<double> xa, wa, xb, wb;
  gauss_jacobi01(n, 0, xa, wa);
  gauss_jacobi01(n, 1, xb, wb);
  TriQuadrature q;
  q.exactness = 2 * n - 1;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      q.points.emplace_back(xa[i] * (1 - xb[j]), xb[j]);
      q.weights.push_back(wa[i] * wb[j]);
    }
  return q;
}

// ---------------------------------------------------------------------------

template <int Dim>
OrthonormalBasis<Dim>::OrthonormalBasis(int degree) : degree_(degree) {
  if (degree < 0) throw InvalidArgument("basis degree must be >= 0");
  if (2 * degree + 2 > kMaxQuadratureOrder) throw InvalidArgument("basis degree " + std::to_string(degree) + " is too large");
  for (int t = 0; t <= degree; ++t) {
    if constexpr (Dim == 3) {
      for (int a = t; a >= 0; --a)
        for (int b = t - a; b >= 0; --b) exponents_.push_back({a, b, t - a - b});
    } else {
      for (int a = t; a >= 0; --a) exponents_.push_back({a, t - a});
    }
  }
  const int n = size();
  dir_.assign(n, -1);
  parent_.assign(n, -1);
  for (int i = 1; i < n; ++i) {
    auto e = exponents_[i];
    int d = 0;
    while (e[d] == 0) ++d;
    e[d] -= 1;
    dir_[i] = d;
    for (int j = 0; j < i; ++j)
      if (exponents_[j] == e) parent_[i] = j;
  }

  QuadratureRule<Dim> rule;
  if constexpr (Dim == 3)
    rule = quad_tet(2 * degree + 2);
  else
    rule = quad_tri(2 * degree + 2);
  const int np = static_cast<int>(rule.size());
  VecX w(np);
  double measure = 0.0;
  for (int p = 0; p < np; ++p) measure += w(p) = rule.weights[p];
  c0_ = 1.0 / std::sqrt(measure);

  const double centre = 1.0 / (Dim + 1);
  MatX V(np, n);
  V.col(0).setConstant(c0_);
  R_ = MatX::Zero(n, n);
  norm_ = VecX::Ones(n);
  for (int i = 1; i < n; ++i) {
    for (int p = 0; p < np; ++p) V(p, i) = (rule.points[p](dir_[i]) - centre) * V(p, parent_[i]);
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < i; ++j) {
        const double r = (w.array() * V.col(j).array() * V.col(i).array()).sum();
        V.col(i) -= r * V.col(j);
        R_(i, j) += r;
      }
    const double nrm = std::sqrt((w.array() * V.col(i).array().square()).sum());
    if (!(nrm > 1e-13)) throw NumericalError("Gram-Schmidt breakdown while building the orthonormal basis");
    V.col(i) /= nrm;
    norm_(i) = nrm;
  }
}

template <int Dim>
MatX OrthonormalBasis<Dim>::tabulate(std::span<const Point<Dim>> points) const {
  const int np = static_cast<int>(points.size()), n = size();
  const double centre = 1.0 / (Dim + 1);
  MatX V(np, n);
  V.col(0).setConstant(c0_);
  for (int i = 1; i < n; ++i) {
    for (int p = 0; p < np; ++p) V(p, i) = (points[p](dir_[i]) - centre) * V(p, parent_[i]);
    V.col(i) -= V.leftCols(i) * R_.row(i).head(i).transpose();
    V.col(i) /= norm_(i);
  }
  return V;
}

template <int Dim>
std::array<MatX, Dim> OrthonormalBasis<Dim>::tabulate_grad(std::span<const Point<Dim>> points) const {
  const int np = static_cast<int>(points.size()), n = size();
  const double centre = 1.0 / (Dim + 1);
  const MatX V = tabulate(points);
  std::array<MatX, Dim> G;
  for (auto& g : G) g = MatX::Zero(np, n);
  for (int i = 1; i < n; ++i) {
    for (int d = 0; d < Dim; ++d) {
      for (int p = 0; p < np; ++p) {
        double v = (points[p](dir_[i]) - centre) * G[d](p, parent_[i]);
        if (d == dir_[i]) v += V(p, parent_[i]);
        G[d](p, i) = v;
      }
      G[d].col(i) -= G[d].leftCols(i) * R_.row(i).head(i).transpose();
      G[d].col(i) /= norm_(i);
    }
  }
  return G;
}

template <int Dim>
VecX OrthonormalBasis<Dim>::eval(const Point<Dim>& x) const {
  return tabulate(std::span<const Point<Dim>>(&x, 1)).row(0).transpose();
}

template <int Dim>
Eigen::Matrix<double, Eigen::Dynamic, Dim> OrthonormalBasis<Dim>::grad(const Point<Dim>& x) const {
  const auto G = tabulate_grad(std::span<const Point<Dim>>(&x, 1));
  Eigen::Matrix<double, Eigen::Dynamic, Dim> out(size(), Dim);
  for (int d = 0; d < Dim; ++d) out.col(d) = G[d].row(0).transpose();
  return out;
}

template <int Dim>
double OrthonormalBasis<Dim>::orthonormality_defect() const {
  QuadratureRule<Dim> rule;
  if constexpr (Dim == 3)
    rule = quad_tet(2 * degree_ + 5);
  else
    rule = quad_tri(2 * degree_ + 5);
  const MatX phi = tabulate(rule.points);
  MatX gram = MatX::Zero(size(), size());
  for (std::size_t p = 0; p < rule.size(); ++p) gram += rule.weights[p] * phi.row(p).transpose() * phi.row(p);
  return (gram - MatX::Identity(size(), size())).cwiseAbs().maxCoeff();
}

template class OrthonormalBasis<2>;
template class OrthonormalBasis<3>;

namespace {
template <class B>
const B& cached_basis(int degree) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<B>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[degree];
  if (!slot) slot = std::make_unique<B>(degree);
  return *slot;
}
}  // namespace

const TetBasis& tet_basis(int degree) { return cached_basis<TetBasis>(degree); }
const TriBasis& tri_basis(int degree) { return cached_basis<TriBasis>(degree); }

template <int Dim>
MatX BasisSet<Dim>::gram() const {
  QuadratureRule<Dim> rule;
  if constexpr (Dim == 3)
    rule = quad_tet(2 * degree() + 2);
  else
    rule = quad_tri(2 * degree() + 2);
  const MatX phi = scalar->tabulate(rule.points);
  const int n = scalar->size(), m = multiplier(rank);
  MatX g = MatX::Zero(n, n);
  for (std::size_t p = 0; p < rule.size(); ++p) g += rule.weights[p] * phi.row(p).transpose() * phi.row(p);
  // E_c and the unit vectors are orthonormal, so the expanded Gram is g (x) I.
  MatX out = MatX::Zero(n * m, n * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int c = 0; c < m; ++c) out(i * m + c, j * m + c) = g(i, j);
  return out;
}

template struct BasisSet<2>;
template struct BasisSet<3>;

// ---------------------------------------------------------------------------

FaceSystem::FaceSystem(int degree, int quad_order) : degree_(degree), basis_(&tri_basis(degree)) {
  if (quad_order < 0) quad_order = default_quad_order(degree);
  rule_ = quad_tri(quad_order);
  const TetGeometry ref = TetGeometry::reference();
  for (int f = 0; f < 4; ++f) {
    frames_[f] = ref.face(f);
    const double jac = frames_[f].jacobian();
    points_[f].clear();
    weights_[f].clear();
    for (std::size_t p = 0; p < rule_.size(); ++p) {
      points_[f].push_back(frames_[f].point(rule_.points[p]));
      weights_[f].push_back(rule_.weights[p] * jac);
    }
    psi_[f] = basis_->tabulate(rule_.points) / std::sqrt(jac);
  }
}

MatX FaceSystem::trace_matrix(const TetBasis& element_basis) const {
  if (rule_.exactness < degree_ + element_basis.degree())
    throw InvalidArgument("face quadrature too coarse for the trace matrix");
  const int ne = element_basis.size(), nb = face_functions(), fd = face_dofs();
  MatX T = MatX::Zero(size(), 3 * ne);
  for (int f = 0; f < 4; ++f) {
    const MatX phi = element_basis.tabulate(points_[f]);
    MatX m = MatX::Zero(nb, ne);
    for (std::size_t p = 0; p < rule_.size(); ++p) m += weights_[f][p] * psi_[f].row(p).transpose() * phi.row(p);
    for (int b = 0; b < nb; ++b)
      for (int j = 0; j < ne; ++j)
        for (int d = 0; d < 3; ++d) T(f * fd + b * 3 + d, j * 3 + d) = m(b, j);
  }
  return T;
}

VecX FaceSystem::project(std::span<const std::vector<Vec3>> samples) const {
  if (samples.size() != 4) throw InvalidArgument("face projection needs samples on 4 faces");
  const int nb = face_functions(), fd = face_dofs();
  VecX out = VecX::Zero(size());
  for (int f = 0; f < 4; ++f) {
    if (samples[f].size() != rule_.size()) throw InvalidArgument("face sample count does not match the face rule");
    for (std::size_t p = 0; p < rule_.size(); ++p)
      for (int b = 0; b < nb; ++b) out.segment<3>(f * fd + b * 3) += weights_[f][p] * psi_[f](p, b) * samples[f][p];
  }
  return out;
}

VecX pm_face_project(std::span<const std::vector<Vec3>> samples, int degree) {
  return FaceSystem(degree).project(samples);
}

}  // namespace hdgplus
