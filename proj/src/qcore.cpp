// Copyright 2026 The qmetro Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "qmetro/qcore.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

namespace qmetro {

const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Convergence: return "convergence error";
    case ErrorKind::InvalidChannel: return "invalid channel";
    case ErrorKind::NonExistence: return "non-existence error";
    case ErrorKind::Infeasible: return "infeasibility error";
    case ErrorKind::Degeneracy: return "degeneracy error";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::NotFound: return "not found";
  }
  return "error";
}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

void check_square(const Mat& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << a.rows() << "x" << a.cols();
    fail(ErrorKind::Dimension, os.str());
  }
}

bool is_hermitian(const Mat& a, double tol) {
  if (a.rows() != a.cols()) return false;
  return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

void check_hermitian(const Mat& a, double tol, const char* what) {
  check_square(a, what);
  if (!is_hermitian(a, tol)) fail(ErrorKind::Domain, std::string(what) + " is not Hermitian");
}

void check_state(const Mat& rho, const char* what) {
  check_hermitian(rho, 1e-10, what);
  if (std::abs(rho.trace() - cplx(1.0)) > 1e-8)
    fail(ErrorKind::Domain, std::string(what) + " does not have unit trace");
  Eigen::SelfAdjointEigenSolver<Mat> es(rho, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10)
    fail(ErrorKind::Domain, std::string(what) + " has a negative eigenvalue");
}

void check_derived(const DerivedState& ds) {
  check_state(ds.rho);
  for (const auto& d : ds.drho) {
    if (d.rows() != ds.rho.rows() || d.cols() != ds.rho.cols())
      fail(ErrorKind::Dimension, "drho dimension does not match rho");
    if (!is_hermitian(d, 1e-10)) fail(ErrorKind::Domain, "drho is not Hermitian");
    if (std::abs(d.trace()) > 1e-8) fail(ErrorKind::Domain, "drho is not traceless");
  }
}

void check_povm(const Povm& m) {
  if (m.ops.empty()) fail(ErrorKind::Domain, "empty POVM");
  const auto d = m.ops.front().rows();
  Mat sum = Mat::Zero(d, d);
  for (const auto& op : m.ops) {
    if (op.rows() != d || op.cols() != d) fail(ErrorKind::Dimension, "POVM elements differ in dimension");
    if (!is_hermitian(op, 1e-10)) fail(ErrorKind::Domain, "POVM element is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Mat> es(op, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10) fail(ErrorKind::Domain, "POVM element is not PSD");
    sum += op;
  }
  if ((sum - Mat::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-8)
    fail(ErrorKind::Domain, "POVM elements do not sum to identity");
}

Mat expm(const Mat& a) {
  check_square(a, "expm");
  if (!a.allFinite()) fail(ErrorKind::Domain, "expm: non-finite input");
  return a.exp();
}

std::pair<Mat, Mat> expm_frechet(const Mat& a, const Mat& e) {
  Mat ea;
  auto f = expm_frechet_many(a, {e}, &ea);
  return {ea, f.front()};
}

std::vector<Mat> expm_frechet_many(const Mat& a, const std::vector<Mat>& es, Mat* expa) {
  check_square(a, "expm_frechet");
  const auto n = a.rows();
  const auto k = static_cast<Eigen::Index>(es.size());
  Mat big = Mat::Zero((k + 1) * n, (k + 1) * n);
  for (Eigen::Index b = 0; b <= k; ++b) big.block(b * n, b * n, n, n) = a;
  for (Eigen::Index b = 0; b < k; ++b) {
    if (es[b].rows() != n || es[b].cols() != n) fail(ErrorKind::Dimension, "expm_frechet: direction size");
    big.block(0, (b + 1) * n, n, n) = es[b];
  }
  Mat eb = big.exp();
  if (expa) *expa = eb.topLeftCorner(n, n);
  std::vector<Mat> out;
  out.reserve(es.size());
  for (Eigen::Index b = 0; b < k; ++b) out.push_back(eb.block(0, (b + 1) * n, n, n));
  return out;
}

Vec vec(const Mat& a) {
  Vec v(a.size());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) v(i * a.cols() + j) = a(i, j);
  return v;
}

Mat unvec(const Vec& v) {
  const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
  if (d * d != v.size()) fail(ErrorKind::Dimension, "unvec: length is not a perfect square");
  return unvec(v, d);
}

Mat unvec(const Vec& v, Eigen::Index dim) {
  if (dim * dim != v.size()) fail(ErrorKind::Dimension, "unvec: length does not match dimension");
  Mat a(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) a(i, j) = v(i * dim + j);
  return a;
}

Mat kron(const Mat& a, const Mat& b) { return Eigen::kroneckerProduct(a, b).eval(); }

Mat superop_left(const Mat& a) { return kron(a, Mat::Identity(a.rows(), a.rows())); }

Mat superop_right(const Mat& b) { return kron(Mat::Identity(b.rows(), b.rows()), b.transpose()); }

Mat commutator_superop(const Mat& h) { return superop_left(h) - superop_right(h); }

Spectrum eigh(const Mat& a) {
  Eigen::SelfAdjointEigenSolver<Mat> es(a);
  if (es.info() != Eigen::Success) fail(ErrorKind::Convergence, "eigendecomposition failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

Mat sylvester_symmetric(const Spectrum& sp, const Mat& c, double eps) {
  const Mat& u = sp.vectors;
  Mat ct = u.adjoint() * c * u;
  const auto n = ct.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double pi = sp.values(i) < eps ? 0.0 : sp.values(i);
      const double pj = sp.values(j) < eps ? 0.0 : sp.values(j);
      const double s = pi + pj;
      ct(i, j) = s < eps ? cplx(0.0) : ct(i, j) / s;
    }
  }
  return u * ct * u.adjoint();
}

Mat sylvester_symmetric(const Mat& p, const Mat& c, double eps) {
  check_square(p, "sylvester_symmetric");
  if (c.rows() != p.rows() || c.cols() != p.cols()) fail(ErrorKind::Dimension, "sylvester_symmetric: C size");
  return sylvester_symmetric(eigh(p), c, eps);
}

double trace_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  if (is_hermitian(a, 1e-13)) {
    Eigen::SelfAdjointEigenSolver<Mat> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
  }
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues().sum();
}

std::vector<Mat> su_generators(int d) {
  if (d < 2) fail(ErrorKind::Domain, "su_generators: d must be at least 2");
  std::vector<Mat> sym, asym, diag;
  for (int j = 0; j < d; ++j) {
    for (int k = j + 1; k < d; ++k) {
      Mat s = Mat::Zero(d, d);
      s(j, k) = 1.0;
      s(k, j) = 1.0;
      sym.push_back(s);
      Mat a = Mat::Zero(d, d);
      a(j, k) = -kI;
      a(k, j) = kI;
      asym.push_back(a);
    }
  }
  for (int l = 1; l < d; ++l) {
    Mat g = Mat::Zero(d, d);
    const double c = std::sqrt(2.0 / (l * (l + 1.0)));
    for (int j = 0; j < l; ++j) g(j, j) = c;
    g(l, l) = -c * l;
    diag.push_back(g);
  }
  std::vector<Mat> out;
  out.insert(out.end(), sym.begin(), sym.end());
  out.insert(out.end(), asym.begin(), asym.end());
  out.insert(out.end(), diag.begin(), diag.end());
  return out;
}

std::vector<Mat> operator_basis(int d) {
  std::vector<Mat> out;
  out.push_back(Mat::Identity(d, d) / std::sqrt(static_cast<double>(d)));
  for (auto& g : su_generators(d)) out.push_back(g / std::sqrt(2.0));
  return out;
}

Mat weyl_heisenberg(int d, int a, int b) {
  Mat shift = Mat::Zero(d, d);
  Mat clock = Mat::Zero(d, d);
  for (int k = 0; k < d; ++k) {
    shift((k + 1) % d, k) = 1.0;
    clock(k, k) = std::polar(1.0, 2.0 * M_PI * k / d);
  }
  Mat out = Mat::Identity(d, d);
  for (int i = 0; i < a; ++i) out = shift * out;
  for (int i = 0; i < b; ++i) out = out * clock;
  const double phase = M_PI * (d + 1.0) * a * b / d;
  return std::polar(1.0, phase) * out;
}

namespace {

// Residuals |<psi|D_p|psi>|^2/|psi|^4 - 1/(d+1) over the d^2-1 nontrivial displacements.
struct SicResidual {
  using Scalar = double;
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };

  int d;
  std::vector<Mat> ops;
  SicResidual(int dim, std::vector<Mat> displacements) : d(dim), ops(std::move(displacements)) {}
  int inputs() const { return 2 * d; }
  int values() const { return d * d + 1; }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& f) const {
    Vec psi(d);
    for (int i = 0; i < d; ++i) psi(i) = cplx(x(2 * i), x(2 * i + 1));
    const double n2 = psi.squaredNorm();
    for (std::size_t p = 0; p < ops.size(); ++p) {
      const cplx ov = psi.dot(ops[p] * psi);
      f(static_cast<Eigen::Index>(p)) = std::norm(ov) / (n2 * n2) - 1.0 / (d + 1.0);
    }
    // fix the scale and global phase so the Jacobian has full column rank
    f(d * d - 1) = n2 - 1.0;
    f(d * d) = x(1);
    return 0;
  }
};

}  // namespace

Povm sic_povm(int d, const SicOptions& opt) {
  if (d < 2 || d > opt.max_dim) fail(ErrorKind::Domain, "sic_povm: dimension out of range");
  std::vector<Mat> disp;
  std::vector<Mat> all;
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      Mat D = weyl_heisenberg(d, a, b);
      all.push_back(D);
      if (a != 0 || b != 0) disp.push_back(D);
    }
  }
  std::mt19937_64 rng(opt.seed + static_cast<std::uint64_t>(d));
  std::normal_distribution<double> gauss;
  double best = std::numeric_limits<double>::infinity();
  Vec best_psi;
  for (int attempt = 0; attempt < opt.restarts; ++attempt) {
    SicResidual functor(d, disp);
    Eigen::NumericalDiff<SicResidual, Eigen::Central> num(functor);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<SicResidual, Eigen::Central>> lm(num);
    lm.parameters.maxfev = 4000;
    lm.parameters.xtol = 1e-15;
    lm.parameters.ftol = 1e-15;
    Eigen::VectorXd x(2 * d);
    for (int i = 0; i < 2 * d; ++i) x(i) = gauss(rng);
    lm.minimize(x);
    Eigen::VectorXd f(d * d + 1);
    functor(x, f);
    const double err = f.head(d * d - 1).cwiseAbs().maxCoeff();
    if (err < best) {
      best = err;
      best_psi = Vec(d);
      for (int i = 0; i < d; ++i) best_psi(i) = cplx(x(2 * i), x(2 * i + 1));
    }
    if (best <= opt.tol * 0.1) break;
  }
  if (!(best <= opt.tol)) {
    std::ostringstream os;
    os << "sic_povm: fiducial search reached max overlap deviation " << best << " for d=" << d;
    fail(ErrorKind::Convergence, os.str());
  }
  best_psi.normalize();
  Povm m;
  for (const auto& D : all) {
    Vec phi = D * best_psi;
    m.ops.push_back(phi * phi.adjoint() / static_cast<double>(d));
  }
  return m;
}

Mat pauli(int k) {
  Mat s = Mat::Zero(2, 2);
  switch (k) {
    case 0: s = Mat::Identity(2, 2); break;
    case 1: s(0, 1) = 1.0; s(1, 0) = 1.0; break;
    case 2: s(0, 1) = -kI; s(1, 0) = kI; break;
    case 3: s(0, 0) = 1.0; s(1, 1) = -1.0; break;
    default: fail(ErrorKind::Domain, "pauli: index must be 0..3");
  }
  return s;
}

Mat ket_projector(const Vec& psi) { return psi * psi.adjoint(); }

namespace {
Mat gaussian_matrix(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Mat m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const double re = g(rng);
      const double im = g(rng);
      m(i, j) = cplx(re, im);
    }
  return m;
}
}  // namespace

Mat random_density(int d, std::uint64_t seed, bool full_rank) {
  std::mt19937_64 rng(seed);
  Mat g = gaussian_matrix(d, rng);
  if (!full_rank) g.col(d - 1).setZero();
  Mat rho = g * g.adjoint();
  rho /= rho.trace().real();
  return (rho + rho.adjoint()) / 2.0;
}

Mat random_unitary(int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mat g = gaussian_matrix(d, rng);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < d; ++i) {
    const cplx ph = r(i, i) / std::abs(r(i, i));
    q.col(i) *= ph;
  }
  return q;
}

Mat random_hermitian(int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Mat g = gaussian_matrix(d, rng);
  return (g + g.adjoint()) / 2.0;
}

}  // namespace qmetro
