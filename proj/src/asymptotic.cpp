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

#include "qmetro/asymptotic.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>

#include "qmetro/sdp.hpp"

namespace qmetro {

LdType parse_ld_type(const std::string& s) {
  if (s == "SLD") return LdType::SLD;
  if (s == "RLD") return LdType::RLD;
  if (s == "LLD") return LdType::LLD;
  fail(ErrorKind::Config, "unknown logarithmic derivative type '" + s + "'");
}

const char* to_string(LdType t) {
  switch (t) {
    case LdType::SLD: return "SLD";
    case LdType::RLD: return "RLD";
    case LdType::LLD: return "LLD";
  }
  return "SLD";
}

namespace {

void check_inputs(const DerivedState& ds) {
  check_square(ds.rho, "rho");
  for (const auto& d : ds.drho)
    if (d.rows() != ds.rho.rows() || d.cols() != ds.rho.cols())
      fail(ErrorKind::Dimension, "drho dimension does not match rho");
}

std::vector<std::string> default_labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t a = 0; a < n; ++a) out.push_back("x" + std::to_string(a));
  return out;
}

LogDerivative right_or_left(const DerivedState& ds, double eps, bool right) {
  check_inputs(ds);
  const Spectrum sp = eigh(ds.rho);
  const auto d = ds.rho.rows();
  LogDerivative out;
  out.kind = right ? LdType::RLD : LdType::LLD;
  for (const auto& dr : ds.drho) {
    Mat t = sp.vectors.adjoint() * dr * sp.vectors;
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double lam = right ? sp.values(i) : sp.values(j);
        if (lam < eps) {
          if (std::abs(t(i, j)) > 1e-8)
            fail(ErrorKind::NonExistence,
                 std::string(right ? "RLD" : "LLD") + " does not exist: the support of drho is not contained in the support of rho");
          t(i, j) = 0.0;
        } else {
          t(i, j) /= lam;
        }
      }
    }
    out.ops.push_back(sp.vectors * t * sp.vectors.adjoint());
  }
  return out;
}

}  // namespace

LogDerivative sld(const DerivedState& ds, bool eigenbasis, double eps) {
  check_inputs(ds);
  const Spectrum sp = eigh(ds.rho);
  LogDerivative out;
  out.kind = LdType::SLD;
  out.eigenbasis = eigenbasis;
  if (eigenbasis) out.basis = sp.vectors;
  for (const auto& dr : ds.drho) {
    Mat l = sylvester_symmetric(sp, 2.0 * dr, eps);
    l = (l + l.adjoint()) / 2.0;
    out.ops.push_back(eigenbasis ? Mat(sp.vectors.adjoint() * l * sp.vectors) : l);
  }
  return out;
}

LogDerivative sld_vec(const DerivedState& ds, double eps) {
  check_inputs(ds);
  const auto d = ds.rho.rows();
  const Mat id = Mat::Identity(d, d);
  const Mat s = kron(ds.rho, id) + kron(id, ds.rho.conjugate());
  // Full-rank rho: Cholesky solve with one step of iterative refinement.
  // Otherwise fall back to a rank-revealing pseudo-inverse cut at eps.
  Eigen::LLT<Mat> llt(s);
  bool full = llt.info() == Eigen::Success;
  if (full) {
    const auto dg = Eigen::VectorXd(llt.matrixL().toDenseMatrix().diagonal().real());
    full = dg.minCoeff() * dg.minCoeff() >= eps;
  }
  Eigen::CompleteOrthogonalDecomposition<Mat> cod;
  if (!full) {
    const double scale = std::max(s.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    cod.setThreshold(eps / scale);
    cod.compute(s);
  }
  LogDerivative out;
  out.kind = LdType::SLD;
  for (const auto& dr : ds.drho) {
    const Vec rhs = 2.0 * vec(dr);
    Vec v;
    if (full) {
      v = llt.solve(rhs);
      v += llt.solve(Vec(rhs - s * v));
    } else {
      v = cod.solve(rhs);
    }
    Mat l = unvec(v, d);
    out.ops.push_back((l + l.adjoint()) / 2.0);
  }
  return out;
}

LogDerivative rld(const DerivedState& ds, double eps) { return right_or_left(ds, eps, true); }
LogDerivative lld(const DerivedState& ds, double eps) { return right_or_left(ds, eps, false); }

InfoMatrix qfim(const DerivedState& ds, LdType ld, double eps, LogDerivative* export_ld) {
  if (ds.drho.empty()) fail(ErrorKind::Domain, "qfim: at least one parameter derivative is required");
  const std::size_t n = ds.drho.size();
  InfoMatrix out;
  out.labels = default_labels(n);
  out.entries = RMat::Zero(n, n);
  LogDerivative L;
  if (ld == LdType::SLD) {
    L = sld(ds, false, eps);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a; b < n; ++b) {
        const double v = (ds.rho * L.ops[a] * L.ops[b]).trace().real();
        out.entries(a, b) = v;
        out.entries(b, a) = v;
      }
  } else {
    L = ld == LdType::RLD ? rld(ds, eps) : lld(ds, eps);
    out.full = Mat::Zero(n, n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        // the LLD is the adjoint of the RLD, so the same matrix reads Tr(rho L_a^dag L_b)
        out.full(a, b) = ld == LdType::RLD ? (ds.rho * L.ops[a] * L.ops[b].adjoint()).trace()
                                           : (ds.rho * L.ops[a].adjoint() * L.ops[b]).trace();
    out.entries = out.full.real();
    out.entries = (out.entries + out.entries.transpose()) / 2.0;
  }
  if (export_ld) *export_ld = std::move(L);
  return out;
}

InfoMatrix qfim_kraus(const Mat& rho0, const KrausChannel& ch, LdType ld, double eps) {
  return qfim(kraus_apply(rho0, ch), ld, eps);
}

const Povm& default_povm(int d) {
  static std::mutex mu;
  static std::map<int, Povm> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(d);
  if (it == cache.end()) it = cache.emplace(d, sic_povm(d)).first;
  return it->second;
}

InfoMatrix fim(const RVec& p, const std::vector<RVec>& dp, double eps) {
  if (dp.size() != static_cast<std::size_t>(p.size())) fail(ErrorKind::Dimension, "fim: one derivative list per outcome");
  if ((p.array() < 0.0).any()) fail(ErrorKind::Domain, "fim: negative probability");
  const Eigen::Index n = dp.empty() ? 0 : dp.front().size();
  InfoMatrix out;
  out.labels = default_labels(static_cast<std::size_t>(n));
  out.entries = RMat::Zero(n, n);
  for (Eigen::Index y = 0; y < p.size(); ++y) {
    if (dp[y].size() != n) fail(ErrorKind::Dimension, "fim: inconsistent derivative lengths");
    if (p(y) < eps) continue;
    out.entries += dp[y] * dp[y].transpose() / p(y);
  }
  return out;
}

InfoMatrix cfim(const DerivedState& ds, const Povm& M, double eps) {
  check_inputs(ds);
  const Povm& m = M.ops.empty() ? default_povm(static_cast<int>(ds.rho.rows())) : M;
  if (m.dim() != ds.rho.rows()) fail(ErrorKind::Dimension, "cfim: POVM dimension does not match rho");
  const std::size_t n = ds.drho.size();
  RVec p(static_cast<Eigen::Index>(m.size()));
  std::vector<RVec> dp(m.size(), RVec::Zero(static_cast<Eigen::Index>(n)));
  for (std::size_t y = 0; y < m.size(); ++y) {
    p(y) = (ds.rho * m.ops[y]).trace().real();
    for (std::size_t a = 0; a < n; ++a) dp[y](a) = (ds.drho[a] * m.ops[y]).trace().real();
  }
  InfoMatrix out;
  out.labels = default_labels(n);
  out.entries = RMat::Zero(n, n);
  for (std::size_t y = 0; y < m.size(); ++y) {
    if (p(y) < eps) continue;
    out.entries += dp[y] * dp[y].transpose() / p(y);
  }
  return out;
}

void check_weight(const RMat& W, Eigen::Index n) {
  if (W.rows() != n || W.cols() != n) {
    std::ostringstream os;
    os << "weight matrix must be " << n << "x" << n;
    fail(ErrorKind::Dimension, os.str());
  }
  if ((W - W.transpose()).cwiseAbs().maxCoeff() > 1e-10) fail(ErrorKind::Domain, "weight matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<RMat> es(W, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10) fail(ErrorKind::Domain, "weight matrix is not PSD");
}

double tr_w_inv(const RMat& F, const RMat& W) {
  Eigen::SelfAdjointEigenSolver<RMat> es(F);
  const RVec ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() <= 1e-12 * scale) return std::numeric_limits<double>::infinity();
  const RMat inv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  return (W * inv).trace();
}

double hcrb(const DerivedState& ds, const RMat& W, double eps, HcrbInfo* info) {
  check_inputs(ds);
  const std::size_t n = ds.drho.size();
  if (n == 0) fail(ErrorKind::Domain, "hcrb: at least one parameter derivative is required");
  check_weight(W, static_cast<Eigen::Index>(n));
  HcrbInfo local;
  HcrbInfo& meta = info ? *info : local;
  if (n == 1) {
    meta.redirected = true;
    return W(0, 0) / qfim(ds, LdType::SLD, eps).scalar();
  }
  {
    Eigen::SelfAdjointEigenSolver<RMat> es(W, Eigen::EigenvaluesOnly);
    const RVec ev = es.eigenvalues();
    int rank = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      if (ev(i) > 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff())) ++rank;
    if (rank <= 1) {
      meta.redirected = true;
      return tr_w_inv(qfim(ds, LdType::SLD, eps).entries, W);
    }
  }

  const int d = static_cast<int>(ds.rho.rows());
  const auto basis = operator_basis(d);
  const int d2 = d * d;
  const int ni = static_cast<int>(n);

  // Gram matrix K_ij = Tr(rho l_i l_j) and its principal square root.
  Mat K(d2, d2);
  for (int i = 0; i < d2; ++i)
    for (int j = 0; j < d2; ++j) K(i, j) = (ds.rho * basis[i] * basis[j]).trace();
  K = (K + K.adjoint()) / 2.0;
  const Spectrum ks = eigh(K);
  const RVec sq = ks.values.cwiseMax(0.0).cwiseSqrt();
  const Mat R = ks.vectors * sq.cast<cplx>().asDiagonal() * ks.vectors.adjoint();

  // variables: V (upper triangle, row by row) then Lambda (row-major, n x d^2)
  const int nV = ni * (ni + 1) / 2;
  const int nvar = nV + ni * d2;
  const int side = ni + d2;
  RVec c = RVec::Zero(nvar);
  std::vector<RMat> F;
  F.reserve(nvar);
  int idx = 0;
  for (int a = 0; a < ni; ++a)
    for (int b = a; b < ni; ++b, ++idx) {
      Mat h = Mat::Zero(side, side);
      h(a, b) = 1.0;
      h(b, a) = 1.0;
      F.push_back(real_embedding(h));
      c(idx) = a == b ? W(a, a) : 2.0 * W(a, b);
    }
  for (int a = 0; a < ni; ++a)
    for (int i = 0; i < d2; ++i) {
      Mat h = Mat::Zero(side, side);
      h.block(ni, a, d2, 1) = R.col(i);
      h.block(a, ni, 1, d2) = R.col(i).adjoint();
      F.push_back(real_embedding(h));
    }
  Mat h0 = Mat::Zero(side, side);
  h0.bottomRightCorner(d2, d2) = Mat::Identity(d2, d2);
  const RMat F0 = real_embedding(h0);

  // sum_i Lambda_ai Tr(l_i d_b rho) = delta_ab
  RMat T(ni, d2);
  for (int b = 0; b < ni; ++b)
    for (int i = 0; i < d2; ++i) T(b, i) = (basis[i] * ds.drho[b]).trace().real();
  {
    Eigen::JacobiSVD<RMat> svd(T);
    const RVec sv = svd.singularValues();
    if (sv(sv.size() - 1) < 1e-10 * std::max(1.0, sv(0)))
      fail(ErrorKind::Infeasible, "hcrb: parameter derivatives are linearly dependent");
  }
  RMat Aeq = RMat::Zero(ni * ni, nvar);
  RVec beq = RVec::Zero(ni * ni);
  for (int a = 0; a < ni; ++a)
    for (int b = 0; b < ni; ++b) {
      const int row = a * ni + b;
      for (int i = 0; i < d2; ++i) Aeq(row, nV + a * d2 + i) = T(b, i);
      beq(row) = a == b ? 1.0 : 0.0;
    }

  const SdpResult r = solve_lmi(c, F0, F, Aeq, beq);
  meta.gap = r.gap;
  meta.iterations = r.iterations;
  meta.redirected = false;
  return r.objective;
}

TargetTime target_time(double f_target, const std::vector<DerivedState>& traj, const std::vector<double>& tspan,
                       const std::function<double(const DerivedState&)>& objective) {
  if (traj.size() != tspan.size() || traj.empty()) fail(ErrorKind::Dimension, "target_time: trajectory/tspan length");
  TargetTime out;
  double prev = objective(traj.front());
  const double s0 = prev - f_target;
  if (s0 == 0.0) {
    out.found = true;
    out.t = tspan.front();
    out.final_value = prev;
    return out;
  }
  for (std::size_t j = 1; j < traj.size(); ++j) {
    const double cur = objective(traj[j]);
    const double s = cur - f_target;
    if (s == 0.0 || (s > 0.0) != (s0 > 0.0)) {
      const double frac = (f_target - prev) / (cur - prev);
      out.found = true;
      out.t = tspan[j - 1] + frac * (tspan[j] - tspan[j - 1]);
      out.final_value = cur;
      return out;
    }
    prev = cur;
  }
  out.final_value = prev;
  return out;
}

}  // namespace qmetro
