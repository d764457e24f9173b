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

#include "qmetro/sdp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace qmetro {

RMat real_embedding(const Mat& h) {
  const auto n = h.rows();
  RMat out(2 * n, 2 * n);
  out.topLeftCorner(n, n) = h.real();
  out.topRightCorner(n, n) = -h.imag();
  out.bottomLeftCorner(n, n) = h.imag();
  out.bottomRightCorner(n, n) = h.real();
  return out;
}

namespace {

double inner(const RMat& a, const RMat& b) { return a.cwiseProduct(b).sum(); }

RMat sym(const RMat& a) { return (a + a.transpose()) / 2.0; }

// Largest alpha with X + alpha D >= 0 (infinity when D is PSD).
double max_step(const RMat& x, const RMat& d) {
  Eigen::LLT<RMat> llt(x);
  if (llt.info() != Eigen::Success) return 0.0;
  RMat linv = llt.matrixL().solve(RMat::Identity(x.rows(), x.cols()));
  RMat m = sym(linv * d * linv.transpose());
  Eigen::SelfAdjointEigenSolver<RMat> es(m, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin >= 0.0) return std::numeric_limits<double>::infinity();
  return -1.0 / lmin;
}

struct StandardForm {
  // (P) min <C,X> s.t. <A_k,X> = b_k, X >= 0;  (D) max b'z s.t. C - sum z_k A_k >= 0
  RMat C;
  std::vector<RMat> A;
  RVec b;
};

struct PdResult {
  RVec z;
  double pobj = 0, dobj = 0, pinf = 0, dinf = 0;
  int iter = 0;
  bool converged = false;
};

PdResult primal_dual(const StandardForm& sf, const SdpOptions& opt) {
  const auto n = sf.C.rows();
  const std::size_t m = sf.A.size();
  double anorm = 0.0;
  double bnorm_max = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    anorm = std::max(anorm, sf.A[k].norm());
    bnorm_max = std::max(bnorm_max, (1.0 + std::abs(sf.b(k))) / (1.0 + sf.A[k].norm()));
  }
  const double sn = std::sqrt(static_cast<double>(n));
  const double xi = std::max({10.0, sn, sn * bnorm_max});
  const double eta = std::max({10.0, sn, sf.C.norm(), anorm});
  RMat X = xi * RMat::Identity(n, n);
  RMat S = eta * RMat::Identity(n, n);
  RVec z = RVec::Zero(static_cast<Eigen::Index>(m));
  const double bnorm = sf.b.norm();
  const double cnorm = sf.C.norm();

  PdResult res;
  for (int it = 0; it < opt.max_iter; ++it) {
    res.iter = it;
    RVec ax(static_cast<Eigen::Index>(m));
    RMat aty = RMat::Zero(n, n);
    for (std::size_t k = 0; k < m; ++k) {
      ax(k) = inner(sf.A[k], X);
      aty += z(k) * sf.A[k];
    }
    const RVec rp = sf.b - ax;
    const RMat rd = sf.C - S - aty;
    const double pobj = inner(sf.C, X);
    const double dobj = sf.b.dot(z);
    const double mu = inner(X, S) / static_cast<double>(n);
    res.pobj = pobj;
    res.dobj = dobj;
    res.pinf = rp.norm() / (1.0 + bnorm);
    res.dinf = rd.norm() / (1.0 + cnorm);
    const double relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    res.z = z;
    if (relgap < opt.tol && res.pinf < opt.tol && res.dinf < opt.tol) {
      res.converged = true;
      return res;
    }

    Eigen::LLT<RMat> sllt(S);
    if (sllt.info() != Eigen::Success) break;
    const RMat Sinv = sllt.solve(RMat::Identity(n, n));
    // Schur complement M_kl = Tr(A_k X A_l S^-1)
    std::vector<RMat> xas(m);
    for (std::size_t l = 0; l < m; ++l) xas[l] = X * sf.A[l] * Sinv;
    RMat M(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t l = k; l < m; ++l) {
        // Tr(A_k T) = sum(A_k .* T^T) for symmetric A_k
        const double v = sf.A[k].cwiseProduct(xas[l].transpose()).sum();
        M(k, l) = v;
        M(l, k) = v;
      }
    Eigen::LDLT<RMat> mfac(M);
    if (mfac.info() != Eigen::Success) break;

    auto direction = [&](const RMat& comp, RVec& dz, RMat& dX, RMat& dS) {
      // comp is the complementarity target G with dX = G - X - X dS S^-1
      const RMat base = comp - X - X * rd * Sinv;
      RVec rhs(static_cast<Eigen::Index>(m));
      for (std::size_t k = 0; k < m; ++k) rhs(k) = rp(k) - sf.A[k].cwiseProduct(base.transpose()).sum();
      dz = mfac.solve(rhs);
      dS = rd;
      for (std::size_t k = 0; k < m; ++k) dS -= dz(k) * sf.A[k];
      dS = sym(dS);
      dX = sym(comp - X - X * dS * Sinv);
    };

    RVec dz_a;
    RMat dX_a, dS_a;
    direction(RMat::Zero(n, n), dz_a, dX_a, dS_a);
    const double ap_a = std::min(1.0, opt.step_fraction * max_step(X, dX_a));
    const double ad_a = std::min(1.0, opt.step_fraction * max_step(S, dS_a));
    const double mu_aff = inner(X + ap_a * dX_a, S + ad_a * dS_a) / static_cast<double>(n);
    double sigma = std::pow(std::max(0.0, mu_aff) / mu, 3);
    sigma = std::clamp(sigma, 0.0, 1.0);

    RVec dz;
    RMat dX, dS;
    direction(sigma * mu * Sinv - dX_a * dS_a * Sinv, dz, dX, dS);
    const double ap = std::min(1.0, opt.step_fraction * max_step(X, dX));
    const double ad = std::min(1.0, opt.step_fraction * max_step(S, dS));
    X = sym(X + ap * dX);
    z += ad * dz;
    S = sym(S + ad * dS);
  }
  return res;
}

}  // namespace

SdpResult solve_lmi(const RVec& c, const RMat& f0, const std::vector<RMat>& fi, const RMat& a_eq,
                    const RVec& b_eq, const SdpOptions& opt) {
  const auto nv = c.size();
  if (static_cast<Eigen::Index>(fi.size()) != nv) fail(ErrorKind::Dimension, "solve_lmi: one F_i per variable");
  if (a_eq.rows() > 0 && a_eq.cols() != nv) fail(ErrorKind::Dimension, "solve_lmi: equality matrix width");

  // y = y0 + N w
  RVec y0 = RVec::Zero(nv);
  RMat N = RMat::Identity(nv, nv);
  if (a_eq.rows() > 0) {
    Eigen::JacobiSVD<RMat> svd(a_eq, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const RVec sv = svd.singularValues();
    const double thresh = 1e-10 * std::max(1.0, sv.size() ? sv(0) : 0.0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
      if (sv(i) > thresh) ++rank;
    if (rank < a_eq.rows()) fail(ErrorKind::Infeasible, "equality constraints are linearly dependent");
    y0 = svd.matrixV().leftCols(rank) *
         (sv.head(rank).cwiseInverse().asDiagonal() * (svd.matrixU().leftCols(rank).transpose() * b_eq));
    N = svd.matrixV().rightCols(nv - rank);
  }

  // Drop directions that leave the LMI unchanged (e.g. the kernel of a
  // singular Gram factor); they carry no cost in well-posed problems.
  {
    std::vector<RMat> g(N.cols());
    for (Eigen::Index w = 0; w < N.cols(); ++w) {
      g[w] = RMat::Zero(f0.rows(), f0.cols());
      for (Eigen::Index i = 0; i < nv; ++i)
        if (N(i, w) != 0.0) g[w] += N(i, w) * fi[i];
    }
    RMat gram(N.cols(), N.cols());
    for (Eigen::Index a = 0; a < N.cols(); ++a)
      for (Eigen::Index b = a; b < N.cols(); ++b) gram(a, b) = gram(b, a) = inner(g[a], g[b]);
    Eigen::SelfAdjointEigenSolver<RMat> es(gram);
    const RVec ev = es.eigenvalues();
    const double top = ev.size() ? std::max(ev.maxCoeff(), 0.0) : 0.0;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      if (ev(i) > 1e-12 * top) keep.push_back(i);
    if (static_cast<Eigen::Index>(keep.size()) < N.cols()) {
      RMat q(N.cols(), static_cast<Eigen::Index>(keep.size()));
      for (std::size_t j = 0; j < keep.size(); ++j) q.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]);
      const RMat drop = RMat::Identity(N.cols(), N.cols()) - q * q.transpose();
      if ((drop * (N.transpose() * c)).norm() > 1e-9 * std::max(1.0, c.norm()))
        fail(ErrorKind::Convergence, "SDP is unbounded along a direction the LMI does not constrain");
      N = N * q;
    }
  }

  StandardForm sf;
  sf.C = f0;
  for (Eigen::Index i = 0; i < nv; ++i) sf.C += y0(i) * fi[i];
  sf.C = sym(sf.C);
  const RVec cw = N.transpose() * c;
  sf.b = -cw;
  for (Eigen::Index w = 0; w < N.cols(); ++w) {
    RMat g = RMat::Zero(f0.rows(), f0.cols());
    for (Eigen::Index i = 0; i < nv; ++i)
      if (N(i, w) != 0.0) g += N(i, w) * fi[i];
    sf.A.push_back(-sym(g));
  }

  PdResult pd = primal_dual(sf, opt);
  SdpResult out;
  out.y = y0 + N * pd.z;
  out.objective = c.dot(out.y);
  out.gap = std::abs(pd.pobj - pd.dobj);
  out.primal_infeasibility = pd.pinf;
  out.dual_infeasibility = pd.dinf;
  out.iterations = pd.iter;
  if (!pd.converged) {
    std::ostringstream os;
    os << "SDP solver did not converge after " << pd.iter << " iterations (gap " << out.gap << ", primal residual "
       << pd.pinf << ", dual residual " << pd.dinf << ")";
    fail(ErrorKind::Convergence, os.str());
  }
  return out;
}

}  // namespace qmetro
