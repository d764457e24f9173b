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

#include "qmetro/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "qmetro/presets.hpp"

namespace qmetro {

int adjust_steps(int nt, int nc) {
  if (nt < 1 || nc < 1) fail(ErrorKind::Domain, "adjust_steps: Nt and Nc must be positive");
  if (nt % nc == 0) return nt;
  return (nt / nc + 1) * nc;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = a;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  out.back() = b;
  return out;
}

DynamicsSpec normalize_spec(const DynamicsSpec& in) {
  DynamicsSpec spec = in;
  if (spec.tspan.size() < 2) fail(ErrorKind::Domain, "tspan needs at least two points");
  for (std::size_t i = 1; i < spec.tspan.size(); ++i)
    if (!(spec.tspan[i] > spec.tspan[i - 1])) fail(ErrorKind::Domain, "tspan must be strictly increasing");
  if (spec.H0.empty()) fail(ErrorKind::Dimension, "H0 is empty");
  const auto d = spec.H0.front().rows();
  for (const auto& h : spec.H0) {
    check_hermitian(h, 1e-10, "H0");
    if (h.rows() != d) fail(ErrorKind::Dimension, "H0 entries differ in dimension");
  }
  if (spec.H0.size() != 1 && spec.H0.size() != spec.tspan.size())
    fail(ErrorKind::Dimension, "per-step H0 length must equal len(tspan)");
  for (const auto& h : spec.dH) {
    check_hermitian(h, 1e-10, "dH");
    if (h.rows() != d) fail(ErrorKind::Dimension, "dH dimension mismatch");
  }
  for (const auto& h : spec.Hc) {
    check_hermitian(h, 1e-10, "Hc");
    if (h.rows() != d) fail(ErrorKind::Dimension, "Hc dimension mismatch");
  }
  for (const auto& g : spec.decay) {
    check_square(g.op, "decay operator");
    if (g.op.rows() != d) fail(ErrorKind::Dimension, "decay operator dimension mismatch");
    if (!(g.rate >= 0.0)) fail(ErrorKind::Domain, "decay rates must be nonnegative");
  }
  if (spec.ctrl.size() != spec.Hc.size())
    fail(ErrorKind::Dimension, "number of control sequences must equal number of control Hamiltonians");
  if (spec.ctrl.empty()) return spec;
  const std::size_t nc = spec.ctrl.front().size();
  for (const auto& c : spec.ctrl)
    if (c.size() != nc || nc == 0) fail(ErrorKind::Dimension, "control sequences must share a nonzero length");
  const int nt = static_cast<int>(spec.steps());
  const int adj = adjust_steps(nt, static_cast<int>(nc));
  if (adj != nt) {
    if (spec.H0.size() != 1) fail(ErrorKind::Dimension, "cannot resample tspan with a per-step H0");
    spec.tspan = linspace(spec.tspan.front(), spec.tspan.back(), static_cast<std::size_t>(adj) + 1);
  }
  return spec;
}

std::vector<std::vector<double>> step_controls(const DynamicsSpec& spec) {
  const std::size_t nt = spec.steps();
  std::vector<std::vector<double>> out(spec.ctrl.size(), std::vector<double>(nt, 0.0));
  for (std::size_t k = 0; k < spec.ctrl.size(); ++k) {
    const std::size_t nc = spec.ctrl[k].size();
    if (nc == 0 || nt % nc != 0) fail(ErrorKind::Dimension, "control length does not divide the step count");
    const std::size_t hold = nt / nc;
    for (std::size_t j = 0; j < nt; ++j) out[k][j] = spec.ctrl[k][j / hold];
  }
  return out;
}

Mat liouvillian(const Mat& h, const std::vector<Decay>& decay) {
  const auto d = h.rows();
  const Mat id = Mat::Identity(d, d);
  Mat l = -kI * commutator_superop(h);
  for (const auto& g : decay) {
    if (g.rate == 0.0) continue;
    const Mat gg = g.op.adjoint() * g.op;
    l += g.rate * (kron(g.op, g.op.conjugate()) - 0.5 * kron(gg, id) - 0.5 * kron(id, gg.transpose()));
  }
  return l;
}

Superops build_superops(const DynamicsSpec& spec) {
  Superops s;
  s.dim = spec.dim();
  for (const auto& h : spec.H0) s.L0.push_back(liouvillian(h, spec.decay));
  for (const auto& h : spec.Hc) s.Lc.push_back(-kI * commutator_superop(h));
  for (const auto& h : spec.dH) s.A.push_back(-kI * commutator_superop(h));
  return s;
}

namespace {

DerivedState unpack(const Vec& r, const std::vector<Vec>& dr, Eigen::Index d) {
  DerivedState ds;
  ds.rho = unvec(r, d);
  for (const auto& x : dr) ds.drho.push_back(unvec(x, d));
  return ds;
}

// Steps a payload whose columns are vectorized operators; r0 is vec(rho0) or a basis block.
template <typename V, typename Visit>
void propagate_payload(const DynamicsSpec& spec, V r, Visit&& visit) {
  const Superops so = build_superops(spec);
  const auto u = step_controls(spec);
  const auto d = spec.dim();
  std::vector<V> dr(spec.dH.size(), V::Zero(r.rows(), r.cols()));
  visit(std::size_t{0}, r, dr, d);
  Mat e;
  double last_dt = -1.0;
  bool cache_ok = false;
  std::vector<double> last_u;
  for (std::size_t j = 1; j <= spec.steps(); ++j) {
    const double dt = spec.tspan[j] - spec.tspan[j - 1];
    std::vector<double> uj(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) uj[k] = u[k][j - 1];
    const bool same = cache_ok && so.L0.size() == 1 && dt == last_dt && uj == last_u;
    if (!same) {
      Mat gen = so.free(j);
      for (std::size_t k = 0; k < uj.size(); ++k)
        if (uj[k] != 0.0) gen += uj[k] * so.Lc[k];
      e = expm(dt * gen);
      last_dt = dt;
      last_u = uj;
      cache_ok = true;
    }
    r = e * r;
    for (std::size_t a = 0; a < dr.size(); ++a) dr[a] = dt * (so.A[a] * r) + e * dr[a];
    visit(j, r, dr, d);
  }
}

template <typename Visit>
void propagate(const DynamicsSpec& raw, const Mat& rho0, Visit&& visit) {
  const DynamicsSpec spec = normalize_spec(raw);
  check_state(rho0, "rho0");
  if (rho0.rows() != spec.dim()) fail(ErrorKind::Dimension, "rho0 dimension does not match the Hamiltonian");
  propagate_payload(spec, Vec(vec(rho0)), visit);
}

}  // namespace

std::vector<DerivedState> lindblad_propagate(const DynamicsSpec& spec, const Mat& rho0) {
  std::vector<DerivedState> out;
  propagate(spec, rho0, [&](std::size_t, const Vec& r, const std::vector<Vec>& dr, Eigen::Index d) {
    out.push_back(unpack(r, dr, d));
  });
  return out;
}

DerivedState lindblad_final(const DynamicsSpec& spec, const Mat& rho0) {
  DerivedState last;
  const std::size_t n = normalize_spec(spec).steps();
  propagate(spec, rho0, [&](std::size_t j, const Vec& r, const std::vector<Vec>& dr, Eigen::Index d) {
    if (j == n) last = unpack(r, dr, d);
  });
  return last;
}

TransferMap transfer_map(const DynamicsSpec& raw) {
  const DynamicsSpec spec = normalize_spec(raw);
  const auto d = spec.dim();
  TransferMap out;
  out.dim = d;
  const std::size_t n = spec.steps();
  propagate_payload(spec, Mat(Mat::Identity(d * d, d * d)),
                    [&](std::size_t j, const Mat& r, const std::vector<Mat>& dr, Eigen::Index) {
                      if (j == n) {
                        out.R = r;
                        out.D = dr;
                      }
                    });
  return out;
}

DerivedState TransferMap::apply(const Mat& rho0) const {
  if (rho0.rows() != dim) fail(ErrorKind::Dimension, "rho0 dimension does not match the transfer map");
  const Vec r0 = vec(rho0);
  DerivedState ds;
  ds.rho = unvec(R * r0, dim);
  for (const auto& m : D) ds.drho.push_back(unvec(m * r0, dim));
  return ds;
}

Mat TransferMap::pullback(const Mat& g_rho, const std::vector<Mat>& g_drho) const {
  Vec acc = R.adjoint() * vec(g_rho);
  for (std::size_t a = 0; a < D.size(); ++a) acc += D[a].adjoint() * vec(g_drho[a]);
  return unvec(acc, dim);
}

void check_channel(const KrausChannel& ch, double tol) {
  if (ch.K.empty()) fail(ErrorKind::InvalidChannel, "Kraus channel has no operators");
  const auto d = ch.K.front().cols();
  Mat sum = Mat::Zero(d, d);
  for (const auto& k : ch.K) {
    if (k.cols() != d) fail(ErrorKind::Dimension, "Kraus operators differ in input dimension");
    sum += k.adjoint() * k;
  }
  if ((sum - Mat::Identity(d, d)).cwiseAbs().maxCoeff() > tol)
    fail(ErrorKind::InvalidChannel, "Kraus operators violate completeness");
  if (!ch.dK.empty() && ch.dK.size() != ch.K.size())
    fail(ErrorKind::Dimension, "dK must hold one list per Kraus operator");
  for (std::size_t i = 0; i < ch.dK.size(); ++i) {
    if (ch.dK[i].size() != ch.dK.front().size()) fail(ErrorKind::Dimension, "dK lists differ in length");
    for (const auto& m : ch.dK[i])
      if (m.rows() != ch.K[i].rows() || m.cols() != ch.K[i].cols())
        fail(ErrorKind::Dimension, "dK shape does not match K");
  }
}

DerivedState kraus_apply(const Mat& rho0, const KrausChannel& ch) {
  check_channel(ch);
  check_state(rho0, "rho0");
  if (rho0.rows() != ch.K.front().cols()) fail(ErrorKind::Dimension, "rho0 dimension does not match the channel");
  DerivedState ds;
  const auto d = ch.K.front().rows();
  ds.rho = Mat::Zero(d, d);
  const std::size_t np = ch.dK.empty() ? 0 : ch.dK.front().size();
  ds.drho.assign(np, Mat::Zero(d, d));
  for (std::size_t i = 0; i < ch.K.size(); ++i) {
    const Mat& k = ch.K[i];
    ds.rho += k * rho0 * k.adjoint();
    for (std::size_t a = 0; a < np; ++a) {
      const Mat t = ch.dK[i][a] * rho0 * k.adjoint();
      ds.drho[a] += t + t.adjoint();
    }
  }
  return ds;
}

std::vector<std::size_t> ModelGrid::shape() const {
  std::vector<std::size_t> s;
  for (const auto& a : axes) s.push_back(a.size());
  return s;
}

std::size_t ModelGrid::size() const {
  std::size_t n = 1;
  for (const auto& a : axes) n *= a.size();
  return axes.empty() ? 0 : n;
}

std::vector<std::size_t> ModelGrid::unravel(std::size_t flat) const {
  std::vector<std::size_t> idx(axes.size());
  for (std::size_t k = axes.size(); k-- > 0;) {
    idx[k] = flat % axes[k].size();
    flat /= axes[k].size();
  }
  return idx;
}

std::vector<double> ModelGrid::point(std::size_t flat) const {
  auto idx = unravel(flat);
  std::vector<double> x(axes.size());
  for (std::size_t k = 0; k < axes.size(); ++k) x[k] = axes[k][idx[k]];
  return x;
}

ModelGrid model_grid(const std::string& id, const Constants& c, const std::vector<std::vector<double>>& axes) {
  const std::size_t np = template_params(id);
  if (axes.size() != np) {
    std::ostringstream os;
    os << "model template '" << id << "' takes " << np << " parameter axes, got " << axes.size();
    fail(ErrorKind::Config, os.str());
  }
  ModelGrid g;
  g.axes = axes;
  for (const auto& a : axes) {
    if (a.empty()) fail(ErrorKind::Config, "empty parameter axis");
    for (std::size_t i = 1; i < a.size(); ++i)
      if (!(a[i] > a[i - 1])) fail(ErrorKind::Config, "parameter axes must be strictly increasing");
  }
  const std::size_t n = g.size();
  g.H.reserve(n);
  g.dH.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    auto m = eval_template(id, c, g.point(f));
    g.H.push_back(std::move(m.H));
    g.dH.push_back(std::move(m.dH));
  }
  return g;
}

std::vector<DerivedState> evolve_grid(const ModelGrid& g, const Mat& rho0, const std::vector<double>& tspan,
                                      const std::vector<Decay>& decay) {
  std::vector<DerivedState> out;
  out.reserve(g.size());
  for (std::size_t f = 0; f < g.size(); ++f) {
    DynamicsSpec spec;
    spec.tspan = tspan;
    spec.H0 = {g.H[f]};
    spec.dH = g.dH[f];
    spec.decay = decay;
    out.push_back(lindblad_final(spec, rho0));
  }
  return out;
}

}  // namespace qmetro
