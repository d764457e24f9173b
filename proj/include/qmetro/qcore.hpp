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

// Dense linear algebra and the quantum constructions everything else builds on.

#pragma once

#include <cstdint>
#include <vector>

#include "qmetro/types.hpp"

namespace qmetro {

struct QuantumState {
  Mat rho;
  Eigen::Index dim() const { return rho.rows(); }
};

// A density matrix together with its derivatives, one per unknown parameter.
struct DerivedState {
  Mat rho;
  std::vector<Mat> drho;
  Eigen::Index dim() const { return rho.rows(); }
  std::size_t nparams() const { return drho.size(); }
};

struct Povm {
  std::vector<Mat> ops;
  Eigen::Index dim() const { return ops.empty() ? 0 : ops.front().rows(); }
  std::size_t size() const { return ops.size(); }
};

// Validators throw Error(Domain/Dimension) with a short description.
void check_square(const Mat& a, const char* what);
void check_hermitian(const Mat& a, double tol = 1e-12, const char* what = "operator");
void check_state(const Mat& rho, const char* what = "rho");
void check_derived(const DerivedState& ds);
void check_povm(const Povm& m);

bool is_hermitian(const Mat& a, double tol);

Mat expm(const Mat& a);
// Frechet derivative of expm at A in direction E, returned with expm(A).
std::pair<Mat, Mat> expm_frechet(const Mat& a, const Mat& e);
// expm(A) and its Frechet derivatives along every E_k, using one block exponential.
std::vector<Mat> expm_frechet_many(const Mat& a, const std::vector<Mat>& es, Mat* expa);

// Row-major stacking: [vec(A)]_{i*d+j} = A_ij.
Vec vec(const Mat& a);
Mat unvec(const Vec& v);
Mat unvec(const Vec& v, Eigen::Index dim);
Mat kron(const Mat& a, const Mat& b);
// Superoperators for row-major vec: vec(A X B) = (A kron B^T) vec(X).
Mat superop_left(const Mat& a);
Mat superop_right(const Mat& b);
Mat commutator_superop(const Mat& h);

struct Spectrum {
  RVec values;  // ascending
  Mat vectors;
};
Spectrum eigh(const Mat& a);

// Solves P X + X P = C for Hermitian PSD P; kernel entries are zeroed.
Mat sylvester_symmetric(const Mat& p, const Mat& c, double eps = 1e-8);
Mat sylvester_symmetric(const Spectrum& sp, const Mat& c, double eps = 1e-8);

double trace_norm(const Mat& a);

// Generalized Gell-Mann matrices normalized to Tr(l_i l_j) = 2 delta_ij.
std::vector<Mat> su_generators(int d);
// Identity/sqrt(d) followed by su(d)/sqrt(2): Tr(l_i l_j) = delta_ij.
std::vector<Mat> operator_basis(int d);

struct SicOptions {
  std::uint64_t seed = 1234;
  int restarts = 60;
  int max_dim = 16;
  double tol = 1e-7;
};
Povm sic_povm(int d, const SicOptions& opt = {});
// Displacement operator D_ab = (-e^{i pi/d})^{ab} A^a B^b.
Mat weyl_heisenberg(int d, int a, int b);

Mat pauli(int k);  // 0 -> identity, 1..3 -> sigma_x,y,z
Mat ket_projector(const Vec& psi);
Mat random_density(int d, std::uint64_t seed, bool full_rank = true);
Mat random_unitary(int d, std::uint64_t seed);
Mat random_hermitian(int d, std::uint64_t seed);

}  // namespace qmetro
