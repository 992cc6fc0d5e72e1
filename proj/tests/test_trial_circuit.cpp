// Copyright 2026 The QCM Authors
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

#include <gtest/gtest.h>

#include <deque>
#include <set>

#include "qcm/integrals.hpp"
#include "qcm/spsa.hpp"
#include "qcm/trial_circuit.hpp"
#include "test_util.hpp"

using namespace qcm;
using qcm::testing::Mat;

namespace {

// exp(G) for anti-Hermitian G via the eigendecomposition of iG.
Mat expm_antihermitian(const Mat &G) {
    Mat iG = cplx(0, 1) * G;
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (iG + iG.adjoint()));
    Eigen::VectorXcd ph = (-cplx(0, 1) * es.eigenvalues().cast<cplx>()).array().exp();
    return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

Mat circuit_unitary(const Circuit &c) {
    const int d = 1 << c.n_qubits();
    Mat u(d, d);
    for (int col = 0; col < d; ++col) {
        Statevector s(c.n_qubits(), col);
        s.apply(c);
        for (int row = 0; row < d; ++row) u(row, col) = s[row];
    }
    return u;
}

Eigen::VectorXcd to_eigen(const Statevector &s) {
    Eigen::VectorXcd v(s.dim());
    for (std::size_t i = 0; i < s.dim(); ++i) v(i) = s[i];
    return v;
}

Eigen::VectorXcd reference_trial(const Ansatz &a, const std::vector<double> &theta, int n) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(1 << n);
    v(a.reference) = 1.0;
    for (std::size_t k = 0; k < a.excitations.size(); ++k) v = expm_antihermitian(theta[k] * qcm::testing::dense(a.generator(k, n))) * v;
    return v;
}

// Minimal adjacent transpositions making the given physical positions
// contiguous, by breadth-first search over occupancy masks.
int bfs_min_swaps(Mask start, int n) {
    std::deque<std::pair<Mask, int>> q{{start, 0}};
    std::set<Mask> seen{start};
    while (!q.empty()) {
        auto [m, d] = q.front();
        q.pop_front();
        Mask low = m & (~m + 1);
        if (((m / low) & ((m / low) + 1)) == 0) return d;
        for (int j = 0; j + 1 < n; ++j) {
            bool a = has_bit(m, j), b = has_bit(m, j + 1);
            if (a == b) continue;
            Mask nm = m ^ bit(j) ^ bit(j + 1);
            if (seen.insert(nm).second) q.emplace_back(nm, d + 1);
        }
    }
    return -1;
}

Ansatz h4_like_ansatz() {
    Ansatz a;
    a.reference = 0b00001111;
    a.excitations = {{{4, 5}, {2, 3}}, {{6, 7}, {0, 1}}, {{4, 7}, {0, 3}}, {{5, 6}, {1, 2}}, {{6, 7}, {2, 3}}};
    return a;
}

}  // namespace

TEST(DoubleExcitationBlock, matches_exponential_for_every_pattern) {
    for (Mask A : {0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100}) {
        Mask B = ~A & 0xF;
        auto ca = bits_of(B), aa = bits_of(A);
        FermionOperator t(4);
        t.add(OpString{B, A}, 1.0);
        FermionOperator g = t - t.adjoint();
        for (double th : {0.37, -1.2, 2.9}) {
            Circuit c(4);
            auto r = apply_string(OpString{B, A}, A);
            append_givens_block(c, 0, A, th * r->second);
            double err = (circuit_unitary(c) - expm_antihermitian(th * qcm::testing::dense(g))).cwiseAbs().maxCoeff();
            EXPECT_LT(err, 1e-12) << "pattern " << A << " theta " << th;
            EXPECT_EQ(c.cnot_count(), 18);
        }
    }
}

TEST(DoubleExcitationBlock, local_block_cost_and_exactness) {
    auto c = local_double_excitation(0.42);
    EXPECT_LE(c.cnot_count(), 19);
    EXPECT_LE(c.single_qubit_count(), 19);
    FermionOperator t(4);
    t.add_product({{3, true}, {2, true}, {1, false}, {0, false}}, 1.0);
    Mat G = expm_antihermitian(0.42 * qcm::testing::dense(t - t.adjoint()));
    EXPECT_LT((circuit_unitary(c) - G).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(SwapNetwork, far_mode_needs_four_swaps) {
    auto net = fswap_network(bit(0) | bit(1) | bit(2) | bit(7), identity_layout(8));
    EXPECT_LE(net.swaps.size(), 4u);
    EXPECT_EQ(static_cast<int>(net.swaps.size()), bfs_min_swaps(bit(0) | bit(1) | bit(2) | bit(7), 8));
    std::vector<int> pos;
    for (int j : {0, 1, 2, 7}) pos.push_back(net.layout_after[j]);
    std::sort(pos.begin(), pos.end());
    EXPECT_EQ(pos.back() - pos.front(), 3);
    EXPECT_EQ(net.window, pos.front());
}

TEST(SwapNetwork, minimal_for_all_four_mode_subsets) {
    const int n = 8;
    for (Mask m = 0; m < 256; ++m) {
        if (popcount(m) != 4) continue;
        auto net = fswap_network(m, identity_layout(n));
        EXPECT_EQ(static_cast<int>(net.swaps.size()), bfs_min_swaps(m, n)) << "modes " << m;
    }
}

TEST(BuildUccd, simplified_matches_unsimplified_and_exponentials) {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto a = h4_like_ansatz();
    std::vector<double> th(a.excitations.size());
    for (auto &x : th) x = u(rng);
    auto raw = build_uccd(a, th, 8, {.simplify = false});
    auto simp = build_uccd(a, th, 8, {.simplify = true});
    EXPECT_EQ(raw.layout, simp.layout);
    auto s1 = run(raw.circuit), s2 = run(simp.circuit);
    double err = 0;
    for (std::size_t i = 0; i < s1.dim(); ++i) err = std::max(err, std::abs(s1[i] - s2[i]));
    EXPECT_LT(err, 1e-12);
    EXPECT_LT(simp.circuit.cnot_count(), raw.circuit.cnot_count());

    auto logical = to_logical_order(s2, simp.layout);
    Eigen::VectorXcd ref = reference_trial(a, th, 8);
    EXPECT_LT((to_eigen(logical) - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildUccd, reference_circuit_shares_structure) {
    auto a = h4_like_ansatz();
    std::vector<double> th{0.3, -0.2, 0.5, 0.1, -0.7}, zero(5, 0.0);
    auto t = build_uccd(a, th, 8), r = build_uccd(a, zero, 8);
    ASSERT_EQ(t.circuit.gates().size(), r.circuit.gates().size());
    for (std::size_t i = 0; i < t.circuit.gates().size(); ++i) {
        EXPECT_EQ(t.circuit.gates()[i].kind, r.circuit.gates()[i].kind);
        EXPECT_EQ(t.circuit.gates()[i].q0, r.circuit.gates()[i].q0);
        EXPECT_EQ(t.circuit.gates()[i].q1, r.circuit.gates()[i].q1);
    }
    auto hf = to_logical_order(run(r.circuit), r.layout);
    EXPECT_NEAR(std::abs(hf[a.reference]), 1.0, 1e-12);
}

TEST(BuildUccd, rejects_invalid_excitations) {
    Ansatz a;
    a.reference = 0b0011;
    a.excitations = {{{2, 2}, {0, 1}}};
    EXPECT_THROW(build_uccd(a, {0.1}, 4), std::invalid_argument);
    EXPECT_THROW(a.validate(SpinLabels::interleaved(4)), std::invalid_argument);
    a.excitations = {{{2, 4}, {0, 1}}};
    EXPECT_THROW(a.validate(SpinLabels::interleaved(4)), std::out_of_range);
    a.excitations = {{{2, 0}, {1, 3}}};
    EXPECT_THROW(a.validate(SpinLabels::interleaved(4)), std::invalid_argument);
    a.excitations = {{{2, 3}, {0, 1}}};
    EXPECT_THROW(build_uccd(a, {0.1, 0.2}, 4), std::invalid_argument);
}

TEST(Spsa, reaches_h2_ground_state) {
    auto ints = load_fcidump(qcm::testing::data_path("h2_stretched.fcidump"));
    auto h = molecular_hamiltonian(ints);
    Ansatz a;
    a.reference = ints.hartree_fock_occupation();
    a.excitations = {{{2, 3}, {0, 1}}};
    Objective f = [&](const std::vector<double> &th) { return trial_state(a, th, 4).expectation(h); };
    SpsaOptions opt;
    opt.max_iterations = 3000;
    auto res = spsa_minimize(f, {0.0}, {1, 2, 3, 4, 5}, opt);
    EXPECT_NEAR(res.value, -0.9981493534714101, 1e-6);
    EXPECT_EQ(res.runs.size(), 5u);
    EXPECT_EQ(res.runs[0].trace.size(), 3000u);
    // Zero iterations returns the start point.
    opt.max_iterations = 0;
    auto none = spsa_minimize(f, {0.0}, {1}, opt);
    EXPECT_EQ(none.theta, std::vector<double>{0.0});
}
