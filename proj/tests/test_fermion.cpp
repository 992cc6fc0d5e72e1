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

#include "qcm/fermion.hpp"
#include "qcm/pauli.hpp"
#include "qcm/rdm.hpp"
#include "test_util.hpp"

using namespace qcm;
using qcm::testing::dense;
using qcm::testing::Mat;

namespace {

double max_diff(const Mat &a, const Mat &b) { return (a - b).cwiseAbs().maxCoeff(); }

FermionOperator single(int n, int j, bool dag) {
    FermionOperator f(n);
    f.add(dag ? OpString{bit(j), 0} : OpString{0, bit(j)}, 1.0);
    return f;
}

}  // namespace

TEST(FermionOperator, canonical_anticommutation) {
    const int n = 4;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            auto ac = single(n, i, false) * single(n, j, true) + single(n, j, true) * single(n, i, false);
            if (i == j) {
                ASSERT_EQ(ac.size(), 1u);
                EXPECT_EQ(ac.constant(), cplx(1.0));
            } else {
                EXPECT_TRUE(ac.empty());
            }
            auto aa = single(n, i, false) * single(n, j, false) + single(n, j, false) * single(n, i, false);
            EXPECT_TRUE(aa.empty());
        }
}

TEST(FermionOperator, number_operator_squares_to_itself) {
    auto n0 = single(3, 1, true) * single(3, 1, false);
    auto sq = n0 * n0;
    EXPECT_EQ(sq.terms(), n0.terms());
}

TEST(FermionOperator, product_matches_dense) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = qcm::testing::random_operator(5, 3, 6, rng, false);
        auto b = qcm::testing::random_operator(5, 3, 6, rng, false);
        EXPECT_LT(max_diff(dense(a * b), dense(a) * dense(b)), 1e-10) << "trial " << trial;
    }
}

TEST(FermionOperator, non_conserving_product_matches_dense) {
    // Strings with unequal creator/annihilator counts.
    FermionOperator a(4), b(4);
    a.add(OpString{bit(0) | bit(3), bit(2)}, 0.7);
    a.add(OpString{bit(1), 0}, cplx(0.1, 0.3));
    b.add(OpString{bit(2), bit(0) | bit(1) | bit(3)}, -1.3);
    b.add(OpString{0, bit(1) | bit(2)}, 0.4);
    EXPECT_LT(max_diff(dense(a * b), dense(a) * dense(b)), 1e-12);
    EXPECT_LT(max_diff(dense(b * a), dense(b) * dense(a)), 1e-12);
}

TEST(FermionOperator, adjoint_matches_dense) {
    std::mt19937_64 rng(3);
    auto a = qcm::testing::random_operator(5, 3, 10, rng, false);
    EXPECT_LT(max_diff(dense(a.adjoint()), dense(a).adjoint()), 1e-12);
}

TEST(FermionOperator, power_matches_dense) {
    std::mt19937_64 rng(11);
    auto h = qcm::testing::random_operator(4, 2, 8, rng);
    Mat d = dense(h);
    Mat acc = Mat::Identity(d.rows(), d.cols());
    for (int p = 0; p <= 4; ++p) {
        EXPECT_LT(max_diff(dense(h.power(p)), acc), 1e-9) << "power " << p;
        acc = acc * d;
    }
}

TEST(FermionOperator, add_product_normal_orders) {
    FermionOperator f(2);
    // a_0 a+_0 = 1 - a+_0 a_0
    f.add_product({{0, false}, {0, true}}, 1.0);
    EXPECT_EQ(f.size(), 2u);
    EXPECT_EQ(f.constant(), cplx(1.0));
    EXPECT_EQ(f.coefficient(OpString{bit(0), bit(0)}), cplx(-1.0));
    // a+_1 a+_0 = -a+_0 a+_1
    FermionOperator g(2);
    g.add_product({{1, true}, {0, true}}, 1.0);
    EXPECT_EQ(g.coefficient(OpString{bit(0) | bit(1), 0}), cplx(-1.0));
}

TEST(FermionOperator, drop_tolerance) {
    FermionOperator f(2);
    f.add(OpString{bit(0), bit(1)}, 1.0);
    f.add(OpString{bit(0), bit(1)}, -1.0 + 1e-13);
    EXPECT_TRUE(f.empty());
}

TEST(FermionOperator, text_round_trip) {
    std::mt19937_64 rng(5);
    auto a = qcm::testing::random_operator(6, 2, 12, rng);
    auto b = FermionOperator::from_text(a.to_text());
    ASSERT_EQ(a.n_modes(), b.n_modes());
    ASSERT_EQ(a.size(), b.size());
    for (const auto &[s, c] : a.terms()) EXPECT_EQ(b.coefficient(s), c);
}

TEST(FermionOperator, text_format_example) {
    auto op = FermionOperator::from_text("0.5 [3^ 2^ 1 0]\n-1 []\n");
    EXPECT_EQ(op.n_modes(), 4);
    EXPECT_EQ(op.coefficient(OpString{bit(2) | bit(3), bit(0) | bit(1)}), cplx(0.5));
    EXPECT_EQ(op.constant(), cplx(-1.0));
    EXPECT_THROW(FermionOperator::from_text("0.5 3^ 2"), ConfigError);
    EXPECT_THROW(FermionOperator::from_text("abc [1^ 0]"), ConfigError);
}

TEST(FermionOperator, rejects_out_of_range_modes) {
    FermionOperator f(3);
    EXPECT_THROW(f.add(OpString{bit(3), bit(0)}, 1.0), std::out_of_range);
    EXPECT_THROW(f.add_product({{5, true}}, 1.0), std::out_of_range);
    EXPECT_THROW(FermionOperator(40), std::invalid_argument);
}

TEST(FreezeOperator, matches_embedded_matrix_elements) {
    std::mt19937_64 rng(21);
    const int n = 6;
    const Mask occ = bit(1) | bit(4), virt = bit(2);
    auto h = qcm::testing::random_operator(n, 3, 40, rng);
    auto f = freeze_operator(h, occ, virt);
    ASSERT_EQ(f.n_modes(), 3);
    Mat full = dense(h), act = dense(f);
    std::vector<int> active{0, 3, 5};
    auto embed = [&](Mask x) {
        Mask m = occ;
        for (int k = 0; k < 3; ++k)
            if (has_bit(x, k)) m |= bit(active[k]);
        return m;
    };
    double err = 0;
    for (Mask x = 0; x < 8; ++x)
        for (Mask y = 0; y < 8; ++y) err = std::max(err, std::abs(full(embed(y), embed(x)) - act(y, x)));
    EXPECT_LT(err, 1e-12);
}

TEST(FreezeOperator, rejects_non_conserving) {
    FermionOperator f(3);
    f.add(OpString{bit(0), 0}, 1.0);
    EXPECT_THROW(freeze_operator(f, bit(1), 0), std::invalid_argument);
    FermionOperator g(3);
    EXPECT_THROW(freeze_operator(g, bit(1), bit(1)), std::invalid_argument);
}

TEST(JordanWigner, matches_dense_ladder_construction) {
    std::mt19937_64 rng(2);
    auto h = qcm::testing::random_operator(4, 2, 10, rng);
    auto p = jordan_wigner(h);
    Mat d = dense(h);
    for (int col = 0; col < 16; ++col) {
        std::vector<cplx> e(16, 0.0);
        e[col] = 1.0;
        auto v = p.apply(e);
        for (int row = 0; row < 16; ++row) EXPECT_NEAR(std::abs(v[row] - d(row, col)), 0.0, 1e-12);
    }
}

TEST(JordanWigner, number_operator_is_half_one_minus_z) {
    FermionOperator n0(1);
    n0.add(OpString{bit(0), bit(0)}, 1.0);
    auto p = jordan_wigner(n0);
    ASSERT_EQ(p.terms().size(), 2u);
    EXPECT_NEAR(p.terms().at(PauliString{0, 0}).real(), 0.5, 1e-15);
    EXPECT_NEAR(p.terms().at(PauliString{0, 1}).real(), -0.5, 1e-15);
}

TEST(Rdm, expectation_matches_state_for_all_orders) {
    std::mt19937_64 rng(4);
    const int n = 6, ne = 3;
    auto psi = qcm::testing::random_sector_state(n, ne, rng);
    auto rdm = exact_rdm(psi, n, ne, ne);
    RdmHierarchy hier(rdm);
    for (int trial = 0; trial < 5; ++trial) {
        auto h = qcm::testing::random_operator(n, 3, 30, rng);
        h.add(OpString{}, 0.3);
        cplx direct = h.matrix_element(psi, psi);
        cplx via = expectation_from_rdm(h, hier);
        EXPECT_NEAR(std::abs(direct - via), 0.0, 1e-10);
    }
}

TEST(Rdm, contraction_reproduces_lower_order) {
    std::mt19937_64 rng(8);
    const int n = 6, ne = 3;
    auto psi = qcm::testing::random_sector_state(n, ne, rng);
    auto r3 = exact_rdm(psi, n, 3, ne);
    auto r2 = exact_rdm(psi, n, 2, ne);
    auto c2 = r3.contract();
    double err = 0;
    for (Mask c = 0; c < 64; ++c)
        for (Mask a = 0; a < 64; ++a)
            if (popcount(c) == 2 && popcount(a) == 2) err = std::max(err, std::abs(c2.value(c, a) - r2.value(c, a)));
    EXPECT_LT(err, 1e-12);
    EXPECT_NEAR(r3.trace(), 1.0, 1e-12);  // C(3,3)
    EXPECT_NEAR(r2.trace(), 3.0, 1e-12);
}

TEST(Rdm, terms_above_electron_count_vanish_and_gaps_throw) {
    std::mt19937_64 rng(9);
    const int n = 6;
    auto psi = qcm::testing::random_sector_state(n, 2, rng);
    auto r2 = exact_rdm(psi, n, 2, 2);
    FermionOperator op(n);
    op.add(OpString{bit(0) | bit(1) | bit(2), bit(3) | bit(4) | bit(5)}, 1.0);
    EXPECT_EQ(expectation_from_rdm(op, r2), cplx(0.0));

    auto psi3 = qcm::testing::random_sector_state(n, 3, rng);
    auto r2b = exact_rdm(psi3, n, 2, 3);
    EXPECT_THROW(expectation_from_rdm(op, r2b), std::invalid_argument);
}

TEST(Rdm, accessor_handles_order_and_conjugation) {
    Rdm r(4, 2, 2);
    r.set(bit(0) | bit(1), bit(2) | bit(3), cplx(0.25, 0.5));
    EXPECT_EQ(r.value(bit(2) | bit(3), bit(0) | bit(1)), cplx(0.25, -0.5));
    EXPECT_EQ(r.at({1, 0}, {2, 3}), cplx(-0.25, -0.5));
    EXPECT_EQ(r.at({1, 1}, {2, 3}), cplx(0.0));
    r.set_raw({1, 0}, {2, 3}, 7.0);
    EXPECT_EQ(r.at({1, 0}, {2, 3}), cplx(7.0));
    EXPECT_THROW(r.set(bit(0), bit(1), 1.0), std::invalid_argument);
}

TEST(Rdm, min_eigenvalue_nonnegative_for_pure_state) {
    std::mt19937_64 rng(10);
    auto psi = qcm::testing::random_sector_state(6, 3, rng);
    for (int p = 1; p <= 3; ++p) {
        auto r = exact_rdm(psi, 6, p, 3);
        // Fill the lower triangle so every row is present.
        EXPECT_GT(r.min_eigenvalue(), -1e-12) << "order " << p;
    }
}
