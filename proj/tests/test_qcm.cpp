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

#include "qcm/integrals.hpp"
#include "qcm/qcm.hpp"
#include "qcm/spsa.hpp"
#include "qcm/trial_circuit.hpp"
#include "test_util.hpp"

using namespace qcm;
using qcm::testing::Mat;

namespace {

using ld = long double;

// Cumulants by the generic recursion in extended precision.
std::array<ld, 4> reference_cumulants(const std::array<ld, 4> &m) {
    auto mom = [&](int k) -> ld { return k == 0 ? 1.0L : m[k - 1]; };
    std::array<ld, 4> c{};
    for (int p = 1; p <= 4; ++p) {
        ld s = mom(p);
        for (int j = 0; j <= p - 2; ++j) {
            ld b = 1;
            for (int i = 0; i < j; ++i) b = b * (p - 1 - i) / (i + 1);
            s -= b * c[j] * mom(p - 1 - j);
        }
        c[p - 1] = s;
    }
    return c;
}

// The Lanczos formula as written, in extended precision.
ld reference_lanczos(const std::array<ld, 4> &c) {
    return c[0] - c[1] * c[1] / (c[2] * c[2] - c[1] * c[3]) * (std::sqrt(3 * c[2] * c[2] - 2 * c[1] * c[3]) - c[2]);
}

Mat random_hermitian(int d, std::mt19937_64 &rng) {
    std::normal_distribution<double> nd;
    Mat a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = cplx(nd(rng), nd(rng));
    return 0.5 * (a + a.adjoint());
}

Eigen::VectorXcd random_vector(int d, std::mt19937_64 &rng) {
    std::normal_distribution<double> nd;
    Eigen::VectorXcd v(d);
    for (int i = 0; i < d; ++i) v(i) = cplx(nd(rng), nd(rng));
    return v.normalized();
}

Moments dense_moments(const Mat &h, const Eigen::VectorXcd &v) {
    Moments m{};
    Eigen::VectorXcd w = v;
    for (int k = 0; k < 4; ++k) {
        w = h * w;
        m[k] = v.dot(w).real();
    }
    return m;
}

}  // namespace

TEST(Cumulants, eigenstate_and_hand_values) {
    const double e = -1.3;
    auto c = cumulants({e, e * e, e * e * e, e * e * e * e});
    EXPECT_NEAR(c[0], e, 1e-15);
    for (int k = 1; k < 4; ++k) EXPECT_NEAR(c[k], 0.0, 1e-14);
    auto d = cumulants({0, 1, 0, 1});
    EXPECT_EQ(d, (Cumulants{0, 1, 0, -2}));
    EXPECT_NEAR(lanczos_energy(d), -1.0, 1e-15);
    EXPECT_NEAR(lanczos_energy(Cumulants{0.8, 0.36, -0.576, 0.6624}), -1.0, 1e-12);
    EXPECT_EQ(lanczos_energy(Cumulants{e, 0, 0, 0}), e);
}

TEST(Cumulants, explicit_formulas) {
    Moments m{0.3, 1.7, -0.4, 5.2};
    auto c = cumulants(m);
    EXPECT_NEAR(c[1], m[1] - m[0] * m[0], 1e-14);
    EXPECT_NEAR(c[2], m[2] - 3 * m[0] * m[1] + 2 * m[0] * m[0] * m[0], 1e-14);
    EXPECT_NEAR(c[3], m[3] - m[0] * m[2] - 3 * c[1] * m[1] - 3 * c[2] * m[0], 1e-14);
}

TEST(Lanczos, random_states_match_extended_precision) {
    std::mt19937_64 rng(42);
    int undefined = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Mat h = random_hermitian(16, rng);
        auto v = random_vector(16, rng);
        auto m = dense_moments(h, v);
        auto c = cumulants(m);
        std::array<ld, 4> ml{m[0], m[1], m[2], m[3]};
        auto cr = reference_cumulants(ml);
        for (int k = 0; k < 4; ++k) EXPECT_NEAR(c[k], static_cast<double>(cr[k]), 1e-9 * std::max(1.0, std::abs(c[k])));
        ld ref = reference_lanczos(cr);
        if (std::isnan(static_cast<double>(ref))) {
            // Negative discriminant: E_L is complex and must be refused.
            EXPECT_THROW(lanczos_energy(c), NumericalError);
            ++undefined;
        } else {
            EXPECT_NEAR(lanczos_energy(c), static_cast<double>(ref), 1e-9);
        }
    }
    EXPECT_LT(undefined, 10);
}

TEST(Lanczos, eigenstate_fixed_point) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        Mat h = random_hermitian(16, rng);
        Eigen::SelfAdjointEigenSolver<Mat> es(h);
        int k = trial % 16;
        Eigen::VectorXcd v = es.eigenvectors().col(k);
        auto m = dense_moments(h, v);
        EXPECT_NEAR(lanczos_from_moments(m), es.eigenvalues()(k), 1e-9);
        EXPECT_NEAR(m[0], es.eigenvalues()(k), 1e-9);
    }
}

TEST(Lanczos, two_level_spectra_are_exact) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int trial = 0; trial < 100; ++trial) {
        double a = u(rng), b = u(rng);
        Mat h = random_hermitian(8, rng);
        Eigen::SelfAdjointEigenSolver<Mat> es(h);
        // Same eigenvectors, two distinct eigenvalues.
        Eigen::VectorXd ev(8);
        for (int i = 0; i < 8; ++i) ev(i) = i < 3 ? a : b;
        Mat h2 = es.eigenvectors() * ev.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
        auto v = random_vector(8, rng);
        // Moments about the mean; raw moments lose digits when the gap is
        // small next to the energies.
        double mean = v.dot(h2 * v).real();
        auto e = estimate(dense_moments(h2 - mean * Mat::Identity(8, 8), v), mean);
        EXPECT_NEAR(e.e_l, std::min(a, b), 1e-9);
        EXPECT_NEAR(e.h, mean, 1e-12);
    }
    // H = Z with |+>.
    Mat z = Mat::Zero(2, 2);
    z(0, 0) = 1;
    z(1, 1) = -1;
    Eigen::VectorXcd plus(2);
    plus << std::sqrt(0.5), std::sqrt(0.5);
    EXPECT_NEAR(lanczos_from_moments(dense_moments(z, plus)), -1.0, 1e-12);
}

TEST(Lanczos, shift_and_scale_covariance) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-5, 5), us(0.1, 4);
    for (int trial = 0; trial < 50; ++trial) {
        Mat h = random_hermitian(8, rng);
        auto v = random_vector(8, rng);
        double lam = u(rng), s = us(rng);
        auto c = cumulants(dense_moments(h, v));
        auto cs = cumulants(dense_moments(h + lam * Mat::Identity(8, 8), v));
        EXPECT_NEAR(cs[0], c[0] + lam, 1e-9);
        for (int k = 1; k < 4; ++k) EXPECT_NEAR(cs[k], c[k], 1e-8 * std::max(1.0, std::abs(c[k])));
        if (3 * c[2] * c[2] - 2 * c[1] * c[3] < 0) {
            EXPECT_THROW(lanczos_energy(c), NumericalError);
            continue;
        }
        EXPECT_NEAR(lanczos_energy(cs), lanczos_energy(c) + lam, 1e-8);
        EXPECT_NEAR(lanczos_from_moments(dense_moments(s * h, v)), s * lanczos_energy(c), 1e-8);
    }
}

TEST(Lanczos, inconsistent_moments_raise) {
    // c2 > 0 but 3 c3^2 - 2 c2 c4 < 0.
    EXPECT_THROW(lanczos_energy(Cumulants{0, 1, 0, 1}), NumericalError);
    // Tiny negative discriminant is clamped.
    EXPECT_NEAR(lanczos_energy(Cumulants{0, 1, 1, 1.5 + 1e-13}), -2.0, 1e-12);
    EXPECT_THROW(lanczos_energy(Cumulants{0, 1, 0, 1e-12}), NumericalError);
}

TEST(MomentsFromRdm, hartree_fock_matches_statevector) {
    auto ints = load_fcidump(qcm::testing::data_path("h4_chain.fcidump"));
    auto h = molecular_hamiltonian(ints);
    auto powers = hamiltonian_powers(h);
    Statevector hf(8, ints.hartree_fock_occupation());
    auto rdm = exact_rdm(hf.amplitudes(), 8, 4, 4);
    auto m = moments_from_rdm(powers, rdm);
    auto ref = moments_from_state(h, hf);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(m[k], ref[k], 1e-9 * std::max(1.0, std::abs(ref[k])));
    auto ident = moments_from_rdm(hamiltonian_powers(FermionOperator::identity(8)), rdm);
    for (double x : ident) EXPECT_NEAR(x, 1.0, 1e-12);
}

TEST(MomentsFromRdm, two_electron_state_uses_two_rdm) {
    auto ints = load_fcidump(qcm::testing::data_path("h2_stretched.fcidump"));
    auto h = molecular_hamiltonian(ints);
    std::vector<cplx> psi(16, 0.0);
    psi[0b0011] = 0.8;
    psi[0b1100] = -0.6;
    auto m = moments_from_rdm(hamiltonian_powers(h), exact_rdm(psi, 4, 2, 2));
    auto ref = moments_from_state(h, Statevector(4, psi));
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(m[k], ref[k], 1e-10);
}

// Optimized trial states: E_L lands closer to the sector ground state than
// <H>, and white noise shifts E_L less than <H>.
class Fixture : public ::testing::TestWithParam<const char *> {};

TEST_P(Fixture, lanczos_improves_and_resists_white_noise) {
    const std::string name = GetParam();
    auto ints = load_fcidump(qcm::testing::data_path(name + ".fcidump"));
    auto h = molecular_hamiltonian(ints);
    const int n = ints.n_modes();
    Ansatz a;
    a.reference = ints.hartree_fock_occupation();
    if (n == 4)
        a.excitations = {{{2, 3}, {0, 1}}};
    else
        a.excitations = {{{4, 5}, {2, 3}}, {{6, 7}, {0, 1}}, {{4, 7}, {0, 3}}, {{5, 6}, {1, 2}}};
    Objective f = [&](const std::vector<double> &t) { return trial_state(a, t, n).expectation(h); };
    SpsaOptions opt;
    opt.max_iterations = n == 4 ? 3000 : 1000;
    auto best = spsa_minimize(f, std::vector<double>(a.excitations.size(), 0.0), {1, 2, 3, 4, 5}, opt);
    double fci = exact_diagonalize(h, Sector{ints.nelec(), 0, SpinLabels::interleaved(n)}).energy;
    auto m = moments_from_state(h, trial_state(a, best.theta, n));
    auto e0 = estimate(m);
    EXPECT_LT(std::abs(e0.e_l - fci), std::abs(e0.h - fci));

    Moments mixed{};
    for (Mask x = 0; x < (Mask{1} << n); ++x) {
        auto v = exact_moments(h, Statevector(n, x), 4);
        for (int k = 0; k < 4; ++k) mixed[k] += v[k] / static_cast<double>(Mask{1} << n);
    }
    for (double q : {0.05, 0.1, 0.2, 0.3}) {
        auto e = estimate(mix_moments(m, mixed, q));
        EXPECT_LE(std::abs(e.e_l - e0.e_l), std::abs(e.h - e0.h)) << "q = " << q;
    }
}

INSTANTIATE_TEST_SUITE_P(Molecules, Fixture, ::testing::Values("h2_stretched", "h4_chain"));

TEST(Bootstrap, deterministic_outcomes_have_zero_spread) {
    CountsTable t;
    t.n_bits = 2;
    t.counts[0b01] = 1000;
    CountsEstimator est = [](const std::vector<CountsTable> &tabs) {
        double p = tabs[0].probabilities().begin()->second;
        return EnergyPair{p, 2 * p};
    };
    auto r = bootstrap({t}, est, 20, 7);
    EXPECT_EQ(r.std_h, 0.0);
    EXPECT_EQ(r.std_el, 0.0);
    EXPECT_EQ(r.mean_h, 1.0);
    EXPECT_THROW(bootstrap({t}, est, 1, 7), std::invalid_argument);
}

TEST(Bootstrap, resampling_preserves_totals_and_is_seeded) {
    CountsTable t;
    t.n_bits = 3;
    t.counts = {{0, 300}, {3, 500}, {5, 150}, {7, 50}};
    std::mt19937_64 a(5), b(5);
    auto r1 = resample_counts(t, a), r2 = resample_counts(t, b);
    EXPECT_EQ(r1, r2);
    EXPECT_EQ(r1.total(), t.total());
}

TEST(Bootstrap, spread_scales_with_inverse_root_shots) {
    const std::vector<double> probs{0.1, 0.2, 0.3, 0.4};
    std::vector<double> sds;
    CountsEstimator est = [](const std::vector<CountsTable> &tabs) {
        double e = 0;
        for (const auto &[x, p] : tabs[0].probabilities()) e += p * (x == 0 ? -1.0 : static_cast<double>(x));
        return EnergyPair{e, e};
    };
    for (std::uint64_t shots : {1000, 10000, 100000}) {
        auto t = sample_distribution(probs, 2, shots, NoiseSpec{}, 11);
        sds.push_back(bootstrap({t}, est, 300, 13).std_h);
    }
    for (std::size_t i = 0; i + 1 < sds.size(); ++i) {
        double ratio = sds[i] / sds[i + 1];
        EXPECT_GT(ratio, std::sqrt(10.0) / 1.5);
        EXPECT_LT(ratio, std::sqrt(10.0) * 1.5);
    }
}

TEST(Bootstrap, failures_are_counted_and_bounded) {
    CountsTable t;
    t.n_bits = 1;
    t.counts = {{0, 50}, {1, 50}};
    int calls = 0;
    CountsEstimator flaky = [&](const std::vector<CountsTable> &) {
        if (++calls % 20 == 0) throw NumericalError("flaky");
        return EnergyPair{0.0, 0.0};
    };
    auto r = bootstrap({t}, flaky, 40, 1);
    EXPECT_EQ(r.failures, 2);
    CountsEstimator broken = [](const std::vector<CountsTable> &) -> EnergyPair { throw NumericalError("always"); };
    EXPECT_THROW(bootstrap({t}, broken, 10, 1), NumericalError);
}
