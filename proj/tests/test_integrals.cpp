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

#include <sstream>

#include "qcm/integrals.hpp"
#include "qcm/simulator.hpp"
#include "test_util.hpp"

using namespace qcm;

namespace {

// Closed-shell determinant energy from the integrals directly.
double closed_shell_energy(const MolecularIntegrals &ints) {
    const int nocc = ints.nelec() / 2;
    double e = ints.constant();
    for (int i = 0; i < nocc; ++i) {
        e += 2 * ints.h1(i, i);
        for (int j = 0; j < nocc; ++j) e += 2 * ints.eri(i, i, j, j) - ints.eri(i, j, j, i);
    }
    return e;
}

double determinant_expectation(const FermionOperator &h, Mask occ) {
    Statevector s(h.n_modes(), occ);
    return s.expectation(h);
}

}  // namespace

TEST(Fcidump, parses_h2_fixture) {
    auto ints = load_fcidump(qcm::testing::data_path("h2_stretched.fcidump"));
    EXPECT_EQ(ints.norb(), 2);
    EXPECT_EQ(ints.nelec(), 2);
    EXPECT_NEAR(ints.constant(), 0.35278480728, 1e-12);
    EXPECT_DOUBLE_EQ(ints.eri(1, 0, 1, 0), ints.eri(0, 1, 0, 1));
    EXPECT_DOUBLE_EQ(ints.h1(1, 1), -0.6653369357648332);
}

TEST(Fcidump, determinant_energy_matches_reference_hf) {
    // Reference SCF energies of the fixtures.
    const std::vector<std::pair<std::string, double>> cases{
        {"h2_stretched.fcidump", -0.9108735545943865},
        {"h4_chain.fcidump", -2.003867483120586},
        {"h2o_sto3g.fcidump", -74.96306312972763},
    };
    for (const auto &[file, e_hf] : cases) {
        auto ints = load_fcidump(qcm::testing::data_path(file));
        EXPECT_NEAR(closed_shell_energy(ints), e_hf, 1e-8) << file;
        auto h = molecular_hamiltonian(ints);
        EXPECT_NEAR(determinant_expectation(h, ints.hartree_fock_occupation()), e_hf, 1e-8) << file;
    }
}

TEST(Fcidump, sector_fci_matches_reference) {
    const std::vector<std::pair<std::string, double>> cases{
        {"h2_stretched.fcidump", -0.9981493534714101},
        {"h4_chain.fcidump", -2.102608480955424},
    };
    for (const auto &[file, e_fci] : cases) {
        auto ints = load_fcidump(qcm::testing::data_path(file));
        auto h = molecular_hamiltonian(ints);
        Sector sec{ints.nelec(), 0, SpinLabels::interleaved(h.n_modes())};
        EXPECT_NEAR(exact_diagonalize(h, sec).energy, e_fci, 1e-9) << file;
    }
}

TEST(Fcidump, write_then_read_round_trips) {
    auto ints = load_fcidump(qcm::testing::data_path("h4_chain.fcidump"));
    std::stringstream ss;
    write_fcidump(ints, ss);
    auto back = parse_fcidump(ss);
    auto h1 = molecular_hamiltonian(ints), h2 = molecular_hamiltonian(back);
    ASSERT_EQ(h1.size(), h2.size());
    for (const auto &[s, c] : h1.terms()) EXPECT_NEAR(std::abs(h2.coefficient(s) - c), 0.0, 1e-12);
}

TEST(Fcidump, malformed_inputs_raise_config_error) {
    auto parse = [](const std::string &txt) {
        std::istringstream is(txt);
        return parse_fcidump(is);
    };
    EXPECT_THROW(parse(" &FCI NORB=2,NELEC=2,\n"), ConfigError);
    EXPECT_THROW(parse(" &FCI NELEC=2,\n &END\n"), ConfigError);
    EXPECT_THROW(parse(" &FCI NORB=2,NELEC=2,\n &END\n 0.5 1 1 3 1\n"), ConfigError);
    EXPECT_THROW(parse(" &FCI NORB=2,NELEC=2,\n &END\n abc 1 1 1 1\n"), ConfigError);
    EXPECT_THROW(parse(" &FCI NORB=2,NELEC=2,\n &END\n 0.5 1 1\n"), ConfigError);
    EXPECT_THROW(load_fcidump("/nonexistent/file"), ConfigError);
    EXPECT_NO_THROW(parse(" &FCI NORB=1,NELEC=2,\n &END\n 0.5D0 1 1 1 1\n"));
}

TEST(FrozenCore, hamiltonian_matches_operator_freezing) {
    auto ints = load_fcidump(qcm::testing::data_path("h2o_sto3g.fcidump"));
    // Freeze the oxygen 1s orbital and the highest virtual.
    auto small = freeze_orbitals(ints, {0}, {6});
    auto h_small = molecular_hamiltonian(small);
    auto h_full = molecular_hamiltonian(ints);
    auto h_frozen = freeze_operator(h_full, bit(0) | bit(1), bit(12) | bit(13));
    ASSERT_EQ(h_frozen.n_modes(), h_small.n_modes());
    double err = 0;
    for (const auto &[s, c] : h_frozen.terms()) err = std::max(err, std::abs(h_small.coefficient(s) - c));
    for (const auto &[s, c] : h_small.terms()) err = std::max(err, std::abs(h_frozen.coefficient(s) - c));
    EXPECT_LT(err, 1e-10);
    EXPECT_NEAR(closed_shell_energy(small), -74.96306312972763, 1e-8);
}

TEST(FrozenCore, rejects_bad_indices) {
    auto ints = load_fcidump(qcm::testing::data_path("h2_stretched.fcidump"));
    EXPECT_THROW(freeze_orbitals(ints, {5}, {}), std::out_of_range);
    EXPECT_THROW(freeze_orbitals(ints, {0}, {0}), std::invalid_argument);
}
