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

// Configuration-driven experiment runner: plan, optimize, run, analyze.
//
// Seeds: every random stream is derive_seed(master, label, index) with the
// labels "optimize", "run/trial", "run/reference", "run/calibration" and
// "bootstrap". Nothing here is multithreaded, so outputs are bit-identical
// for a fixed master seed.

#ifndef QCM_PIPELINE_HPP
#define QCM_PIPELINE_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qcm/core.hpp"
#include "qcm/fermion.hpp"
#include "qcm/integrals.hpp"
#include "qcm/measurement.hpp"
#include "qcm/mitigation.hpp"
#include "qcm/qcm.hpp"
#include "qcm/simulator.hpp"
#include "qcm/spsa.hpp"
#include "qcm/trial_circuit.hpp"

namespace qcm {

using json = nlohmann::json;

inline constexpr const char *kConfigSchema = "qcm-pipeline/1";
inline constexpr const char *kReportSchema = "qcm-report/1";
inline constexpr const char *kArchiveSchema = "qcm-counts/1";

struct MitigationToggles {
    bool qrem = true;
    bool postselect = true;
    bool rescale = true;
    bool calibrate = true;

    bool operator==(const MitigationToggles &) const = default;
};

struct PipelineConfig {
    std::filesystem::path integrals;
    // Spatial orbitals folded into the integrals before any operator is built.
    std::vector<int> frozen_occupied, frozen_virtual;
    // Spatial orbitals of the moment space removed after forming H^p.
    std::vector<int> active_frozen_occupied, active_frozen_virtual;
    int rdm_order = 0;  // 0 selects min(4, electrons)
    std::vector<Excitation> excitations;
    std::vector<double> theta;
    int optimizer_iterations = 0;
    int optimizer_restarts = 5;
    SpsaOptions spsa;
    std::uint64_t shots = 100000;  // 0 means exact distributions
    std::uint64_t calibration_shots = 100000;
    double global_q = 0.0;
    double cnot_depolarizing = 0.0;
    std::vector<double> readout_p01, readout_p10;  // one entry or one per qubit
    MitigationToggles mitigation;
    int bootstrap_resamples = 0;
    std::optional<double> shift;  // unset: Hartree-Fock energy
    std::uint64_t seed = 1;
    std::filesystem::path output = "qcm_out";
    int route_max_depth = 64;
    int exact_route_limit = 12;
};

namespace detail {

template <class T>
T get_field(const json &j, const std::string &key, const std::string &where) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception &e) {
        throw ConfigError(where + key + ": " + e.what());
    }
}

inline void reject_unknown(const json &j, const std::set<std::string> &known, const std::string &where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto &[k, v] : j.items())
        if (!known.count(k)) throw ConfigError("unknown key '" + where + k + "'");
}

inline std::vector<int> int_list(const json &j, const std::string &key, const std::string &where) {
    if (!j.contains(key)) return {};
    return get_field<std::vector<int>>(j, key, where);
}

inline std::vector<double> per_qubit(const json &v, const std::string &name) {
    if (v.is_number()) return {v.get<double>()};
    if (v.is_array()) {
        try {
            return v.get<std::vector<double>>();
        } catch (const json::exception &e) {
            throw ConfigError(name + ": " + e.what());
        }
    }
    throw ConfigError(name + " must be a number or a list of numbers");
}

}  // namespace detail

/// Parses and validates a config document. Relative paths resolve against
/// `base_dir`.
inline PipelineConfig parse_config(const json &j, const std::filesystem::path &base_dir = ".") {
    using detail::get_field;
    detail::reject_unknown(j, {"schema", "integrals", "frozen", "active", "rdm_order", "ansatz", "optimizer", "shots", "calibration_shots",
                               "noise", "mitigation", "bootstrap", "shift", "seed", "output", "routing"},
                           "");
    if (!j.contains("schema") || j["schema"] != kConfigSchema) throw ConfigError(std::string("config schema must be \"") + kConfigSchema + "\"");
    PipelineConfig c;
    if (!j.contains("integrals")) throw ConfigError("integrals: required");
    c.integrals = base_dir / get_field<std::string>(j, "integrals", "");
    if (!std::filesystem::exists(c.integrals)) throw ConfigError("integrals: file not found: " + c.integrals.string());
    if (j.contains("frozen")) {
        const auto &f = j["frozen"];
        detail::reject_unknown(f, {"occupied", "virtual"}, "frozen.");
        c.frozen_occupied = detail::int_list(f, "occupied", "frozen.");
        c.frozen_virtual = detail::int_list(f, "virtual", "frozen.");
    }
    if (j.contains("active")) {
        const auto &f = j["active"];
        detail::reject_unknown(f, {"freeze_occupied", "freeze_virtual"}, "active.");
        c.active_frozen_occupied = detail::int_list(f, "freeze_occupied", "active.");
        c.active_frozen_virtual = detail::int_list(f, "freeze_virtual", "active.");
    }
    if (j.contains("rdm_order")) {
        c.rdm_order = get_field<int>(j, "rdm_order", "");
        if (c.rdm_order < 1 || c.rdm_order > 4) throw ConfigError("rdm_order must be between 1 and 4");
    }
    if (j.contains("ansatz")) {
        const auto &a = j["ansatz"];
        detail::reject_unknown(a, {"excitations", "theta"}, "ansatz.");
        auto ex = a.contains("excitations") ? get_field<std::vector<std::vector<int>>>(a, "excitations", "ansatz.") : std::vector<std::vector<int>>{};
        for (const auto &q : ex) {
            if (q.size() != 4) throw ConfigError("ansatz.excitations: each entry is [create0, create1, annihilate0, annihilate1]");
            c.excitations.push_back({{q[0], q[1]}, {q[2], q[3]}});
        }
        c.theta = a.contains("theta") ? get_field<std::vector<double>>(a, "theta", "ansatz.") : std::vector<double>(ex.size(), 0.0);
        if (c.theta.size() != c.excitations.size()) throw ConfigError("ansatz.theta: one angle per excitation required");
    }
    if (j.contains("optimizer")) {
        const auto &o = j["optimizer"];
        detail::reject_unknown(o, {"iterations", "restarts", "a", "c", "A", "alpha", "gamma"}, "optimizer.");
        if (o.contains("iterations")) c.optimizer_iterations = get_field<int>(o, "iterations", "optimizer.");
        if (o.contains("restarts")) c.optimizer_restarts = get_field<int>(o, "restarts", "optimizer.");
        if (o.contains("a")) c.spsa.a = get_field<double>(o, "a", "optimizer.");
        if (o.contains("c")) c.spsa.c = get_field<double>(o, "c", "optimizer.");
        if (o.contains("A")) c.spsa.A = get_field<double>(o, "A", "optimizer.");
        if (o.contains("alpha")) c.spsa.alpha = get_field<double>(o, "alpha", "optimizer.");
        if (o.contains("gamma")) c.spsa.gamma = get_field<double>(o, "gamma", "optimizer.");
        if (c.optimizer_iterations < 0 || c.optimizer_restarts < 1) throw ConfigError("optimizer: iterations >= 0 and restarts >= 1 required");
        c.spsa.max_iterations = c.optimizer_iterations;
    }
    if (j.contains("shots")) c.shots = get_field<std::uint64_t>(j, "shots", "");
    c.calibration_shots = c.shots;
    if (j.contains("calibration_shots")) c.calibration_shots = get_field<std::uint64_t>(j, "calibration_shots", "");
    if (c.shots > 0 && c.calibration_shots == 0) throw ConfigError("calibration_shots must be positive when sampling");
    if (j.contains("noise")) {
        const auto &n = j["noise"];
        detail::reject_unknown(n, {"global_q", "cnot_depolarizing", "readout_p01", "readout_p10"}, "noise.");
        if (n.contains("global_q")) c.global_q = get_field<double>(n, "global_q", "noise.");
        if (n.contains("cnot_depolarizing")) c.cnot_depolarizing = get_field<double>(n, "cnot_depolarizing", "noise.");
        if (n.contains("readout_p01")) c.readout_p01 = detail::per_qubit(n["readout_p01"], "noise.readout_p01");
        if (n.contains("readout_p10")) c.readout_p10 = detail::per_qubit(n["readout_p10"], "noise.readout_p10");
        for (double p : {c.global_q, c.cnot_depolarizing})
            if (p < 0 || p >= 1) throw ConfigError("noise rates must lie in [0, 1)");
        for (const auto *v : {&c.readout_p01, &c.readout_p10})
            for (double p : *v)
                if (p < 0 || p >= 0.5) throw ConfigError("readout flip probabilities must lie in [0, 0.5)");
    }
    if (j.contains("mitigation")) {
        const auto &m = j["mitigation"];
        detail::reject_unknown(m, {"qrem", "postselect", "rescale", "calibrate"}, "mitigation.");
        if (m.contains("qrem")) c.mitigation.qrem = get_field<bool>(m, "qrem", "mitigation.");
        if (m.contains("postselect")) c.mitigation.postselect = get_field<bool>(m, "postselect", "mitigation.");
        if (m.contains("rescale")) c.mitigation.rescale = get_field<bool>(m, "rescale", "mitigation.");
        if (m.contains("calibrate")) c.mitigation.calibrate = get_field<bool>(m, "calibrate", "mitigation.");
    }
    if (j.contains("bootstrap")) {
        const auto &b = j["bootstrap"];
        detail::reject_unknown(b, {"resamples"}, "bootstrap.");
        c.bootstrap_resamples = get_field<int>(b, "resamples", "bootstrap.");
        if (c.bootstrap_resamples == 1 || c.bootstrap_resamples < 0) throw ConfigError("bootstrap.resamples must be 0 or at least 2");
    }
    if (j.contains("shift")) {
        if (j["shift"].is_string()) {
            if (j["shift"] != "hartree_fock") throw ConfigError("shift: expected a number or \"hartree_fock\"");
        } else {
            c.shift = get_field<double>(j, "shift", "");
        }
    }
    if (j.contains("seed")) c.seed = get_field<std::uint64_t>(j, "seed", "");
    if (j.contains("output")) c.output = base_dir / get_field<std::string>(j, "output", "");
    if (j.contains("routing")) {
        const auto &r = j["routing"];
        detail::reject_unknown(r, {"max_depth", "exact_qubit_limit"}, "routing.");
        if (r.contains("max_depth")) c.route_max_depth = get_field<int>(r, "max_depth", "routing.");
        if (r.contains("exact_qubit_limit")) c.exact_route_limit = get_field<int>(r, "exact_qubit_limit", "routing.");
    }
    return c;
}

inline PipelineConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return parse_config(j, path.parent_path());
}

/// Everything derived from the config before any circuit is sampled.
struct Problem {
    int n_qubits = 0;  // active spin-orbitals
    int n_electrons = 0;
    int two_sz = 0;
    int order = 0;
    SpinLabels spins;
    FermionOperator h_moment{0};  // moment space (after the integral freeze)
    FermionOperator h{0};         // active space
    double shift = 0.0;
    double hf_energy = 0.0;
    std::vector<FermionOperator> powers;  // (H - shift)^p on the active space
    Ansatz ansatz;
    Mask frozen_occupied_modes = 0, frozen_virtual_modes = 0;  // in the moment space

    Sector sector() const { return {n_electrons, two_sz, spins}; }
};

inline Mask spin_modes(const std::vector<int> &spatial) {
    Mask m = 0;
    for (int p : spatial) m |= bit(2 * p) | bit(2 * p + 1);
    return m;
}

inline Problem build_problem(const PipelineConfig &cfg, bool with_powers = true) {
    auto ints = load_fcidump(cfg.integrals.string());
    if (!cfg.frozen_occupied.empty() || !cfg.frozen_virtual.empty()) ints = freeze_orbitals(ints, cfg.frozen_occupied, cfg.frozen_virtual);
    Problem p;
    p.h_moment = molecular_hamiltonian(ints);
    for (int o : cfg.active_frozen_occupied)
        if (o < 0 || o >= ints.norb()) throw ConfigError("active.freeze_occupied: orbital out of range");
    for (int o : cfg.active_frozen_virtual)
        if (o < 0 || o >= ints.norb()) throw ConfigError("active.freeze_virtual: orbital out of range");
    p.frozen_occupied_modes = spin_modes(cfg.active_frozen_occupied);
    p.frozen_virtual_modes = spin_modes(cfg.active_frozen_virtual);
    if (p.frozen_occupied_modes & p.frozen_virtual_modes) throw ConfigError("active: orbital frozen as both occupied and virtual");
    p.h = freeze_operator(p.h_moment, p.frozen_occupied_modes, p.frozen_virtual_modes);
    p.n_qubits = p.h.n_modes();
    p.n_electrons = ints.nelec() - popcount(p.frozen_occupied_modes);
    p.two_sz = ints.ms2();
    if (p.n_electrons < 0 || p.n_electrons > p.n_qubits) throw ConfigError("active space cannot hold the electrons");
    if (p.n_qubits > 20) throw ConfigError("active space has " + std::to_string(p.n_qubits) + " modes; the simulator supports at most 20");
    p.order = cfg.rdm_order ? cfg.rdm_order : std::min(4, p.n_electrons);
    p.spins = SpinLabels::interleaved(p.n_qubits);
    // Reference determinant: lowest spatial orbitals, n_up up and n_down down.
    const int n_up = (p.n_electrons + p.two_sz) / 2, n_down = (p.n_electrons - p.two_sz) / 2;
    for (int k = 0; k < n_up; ++k) p.ansatz.reference |= bit(2 * k);
    for (int k = 0; k < n_down; ++k) p.ansatz.reference |= bit(2 * k + 1);
    p.ansatz.excitations = cfg.excitations;
    try {
        p.ansatz.validate(p.spins);
    } catch (const std::exception &e) {
        throw ConfigError(std::string("ansatz: ") + e.what());
    }
    p.hf_energy = Statevector(p.n_qubits, p.ansatz.reference).expectation(p.h);
    p.shift = cfg.shift ? *cfg.shift : p.hf_energy;
    if (with_powers) {
        for (const auto &op : hamiltonian_powers(shifted(p.h_moment, p.shift)))
            p.powers.push_back(freeze_operator(op, p.frozen_occupied_modes, p.frozen_virtual_modes));
    }
    return p;
}

inline NoiseSpec noise_spec(const PipelineConfig &cfg, int n_qubits) {
    NoiseSpec n;
    n.global_q = cfg.global_q;
    n.cnot_depolarizing = cfg.cnot_depolarizing;
    if (cfg.readout_p01.empty() && cfg.readout_p10.empty()) return n;
    auto expand = [&](const std::vector<double> &v, const char *name) {
        if (v.empty()) return std::vector<double>(n_qubits, 0.0);
        if (v.size() == 1) return std::vector<double>(n_qubits, v[0]);
        if (static_cast<int>(v.size()) != n_qubits) throw ConfigError(std::string("noise.") + name + ": expected one value per qubit");
        return v;
    };
    auto p01 = expand(cfg.readout_p01, "readout_p01"), p10 = expand(cfg.readout_p10, "readout_p10");
    for (int q = 0; q < n_qubits; ++q) n.readout.push_back(ReadoutMatrix::from_flips(p01[q], p10[q]));
    return n;
}

inline AssignmentCalibration true_calibration(const NoiseSpec &noise, int n) {
    if (noise.readout.empty()) return AssignmentCalibration::identity(n);
    std::vector<double> p01, p10;
    for (const auto &r : noise.readout) {
        p01.push_back(r.p01());
        p10.push_back(r.p10());
    }
    return AssignmentCalibration::from_flips(p01, p10);
}

/// Plan plus the trial, reference and measurement circuits.
struct Experiment {
    MeasurementPlan plan;
    TrialCircuit trial, reference;
    std::vector<MeasurementCircuit> circuits;
};

inline RouteOptions route_options(const PipelineConfig &cfg) {
    RouteOptions r;
    r.max_depth = cfg.route_max_depth;
    r.exact_qubit_limit = cfg.exact_route_limit;
    return r;
}

inline Experiment build_experiment(const Problem &p, const std::vector<double> &theta, const RouteOptions &route) {
    Experiment e;
    e.plan = plan_measurements(p.n_qubits, p.order, p.spins);
    e.trial = build_uccd(p.ansatz, theta, p.n_qubits);
    e.reference = build_uccd(p.ansatz, std::vector<double>(theta.size(), 0.0), p.n_qubits);
    if (e.trial.layout != e.reference.layout) throw std::logic_error("trial and reference layouts differ");
    for (const auto &b : e.plan.bases) e.circuits.push_back(build_measurement_circuit(b, e.trial.layout, route));
    return e;
}

inline json plan_summary(const MeasurementPlan &plan, const std::vector<MeasurementCircuit> &circuits) {
    int max_depth = 0, max_cnots = 0;
    bool certified = true;
    for (const auto &mc : circuits) {
        max_depth = std::max(max_depth, mc.schedule.depth);
        max_cnots = std::max(max_cnots, mc.circuit.cnot_count());
        certified = certified && (mc.schedule.certified || mc.schedule.layers.empty());
    }
    return {{"modes", plan.n_modes},
            {"order", plan.order},
            {"elements", plan.elements.size()},
            {"level1_bases", plan.level1.bases.size()},
            {"bases", plan.bases.size()},
            {"max_schedule_depth", max_depth},
            {"max_measurement_cnots", max_cnots},
            {"routing_certified", certified}};
}

inline json plan_to_json(const MeasurementPlan &plan, const std::vector<MeasurementCircuit> &circuits) {
    json j;
    j["summary"] = plan_summary(plan, circuits);
    json bases = json::array();
    for (std::size_t b = 0; b < plan.bases.size(); ++b) {
        const auto &cb = plan.bases[b];
        json sites = json::array();
        for (const auto &s : cb.sites) sites.push_back({s.lo, s.hi});
        json e{{"level1", cb.level1}, {"sites", sites}, {"labels", cb.label_string()}};
        if (b < circuits.size()) {
            e["schedule_depth"] = circuits[b].schedule.depth;
            e["certified"] = circuits[b].schedule.certified;
            e["cnots"] = circuits[b].circuit.cnot_count();
        }
        bases.push_back(e);
    }
    j["bases"] = bases;
    json elements = json::array();
    for (std::size_t i = 0; i < plan.elements.size(); ++i) {
        std::set<std::size_t> used;
        for (const auto &pp : plan.products[i]) used.insert(pp.basis);
        elements.push_back({{"create", bits_of(plan.elements[i].cre)},
                            {"annihilate", bits_of(plan.elements[i].ann)},
                            {"products", plan.products[i].size()},
                            {"bases", std::vector<std::size_t>(used.begin(), used.end())}});
    }
    j["elements"] = elements;
    return j;
}

struct OptimizeResult {
    std::vector<double> theta;
    double energy = 0.0;
    SpsaResult spsa;
};

/// Noiseless SPSA on <H>. Zero iterations return the initial angles.
inline OptimizeResult optimize_ansatz(const Problem &p, const PipelineConfig &cfg) {
    OptimizeResult r;
    Objective f = [&](const std::vector<double> &t) {
        double v = trial_state(p.ansatz, t, p.n_qubits).expectation(p.h);
        if (!std::isfinite(v)) throw NumericalError("non-finite objective");
        return v;
    };
    r.theta = cfg.theta;
    if (cfg.optimizer_iterations == 0 || cfg.theta.empty()) {
        r.energy = f(r.theta);
        return r;
    }
    std::vector<std::uint64_t> seeds;
    for (int k = 0; k < cfg.optimizer_restarts; ++k) seeds.push_back(derive_seed(cfg.seed, "optimize", static_cast<std::uint64_t>(k)));
    r.spsa = spsa_minimize(f, cfg.theta, seeds, cfg.spsa);
    r.theta = r.spsa.theta;
    r.energy = f(r.theta);
    return r;
}

/// Measured outcomes for every basis, for the trial and reference states,
/// plus readout calibration data. In exact mode the distributions are the
/// infinite-shot limits and no counts exist.
struct RunArchive {
    int n_qubits = 0;
    std::uint64_t shots = 0;
    std::vector<double> theta;
    std::vector<CountsTable> trial, reference;
    std::vector<Distribution> trial_exact, reference_exact;
    std::vector<Mask> calibration_states;
    std::vector<CountsTable> calibration;
    AssignmentCalibration exact_calibration;

    bool exact() const { return shots == 0; }
    std::size_t n_bases() const { return exact() ? trial_exact.size() : trial.size(); }
};

inline Distribution noisy_exact_distribution(const Statevector &s, const NoiseSpec &noise, int n_cnot, const AssignmentCalibration &readout) {
    const double q = noise.effective_q(n_cnot);
    auto probs = s.probabilities();
    const double u = 1.0 / static_cast<double>(probs.size());
    for (double &x : probs) x = (1 - q) * x + q * u;
    auto d = from_vector(probs);
    return noise.readout.empty() ? d : apply_readout(d, readout);
}

inline RunArchive run_experiment(const Problem &p, const Experiment &e, const std::vector<double> &theta, const PipelineConfig &cfg) {
    const int n = p.n_qubits;
    auto noise = noise_spec(cfg, n);
    RunArchive a;
    a.n_qubits = n;
    a.shots = cfg.shots;
    a.theta = theta;
    auto psi_trial = run(e.trial.circuit);
    auto psi_ref = run(e.reference.circuit);
    auto readout = true_calibration(noise, n);
    for (std::size_t b = 0; b < e.circuits.size(); ++b) {
        const auto &mc = e.circuits[b];
        auto t = psi_trial, r = psi_ref;
        t.apply(mc.circuit);
        r.apply(mc.circuit);
        const int ct = e.trial.circuit.cnot_count() + mc.circuit.cnot_count();
        const int cr = e.reference.circuit.cnot_count() + mc.circuit.cnot_count();
        if (a.exact()) {
            a.trial_exact.push_back(noisy_exact_distribution(t, noise, ct, readout));
            a.reference_exact.push_back(noisy_exact_distribution(r, noise, cr, readout));
        } else {
            a.trial.push_back(sample(t, cfg.shots, noise, derive_seed(cfg.seed, "run/trial", b), ct));
            a.reference.push_back(sample(r, cfg.shots, noise, derive_seed(cfg.seed, "run/reference", b), cr));
        }
    }
    if (a.exact()) {
        a.exact_calibration = readout;
    } else {
        a.calibration_states = default_calibration_states(n);
        for (std::size_t s = 0; s < a.calibration_states.size(); ++s) {
            std::vector<double> pr(std::size_t{1} << n, 0.0);
            pr[a.calibration_states[s]] = 1.0;
            a.calibration.push_back(
                sample_distribution(pr, n, cfg.calibration_shots, noise.readout_only(), derive_seed(cfg.seed, "run/calibration", s)));
        }
    }
    return a;
}

/// Moments obtained from one state's per-basis distributions.
struct ProcessedState {
    Moments moments{};
    double acceptance = 1.0;  // mean over bases
    std::optional<Rdm> rdm;
};

/// QREM and clipping (optional), logical relabelling, post-selection
/// (optional), assembly, rescaling (optional), moments.
inline ProcessedState process_state(const Problem &p, const Experiment &e, const std::vector<Distribution> &physical,
                                    const AssignmentCalibration *cal, bool postselect, bool rescale) {
    std::vector<Distribution> logical;
    ProcessedState out;
    double acc = 0;
    for (std::size_t b = 0; b < physical.size(); ++b) {
        Distribution d = cal ? clip_to_physical(apply_qrem(physical[b], *cal)) : physical[b];
        d = to_logical(d, e.circuits[b].final_layout);
        if (postselect) {
            auto ps = symmetry_postselect(d, p.n_electrons, p.two_sz, p.spins);
            acc += ps.acceptance;
            d = std::move(ps.probabilities);
        } else {
            acc += 1.0;
        }
        logical.push_back(std::move(d));
    }
    out.acceptance = physical.empty() ? 1.0 : acc / static_cast<double>(physical.size());
    Rdm rdm = assemble_rdm(e.plan, e.circuits, logical, p.n_electrons);
    if (rescale) rdm = rescale_rdm(rdm);
    out.moments = moments_from_rdm(p.powers, rdm);
    out.rdm = std::move(rdm);
    return out;
}

struct StageSettings {
    bool qrem = false, postselect = false, rescale = false, calibrate = false;
};

struct StageResult {
    std::string name;
    StageSettings settings;
    Moments moments{};
    double h = 0.0;
    std::optional<double> e_l;
    std::string e_l_failure;
    double acceptance_trial = 1.0, acceptance_reference = 1.0;
    std::optional<double> q_hat;
    bool q_clamped = false;
    std::optional<Rdm> rdm;
};

/// Per-basis physical distributions of a run, and its readout calibration.
struct RunData {
    std::vector<Distribution> trial, reference;
    AssignmentCalibration calibration;
};

inline RunData run_data(const RunArchive &a) {
    RunData d;
    if (a.exact()) {
        d.trial = a.trial_exact;
        d.reference = a.reference_exact;
        d.calibration = a.exact_calibration;
        return d;
    }
    for (const auto &t : a.trial) d.trial.push_back(t.probabilities());
    for (const auto &t : a.reference) d.reference.push_back(t.probabilities());
    d.calibration = calibration_from_counts(a.calibration_states, a.calibration, a.n_qubits);
    return d;
}

/// Classical values the calibration needs.
struct ReferenceValues {
    Moments ideal_reference{};             // noiseless reference (theta = 0) moments
    std::array<std::array<Moments, 2>, 2> mixed{};  // [postselect][rescale]
};

inline ReferenceValues reference_values(const Problem &p, const Experiment &e) {
    ReferenceValues r;
    Statevector hf(p.n_qubits, p.ansatz.reference);
    for (int k = 0; k < 4; ++k) r.ideal_reference[k] = hf.expectation(p.powers[k]);
    // The maximally mixed state through the same post-processing as the data.
    std::vector<Distribution> uni(e.circuits.size(), uniform_distribution(p.n_qubits));
    for (int ps = 0; ps < 2; ++ps)
        for (int rs = 0; rs < 2; ++rs) r.mixed[ps][rs] = process_state(p, e, uni, nullptr, ps, rs).moments;
    return r;
}

inline StageResult analyze_stage(const std::string &name, const StageSettings &s, const Problem &p, const Experiment &e, const RunData &d,
                                 const ReferenceValues &rv) {
    StageResult r;
    r.name = name;
    r.settings = s;
    const AssignmentCalibration *cal = s.qrem ? &d.calibration : nullptr;
    auto trial = process_state(p, e, d.trial, cal, s.postselect, s.rescale);
    r.acceptance_trial = trial.acceptance;
    r.moments = trial.moments;
    r.rdm = std::move(trial.rdm);
    if (s.calibrate) {
        auto ref = process_state(p, e, d.reference, cal, s.postselect, s.rescale);
        r.acceptance_reference = ref.acceptance;
        const Moments &mixed = rv.mixed[s.postselect][s.rescale];
        auto first = reference_calibrate(trial.moments[0], ref.moments[0], rv.ideal_reference[0], mixed[0]);
        r.q_hat = first.q_hat;
        r.q_clamped = first.clamped;
        for (int k = 0; k < 4; ++k) r.moments[k] = correct_white_noise(trial.moments[k], first.q_hat, mixed[k]);
    }
    r.h = r.moments[0] + p.shift;
    try {
        r.e_l = lanczos_from_moments(r.moments) + p.shift;
    } catch (const NumericalError &ex) {
        r.e_l_failure = ex.what();
    }
    return r;
}

inline std::vector<std::pair<std::string, StageSettings>> ablation_stages() {
    return {{"raw", {false, false, false, false}},
            {"+qrem", {true, false, false, false}},
            {"+postselect", {true, true, false, false}},
            {"+rescale", {true, true, true, false}},
            {"+calibrated", {true, true, true, true}}};
}

inline StageSettings final_settings(const MitigationToggles &t) { return {t.qrem, t.postselect, t.rescale, t.calibrate}; }

/// Redraws every counts table of a sampled run.
inline RunArchive with_tables(const RunArchive &a, const std::vector<CountsTable> &tables) {
    RunArchive b = a;
    const std::size_t nb = a.trial.size();
    std::copy(tables.begin(), tables.begin() + nb, b.trial.begin());
    std::copy(tables.begin() + nb, tables.begin() + 2 * nb, b.reference.begin());
    std::copy(tables.begin() + 2 * nb, tables.end(), b.calibration.begin());
    return b;
}

struct AnalysisResult {
    std::vector<StageResult> ablation;
    StageResult final_stage;
    std::optional<double> q_hat_counts, q_hat_rdm;
    std::optional<BootstrapResult> bootstrap;
    double fci = 0.0;         // sector ground state of the moment-space Hamiltonian
    double fci_active = 0.0;  // sector ground state of the active Hamiltonian
    EnergyPair ideal;         // noiseless trial-state values from the statevector
};

inline std::optional<double> q_hat_of(const Problem &p, const Experiment &e, const RunData &d, const ReferenceValues &rv, bool rescale) {
    try {
        return analyze_stage("", {true, true, rescale, true}, p, e, d, rv).q_hat;
    } catch (const NumericalError &) {
        return std::nullopt;
    }
}

inline AnalysisResult analyze_run(const Problem &p, const Experiment &e, const RunArchive &a, const PipelineConfig &cfg) {
    if (a.n_bases() != e.circuits.size()) throw ConfigError("counts archive does not match the measurement plan");
    if (a.n_qubits != p.n_qubits) throw ConfigError("counts archive register width does not match the problem");
    AnalysisResult res;
    auto data = run_data(a);
    auto rv = reference_values(p, e);
    for (const auto &[name, s] : ablation_stages()) res.ablation.push_back(analyze_stage(name, s, p, e, data, rv));
    const auto fs = final_settings(cfg.mitigation);
    res.final_stage = analyze_stage("final", fs, p, e, data, rv);
    if (!res.final_stage.e_l) throw NumericalError("Lanczos energy undefined for the mitigated moments: " + res.final_stage.e_l_failure);
    res.q_hat_counts = q_hat_of(p, e, data, rv, false);
    res.q_hat_rdm = q_hat_of(p, e, data, rv, true);
    if (!a.exact() && cfg.bootstrap_resamples > 0) {
        std::vector<CountsTable> tables = a.trial;
        tables.insert(tables.end(), a.reference.begin(), a.reference.end());
        tables.insert(tables.end(), a.calibration.begin(), a.calibration.end());
        CountsEstimator est = [&](const std::vector<CountsTable> &t) {
            auto rd = run_data(with_tables(a, t));
            auto st = analyze_stage("bootstrap", fs, p, e, rd, rv);
            if (!st.e_l) throw NumericalError(st.e_l_failure);
            return EnergyPair{st.h, *st.e_l};
        };
        res.bootstrap = bootstrap(tables, est, cfg.bootstrap_resamples, derive_seed(cfg.seed, "bootstrap"));
    }
    res.fci = exact_diagonalize(p.h_moment, Sector{p.n_electrons + popcount(p.frozen_occupied_modes), p.two_sz,
                                                   SpinLabels::interleaved(p.h_moment.n_modes())})
                  .energy;
    res.fci_active = exact_diagonalize(p.h, p.sector()).energy;
    auto psi = trial_state(p.ansatz, a.theta, p.n_qubits);
    Moments m{};
    for (int k = 0; k < 4; ++k) m[k] = psi.expectation(p.powers[k]);
    res.ideal = estimate(m, p.shift);
    return res;
}

// ---- serialization

inline json counts_to_json(const CountsTable &t) {
    json j = json::object();
    for (const auto &[x, k] : t.counts) j[to_bitstring(x, t.n_bits)] = k;
    return j;
}

inline CountsTable counts_from_json(const json &j, int n) {
    CountsTable t;
    t.n_bits = n;
    for (const auto &[k, v] : j.items()) {
        if (static_cast<int>(k.size()) != n) throw ConfigError("counts bitstring '" + k + "' has the wrong width");
        t.counts[from_bitstring(k)] = v.get<std::uint64_t>();
    }
    return t;
}

inline json dist_to_json(const Distribution &d, int n) {
    json j = json::object();
    for (const auto &[x, v] : d) j[to_bitstring(x, n)] = v;
    return j;
}

inline Distribution dist_from_json(const json &j, int n) {
    Distribution d;
    for (const auto &[k, v] : j.items()) {
        if (static_cast<int>(k.size()) != n) throw ConfigError("probability bitstring '" + k + "' has the wrong width");
        d[from_bitstring(k)] = v.get<double>();
    }
    return d;
}

inline void write_json(const std::filesystem::path &path, const json &j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline json read_json(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// One JSON file per basis plus a manifest and the calibration data.
inline void write_archive(const std::filesystem::path &dir, const RunArchive &a, const Experiment &e) {
    std::filesystem::create_directories(dir);
    json files = json::array();
    for (std::size_t b = 0; b < a.n_bases(); ++b) {
        char name[32];
        std::snprintf(name, sizeof name, "basis_%04zu.json", b);
        json j{{"basis", b}, {"labels", e.plan.bases[b].label_string()}, {"final_layout", e.circuits[b].final_layout}};
        if (a.exact()) {
            j["trial_probabilities"] = dist_to_json(a.trial_exact[b], a.n_qubits);
            j["reference_probabilities"] = dist_to_json(a.reference_exact[b], a.n_qubits);
        } else {
            j["trial"] = counts_to_json(a.trial[b]);
            j["reference"] = counts_to_json(a.reference[b]);
        }
        write_json(dir / name, j);
        files.push_back(name);
    }
    json cal;
    if (a.exact()) {
        std::vector<double> p01, p10;
        for (int q = 0; q < a.n_qubits; ++q) {
            p01.push_back(a.exact_calibration.p01(q));
            p10.push_back(a.exact_calibration.p10(q));
        }
        cal = {{"p01", p01}, {"p10", p10}};
    } else {
        json tabs = json::array();
        for (std::size_t s = 0; s < a.calibration.size(); ++s)
            tabs.push_back({{"prepared", to_bitstring(a.calibration_states[s], a.n_qubits)}, {"counts", counts_to_json(a.calibration[s])}});
        cal = {{"tables", tabs}};
    }
    write_json(dir / "calibration.json", cal);
    write_json(dir / "manifest.json", {{"schema", kArchiveSchema},
                                       {"n_qubits", a.n_qubits},
                                       {"shots", a.shots},
                                       {"theta", a.theta},
                                       {"bases", files},
                                       {"trial_cnots", e.trial.circuit.cnot_count()}});
}

inline RunArchive read_archive(const std::filesystem::path &dir) {
    auto m = read_json(dir / "manifest.json");
    if (m.value("schema", "") != kArchiveSchema) throw ConfigError("counts archive schema must be " + std::string(kArchiveSchema));
    RunArchive a;
    try {
        a.n_qubits = m.at("n_qubits").get<int>();
        a.shots = m.at("shots").get<std::uint64_t>();
        a.theta = m.at("theta").get<std::vector<double>>();
        for (const auto &f : m.at("bases")) {
            auto j = read_json(dir / f.get<std::string>());
            if (a.exact()) {
                a.trial_exact.push_back(dist_from_json(j.at("trial_probabilities"), a.n_qubits));
                a.reference_exact.push_back(dist_from_json(j.at("reference_probabilities"), a.n_qubits));
            } else {
                a.trial.push_back(counts_from_json(j.at("trial"), a.n_qubits));
                a.reference.push_back(counts_from_json(j.at("reference"), a.n_qubits));
            }
        }
        auto cal = read_json(dir / "calibration.json");
        if (a.exact()) {
            a.exact_calibration = AssignmentCalibration::from_flips(cal.at("p01").get<std::vector<double>>(), cal.at("p10").get<std::vector<double>>());
        } else {
            for (const auto &t : cal.at("tables")) {
                a.calibration_states.push_back(from_bitstring(t.at("prepared").get<std::string>()));
                a.calibration.push_back(counts_from_json(t.at("counts"), a.n_qubits));
            }
        }
    } catch (const json::exception &e) {
        throw ConfigError(dir.string() + ": malformed counts archive: " + e.what());
    }
    return a;
}

inline json optional_number(const std::optional<double> &v) { return v ? json(*v) : json(nullptr); }

inline json stage_to_json(const StageResult &s, const AnalysisResult &r) {
    json j{{"stage", s.name},
           {"qrem", s.settings.qrem},
           {"postselect", s.settings.postselect},
           {"rescale", s.settings.rescale},
           {"calibrate", s.settings.calibrate},
           {"h", s.h},
           {"h_error", s.h - r.fci},
           {"e_l", optional_number(s.e_l)},
           {"e_l_error", s.e_l ? json(*s.e_l - r.fci) : json(nullptr)},
           {"acceptance_trial", s.acceptance_trial},
           {"moments", s.moments}};
    if (s.settings.calibrate) {
        j["acceptance_reference"] = s.acceptance_reference;
        j["q_hat"] = optional_number(s.q_hat);
        j["q_hat_clamped"] = s.q_clamped;
    }
    if (!s.e_l_failure.empty()) j["e_l_failure"] = s.e_l_failure;
    return j;
}

inline json report_to_json(const Problem &p, const Experiment &e, const RunArchive &a, const AnalysisResult &r, const PipelineConfig &cfg) {
    json j;
    j["schema"] = kReportSchema;
    j["system"] = {{"qubits", p.n_qubits},
                   {"electrons", p.n_electrons},
                   {"two_sz", p.two_sz},
                   {"rdm_order", p.order},
                   {"hartree_fock", p.hf_energy},
                   {"shift", p.shift},
                   {"fci", r.fci},
                   {"fci_active", r.fci_active}};
    j["circuits"] = {{"excitations", p.ansatz.excitations.size()},
                     {"theta", a.theta},
                     {"trial_cnots", e.trial.circuit.cnot_count()},
                     {"trial_depth", e.trial.circuit.depth()},
                     {"reference_cnots", e.reference.circuit.cnot_count()}};
    j["plan"] = plan_summary(e.plan, e.circuits);
    j["sampling"] = {{"shots_per_basis", a.shots},
                     {"total_shots", a.shots * 2 * a.n_bases() + (a.exact() ? 0 : cfg.calibration_shots * a.calibration.size())},
                     {"global_q", cfg.global_q},
                     {"cnot_depolarizing", cfg.cnot_depolarizing},
                     {"readout_p01", cfg.readout_p01},
                     {"readout_p10", cfg.readout_p10},
                     {"seed", cfg.seed}};
    j["mitigation"] = {{"qrem", cfg.mitigation.qrem},
                       {"postselect", cfg.mitigation.postselect},
                       {"rescale", cfg.mitigation.rescale},
                       {"calibrate", cfg.mitigation.calibrate},
                       {"q_hat_counts_path", optional_number(r.q_hat_counts)},
                       {"q_hat_rdm_path", optional_number(r.q_hat_rdm)}};
    j["ideal"] = {{"h", r.ideal.h}, {"e_l", r.ideal.e_l}, {"h_error", r.ideal.h - r.fci}, {"e_l_error", r.ideal.e_l - r.fci}};
    j["estimate"] = stage_to_json(r.final_stage, r);
    if (r.bootstrap) {
        const auto &b = *r.bootstrap;
        auto q = [](const std::vector<double> &v) {
            return json{BootstrapResult::quantile(v, 0.16), BootstrapResult::quantile(v, 0.5), BootstrapResult::quantile(v, 0.84)};
        };
        j["bootstrap"] = {{"resamples", b.resamples}, {"failures", b.failures}, {"mean_h", b.mean_h},     {"std_h", b.std_h},
                          {"mean_e_l", b.mean_el},    {"std_e_l", b.std_el},    {"quantiles_h", q(b.samples_h)}, {"quantiles_e_l", q(b.samples_el)}};
    } else {
        j["bootstrap"] = nullptr;
    }
    if (r.final_stage.rdm) {
        auto rep = check_representability(*r.final_stage.rdm);
        j["representability"] = {{"hermiticity", rep.hermiticity},       {"antisymmetry", rep.antisymmetry}, {"trace", rep.trace},
                                 {"min_eigenvalue", rep.min_eigenvalue}, {"pauli_violation", rep.pauli_violation}};
    }
    json ab = json::array();
    for (const auto &s : r.ablation) ab.push_back(stage_to_json(s, r));
    j["ablation"] = ab;
    return j;
}

inline std::string ablation_csv(const AnalysisResult &r) {
    std::ostringstream o;
    o.precision(17);
    o << "stage,estimator,energy,error\n";
    for (const auto &s : r.ablation) {
        o << s.name << ",h," << s.h << ',' << s.h - r.fci << '\n';
        o << s.name << ",e_l,";
        if (s.e_l)
            o << *s.e_l << ',' << *s.e_l - r.fci << '\n';
        else
            o << ",\n";
    }
    return o.str();
}

inline void write_text(const std::filesystem::path &path, const std::string &text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

struct PipelineOutcome {
    json report;
    std::string csv;
    AnalysisResult analysis;
};

/// All stages in sequence. Files go to cfg.output when `write_files`.
inline PipelineOutcome run_pipeline(const PipelineConfig &cfg, bool write_files = true) {
    auto p = build_problem(cfg);
    auto opt = optimize_ansatz(p, cfg);
    auto e = build_experiment(p, opt.theta, route_options(cfg));
    auto a = run_experiment(p, e, opt.theta, cfg);
    PipelineOutcome out;
    out.analysis = analyze_run(p, e, a, cfg);
    out.report = report_to_json(p, e, a, out.analysis, cfg);
    out.csv = ablation_csv(out.analysis);
    if (write_files) {
        write_json(cfg.output / "plan.json", plan_to_json(e.plan, e.circuits));
        write_json(cfg.output / "theta.json", {{"theta", opt.theta}, {"energy", opt.energy}});
        write_archive(cfg.output / "counts", a, e);
        write_json(cfg.output / "report.json", out.report);
        write_text(cfg.output / "ablation.csv", out.csv);
    }
    return out;
}

}  // namespace qcm

#endif
