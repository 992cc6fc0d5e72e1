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

// qcm: command-line front end for the pipeline.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error,
// 3 numerical failure.

#include <iostream>

#include "CLI11.hpp"
#include "qcm/pipeline.hpp"

namespace {

using namespace qcm;

SpinLabels parse_spins(const std::string &pattern, int n) {
    if (pattern == "interleaved") return SpinLabels::interleaved(n);
    if (pattern == "blocked") return SpinLabels::blocked(n);
    std::vector<int> v;
    std::stringstream ss(pattern);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok != "0" && tok != "1") throw ConfigError("--spin-pattern: expected interleaved, blocked or a comma list of 0/1");
        v.push_back(tok == "1");
    }
    if (static_cast<int>(v.size()) != n) throw ConfigError("--spin-pattern lists " + std::to_string(v.size()) + " modes, expected " + std::to_string(n));
    return SpinLabels::from_ints(v);
}

std::vector<double> read_theta(const std::string &path, const PipelineConfig &cfg) {
    if (path.empty()) return cfg.theta;
    auto j = read_json(path);
    try {
        auto t = j.at("theta").get<std::vector<double>>();
        if (t.size() != cfg.excitations.size()) throw ConfigError(path + ": angle count does not match the ansatz");
        return t;
    } catch (const json::exception &e) {
        throw ConfigError(path + ": " + e.what());
    }
}

int run_app(int argc, char **argv) {
    CLI::App app{"Quantum computed moments pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_path, theta_path, counts_path, fcidump;
    std::optional<std::uint64_t> seed;
    int modes = 0, order = 0, ilp_max_depth = 64, power = 1;
    std::string spin_pattern = "interleaved";

    auto *plan = app.add_subcommand("plan", "Build the measurement plan");
    plan->add_option("--config", config_path, "Pipeline config (JSON)");
    plan->add_option("--modes", modes, "Number of modes (without --config)");
    plan->add_option("--order", order, "RDM order (without --config)");
    plan->add_option("--spin-pattern", spin_pattern, "interleaved, blocked, or comma list of 0 (up) / 1 (down)");
    plan->add_option("--ilp-max-depth", ilp_max_depth, "Routing depth bound");
    plan->add_option("--out", out_path, "Plan JSON path");

    auto *optimize = app.add_subcommand("optimize", "Noiseless SPSA on the trial energy");
    optimize->add_option("--config", config_path)->required();
    optimize->add_option("--out", out_path, "Parameter JSON path");

    auto *run = app.add_subcommand("run", "Sample the trial and reference circuits in every basis");
    run->add_option("--config", config_path)->required();
    run->add_option("--theta", theta_path, "Parameter JSON (default: config angles)");
    run->add_option("--out", out_path, "Counts archive directory");

    auto *analyze = app.add_subcommand("analyze", "Mitigate, assemble RDMs and estimate energies");
    analyze->add_option("--config", config_path)->required();
    analyze->add_option("--counts", counts_path, "Counts archive directory")->required();
    analyze->add_option("--out", out_path, "Output directory for report.json and ablation.csv");

    auto *fci = app.add_subcommand("fci", "Sector ground-state energies");
    fci->add_option("--config", config_path);
    fci->add_option("--fcidump", fcidump);

    auto *ham = app.add_subcommand("ham", "Dump the Hamiltonian or one of its powers");
    ham->add_option("--fcidump", fcidump)->required();
    ham->add_option("--power", power, "Power of H")->check(CLI::Range(1, 4));
    ham->add_option("--out", out_path, "Operator text path (default stdout)");

    auto *pipeline = app.add_subcommand("pipeline", "plan, optimize, run and analyze in one go");
    pipeline->add_option("--config", config_path)->required();
    pipeline->add_option("--seed", seed, "Override the master seed");
    pipeline->add_option("--out", out_path, "Override the output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (plan->parsed()) {
        MeasurementPlan mp;
        std::vector<MeasurementCircuit> circuits;
        if (!config_path.empty()) {
            auto cfg = load_config(config_path);
            auto p = build_problem(cfg, false);
            auto e = build_experiment(p, cfg.theta, route_options(cfg));
            mp = std::move(e.plan);
            circuits = std::move(e.circuits);
            if (out_path.empty()) out_path = (cfg.output / "plan.json").string();
        } else {
            if (modes < 1 || modes > 20 || order < 1 || order > modes) throw ConfigError("plan needs --config or valid --modes and --order");
            mp = plan_measurements(modes, order, parse_spins(spin_pattern, modes));
            RouteOptions ro;
            ro.max_depth = ilp_max_depth;
            for (const auto &b : mp.bases) circuits.push_back(build_measurement_circuit(b, identity_layout(modes), ro));
        }
        auto j = plan_to_json(mp, circuits);
        if (!out_path.empty()) write_json(out_path, j);
        std::cout << j["summary"].dump(2) << '\n';
    } else if (optimize->parsed()) {
        auto cfg = load_config(config_path);
        auto p = build_problem(cfg, false);
        auto r = optimize_ansatz(p, cfg);
        json traces = json::array();
        for (const auto &run : r.spsa.runs)
            traces.push_back({{"seed", run.seed}, {"value", run.value}, {"theta", run.theta}, {"trace", run.trace}});
        json j{{"theta", r.theta}, {"energy", r.energy}, {"runs", traces}};
        write_json(out_path.empty() ? cfg.output / "theta.json" : std::filesystem::path(out_path), j);
        std::cout << json{{"theta", r.theta}, {"energy", r.energy}}.dump(2) << '\n';
    } else if (run->parsed()) {
        auto cfg = load_config(config_path);
        auto p = build_problem(cfg, false);
        auto theta = read_theta(theta_path, cfg);
        auto e = build_experiment(p, theta, route_options(cfg));
        auto a = run_experiment(p, e, theta, cfg);
        std::filesystem::path dir = out_path.empty() ? cfg.output / "counts" : std::filesystem::path(out_path);
        write_archive(dir, a, e);
        std::cout << json{{"bases", a.n_bases()}, {"shots_per_basis", a.shots}, {"archive", dir.string()}}.dump(2) << '\n';
    } else if (analyze->parsed()) {
        auto cfg = load_config(config_path);
        auto p = build_problem(cfg);
        auto a = read_archive(counts_path);
        if (a.theta.size() != p.ansatz.excitations.size()) throw ConfigError("counts archive angles do not match the ansatz");
        auto e = build_experiment(p, a.theta, route_options(cfg));
        auto r = analyze_run(p, e, a, cfg);
        auto report = report_to_json(p, e, a, r, cfg);
        std::filesystem::path dir = out_path.empty() ? cfg.output : std::filesystem::path(out_path);
        write_json(dir / "report.json", report);
        write_text(dir / "ablation.csv", ablation_csv(r));
        std::cout << report["estimate"].dump(2) << '\n';
    } else if (fci->parsed()) {
        json j;
        if (!config_path.empty()) {
            auto cfg = load_config(config_path);
            auto p = build_problem(cfg, false);
            j["active"] = exact_diagonalize(p.h, p.sector()).energy;
            j["moment_space"] = exact_diagonalize(p.h_moment, Sector{p.n_electrons + popcount(p.frozen_occupied_modes), p.two_sz,
                                                                     SpinLabels::interleaved(p.h_moment.n_modes())})
                                    .energy;
            j["hartree_fock"] = p.hf_energy;
        } else if (!fcidump.empty()) {
            auto ints = load_fcidump(fcidump);
            auto h = molecular_hamiltonian(ints);
            j["fci"] = exact_diagonalize(h, Sector{ints.nelec(), ints.ms2(), SpinLabels::interleaved(ints.n_modes())}).energy;
        } else {
            throw ConfigError("fci needs --config or --fcidump");
        }
        std::cout << j.dump(2) << '\n';
    } else if (ham->parsed()) {
        auto h = molecular_hamiltonian(load_fcidump(fcidump));
        auto text = h.power(power).to_text();
        if (out_path.empty())
            std::cout << text;
        else
            write_text(out_path, text);
    } else if (pipeline->parsed()) {
        auto cfg = load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (!out_path.empty()) cfg.output = out_path;
        auto out = run_pipeline(cfg);
        std::cout << out.report["estimate"].dump(2) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    try {
        return run_app(argc, argv);
    } catch (const qcm::ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const qcm::NumericalError &e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
