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

#ifndef QCM_SPSA_HPP
#define QCM_SPSA_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "qcm/core.hpp"

namespace qcm {

/// Gain schedule a_k = a / (k + 1 + A)^alpha, c_k = c / (k + 1)^gamma.
struct SpsaOptions {
    int max_iterations = 200;
    double a = 0.1;
    double c = 0.1;
    double A = 10.0;
    double alpha = 0.602;
    double gamma = 0.101;
    int average_last = 10;
};

struct SpsaRun {
    std::uint64_t seed = 0;
    std::vector<double> theta;
    double value = 0.0;
    std::vector<double> trace;  // objective after every iteration
};

struct SpsaResult {
    std::vector<double> theta;
    double value = 0.0;
    std::size_t best_run = 0;
    std::vector<SpsaRun> runs;
};

using Objective = std::function<double(const std::vector<double> &)>;

/// One SPSA run; the returned parameters average the last iterates.
inline SpsaRun spsa_run(const Objective &f, std::vector<double> theta, std::uint64_t seed, const SpsaOptions &opt) {
    if (opt.max_iterations < 0 || opt.average_last < 1) throw std::invalid_argument("invalid SPSA options");
    std::mt19937_64 rng(seed);
    const std::size_t d = theta.size();
    SpsaRun run;
    run.seed = seed;
    std::vector<double> avg(d, 0.0);
    int n_avg = 0;
    std::vector<double> plus(d), minus(d), delta(d);
    for (int k = 0; k < opt.max_iterations; ++k) {
        double ak = opt.a / std::pow(k + 1 + opt.A, opt.alpha);
        double ck = opt.c / std::pow(k + 1, opt.gamma);
        for (std::size_t i = 0; i < d; ++i) {
            delta[i] = (rng() >> 63) ? 1.0 : -1.0;
            plus[i] = theta[i] + ck * delta[i];
            minus[i] = theta[i] - ck * delta[i];
        }
        double diff = (f(plus) - f(minus)) / (2 * ck);
        for (std::size_t i = 0; i < d; ++i) theta[i] -= ak * diff * delta[i];
        run.trace.push_back(f(theta));
        if (k >= opt.max_iterations - opt.average_last) {
            for (std::size_t i = 0; i < d; ++i) avg[i] += theta[i];
            ++n_avg;
        }
    }
    if (n_avg > 0)
        for (std::size_t i = 0; i < d; ++i) theta[i] = avg[i] / n_avg;
    run.theta = theta;
    run.value = f(theta);
    return run;
}

/// Runs SPSA from `theta0` once per seed and keeps the lowest final value.
inline SpsaResult spsa_minimize(const Objective &f, const std::vector<double> &theta0, const std::vector<std::uint64_t> &seeds,
                                const SpsaOptions &opt = {}) {
    if (seeds.empty()) throw std::invalid_argument("at least one seed required");
    SpsaResult res;
    res.value = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        res.runs.push_back(spsa_run(f, theta0, seeds[s], opt));
        if (res.runs.back().value < res.value) {
            res.value = res.runs.back().value;
            res.theta = res.runs.back().theta;
            res.best_run = s;
        }
    }
    return res;
}

}  // namespace qcm

#endif
