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

#ifndef QCM_QCM_HPP
#define QCM_QCM_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "qcm/core.hpp"
#include "qcm/fermion.hpp"
#include "qcm/rdm.hpp"
#include "qcm/simulator.hpp"

namespace qcm {

/// <H>, <H^2>, <H^3>, <H^4>.
using Moments = std::array<double, 4>;
using Cumulants = std::array<double, 4>;

/// Connected moments from raw moments:
///   c_p = m_p - sum_{j=0}^{p-2} C(p-1, j) c_{j+1} m_{p-1-j}.
inline Cumulants cumulants(const Moments &m) {
    Cumulants c{};
    auto mom = [&](int k) { return k == 0 ? 1.0 : m[k - 1]; };
    for (int p = 1; p <= 4; ++p) {
        double s = mom(p);
        double binom = 1;  // C(p-1, j)
        for (int j = 0; j <= p - 2; ++j) {
            s -= binom * c[j] * mom(p - 1 - j);
            binom = binom * (p - 1 - j) / (j + 1);
        }
        c[p - 1] = s;
    }
    return c;
}

/// Lanczos-corrected energy
///   E_L = c1 - c2^2 / (c3^2 - c2 c4) * (sqrt(3 c3^2 - 2 c2 c4) - c3),
/// evaluated as c1 - 2 c2^2 / (sqrt(3 c3^2 - 2 c2 c4) + c3), which is the
/// same value without the 0/0 at c3^2 = c2 c4.
inline double lanczos_energy(const Cumulants &c) {
    const double scale = std::max(1.0, c[0] * c[0]);
    if (std::abs(c[1]) < 1e-9 * scale) return c[0];
    double disc = 3 * c[2] * c[2] - 2 * c[1] * c[3];
    if (disc < 0) {
        if (disc < -1e-9 * std::max(1.0, 3 * c[2] * c[2] + std::abs(2 * c[1] * c[3])))
            throw NumericalError("negative discriminant in the Lanczos energy (inconsistent moments)");
        disc = 0;
    }
    const double den = std::sqrt(disc) + c[2];
    if (std::abs(den) < 1e-300 || !std::isfinite(den)) throw NumericalError("singular Lanczos energy denominator");
    return c[0] - 2 * c[1] * c[1] / den;
}

inline double lanczos_from_moments(const Moments &m) { return lanczos_energy(cumulants(m)); }

/// H, H^2, ..., H^k.
inline std::vector<FermionOperator> hamiltonian_powers(const FermionOperator &h, int k = 4) {
    std::vector<FermionOperator> out{h};
    for (int p = 2; p <= k; ++p) out.push_back(out.back() * h);
    return out;
}

/// Moments evaluated on an RDM; terms above the electron count vanish.
inline Moments moments_from_rdm(const std::vector<FermionOperator> &powers, const Rdm &rdm) {
    if (powers.size() != 4) throw std::invalid_argument("four Hamiltonian powers required");
    RdmHierarchy h(rdm);
    Moments m{};
    for (int p = 0; p < 4; ++p) m[p] = expectation_from_rdm(powers[p], h).real();
    return m;
}

inline Moments moments_from_state(const FermionOperator &h, const Statevector &psi) {
    auto v = exact_moments(h, psi, 4);
    return {v[0], v[1], v[2], v[3]};
}

/// Both energy estimators.
struct EnergyPair {
    double h = 0.0;    // <H>
    double e_l = 0.0;  // Lanczos-corrected
};

/// Estimators from moments of H - shift. Evaluating about a shift close to
/// the energy avoids the cancellation in cumulants of large raw moments.
inline EnergyPair estimate(const Moments &m, double shift = 0.0) { return {m[0] + shift, lanczos_from_moments(m) + shift}; }

/// H - shift.
inline FermionOperator shifted(const FermionOperator &h, double shift) { return h - FermionOperator::identity(h.n_modes(), shift); }

/// Moments of (1-q) rho + q sigma given the moments of rho and sigma.
inline Moments mix_moments(const Moments &clean, const Moments &mixed, double q) {
    Moments out{};
    for (int k = 0; k < 4; ++k) out[k] = (1 - q) * clean[k] + q * mixed[k];
    return out;
}

/// Multinomial redraw of a counts table at its own shot count.
inline CountsTable resample_counts(const CountsTable &t, std::mt19937_64 &rng) {
    CountsTable out;
    out.n_bits = t.n_bits;
    std::uint64_t left = t.total();
    double mass = 1.0;
    const double total = static_cast<double>(left);
    for (auto it = t.counts.begin(); it != t.counts.end() && left > 0; ++it) {
        double p = it->second / total;
        std::uint64_t k;
        if (std::next(it) == t.counts.end() || p >= mass) {
            k = left;
        } else {
            std::binomial_distribution<std::uint64_t> b(left, std::clamp(p / mass, 0.0, 1.0));
            k = b(rng);
        }
        if (k) out.counts[it->first] = k;
        left -= k;
        mass -= p;
    }
    return out;
}

struct BootstrapResult {
    int resamples = 0;
    int failures = 0;
    double mean_h = 0.0, std_h = 0.0;
    double mean_el = 0.0, std_el = 0.0;
    std::vector<double> samples_h, samples_el;  // in resample order

    /// Empirical quantile (linear interpolation), 0 <= f <= 1.
    static double quantile(std::vector<double> v, double f) {
        if (v.empty()) throw std::invalid_argument("no samples");
        std::sort(v.begin(), v.end());
        double pos = f * static_cast<double>(v.size() - 1);
        auto lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    }
};

using CountsEstimator = std::function<EnergyPair(const std::vector<CountsTable> &)>;

/// Redraws every counts table independently and reruns `estimator`.
/// Resamples that throw NumericalError are excluded; more than 10% failures
/// is an error.
inline BootstrapResult bootstrap(const std::vector<CountsTable> &tables, const CountsEstimator &estimator, int resamples,
                                 std::uint64_t seed) {
    if (resamples < 2) throw std::invalid_argument("bootstrap needs at least two resamples");
    BootstrapResult r;
    r.resamples = resamples;
    std::vector<double> hs, els;
    for (int s = 0; s < resamples; ++s) {
        std::mt19937_64 rng(derive_seed(seed, "bootstrap", static_cast<std::uint64_t>(s)));
        std::vector<CountsTable> redrawn;
        redrawn.reserve(tables.size());
        for (const auto &t : tables) redrawn.push_back(resample_counts(t, rng));
        try {
            auto e = estimator(redrawn);
            hs.push_back(e.h);
            els.push_back(e.e_l);
        } catch (const NumericalError &) {
            ++r.failures;
        }
    }
    if (r.failures * 10 > resamples) throw NumericalError("more than 10% of bootstrap resamples failed");
    auto stats = [](const std::vector<double> &v, double &mean, double &sd) {
        mean = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double ss = 0;
        for (double x : v) ss += (x - mean) * (x - mean);
        sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    };
    stats(hs, r.mean_h, r.std_h);
    stats(els, r.mean_el, r.std_el);
    r.samples_h = std::move(hs);
    r.samples_el = std::move(els);
    return r;
}

}  // namespace qcm

#endif
