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

#ifndef QCM_MITIGATION_HPP
#define QCM_MITIGATION_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "qcm/core.hpp"
#include "qcm/measurement.hpp"
#include "qcm/rdm.hpp"
#include "qcm/simulator.hpp"

namespace qcm {

/// Sparse (quasi-)probability distribution over measured bitstrings.
using Distribution = std::map<Mask, double>;

/// Per-qubit assignment matrices A[measured][true] and their inverses.
struct AssignmentCalibration {
    std::vector<Eigen::Matrix2d> matrices;
    std::vector<Eigen::Matrix2d> inverses;

    int n_qubits() const { return static_cast<int>(matrices.size()); }

    static AssignmentCalibration identity(int n) {
        AssignmentCalibration c;
        c.matrices.assign(n, Eigen::Matrix2d::Identity());
        c.inverses = c.matrices;
        return c;
    }

    /// Builds the calibration from per-qubit flip probabilities.
    static AssignmentCalibration from_flips(const std::vector<double> &p01, const std::vector<double> &p10) {
        if (p01.size() != p10.size()) throw std::invalid_argument("flip vectors differ in length");
        AssignmentCalibration c;
        for (std::size_t j = 0; j < p01.size(); ++j) {
            if (p01[j] >= 0.5 || p10[j] >= 0.5)
                throw NumericalError("readout assignment matrix for qubit " + std::to_string(j) + " is not invertible (flip >= 0.5)");
            Eigen::Matrix2d m;
            m << 1 - p01[j], p10[j], p01[j], 1 - p10[j];
            c.matrices.push_back(m);
            c.inverses.push_back(m.inverse());
        }
        return c;
    }

    double p01(int j) const { return matrices.at(j)(1, 0); }
    double p10(int j) const { return matrices.at(j)(0, 1); }
};

/// Per-qubit flip rates estimated from counts of prepared basis states.
/// Each table must come from preparing the matching entry of `prepared`.
inline AssignmentCalibration calibration_from_counts(const std::vector<Mask> &prepared, const std::vector<CountsTable> &tables, int n) {
    if (prepared.size() != tables.size() || prepared.empty()) throw std::invalid_argument("one counts table per prepared state required");
    std::vector<double> flips0(n, 0.0), seen0(n, 0.0), flips1(n, 0.0), seen1(n, 0.0);
    for (std::size_t s = 0; s < prepared.size(); ++s) {
        if (tables[s].n_bits != n) throw std::invalid_argument("calibration counts have the wrong width");
        for (const auto &[x, k] : tables[s].counts)
            for (int j = 0; j < n; ++j) {
                bool truth = has_bit(prepared[s], j);
                bool flipped = has_bit(x, j) != truth;
                (truth ? seen1 : seen0)[j] += k;
                if (flipped) (truth ? flips1 : flips0)[j] += k;
            }
    }
    std::vector<double> p01(n), p10(n);
    for (int j = 0; j < n; ++j) {
        if (seen0[j] == 0 || seen1[j] == 0) throw std::invalid_argument("calibration states must prepare each qubit in both values");
        p01[j] = flips0[j] / seen0[j];
        p10[j] = flips1[j] / seen1[j];
    }
    return AssignmentCalibration::from_flips(p01, p10);
}

/// Calibration states used by default: all zeros and all ones.
inline std::vector<Mask> default_calibration_states(int n) { return {0, low_mask(n)}; }

/// Samples the calibration states under the readout part of `noise` and
/// estimates the assignment matrices.
inline AssignmentCalibration calibrate_readout(const NoiseSpec &noise, int n, std::uint64_t shots, std::uint64_t seed) {
    if (shots < 1) throw std::invalid_argument("calibration needs at least one shot");
    auto states = default_calibration_states(n);
    std::vector<CountsTable> tables;
    for (std::size_t s = 0; s < states.size(); ++s) {
        std::vector<double> p(std::size_t{1} << n, 0.0);
        p[states[s]] = 1.0;
        tables.push_back(sample_distribution(p, n, shots, noise.readout_only(), derive_seed(seed, "calibration", s)));
    }
    return calibration_from_counts(states, tables, n);
}

namespace detail {

inline Distribution apply_per_qubit(const Distribution &p, const std::vector<Eigen::Matrix2d> &mats, int dense_limit) {
    const int n = static_cast<int>(mats.size());
    std::vector<Mask> support;
    if (n <= dense_limit) {
        for (Mask x = 0; x < (Mask{1} << n); ++x) support.push_back(x);
    } else {
        std::set<Mask> s;
        for (const auto &[x, v] : p) {
            s.insert(x);
            for (int j = 0; j < n; ++j) s.insert(x ^ bit(j));
        }
        support.assign(s.begin(), s.end());
    }
    Distribution cur = p;
    for (int j = 0; j < n; ++j) {
        const auto &m = mats[j];
        if (m.isIdentity(0.0)) continue;
        Distribution next;
        for (Mask y : support) {
            Mask y0 = y & ~bit(j), y1 = y | bit(j);
            auto get = [&](Mask x) {
                auto it = cur.find(x);
                return it == cur.end() ? 0.0 : it->second;
            };
            double v = m(has_bit(y, j), 0) * get(y0) + m(has_bit(y, j), 1) * get(y1);
            if (v != 0.0) next[y] = v;
        }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace detail

/// Applies the tensor product of per-qubit inverses. Registers up to
/// `dense_limit` qubits are inverted over the full outcome space; wider
/// registers only keep the observed outcomes and their single-bit flips.
inline Distribution apply_qrem(const Distribution &p, const AssignmentCalibration &cal, int dense_limit = 12) {
    return detail::apply_per_qubit(p, cal.inverses, dense_limit);
}

/// Forward readout channel: the distribution a noisy readout reports.
inline Distribution apply_readout(const Distribution &p, const AssignmentCalibration &cal, int dense_limit = 12) {
    return detail::apply_per_qubit(p, cal.matrices, dense_limit);
}

inline Distribution apply_qrem(const CountsTable &counts, const AssignmentCalibration &cal, int dense_limit = 12) {
    if (counts.n_bits != cal.n_qubits()) throw std::invalid_argument("calibration does not cover the register");
    return apply_qrem(counts.probabilities(), cal, dense_limit);
}

/// Relabels physical outcomes as logical bitstrings.
inline Distribution to_logical(const Distribution &physical, const Layout &layout) {
    Distribution out;
    for (const auto &[x, v] : physical) out[to_logical_bits(x, layout)] += v;
    return out;
}

inline Distribution from_vector(const std::vector<double> &p) {
    Distribution d;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] != 0.0) d[i] = p[i];
    return d;
}

inline Distribution uniform_distribution(int n) {
    Distribution d;
    const double w = std::ldexp(1.0, -n);
    for (Mask x = 0; x < (Mask{1} << n); ++x) d[x] = w;
    return d;
}

/// Zeroes negative entries and spreads their mass evenly over the positive
/// entries, repeating until nothing is negative.
inline Distribution clip_to_physical(const Distribution &quasi) {
    double total = 0;
    for (const auto &[x, v] : quasi) total += v;
    if (std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("quasi-distribution does not sum to one");
    Distribution p;
    for (const auto &[x, v] : quasi)
        if (v > 0) p[x] = v;
    if (p.empty()) throw NumericalError("quasi-distribution has no positive entries");
    double deficit = 1.0 - std::accumulate(p.begin(), p.end(), 0.0, [](double s, const auto &kv) { return s + kv.second; });
    while (deficit < -1e-15) {
        double share = deficit / static_cast<double>(p.size());
        double lost = 0;
        for (auto it = p.begin(); it != p.end();) {
            it->second += share;
            if (it->second <= 0) {
                lost += it->second;
                it = p.erase(it);
            } else {
                ++it;
            }
        }
        if (p.empty()) throw NumericalError("clipping removed every outcome");
        deficit = lost;
    }
    // Final renormalization absorbs rounding.
    double s = 0;
    for (const auto &[x, v] : p) s += v;
    for (auto &[x, v] : p) v /= s;
    return p;
}

struct PostselectResult {
    Distribution probabilities;
    double acceptance = 0.0;
};

/// Keeps outcomes with the right electron count and spin projection, then
/// renormalizes.
inline PostselectResult symmetry_postselect(const Distribution &p, int n_electrons, int two_sz, const SpinLabels &spins) {
    Sector sector{n_electrons, two_sz, spins};
    PostselectResult r;
    double total = 0;
    for (const auto &[x, v] : p) {
        total += v;
        if (sector.contains(x)) {
            r.probabilities[x] = v;
            r.acceptance += v;
        }
    }
    if (r.acceptance <= 0) throw NumericalError("post-selection accepted no outcomes");
    for (auto &[x, v] : r.probabilities) v /= r.acceptance;
    if (total > 0) r.acceptance /= total;
    return r;
}

/// RDM from per-basis outcome distributions over logical bits. Entry values
/// are the real parts of the elements.
inline Rdm assemble_rdm(const MeasurementPlan &plan, const std::vector<MeasurementCircuit> &circuits,
                        const std::vector<Distribution> &logical, int n_electrons) {
    if (circuits.size() != plan.bases.size() || logical.size() != plan.bases.size())
        throw std::invalid_argument("one circuit and distribution per measurement basis required");
    Rdm rdm(plan.n_modes, plan.order, n_electrons);
    for (std::size_t ei = 0; ei < plan.elements.size(); ++ei) {
        if (plan.products[ei].empty()) throw std::invalid_argument("element has no measurement coverage");
        double v = 0;
        for (const auto &pp : plan.products[ei]) {
            if (pp.basis >= logical.size()) throw std::invalid_argument("product refers to a missing basis");
            const auto &mc = circuits[pp.basis];
            for (const auto &[x, w] : logical[pp.basis]) v += w * product_value(pp.product, x, mc);
        }
        rdm.set(plan.elements[ei].cre, plan.elements[ei].ann, v);
    }
    return rdm;
}

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

/// Scales the RDM so its trace equals C(N, p).
inline Rdm rescale_rdm(const Rdm &rdm) {
    const double ideal = binomial(rdm.n_electrons(), rdm.order());
    const double t = rdm.trace();
    if (ideal == 0.0) return rdm;
    if (std::abs(t) < 1e-6 * ideal) throw NumericalError("RDM trace vanishes; cannot rescale");
    return rdm.scaled(ideal / t);
}

struct RepresentabilityReport {
    double hermiticity = 0.0;     // max |D(C,A) - conj D(A,C)| over stored pairs
    double antisymmetry = 0.0;    // max deviation of explicit ordered entries
    double contraction = 0.0;     // max deviation from the supplied lower RDM
    double trace = 0.0;           // |Tr D - C(N,p)|
    double min_eigenvalue = 0.0;  // of the matricized RDM
    double pauli_violation = 0.0; // 1-RDM occupations outside [0,1]
};

/// Necessary conditions on an RDM. `lower`, when given, is an independently
/// obtained lower-order RDM compared with the contraction of `rdm`.
inline RepresentabilityReport check_representability(const Rdm &rdm, const Rdm *lower = nullptr) {
    RepresentabilityReport r;
    for (const auto &[k, v] : rdm.entries()) {
        auto it = rdm.entries().find({k.second, k.first});
        if (it != rdm.entries().end()) r.hermiticity = std::max(r.hermiticity, std::abs(v - std::conj(it->second)));
        if (k.first == k.second) r.hermiticity = std::max(r.hermiticity, std::abs(v.imag()));
    }
    for (const auto &[t, v] : rdm.raw_entries()) {
        int s = sort_sign(t.first) * sort_sign(t.second);
        cplx canonical = s == 0 ? 0.0 : static_cast<double>(s) * rdm.value(mask_of(t.first), mask_of(t.second));
        r.antisymmetry = std::max(r.antisymmetry, std::abs(v - canonical));
    }
    r.trace = std::abs(rdm.trace() - binomial(rdm.n_electrons(), rdm.order()));
    r.min_eigenvalue = rdm.min_eigenvalue();
    if (rdm.order() >= 1 && rdm.n_electrons() >= rdm.order()) {
        RdmHierarchy h(rdm);
        if (lower) {
            if (lower->order() >= rdm.order()) throw std::invalid_argument("comparison RDM must have lower order");
            const Rdm &c = h.level(lower->order());
            auto cmp = [&](const Rdm &a, const Rdm &b) {
                a.for_each_entry([&](Mask ci, Mask ai, cplx v) { r.contraction = std::max(r.contraction, std::abs(v - b.value(ci, ai))); });
            };
            cmp(c, *lower);
            cmp(*lower, c);
        }
        const Rdm &one = h.level(1);
        const int n = rdm.n_modes();
        Eigen::MatrixXcd D(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) D(i, j) = one.value(bit(i), bit(j));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (D + D.adjoint()), Eigen::EigenvaluesOnly);
        r.pauli_violation = std::max({0.0, -es.eigenvalues()(0), es.eigenvalues()(n - 1) - 1.0});
    }
    return r;
}

/// Inverts noisy = (1-q) clean + q mixed.
inline double correct_white_noise(double noisy, double q, double mixed) { return (noisy - q * mixed) / (1.0 - q); }

struct ReferenceCalibration {
    double q_hat = 0.0;
    double corrected = 0.0;
    bool clamped = false;  // q_hat was negative and set to zero
};

/// Global white-noise correction from a reference state with a known
/// noiseless value: noisy = (1-q) ideal + q mixed.
inline ReferenceCalibration reference_calibrate(double noisy_trial, double noisy_ref, double ideal_ref, double mixed_value) {
    const double gap = mixed_value - ideal_ref;
    if (std::abs(gap) < 1e-10 * std::max(1.0, std::abs(ideal_ref))) throw NumericalError("reference state does not resolve white noise");
    ReferenceCalibration r;
    r.q_hat = (noisy_ref - ideal_ref) / gap;
    if (r.q_hat < 0) {
        r.q_hat = 0;
        r.clamped = true;
    }
    if (r.q_hat >= 1) throw NumericalError("estimated white-noise rate is not below one");
    r.corrected = correct_white_noise(noisy_trial, r.q_hat, mixed_value);
    return r;
}

}  // namespace qcm

#endif
