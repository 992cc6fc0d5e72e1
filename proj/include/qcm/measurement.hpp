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

#ifndef QCM_MEASUREMENT_HPP
#define QCM_MEASUREMENT_HPP

#include <algorithm>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "qcm/core.hpp"
#include "qcm/rdm.hpp"
#include "qcm/routing.hpp"
#include "qcm/simulator.hpp"
#include "qcm/trial_circuit.hpp"

namespace qcm {

/// RDM element <a+_C a_A> in canonical form: cre <= ann as integers.
struct RdmElement {
    Mask cre = 0;
    Mask ann = 0;
    int order() const { return popcount(cre); }
    auto operator<=>(const RdmElement &) const = default;
};

/// All canonical p-body elements over n modes, ordered by (cre, ann). With
/// spins, only elements that conserve S_z are kept.
inline std::vector<RdmElement> enumerate_elements(int n, int p, const SpinLabels *spins = nullptr) {
    if (n < 0 || n > 20 || p < 0 || p > n) throw std::invalid_argument("element enumeration out of range");
    if (spins && spins->size() != n) throw std::invalid_argument("spin labels do not match mode count");
    std::vector<Mask> sets;
    for (Mask m = 0; m < (Mask{1} << n); ++m)
        if (popcount(m) == p) sets.push_back(m);
    std::vector<RdmElement> out;
    for (Mask c : sets)
        for (Mask a : sets) {
            if (a < c) continue;
            if (spins && popcount(c & spins->up_mask()) != popcount(a & spins->up_mask())) continue;
            out.push_back({c, a});
        }
    return out;
}

/// Pair of modes measured together; lo == hi marks a single number.
struct Interaction {
    int lo = 0;
    int hi = 0;
    bool is_number() const { return lo == hi; }
    auto operator<=>(const Interaction &) const = default;
};

using Pairing = std::vector<Interaction>;  // sorted, disjoint

/// Candidate pairings of an element: each bijection from creators to
/// annihilators matching spins whose pairs form a matching, ordered by the
/// number of interactions (fewest first, ties in permutation order).
inline std::vector<Pairing> candidate_pairings(const RdmElement &e, const SpinLabels &spins) {
    auto C = bits_of(e.cre), A = bits_of(e.ann);
    if (C.size() != A.size()) throw std::invalid_argument("element must have equal creator and annihilator counts");
    for (int j : C)
        if (j >= spins.size()) throw std::out_of_range("element mode outside spin labels");
    for (int j : A)
        if (j >= spins.size()) throw std::out_of_range("element mode outside spin labels");
    std::vector<Pairing> out;
    std::vector<int> perm = A;
    do {
        bool ok = true;
        Pairing p;
        for (std::size_t i = 0; i < C.size() && ok; ++i) {
            if (spins[C[i]] != spins[perm[i]]) ok = false;
            p.push_back({std::min(C[i], perm[i]), std::max(C[i], perm[i])});
        }
        if (!ok) continue;
        std::sort(p.begin(), p.end());
        p.erase(std::unique(p.begin(), p.end()), p.end());
        Mask used = 0;
        for (const auto &it : p) {
            Mask m = bit(it.lo) | bit(it.hi);
            if (used & m) ok = false;
            used |= m;
        }
        if (!ok) continue;
        if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::stable_sort(out.begin(), out.end(), [](const Pairing &a, const Pairing &b) { return a.size() < b.size(); });
    return out;
}

enum class FactorKind { Number, PairNumber, Re, Im };

/// Number: n_lo. PairNumber: n_lo n_hi. Re: Re(a+_lo a_hi).
/// Im: Im(a+_lo a_hi) = (a+_lo a_hi - a+_hi a_lo) / 2i.
struct Factor {
    FactorKind kind;
    int lo = 0;
    int hi = 0;
    bool operator==(const Factor &) const = default;
};

struct Product {
    double coefficient = 0.0;
    std::vector<Factor> factors;
};

/// Writes the element as a real combination of products of commuting
/// Hermitian factors, one factor per interaction of the pairing. Terms with
/// an odd number of Im factors are imaginary and are dropped, so the result
/// reproduces the real part of the element.
inline std::vector<Product> decompose(const RdmElement &e, const Pairing &pairing) {
    const Mask shared = e.cre & e.ann;
    // Original operator order: creators then annihilators, ascending.
    std::vector<std::pair<int, bool>> original;
    for (int j : bits_of(e.cre)) original.emplace_back(j, true);
    for (int j : bits_of(e.ann)) original.emplace_back(j, false);
    std::vector<std::pair<int, bool>> target;
    std::vector<Factor> fixed;
    struct Exc {
        int lo, hi;
        double im_sign;
    };
    std::vector<Exc> exc;
    Mask covered_c = 0, covered_a = 0;
    for (const auto &it : pairing) {
        if (it.is_number()) {
            target.insert(target.end(), {{it.lo, true}, {it.lo, false}});
            fixed.push_back({FactorKind::Number, it.lo, it.lo});
            covered_c |= bit(it.lo), covered_a |= bit(it.lo);
        } else if (has_bit(shared, it.lo) && has_bit(shared, it.hi)) {
            target.insert(target.end(), {{it.lo, true}, {it.lo, false}, {it.hi, true}, {it.hi, false}});
            fixed.push_back({FactorKind::PairNumber, it.lo, it.hi});
            covered_c |= bit(it.lo) | bit(it.hi), covered_a |= bit(it.lo) | bit(it.hi);
        } else {
            int c = has_bit(e.cre, it.lo) && !has_bit(e.ann, it.lo) ? it.lo : it.hi;
            int a = c == it.lo ? it.hi : it.lo;
            if (!has_bit(e.cre, c) || !has_bit(e.ann, a)) throw std::invalid_argument("pairing does not match element");
            target.insert(target.end(), {{c, true}, {a, false}});
            exc.push_back({it.lo, it.hi, c == it.lo ? 1.0 : -1.0});
            covered_c |= bit(c), covered_a |= bit(a);
        }
    }
    if (covered_c != e.cre || covered_a != e.ann || target.size() != original.size())
        throw std::invalid_argument("pairing does not cover the element");
    // Same-mode creator/annihilator pairs keep their relative order, so the
    // reordering sign is the permutation parity.
    std::vector<int> pos;
    for (const auto &t : target) pos.push_back(static_cast<int>(std::find(original.begin(), original.end(), t) - original.begin()));
    double sign = sort_sign(pos);

    std::vector<Product> out;
    const int r = static_cast<int>(exc.size());
    for (int mask = 0; mask < (1 << r); ++mask) {
        int n_im = std::popcount(static_cast<unsigned>(mask));
        if (n_im % 2) continue;
        Product p;
        p.coefficient = sign * ((n_im / 2) % 2 ? -1.0 : 1.0);
        p.factors = fixed;
        for (int k = 0; k < r; ++k) {
            if (mask >> k & 1) {
                p.factors.push_back({FactorKind::Im, exc[k].lo, exc[k].hi});
                p.coefficient *= exc[k].im_sign;
            } else {
                p.factors.push_back({FactorKind::Re, exc[k].lo, exc[k].hi});
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

/// Decomposition with the preferred (first) candidate pairing.
inline std::vector<Product> decompose(const RdmElement &e, const SpinLabels &spins) {
    auto c = candidate_pairings(e, spins);
    if (c.empty()) throw std::invalid_argument("element has no spin-consistent pairing");
    return decompose(e, c.front());
}

/// Operator form of a factor product, for checking decompositions.
inline FermionOperator factor_operator(const Factor &f, int n) {
    FermionOperator op(n);
    switch (f.kind) {
        case FactorKind::Number:
            op.add(OpString{bit(f.lo), bit(f.lo)}, 1.0);
            break;
        case FactorKind::PairNumber:
            op.add(OpString{bit(f.lo), bit(f.lo)}, 1.0);
            op = op * [&] {
                FermionOperator m(n);
                m.add(OpString{bit(f.hi), bit(f.hi)}, 1.0);
                return m;
            }();
            break;
        case FactorKind::Re:
            op.add(OpString{bit(f.lo), bit(f.hi)}, 0.5);
            op.add(OpString{bit(f.hi), bit(f.lo)}, 0.5);
            break;
        case FactorKind::Im:
            op.add(OpString{bit(f.lo), bit(f.hi)}, cplx(0, -0.5));
            op.add(OpString{bit(f.hi), bit(f.lo)}, cplx(0, 0.5));
            break;
    }
    return op;
}

inline FermionOperator product_operator(const Product &p, int n) {
    FermionOperator op = FermionOperator::identity(n, p.coefficient);
    for (const auto &f : p.factors) op = op * factor_operator(f, n);
    return op;
}

/// A set of interactions forming a matching on the modes.
struct Level1Basis {
    std::vector<Interaction> interactions;  // sorted
    std::vector<std::size_t> members;       // element indices

    /// Interactions with two distinct modes.
    std::vector<Interaction> sites() const {
        std::vector<Interaction> s;
        for (const auto &i : interactions)
            if (!i.is_number()) s.push_back(i);
        return s;
    }
};

struct Level1Grouping {
    std::vector<Level1Basis> bases;
    std::vector<std::size_t> basis_of;  // per element
    std::vector<Pairing> pairing_of;    // per element
};

/// Greedy grouping: each element, in order, joins the first existing basis
/// that accepts one of its candidate pairings (bases outer, candidates
/// inner); otherwise it opens a new basis with its preferred pairing.
inline Level1Grouping group_level1(const std::vector<RdmElement> &elements, const SpinLabels &spins) {
    Level1Grouping g;
    const int n = spins.size();
    std::vector<std::vector<int>> owner;  // per basis: qubit -> interaction index or -1
    for (std::size_t ei = 0; ei < elements.size(); ++ei) {
        auto cands = candidate_pairings(elements[ei], spins);
        if (cands.empty()) throw std::invalid_argument("element has no spin-consistent pairing");
        bool placed = false;
        for (std::size_t b = 0; b < g.bases.size() && !placed; ++b) {
            auto &basis = g.bases[b];
            for (const auto &cand : cands) {
                bool ok = true;
                for (const auto &it : cand) {
                    for (int q : {it.lo, it.hi}) {
                        int o = owner[b][q];
                        if (o >= 0 && basis.interactions[o] != it) ok = false;
                    }
                }
                if (!ok) continue;
                for (const auto &it : cand)
                    if (std::find(basis.interactions.begin(), basis.interactions.end(), it) == basis.interactions.end())
                        basis.interactions.push_back(it);
                std::sort(basis.interactions.begin(), basis.interactions.end());
                owner[b].assign(n, -1);
                for (std::size_t k = 0; k < basis.interactions.size(); ++k) {
                    owner[b][basis.interactions[k].lo] = static_cast<int>(k);
                    owner[b][basis.interactions[k].hi] = static_cast<int>(k);
                }
                basis.members.push_back(ei);
                g.basis_of.push_back(b);
                g.pairing_of.push_back(cand);
                placed = true;
                break;
            }
        }
        if (placed) continue;
        Level1Basis nb;
        nb.interactions = cands.front();
        nb.members.push_back(ei);
        owner.emplace_back(n, -1);
        for (std::size_t k = 0; k < nb.interactions.size(); ++k) {
            owner.back()[nb.interactions[k].lo] = static_cast<int>(k);
            owner.back()[nb.interactions[k].hi] = static_cast<int>(k);
        }
        g.basis_of.push_back(g.bases.size());
        g.pairing_of.push_back(cands.front());
        g.bases.push_back(std::move(nb));
    }
    return g;
}

/// Per-site measurement setting: X measures Re, Y measures Im, I leaves the
/// site in the computational basis.
enum class SiteLabel : char { I = 'I', X = 'X', Y = 'Y' };

struct ConcreteBasis {
    std::size_t level1 = 0;
    std::vector<Interaction> sites;
    std::vector<SiteLabel> labels;

    std::string label_string() const {
        std::string s;
        for (auto l : labels) s += static_cast<char>(l);
        return s;
    }
    /// Sites that need a diagonalizing circuit.
    std::vector<Interaction> active_sites() const {
        std::vector<Interaction> a;
        for (std::size_t i = 0; i < sites.size(); ++i)
            if (labels[i] != SiteLabel::I) a.push_back(sites[i]);
        return a;
    }
};

inline std::vector<SiteLabel> product_labels(const Product &p, const std::vector<Interaction> &sites) {
    std::vector<SiteLabel> l(sites.size(), SiteLabel::I);
    for (const auto &f : p.factors) {
        if (f.kind != FactorKind::Re && f.kind != FactorKind::Im) continue;
        auto it = std::find(sites.begin(), sites.end(), Interaction{f.lo, f.hi});
        if (it == sites.end()) throw std::logic_error("factor site missing from its basis");
        l[it - sites.begin()] = f.kind == FactorKind::Re ? SiteLabel::X : SiteLabel::Y;
    }
    return l;
}

struct PlannedProduct {
    Product product;
    std::size_t basis = 0;  // concrete basis index
};

struct MeasurementPlan {
    int n_modes = 0;
    int order = 0;
    SpinLabels spins;
    std::vector<RdmElement> elements;
    Level1Grouping level1;
    std::vector<ConcreteBasis> bases;
    std::vector<std::vector<PlannedProduct>> products;  // per element
};

/// Level-two grouping of the products of one level-1 basis into concrete
/// bases: label strings merge greedily when they agree wherever both are
/// non-identity.
inline void group_level2(const Level1Grouping &l1, std::size_t b, const std::vector<RdmElement> &elements, MeasurementPlan &plan) {
    const auto &basis = l1.bases[b];
    auto sites = basis.sites();
    const std::size_t first = plan.bases.size();
    for (std::size_t ei : basis.members) {
        for (auto &p : decompose(elements[ei], l1.pairing_of[ei])) {
            auto lab = product_labels(p, sites);
            std::size_t target = plan.bases.size();
            for (std::size_t k = first; k < plan.bases.size(); ++k) {
                auto &cb = plan.bases[k];
                bool ok = true;
                for (std::size_t s = 0; s < lab.size() && ok; ++s)
                    if (lab[s] != SiteLabel::I && cb.labels[s] != SiteLabel::I && cb.labels[s] != lab[s]) ok = false;
                if (ok) {
                    target = k;
                    break;
                }
            }
            if (target == plan.bases.size()) plan.bases.push_back({b, sites, std::vector<SiteLabel>(sites.size(), SiteLabel::I)});
            auto &cb = plan.bases[target];
            for (std::size_t s = 0; s < lab.size(); ++s)
                if (lab[s] != SiteLabel::I) cb.labels[s] = lab[s];
            plan.products[ei].push_back({std::move(p), target});
        }
    }
}

/// Full measurement plan for the p-RDM over n modes.
inline MeasurementPlan plan_measurements(int n, int p, const SpinLabels &spins) {
    if (spins.size() != n) throw std::invalid_argument("spin labels do not match mode count");
    MeasurementPlan plan;
    plan.n_modes = n;
    plan.order = p;
    plan.spins = spins;
    plan.elements = enumerate_elements(n, p, &spins);
    plan.level1 = group_level1(plan.elements, spins);
    plan.products.resize(plan.elements.size());
    for (std::size_t b = 0; b < plan.level1.bases.size(); ++b) group_level2(plan.level1, b, plan.elements, plan);
    return plan;
}

/// Diagonalizes Re(a+_p a_{p+1}) (label X) or Im(a+_p a_{p+1}) (label Y) on
/// neighbouring qubits p, p+1. Both circuits keep |00> and |11> in place.
inline void append_site_diagonalizer(Circuit &c, int p, SiteLabel label) {
    const int a = p, b = p + 1;
    c.h(a);
    if (label == SiteLabel::Y) c.s(b);
    c.cnot(a, b);
    c.ry(a, std::numbers::pi / 4);
    c.ry(b, std::numbers::pi / 4);
    c.cnot(a, b);
    c.h(a);
}

/// Eigenvalue of the physical Re/Im operator on (p, p+1) for the measured
/// bits of qubit p (bit_a) and p+1 (bit_b).
inline double site_eigenvalue(SiteLabel label, bool bit_a, bool bit_b) {
    if (bit_a == bit_b) return 0.0;
    double v = bit_a ? -0.5 : 0.5;
    return label == SiteLabel::X ? v : -v;
}

/// Where the outcome of one diagonalized site lands in the logical readout.
struct SiteReadout {
    Interaction site;
    SiteLabel label = SiteLabel::I;
    int first = 0;   // logical mode on the lower physical qubit at interaction
    int second = 0;  // logical mode on the upper physical qubit
};

struct MeasurementCircuit {
    Circuit circuit;
    Layout final_layout;  // logical -> physical at readout
    RouteSchedule schedule;
    std::vector<SiteReadout> readouts;
};

/// Routes the active sites of a concrete basis from `start` and appends
/// the diagonalizers at the interaction steps.
inline MeasurementCircuit build_measurement_circuit(const ConcreteBasis &basis, const Layout &start, const RouteOptions &opt = {}) {
    const int n = static_cast<int>(start.size());
    MeasurementCircuit mc;
    mc.circuit = Circuit(n);
    std::vector<std::pair<int, int>> pairs;
    std::vector<SiteLabel> pair_label;
    for (std::size_t i = 0; i < basis.sites.size(); ++i) {
        if (basis.labels[i] == SiteLabel::I) continue;
        pairs.emplace_back(start.at(basis.sites[i].lo), start.at(basis.sites[i].hi));
        pair_label.push_back(basis.labels[i]);
    }
    mc.schedule = route_pairs(n, pairs, opt);
    Layout layout = start;
    Layout inv = inverse_layout(layout);
    for (const auto &layer : mc.schedule.layers) {
        for (const auto &act : layer) {
            int q = act.q;
            if (act.kind == RouteAction::Swap) {
                mc.circuit.fswap(q, q + 1);
                std::swap(inv[q], inv[q + 1]);
                layout[inv[q]] = q;
                layout[inv[q + 1]] = q + 1;
            } else {
                int l0 = inv[q], l1 = inv[q + 1];
                Interaction site{std::min(l0, l1), std::max(l0, l1)};
                auto it = std::find(basis.sites.begin(), basis.sites.end(), site);
                if (it == basis.sites.end()) throw std::logic_error("routing interacted a pair outside the basis");
                SiteLabel lab = basis.labels[it - basis.sites.begin()];
                append_site_diagonalizer(mc.circuit, q, lab);
                mc.readouts.push_back({site, lab, l0, l1});
            }
        }
    }
    mc.final_layout = layout;
    return mc;
}

/// Physical measured bits -> logical bits under a layout.
inline Mask to_logical_bits(Mask physical, const Layout &layout) {
    Mask out = 0;
    for (std::size_t j = 0; j < layout.size(); ++j)
        if (has_bit(physical, layout[j])) out |= bit(static_cast<int>(j));
    return out;
}

/// Value of one factor for a logical readout of a concrete basis.
inline double factor_value(const Factor &f, Mask bits, const MeasurementCircuit &mc) {
    switch (f.kind) {
        case FactorKind::Number:
            return has_bit(bits, f.lo) ? 1.0 : 0.0;
        case FactorKind::PairNumber:
            return (has_bit(bits, f.lo) && has_bit(bits, f.hi)) ? 1.0 : 0.0;
        case FactorKind::Re:
        case FactorKind::Im: {
            for (const auto &r : mc.readouts) {
                if (r.site != Interaction{f.lo, f.hi}) continue;
                SiteLabel want = f.kind == FactorKind::Re ? SiteLabel::X : SiteLabel::Y;
                if (r.label != want) throw std::logic_error("factor measured in the wrong setting");
                double v = site_eigenvalue(r.label, has_bit(bits, r.first), has_bit(bits, r.second));
                // The physical Im operator is Im(a+_first a_second).
                if (f.kind == FactorKind::Im && r.first != f.lo) v = -v;
                return v;
            }
            throw std::logic_error("factor site was not diagonalized");
        }
    }
    return 0.0;
}

inline double product_value(const Product &p, Mask bits, const MeasurementCircuit &mc) {
    double v = p.coefficient;
    for (const auto &f : p.factors) {
        v *= factor_value(f, bits, mc);
        if (v == 0.0) break;
    }
    return v;
}

}  // namespace qcm

#endif
