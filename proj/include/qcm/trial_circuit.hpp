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

#ifndef QCM_TRIAL_CIRCUIT_HPP
#define QCM_TRIAL_CIRCUIT_HPP

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <vector>

#include "qcm/core.hpp"
#include "qcm/fermion.hpp"
#include "qcm/simulator.hpp"

namespace qcm {

/// Double excitation a+_{c0} a+_{c1} a_{a0} a_{a1} (logical modes).
struct Excitation {
    std::array<int, 2> create{};
    std::array<int, 2> annihilate{};

    Mask modes() const { return bit(create[0]) | bit(create[1]) | bit(annihilate[0]) | bit(annihilate[1]); }
    bool operator==(const Excitation &) const = default;
};

/// Product of excitation unitaries exp(theta_k (T_k - T_k^dag)) applied,
/// in list order, to a reference determinant.
struct Ansatz {
    std::vector<Excitation> excitations;
    Mask reference = 0;

    /// Throws if any excitation repeats a mode, leaves the register or
    /// changes S_z.
    void validate(const SpinLabels &spins) const {
        for (const auto &e : excitations) {
            if (popcount(e.modes()) != 4) throw std::invalid_argument("excitation must involve four distinct modes");
            for (int j : {e.create[0], e.create[1], e.annihilate[0], e.annihilate[1]})
                if (j < 0 || j >= spins.size()) throw std::out_of_range("excitation mode out of range");
            Mask up = spins.up_mask();
            if (popcount((bit(e.create[0]) | bit(e.create[1])) & up) != popcount((bit(e.annihilate[0]) | bit(e.annihilate[1])) & up))
                throw std::invalid_argument("excitation does not conserve S_z");
        }
    }

    FermionOperator generator(int k, int n_modes) const {
        const auto &e = excitations.at(k);
        FermionOperator t(n_modes);
        t.add_product({{e.create[0], true}, {e.create[1], true}, {e.annihilate[0], false}, {e.annihilate[1], false}}, 1.0);
        return t - t.adjoint();
    }
};

/// Layout maps logical mode -> physical qubit.
using Layout = std::vector<int>;

inline Layout identity_layout(int n) {
    Layout l(n);
    std::iota(l.begin(), l.end(), 0);
    return l;
}

inline Layout inverse_layout(const Layout &l) {
    Layout inv(l.size());
    for (std::size_t j = 0; j < l.size(); ++j) inv[l[j]] = static_cast<int>(j);
    return inv;
}

inline Circuit hartree_fock_circuit(int n_qubits, Mask occupied) {
    Circuit c(n_qubits);
    for (int j : bits_of(occupied)) c.x(j);
    return c;
}

/// Appends exp(phi (|B><A| - |A><B|)) on qubits p..p+3, where A is a 4-bit
/// pattern of weight two and B its complement. 18 CNOTs and 8 Ry.
inline void append_givens_block(Circuit &c, int p, Mask A, double phi) {
    if (popcount(A & 0xF) != 2 || (A & ~Mask{0xF})) throw std::invalid_argument("block pattern must have weight two on four bits");
    static const std::array<std::pair<int, int>, 3> ladder{{{1, 0}, {2, 3}, {2, 1}}};
    auto through = [&](Mask s) {
        for (auto [ctl, tgt] : ladder)
            if (has_bit(s, ctl)) s ^= bit(tgt);
        return s;
    };
    const Mask sa = through(A);
    const int P[3] = {int(has_bit(sa, 0)), int(has_bit(sa, 1)), int(has_bit(sa, 3))};
    const double ang = has_bit(sa, 2) ? -2 * phi : 2 * phi;

    for (auto [ctl, tgt] : ladder) c.cnot(p + ctl, p + tgt);
    // Gray-code walk over the parities of (q0, q1, q3) seen by q2.
    enum Move { kQ3, kU, kToggle };
    static const Move seq[12] = {kQ3, kU, kToggle, kU, kToggle, kU, kQ3, kU, kToggle, kU, kToggle, kU};
    std::array<int, 3> T{0, 0, 0}, u{0, 1, 0};
    for (Move m : seq) {
        if (m == kToggle) {
            c.cnot(p + 0, p + 1);
            u[0] ^= 1;
            continue;
        }
        int s = T[0] * P[0] + T[1] * P[1] + T[2] * P[2];
        c.ry(p + 2, ang / 8 * ((s & 1) ? -1.0 : 1.0));
        if (m == kQ3) {
            c.cnot(p + 3, p + 2);
            T[2] ^= 1;
        } else {
            c.cnot(p + 1, p + 2);
            for (int k = 0; k < 3; ++k) T[k] ^= u[k];
        }
    }
    for (auto it = ladder.rbegin(); it != ladder.rend(); ++it) c.cnot(p + it->first, p + it->second);
}

/// exp(theta (a+_3 a+_2 a_1 a_0 - h.c.)) on four adjacent qubits.
inline Circuit local_double_excitation(double theta) {
    Circuit c(4);
    OpString t{bit(2) | bit(3), bit(0) | bit(1)};
    auto r = apply_string(t, 0b0011);
    append_givens_block(c, 0, 0b0011, theta * r->second);
    return c;
}

/// FSWAP sequence bringing four logical modes onto adjacent physical qubits
/// with the fewest swaps, preserving the relative order of all modes.
struct SwapNetwork {
    std::vector<std::pair<int, int>> swaps;  // physical (j, j+1)
    Layout layout_after;
    int window = 0;  // first physical qubit of the block
};

inline SwapNetwork fswap_network(Mask logical_modes, const Layout &layout) {
    const int n = static_cast<int>(layout.size());
    if (popcount(logical_modes) != 4) throw std::invalid_argument("network needs exactly four modes");
    auto inv = inverse_layout(layout);
    std::vector<int> phys;
    for (int j : bits_of(logical_modes)) phys.push_back(layout.at(j));
    std::sort(phys.begin(), phys.end());
    int best_p = 0, best_cost = -1;
    for (int p = 0; p + 4 <= n; ++p) {
        int cost = 0;
        for (int i = 0; i < 4; ++i) cost += std::abs(phys[i] - (p + i));
        if (best_cost < 0 || cost < best_cost) best_cost = cost, best_p = p;
    }
    // Target slot of every physical position under a stable partition.
    Mask targets = 0;
    for (int q : phys) targets |= bit(q);
    std::vector<int> key(n);
    {
        int left = 0, right = best_p + 4, placed = 0;
        int n_left_others = best_p;
        for (int q = 0; q < n; ++q) {
            if (has_bit(targets, q)) {
                key[q] = best_p + placed++;
            } else if (left < n_left_others) {
                key[q] = left++;
            } else {
                key[q] = right++;
            }
        }
    }
    SwapNetwork net;
    net.window = best_p;
    std::vector<int> content(inv.begin(), inv.end());  // physical -> logical
    bool changed = true;
    while (changed) {
        changed = false;
        for (int q = 0; q + 1 < n; ++q)
            if (key[q] > key[q + 1]) {
                std::swap(key[q], key[q + 1]);
                std::swap(content[q], content[q + 1]);
                net.swaps.emplace_back(q, q + 1);
                changed = true;
            }
    }
    net.layout_after = inverse_layout(content);
    return net;
}

/// Known-basis-state propagation. Gates are replayed from |0...0> while
/// qubits whose value is a known bit are tracked virtually; only gates that
/// act on unknown qubits are emitted. The pass depends only on gate
/// structure, never on rotation angles.
class KnownStateSimplifier {
   public:
    explicit KnownStateSimplifier(int n) : out_(n), known_(n, true), value_(n, false) {}

    void apply(const Gate &g) {
        switch (g.kind) {
            case GateKind::X:
                if (known_[g.q0])
                    value_[g.q0] = !value_[g.q0];
                else
                    out_.add(g);
                break;
            case GateKind::S:
            case GateKind::Sdg:
                if (known_[g.q0]) {
                    if (value_[g.q0]) out_.multiply_phase(g.kind == GateKind::S ? cplx(0, 1) : cplx(0, -1));
                } else {
                    out_.add(g);
                }
                break;
            case GateKind::H:
            case GateKind::Ry:
                materialize(g.q0);
                out_.add(g);
                break;
            case GateKind::CNOT:
                if (known_[g.q0]) {
                    if (value_[g.q0]) apply({GateKind::X, g.q1});
                } else {
                    materialize(g.q1);
                    out_.add(g);
                }
                break;
            case GateKind::FSWAP: {
                int a = g.q0, b = g.q1;
                if (known_[a] && known_[b]) {
                    if (value_[a] && value_[b]) out_.multiply_phase(-1.0);
                    std::swap(value_[a], value_[b]);
                } else if (!known_[a] && !known_[b]) {
                    out_.add(g);
                } else {
                    int u = known_[a] ? b : a, k = known_[a] ? a : b;
                    bool v = value_[k];
                    // Physical |0> on k: a two-CNOT swap moves the state over.
                    out_.cnot(u, k);
                    out_.cnot(k, u);
                    if (v) {
                        out_.s(k);
                        out_.s(k);
                    }
                    known_[k] = false;
                    known_[u] = true;
                    value_[u] = v;
                }
                break;
            }
        }
    }

    Circuit finish() {
        for (int q = 0; q < out_.n_qubits(); ++q) materialize(q);
        return out_;
    }

   private:
    void materialize(int q) {
        if (!known_[q]) return;
        if (value_[q]) out_.x(q);
        known_[q] = false;
    }

    Circuit out_;
    std::vector<bool> known_, value_;
};

/// Merges runs of X and Ry on the same qubit into one Ry followed by at most
/// one X, and drops Ry(0) produced by merging.
inline Circuit merge_single_qubit_runs(const Circuit &in) {
    const int n = in.n_qubits();
    Circuit out(n);
    out.multiply_phase(in.global_phase());
    struct Run {
        bool active = false;
        bool flip = false;
        double angle = 0;
        bool has_ry = false;
    };
    std::vector<Run> run(n);
    auto flush = [&](int q) {
        auto &r = run[q];
        if (!r.active) return;
        if (r.has_ry) out.ry(q, r.angle);
        if (r.flip) out.x(q);
        r = Run{};
    };
    for (const auto &g : in.gates()) {
        if (g.kind == GateKind::X || g.kind == GateKind::Ry) {
            auto &r = run[g.q0];
            r.active = true;
            if (g.kind == GateKind::X) {
                r.flip = !r.flip;
            } else {
                // Ry(a) after an odd number of X equals X Ry(-a).
                r.angle += r.flip ? -g.angle : g.angle;
                r.has_ry = true;
            }
            continue;
        }
        flush(g.q0);
        if (g.two_qubit()) flush(g.q1);
        out.add(g);
    }
    for (int q = 0; q < n; ++q) flush(q);
    return out;
}

struct BuildOptions {
    bool simplify = true;
};

struct TrialCircuit {
    Circuit circuit;
    Layout layout;  // logical mode -> physical qubit at the end
};

/// Reference determinant followed by each excitation: FSWAP routing onto
/// four adjacent qubits, then the local block. The layout is carried over
/// between excitations rather than restored.
inline TrialCircuit build_uccd(const Ansatz &ansatz, const std::vector<double> &theta, int n_qubits, const BuildOptions &opt = {}) {
    if (theta.size() != ansatz.excitations.size()) throw std::invalid_argument("one angle per excitation required");
    if (ansatz.reference & ~low_mask(n_qubits)) throw std::out_of_range("reference occupation outside the register");
    Circuit raw = hartree_fock_circuit(n_qubits, ansatz.reference);
    Layout layout = identity_layout(n_qubits);
    for (std::size_t k = 0; k < ansatz.excitations.size(); ++k) {
        const auto &e = ansatz.excitations[k];
        if (popcount(e.modes()) != 4) throw std::invalid_argument("excitation must involve four distinct modes");
        for (int j : bits_of(e.modes()))
            if (j >= n_qubits) throw std::out_of_range("excitation mode out of range");
        auto net = fswap_network(e.modes(), layout);
        for (auto [a, b] : net.swaps) raw.fswap(a, b);
        layout = net.layout_after;
        const int p = net.window;
        auto local = [&](int logical) { return layout[logical] - p; };
        OpString t{bit(local(e.create[0])) | bit(local(e.create[1])), bit(local(e.annihilate[0])) | bit(local(e.annihilate[1]))};
        double sign = 1.0;
        // Reorder (c0, c1) and (a0, a1) as written into ascending local order.
        if (local(e.create[0]) > local(e.create[1])) sign = -sign;
        if (local(e.annihilate[0]) > local(e.annihilate[1])) sign = -sign;
        Mask A = t.ann;
        auto r = apply_string(t, A);
        append_givens_block(raw, p, A, theta[k] * sign * r->second);
    }
    TrialCircuit out;
    out.layout = layout;
    if (!opt.simplify) {
        out.circuit = raw;
        return out;
    }
    KnownStateSimplifier simp(n_qubits);
    for (const auto &g : raw.gates()) simp.apply(g);
    out.circuit = merge_single_qubit_runs(simp.finish());
    return out;
}

/// Logical-order state from the physical output of a routed circuit. The
/// FSWAP network permutes modes fermionically, so each determinant also
/// picks up the sign of reordering its occupied modes.
inline Statevector to_logical_order(const Statevector &phys, const Layout &layout) {
    const int n = phys.n_qubits();
    std::vector<cplx> amps(phys.dim(), 0.0);
    for (Mask y = 0; y < phys.dim(); ++y) {
        Mask x = 0;
        int inversions = 0;
        for (int i = 0; i < n; ++i) {
            if (!has_bit(y, i)) continue;
            x |= bit(layout[i]);
            for (int j = i + 1; j < n; ++j)
                if (has_bit(y, j) && layout[i] > layout[j]) ++inversions;
        }
        amps[y] = (inversions & 1) ? -phys[x] : phys[x];
    }
    return Statevector(n, std::move(amps));
}

/// Trial state in logical mode order.
inline Statevector trial_state(const Ansatz &ansatz, const std::vector<double> &theta, int n_qubits, const BuildOptions &opt = {}) {
    auto tc = build_uccd(ansatz, theta, n_qubits, opt);
    return to_logical_order(run(tc.circuit), tc.layout);
}

}  // namespace qcm

#endif
