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

#ifndef QCM_SIMULATOR_HPP
#define QCM_SIMULATOR_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qcm/core.hpp"
#include "qcm/fermion.hpp"
#include "qcm/pauli.hpp"

namespace qcm {

enum class GateKind { X, H, S, Sdg, Ry, CNOT, FSWAP };

inline const char *gate_name(GateKind k) {
    switch (k) {
        case GateKind::X: return "x";
        case GateKind::H: return "h";
        case GateKind::S: return "s";
        case GateKind::Sdg: return "sdg";
        case GateKind::Ry: return "ry";
        case GateKind::CNOT: return "cnot";
        case GateKind::FSWAP: return "fswap";
    }
    return "?";
}

struct Gate {
    GateKind kind;
    int q0 = 0;
    int q1 = -1;  // target for CNOT, second qubit for FSWAP
    double angle = 0.0;

    bool two_qubit() const { return kind == GateKind::CNOT || kind == GateKind::FSWAP; }
    bool operator==(const Gate &) const = default;
};

/// Gate list on a linear chain of qubits. Two-qubit gates must act on
/// neighbouring qubits. FSWAP is kept as a primitive and expanded to
/// H, CNOT, CNOT, H when counting native gates.
class Circuit {
   public:
    Circuit() = default;
    explicit Circuit(int n_qubits) : n_(n_qubits) {
        if (n_qubits < 0 || n_qubits > kMaxModes) throw std::invalid_argument("qubit count out of range");
    }

    int n_qubits() const { return n_; }
    const std::vector<Gate> &gates() const { return gates_; }
    cplx global_phase() const { return phase_; }
    void multiply_phase(cplx p) { phase_ *= p; }

    Circuit &add(const Gate &g) {
        check_qubit(g.q0);
        if (g.two_qubit()) {
            check_qubit(g.q1);
            if (std::abs(g.q0 - g.q1) != 1)
                throw std::invalid_argument("two-qubit gate on non-adjacent qubits " + std::to_string(g.q0) + "," + std::to_string(g.q1));
        }
        gates_.push_back(g);
        return *this;
    }
    Circuit &x(int q) { return add({GateKind::X, q}); }
    Circuit &h(int q) { return add({GateKind::H, q}); }
    Circuit &s(int q) { return add({GateKind::S, q}); }
    Circuit &sdg(int q) { return add({GateKind::Sdg, q}); }
    Circuit &ry(int q, double theta) { return add({GateKind::Ry, q, -1, theta}); }
    Circuit &cnot(int c, int t) { return add({GateKind::CNOT, c, t}); }
    Circuit &fswap(int a, int b) { return add({GateKind::FSWAP, a, b}); }

    Circuit &append(const Circuit &o) {
        if (o.n_ != n_) throw std::invalid_argument("circuit width mismatch");
        for (const auto &g : o.gates_) add(g);
        phase_ *= o.phase_;
        return *this;
    }

    /// Native gate list with FSWAP expanded.
    std::vector<Gate> native_gates() const {
        std::vector<Gate> out;
        for (const auto &g : gates_) {
            if (g.kind == GateKind::FSWAP) {
                out.push_back({GateKind::H, g.q0});
                out.push_back({GateKind::CNOT, g.q0, g.q1});
                out.push_back({GateKind::CNOT, g.q1, g.q0});
                out.push_back({GateKind::H, g.q1});
            } else {
                out.push_back(g);
            }
        }
        return out;
    }
    int cnot_count() const {
        int c = 0;
        for (const auto &g : gates_) c += g.kind == GateKind::CNOT ? 1 : g.kind == GateKind::FSWAP ? 2 : 0;
        return c;
    }
    int single_qubit_count() const {
        int c = 0;
        for (const auto &g : native_gates()) c += g.two_qubit() ? 0 : 1;
        return c;
    }
    /// Layered depth of the native gate list.
    int depth() const { return layered_depth(false); }
    /// Layered depth counting only CNOTs.
    int cnot_depth() const { return layered_depth(true); }

    std::string to_text() const {
        std::ostringstream os;
        os << std::setprecision(std::numeric_limits<double>::max_digits10);
        os << "qubits " << n_ << "\n";
        if (phase_ != cplx(1.0)) os << "phase " << phase_.real() << " " << phase_.imag() << "\n";
        for (const auto &g : gates_) {
            os << gate_name(g.kind) << " " << g.q0;
            if (g.two_qubit()) os << " " << g.q1;
            if (g.kind == GateKind::Ry) os << " " << g.angle;
            os << "\n";
        }
        return os.str();
    }

    static Circuit from_text(const std::string &text) {
        std::istringstream is(text);
        std::string line;
        Circuit c;
        bool have_header = false;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            std::istringstream ls(line);
            std::string op;
            if (!(ls >> op) || op[0] == '#') continue;
            auto fail = [&] { return ConfigError("circuit line " + std::to_string(lineno) + ": malformed '" + line + "'"); };
            if (op == "qubits") {
                int n;
                if (!(ls >> n)) throw fail();
                c = Circuit(n);
                have_header = true;
                continue;
            }
            if (!have_header) throw ConfigError("circuit text must start with 'qubits N'");
            if (op == "phase") {
                double re, im;
                if (!(ls >> re >> im)) throw fail();
                c.phase_ = cplx(re, im);
                continue;
            }
            int a, b;
            double t;
            if (!(ls >> a)) throw fail();
            if (op == "x") c.x(a);
            else if (op == "h") c.h(a);
            else if (op == "s") c.s(a);
            else if (op == "sdg") c.sdg(a);
            else if (op == "ry") {
                if (!(ls >> t)) throw fail();
                c.ry(a, t);
            } else if (op == "cnot" || op == "fswap") {
                if (!(ls >> b)) throw fail();
                op == "cnot" ? c.cnot(a, b) : c.fswap(a, b);
            } else {
                throw fail();
            }
        }
        return c;
    }

   private:
    int layered_depth(bool cnots_only) const {
        std::vector<int> level(n_, 0);
        int d = 0;
        for (const auto &g : native_gates()) {
            if (cnots_only && !g.two_qubit()) continue;
            int l = level[g.q0];
            if (g.two_qubit()) l = std::max(l, level[g.q1]);
            ++l;
            level[g.q0] = l;
            if (g.two_qubit()) level[g.q1] = l;
            d = std::max(d, l);
        }
        return d;
    }
    void check_qubit(int q) const {
        if (q < 0 || q >= n_) throw std::out_of_range("qubit index " + std::to_string(q) + " out of range");
    }

    int n_ = 0;
    std::vector<Gate> gates_;
    cplx phase_ = 1.0;
};

/// Dense state vector; qubit j is bit j of the basis index.
class Statevector {
   public:
    Statevector() = default;
    explicit Statevector(int n, Mask basis_state = 0) : n_(n), amp_(std::size_t{1} << n, 0.0) {
        if (n < 0 || n > 30) throw std::invalid_argument("qubit count out of range for dense simulation");
        if (basis_state >= amp_.size()) throw std::out_of_range("basis state out of range");
        amp_[basis_state] = 1.0;
    }
    Statevector(int n, std::vector<cplx> amps) : n_(n), amp_(std::move(amps)) {
        if (amp_.size() != (std::size_t{1} << n)) throw std::invalid_argument("amplitude vector has wrong size");
    }

    int n_qubits() const { return n_; }
    std::size_t dim() const { return amp_.size(); }
    const std::vector<cplx> &amplitudes() const { return amp_; }
    std::vector<cplx> &amplitudes() { return amp_; }
    cplx operator[](Mask i) const { return amp_[i]; }

    double norm() const {
        double s = 0;
        for (auto a : amp_) s += std::norm(a);
        return std::sqrt(s);
    }
    std::vector<double> probabilities() const {
        std::vector<double> p(amp_.size());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(amp_[i]);
        return p;
    }
    cplx inner(const Statevector &o) const {
        cplx s = 0;
        for (std::size_t i = 0; i < amp_.size(); ++i) s += std::conj(amp_[i]) * o.amp_[i];
        return s;
    }

    void apply(const Gate &g) {
        const Mask b0 = bit(g.q0);
        switch (g.kind) {
            case GateKind::X:
                for (Mask i = 0; i < amp_.size(); ++i)
                    if (!(i & b0)) std::swap(amp_[i], amp_[i | b0]);
                break;
            case GateKind::H: {
                const double r = std::numbers::sqrt2 / 2;
                for (Mask i = 0; i < amp_.size(); ++i)
                    if (!(i & b0)) {
                        cplx a = amp_[i], b = amp_[i | b0];
                        amp_[i] = r * (a + b);
                        amp_[i | b0] = r * (a - b);
                    }
                break;
            }
            case GateKind::S:
            case GateKind::Sdg: {
                cplx ph = g.kind == GateKind::S ? cplx(0, 1) : cplx(0, -1);
                for (Mask i = 0; i < amp_.size(); ++i)
                    if (i & b0) amp_[i] *= ph;
                break;
            }
            case GateKind::Ry: {
                double c = std::cos(g.angle / 2), s = std::sin(g.angle / 2);
                for (Mask i = 0; i < amp_.size(); ++i)
                    if (!(i & b0)) {
                        cplx a = amp_[i], b = amp_[i | b0];
                        amp_[i] = c * a - s * b;
                        amp_[i | b0] = s * a + c * b;
                    }
                break;
            }
            case GateKind::CNOT: {
                const Mask bt = bit(g.q1);
                for (Mask i = 0; i < amp_.size(); ++i)
                    if ((i & b0) && !(i & bt)) std::swap(amp_[i], amp_[i | bt]);
                break;
            }
            case GateKind::FSWAP: {
                const Mask b1 = bit(g.q1);
                for (Mask i = 0; i < amp_.size(); ++i) {
                    bool x0 = i & b0, x1 = i & b1;
                    if (x0 && !x1) std::swap(amp_[i], amp_[i ^ b0 ^ b1]);
                    if (x0 && x1) amp_[i] = -amp_[i];
                }
                break;
            }
        }
    }

    void apply(const Circuit &c) {
        if (c.n_qubits() != n_) throw std::invalid_argument("circuit width does not match state");
        for (const auto &g : c.gates()) apply(g);
        if (c.global_phase() != cplx(1.0))
            for (auto &a : amp_) a *= c.global_phase();
    }

    double expectation(const FermionOperator &op) const { return op.matrix_element(amp_, amp_).real(); }
    cplx expectation_complex(const FermionOperator &op) const { return op.matrix_element(amp_, amp_); }
    double expectation(const PauliOperator &op) const { return op.expectation(amp_).real(); }

   private:
    int n_ = 0;
    std::vector<cplx> amp_;
};

inline Statevector run(const Circuit &c, std::optional<Statevector> initial = std::nullopt) {
    Statevector s = initial ? *initial : Statevector(c.n_qubits());
    s.apply(c);
    return s;
}

/// Per-qubit readout assignment matrix m[measured][true].
struct ReadoutMatrix {
    std::array<std::array<double, 2>, 2> m{{{1.0, 0.0}, {0.0, 1.0}}};

    /// p01 = P(read 1 | true 0), p10 = P(read 0 | true 1).
    static ReadoutMatrix from_flips(double p01, double p10) {
        if (p01 < 0 || p01 > 1 || p10 < 0 || p10 > 1) throw std::invalid_argument("readout flip probability outside [0,1]");
        ReadoutMatrix r;
        r.m = {{{1 - p01, p10}, {p01, 1 - p10}}};
        return r;
    }
    double p01() const { return m[1][0]; }
    double p10() const { return m[0][1]; }
    bool is_identity() const { return p01() == 0.0 && p10() == 0.0; }
};

/// Noise applied at sampling time: global white noise of strength q (mixed
/// with the maximally mixed state), optional per-CNOT depolarizing folded
/// into an effective q, and per-qubit readout flips.
struct NoiseSpec {
    double global_q = 0.0;
    double cnot_depolarizing = 0.0;
    std::vector<ReadoutMatrix> readout;

    static NoiseSpec ideal() { return {}; }

    double effective_q(int n_cnot) const {
        if (global_q < 0 || global_q > 1 || cnot_depolarizing < 0 || cnot_depolarizing > 1)
            throw std::invalid_argument("noise parameter outside [0,1]");
        return 1.0 - (1.0 - global_q) * std::pow(1.0 - cnot_depolarizing, n_cnot);
    }
    NoiseSpec readout_only() const {
        NoiseSpec n;
        n.readout = readout;
        return n;
    }
};

/// Histogram of measured bitstrings.
struct CountsTable {
    int n_bits = 0;
    std::map<Mask, std::uint64_t> counts;

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto &[k, v] : counts) t += v;
        return t;
    }
    std::map<Mask, double> probabilities() const {
        std::map<Mask, double> p;
        double t = static_cast<double>(total());
        if (t == 0) throw NumericalError("empty counts table");
        for (const auto &[k, v] : counts) p[k] = v / t;
        return p;
    }
    bool operator==(const CountsTable &) const = default;
};

/// Draws `shots` measurement outcomes of `probs` (indexed by basis state)
/// under `noise`; `n_cnot` feeds the per-CNOT depolarizing term.
inline CountsTable sample_distribution(const std::vector<double> &probs, int n_bits, std::uint64_t shots, const NoiseSpec &noise,
                                       std::uint64_t seed, int n_cnot = 0) {
    if (probs.size() != (std::size_t{1} << n_bits)) throw std::invalid_argument("distribution size mismatch");
    if (!noise.readout.empty() && static_cast<int>(noise.readout.size()) != n_bits)
        throw std::invalid_argument("readout noise must list one matrix per qubit");
    const double q = noise.effective_q(n_cnot);
    std::vector<double> cdf(probs.size());
    double acc = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        cdf[i] = acc;
    }
    if (acc <= 0) throw NumericalError("distribution has zero mass");
    std::mt19937_64 rng(seed);
    CountsTable out;
    out.n_bits = n_bits;
    const Mask full = low_mask(n_bits);
    for (std::uint64_t s = 0; s < shots; ++s) {
        Mask x;
        if (q > 0 && uniform01(rng) < q) {
            x = rng() & full;
        } else {
            double u = uniform01(rng) * acc;
            auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
            x = static_cast<Mask>(std::min<std::ptrdiff_t>(it - cdf.begin(), cdf.size() - 1));
        }
        if (!noise.readout.empty()) {
            for (int j = 0; j < n_bits; ++j) {
                const auto &r = noise.readout[j];
                double pflip = has_bit(x, j) ? r.p10() : r.p01();
                if (pflip > 0 && uniform01(rng) < pflip) x ^= bit(j);
            }
        }
        ++out.counts[x];
    }
    return out;
}

inline CountsTable sample(const Statevector &state, std::uint64_t shots, const NoiseSpec &noise, std::uint64_t seed, int n_cnot = 0) {
    return sample_distribution(state.probabilities(), state.n_qubits(), shots, noise, seed, n_cnot);
}

/// Result of diagonalizing an operator inside a symmetry sector (or the full
/// Fock space when no sector is given).
struct ExactResult {
    double energy = 0.0;
    std::vector<Mask> basis;
    Eigen::VectorXd sector_vector;
    Statevector state;
    Eigen::VectorXd spectrum;
};

inline Eigen::MatrixXcd sector_matrix(const FermionOperator &op, const std::vector<Mask> &basis) {
    const std::size_t dim = basis.size();
    std::map<Mask, std::size_t> index;
    for (std::size_t i = 0; i < dim; ++i) index[basis[i]] = i;
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(dim, dim);
    for (const auto &[s, c] : op.terms())
        for (std::size_t j = 0; j < dim; ++j) {
            auto r = apply_string(s, basis[j]);
            if (!r) continue;
            auto it = index.find(r->first);
            if (it != index.end()) M(it->second, j) += c * static_cast<double>(r->second);
        }
    return M;
}

/// Dense diagonalization; intended for sectors up to a few thousand states.
inline ExactResult exact_diagonalize(const FermionOperator &op, const std::optional<Sector> &sector = std::nullopt) {
    const int n = op.n_modes();
    std::vector<Mask> basis;
    if (sector) {
        if (sector->spins.size() != n) throw std::invalid_argument("sector spin labels do not match mode count");
        basis = sector->basis();
    } else {
        for (Mask x = 0; x < (Mask{1} << n); ++x) basis.push_back(x);
    }
    if (basis.empty()) throw std::invalid_argument("empty symmetry sector");
    Eigen::MatrixXcd M = sector_matrix(op, basis);
    if ((M - M.adjoint()).cwiseAbs().maxCoeff() > 1e-9) throw NumericalError("operator is not Hermitian on the sector");
    Eigen::MatrixXd R = M.real();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
    if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
    ExactResult res;
    res.energy = es.eigenvalues()(0);
    res.spectrum = es.eigenvalues();
    res.basis = basis;
    res.sector_vector = es.eigenvectors().col(0);
    std::vector<cplx> amps(std::size_t{1} << n, 0.0);
    for (std::size_t i = 0; i < basis.size(); ++i) amps[basis[i]] = res.sector_vector(i);
    res.state = Statevector(n, std::move(amps));
    return res;
}

/// Tr(op P)/dim for the projector P onto the sector: the value in the
/// maximally mixed state of the sector.
inline double mixed_state_value(const FermionOperator &op, const Sector &sector) {
    auto basis = sector.basis();
    if (basis.empty()) throw std::invalid_argument("empty symmetry sector");
    double tr = 0;
    for (const auto &[s, c] : op.terms()) {
        if (s.cre != s.ann) continue;
        for (Mask x : basis) {
            auto r = apply_string(s, x);
            if (r && r->first == x) tr += c.real() * r->second;
        }
    }
    return tr / static_cast<double>(basis.size());
}

/// <psi| op^p |psi> for p = 1..max_power, applying op repeatedly.
inline std::vector<double> exact_moments(const FermionOperator &op, const Statevector &psi, int max_power) {
    std::vector<double> out;
    // <op^p> = <v_a|v_b> with v_k = op^k psi and a + b = p.
    std::vector<std::vector<cplx>> v{psi.amplitudes()};
    int half = (max_power + 1) / 2;
    for (int k = 1; k <= half; ++k) v.push_back(op.apply(v.back()));
    for (int p = 1; p <= max_power; ++p) {
        int a = p / 2, b = p - a;
        cplx s = 0;
        for (std::size_t i = 0; i < v[a].size(); ++i) s += std::conj(v[a][i]) * v[b][i];
        out.push_back(s.real());
    }
    return out;
}

}  // namespace qcm

#endif
