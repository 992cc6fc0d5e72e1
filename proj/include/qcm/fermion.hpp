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

#ifndef QCM_FERMION_HPP
#define QCM_FERMION_HPP

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qcm/core.hpp"

namespace qcm {

/// Normal-ordered operator string a^dag_{c1} ... a^dag_{ck} a_{a1} ... a_{al}
/// with creators ascending and annihilators ascending. Each mode appears at
/// most once among the creators and at most once among the annihilators.
struct OpString {
    Mask cre = 0;
    Mask ann = 0;

    int order() const { return std::max(popcount(cre), popcount(ann)); }
    bool particle_conserving() const { return popcount(cre) == popcount(ann); }
    auto operator<=>(const OpString &) const = default;
};

/// Applies a single ladder operator to a basis state. Returns false if the
/// result is zero; otherwise flips `sign` by the Jordan-Wigner parity.
inline bool apply_ladder(Mask &state, int mode, bool dagger, int &sign) {
    if (has_bit(state, mode) == dagger) return false;
    if (popcount(state & below(mode)) & 1) sign = -sign;
    state ^= bit(mode);
    return true;
}

/// Applies an operator string to a basis state. Returns the resulting state
/// and sign, or nullopt if it annihilates the state.
inline std::optional<std::pair<Mask, int>> apply_string(const OpString &op, Mask state) {
    if ((state & op.ann) != op.ann) return std::nullopt;
    Mask mid = state & ~op.ann;
    if (mid & op.cre) return std::nullopt;
    int sign = 1;
    // The rightmost annihilator (highest mode) acts first.
    for (Mask m = op.ann; m;) {
        int j = 63 - std::countl_zero(m);
        apply_ladder(state, j, false, sign);
        m &= ~bit(j);
    }
    for (Mask m = op.cre; m;) {
        int j = 63 - std::countl_zero(m);
        apply_ladder(state, j, true, sign);
        m &= ~bit(j);
    }
    return std::make_pair(state, sign);
}

/// Sparse linear combination of normal-ordered operator strings over a fixed
/// number of modes. Terms whose magnitude drops below `kDropTolerance` after
/// an arithmetic operation are removed.
class FermionOperator {
   public:
    static constexpr double kDropTolerance = 1e-12;
    using TermMap = std::map<OpString, cplx>;

    FermionOperator() = default;
    explicit FermionOperator(int n_modes) : n_modes_(n_modes) {
        if (n_modes < 0 || n_modes > kMaxModes) throw std::invalid_argument("mode count out of range");
    }

    static FermionOperator identity(int n_modes, cplx c = 1.0) {
        FermionOperator op(n_modes);
        op.add(OpString{}, c);
        return op;
    }

    int n_modes() const { return n_modes_; }
    const TermMap &terms() const { return terms_; }
    std::size_t size() const { return terms_.size(); }
    bool empty() const { return terms_.empty(); }

    cplx coefficient(const OpString &s) const {
        auto it = terms_.find(s);
        return it == terms_.end() ? cplx{0.0} : it->second;
    }
    cplx constant() const { return coefficient(OpString{}); }

    /// Adds `c` times an already normal-ordered string.
    void add(const OpString &s, cplx c) {
        check_modes(s.cre | s.ann);
        auto &v = terms_[s];
        v += c;
        if (std::abs(v) < kDropTolerance) terms_.erase(s);
    }

    /// Adds `c` times an arbitrary product of ladder operators, given left to
    /// right as (mode, is_creation). The product is normal ordered.
    void add_product(const std::vector<std::pair<int, bool>> &ops, cplx c) {
        FermionOperator acc = identity(n_modes_, c);
        for (auto [mode, dag] : ops) {
            if (mode < 0 || mode >= n_modes_) throw std::out_of_range("mode index out of range");
            FermionOperator f(n_modes_);
            if (dag)
                f.terms_[OpString{bit(mode), 0}] = 1.0;
            else
                f.terms_[OpString{0, bit(mode)}] = 1.0;
            acc = acc * f;
        }
        *this += acc;
    }

    FermionOperator &operator+=(const FermionOperator &o) {
        check_same(o);
        for (const auto &[s, c] : o.terms_) add(s, c);
        return *this;
    }
    FermionOperator &operator-=(const FermionOperator &o) {
        check_same(o);
        for (const auto &[s, c] : o.terms_) add(s, -c);
        return *this;
    }
    FermionOperator &operator*=(cplx a) {
        for (auto it = terms_.begin(); it != terms_.end();) {
            it->second *= a;
            if (std::abs(it->second) < kDropTolerance)
                it = terms_.erase(it);
            else
                ++it;
        }
        return *this;
    }
    friend FermionOperator operator+(FermionOperator a, const FermionOperator &b) { return a += b; }
    friend FermionOperator operator-(FermionOperator a, const FermionOperator &b) { return a -= b; }
    friend FermionOperator operator*(FermionOperator a, cplx s) { return a *= s; }
    friend FermionOperator operator*(cplx s, FermionOperator a) { return a *= s; }

    /// Operator product, normal ordered via Wick contraction of the left
    /// annihilators against the right creators.
    friend FermionOperator operator*(const FermionOperator &a, const FermionOperator &b) {
        a.check_same(b);
        std::unordered_map<std::uint64_t, cplx> acc;
        acc.reserve(a.size() * 4 + b.size() * 4);
        for (const auto &[s1, w1] : a.terms_) {
            for (const auto &[s2, w2] : b.terms_) {
                multiply_strings(s1, s2, w1 * w2, acc);
            }
        }
        FermionOperator out(a.n_modes_);
        for (const auto &[key, v] : acc) {
            if (std::abs(v) >= kDropTolerance) out.terms_.emplace(OpString{key >> 32, key & 0xffffffffULL}, v);
        }
        return out;
    }

    /// Hermitian conjugate.
    FermionOperator adjoint() const {
        FermionOperator out(n_modes_);
        for (const auto &[s, c] : terms_) {
            // (C A)^dag = A^dag C^dag; reversing both ascending runs and moving
            // k creators past l creators.
            int k = popcount(s.cre), l = popcount(s.ann);
            int parity = k * (k - 1) / 2 + l * (l - 1) / 2;
            double sign = (parity & 1) ? -1.0 : 1.0;
            out.terms_[OpString{s.ann, s.cre}] += sign * std::conj(c);
        }
        return out;
    }

    /// p-th power by repeated multiplication; p = 0 gives the identity.
    FermionOperator power(int p) const {
        if (p < 0) throw std::invalid_argument("negative operator power");
        FermionOperator out = identity(n_modes_);
        for (int i = 0; i < p; ++i) out = out * *this;
        return out;
    }

    int max_order() const {
        int o = 0;
        for (const auto &[s, c] : terms_) o = std::max(o, s.order());
        return o;
    }
    bool particle_conserving() const {
        return std::all_of(terms_.begin(), terms_.end(), [](const auto &t) { return t.first.particle_conserving(); });
    }

    /// Applies the operator to a dense state vector over 2^n basis states.
    std::vector<cplx> apply(const std::vector<cplx> &psi) const {
        if (psi.size() != (std::size_t{1} << n_modes_)) throw std::invalid_argument("state dimension mismatch");
        std::vector<cplx> out(psi.size(), 0.0);
        for (const auto &[s, c] : terms_) {
            for (Mask x = 0; x < psi.size(); ++x) {
                if (psi[x] == 0.0) continue;
                auto r = apply_string(s, x);
                if (r) out[r->first] += c * static_cast<double>(r->second) * psi[x];
            }
        }
        return out;
    }

    /// <phi|op|psi>
    cplx matrix_element(const std::vector<cplx> &phi, const std::vector<cplx> &psi) const {
        auto v = apply(psi);
        cplx s = 0;
        for (std::size_t i = 0; i < v.size(); ++i) s += std::conj(phi[i]) * v[i];
        return s;
    }

    /// One term per line: `coeff [3^ 2^ 1 0]`, real coefficients written as
    /// a single number and complex ones as `(re,im)`.
    std::string to_text() const {
        std::ostringstream os;
        os << std::setprecision(std::numeric_limits<double>::max_digits10);
        os << "# modes " << n_modes_ << "\n";
        for (const auto &[s, c] : terms_) {
            if (c.imag() == 0.0)
                os << c.real();
            else
                os << "(" << c.real() << "," << c.imag() << ")";
            os << " [";
            bool first = true;
            for (int j : bits_of(s.cre)) {
                os << (first ? "" : " ") << j << "^";
                first = false;
            }
            for (int j : bits_of(s.ann)) {
                os << (first ? "" : " ") << j;
                first = false;
            }
            os << "]\n";
        }
        return os.str();
    }

    static FermionOperator from_text(const std::string &text) {
        std::istringstream is(text);
        std::string line;
        int n_modes = -1;
        std::vector<std::pair<std::vector<std::pair<int, bool>>, cplx>> rows;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (line.empty()) continue;
            if (line[0] == '#') {
                std::istringstream hs(line.substr(1));
                std::string key;
                if (hs >> key && key == "modes") hs >> n_modes;
                continue;
            }
            auto lb = line.find('['), rb = line.find(']');
            if (lb == std::string::npos || rb == std::string::npos || rb < lb)
                throw ConfigError("operator text line " + std::to_string(lineno) + ": missing brackets");
            std::string cs = line.substr(0, lb);
            cplx c;
            std::istringstream css(cs);
            if (cs.find('(') != std::string::npos) {
                css >> c;
            } else {
                double re;
                css >> re;
                c = re;
            }
            if (css.fail()) throw ConfigError("operator text line " + std::to_string(lineno) + ": bad coefficient");
            std::istringstream ts(line.substr(lb + 1, rb - lb - 1));
            std::string tok;
            std::vector<std::pair<int, bool>> ops;
            while (ts >> tok) {
                bool dag = tok.back() == '^';
                if (dag) tok.pop_back();
                try {
                    ops.emplace_back(std::stoi(tok), dag);
                } catch (const std::exception &) {
                    throw ConfigError("operator text line " + std::to_string(lineno) + ": bad mode '" + tok + "'");
                }
            }
            rows.emplace_back(std::move(ops), c);
        }
        if (n_modes < 0) {
            n_modes = 0;
            for (auto &r : rows)
                for (auto &o : r.first) n_modes = std::max(n_modes, o.first + 1);
        }
        FermionOperator op(n_modes);
        for (auto &[ops, c] : rows) op.add_product(ops, c);
        return op;
    }

   private:
    static void multiply_strings(const OpString &l, const OpString &r, cplx w, std::unordered_map<std::uint64_t, cplx> &acc) {
        const Mask c1 = l.cre, a1 = l.ann, c2 = r.cre, a2 = r.ann;
        const Mask common = a1 & c2;
        // Enumerate subsets S of common (contracted pairs).
        Mask sub = common;
        while (true) {
            Mask ar = a1 & ~sub, cr = c2 & ~sub;
            if (!(c1 & cr) && !(ar & a2)) {
                int parity = 0;
                for (Mask m = sub; m; m &= m - 1) {
                    int s = std::countr_zero(m);
                    parity += popcount(ar & below(s)) + popcount(cr & below(s));
                }
                int k = popcount(sub), nar = popcount(ar), ncr = popcount(cr);
                parity += k * (k - 1) / 2 + nar * k + nar * ncr;
                for (Mask m = cr; m; m &= m - 1) parity += popcount(c1 & above(std::countr_zero(m)));
                for (Mask m = a2; m; m &= m - 1) parity += popcount(ar & above(std::countr_zero(m)));
                std::uint64_t key = ((c1 | cr) << 32) | (ar | a2);
                acc[key] += (parity & 1) ? -w : w;
            }
            if (sub == 0) break;
            sub = (sub - 1) & common;
        }
    }

    void check_modes(Mask m) const {
        if (m & ~low_mask(n_modes_)) throw std::out_of_range("operator string touches mode outside the register");
    }
    void check_same(const FermionOperator &o) const {
        if (o.n_modes_ != n_modes_) throw std::invalid_argument("operators act on different mode counts");
    }

    int n_modes_ = 0;
    TermMap terms_;
};

/// Restricts a particle-conserving operator to the active modes, given modes
/// that are frozen occupied and frozen virtual. Active modes are renumbered
/// in ascending order. Terms touching a virtual mode, or touching a frozen
/// occupied mode on one side only, vanish.
inline FermionOperator freeze_operator(const FermionOperator &op, Mask frozen_occupied, Mask frozen_virtual) {
    const int n = op.n_modes();
    if ((frozen_occupied | frozen_virtual) & ~low_mask(n)) throw std::out_of_range("frozen mode outside the register");
    if (frozen_occupied & frozen_virtual) throw std::invalid_argument("mode is both frozen occupied and frozen virtual");
    if (!op.particle_conserving()) throw std::invalid_argument("freeze_operator requires a particle-conserving operator");
    const Mask frozen = frozen_occupied | frozen_virtual;
    std::vector<int> new_index(n, -1);
    int n_active = 0;
    for (int j = 0; j < n; ++j)
        if (!has_bit(frozen, j)) new_index[j] = n_active++;
    auto compress = [&](Mask m) {
        Mask out = 0;
        for (int j : bits_of(m)) out |= bit(new_index[j]);
        return out;
    };
    FermionOperator out(n_active);
    for (const auto &[s, c] : op.terms()) {
        if ((s.cre | s.ann) & frozen_virtual) continue;
        if ((s.cre & frozen_occupied) != (s.ann & frozen_occupied)) continue;
        // Evaluate the embedded string on the minimal active state and compare
        // with the bare active string; the ratio is state independent.
        Mask act_ann = s.ann & ~frozen_occupied, act_cre = s.cre & ~frozen_occupied;
        auto full = apply_string(s, act_ann | frozen_occupied);
        OpString reduced{compress(act_cre), compress(act_ann)};
        auto part = apply_string(reduced, compress(act_ann));
        if (!full || !part) throw std::logic_error("freeze_operator: unexpected vanishing string");
        out.add(reduced, c * static_cast<double>(full->second * part->second));
    }
    return out;
}

/// Dense matrix of an operator in the full 2^n Fock space, row-major.
inline std::vector<cplx> dense_matrix(const FermionOperator &op) {
    const std::size_t dim = std::size_t{1} << op.n_modes();
    std::vector<cplx> m(dim * dim, 0.0);
    for (const auto &[s, c] : op.terms()) {
        for (Mask x = 0; x < dim; ++x) {
            auto r = apply_string(s, x);
            if (r) m[r->first * dim + x] += c * static_cast<double>(r->second);
        }
    }
    return m;
}

}  // namespace qcm

#endif
