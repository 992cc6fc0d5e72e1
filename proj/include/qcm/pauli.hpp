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

#ifndef QCM_PAULI_HPP
#define QCM_PAULI_HPP

#include <map>
#include <string>
#include <vector>

#include "qcm/core.hpp"
#include "qcm/fermion.hpp"

namespace qcm {

/// Tensor product of single-qubit Paulis: qubit j carries X if only x bit j
/// is set, Z if only z bit j, Y if both.
struct PauliString {
    Mask x = 0;
    Mask z = 0;
    auto operator<=>(const PauliString &) const = default;

    std::string to_string(int n) const {
        std::string s;
        for (int j = 0; j < n; ++j) {
            bool bx = has_bit(x, j), bz = has_bit(z, j);
            s += bx ? (bz ? 'Y' : 'X') : (bz ? 'Z' : 'I');
        }
        return s;
    }
};

/// Product of two Pauli strings: returns the phase exponent k in i^k.
inline int pauli_product_phase(const PauliString &a, const PauliString &b) {
    int k = 0;
    Mask touched = a.x | a.z | b.x | b.z;
    for (Mask m = touched; m; m &= m - 1) {
        int j = std::countr_zero(m);
        int pa = int(has_bit(a.x, j)) | (int(has_bit(a.z, j)) << 1);  // 1 X, 2 Z, 3 Y
        int pb = int(has_bit(b.x, j)) | (int(has_bit(b.z, j)) << 1);
        if (!pa || !pb || pa == pb) continue;
        // Cyclic order X -> Y -> Z gives +i.
        auto rank = [](int p) { return p == 1 ? 0 : (p == 3 ? 1 : 2); };
        k += ((rank(pb) - rank(pa) + 3) % 3 == 1) ? 1 : 3;
    }
    return k & 3;
}

class PauliOperator {
   public:
    using TermMap = std::map<PauliString, cplx>;
    PauliOperator() = default;
    explicit PauliOperator(int n) : n_(n) {}

    int n_qubits() const { return n_; }
    const TermMap &terms() const { return terms_; }

    void add(const PauliString &p, cplx c) {
        auto &v = terms_[p];
        v += c;
        if (std::abs(v) < 1e-14) terms_.erase(p);
    }

    friend PauliOperator operator*(const PauliOperator &a, const PauliOperator &b) {
        static const cplx ipow[4] = {1.0, cplx(0, 1), -1.0, cplx(0, -1)};
        PauliOperator out(a.n_);
        for (const auto &[pa, ca] : a.terms_)
            for (const auto &[pb, cb] : b.terms_) {
                int k = pauli_product_phase(pa, pb);
                out.add(PauliString{pa.x ^ pb.x, pa.z ^ pb.z}, ipow[k] * ca * cb);
            }
        return out;
    }
    PauliOperator &operator+=(const PauliOperator &o) {
        for (const auto &[p, c] : o.terms_) add(p, c);
        return *this;
    }

    /// Action on a dense state (qubit j = bit j of the index).
    std::vector<cplx> apply(const std::vector<cplx> &psi) const {
        std::vector<cplx> out(psi.size(), 0.0);
        for (const auto &[p, c] : terms_) {
            // Y = i X Z, so P = i^{|x&z|} X^x Z^z.
            int ny = popcount(p.x & p.z) & 3;
            static const cplx ipow[4] = {1.0, cplx(0, 1), -1.0, cplx(0, -1)};
            cplx pc = c * ipow[ny];
            for (Mask s = 0; s < psi.size(); ++s) {
                double zs = (popcount(s & p.z) & 1) ? -1.0 : 1.0;
                out[s ^ p.x] += pc * zs * psi[s];
            }
        }
        return out;
    }

    cplx expectation(const std::vector<cplx> &psi) const {
        auto v = apply(psi);
        cplx s = 0;
        for (std::size_t i = 0; i < v.size(); ++i) s += std::conj(psi[i]) * v[i];
        return s;
    }

   private:
    int n_ = 0;
    TermMap terms_;
};

/// Jordan-Wigner image: a_j = Z_0...Z_{j-1} (X_j + i Y_j)/2.
inline PauliOperator jordan_wigner(const FermionOperator &op) {
    const int n = op.n_modes();
    auto ladder = [n](int j, bool dag) {
        PauliOperator l(n);
        Mask zs = below(j);
        l.add(PauliString{bit(j), zs}, 0.5);
        l.add(PauliString{bit(j), zs | bit(j)}, dag ? cplx(0, -0.5) : cplx(0, 0.5));
        return l;
    };
    PauliOperator out(n);
    for (const auto &[s, c] : op.terms()) {
        PauliOperator t(n);
        t.add(PauliString{}, c);
        for (int j : bits_of(s.cre)) t = t * ladder(j, true);
        for (int j : bits_of(s.ann)) t = t * ladder(j, false);
        out += t;
    }
    return out;
}

}  // namespace qcm

#endif
