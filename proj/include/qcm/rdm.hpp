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

#ifndef QCM_RDM_HPP
#define QCM_RDM_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "qcm/core.hpp"
#include "qcm/fermion.hpp"

namespace qcm {

/// Sign of sorting a sequence of distinct indices into ascending order, or 0
/// if an index repeats.
inline int sort_sign(const std::vector<int> &idx) {
    int inv = 0;
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = i + 1; j < idx.size(); ++j) {
            if (idx[i] == idx[j]) return 0;
            if (idx[i] > idx[j]) ++inv;
        }
    return (inv & 1) ? -1 : 1;
}

/// p-body reduced density matrix D(C, A) = <a+_C a_A> with both index sets
/// ascending, for a state with a fixed number of electrons.
///
/// Values are keyed by occupation masks. A missing (C, A) entry falls back
/// to conj(D(A, C)), and to zero when neither is stored. Explicit entries for
/// ordered index tuples can be stored separately; they override the
/// antisymmetric completion and are what the antisymmetry check inspects.
class Rdm {
   public:
    using Key = std::pair<Mask, Mask>;
    using Tuple = std::pair<std::vector<int>, std::vector<int>>;

    Rdm() = default;
    Rdm(int n_modes, int order, int n_electrons) : n_modes_(n_modes), order_(order), n_electrons_(n_electrons) {
        if (order < 0 || order > n_modes) throw std::invalid_argument("RDM order out of range");
        if (n_electrons < 0 || n_electrons > n_modes) throw std::invalid_argument("electron count out of range");
    }

    int n_modes() const { return n_modes_; }
    int order() const { return order_; }
    int n_electrons() const { return n_electrons_; }
    const std::map<Key, cplx> &entries() const { return entries_; }
    const std::map<Tuple, cplx> &raw_entries() const { return raw_; }

    void set(Mask cre, Mask ann, cplx v) {
        check(cre, ann);
        entries_[{cre, ann}] = v;
    }
    /// Stores both D(C, A) = v and D(A, C) = conj(v).
    void set_hermitian(Mask cre, Mask ann, cplx v) {
        set(cre, ann, v);
        if (cre != ann) set(ann, cre, std::conj(v));
    }
    void set_raw(const std::vector<int> &cre, const std::vector<int> &ann, cplx v) {
        if (static_cast<int>(cre.size()) != order_ || static_cast<int>(ann.size()) != order_)
            throw std::invalid_argument("raw RDM entry has the wrong order");
        raw_[{cre, ann}] = v;
    }

    bool has(Mask cre, Mask ann) const { return entries_.count({cre, ann}) > 0; }

    cplx value(Mask cre, Mask ann) const {
        auto it = entries_.find({cre, ann});
        if (it != entries_.end()) return it->second;
        it = entries_.find({ann, cre});
        if (it != entries_.end()) return std::conj(it->second);
        return 0.0;
    }

    /// <a+_{c1} ... a+_{cp} a_{a1} ... a_{ap}> for arbitrary index order.
    cplx at(const std::vector<int> &cre, const std::vector<int> &ann) const {
        auto it = raw_.find({cre, ann});
        if (it != raw_.end()) return it->second;
        int s = sort_sign(cre) * sort_sign(ann);
        if (s == 0) return 0.0;
        return static_cast<double>(s) * value(mask_of(cre), mask_of(ann));
    }

    /// +1 or -1: converts D(C, C) to the occupation probability of C.
    int diagonal_sign() const { return ((order_ * (order_ - 1) / 2) & 1) ? -1 : 1; }

    /// Sum of occupation probabilities; C(N, p) for an exact RDM.
    double trace() const {
        double t = 0;
        for (const auto &[k, v] : entries_)
            if (k.first == k.second) t += v.real();
        return diagonal_sign() * t;
    }

    Rdm scaled(double f) const {
        Rdm r = *this;
        for (auto &[k, v] : r.entries_) v *= f;
        for (auto &[k, v] : r.raw_) v *= f;
        return r;
    }

    /// Calls fn(cre, ann, value) for every stored entry and for the mirror of
    /// every stored entry whose mirror is not stored.
    template <class Fn>
    void for_each_entry(Fn &&fn) const {
        for (const auto &[k, v] : entries_) {
            fn(k.first, k.second, v);
            if (k.first != k.second && !entries_.count({k.second, k.first})) fn(k.second, k.first, std::conj(v));
        }
    }

    /// (p-1)-RDM by partial trace: D'(C, A) = 1/(N-p+1) sum_l D(C+l, A+l).
    Rdm contract() const {
        if (order_ == 0) throw std::logic_error("cannot contract a 0-RDM");
        const int q = order_ - 1;
        if (n_electrons_ - q <= 0) throw std::logic_error("contraction undefined for this electron count");
        Rdm out(n_modes_, q, n_electrons_);
        const double f = 1.0 / static_cast<double>(n_electrons_ - q);
        std::map<Key, cplx> acc;
        for_each_entry([&](Mask c, Mask a, cplx v) {
            for (Mask m = c & a; m; m &= m - 1) {
                int l = std::countr_zero(m);
                Mask cc = c & ~bit(l), aa = a & ~bit(l);
                int par = popcount(cc & above(l)) + popcount(aa & below(l));
                acc[{cc, aa}] += (par & 1) ? -v : v;
            }
        });
        for (auto &[k, v] : acc) out.entries_[k] = v * f;
        return out;
    }

    /// Smallest eigenvalue of the matricized RDM, sign-adjusted so an exact
    /// RDM is positive semidefinite.
    double min_eigenvalue() const {
        std::set<Mask> rows;
        for (const auto &[k, v] : entries_) {
            rows.insert(k.first);
            rows.insert(k.second);
        }
        if (rows.empty()) return 0.0;
        std::vector<Mask> idx(rows.begin(), rows.end());
        const int d = static_cast<int>(idx.size());
        Eigen::MatrixXcd M(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) M(i, j) = value(idx[i], idx[j]);
        // a+_C a_A with ascending A differs from the positive form (a_C)^dag a_A
        // by reversing p creators.
        if (diagonal_sign() < 0) M = -M;
        Eigen::MatrixXcd Hm = 0.5 * (M + M.adjoint());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(Hm, Eigen::EigenvaluesOnly);
        return es.eigenvalues()(0);
    }

   private:
    void check(Mask c, Mask a) const {
        if (popcount(c) != order_ || popcount(a) != order_) throw std::invalid_argument("RDM entry has the wrong order");
        if ((c | a) & ~low_mask(n_modes_)) throw std::out_of_range("RDM entry touches mode outside the register");
    }

    int n_modes_ = 0, order_ = 0, n_electrons_ = 0;
    std::map<Key, cplx> entries_;
    std::map<Tuple, cplx> raw_;
};

/// The given RDM together with all lower orders obtained by contraction.
class RdmHierarchy {
   public:
    explicit RdmHierarchy(const Rdm &top) {
        levels_.resize(top.order() + 1);
        levels_[top.order()] = top;
        for (int q = top.order(); q > 0; --q) levels_[q - 1] = levels_[q].contract();
    }
    const Rdm &level(int q) const { return levels_.at(q); }
    int order() const { return static_cast<int>(levels_.size()) - 1; }

   private:
    std::vector<Rdm> levels_;
};

/// <op> from reduced density matrices. Terms that change the particle number
/// or exceed the electron count vanish; terms with order above the RDM order
/// (but within the electron count) are an error.
inline cplx expectation_from_rdm(const FermionOperator &op, const RdmHierarchy &rdms) {
    const int p = rdms.order();
    const int ne = rdms.level(p).n_electrons();
    cplx s = 0;
    for (const auto &[str, c] : op.terms()) {
        if (!str.particle_conserving()) continue;
        int q = popcount(str.cre);
        if (q > ne) continue;
        if (q > p) throw std::invalid_argument("operator order exceeds the RDM order");
        s += c * rdms.level(q).value(str.cre, str.ann);
    }
    return s;
}

inline cplx expectation_from_rdm(const FermionOperator &op, const Rdm &rdm) { return expectation_from_rdm(op, RdmHierarchy(rdm)); }

/// Exact p-RDM of a state vector in the canonical triangle (cre <= ann),
/// restricted to spin-conserving entries when spins are given.
inline Rdm exact_rdm(const std::vector<cplx> &psi, int n_modes, int order, int n_electrons, const SpinLabels *spins = nullptr) {
    Rdm r(n_modes, order, n_electrons);
    std::vector<Mask> sets;
    for (Mask m = 0; m < (Mask{1} << n_modes); ++m)
        if (popcount(m) == order) sets.push_back(m);
    for (Mask c : sets)
        for (Mask a : sets) {
            if (c > a) continue;
            if (spins && popcount(c & spins->up_mask()) != popcount(a & spins->up_mask())) continue;
            cplx v = 0;
            OpString s{c, a};
            for (Mask x = 0; x < psi.size(); ++x) {
                if (psi[x] == 0.0) continue;
                auto res = apply_string(s, x);
                if (res) v += std::conj(psi[res->first]) * static_cast<double>(res->second) * psi[x];
            }
            r.set(c, a, v);
        }
    return r;
}

}  // namespace qcm

#endif
