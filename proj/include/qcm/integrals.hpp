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

#ifndef QCM_INTEGRALS_HPP
#define QCM_INTEGRALS_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "qcm/core.hpp"
#include "qcm/fermion.hpp"

namespace qcm {

/// Spatial-orbital integrals of a closed-shell molecule. Two-electron
/// integrals are kept in chemists' notation (pq|rs) with the full
/// eightfold symmetry filled in.
class MolecularIntegrals {
   public:
    MolecularIntegrals() = default;
    MolecularIntegrals(int norb, int nelec, int ms2 = 0)
        : norb_(norb), nelec_(nelec), ms2_(ms2), h1_(std::size_t(norb) * norb, 0.0), h2_(std::size_t(norb) * norb * norb * norb, 0.0) {
        if (norb <= 0 || 2 * norb > kMaxModes) throw std::invalid_argument("orbital count out of range");
    }

    int norb() const { return norb_; }
    int nelec() const { return nelec_; }
    int ms2() const { return ms2_; }
    int n_modes() const { return 2 * norb_; }
    double constant() const { return e_const_; }
    void set_constant(double e) { e_const_ = e; }

    double h1(int p, int q) const { return h1_[idx2(p, q)]; }
    /// Chemists' notation (pq|rs).
    double eri(int p, int q, int r, int s) const { return h2_[idx4(p, q, r, s)]; }
    /// Physicists' notation <pq|rs> = (pr|qs).
    double phys(int p, int q, int r, int s) const { return eri(p, r, q, s); }

    void set_h1(int p, int q, double v) {
        h1_[idx2(p, q)] = v;
        h1_[idx2(q, p)] = v;
    }
    /// Sets (pq|rs) and its symmetry images.
    void set_eri(int p, int q, int r, int s, double v) {
        for (auto [a, b] : {std::pair{p, q}, std::pair{q, p}})
            for (auto [c, d] : {std::pair{r, s}, std::pair{s, r}}) {
                h2_[idx4(a, b, c, d)] = v;
                h2_[idx4(c, d, a, b)] = v;
            }
    }

    /// Closed-shell occupation: lowest nelec interleaved spin-orbitals.
    Mask hartree_fock_occupation() const { return low_mask(nelec_); }

   private:
    std::size_t idx2(int p, int q) const {
        check(p), check(q);
        return std::size_t(p) * norb_ + q;
    }
    std::size_t idx4(int p, int q, int r, int s) const {
        check(p), check(q), check(r), check(s);
        return ((std::size_t(p) * norb_ + q) * norb_ + r) * norb_ + s;
    }
    void check(int p) const {
        if (p < 0 || p >= norb_) throw std::out_of_range("orbital index out of range");
    }

    int norb_ = 0, nelec_ = 0, ms2_ = 0;
    double e_const_ = 0.0;
    std::vector<double> h1_, h2_;
};

namespace detail {

inline std::string upper(std::string s) {
    for (auto &c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

inline bool header_int(const std::string &header, const std::string &key, int &out) {
    std::regex re("(^|[^A-Z0-9_])" + key + R"(\s*=\s*([-+]?\d+))");
    std::smatch m;
    if (!std::regex_search(header, m, re)) return false;
    out = std::stoi(m[2]);
    return true;
}

}  // namespace detail

/// Parses an FCIDUMP stream (restricted orbitals, one-based indices).
inline MolecularIntegrals parse_fcidump(std::istream &in) {
    std::string line, header;
    int lineno = 0;
    bool ended = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::string u = detail::upper(line);
        header += u + " ";
        if (u.find("&END") != std::string::npos || u.find('/') != std::string::npos) {
            ended = true;
            break;
        }
    }
    if (!ended) throw ConfigError("FCIDUMP: header is not terminated by &END");
    if (header.find("&FCI") == std::string::npos) throw ConfigError("FCIDUMP: missing &FCI namelist");
    int norb = 0, nelec = 0, ms2 = 0;
    if (!detail::header_int(header, "NORB", norb)) throw ConfigError("FCIDUMP: NORB missing");
    if (!detail::header_int(header, "NELEC", nelec)) throw ConfigError("FCIDUMP: NELEC missing");
    detail::header_int(header, "MS2", ms2);
    if (norb <= 0 || 2 * norb > kMaxModes) throw ConfigError("FCIDUMP: NORB out of supported range");
    if (nelec < 0 || nelec > 2 * norb) throw ConfigError("FCIDUMP: NELEC inconsistent with NORB");
    MolecularIntegrals ints(norb, nelec, ms2);
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        std::string vs;
        int i, j, k, l;
        if (!(ls >> vs >> i >> j >> k >> l))
            throw ConfigError("FCIDUMP line " + std::to_string(lineno) + ": expected 'value i j k l'");
        for (auto &c : vs)
            if (c == 'D' || c == 'd') c = 'e';
        double v;
        try {
            std::size_t pos;
            v = std::stod(vs, &pos);
            if (pos != vs.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception &) {
            throw ConfigError("FCIDUMP line " + std::to_string(lineno) + ": bad value '" + vs + "'");
        }
        auto bad = [&](int x) { return x < 0 || x > norb; };
        if (bad(i) || bad(j) || bad(k) || bad(l))
            throw ConfigError("FCIDUMP line " + std::to_string(lineno) + ": index out of range");
        if (i && j && k && l) {
            ints.set_eri(i - 1, j - 1, k - 1, l - 1, v);
        } else if (i && j && !k && !l) {
            ints.set_h1(i - 1, j - 1, v);
        } else if (!i && !j && !k && !l) {
            ints.set_constant(v);
        } else if (i && !j && !k && !l) {
            // orbital energy, not needed
        } else {
            throw ConfigError("FCIDUMP line " + std::to_string(lineno) + ": unsupported index pattern");
        }
    }
    return ints;
}

inline MolecularIntegrals load_fcidump(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open FCIDUMP file: " + path);
    return parse_fcidump(in);
}

/// Writes the unique integrals at full double precision.
inline void write_fcidump(const MolecularIntegrals &ints, std::ostream &out) {
    const int n = ints.norb();
    out << " &FCI NORB=" << n << ",NELEC=" << ints.nelec() << ",MS2=" << ints.ms2() << ",\n  ORBSYM=";
    for (int i = 0; i < n; ++i) out << "1,";
    out << "\n  ISYM=1,\n &END\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10) << std::scientific;
    for (int p = 0; p < n; ++p)
        for (int q = 0; q <= p; ++q)
            for (int r = 0; r < n; ++r)
                for (int s = 0; s <= r; ++s) {
                    if (p * (p + 1) / 2 + q < r * (r + 1) / 2 + s) continue;
                    double v = ints.eri(p, q, r, s);
                    if (v != 0.0) out << v << " " << p + 1 << " " << q + 1 << " " << r + 1 << " " << s + 1 << "\n";
                }
    for (int p = 0; p < n; ++p)
        for (int q = 0; q <= p; ++q) {
            double v = ints.h1(p, q);
            if (v != 0.0) out << v << " " << p + 1 << " " << q + 1 << " 0 0\n";
        }
    out << ints.constant() << " 0 0 0 0\n";
}

inline void write_fcidump(const MolecularIntegrals &ints, const std::string &path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write FCIDUMP file: " + path);
    write_fcidump(ints, out);
}

/// Removes doubly occupied core orbitals and empty virtual orbitals (spatial
/// indices). The core contributes to the constant and to an effective
/// one-electron operator.
inline MolecularIntegrals freeze_orbitals(const MolecularIntegrals &ints, const std::vector<int> &frozen_occupied,
                                          const std::vector<int> &frozen_virtual) {
    const int n = ints.norb();
    std::vector<int> kind(n, 0);  // 0 active, 1 core, 2 virtual
    for (int i : frozen_occupied) {
        if (i < 0 || i >= n) throw std::out_of_range("frozen orbital out of range");
        if (kind[i]) throw std::invalid_argument("orbital frozen twice");
        kind[i] = 1;
    }
    for (int i : frozen_virtual) {
        if (i < 0 || i >= n) throw std::out_of_range("frozen orbital out of range");
        if (kind[i]) throw std::invalid_argument("orbital frozen twice");
        kind[i] = 2;
    }
    std::vector<int> act;
    for (int i = 0; i < n; ++i)
        if (!kind[i]) act.push_back(i);
    const int nc = static_cast<int>(frozen_occupied.size());
    const int na = static_cast<int>(act.size());
    const int ne = ints.nelec() - 2 * nc;
    if (na == 0 || ne < 0 || ne > 2 * na) throw std::invalid_argument("freezing leaves an inconsistent active space");
    MolecularIntegrals out(na, ne, ints.ms2());
    double e = ints.constant();
    for (int i : frozen_occupied) {
        e += 2.0 * ints.h1(i, i);
        for (int j : frozen_occupied) e += 2.0 * ints.eri(i, i, j, j) - ints.eri(i, j, j, i);
    }
    out.set_constant(e);
    for (int a = 0; a < na; ++a)
        for (int b = 0; b <= a; ++b) {
            int p = act[a], q = act[b];
            double v = ints.h1(p, q);
            for (int i : frozen_occupied) v += 2.0 * ints.eri(p, q, i, i) - ints.eri(p, i, i, q);
            out.set_h1(a, b, v);
        }
    for (int a = 0; a < na; ++a)
        for (int b = 0; b < na; ++b)
            for (int c = 0; c < na; ++c)
                for (int d = 0; d < na; ++d) out.set_eri(a, b, c, d, ints.eri(act[a], act[b], act[c], act[d]));
    return out;
}

/// Second-quantized Hamiltonian over 2*norb interleaved spin-orbitals:
/// H = E0 + sum h_pq a+_p a_q + 1/2 sum (pr|qs) a+_{p s} a+_{q t} a_{s t} a_{r s}.
inline FermionOperator molecular_hamiltonian(const MolecularIntegrals &ints, double cutoff = 1e-14) {
    const int n = ints.norb();
    FermionOperator H(2 * n);
    H.add(OpString{}, ints.constant());
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            double v = ints.h1(p, q);
            if (std::abs(v) < cutoff) continue;
            for (int sg = 0; sg < 2; ++sg) H.add(OpString{bit(2 * p + sg), bit(2 * q + sg)}, v);
        }
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q)
            for (int r = 0; r < n; ++r)
                for (int s = 0; s < n; ++s) {
                    double v = 0.5 * ints.eri(p, r, q, s);
                    if (std::abs(v) < cutoff) continue;
                    for (int sg = 0; sg < 2; ++sg)
                        for (int tg = 0; tg < 2; ++tg) {
                            int P = 2 * p + sg, Q = 2 * q + tg, S = 2 * s + tg, R = 2 * r + sg;
                            if (P == Q || R == S) continue;
                            // a+_P a+_Q a_S a_R, sorted to ascending runs.
                            double sign = 1.0;
                            if (P > Q) sign = -sign;
                            if (S > R) sign = -sign;
                            H.add(OpString{bit(P) | bit(Q), bit(R) | bit(S)}, sign * v);
                        }
                }
    return H;
}

}  // namespace qcm

#endif
