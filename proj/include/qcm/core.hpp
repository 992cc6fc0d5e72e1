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

#ifndef QCM_CORE_HPP
#define QCM_CORE_HPP

#include <bit>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qcm {

using Mask = std::uint64_t;
using cplx = std::complex<double>;

constexpr int kMaxModes = 32;

/// Raised when an input file or configuration is malformed.
class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Raised when a computation hits a numerically invalid state
/// (negative discriminant, zero trace, failed calibration, ...).
class NumericalError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

inline int popcount(Mask m) { return std::popcount(m); }
inline Mask bit(int j) { return Mask{1} << j; }
inline bool has_bit(Mask m, int j) { return (m >> j) & 1U; }
/// Bits strictly below j.
inline Mask below(int j) { return bit(j) - 1; }
/// Bits strictly above j.
inline Mask above(int j) { return ~((bit(j) << 1) - 1); }
inline Mask low_mask(int n) { return n >= 64 ? ~Mask{0} : bit(n) - 1; }

/// Indices of set bits, ascending.
inline std::vector<int> bits_of(Mask m) {
    std::vector<int> out;
    while (m) {
        out.push_back(std::countr_zero(m));
        m &= m - 1;
    }
    return out;
}

inline Mask mask_of(const std::vector<int> &idx) {
    Mask m = 0;
    for (int j : idx) m |= bit(j);
    return m;
}

/// Bitstring with qubit 0 as the rightmost character.
inline std::string to_bitstring(Mask m, int n) {
    std::string s(n, '0');
    for (int j = 0; j < n; ++j)
        if (has_bit(m, j)) s[n - 1 - j] = '1';
    return s;
}

inline Mask from_bitstring(std::string_view s) {
    if (s.size() > 64) throw std::invalid_argument("bitstring longer than 64 characters");
    Mask m = 0;
    int n = static_cast<int>(s.size());
    for (int i = 0; i < n; ++i) {
        char c = s[n - 1 - i];
        if (c == '1')
            m |= bit(i);
        else if (c != '0')
            throw std::invalid_argument("bitstring contains non-binary character");
    }
    return m;
}

enum class Spin : std::int8_t { Up = 0, Down = 1 };

/// Spin label of every spin-orbital mode.
class SpinLabels {
   public:
    SpinLabels() = default;
    explicit SpinLabels(std::vector<Spin> labels) : labels_(std::move(labels)) {}

    /// Mode 2p is spin up, 2p+1 spin down.
    static SpinLabels interleaved(int n_modes) {
        std::vector<Spin> l(n_modes);
        for (int j = 0; j < n_modes; ++j) l[j] = (j % 2 == 0) ? Spin::Up : Spin::Down;
        return SpinLabels(std::move(l));
    }
    /// First half spin up, second half spin down.
    static SpinLabels blocked(int n_modes) {
        std::vector<Spin> l(n_modes);
        for (int j = 0; j < n_modes; ++j) l[j] = (j < n_modes / 2) ? Spin::Up : Spin::Down;
        return SpinLabels(std::move(l));
    }
    static SpinLabels from_ints(const std::vector<int> &v) {
        std::vector<Spin> l;
        for (int x : v) {
            if (x != 0 && x != 1) throw std::invalid_argument("spin label must be 0 or 1");
            l.push_back(x == 0 ? Spin::Up : Spin::Down);
        }
        return SpinLabels(std::move(l));
    }

    int size() const { return static_cast<int>(labels_.size()); }
    bool empty() const { return labels_.empty(); }
    Spin operator[](int j) const { return labels_.at(j); }
    Mask up_mask() const {
        Mask m = 0;
        for (int j = 0; j < size(); ++j)
            if (labels_[j] == Spin::Up) m |= bit(j);
        return m;
    }
    Mask down_mask() const { return low_mask(size()) & ~up_mask(); }
    /// Twice the z-projection of a determinant.
    int two_sz(Mask occ) const { return popcount(occ & up_mask()) - popcount(occ & down_mask()); }

   private:
    std::vector<Spin> labels_;
};

/// Symmetry sector: fixed electron number and fixed 2*S_z.
struct Sector {
    int n_electrons = 0;
    int two_sz = 0;
    SpinLabels spins;

    bool contains(Mask occ) const {
        return popcount(occ) == n_electrons && spins.two_sz(occ) == two_sz;
    }
    /// All determinants of the sector, ascending.
    std::vector<Mask> basis() const {
        std::vector<Mask> out;
        int n = spins.size();
        if (n_electrons < 0 || n_electrons > n) return out;
        Mask m = low_mask(n_electrons);
        if (n_electrons == 0) return contains(0) ? std::vector<Mask>{0} : out;
        Mask limit = bit(n);
        while (m < limit) {
            if (contains(m)) out.push_back(m);
            // Gosper's hack: next mask with the same popcount.
            Mask c = m & (~m + 1);
            Mask r = m + c;
            m = (((r ^ m) >> 2) / c) | r;
        }
        return out;
    }
};

/// splitmix64 step, used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index = 0) {
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return splitmix64(splitmix64(master ^ h) + index);
}

/// Uniform double in [0,1) from a 64-bit engine; independent of the
/// standard library's distribution implementation.
template <class Engine>
double uniform01(Engine &eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace qcm

#endif
