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

#ifndef QCM_ROUTING_HPP
#define QCM_ROUTING_HPP

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qcm/core.hpp"

namespace qcm {

/// Operation on the edge (q, q+1) during one timestep.
struct RouteAction {
    enum Kind { Swap, Interact };
    Kind kind;
    int q;
    bool operator==(const RouteAction &) const = default;
};

using RouteLayer = std::vector<RouteAction>;

/// Timestep schedule bringing every pair of qubits onto adjacent positions
/// and interacting them exactly once.
struct RouteSchedule {
    int depth = 0;
    std::vector<RouteLayer> layers;
    bool certified = false;  // true when depth is proven minimal
};

struct RouteOptions {
    int max_depth = 64;
    int exact_qubit_limit = 12;            // above this, use the greedy router
    std::uint64_t node_budget = 20000000;  // search nodes before falling back
};

namespace detail {

class RouteSearch {
   public:
    RouteSearch(int n, const std::vector<std::pair<int, int>> &pairs, std::uint64_t budget)
        : n_(n), budget_(budget), pairs_(pairs.size()) {
        pos_.resize(2 * pairs.size());
        occ_.assign(n, -1);
        for (std::size_t c = 0; c < pairs.size(); ++c) {
            pos_[2 * c] = pairs[c].first;
            pos_[2 * c + 1] = pairs[c].second;
            occ_[pairs[c].first] = static_cast<int>(2 * c);
            occ_[pairs[c].second] = static_cast<int>(2 * c + 1);
        }
        done_.assign(pairs.size(), false);
    }

    int lower_bound() const {
        int lb = 0;
        for (int c = 0; c < pairs_; ++c) {
            if (done_[c]) continue;
            int d = std::abs(pos_[2 * c] - pos_[2 * c + 1]);
            lb = std::max(lb, (d - 1 + 1) / 2 + 1);
        }
        return lb;
    }

    /// Depth-limited search; fills `path` on success.
    bool solve(int depth, std::vector<RouteLayer> &path) {
        memo_.clear();
        path.clear();
        return dfs(depth, path);
    }
    bool exhausted() const { return nodes_ > budget_; }

   private:
    bool all_done() const { return std::all_of(done_.begin(), done_.end(), [](bool b) { return b; }); }

    std::string key() const {
        std::string k;
        for (int c = 0; c < pairs_; ++c) {
            if (done_[c]) {
                k += char(-1), k += char(-1);
                continue;
            }
            int a = pos_[2 * c], b = pos_[2 * c + 1];
            k += char(std::min(a, b)), k += char(std::max(a, b));
        }
        return k;
    }

    bool dfs(int remaining, std::vector<RouteLayer> &path) {
        if (all_done()) return true;
        if (remaining <= 0 || lower_bound() > remaining) return false;
        if (++nodes_ > budget_) return false;
        auto k = key();
        auto it = memo_.find(k);
        if (it != memo_.end() && it->second >= remaining) return false;
        RouteLayer layer;
        if (layers(0, layer, remaining, path)) return true;
        auto &m = memo_[k];
        m = std::max(m, remaining);
        return false;
    }

    bool tracked(int q) const {
        int t = occ_[q];
        return t >= 0 && !done_[t / 2];
    }

    // Enumerates action sets edge by edge, recursing into the next timestep
    // once the row is complete.
    bool layers(int e, RouteLayer &layer, int remaining, std::vector<RouteLayer> &path) {
        if (e >= n_ - 1) {
            if (layer.empty()) return false;
            // Apply the row.
            std::vector<int> finished;
            for (const auto &a : layer) {
                if (a.kind == RouteAction::Swap) {
                    swap_edge(a.q);
                } else {
                    int c = occ_[a.q] / 2;
                    done_[c] = true;
                    finished.push_back(c);
                }
            }
            path.push_back(layer);
            bool ok = dfs(remaining - 1, path);
            if (!ok) path.pop_back();
            for (int c : finished) done_[c] = false;
            for (auto it = layer.rbegin(); it != layer.rend(); ++it)
                if (it->kind == RouteAction::Swap) swap_edge(it->q);
            return ok;
        }
        if (exhausted()) return false;
        bool tl = tracked(e), tr = tracked(e + 1);
        // Interact partners.
        if (tl && tr && occ_[e] / 2 == occ_[e + 1] / 2) {
            layer.push_back({RouteAction::Interact, e});
            if (layers(e + 2, layer, remaining, path)) return true;
            layer.pop_back();
        }
        if (tl || tr) {
            layer.push_back({RouteAction::Swap, e});
            if (layers(e + 2, layer, remaining, path)) return true;
            layer.pop_back();
        }
        return layers(e + 1, layer, remaining, path);
    }

    void swap_edge(int q) {
        int a = occ_[q], b = occ_[q + 1];
        std::swap(occ_[q], occ_[q + 1]);
        if (a >= 0) pos_[a] = q + 1;
        if (b >= 0) pos_[b] = q;
    }

    int n_;
    std::uint64_t budget_, nodes_ = 0;
    int pairs_;
    std::vector<int> pos_, occ_;
    std::vector<bool> done_;
    std::unordered_map<std::string, int> memo_;
};

inline RouteSchedule greedy_route(int n, const std::vector<std::pair<int, int>> &pairs, int max_depth) {
    std::vector<int> pos, occ(n, -1);
    for (std::size_t c = 0; c < pairs.size(); ++c) {
        pos.push_back(pairs[c].first);
        pos.push_back(pairs[c].second);
        occ[pairs[c].first] = static_cast<int>(2 * c);
        occ[pairs[c].second] = static_cast<int>(2 * c + 1);
    }
    std::vector<bool> done(pairs.size(), false);
    RouteSchedule s;
    auto swap_edge = [&](int q) {
        int a = occ[q], b = occ[q + 1];
        std::swap(occ[q], occ[q + 1]);
        if (a >= 0) pos[a] = q + 1;
        if (b >= 0) pos[b] = q;
    };
    while (!std::all_of(done.begin(), done.end(), [](bool b) { return b; })) {
        if (s.depth >= max_depth) throw std::runtime_error("greedy routing exceeded the depth limit");
        std::vector<bool> busy(n, false);
        RouteLayer layer;
        // Closest pairs first.
        std::vector<int> order;
        for (std::size_t c = 0; c < pairs.size(); ++c)
            if (!done[c]) order.push_back(static_cast<int>(c));
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return std::abs(pos[2 * a] - pos[2 * a + 1]) < std::abs(pos[2 * b] - pos[2 * b + 1]); });
        std::vector<int> finished;
        for (int c : order) {
            int a = std::min(pos[2 * c], pos[2 * c + 1]), b = std::max(pos[2 * c], pos[2 * c + 1]);
            if (b - a == 1) {
                if (!busy[a] && !busy[b]) {
                    busy[a] = busy[b] = true;
                    layer.push_back({RouteAction::Interact, a});
                    finished.push_back(c);
                }
                continue;
            }
            bool moved_a = false;
            if (!busy[a] && !busy[a + 1]) {
                busy[a] = busy[a + 1] = true;
                layer.push_back({RouteAction::Swap, a});
                moved_a = true;
            }
            int b_new = b;
            if (!busy[b - 1] && !busy[b] && (b - 1 > a + (moved_a ? 1 : 0))) {
                busy[b - 1] = busy[b] = true;
                layer.push_back({RouteAction::Swap, b - 1});
                b_new = b - 1;
            }
            (void)b_new;
        }
        std::sort(layer.begin(), layer.end(), [](const RouteAction &x, const RouteAction &y) { return x.q < y.q; });
        for (const auto &a : layer)
            if (a.kind == RouteAction::Swap) swap_edge(a.q);
        for (int c : finished) done[c] = true;
        s.layers.push_back(layer);
        ++s.depth;
    }
    return s;
}

}  // namespace detail

/// Minimum-depth schedule for disjoint qubit pairs on a line of n qubits.
/// Each timestep every qubit stays, swaps with a neighbour, or interacts in
/// place with its adjacent partner. Iterative deepening over a
/// branch-and-bound search gives a certified optimum; very wide registers or
/// an exhausted node budget fall back to a greedy schedule.
inline RouteSchedule route_pairs(int n, const std::vector<std::pair<int, int>> &pairs, const RouteOptions &opt = {}) {
    Mask used = 0;
    for (auto [a, b] : pairs) {
        if (a < 0 || b < 0 || a >= n || b >= n || a == b) throw std::invalid_argument("routing pair out of range");
        if ((used & bit(a)) || (used & bit(b))) throw std::invalid_argument("routing pairs must be disjoint");
        used |= bit(a) | bit(b);
    }
    RouteSchedule s;
    if (pairs.empty()) {
        s.certified = true;
        return s;
    }
    if (n <= opt.exact_qubit_limit) {
        detail::RouteSearch search(n, pairs, opt.node_budget);
        for (int T = search.lower_bound(); T <= opt.max_depth; ++T) {
            std::vector<RouteLayer> path;
            if (search.solve(T, path)) {
                s.depth = T;
                s.layers = std::move(path);
                s.certified = !search.exhausted();
                return s;
            }
            if (search.exhausted()) break;
        }
    }
    return detail::greedy_route(n, pairs, opt.max_depth);
}

/// Replays a schedule. Returns false if an action is malformed (overlapping
/// edges, interacting non-partners, a pair interacting twice or never).
inline bool schedule_is_valid(int n, const std::vector<std::pair<int, int>> &pairs, const RouteSchedule &s) {
    std::vector<int> occ(n, -1);
    for (std::size_t c = 0; c < pairs.size(); ++c) {
        occ[pairs[c].first] = static_cast<int>(c);
        occ[pairs[c].second] = static_cast<int>(c);
    }
    std::vector<int> hits(pairs.size(), 0);
    if (static_cast<int>(s.layers.size()) != s.depth) return false;
    for (const auto &layer : s.layers) {
        std::vector<bool> busy(n, false);
        for (const auto &a : layer) {
            if (a.q < 0 || a.q + 1 >= n || busy[a.q] || busy[a.q + 1]) return false;
            busy[a.q] = busy[a.q + 1] = true;
            if (a.kind == RouteAction::Interact) {
                if (occ[a.q] < 0 || occ[a.q] != occ[a.q + 1]) return false;
                ++hits[occ[a.q]];
            }
        }
        for (const auto &a : layer)
            if (a.kind == RouteAction::Swap) std::swap(occ[a.q], occ[a.q + 1]);
    }
    return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

/// Binary variables of the integer-program formulation, indexed
/// [pair][timestep][from][to]. x = 1 when a qubit of the pair sits on `from`
/// at the start of the step and on `to` at its end (to in {from, from +- 1});
/// y = 1 when a qubit of the pair on `from` interacts with its partner on
/// `to` during the step.
struct IlpAssignment {
    int n = 0, pairs = 0, steps = 0;
    std::vector<std::uint8_t> x, y;

    std::size_t idx(int c, int t, int j, int k) const { return ((std::size_t(c) * steps + t) * n + j) * n + k; }
    int X(int c, int t, int j, int k) const { return x[idx(c, t, j, k)]; }
    int Y(int c, int t, int j, int k) const { return y[idx(c, t, j, k)]; }
};

inline IlpAssignment to_ilp_assignment(int n, const std::vector<std::pair<int, int>> &pairs, const RouteSchedule &s) {
    IlpAssignment a;
    a.n = n;
    a.pairs = static_cast<int>(pairs.size());
    a.steps = s.depth;
    a.x.assign(std::size_t(a.pairs) * a.steps * n * n, 0);
    a.y = a.x;
    std::vector<int> occ(n, -1);
    for (std::size_t c = 0; c < pairs.size(); ++c) {
        occ[pairs[c].first] = static_cast<int>(c);
        occ[pairs[c].second] = static_cast<int>(c);
    }
    for (int t = 0; t < s.depth; ++t) {
        std::vector<int> dest(n);
        for (int q = 0; q < n; ++q) dest[q] = q;
        std::vector<bool> interacting(n, false);
        for (const auto &act : s.layers[t]) {
            if (act.kind == RouteAction::Swap) {
                dest[act.q] = act.q + 1;
                dest[act.q + 1] = act.q;
            } else {
                interacting[act.q] = interacting[act.q + 1] = true;
                int c = occ[act.q];
                a.y[a.idx(c, t, act.q, act.q + 1)] = 1;
                a.y[a.idx(c, t, act.q + 1, act.q)] = 1;
            }
        }
        for (int q = 0; q < n; ++q)
            if (occ[q] >= 0 && !interacting[q]) a.x[a.idx(occ[q], t, q, dest[q])] = 1;
        std::vector<int> next(n, -1);
        for (int q = 0; q < n; ++q) next[dest[q]] = occ[q];
        occ = next;
    }
    return a;
}

/// Checks the integer-program constraints; returns human-readable
/// violations (empty when feasible).
inline std::vector<std::string> check_ilp_constraints(const IlpAssignment &a, const std::vector<std::pair<int, int>> &pairs) {
    std::vector<std::string> v;
    const int n = a.n, T = a.steps;
    auto fail = [&](const std::string &what, int c, int t, int j) {
        v.push_back(what + " (pair " + std::to_string(c) + ", step " + std::to_string(t) + ", qubit " + std::to_string(j) + ")");
    };
    // Moves only between neighbours; y symmetric, off-diagonal, adjacent.
    for (int c = 0; c < a.pairs; ++c)
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    if (a.X(c, t, j, k) && std::abs(j - k) > 1) fail("x moves more than one site", c, t, j);
                    if (a.Y(c, t, j, k) != a.Y(c, t, k, j)) fail("y not symmetric", c, t, j);
                    if (a.Y(c, t, j, k) && (j == k || std::abs(j - k) != 1)) fail("y not between neighbours", c, t, j);
                }
    // 1: initial occupancy.
    for (int c = 0; c < a.pairs; ++c)
        for (int j = 0; j < n; ++j) {
            int s = (pairs[c].first == j || pairs[c].second == j) ? 1 : 0;
            int lhs = 0;
            if (T > 0)
                for (int k = 0; k < n; ++k) lhs += a.X(c, 0, j, k) + a.Y(c, 0, j, k);
            else
                lhs = s;
            if (lhs != s) fail("initial occupancy", c, 0, j);
        }
    // 2: flow conservation between consecutive steps.
    for (int c = 0; c < a.pairs; ++c)
        for (int t = 0; t + 1 < T; ++t)
            for (int k = 0; k < n; ++k) {
                int in = 0, out = 0;
                for (int j = 0; j < n; ++j) in += a.X(c, t, j, k) + a.Y(c, t, k, j);
                for (int m = 0; m < n; ++m) out += a.X(c, t + 1, k, m) + a.Y(c, t + 1, k, m);
                if (in != out) fail("flow conservation", c, t, k);
            }
    // 3: at most one tracked qubit per site after each step.
    for (int t = 0; t < T; ++t)
        for (int k = 0; k < n; ++k) {
            int s = 0;
            for (int c = 0; c < a.pairs; ++c)
                for (int j = 0; j < n; ++j) s += a.X(c, t, j, k) + a.Y(c, t, k, j);
            if (s > 1) fail("site occupied twice", -1, t, k);
        }
    // 4: a move j -> k is a swap: whatever sits on k may only go to j.
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                if (j == k) continue;
                int s = 0;
                for (int c = 0; c < a.pairs; ++c) {
                    s += a.X(c, t, j, k);
                    for (int m = 0; m < n; ++m)
                        if (m != j) s += a.X(c, t, k, m) + a.Y(c, t, k, m);
                }
                if (s > 1) fail("swap consistency", -1, t, j);
            }
    // 5: every pair interacts exactly once (two directed y entries).
    for (int c = 0; c < a.pairs; ++c) {
        int s = 0;
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) s += a.Y(c, t, j, k);
        if (s != 2) fail("interaction count", c, -1, -1);
    }
    // y requires the partner on the neighbouring site.
    for (int c = 0; c < a.pairs; ++c)
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    if (a.Y(c, t, j, k)) {
                        int occupied_j = 0, occupied_k = 0;
                        if (t == 0) {
                            occupied_j = (pairs[c].first == j || pairs[c].second == j);
                            occupied_k = (pairs[c].first == k || pairs[c].second == k);
                        } else {
                            for (int m = 0; m < n; ++m) {
                                occupied_j += a.X(c, t - 1, m, j) + a.Y(c, t - 1, j, m);
                                occupied_k += a.X(c, t - 1, m, k) + a.Y(c, t - 1, k, m);
                            }
                        }
                        if (!occupied_j || !occupied_k) fail("interaction without both partners present", c, t, j);
                    }
    return v;
}

}  // namespace qcm

#endif
