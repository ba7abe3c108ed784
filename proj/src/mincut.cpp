#include "cmfseg/mincut.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <queue>
#include <string>

namespace cmfseg {

namespace {

constexpr std::int64_t kMaxFlowVoxels = 32 * 32 * 32;
constexpr int kMaxEnumVoxels = 20;
constexpr double kScale = 1048576.0; // 2^20, finer than the 1e-6 design floor

// Dinic max-flow on an explicit residual-arc list. Capacities are int64;
// instances here are tiny, so no push-relabel machinery is warranted.
class Dinic {
public:
    explicit Dinic(int nodes) : head_(std::size_t(nodes), -1) {}

    void add_edge(int from, int to, std::int64_t cap) {
        arcs_.push_back({to, head_[std::size_t(from)], cap});
        head_[std::size_t(from)] = int(arcs_.size()) - 1;
        arcs_.push_back({from, head_[std::size_t(to)], 0});
        head_[std::size_t(to)] = int(arcs_.size()) - 1;
    }

    std::int64_t max_flow(int s, int t) {
        std::int64_t total = 0;
        while (bfs(s, t)) {
            iter_ = head_;
            while (std::int64_t f = dfs(s, t, INT64_MAX)) total += f;
        }
        return total;
    }

    // Source side of the minimum cut: nodes still reachable in the residual.
    std::vector<bool> source_side(int s) const {
        std::vector<bool> seen(head_.size(), false);
        std::queue<int> q;
        seen[std::size_t(s)] = true;
        q.push(s);
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int a = head_[std::size_t(u)]; a >= 0; a = arcs_[std::size_t(a)].next) {
                const Arc& arc = arcs_[std::size_t(a)];
                if (arc.cap > 0 && !seen[std::size_t(arc.to)]) {
                    seen[std::size_t(arc.to)] = true;
                    q.push(arc.to);
                }
            }
        }
        return seen;
    }

private:
    struct Arc {
        int to;
        int next;
        std::int64_t cap;
    };

    bool bfs(int s, int t) {
        level_.assign(head_.size(), -1);
        std::queue<int> q;
        level_[std::size_t(s)] = 0;
        q.push(s);
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int a = head_[std::size_t(u)]; a >= 0; a = arcs_[std::size_t(a)].next) {
                const Arc& arc = arcs_[std::size_t(a)];
                if (arc.cap > 0 && level_[std::size_t(arc.to)] < 0) {
                    level_[std::size_t(arc.to)] = level_[std::size_t(u)] + 1;
                    q.push(arc.to);
                }
            }
        }
        return level_[std::size_t(t)] >= 0;
    }

    std::int64_t dfs(int u, int t, std::int64_t limit) {
        if (u == t) return limit;
        for (int& a = iter_[std::size_t(u)]; a >= 0; a = arcs_[std::size_t(a)].next) {
            Arc& arc = arcs_[std::size_t(a)];
            if (arc.cap > 0 && level_[std::size_t(arc.to)] == level_[std::size_t(u)] + 1) {
                std::int64_t f = dfs(arc.to, t, std::min(limit, arc.cap));
                if (f > 0) {
                    arc.cap -= f;
                    arcs_[std::size_t(a ^ 1)].cap += f;
                    return f;
                }
            }
        }
        return 0;
    }

    std::vector<Arc> arcs_;
    std::vector<int> head_;
    std::vector<int> iter_;
    std::vector<int> level_;
};

std::int64_t to_int_cap(double c) { return std::llround(c * kScale); }

} // namespace

GridGraph discretize(const CapacityField& caps) {
    validate_capacities(caps);
    const Dims d = caps.cs.dims;
    const Spacing sp = caps.cs.spacing;
    const std::size_t n = std::size_t(d.count());
    GridGraph g{d, caps.cs.data, caps.ct.data,
                std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                std::vector<double>(n, 0.0)};
    const double fx = sp.sy * sp.sz / sp.sx;
    const double fy = sp.sx * sp.sz / sp.sy;
    const double fz = sp.sx * sp.sy / sp.sz;
    const std::int64_t sy = d.nx, sz = std::int64_t(d.nx) * d.ny;
    for (int z = 0; z < d.nz; ++z) {
        for (int y = 0; y < d.ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < d.nx; ++x, ++i) {
                const std::size_t u = std::size_t(i);
                const auto& a = caps.alpha.data;
                if (x + 1 < d.nx) g.wx[u] = 0.5 * (a[u] + a[u + 1]) * fx;
                if (y + 1 < d.ny) g.wy[u] = 0.5 * (a[u] + a[u + std::size_t(sy)]) * fy;
                if (z + 1 < d.nz) g.wz[u] = 0.5 * (a[u] + a[u + std::size_t(sz)]) * fz;
            }
        }
    }
    return g;
}

CutResult min_cut(const GridGraph& g) {
    const std::int64_t n = g.dims.count();
    if (n > kMaxFlowVoxels)
        throw ValidationError("oracle", "instance too large: " + std::to_string(n) +
                                            " voxels, limit " +
                                            std::to_string(kMaxFlowVoxels));
    const int src = int(n), snk = int(n) + 1;
    Dinic flow(int(n) + 2);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = std::size_t(i);
        if (g.cs[u] > 0.0) flow.add_edge(src, int(i), to_int_cap(g.cs[u]));
        if (g.ct[u] > 0.0) flow.add_edge(int(i), snk, to_int_cap(g.ct[u]));
    }
    const std::int64_t sy = g.dims.nx, sz = std::int64_t(g.dims.nx) * g.dims.ny;
    for (int z = 0; z < g.dims.nz; ++z) {
        for (int y = 0; y < g.dims.ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < g.dims.nx; ++x, ++i) {
                const std::size_t u = std::size_t(i);
                if (x + 1 < g.dims.nx && g.wx[u] > 0.0) {
                    const std::int64_t c = to_int_cap(g.wx[u]);
                    flow.add_edge(int(i), int(i + 1), c);
                    flow.add_edge(int(i + 1), int(i), c);
                }
                if (y + 1 < g.dims.ny && g.wy[u] > 0.0) {
                    const std::int64_t c = to_int_cap(g.wy[u]);
                    flow.add_edge(int(i), int(i + sy), c);
                    flow.add_edge(int(i + sy), int(i), c);
                }
                if (z + 1 < g.dims.nz && g.wz[u] > 0.0) {
                    const std::int64_t c = to_int_cap(g.wz[u]);
                    flow.add_edge(int(i), int(i + sz), c);
                    flow.add_edge(int(i + sz), int(i), c);
                }
            }
        }
    }

    CutResult res;
    const std::int64_t f = flow.max_flow(src, snk);
    res.flow = double(f) / kScale;
    std::vector<bool> reach = flow.source_side(src);
    res.labels.resize(std::size_t(n));
    for (std::int64_t i = 0; i < n; ++i)
        res.labels[std::size_t(i)] = reach[std::size_t(i)] ? 1 : 0;
    res.value = cut_energy(g, res.labels);
    return res;
}

CutResult enumerate_min(const GridGraph& g) {
    const std::int64_t n = g.dims.count();
    if (n > kMaxEnumVoxels)
        throw ValidationError("oracle", "instance too large: " + std::to_string(n) +
                                            " voxels, limit " +
                                            std::to_string(kMaxEnumVoxels));

    // Incident face list per voxel for the Gray-code walk; each flip toggles
    // the cut state of exactly the flipped voxel's faces.
    struct Face {
        int other;
        double w;
    };
    std::vector<std::vector<Face>> faces(static_cast<std::size_t>(n));
    const std::int64_t sy = g.dims.nx, sz = std::int64_t(g.dims.nx) * g.dims.ny;
    for (int z = 0; z < g.dims.nz; ++z) {
        for (int y = 0; y < g.dims.ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < g.dims.nx; ++x, ++i) {
                const std::size_t u = std::size_t(i);
                if (x + 1 < g.dims.nx) {
                    faces[u].push_back({int(i + 1), g.wx[u]});
                    faces[u + 1].push_back({int(i), g.wx[u]});
                }
                if (y + 1 < g.dims.ny) {
                    faces[u].push_back({int(i + sy), g.wy[u]});
                    faces[std::size_t(i + sy)].push_back({int(i), g.wy[u]});
                }
                if (z + 1 < g.dims.nz) {
                    faces[u].push_back({int(i + sz), g.wz[u]});
                    faces[std::size_t(i + sz)].push_back({int(i), g.wz[u]});
                }
            }
        }
    }

    std::vector<std::uint8_t> labels(std::size_t(n), 0);
    double energy = 0.0;
    for (std::int64_t i = 0; i < n; ++i) energy += g.cs[std::size_t(i)];

    double best = energy;
    std::uint32_t best_code = 0;
    const std::uint32_t count = std::uint32_t(1) << n;
    for (std::uint32_t k = 1; k < count; ++k) {
        const int j = std::countr_zero(k); // Gray code: bit j flips at step k
        const std::size_t ju = std::size_t(j);
        labels[ju] ^= 1;
        energy += labels[ju] ? g.ct[ju] - g.cs[ju] : g.cs[ju] - g.ct[ju];
        for (const Face& f : faces[ju])
            energy += labels[ju] != labels[std::size_t(f.other)] ? f.w : -f.w;
        if (energy < best) {
            best = energy;
            best_code = k ^ (k >> 1);
        }
    }

    CutResult res;
    res.labels.assign(std::size_t(n), 0);
    for (std::int64_t i = 0; i < n; ++i)
        res.labels[std::size_t(i)] = (best_code >> i) & 1 ? 1 : 0;
    res.value = cut_energy(g, res.labels);
    res.flow = res.value;
    return res;
}

double cut_energy(const GridGraph& g, const std::vector<std::uint8_t>& labels) {
    const std::int64_t n = g.dims.count();
    if (std::int64_t(labels.size()) != n)
        throw ValidationError("oracle", "label count mismatch");
    double energy = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = std::size_t(i);
        energy += labels[u] ? g.ct[u] : g.cs[u];
    }
    const std::int64_t sy = g.dims.nx, sz = std::int64_t(g.dims.nx) * g.dims.ny;
    for (int z = 0; z < g.dims.nz; ++z) {
        for (int y = 0; y < g.dims.ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < g.dims.nx; ++x, ++i) {
                const std::size_t u = std::size_t(i);
                if (x + 1 < g.dims.nx && labels[u] != labels[u + 1]) energy += g.wx[u];
                if (y + 1 < g.dims.ny && labels[u] != labels[u + std::size_t(sy)])
                    energy += g.wy[u];
                if (z + 1 < g.dims.nz && labels[u] != labels[u + std::size_t(sz)])
                    energy += g.wz[u];
            }
        }
    }
    return energy;
}

} // namespace cmfseg
