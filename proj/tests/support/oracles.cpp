#include "support/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "wd/rng.hpp"

namespace oracle {

namespace {

int reflect(int i, int n) {
    // Fold until in range; edge pixel repeated.
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

}  // namespace

wd::FeatureLayer conv_direct(const wd::FeatureLayer& input, const wd::KernelBank& bank) {
    const int h = input.height, w = input.width, k = bank.kernel_size;
    const int off = k / 2;
    wd::FeatureLayer out;
    out.layer_id = input.layer_id;
    out.scale = input.scale;
    out.height = h;
    out.width = w;
    out.depth = bank.out_channels;
    out.values.assign(static_cast<std::size_t>(h) * w * bank.out_channels, 0.0);
    for (int oc = 0; oc < bank.out_channels; ++oc)
        for (int ic = 0; ic < bank.in_channels; ++ic)
            for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b) {
                    const double tap = bank.tap(oc, ic, a, b);
                    for (int r = 0; r < h; ++r)
                        for (int c = 0; c < w; ++c)
                            out.at(r, c, oc) +=
                                tap * input.at(reflect(r + a - off, h), reflect(c + b - off, w), ic);
                }
    if (bank.nonlinearity == wd::Nonlinearity::rectify)
        for (double& v : out.values)
            if (v < 0.0) v = 0.0;
    return out;
}

std::vector<double> distance_brute(const std::vector<std::uint8_t>& mask, int rows, int cols) {
    std::vector<std::pair<int, int>> sites;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (mask[static_cast<std::size_t>(r) * cols + c]) sites.emplace_back(r, c);

    std::vector<double> out(static_cast<std::size_t>(rows) * cols,
                            std::numeric_limits<double>::infinity());
    if (sites.empty()) return out;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            long long best = std::numeric_limits<long long>::max();
            for (const auto& [sr, sc] : sites) {
                const long long dr = r - sr, dc = c - sc;
                best = std::min(best, dr * dr + dc * dc);
            }
            out[static_cast<std::size_t>(r) * cols + c] = std::sqrt(static_cast<double>(best));
        }
    return out;
}

double transport_lp(const std::vector<double>& cost, const std::vector<double>& a,
                    const std::vector<double>& b) {
    const int m = static_cast<int>(a.size());
    const int n = static_cast<int>(b.size());
    if (cost.size() != static_cast<std::size_t>(m) * n) throw std::invalid_argument("transport_lp: sizes");

    auto at = [&](int i, int j) -> double { return cost[static_cast<std::size_t>(i) * n + j]; };

    // Northwest-corner starting basis.
    std::vector<double> x(static_cast<std::size_t>(m) * n, 0.0);
    std::vector<std::uint8_t> basic(static_cast<std::size_t>(m) * n, 0);
    {
        std::vector<double> supply = a, demand = b;
        int i = 0, j = 0;
        while (i < m && j < n) {
            const double q = std::min(supply[static_cast<std::size_t>(i)], demand[static_cast<std::size_t>(j)]);
            x[static_cast<std::size_t>(i) * n + j] = q;
            basic[static_cast<std::size_t>(i) * n + j] = 1;
            supply[static_cast<std::size_t>(i)] -= q;
            demand[static_cast<std::size_t>(j)] -= q;
            if (i == m - 1 && j == n - 1) break;
            if (supply[static_cast<std::size_t>(i)] <= demand[static_cast<std::size_t>(j)] && i < m - 1)
                ++i;
            else if (j < n - 1)
                ++j;
            else
                ++i;
        }
    }

    const int kMaxPivots = 2000;
    for (int pivot = 0; pivot < kMaxPivots; ++pivot) {
        // Dual potentials from the basis tree.
        std::vector<double> u(static_cast<std::size_t>(m), 0.0), v(static_cast<std::size_t>(n), 0.0);
        std::vector<std::uint8_t> su(static_cast<std::size_t>(m), 0), sv(static_cast<std::size_t>(n), 0);
        su[0] = 1;
        bool progress = true;
        while (progress) {
            progress = false;
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    if (!basic[static_cast<std::size_t>(i) * n + j]) continue;
                    if (su[static_cast<std::size_t>(i)] && !sv[static_cast<std::size_t>(j)]) {
                        v[static_cast<std::size_t>(j)] = at(i, j) - u[static_cast<std::size_t>(i)];
                        sv[static_cast<std::size_t>(j)] = 1;
                        progress = true;
                    } else if (!su[static_cast<std::size_t>(i)] && sv[static_cast<std::size_t>(j)]) {
                        u[static_cast<std::size_t>(i)] = at(i, j) - v[static_cast<std::size_t>(j)];
                        su[static_cast<std::size_t>(i)] = 1;
                        progress = true;
                    }
                }
        }
        for (int i = 0; i < m; ++i)
            if (!su[static_cast<std::size_t>(i)]) throw std::runtime_error("transport_lp: degenerate basis forest");
        for (int j = 0; j < n; ++j)
            if (!sv[static_cast<std::size_t>(j)]) throw std::runtime_error("transport_lp: degenerate basis forest");

        // Most negative reduced cost.
        int bi = -1, bj = -1;
        double best = -1e-12;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                if (basic[static_cast<std::size_t>(i) * n + j]) continue;
                const double rc = at(i, j) - u[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(j)];
                if (rc < best) {
                    best = rc;
                    bi = i;
                    bj = j;
                }
            }
        if (bi < 0) break;  // optimal

        // Unique cycle: path from row bi to column bj through basic cells.
        // Nodes: rows 0..m-1, cols m..m+n-1.
        const int nodes = m + n;
        std::vector<int> parent(static_cast<std::size_t>(nodes), -1);
        std::vector<std::uint8_t> seen(static_cast<std::size_t>(nodes), 0);
        std::vector<int> queue = {bi};
        seen[static_cast<std::size_t>(bi)] = 1;
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const int node = queue[qi];
            if (node < m) {
                for (int j = 0; j < n; ++j)
                    if (basic[static_cast<std::size_t>(node) * n + j] && !seen[static_cast<std::size_t>(m + j)]) {
                        seen[static_cast<std::size_t>(m + j)] = 1;
                        parent[static_cast<std::size_t>(m + j)] = node;
                        queue.push_back(m + j);
                    }
            } else {
                const int j = node - m;
                for (int i = 0; i < m; ++i)
                    if (basic[static_cast<std::size_t>(i) * n + j] && !seen[static_cast<std::size_t>(i)]) {
                        seen[static_cast<std::size_t>(i)] = 1;
                        parent[static_cast<std::size_t>(i)] = node;
                        queue.push_back(i);
                    }
            }
        }
        if (!seen[static_cast<std::size_t>(m + bj)]) throw std::runtime_error("transport_lp: no cycle found");

        // Walk back from column bj to row bi; edges alternate col<-row<-col...
        std::vector<std::pair<int, int>> cycle;  // (i, j) cells, starting with entering
        cycle.emplace_back(bi, bj);
        int node = m + bj;
        while (node != bi) {
            const int par = parent[static_cast<std::size_t>(node)];
            if (node >= m)
                cycle.emplace_back(par, node - m);  // row par -> col node
            else
                cycle.emplace_back(node, par - m);  // col par -> row node
            node = par;
        }

        // Odd positions lose mass.
        double theta = std::numeric_limits<double>::infinity();
        for (std::size_t t = 1; t < cycle.size(); t += 2)
            theta = std::min(theta, x[static_cast<std::size_t>(cycle[t].first) * n + cycle[t].second]);
        std::size_t leave = 1;
        for (std::size_t t = 1; t < cycle.size(); t += 2)
            if (x[static_cast<std::size_t>(cycle[t].first) * n + cycle[t].second] == theta) {
                leave = t;
                break;
            }
        for (std::size_t t = 0; t < cycle.size(); ++t) {
            double& cell = x[static_cast<std::size_t>(cycle[t].first) * n + cycle[t].second];
            cell += (t % 2 == 0) ? theta : -theta;
        }
        basic[static_cast<std::size_t>(cycle[0].first) * n + cycle[0].second] = 1;
        basic[static_cast<std::size_t>(cycle[leave].first) * n + cycle[leave].second] = 0;
        x[static_cast<std::size_t>(cycle[leave].first) * n + cycle[leave].second] = 0.0;
    }

    double total = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) total += at(i, j) * x[static_cast<std::size_t>(i) * n + j];
    return total;
}

double w_p_1d_lp(const std::vector<double>& xs, const std::vector<double>& xw,
                 const std::vector<double>& ys, const std::vector<double>& yw, double p) {
    const int m = static_cast<int>(xs.size());
    const int n = static_cast<int>(ys.size());
    std::vector<double> cost(static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            cost[static_cast<std::size_t>(i) * n + j] = std::pow(std::abs(xs[static_cast<std::size_t>(i)] - ys[static_cast<std::size_t>(j)]), p);
    return transport_lp(cost, xw, yw);
}

wd::ImageGrid stripes_texture(int size, int period, double noise, std::uint64_t seed) {
    wd::ImageGrid img(size, size, 1);
    wd::Rng rng(seed);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double base = (c / period) % 2 == 0 ? 0.25 : 0.75;
            img.at(r, c, 0) = std::clamp(base + noise * (rng.uniform() - 0.5), 0.0, 1.0);
        }
    return img;
}

wd::ImageGrid checker_texture(int size, int cell, double noise, std::uint64_t seed) {
    wd::ImageGrid img(size, size, 1);
    wd::Rng rng(seed);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double base = ((r / cell) + (c / cell)) % 2 == 0 ? 0.2 : 0.8;
            img.at(r, c, 0) = std::clamp(base + noise * (rng.uniform() - 0.5), 0.0, 1.0);
        }
    return img;
}

wd::ImageGrid blob_texture(int size, double freq, std::uint64_t seed) {
    wd::ImageGrid img(size, size, 1);
    wd::Rng rng(seed);
    const double phase_r = rng.uniform() * 6.283185307179586;
    const double phase_c = rng.uniform() * 6.283185307179586;
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const double v = 0.5 + 0.25 * std::sin(freq * r + phase_r) * std::cos(freq * c + phase_c) +
                             0.1 * (rng.uniform() - 0.5);
            img.at(r, c, 0) = std::clamp(v, 0.0, 1.0);
        }
    return img;
}

}  // namespace oracle
