#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

namespace ecglens {

using FeatureRow = std::vector<double>;

namespace detail {

inline double sq_dist(const FeatureRow& a, const FeatureRow& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        d += diff * diff;
    }
    return d;
}

// Indices of the k nearest rows to `query` among `pool` (self excluded by
// index); distance ties break on the lower index.
inline std::vector<std::size_t> knn_indices(const std::vector<FeatureRow>& rows,
                                            const std::vector<std::size_t>& pool,
                                            std::size_t query, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(pool.size());
    for (std::size_t idx : pool) {
        if (idx == query) continue;
        dist.emplace_back(sq_dist(rows[query], rows[idx]), idx);
    }
    std::sort(dist.begin(), dist.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < std::min(k, dist.size()); ++i) out.push_back(dist[i].second);
    return out;
}

}  // namespace detail

struct ResampledSet {
    std::vector<FeatureRow> X;
    std::vector<int> y;
};

// SMOTE oversampling: synthetic minority points on segments between a
// minority point and one of its k nearest minority neighbours, enough to
// equalise the class counts. `u_override` fixes the interpolation factor
// (test hook).
inline ResampledSet smote(const std::vector<FeatureRow>& X, const std::vector<int>& y,
                          std::size_t k = 5, unsigned long long seed = 0,
                          std::optional<double> u_override = std::nullopt) {
    if (X.size() != y.size()) throw std::invalid_argument("smote: size mismatch");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] != 0 ? pos : neg).push_back(i);
    const bool minority_is_pos = pos.size() < neg.size();
    const auto& minority = minority_is_pos ? pos : neg;
    const auto& majority = minority_is_pos ? neg : pos;

    ResampledSet out{X, y};
    if (minority.size() == majority.size()) return out;
    if (minority.size() < 2)
        throw std::invalid_argument("smote: minority class needs at least 2 members");

    const std::size_t k_eff = std::min(k, minority.size() - 1);
    const std::size_t n_new = majority.size() - minority.size();
    const int minority_label = minority_is_pos ? 1 : 0;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t s = 0; s < n_new; ++s) {
        const std::size_t a = minority[s % minority.size()];
        const auto neighbours = detail::knn_indices(X, minority, a, k_eff);
        const std::size_t b = neighbours[rng() % neighbours.size()];
        const double u = u_override ? *u_override : unit(rng);
        FeatureRow row(X[a].size());
        for (std::size_t d = 0; d < row.size(); ++d)
            row[d] = X[a][d] + u * (X[b][d] - X[a][d]);
        out.X.push_back(std::move(row));
        out.y.push_back(minority_label);
    }
    return out;
}

// Edited nearest neighbours: one pass removing every point whose label
// disagrees with the majority vote of its k nearest neighbours.
inline ResampledSet enn(const std::vector<FeatureRow>& X, const std::vector<int>& y,
                        std::size_t k = 3) {
    if (X.size() != y.size()) throw std::invalid_argument("enn: size mismatch");
    if (X.size() <= k) throw std::invalid_argument("enn: need more than k points");
    std::vector<std::size_t> everyone(X.size());
    std::iota(everyone.begin(), everyone.end(), 0);

    std::vector<bool> keep(X.size(), true);
    for (std::size_t i = 0; i < X.size(); ++i) {
        const auto nn = detail::knn_indices(X, everyone, i, k);
        std::size_t agree = 0;
        for (std::size_t j : nn) agree += (y[j] == y[i]);
        if (2 * agree < nn.size()) keep[i] = false;
    }

    ResampledSet out;
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (!keep[i]) continue;
        out.X.push_back(X[i]);
        out.y.push_back(y[i]);
    }
    return out;
}

// SMOTE followed by ENN cleaning. If ENN would erase a whole class, the
// uncleaned SMOTE output is returned instead.
inline ResampledSet smoteenn(const std::vector<FeatureRow>& X, const std::vector<int>& y,
                             unsigned long long seed = 0, std::size_t smote_k = 5,
                             std::size_t enn_k = 3) {
    ResampledSet oversampled = smote(X, y, smote_k, seed);
    ResampledSet cleaned = enn(oversampled.X, oversampled.y, enn_k);
    bool has[2] = {false, false};
    for (int v : cleaned.y) has[v != 0] = true;
    if (!has[0] || !has[1]) return oversampled;
    return cleaned;
}

}  // namespace ecglens
