#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ecglens {

// Pair-counting AUROC: P(score_pos > score_neg) + 0.5 * P(tie).
// Computed through midranks so ties are handled exactly.
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += (y != 0);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auroc: undefined, one class absent");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks over tie groups, accumulate the rank sum of positives.
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] != 0) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Average precision: step summation of precision over descending-score
// thresholds, one threshold per distinct score.
inline double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auprc: size mismatch");
    std::size_t n_pos = 0;
    for (int y : labels) n_pos += (y != 0);
    if (n_pos == 0) throw std::invalid_argument("auprc: undefined, no positives");

    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double tp = 0.0, fp = 0.0, prev_recall = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] != 0) tp += 1.0;
            else fp += 1.0;
        }
        const double recall = tp / static_cast<double>(n_pos);
        const double precision = tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return ap;
}

// Matthews correlation coefficient over hard labels. A zero denominator is
// reported as 0 with the flag set.
inline double mcc(const std::vector<int>& pred, const std::vector<int>& labels,
                  bool* zero_denominator = nullptr) {
    if (pred.size() != labels.size()) throw std::invalid_argument("mcc: size mismatch");
    double tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, y = labels[i] != 0;
        if (p && y) ++tp;
        else if (!p && !y) ++tn;
        else if (p && !y) ++fp;
        else ++fn;
    }
    if (zero_denominator) *zero_denominator = false;
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom <= 0.0) {
        if (zero_denominator) *zero_denominator = true;
        return 0.0;
    }
    return (tp * tn - fp * fn) / std::sqrt(denom);
}

// Composite model-selection score: AUROC * AUPRC * (1 + MCC) / 2.
inline double three_mcs(double auroc_value, double auprc_value, double mcc_value) {
    return auroc_value * auprc_value * (1.0 + mcc_value) / 2.0;
}

// Monotone score-to-probability map fit by pool-adjacent-violators.
struct IsotonicMap {
    std::vector<double> scores;  // ascending knots
    std::vector<double> values;  // non-decreasing fitted values
    bool identity = false;

    // Stepwise-constant: value of the greatest knot <= s, clamped to [0, 1].
    double apply(double s) const {
        if (identity) return std::clamp(s, 0.0, 1.0);
        auto it = std::upper_bound(scores.begin(), scores.end(), s);
        if (it == scores.begin()) return std::clamp(values.front(), 0.0, 1.0);
        const std::size_t idx = static_cast<std::size_t>(it - scores.begin()) - 1;
        return std::clamp(values[idx], 0.0, 1.0);
    }
};

inline IsotonicMap isotonic_calibrate(const std::vector<double>& scores,
                                      const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("isotonic_calibrate: size mismatch");
    std::vector<double> distinct(scores);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) {
        IsotonicMap m;
        m.identity = true;
        return m;
    }

    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });

    // PAVA blocks: (value, weight, last score in block).
    std::vector<double> val, wgt, pos;
    for (std::size_t k = 0; k < n; ++k) {
        val.push_back(labels[order[k]] != 0 ? 1.0 : 0.0);
        wgt.push_back(1.0);
        pos.push_back(scores[order[k]]);
        while (val.size() >= 2 &&
               (val[val.size() - 2] > val.back() ||
                pos[pos.size() - 2] == pos.back())) {
            const double w = wgt[wgt.size() - 2] + wgt.back();
            const double v = (val[val.size() - 2] * wgt[wgt.size() - 2] +
                              val.back() * wgt.back()) / w;
            val.pop_back(); wgt.pop_back();
            const double p = pos.back(); pos.pop_back();
            val.back() = v;
            wgt.back() = w;
            pos.back() = std::max(pos.back(), p);
        }
    }

    IsotonicMap m;
    m.scores = pos;
    m.values = val;
    return m;
}

struct MetricSummary {
    double auroc = 0.0;
    double auprc = 0.0;
    double mcc = 0.0;
    double three_mcs = 0.0;
};

// Scores -> all four metrics; MCC labels come from isotonic-calibrated
// scores thresholded at 0.5.
inline MetricSummary evaluate_scores(const std::vector<double>& scores,
                                     const std::vector<int>& labels) {
    MetricSummary s;
    s.auroc = auroc(scores, labels);
    s.auprc = auprc(scores, labels);
    const IsotonicMap cal = isotonic_calibrate(scores, labels);
    std::vector<int> pred(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        pred[i] = cal.apply(scores[i]) >= 0.5 ? 1 : 0;
    s.mcc = mcc(pred, labels);
    s.three_mcs = three_mcs(s.auroc, s.auprc, s.mcc);
    return s;
}

}  // namespace ecglens
