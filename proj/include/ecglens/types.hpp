#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecglens {

using Signal = std::vector<double>;

// Row-per-lead sample matrix. All leads must have equal length.
using LeadMatrix = std::vector<Signal>;

inline std::size_t lead_count(const LeadMatrix& m) { return m.size(); }

inline std::size_t sample_count(const LeadMatrix& m) {
    return m.empty() ? 0 : m.front().size();
}

inline void check_rectangular(const LeadMatrix& m, const char* what) {
    if (m.empty()) throw std::invalid_argument(std::string(what) + ": no leads");
    const std::size_t n = m.front().size();
    for (const auto& lead : m)
        if (lead.size() != n)
            throw std::invalid_argument(std::string(what) + ": ragged leads");
}

// One patient's multi-lead record plus label and baseline covariates.
struct TimeSeriesInstance {
    LeadMatrix values;                    // [n_leads][n_samples]
    double sample_rate_hz = 0.0;
    std::vector<std::string> lead_names;
    int label = 0;                        // binary
    std::optional<double> age;            // years
    std::optional<int> sex;               // binary
    std::string id;

    std::size_t n_leads() const { return values.size(); }
    std::size_t n_samples() const { return sample_count(values); }
};

struct SplitTag {
    enum class Kind { none, cnn_fold, cnn_test, lr_half };
    Kind kind = Kind::none;
    int fold = -1;  // valid only for cnn_fold

    bool operator==(const SplitTag&) const = default;
};

inline std::string to_string(const SplitTag& tag) {
    switch (tag.kind) {
        case SplitTag::Kind::none: return "none";
        case SplitTag::Kind::cnn_test: return "cnn_test";
        case SplitTag::Kind::lr_half: return "lr_half";
        case SplitTag::Kind::cnn_fold: return "cnn_fold:" + std::to_string(tag.fold);
    }
    return "none";
}

inline SplitTag split_tag_from_string(const std::string& s) {
    if (s == "none") return {};
    if (s == "cnn_test") return {SplitTag::Kind::cnn_test, -1};
    if (s == "lr_half") return {SplitTag::Kind::lr_half, -1};
    if (s.rfind("cnn_fold:", 0) == 0)
        return {SplitTag::Kind::cnn_fold, std::stoi(s.substr(9))};
    throw std::invalid_argument("unknown split tag: " + s);
}

struct Dataset {
    std::vector<TimeSeriesInstance> instances;
    std::vector<SplitTag> tags;  // same length as instances once split

    std::size_t size() const { return instances.size(); }

    bool has_tags() const {
        return tags.size() == instances.size() && !instances.empty();
    }

    std::vector<std::size_t> indices_with(SplitTag::Kind kind, int fold = -1) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < tags.size(); ++i) {
            if (tags[i].kind != kind) continue;
            if (kind == SplitTag::Kind::cnn_fold && fold >= 0 && tags[i].fold != fold) continue;
            out.push_back(i);
        }
        return out;
    }

    // Training rows for one CV round: every CNN fold except `val_fold`.
    std::vector<std::size_t> cnn_train_indices(int val_fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < tags.size(); ++i)
            if (tags[i].kind == SplitTag::Kind::cnn_fold && tags[i].fold != val_fold)
                out.push_back(i);
        return out;
    }
};

}  // namespace ecglens
