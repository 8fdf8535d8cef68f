#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ecglens/evalmetrics.hpp"
#include "ecglens/resample.hpp"
#include "ecglens/types.hpp"

namespace ecglens {

// Convolution kernel w[out][tap][in] with taps -R..R stored 0..2R.
struct Conv1DLayer {
    int in_features = 0;
    int out_features = 0;
    int half_width = 0;                 // R
    std::vector<double> weights;        // row-major [out][2R+1][in]

    int taps() const { return 2 * half_width + 1; }

    double& w(int i, int r, int k) {
        return weights[(static_cast<std::size_t>(i) * taps() + r) * in_features + k];
    }
    double w(int i, int r, int k) const {
        return weights[(static_cast<std::size_t>(i) * taps() + r) * in_features + k];
    }

    static Conv1DLayer zeros(int in_features, int out_features, int half_width) {
        Conv1DLayer l;
        l.in_features = in_features;
        l.out_features = out_features;
        l.half_width = half_width;
        l.weights.assign(static_cast<std::size_t>(out_features) * (2 * half_width + 1) * in_features, 0.0);
        return l;
    }
};

// Gamma[i][j] = sum_{r,k} w[i][r][k] * x[k][j + r - R], zero padded, same length.
inline LeadMatrix conv1d_forward(const LeadMatrix& x, const Conv1DLayer& layer) {
    if (static_cast<int>(x.size()) != layer.in_features)
        throw std::invalid_argument("conv1d_forward: feature count mismatch");
    const int n = static_cast<int>(sample_count(x));
    const int R = layer.half_width;
    LeadMatrix out(layer.out_features, Signal(n, 0.0));
    for (int i = 0; i < layer.out_features; ++i) {
        Signal& oi = out[i];
        for (int r = 0; r <= 2 * R; ++r) {
            const int shift = r - R;  // input index = j + shift
            const int j_lo = std::max(0, -shift);
            const int j_hi = std::min(n, n - shift);
            for (int k = 0; k < layer.in_features; ++k) {
                const double wv = layer.w(i, r, k);
                if (wv == 0.0) continue;
                const double* xi = x[k].data() + shift;
                for (int j = j_lo; j < j_hi; ++j) oi[j] += wv * xi[j];
            }
        }
    }
    return out;
}

struct PoolResult {
    LeadMatrix pooled;                       // [f][ceil(n/2)]
    std::vector<std::vector<int>> switches;  // argmax in {0,1} per window
    bool padded = false;                     // one trailing zero added for odd n
};

// Window-2 max pooling; ties keep index 0; odd lengths are padded with one
// trailing zero (recorded for the inversion pass).
inline PoolResult maxpool_forward(const LeadMatrix& x) {
    PoolResult res;
    const std::size_t n = sample_count(x);
    const std::size_t m = (n + 1) / 2;
    res.padded = (n % 2 != 0);
    res.pooled.assign(x.size(), Signal(m, 0.0));
    res.switches.assign(x.size(), std::vector<int>(m, 0));
    for (std::size_t f = 0; f < x.size(); ++f) {
        for (std::size_t j = 0; j < m; ++j) {
            const double a = x[f][2 * j];
            const double b = (2 * j + 1 < n) ? x[f][2 * j + 1] : 0.0;
            if (b > a) {
                res.pooled[f][j] = b;
                res.switches[f][j] = 1;
            } else {
                res.pooled[f][j] = a;
                res.switches[f][j] = 0;
            }
        }
    }
    return res;
}

inline LeadMatrix relu(const LeadMatrix& x) {
    LeadMatrix out = x;
    for (auto& row : out)
        for (double& v : row) v = std::max(0.0, v);
    return out;
}

struct BlockTrace {
    LeadMatrix pre_activation;
    LeadMatrix activated;
    LeadMatrix pooled;
    std::vector<std::vector<int>> switches;
};

struct ForwardTrace {
    std::vector<BlockTrace> blocks;
    std::vector<double> flat;
    double score = 0.0;
};

struct Conv1DNetConfig {
    int n_filters = 32;
    int kernel_size = 5;  // 2R + 1
    int deepness = 2;
};

struct Conv1DNet {
    Conv1DNetConfig config;
    std::vector<Conv1DLayer> layers;
    std::vector<double> head_weights;
    double head_bias = 0.0;
    int input_leads = 0;
    int input_len = 0;  // padded so input_len / 2^deepness is an integer

    int pooled_len() const { return input_len >> config.deepness; }
    std::size_t flat_len() const {
        return static_cast<std::size_t>(config.n_filters) * pooled_len();
    }
    std::size_t parameter_count() const {
        std::size_t n = head_weights.size() + 1;
        for (const auto& l : layers) n += l.weights.size();
        return n;
    }
};

namespace detail {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Matricization of Appendix-style kernel indexing: row = output feature,
// column = (tap, input feature).
inline Eigen::Map<const RowMajorMatrix> matricize(const Conv1DLayer& layer) {
    return {layer.weights.data(), layer.out_features,
            static_cast<Eigen::Index>(layer.taps()) * layer.in_features};
}

inline Eigen::Map<RowMajorMatrix> matricize(Conv1DLayer& layer) {
    return {layer.weights.data(), layer.out_features,
            static_cast<Eigen::Index>(layer.taps()) * layer.in_features};
}

inline void check_feasible(const Conv1DLayer& layer, const char* what) {
    if (layer.out_features > layer.taps() * layer.in_features)
        throw std::invalid_argument(std::string(what) +
                                    ": constraint infeasible, out_features exceeds (2R+1)*in_features");
}

inline double spectral_norm_estimate(const RowMajorMatrix& m) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(m.cols()).normalized();
    for (int it = 0; it < 50; ++it) {
        Eigen::VectorXd u = m * v;
        const double nu = u.norm();
        if (nu == 0.0) return 0.0;
        v = m.transpose() * (u / nu);
        const double nv = v.norm();
        if (nv == 0.0) return 0.0;
        v /= nv;
    }
    return (m * v).norm();
}

}  // namespace detail

// Frobenius norm of M M^T - I for the matricized kernel.
inline double semi_orth_residual(const Conv1DLayer& layer) {
    detail::check_feasible(layer, "semi_orth_residual");
    const auto m = detail::matricize(layer);
    Eigen::MatrixXd gram = m * m.transpose();
    gram.diagonal().array() -= 1.0;
    return gram.norm();
}

// Iterative orthonormalization: M <- M - 4*nu (M M^T - I) M with nu = 1/8,
// the step of the cited algorithm (effective coefficient 1/2 gives its
// quadratic convergence). Kernels with spectral norm above 1.1 are rescaled
// to norm 1 first so every iterate stays in the convergent region.
inline Conv1DLayer semi_orth_project(const Conv1DLayer& layer, int iters) {
    detail::check_feasible(layer, "semi_orth_project");
    Conv1DLayer out = layer;
    auto m = detail::matricize(out);
    detail::RowMajorMatrix work = m;
    const double sigma = detail::spectral_norm_estimate(work);
    if (sigma > 1.1) work /= sigma;
    constexpr double nu = 1.0 / 8.0;
    for (int it = 0; it < iters; ++it) {
        Eigen::MatrixXd gram = work * work.transpose();
        gram.diagonal().array() -= 1.0;
        work -= 4.0 * nu * gram * work;
    }
    m = work;
    return out;
}

namespace detail {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline LeadMatrix pad_instance(const LeadMatrix& values, const Conv1DNet& net) {
    if (static_cast<int>(values.size()) != net.input_leads)
        throw std::invalid_argument("model_forward: lead count does not match the network");
    const int n = static_cast<int>(sample_count(values));
    if (n > net.input_len)
        throw std::invalid_argument("model_forward: instance longer than the network input");
    LeadMatrix x = values;
    for (auto& lead : x) lead.resize(net.input_len, 0.0);
    return x;
}

}  // namespace detail

inline double model_forward(const Conv1DNet& net, const LeadMatrix& values,
                            ForwardTrace* trace = nullptr) {
    LeadMatrix x = detail::pad_instance(values, net);
    if (trace) trace->blocks.clear();
    for (const auto& layer : net.layers) {
        LeadMatrix pre = conv1d_forward(x, layer);
        LeadMatrix act = relu(pre);
        PoolResult pool = maxpool_forward(act);
        if (trace) {
            BlockTrace bt;
            bt.pre_activation = std::move(pre);
            bt.activated = act;
            bt.pooled = pool.pooled;
            bt.switches = pool.switches;
            trace->blocks.push_back(std::move(bt));
        }
        x = std::move(pool.pooled);
    }
    std::vector<double> flat;
    flat.reserve(net.flat_len());
    for (const auto& feature : x) flat.insert(flat.end(), feature.begin(), feature.end());
    if (flat.size() != net.head_weights.size())
        throw std::invalid_argument("model_forward: flattened length does not match the head");
    double z = net.head_bias;
    for (std::size_t i = 0; i < flat.size(); ++i) z += net.head_weights[i] * flat[i];
    const double score = detail::sigmoid(z);
    if (trace) {
        trace->flat = std::move(flat);
        trace->score = score;
    }
    return score;
}

inline double model_forward(const Conv1DNet& net, const TimeSeriesInstance& inst,
                            ForwardTrace* trace = nullptr) {
    return model_forward(net, inst.values, trace);
}

// Random net with semi-orthogonal conv kernels and a small dense head.
inline Conv1DNet make_conv1dnet(const Conv1DNetConfig& config, int input_leads,
                                int n_samples, unsigned long long seed) {
    if (config.kernel_size % 2 == 0 || config.kernel_size < 1)
        throw std::invalid_argument("make_conv1dnet: kernel_size must be odd and positive");
    Conv1DNet net;
    net.config = config;
    net.input_leads = input_leads;
    const int block = 1 << config.deepness;
    net.input_len = ((n_samples + block - 1) / block) * block;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    int in = input_leads;
    for (int b = 0; b < config.deepness; ++b) {
        Conv1DLayer layer = Conv1DLayer::zeros(in, config.n_filters, (config.kernel_size - 1) / 2);
        detail::check_feasible(layer, "make_conv1dnet");
        for (double& v : layer.weights) v = gauss(rng);
        {
            auto m = detail::matricize(layer);
            detail::RowMajorMatrix work = m;
            const double sigma = detail::spectral_norm_estimate(work);
            if (sigma > 0.0) work /= sigma;
            m = work;
        }
        layer = semi_orth_project(layer, 20);
        net.layers.push_back(std::move(layer));
        in = config.n_filters;
    }
    net.head_weights.resize(net.flat_len());
    const double scale = 1.0 / std::sqrt(static_cast<double>(net.flat_len()));
    for (double& v : net.head_weights) v = scale * gauss(rng);
    net.head_bias = 0.0;
    return net;
}

struct TrainConfig {
    double lr0 = 1e-3;
    double decay = 1e-7;        // epoch-wise: lr = lr0 / (1 + decay * epoch)
    int max_epochs = 10000;
    int patience = 5;
    int batch_size = 32;
    unsigned long long seed = 0;
    int project_iters = 4;      // semi-orthogonality steps after each update
    double min_improvement = 1e-6;
    bool apply_smoteenn = true;
};

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_loss = 0.0;
};

namespace detail {

struct Gradients {
    std::vector<std::vector<double>> conv;  // matches net.layers[i].weights
    std::vector<double> head;
    double head_bias = 0.0;

    explicit Gradients(const Conv1DNet& net) : head(net.head_weights.size(), 0.0) {
        for (const auto& l : net.layers) conv.emplace_back(l.weights.size(), 0.0);
    }

    void reset() {
        for (auto& g : conv) std::fill(g.begin(), g.end(), 0.0);
        std::fill(head.begin(), head.end(), 0.0);
        head_bias = 0.0;
    }

    void scale(double s) {
        for (auto& g : conv)
            for (double& v : g) v *= s;
        for (double& v : head) v *= s;
        head_bias *= s;
    }
};

// Backpropagation of the binary cross-entropy loss for one instance;
// gradients accumulate into `grads`. Returns the loss.
inline double backprop_instance(const Conv1DNet& net, const LeadMatrix& values, int label,
                                Gradients& grads) {
    ForwardTrace trace;
    const LeadMatrix x0 = pad_instance(values, net);
    model_forward(net, values, &trace);
    const double p = trace.score;
    const double y = label != 0 ? 1.0 : 0.0;
    const double eps = 1e-12;
    const double loss = -(y * std::log(p + eps) + (1.0 - y) * std::log(1.0 - p + eps));

    const double dz = p - y;
    grads.head_bias += dz;
    for (std::size_t i = 0; i < trace.flat.size(); ++i)
        grads.head[i] += dz * trace.flat[i];

    // gradient w.r.t. the deepest pooled maps
    const int deepest = static_cast<int>(net.layers.size()) - 1;
    const std::size_t pooled_len = trace.blocks[deepest].pooled.front().size();
    LeadMatrix dpooled(net.config.n_filters, Signal(pooled_len, 0.0));
    for (int f = 0; f < net.config.n_filters; ++f)
        for (std::size_t j = 0; j < pooled_len; ++j)
            dpooled[f][j] = dz * net.head_weights[f * pooled_len + j];

    for (int b = deepest; b >= 0; --b) {
        const BlockTrace& bt = trace.blocks[b];
        const Conv1DLayer& layer = net.layers[b];
        const LeadMatrix& input = (b == 0) ? x0 : trace.blocks[b - 1].pooled;
        const int n = static_cast<int>(bt.pre_activation.front().size());
        const int R = layer.half_width;

        // route pooled gradient through the switches, mask by the ReLU
        LeadMatrix dpre(layer.out_features, Signal(n, 0.0));
        for (int f = 0; f < layer.out_features; ++f) {
            for (std::size_t j = 0; j < dpooled[f].size(); ++j) {
                const std::size_t pos = 2 * j + bt.switches[f][j];
                if (pos < static_cast<std::size_t>(n) && bt.pre_activation[f][pos] > 0.0)
                    dpre[f][pos] += dpooled[f][j];
            }
        }

        // weight gradient: dW[i][r][k] = sum_j dpre[i][j] * input[k][j + r - R]
        auto& gw = grads.conv[b];
        for (int i = 0; i < layer.out_features; ++i) {
            for (int r = 0; r <= 2 * R; ++r) {
                const int shift = r - R;
                const int j_lo = std::max(0, -shift);
                const int j_hi = std::min(n, n - shift);
                for (int k = 0; k < layer.in_features; ++k) {
                    double acc = 0.0;
                    const double* in = input[k].data() + shift;
                    const double* dp = dpre[i].data();
                    for (int j = j_lo; j < j_hi; ++j) acc += dp[j] * in[j];
                    gw[(static_cast<std::size_t>(i) * layer.taps() + r) * layer.in_features + k] += acc;
                }
            }
        }

        if (b > 0) {
            // input gradient: dX[k][j] = sum_{r,i} w[i][r][k] * dpre[i][j - r + R]
            LeadMatrix dinput(layer.in_features, Signal(n, 0.0));
            for (int i = 0; i < layer.out_features; ++i) {
                for (int r = 0; r <= 2 * R; ++r) {
                    const int shift = r - R;  // dpre index = j - shift
                    const int j_lo = std::max(0, shift);
                    const int j_hi = std::min(n, n + shift);
                    for (int k = 0; k < layer.in_features; ++k) {
                        const double wv = layer.w(i, r, k);
                        if (wv == 0.0) continue;
                        double* di = dinput[k].data();
                        const double* dp = dpre[i].data() - shift;
                        for (int j = j_lo; j < j_hi; ++j) di[j] += wv * dp[j];
                    }
                }
            }
            dpooled = std::move(dinput);
        }
    }
    return loss;
}

struct AdamState {
    std::vector<std::vector<double>> m_conv, v_conv;
    std::vector<double> m_head, v_head;
    double m_bias = 0.0, v_bias = 0.0;
    long long t = 0;

    explicit AdamState(const Conv1DNet& net)
        : m_head(net.head_weights.size(), 0.0), v_head(net.head_weights.size(), 0.0) {
        for (const auto& l : net.layers) {
            m_conv.emplace_back(l.weights.size(), 0.0);
            v_conv.emplace_back(l.weights.size(), 0.0);
        }
    }
};

inline void adam_update(std::vector<double>& w, const std::vector<double>& g,
                        std::vector<double>& m, std::vector<double>& v,
                        double lr, double c1, double c2) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
}

}  // namespace detail

inline double mean_bce(const Conv1DNet& net, const std::vector<const LeadMatrix*>& xs,
                       const std::vector<int>& ys) {
    double total = 0.0;
    const double eps = 1e-12;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double p = model_forward(net, *xs[i]);
        const double y = ys[i] != 0 ? 1.0 : 0.0;
        total += -(y * std::log(p + eps) + (1.0 - y) * std::log(1.0 - p + eps));
    }
    return total / static_cast<double>(xs.size());
}

// ADAM + early stopping on one cross-validation round. Training rows are
// rebalanced by SMOTEENN in flattened-instance space; every conv layer is
// re-projected onto the semi-orthogonal manifold after each optimizer step.
inline TrainHistory train(Conv1DNet& net, const Dataset& data, const TrainConfig& cfg, int fold) {
    const auto train_idx = data.cnn_train_indices(fold);
    const auto val_idx = data.indices_with(SplitTag::Kind::cnn_fold, fold);
    if (train_idx.empty() || val_idx.empty())
        throw std::invalid_argument("train: empty training or validation fold");

    // assemble (possibly resampled) training matrices
    std::vector<LeadMatrix> train_store;
    std::vector<int> train_labels;
    if (cfg.apply_smoteenn) {
        std::vector<FeatureRow> flat;
        std::vector<int> labels;
        for (auto idx : train_idx) {
            const auto& inst = data.instances[idx];
            FeatureRow row;
            row.reserve(inst.n_leads() * inst.n_samples());
            for (const auto& lead : inst.values) row.insert(row.end(), lead.begin(), lead.end());
            flat.push_back(std::move(row));
            labels.push_back(inst.label);
        }
        const std::size_t n_samples = data.instances[train_idx.front()].n_samples();
        const std::size_t n_leads = data.instances[train_idx.front()].n_leads();
        ResampledSet balanced = smoteenn(flat, labels, cfg.seed);
        for (std::size_t i = 0; i < balanced.X.size(); ++i) {
            LeadMatrix m(n_leads, Signal(n_samples));
            for (std::size_t l = 0; l < n_leads; ++l)
                std::copy_n(balanced.X[i].begin() + l * n_samples, n_samples, m[l].begin());
            train_store.push_back(std::move(m));
            train_labels.push_back(balanced.y[i]);
        }
    } else {
        for (auto idx : train_idx) {
            train_store.push_back(data.instances[idx].values);
            train_labels.push_back(data.instances[idx].label);
        }
    }

    std::vector<const LeadMatrix*> val_values;
    std::vector<int> val_labels;
    for (auto idx : val_idx) {
        val_values.push_back(&data.instances[idx].values);
        val_labels.push_back(data.instances[idx].label);
    }

    std::mt19937_64 rng(cfg.seed + 0x9e3779b97f4a7c15ULL);
    detail::AdamState adam(net);
    detail::Gradients grads(net);

    TrainHistory history;
    Conv1DNet best = net;
    double best_val = std::numeric_limits<double>::infinity();
    int stall = 0;

    std::vector<std::size_t> order(train_store.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr = cfg.lr0 / (1.0 + cfg.decay * epoch);
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            grads.reset();
            for (std::size_t b = start; b < stop; ++b)
                epoch_loss += detail::backprop_instance(net, train_store[order[b]],
                                                        train_labels[order[b]], grads);
            grads.scale(1.0 / static_cast<double>(stop - start));

            ++adam.t;
            const double c1 = 1.0 - std::pow(0.9, static_cast<double>(adam.t));
            const double c2 = 1.0 - std::pow(0.999, static_cast<double>(adam.t));
            for (std::size_t l = 0; l < net.layers.size(); ++l)
                detail::adam_update(net.layers[l].weights, grads.conv[l],
                                    adam.m_conv[l], adam.v_conv[l], lr, c1, c2);
            detail::adam_update(net.head_weights, grads.head, adam.m_head, adam.v_head, lr, c1, c2);
            adam.m_bias = 0.9 * adam.m_bias + 0.1 * grads.head_bias;
            adam.v_bias = 0.999 * adam.v_bias + 0.001 * grads.head_bias * grads.head_bias;
            net.head_bias -= lr * (adam.m_bias / c1) / (std::sqrt(adam.v_bias / c2) + 1e-8);

            for (auto& layer : net.layers) layer = semi_orth_project(layer, cfg.project_iters);
        }

        EpochStats stats;
        stats.train_loss = epoch_loss / static_cast<double>(train_store.size());
        stats.val_loss = mean_bce(net, val_values, val_labels);
        history.epochs.push_back(stats);

        if (stats.val_loss < best_val - cfg.min_improvement) {
            best_val = stats.val_loss;
            best = net;
            history.best_epoch = epoch;
            stall = 0;
        } else if (++stall >= cfg.patience) {
            break;
        }
    }
    history.best_val_loss = best_val;
    net = best;
    return history;
}

struct GridCell {
    Conv1DNetConfig config;
    bool feasible = true;
    double auroc_mean = 0.0, auroc_sd = 0.0;
    double auprc_mean = 0.0, auprc_sd = 0.0;
    double mcc_mean = 0.0, mcc_sd = 0.0;
    double three_mcs_mean = 0.0, three_mcs_sd = 0.0;
    std::size_t parameters = 0;
};

struct GridSearchResult {
    std::vector<GridCell> cells;
    std::size_t best_index = 0;
};

struct GridSpec {
    std::vector<int> filters = {8, 16, 32};
    std::vector<int> kernels = {3, 5, 9};
    std::vector<int> deepness = {2, 3, 4};
};

// 5-fold cross-validated grid search; selection by highest mean composite
// score, ties broken by fewer parameters then smaller kernel. Cells whose
// first layer cannot satisfy the semi-orthogonality shape bound are marked
// infeasible and skipped.
inline GridSearchResult grid_search(const Dataset& data, const GridSpec& grid,
                                    const TrainConfig& base_cfg, int n_folds = 5) {
    if (grid.filters.empty() || grid.kernels.empty() || grid.deepness.empty())
        throw std::invalid_argument("grid_search: empty grid");
    if (!data.has_tags()) throw std::invalid_argument("grid_search: dataset is not split");

    const int leads = static_cast<int>(data.instances.front().n_leads());
    const int n_samples = static_cast<int>(data.instances.front().n_samples());

    GridSearchResult result;
    for (int f : grid.filters)
        for (int k : grid.kernels)
            for (int d : grid.deepness) {
                GridCell cell;
                cell.config = {f, k, d};
                if (f > k * leads) {
                    cell.feasible = false;
                    result.cells.push_back(cell);
                    continue;
                }
                std::vector<double> a, p, m, t;
                for (int fold = 0; fold < n_folds; ++fold) {
                    TrainConfig cfg = base_cfg;
                    cfg.seed = base_cfg.seed + 1315423911ULL * (fold + 1) + 2654435761ULL * result.cells.size();
                    Conv1DNet net = make_conv1dnet(cell.config, leads, n_samples, cfg.seed);
                    train(net, data, cfg, fold);
                    cell.parameters = net.parameter_count();

                    std::vector<double> scores;
                    std::vector<int> labels;
                    for (auto idx : data.indices_with(SplitTag::Kind::cnn_fold, fold)) {
                        scores.push_back(model_forward(net, data.instances[idx]));
                        labels.push_back(data.instances[idx].label);
                    }
                    const MetricSummary s = evaluate_scores(scores, labels);
                    a.push_back(s.auroc);
                    p.push_back(s.auprc);
                    m.push_back(s.mcc);
                    t.push_back(s.three_mcs);
                }
                auto mean_sd = [](const std::vector<double>& v, double& mean, double& sd) {
                    mean = 0.0;
                    for (double x : v) mean += x;
                    mean /= static_cast<double>(v.size());
                    sd = 0.0;
                    for (double x : v) sd += (x - mean) * (x - mean);
                    sd = v.size() > 1 ? std::sqrt(sd / static_cast<double>(v.size() - 1)) : 0.0;
                };
                mean_sd(a, cell.auroc_mean, cell.auroc_sd);
                mean_sd(p, cell.auprc_mean, cell.auprc_sd);
                mean_sd(m, cell.mcc_mean, cell.mcc_sd);
                mean_sd(t, cell.three_mcs_mean, cell.three_mcs_sd);
                result.cells.push_back(cell);
            }

    bool found = false;
    for (std::size_t i = 0; i < result.cells.size(); ++i) {
        const auto& c = result.cells[i];
        if (!c.feasible) continue;
        if (!found) {
            result.best_index = i;
            found = true;
            continue;
        }
        const auto& b = result.cells[result.best_index];
        if (c.three_mcs_mean > b.three_mcs_mean ||
            (c.three_mcs_mean == b.three_mcs_mean &&
             (c.parameters < b.parameters ||
              (c.parameters == b.parameters && c.config.kernel_size < b.config.kernel_size))))
            result.best_index = i;
    }
    if (!found) throw std::runtime_error("grid_search: no feasible configuration in the grid");
    return result;
}

// --- serialization ---------------------------------------------------------

inline nlohmann::json model_to_json(const Conv1DNet& net, const TrainHistory* history = nullptr) {
    nlohmann::json j;
    j["config"] = {{"n_filters", net.config.n_filters},
                   {"kernel_size", net.config.kernel_size},
                   {"deepness", net.config.deepness}};
    j["input_leads"] = net.input_leads;
    j["input_len"] = net.input_len;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : net.layers)
        j["layers"].push_back({{"in_features", l.in_features},
                               {"out_features", l.out_features},
                               {"half_width", l.half_width},
                               {"weights", l.weights}});
    j["head_weights"] = net.head_weights;
    j["head_bias"] = net.head_bias;
    if (history) {
        nlohmann::json h;
        h["best_epoch"] = history->best_epoch;
        h["best_val_loss"] = history->best_val_loss;
        auto& tl = h["train_loss"] = nlohmann::json::array();
        auto& vl = h["val_loss"] = nlohmann::json::array();
        for (const auto& e : history->epochs) {
            tl.push_back(e.train_loss);
            vl.push_back(e.val_loss);
        }
        j["history"] = std::move(h);
    }
    return j;
}

inline Conv1DNet model_from_json(const nlohmann::json& j) {
    Conv1DNet net;
    net.config.n_filters = j.at("config").at("n_filters").get<int>();
    net.config.kernel_size = j.at("config").at("kernel_size").get<int>();
    net.config.deepness = j.at("config").at("deepness").get<int>();
    net.input_leads = j.at("input_leads").get<int>();
    net.input_len = j.at("input_len").get<int>();
    for (const auto& lj : j.at("layers")) {
        Conv1DLayer l;
        l.in_features = lj.at("in_features").get<int>();
        l.out_features = lj.at("out_features").get<int>();
        l.half_width = lj.at("half_width").get<int>();
        l.weights = lj.at("weights").get<std::vector<double>>();
        net.layers.push_back(std::move(l));
    }
    net.head_weights = j.at("head_weights").get<std::vector<double>>();
    net.head_bias = j.at("head_bias").get<double>();
    return net;
}

inline void save_model(const Conv1DNet& net, const std::string& path,
                       const TrainHistory* history = nullptr) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << model_to_json(net, history).dump(2) << "\n";
}

inline Conv1DNet load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    in >> j;
    return model_from_json(j);
}

}  // namespace ecglens
