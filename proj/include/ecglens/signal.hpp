#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ecglens/types.hpp"

namespace ecglens {

enum class FilterKind { low, high };

namespace detail {

struct Biquad {
    // direct form II transposed; b: numerator, a: denominator (a0 == 1)
    double b0, b1, b2, a1, a2;
};

// Cascade of second-order sections for an order-n Butterworth filter,
// designed by bilinear transform of the analog prototype.
inline std::vector<Biquad> butterworth_sections(int order, double cutoff_hz,
                                                FilterKind kind, double fs_hz) {
    using cd = std::complex<double>;
    const double warped = std::tan(std::numbers::pi * cutoff_hz / fs_hz);

    std::vector<cd> analog_poles(order);
    for (int k = 0; k < order; ++k) {
        const double theta = std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order) +
                             std::numbers::pi / 2.0;
        cd p(std::cos(theta), std::sin(theta));
        analog_poles[k] = (kind == FilterKind::low) ? warped * p : warped / p;
    }

    // bilinear: z = (1 + s) / (1 - s)
    std::vector<cd> zpoles(order);
    for (int k = 0; k < order; ++k)
        zpoles[k] = (1.0 + analog_poles[k]) / (1.0 - analog_poles[k]);

    const double zero = (kind == FilterKind::low) ? -1.0 : 1.0;
    const double ref = (kind == FilterKind::low) ? 1.0 : -1.0;  // unit-gain point

    std::vector<Biquad> sections;
    // conjugate pairs k and order-1-k; middle pole of an odd order is real
    for (int k = 0; k < order / 2; ++k) {
        const cd p = zpoles[k];
        Biquad s{};
        s.b0 = 1.0;
        s.b1 = -2.0 * zero;
        s.b2 = zero * zero;
        s.a1 = -2.0 * p.real();
        s.a2 = std::norm(p);
        const double num = s.b0 + s.b1 * (1.0 / ref) + s.b2 * (1.0 / (ref * ref));
        const double den = 1.0 + s.a1 * (1.0 / ref) + s.a2 * (1.0 / (ref * ref));
        const double g = den / num;
        s.b0 *= g; s.b1 *= g; s.b2 *= g;
        sections.push_back(s);
    }
    if (order % 2 == 1) {
        const cd p = zpoles[order / 2];
        Biquad s{};
        s.b0 = 1.0;
        s.b1 = -zero;
        s.b2 = 0.0;
        s.a1 = -p.real();
        s.a2 = 0.0;
        const double num = s.b0 + s.b1 / ref;
        const double den = 1.0 + s.a1 / ref;
        const double g = den / num;
        s.b0 *= g; s.b1 *= g;
        sections.push_back(s);
    }
    return sections;
}

// One pass through the cascade, states initialised to the step steady state
// of the first sample.
inline void sos_filter_inplace(std::vector<double>& x, const std::vector<Biquad>& sections) {
    for (const auto& s : sections) {
        const double h1 = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);  // DC gain
        double z2 = (s.b2 - s.a2 * h1) * x.front();
        double z1 = (s.b1 - s.a1 * h1 + (s.b2 - s.a2 * h1)) * x.front();
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}

}  // namespace detail

// Zero-phase Butterworth filter: the cascade is applied forward and backward
// over an odd-reflection padded copy, so the magnitude response is the
// squared single-pass curve and the phase is zero.
inline Signal butterworth_filter(const Signal& x, int order, double cutoff_hz,
                                 FilterKind kind, double fs_hz) {
    if (order < 1) throw std::invalid_argument("butterworth_filter: order must be >= 1");
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs_hz / 2.0))
        throw std::invalid_argument("butterworth_filter: cutoff outside (0, Nyquist)");
    if (x.empty()) return x;

    const auto sections = detail::butterworth_sections(order, cutoff_hz, kind, fs_hz);

    // Padding must cover the slowest pole's settling time, which for a
    // low-cutoff high-pass dwarfs the usual 3-taps rule.
    const std::size_t n = x.size();
    const double settle = 35.0 * fs_hz / (2.0 * std::numbers::pi * cutoff_hz);
    const std::size_t pad = std::min<std::size_t>(
        n - 1, std::max<std::size_t>(3 * (2 * order + 1),
                                     static_cast<std::size_t>(std::ceil(settle))));
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[n - 1 - i]);

    detail::sos_filter_inplace(ext, sections);
    std::reverse(ext.begin(), ext.end());
    detail::sos_filter_inplace(ext, sections);
    std::reverse(ext.begin(), ext.end());

    return Signal(ext.begin() + pad, ext.begin() + pad + n);
}

// Savitzky-Golay baseline removal: subtracts the windowed least-squares
// polynomial smooth from the input. Edge positions are smoothed with the
// polynomial fit of the first/last full window.
inline Signal savgol_detrend(const Signal& x, int window, int polyorder) {
    const int n = static_cast<int>(x.size());
    if (window % 2 == 0) throw std::invalid_argument("savgol_detrend: window must be odd");
    if (window > n) throw std::invalid_argument("savgol_detrend: window exceeds signal length");
    if (polyorder >= window) throw std::invalid_argument("savgol_detrend: polyorder must be < window");

    // Hat matrix H = A (A^T A)^{-1} A^T of the polynomial design over one window;
    // row p of H smooths position p within the window.
    Eigen::MatrixXd design(window, polyorder + 1);
    for (int i = 0; i < window; ++i) {
        double v = 1.0;
        const double t = i - (window - 1) / 2.0;
        for (int p = 0; p <= polyorder; ++p) {
            design(i, p) = v;
            v *= t;
        }
    }
    const Eigen::MatrixXd hat =
        design * (design.transpose() * design).ldlt().solve(design.transpose());

    const int half = (window - 1) / 2;
    Signal out(x.size());
    for (int j = 0; j < n; ++j) {
        int start = std::clamp(j - half, 0, n - window);
        const int row = j - start;
        double smooth = 0.0;
        for (int i = 0; i < window; ++i) smooth += hat(row, i) * x[start + i];
        out[j] = x[j] - smooth;
    }
    return out;
}

// Tukey (tapered cosine) window; endpoints are exactly zero for alpha > 0.
inline Signal tukey_window(std::size_t n, double alpha) {
    Signal w(n, 1.0);
    if (n == 1) { w[0] = alpha > 0.0 ? 0.0 : 1.0; return w; }
    const double edge = alpha * (n - 1) / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double di = static_cast<double>(i);
        if (di < edge) {
            w[i] = 0.5 * (1.0 + std::cos(std::numbers::pi * (di / edge - 1.0)));
        } else if (di > (n - 1) - edge) {
            const double j = (n - 1) - di;
            w[i] = 0.5 * (1.0 + std::cos(std::numbers::pi * (j / edge - 1.0)));
        }
    }
    if (alpha > 0.0) { w.front() = 0.0; w.back() = 0.0; }
    return w;
}

struct PreprocessParams {
    int butter_order = 4;
    double low_cutoff_hz = 50.0;
    double high_cutoff_hz = 0.5;
    double savgol_window_s = 2.0;
    int savgol_polyorder = 3;
    double tukey_alpha = 0.1;
    double rescale = 1e-3;
};

// Per lead: low-pass 50 Hz, high-pass 0.5 Hz (both zero phase), Savitzky-Golay
// detrend, rescale, then taper. The constant removed before tapering is chosen
// so the tapered lead has exactly zero mean.
inline TimeSeriesInstance preprocess(const TimeSeriesInstance& raw,
                                     const PreprocessParams& params = {}) {
    if (!(raw.sample_rate_hz > 1.0))
        throw std::invalid_argument("preprocess: sample_rate_hz must exceed 1 Hz");
    check_rectangular(raw.values, "preprocess");

    TimeSeriesInstance out = raw;
    const std::size_t n = raw.n_samples();

    int window = static_cast<int>(std::ceil(params.savgol_window_s * raw.sample_rate_hz));
    if (window % 2 == 0) ++window;
    window = std::min<int>(window, static_cast<int>(n) | 1);
    if (window > static_cast<int>(n)) window -= 2;
    if (window <= params.savgol_polyorder)
        throw std::invalid_argument("preprocess: signal too short for detrend window");

    const Signal taper = tukey_window(n, params.tukey_alpha);
    const double taper_sum = std::accumulate(taper.begin(), taper.end(), 0.0);

    for (auto& lead : out.values) {
        lead = butterworth_filter(lead, params.butter_order, params.low_cutoff_hz,
                                  FilterKind::low, raw.sample_rate_hz);
        lead = butterworth_filter(lead, params.butter_order, params.high_cutoff_hz,
                                  FilterKind::high, raw.sample_rate_hz);
        lead = savgol_detrend(lead, window, params.savgol_polyorder);
        for (double& v : lead) v *= params.rescale;
        double tapered_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) tapered_sum += lead[i] * taper[i];
        const double offset = tapered_sum / taper_sum;
        for (std::size_t i = 0; i < n; ++i) lead[i] = (lead[i] - offset) * taper[i];
    }
    return out;
}

enum class Pathology { none, absent_p_irregular_rr, slow_rate, st_depress_t_invert };

inline std::string to_string(Pathology p) {
    switch (p) {
        case Pathology::none: return "none";
        case Pathology::absent_p_irregular_rr: return "absent_p_irregular_rr";
        case Pathology::slow_rate: return "slow_rate";
        case Pathology::st_depress_t_invert: return "st_depress_t_invert";
    }
    return "none";
}

inline Pathology pathology_from_string(const std::string& s) {
    if (s == "none") return Pathology::none;
    if (s == "absent_p_irregular_rr") return Pathology::absent_p_irregular_rr;
    if (s == "slow_rate") return Pathology::slow_rate;
    if (s == "st_depress_t_invert") return Pathology::st_depress_t_invert;
    throw std::invalid_argument("unknown pathology: " + s);
}

struct NoiseConfig {
    double powerline_hz = 50.0;
    double powerline_amp = 0.0;
    double wander_hz = 0.25;  // must stay <= 0.3
    double wander_amp = 0.0;
    double white_sigma = 0.0;
};

// Gaussian-bump beat model: P, Q, R, S, T bumps per beat at fixed offsets
// from the R peak, mixed across leads by per-lead amplitude rows.
struct SynthConfig {
    double rr_interval_s = 0.8;
    double rr_jitter = 0.02;                 // fraction of rr
    std::vector<std::array<double, 5>> wave_amplitudes;  // [lead][P,Q,R,S,T], millivolts
    std::array<double, 5> wave_widths_s = {0.040, 0.018, 0.024, 0.020, 0.070};
    Pathology pathology = Pathology::none;
    NoiseConfig noise;
    double sample_rate_hz = 200.0;
    unsigned long long seed = 0;
};

inline SynthConfig default_synth_config(std::size_t n_leads) {
    SynthConfig cfg;
    const std::array<double, 5> base = {0.15, -0.10, 1.00, -0.20, 0.30};
    for (std::size_t l = 0; l < n_leads; ++l) {
        // fixed mixing: alternating polarity precordial-style gain roll-off
        const double gain = 1.0 - 0.06 * static_cast<double>(l % 6);
        const double flip = (l % 5 == 4) ? -0.8 : 1.0;
        std::array<double, 5> row{};
        for (std::size_t w = 0; w < 5; ++w) row[w] = base[w] * gain * flip;
        cfg.wave_amplitudes.push_back(row);
    }
    return cfg;
}

inline TimeSeriesInstance synth_ecg(const SynthConfig& cfg, double duration_s) {
    SynthConfig c = cfg;
    if (c.wave_amplitudes.empty()) c.wave_amplitudes = default_synth_config(2).wave_amplitudes;
    if (!(c.rr_interval_s > 0.0)) throw std::invalid_argument("synth_ecg: rr_interval_s must be positive");
    for (double w : c.wave_widths_s)
        if (!(w > 0.0)) throw std::invalid_argument("synth_ecg: wave widths must be positive");
    if (!(c.rr_jitter >= 0.0 && c.rr_jitter < 1.0))
        throw std::invalid_argument("synth_ecg: rr_jitter must lie in [0,1)");
    if (c.noise.wander_hz > 0.3) throw std::invalid_argument("synth_ecg: wander_hz must be <= 0.3");

    switch (c.pathology) {
        case Pathology::absent_p_irregular_rr:
            for (auto& row : c.wave_amplitudes) row[0] = 0.0;
            c.rr_jitter = std::max(c.rr_jitter, 0.15);
            break;
        case Pathology::slow_rate:
            c.rr_interval_s = std::max(c.rr_interval_s, 1.2);
            break;
        default:
            break;
    }
    if (!(duration_s >= 2.0 * c.rr_interval_s))
        throw std::invalid_argument("synth_ecg: duration must cover at least two beats");

    const std::size_t n_leads = c.wave_amplitudes.size();
    const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * c.sample_rate_hz));
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // R-peak times with jittered RR intervals
    std::vector<double> r_times;
    double t = 0.55 * c.rr_interval_s;
    while (t < duration_s + c.rr_interval_s) {
        r_times.push_back(t);
        t += c.rr_interval_s * (1.0 + c.rr_jitter * unit(rng));
    }

    const std::array<double, 5> offsets = {-0.17, -0.035, 0.0, 0.035, 0.30};
    const double powerline_phase = std::numbers::pi * unit(rng);
    const double wander_phase = std::numbers::pi * unit(rng);

    TimeSeriesInstance inst;
    inst.sample_rate_hz = c.sample_rate_hz;
    inst.values.assign(n_leads, Signal(n, 0.0));
    for (std::size_t l = 0; l < n_leads; ++l)
        inst.lead_names.push_back("lead" + std::to_string(l));

    for (std::size_t l = 0; l < n_leads; ++l) {
        auto amps = c.wave_amplitudes[l];
        double st_offset = 0.0;
        if (c.pathology == Pathology::st_depress_t_invert) {
            amps[4] = -amps[4];
            st_offset = -0.12 * std::fabs(amps[2]);
        }
        Signal& lead = inst.values[l];
        for (double rt : r_times) {
            for (std::size_t w = 0; w < 5; ++w) {
                if (amps[w] == 0.0) continue;
                const double center = rt + offsets[w];
                const double sigma = c.wave_widths_s[w];
                const long lo = std::lround((center - 4.0 * sigma) * c.sample_rate_hz);
                const long hi = std::lround((center + 4.0 * sigma) * c.sample_rate_hz);
                for (long i = std::max(0L, lo); i <= std::min<long>(n - 1, hi); ++i) {
                    const double dt = i / c.sample_rate_hz - center;
                    lead[i] += amps[w] * std::exp(-dt * dt / (2.0 * sigma * sigma));
                }
            }
            if (st_offset != 0.0) {
                // flat depression between the S offset and T onset
                const double seg_lo = rt + offsets[3] + 2.0 * c.wave_widths_s[3];
                const double seg_hi = rt + offsets[4];
                const double ramp = 0.01;
                const long lo = std::lround((seg_lo - 4.0 * ramp) * c.sample_rate_hz);
                const long hi = std::lround((seg_hi + 4.0 * ramp) * c.sample_rate_hz);
                for (long i = std::max(0L, lo); i <= std::min<long>(n - 1, hi); ++i) {
                    const double ti = i / c.sample_rate_hz;
                    const double rise = 0.5 * (1.0 + std::erf((ti - seg_lo) / ramp));
                    const double fall = 0.5 * (1.0 + std::erf((seg_hi - ti) / ramp));
                    lead[i] += st_offset * rise * fall;
                }
            }
        }
    }

    // noise terms share one draw sequence so output is reproducible per seed
    for (std::size_t l = 0; l < n_leads; ++l) {
        Signal& lead = inst.values[l];
        for (std::size_t i = 0; i < n; ++i) {
            const double ti = i / c.sample_rate_hz;
            if (c.noise.powerline_amp != 0.0)
                lead[i] += c.noise.powerline_amp *
                           std::sin(2.0 * std::numbers::pi * c.noise.powerline_hz * ti + powerline_phase);
            if (c.noise.wander_amp != 0.0)
                lead[i] += c.noise.wander_amp *
                           std::sin(2.0 * std::numbers::pi * c.noise.wander_hz * ti + wander_phase);
            if (c.noise.white_sigma > 0.0) lead[i] += c.noise.white_sigma * gauss(rng);
        }
    }
    return inst;
}

// Stratified split: half the data per class to the LR side; within the CNN
// half, a fixed stratified 20% test set and n_folds cross-validation folds.
inline void split_dataset(Dataset& ds, unsigned long long seed, int n_folds = 5) {
    if (n_folds < 2) throw std::invalid_argument("split_dataset: need at least 2 folds");
    std::vector<std::size_t> class0, class1;
    for (std::size_t i = 0; i < ds.instances.size(); ++i)
        (ds.instances[i].label != 0 ? class1 : class0).push_back(i);
    if (class0.size() < 2 || class1.size() < 2)
        throw std::runtime_error("split error: need at least 2 instances per class");

    std::mt19937_64 rng(seed);
    std::shuffle(class0.begin(), class0.end(), rng);
    std::shuffle(class1.begin(), class1.end(), rng);

    ds.tags.assign(ds.instances.size(), SplitTag{});
    std::vector<std::size_t> fold_class_count(2 * n_folds, 0);
    std::size_t test_count[2] = {0, 0};

    int cls = 0;
    for (const auto* group : {&class0, &class1}) {
        const std::size_t n_cnn = (group->size() + 1) / 2;
        const std::size_t n_test = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n_cnn)));
        std::size_t fold_cursor = 0;
        for (std::size_t k = 0; k < group->size(); ++k) {
            const std::size_t idx = (*group)[k];
            if (k >= n_cnn) {
                ds.tags[idx] = {SplitTag::Kind::lr_half, -1};
            } else if (k < n_test) {
                ds.tags[idx] = {SplitTag::Kind::cnn_test, -1};
                ++test_count[cls];
            } else {
                const int fold = static_cast<int>(fold_cursor % n_folds);
                ds.tags[idx] = {SplitTag::Kind::cnn_fold, fold};
                ++fold_class_count[static_cast<std::size_t>(cls) * n_folds + fold];
                ++fold_cursor;
            }
        }
        ++cls;
    }

    for (int c = 0; c < 2; ++c) {
        if (test_count[c] == 0)
            throw std::runtime_error("split error: class " + std::to_string(c) + " absent from test set");
        for (int f = 0; f < n_folds; ++f)
            if (fold_class_count[static_cast<std::size_t>(c) * n_folds + f] == 0)
                throw std::runtime_error("split error: class " + std::to_string(c) +
                                         " absent from fold " + std::to_string(f));
    }
    const auto lr = ds.indices_with(SplitTag::Kind::lr_half);
    bool lr_has[2] = {false, false};
    for (auto i : lr) lr_has[ds.instances[i].label != 0] = true;
    if (!lr_has[0] || !lr_has[1])
        throw std::runtime_error("split error: a class is absent from the LR half");
}

}  // namespace ecglens
