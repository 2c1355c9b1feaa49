#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bnapprox/network.hpp"

namespace bnapprox {

/// Predictions are clamped to at least this value inside the KL logarithm.
inline constexpr double kl_clamp = 1e-6;

inline const std::vector<double>& default_mta_thresholds() {
    static const std::vector<double> t{0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3};
    return t;
}

namespace detail {

inline void check_aligned(std::span<const PosteriorSet> targets, std::span<const PosteriorSet> predictions) {
    if (targets.size() != predictions.size()) throw std::invalid_argument("metrics: target/prediction count mismatch");
    for (std::size_t n = 0; n < targets.size(); ++n) {
        if (targets[n].size() != predictions[n].size())
            throw std::invalid_argument("metrics: example " + std::to_string(n) + " has mismatched variable count");
        for (std::size_t i = 0; i < targets[n].size(); ++i)
            if (targets[n][i].size() != predictions[n][i].size())
                throw std::invalid_argument("metrics: example " + std::to_string(n) + " variable " + std::to_string(i) +
                                            " has mismatched cardinality");
    }
}

}  // namespace detail

/// Summed per-variable KL(target || prediction) of one example; 0 log 0 = 0.
inline double example_kl(const PosteriorSet& target, const PosteriorSet& prediction) {
    double d = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i)
        for (std::size_t j = 0; j < target[i].size(); ++j) {
            const double y = target[i][j];
            if (y <= 0.0) continue;
            d += y * std::log(y / std::max(prediction[i][j], kl_clamp));
        }
    return d;
}

/// Average over examples of the summed per-variable KL divergence.
inline double avg_kl(std::span<const PosteriorSet> targets, std::span<const PosteriorSet> predictions) {
    detail::check_aligned(targets, predictions);
    if (targets.empty()) throw std::invalid_argument("avg_kl: no examples");
    double total = 0.0;
    for (std::size_t n = 0; n < targets.size(); ++n) total += example_kl(targets[n], predictions[n]);
    return total / static_cast<double>(targets.size());
}

struct MtaPoint {
    double threshold;
    double accuracy;
};

using MtaCurve = std::vector<MtaPoint>;

/// Multi-threshold accuracy: per example, per variable, the fraction of values
/// with |y - p| < threshold, averaged over variables then examples.
inline MtaCurve mta(std::span<const PosteriorSet> targets, std::span<const PosteriorSet> predictions,
                    std::span<const double> thresholds) {
    detail::check_aligned(targets, predictions);
    if (targets.empty()) throw std::invalid_argument("mta: no examples");
    MtaCurve curve;
    for (double t : thresholds) {
        if (!(t > 0.0 && t <= 1.0)) throw std::invalid_argument("mta: thresholds must lie in (0, 1]");
        double acc = 0.0;
        for (std::size_t n = 0; n < targets.size(); ++n) {
            double per_example = 0.0;
            for (std::size_t i = 0; i < targets[n].size(); ++i) {
                std::size_t hits = 0;
                for (std::size_t j = 0; j < targets[n][i].size(); ++j)
                    hits += std::abs(targets[n][i][j] - predictions[n][i][j]) < t ? 1 : 0;
                per_example += static_cast<double>(hits) / static_cast<double>(targets[n][i].size());
            }
            acc += per_example / static_cast<double>(targets[n].size());
        }
        curve.push_back({t, acc / static_cast<double>(targets.size())});
    }
    return curve;
}

inline double mta_at(const MtaCurve& curve, double threshold) {
    for (const auto& p : curve)
        if (std::abs(p.threshold - threshold) < 1e-12) return p.accuracy;
    throw std::out_of_range("mta curve has no point at threshold " + std::to_string(threshold));
}

/// Seconds per call of `infer` over `workload`, after one untimed warm-up call.
template <class Item, class Fn>
double time_inference(std::span<const Item> workload, Fn&& infer) {
    if (workload.empty()) throw std::invalid_argument("time_inference: empty workload");
    infer(workload.front());
    const auto start = std::chrono::steady_clock::now();
    for (const auto& item : workload) infer(item);
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(stop - start).count() / static_cast<double>(workload.size());
}

struct EvalReport {
    std::string method;
    std::string dataset;
    std::size_t n_examples = 0;
    double avg_kl = 0.0;
    MtaCurve mta_curve;
    double time_per_inference_seconds = 0.0;
    std::string config_fingerprint;
    std::size_t failures = 0;  // LWS runs with zero total weight
};

inline EvalReport make_report(std::string method, std::string dataset, std::span<const PosteriorSet> targets,
                              std::span<const PosteriorSet> predictions, std::span<const double> thresholds,
                              double seconds_per_inference, std::string config_fingerprint = {}) {
    EvalReport r;
    r.method = std::move(method);
    r.dataset = std::move(dataset);
    r.n_examples = targets.size();
    r.avg_kl = avg_kl(targets, predictions);
    r.mta_curve = mta(targets, predictions, thresholds);
    r.time_per_inference_seconds = seconds_per_inference;
    r.config_fingerprint = std::move(config_fingerprint);
    return r;
}

namespace detail {

inline std::string fmt_num(double v, const char* f = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace detail

/// CSV with columns method,dataset,n,avg_kl,time_per_inference,mta@<t>...
/// All reports must share the same thresholds.
inline std::string reports_csv(std::span<const EvalReport> reports) {
    if (reports.empty()) return {};
    std::ostringstream out;
    out << "method,dataset,n,avg_kl,time_per_inference";
    for (const auto& p : reports.front().mta_curve) out << ",mta@" << detail::fmt_num(p.threshold, "%g");
    out << '\n';
    for (const auto& r : reports) {
        out << r.method << ',' << r.dataset << ',' << r.n_examples << ',' << detail::fmt_num(r.avg_kl, "%.6f") << ','
            << detail::fmt_num(r.time_per_inference_seconds, "%.6g");
        for (const auto& p : r.mta_curve) out << ',' << detail::fmt_num(p.accuracy, "%.6f");
        out << '\n';
    }
    return out.str();
}

/// Human-readable table.
inline std::string reports_table(std::span<const EvalReport> reports) {
    if (reports.empty()) return {};
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %-12s %6s %10s %14s", "method", "dataset", "n", "avg_kl", "sec/inference");
    out << line;
    for (const auto& p : reports.front().mta_curve) {
        std::snprintf(line, sizeof line, " %9s", ("mta@" + detail::fmt_num(p.threshold, "%g")).c_str());
        out << line;
    }
    out << '\n';
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%-10s %-12s %6zu %10.4f %14.6f", r.method.c_str(), r.dataset.c_str(), r.n_examples,
                      r.avg_kl, r.time_per_inference_seconds);
        out << line;
        for (const auto& p : r.mta_curve) {
            std::snprintf(line, sizeof line, " %8.2f%%", 100.0 * p.accuracy);
            out << line;
        }
        if (r.failures) out << "  (" << r.failures << " zero-weight runs)";
        out << '\n';
    }
    return out.str();
}

}  // namespace bnapprox
