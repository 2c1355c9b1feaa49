#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "bnapprox/network.hpp"
#include "bnapprox/rng.hpp"

namespace bnapprox {

struct WeightedSample {
    std::vector<std::size_t> assignment;
    double weight = 1.0;
};

/// Every drawn sample had zero likelihood of the evidence.
class ZeroWeightTotal : public std::runtime_error {
public:
    ZeroWeightTotal() : std::runtime_error("likelihood weighting: all sample weights are zero") {}
};

/// Ancestral sample from the joint distribution, in topological order.
inline std::vector<std::size_t> forward_sample(const Network& net, Rng& rng) {
    std::vector<std::size_t> x(net.size(), 0);
    for (std::size_t v : net.topo_order()) {
        const std::size_t card = net.cardinality(v);
        x[v] = rng.categorical(net.cpt(v).subspan(net.cpt_row(v, x) * card, card));
    }
    return x;
}

namespace detail {

/// Fills `x` with a likelihood-weighted sample; returns the weight.
inline double lws_fill(const Network& net, const std::vector<std::optional<std::size_t>>& clamp,
                       std::vector<std::size_t>& x, Rng& rng) {
    double weight = 1.0;
    for (std::size_t v : net.topo_order()) {
        const std::size_t card = net.cardinality(v);
        const auto row = net.cpt(v).subspan(net.cpt_row(v, x) * card, card);
        if (clamp[v]) {
            x[v] = *clamp[v];
            weight *= row[x[v]];
        } else {
            x[v] = rng.categorical(row);
        }
    }
    return weight;
}

inline std::vector<std::optional<std::size_t>> clamp_table(const Network& net, const Evidence& ev) {
    if (!ev.valid_for(net)) throw std::invalid_argument("evidence does not match network");
    std::vector<std::optional<std::size_t>> clamp(net.size());
    for (const auto& [var, val] : ev) clamp[var] = val;
    return clamp;
}

}  // namespace detail

/// One likelihood-weighted sample: evidence variables clamped, the rest drawn
/// from their CPTs; weight is the product of P(observed value | parents).
inline WeightedSample lws_sample(const Network& net, const Evidence& ev, Rng& rng) {
    const auto clamp = detail::clamp_table(net, ev);
    WeightedSample s;
    s.assignment.assign(net.size(), 0);
    s.weight = detail::lws_fill(net, clamp, s.assignment, rng);
    return s;
}

/// Likelihood-weighting posterior estimate: weighted value counts normalized
/// by the total weight.
inline PosteriorSet lws_posteriors(const Network& net, const Evidence& ev, std::size_t n_samples, Rng& rng) {
    if (n_samples == 0) throw std::invalid_argument("lws_posteriors: n_samples must be at least 1");
    const auto clamp = detail::clamp_table(net, ev);
    PosteriorSet out;
    out.marginals.resize(net.size());
    for (std::size_t i = 0; i < net.size(); ++i) out[i].assign(net.cardinality(i), 0.0);

    std::vector<std::size_t> x(net.size(), 0);
    double total = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const double w = detail::lws_fill(net, clamp, x, rng);
        if (w == 0.0) continue;
        total += w;
        for (std::size_t i = 0; i < net.size(); ++i) out[i][x[i]] += w;
    }
    if (!(total > 0.0)) throw ZeroWeightTotal();
    for (std::size_t i = 0; i < net.size(); ++i) {
        if (clamp[i]) {
            out[i] = point_mass(net.cardinality(i), *clamp[i]);
            continue;
        }
        for (double& p : out[i]) p /= total;
    }
    return out;
}

}  // namespace bnapprox
