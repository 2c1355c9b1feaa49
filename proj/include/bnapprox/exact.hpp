#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bnapprox/factor.hpp"
#include "bnapprox/network.hpp"

namespace bnapprox {

/// Evidence below this probability is treated as impossible.
inline constexpr double impossible_evidence_threshold = 1e-12;

class ImpossibleEvidence : public std::runtime_error {
public:
    explicit ImpossibleEvidence(double p)
        : std::runtime_error("impossible evidence: P(O) = " + std::to_string(p)), probability_(p) {}
    double probability() const noexcept { return probability_; }

private:
    double probability_;
};

struct ExactResult {
    PosteriorSet posteriors;
    double evidence_probability = 1.0;
};

struct EliminationOptions {
    /// Explicit elimination order (any permutation of all variables; only the
    /// variables that need eliminating are used). Min-degree when empty.
    std::optional<std::vector<std::size_t>> order;
};

/// CPT of `var` as a factor over (parents..., var).
inline Factor cpt_factor(const Network& net, std::size_t var) {
    std::vector<std::size_t> scope(net.parents(var).begin(), net.parents(var).end());
    scope.push_back(var);
    std::vector<std::size_t> cards;
    for (std::size_t v : scope) cards.push_back(net.cardinality(v));
    return Factor{std::move(scope), std::move(cards), std::vector<double>(net.cpt(var).begin(), net.cpt(var).end())};
}

namespace detail {

/// Multiply all factors and sum out `eliminate` in the given order (or by
/// min-degree), returning the product of what remains.
inline Factor variable_elimination(std::vector<Factor> factors, std::vector<std::size_t> eliminate,
                                   const std::optional<std::vector<std::size_t>>& order) {
    if (order) {
        std::vector<std::size_t> ordered;
        for (std::size_t v : *order)
            if (std::find(eliminate.begin(), eliminate.end(), v) != eliminate.end()) ordered.push_back(v);
        if (ordered.size() != eliminate.size()) throw std::invalid_argument("elimination order misses variables");
        eliminate = std::move(ordered);
    }
    std::vector<std::size_t> neighbours;
    while (!eliminate.empty()) {
        std::size_t pick = 0;
        if (!order) {
            // Min-degree: fewest distinct neighbours in the current factor set.
            std::size_t best = std::numeric_limits<std::size_t>::max();
            for (std::size_t k = 0; k < eliminate.size(); ++k) {
                neighbours.clear();
                for (const auto& f : factors) {
                    if (!f.contains(eliminate[k])) continue;
                    for (std::size_t v : f.scope)
                        if (v != eliminate[k] && std::find(neighbours.begin(), neighbours.end(), v) == neighbours.end())
                            neighbours.push_back(v);
                }
                if (neighbours.size() < best || (neighbours.size() == best && eliminate[k] < eliminate[pick])) {
                    best = neighbours.size();
                    pick = k;
                }
            }
        }
        const std::size_t var = eliminate[pick];
        eliminate.erase(eliminate.begin() + static_cast<std::ptrdiff_t>(pick));

        std::optional<Factor> bucket;
        std::vector<Factor> rest;
        rest.reserve(factors.size());
        for (auto& f : factors) {
            if (f.contains(var))
                bucket = bucket ? factor_product(*bucket, f) : std::move(f);
            else
                rest.push_back(std::move(f));
        }
        if (bucket) rest.push_back(factor_marginalize(*bucket, var));
        factors = std::move(rest);
    }
    Factor result = Factor::unit();
    for (const auto& f : factors) result = factor_product(result, f);
    return result;
}

}  // namespace detail

/// Posterior marginal of every variable given `ev`, plus P(ev).
///
/// Variable elimination, one run per unobserved variable, over the ancestral
/// closure of the query and the evidence (barren descendants sum to one).
/// Evidence enters by slicing CPTs. Observed variables get point masses.
inline ExactResult exact_posteriors(const Network& net, const Evidence& ev, const EliminationOptions& options = {}) {
    if (!ev.valid_for(net)) throw std::invalid_argument("exact_posteriors: evidence does not match network");
    const std::size_t n = net.size();

    std::vector<Factor> reduced(n);
    for (std::size_t i = 0; i < n; ++i) {
        Factor f = cpt_factor(net, i);
        for (const auto& [var, val] : ev) f = factor_reduce(f, var, val);
        reduced[i] = std::move(f);
    }

    auto add_ancestors = [&](std::size_t start, std::vector<bool>& mark) {
        std::vector<std::size_t> stack{start};
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            if (mark[v]) continue;
            mark[v] = true;
            for (std::size_t p : net.parents(v)) stack.push_back(p);
        }
    };
    std::vector<bool> evidence_closure(n, false);
    for (const auto& [var, val] : ev) add_ancestors(var, evidence_closure);

    auto run = [&](std::optional<std::size_t> query) {
        std::vector<bool> relevant = evidence_closure;
        if (query) add_ancestors(*query, relevant);
        std::vector<Factor> factors;
        std::vector<std::size_t> eliminate;
        for (std::size_t i = 0; i < n; ++i) {
            if (!relevant[i]) continue;
            factors.push_back(reduced[i]);
            if (!ev.observed(i) && i != query) eliminate.push_back(i);
        }
        return detail::variable_elimination(std::move(factors), std::move(eliminate), options.order);
    };

    ExactResult result;
    result.posteriors.marginals.resize(n);
    std::optional<double> p_evidence;
    for (std::size_t q = 0; q < n; ++q) {
        if (ev.observed(q)) continue;
        Factor joint = run(q);
        double total = 0.0;
        for (double v : joint.values) total += v;
        if (!p_evidence) {
            p_evidence = total;
            if (!(total >= impossible_evidence_threshold)) throw ImpossibleEvidence(total);
        }
        auto& post = result.posteriors[q];
        post.resize(net.cardinality(q));
        for (std::size_t k = 0; k < post.size(); ++k) post[k] = joint.values[k] / total;
    }
    if (!p_evidence) {
        // Everything observed: P(O) is the product of the sliced CPTs.
        Factor all = run(std::nullopt);
        p_evidence = all.values.at(0);
        if (!(*p_evidence >= impossible_evidence_threshold)) throw ImpossibleEvidence(*p_evidence);
    }
    for (const auto& [var, val] : ev) result.posteriors[var] = point_mass(net.cardinality(var), val);
    result.evidence_probability = *p_evidence;
    return result;
}

}  // namespace bnapprox
