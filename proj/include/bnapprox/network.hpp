#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bnapprox {

struct Variable {
    std::string name;
    std::vector<std::string> labels;

    std::size_t cardinality() const noexcept { return labels.size(); }
};

/// Immutable discrete Bayesian network.
///
/// Variables are indexed 0..I-1 in declaration order. The CPT of variable i is
/// a flat row-major array: the parent tuple (parents in the order given, last
/// parent fastest) selects a row, the child value selects the column.
class Network {
public:
    Network() = default;

    Network(std::string name, std::vector<Variable> variables,
            std::vector<std::vector<std::size_t>> parents, std::vector<std::vector<double>> cpts)
        : name_(std::move(name)),
          variables_(std::move(variables)),
          parents_(std::move(parents)),
          cpts_(std::move(cpts)) {
        validate();
        compute_topo_order();
    }

    const std::string& name() const noexcept { return name_; }
    std::size_t size() const noexcept { return variables_.size(); }
    const Variable& variable(std::size_t i) const { return variables_.at(i); }
    const std::vector<Variable>& variables() const noexcept { return variables_; }
    std::size_t cardinality(std::size_t i) const { return variables_.at(i).cardinality(); }
    std::span<const std::size_t> parents(std::size_t i) const { return parents_.at(i); }
    std::span<const double> cpt(std::size_t i) const { return cpts_.at(i); }
    std::span<const std::size_t> topo_order() const noexcept { return topo_order_; }

    std::optional<std::size_t> find(std::string_view var_name) const {
        for (std::size_t i = 0; i < variables_.size(); ++i)
            if (variables_[i].name == var_name) return i;
        return std::nullopt;
    }

    std::optional<std::size_t> find_value(std::size_t var, std::string_view label) const {
        const auto& labels = variables_.at(var).labels;
        for (std::size_t k = 0; k < labels.size(); ++k)
            if (labels[k] == label) return k;
        return std::nullopt;
    }

    std::size_t edge_count() const noexcept {
        std::size_t n = 0;
        for (const auto& p : parents_) n += p.size();
        return n;
    }

    /// Row of the CPT of `var` selected by the parent values in `assignment`.
    std::size_t cpt_row(std::size_t var, std::span<const std::size_t> assignment) const {
        std::size_t row = 0;
        for (std::size_t p : parents_[var]) row = row * variables_[p].cardinality() + assignment[p];
        return row;
    }

    /// P(var = value | parents as in assignment).
    double conditional(std::size_t var, std::size_t value, std::span<const std::size_t> assignment) const {
        return cpts_[var][cpt_row(var, assignment) * variables_[var].cardinality() + value];
    }

private:
    void validate() const {
        const std::size_t n = variables_.size();
        if (parents_.size() != n || cpts_.size() != n)
            throw std::invalid_argument("Network: parents/cpts size must match variable count");
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t card = variables_[i].cardinality();
            if (card == 0) throw std::invalid_argument("Network: variable '" + variables_[i].name + "' has no values");
            std::size_t rows = 1;
            for (std::size_t p : parents_[i]) {
                if (p >= n || p == i)
                    throw std::invalid_argument("Network: bad parent index for '" + variables_[i].name + "'");
                rows *= variables_[p].cardinality();
            }
            if (cpts_[i].size() != rows * card)
                throw std::invalid_argument("Network: CPT size mismatch for '" + variables_[i].name + "'");
            for (std::size_t r = 0; r < rows; ++r) {
                double sum = 0.0;
                for (std::size_t k = 0; k < card; ++k) {
                    const double p = cpts_[i][r * card + k];
                    if (!(p >= 0.0)) throw std::invalid_argument("Network: negative CPT entry in '" + variables_[i].name + "'");
                    sum += p;
                }
                if (std::abs(sum - 1.0) > 1e-6)
                    throw std::invalid_argument("Network: CPT row of '" + variables_[i].name + "' does not sum to 1");
            }
        }
    }

    void compute_topo_order() {
        const std::size_t n = variables_.size();
        std::vector<std::size_t> indegree(n, 0);
        std::vector<std::vector<std::size_t>> children(n);
        for (std::size_t i = 0; i < n; ++i) {
            indegree[i] = parents_[i].size();
            for (std::size_t p : parents_[i]) children[p].push_back(i);
        }
        // Kahn's algorithm, smallest ready index first.
        std::vector<std::size_t> ready;
        for (std::size_t i = 0; i < n; ++i)
            if (indegree[i] == 0) ready.push_back(i);
        topo_order_.clear();
        while (!ready.empty()) {
            auto it = std::min_element(ready.begin(), ready.end());
            const std::size_t v = *it;
            ready.erase(it);
            topo_order_.push_back(v);
            for (std::size_t c : children[v])
                if (--indegree[c] == 0) ready.push_back(c);
        }
        if (topo_order_.size() != n) throw std::invalid_argument("Network: graph contains a cycle");
    }

    std::string name_;
    std::vector<Variable> variables_;
    std::vector<std::vector<std::size_t>> parents_;
    std::vector<std::vector<double>> cpts_;
    std::vector<std::size_t> topo_order_;
};

/// Partial assignment: variable index -> observed value index.
class Evidence {
public:
    Evidence() = default;

    void set(std::size_t var, std::size_t value) { values_[var] = value; }
    void erase(std::size_t var) { values_.erase(var); }
    bool observed(std::size_t var) const { return values_.count(var) != 0; }
    std::optional<std::size_t> value(std::size_t var) const {
        auto it = values_.find(var);
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }

    bool valid_for(const Network& net) const {
        for (const auto& [var, val] : values_)
            if (var >= net.size() || val >= net.cardinality(var)) return false;
        return true;
    }

    friend bool operator==(const Evidence&, const Evidence&) = default;
    friend auto operator<=>(const Evidence& a, const Evidence& b) { return a.values_ <=> b.values_; }

private:
    std::map<std::size_t, std::size_t> values_;
};

/// Per-variable categorical distributions over all variables of a network.
struct PosteriorSet {
    std::vector<std::vector<double>> marginals;

    std::size_t size() const noexcept { return marginals.size(); }
    const std::vector<double>& operator[](std::size_t i) const { return marginals[i]; }
    std::vector<double>& operator[](std::size_t i) { return marginals[i]; }
};

/// Parse "name=value" into an evidence entry of `net`.
inline void add_evidence(const Network& net, Evidence& ev, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw std::invalid_argument("evidence '" + std::string(assignment) + "' is not of the form name=value");
    const auto name = assignment.substr(0, eq);
    const auto label = assignment.substr(eq + 1);
    const auto var = net.find(name);
    if (!var) throw std::invalid_argument("unknown variable '" + std::string(name) + "'");
    const auto val = net.find_value(*var, label);
    if (!val)
        throw std::invalid_argument("variable '" + std::string(name) + "' has no value '" + std::string(label) + "'");
    ev.set(*var, *val);
}

inline Evidence parse_evidence(const Network& net, std::span<const std::string> assignments) {
    Evidence ev;
    for (const auto& a : assignments) add_evidence(net, ev, a);
    return ev;
}

/// Product of CPT lookups for a full assignment, accumulated in log space.
/// Factors are multiplied in `factor_order` (a permutation of the variables).
inline double joint_probability(const Network& net, std::span<const std::size_t> assignment,
                                std::span<const std::size_t> factor_order) {
    if (assignment.size() != net.size())
        throw std::invalid_argument("joint_probability: assignment must cover every variable");
    if (factor_order.size() != net.size())
        throw std::invalid_argument("joint_probability: factor order must list every variable");
    for (std::size_t i = 0; i < net.size(); ++i)
        if (assignment[i] >= net.cardinality(i))
            throw std::invalid_argument("joint_probability: value index out of range");
    double log_p = 0.0;
    for (std::size_t i : factor_order) {
        const double p = net.conditional(i, assignment[i], assignment);
        if (p <= 0.0) return 0.0;
        log_p += std::log(p);
    }
    return std::exp(log_p);
}

inline double joint_probability(const Network& net, std::span<const std::size_t> assignment) {
    return joint_probability(net, assignment, net.topo_order());
}

/// Width of the one-hot encoding: sum of cardinalities.
inline std::size_t evidence_dim(const Network& net) {
    std::size_t d = 0;
    for (const auto& v : net.variables()) d += v.cardinality();
    return d;
}

/// Sum over variables of (|V_i| - 1) * prod of parent cardinalities.
inline std::size_t free_parameters(const Network& net) {
    std::size_t total = 0;
    for (std::size_t i = 0; i < net.size(); ++i) {
        std::size_t rows = 1;
        for (std::size_t p : net.parents(i)) rows *= net.cardinality(p);
        total += (net.cardinality(i) - 1) * rows;
    }
    return total;
}

/// Degenerate distribution placing all mass on `value`.
inline std::vector<double> point_mass(std::size_t cardinality, std::size_t value) {
    std::vector<double> d(cardinality, 0.0);
    d.at(value) = 1.0;
    return d;
}

}  // namespace bnapprox
