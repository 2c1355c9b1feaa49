#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace bnapprox {

/// Non-negative table over a list of discrete variables. Entries are stored
/// row-major: the last variable in `scope` varies fastest.
struct Factor {
    std::vector<std::size_t> scope;
    std::vector<std::size_t> cards;
    std::vector<double> values;

    /// Constant-1 factor with empty scope (multiplicative identity).
    static Factor unit() { return Factor{{}, {}, {1.0}}; }

    static Factor make(std::vector<std::size_t> scope, std::vector<std::size_t> cards, std::vector<double> values) {
        if (scope.size() != cards.size()) throw std::invalid_argument("Factor: scope/cards size mismatch");
        std::size_t n = 1;
        for (std::size_t c : cards) n *= c;
        if (values.size() != n) throw std::invalid_argument("Factor: values length must equal product of cardinalities");
        return Factor{std::move(scope), std::move(cards), std::move(values)};
    }

    std::size_t position(std::size_t var) const {
        auto it = std::find(scope.begin(), scope.end(), var);
        return it == scope.end() ? scope.size() : static_cast<std::size_t>(it - scope.begin());
    }
    bool contains(std::size_t var) const { return position(var) != scope.size(); }

    /// Row-major strides of this factor's own scope.
    std::vector<std::size_t> strides() const {
        std::vector<std::size_t> s(scope.size(), 1);
        for (std::size_t k = scope.size(); k > 1; --k) s[k - 2] = s[k - 1] * cards[k - 1];
        return s;
    }
};

/// Pointwise product over the union of scopes (a's variables first, then the
/// variables only b has, in b's order).
inline Factor factor_product(const Factor& a, const Factor& b) {
    Factor out;
    out.scope = a.scope;
    out.cards = a.cards;
    for (std::size_t k = 0; k < b.scope.size(); ++k) {
        if (!a.contains(b.scope[k])) {
            out.scope.push_back(b.scope[k]);
            out.cards.push_back(b.cards[k]);
        }
    }
    const std::size_t rank = out.scope.size();
    const auto a_strides = a.strides();
    const auto b_strides = b.strides();
    // Stride of each output axis in a and b (0 when the variable is absent).
    std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
    std::size_t total = 1;
    for (std::size_t r = 0; r < rank; ++r) {
        const std::size_t pa = a.position(out.scope[r]);
        const std::size_t pb = b.position(out.scope[r]);
        if (pa < a.scope.size()) {
            if (a.cards[pa] != out.cards[r]) throw std::invalid_argument("factor_product: cardinality mismatch");
            sa[r] = a_strides[pa];
        }
        if (pb < b.scope.size()) {
            if (b.cards[pb] != out.cards[r]) throw std::invalid_argument("factor_product: cardinality mismatch");
            sb[r] = b_strides[pb];
        }
        total *= out.cards[r];
    }
    out.values.resize(total);
    std::vector<std::size_t> counter(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t j = 0; j < total; ++j) {
        out.values[j] = a.values[ia] * b.values[ib];
        for (std::size_t k = rank; k-- > 0;) {
            ++counter[k];
            ia += sa[k];
            ib += sb[k];
            if (counter[k] < out.cards[k]) break;
            ia -= sa[k] * out.cards[k];
            ib -= sb[k] * out.cards[k];
            counter[k] = 0;
        }
    }
    return out;
}

/// Sum out `var`.
inline Factor factor_marginalize(const Factor& a, std::size_t var) {
    const std::size_t pos = a.position(var);
    if (pos == a.scope.size()) throw std::invalid_argument("factor_marginalize: variable not in scope");
    Factor out;
    for (std::size_t k = 0; k < a.scope.size(); ++k) {
        if (k == pos) continue;
        out.scope.push_back(a.scope[k]);
        out.cards.push_back(a.cards[k]);
    }
    const auto out_strides = out.strides();
    std::vector<std::size_t> so(a.scope.size(), 0);
    for (std::size_t k = 0, o = 0; k < a.scope.size(); ++k)
        if (k != pos) so[k] = out_strides[o++];
    std::size_t total = 1;
    for (std::size_t c : out.cards) total *= c;
    out.values.assign(total, 0.0);

    const std::size_t rank = a.scope.size();
    std::vector<std::size_t> counter(rank, 0);
    std::size_t io = 0;
    for (double v : a.values) {
        out.values[io] += v;
        for (std::size_t k = rank; k-- > 0;) {
            ++counter[k];
            io += so[k];
            if (counter[k] < a.cards[k]) break;
            io -= so[k] * a.cards[k];
            counter[k] = 0;
        }
    }
    return out;
}

/// Slice at `var = value`, dropping `var` from the scope. Factors not
/// containing `var` are returned unchanged.
inline Factor factor_reduce(const Factor& a, std::size_t var, std::size_t value) {
    const std::size_t pos = a.position(var);
    if (pos == a.scope.size()) return a;
    if (value >= a.cards[pos]) throw std::invalid_argument("factor_reduce: value out of range");
    Factor out;
    for (std::size_t k = 0; k < a.scope.size(); ++k) {
        if (k == pos) continue;
        out.scope.push_back(a.scope[k]);
        out.cards.push_back(a.cards[k]);
    }
    const auto strides = a.strides();
    const std::size_t outer = a.values.size() / (strides[pos] * a.cards[pos]);
    const std::size_t inner = strides[pos];
    out.values.reserve(outer * inner);
    for (std::size_t o = 0; o < outer; ++o) {
        const std::size_t base = o * inner * a.cards[pos] + value * inner;
        out.values.insert(out.values.end(), a.values.begin() + static_cast<std::ptrdiff_t>(base),
                          a.values.begin() + static_cast<std::ptrdiff_t>(base + inner));
    }
    return out;
}

}  // namespace bnapprox
