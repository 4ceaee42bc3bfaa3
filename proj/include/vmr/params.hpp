#pragma once

#include <map>
#include <string>
#include <utility>

#include "vmr/rng.hpp"
#include "vmr/tensor.hpp"

namespace vmr {

// Named collection of trainable tensors. Dotted names give the hierarchy
// ("query_gru.fwd.w_update"); iteration order is the sorted name order, which
// fixes checkpoint layout and gradient-merge order.
class ParamTree {
public:
    Tensor& add(const std::string& name, Tensor t) {
        t.set_requires_grad(true);
        auto [it, fresh] = items_.emplace(name, std::move(t));
        if (!fresh) throw ConfigError(msg("duplicate parameter name: ", name));
        return it->second;
    }

    Tensor& at(const std::string& name) {
        auto it = items_.find(name);
        if (it == items_.end()) throw ConfigError(msg("unknown parameter: ", name));
        return it->second;
    }

    const Tensor& at(const std::string& name) const {
        auto it = items_.find(name);
        if (it == items_.end()) throw ConfigError(msg("unknown parameter: ", name));
        return it->second;
    }

    bool contains(const std::string& name) const { return items_.count(name) > 0; }

    std::map<std::string, Tensor>& items() { return items_; }
    const std::map<std::string, Tensor>& items() const { return items_; }

    std::size_t tensor_count() const { return items_.size(); }

    std::size_t entry_count() const {
        std::size_t n = 0;
        for (const auto& [name, t] : items_) n += t.numel();
        return n;
    }

private:
    std::map<std::string, Tensor> items_;
};

// Uniform Glorot range for a rows x cols matrix.
inline Tensor glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    const real bound = std::sqrt(6.0 / static_cast<real>(rows + cols));
    std::vector<real> v(rows * cols);
    for (real& x : v) x = rng.uniform(-bound, bound);
    return Tensor({rows, cols}, std::move(v));
}

}  // namespace vmr
