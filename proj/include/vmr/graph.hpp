#pragma once

#include <functional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vmr/tensor.hpp"

namespace vmr {

class Graph;

using BackwardFn = std::function<void(Graph&, int)>;
using GradMap = std::unordered_map<const TensorImpl*, std::vector<real>>;

// Reverse-mode tape. Constructing a Graph makes it the active recorder for the
// current thread (RAII scoped); ops record themselves only while a graph is
// active and at least one operand carries gradient. Distinct graphs on
// distinct threads may share read-only parameter tensors.
class Graph {
public:
    Graph() { stack().push_back(this); }
    ~Graph() { stack().pop_back(); }

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    static Graph* active() {
        auto& s = stack();
        return s.empty() ? nullptr : s.back();
    }

    bool tracked(const Tensor& t) const {
        return t.defined() && (t.requires_grad() || ids_.count(t.impl()) > 0);
    }

    // Node id for an input tensor; registers parameter leaves on first use.
    // Returns -1 for plain constants, which receive no gradient.
    int input_id(const Tensor& t) {
        auto it = ids_.find(t.impl());
        if (it != ids_.end()) return it->second;
        if (!t.requires_grad()) return -1;
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{"leaf", t.shape(), {}, {}, nullptr});
        ids_.emplace(t.impl(), id);
        leaves_.emplace_back(t.impl_ptr(), id);
        return id;
    }

    int emit(const char* op, const Tensor& out, std::vector<int> inputs, BackwardFn fn) {
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{op, out.shape(), std::move(inputs), {}, std::move(fn)});
        ids_.emplace(out.impl(), id);
        return id;
    }

    // Gradient buffer of a node, zero-initialized on first touch.
    std::vector<real>& grad(int id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.grad.empty()) n.grad.assign(shape_numel(n.shape), 0.0);
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }

    // One reverse sweep from a scalar root. Every registered parameter leaf
    // appears in the result; leaves with no path to the root get zeros.
    GradMap backward(const Tensor& root) {
        if (root.numel() != 1) {
            throw DomainError(msg("backward root must be scalar, got shape ", shape_str(root.shape())));
        }
        auto it = ids_.find(root.impl());
        if (it != ids_.end()) {
            int root_id = it->second;
            grad(root_id)[0] = 1.0;
            for (int id = root_id; id >= 0; --id) {
                Node& n = nodes_[static_cast<std::size_t>(id)];
                if (!n.backward || n.grad.empty()) continue;
                n.backward(*this, id);
            }
        }
        GradMap out;
        out.reserve(leaves_.size());
        for (auto& [impl, id] : leaves_) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad.empty()) {
                out.emplace(impl.get(), std::vector<real>(shape_numel(n.shape), 0.0));
            } else {
                out.emplace(impl.get(), n.grad);
            }
        }
        return out;
    }

private:
    struct Node {
        const char* op;
        Shape shape;
        std::vector<int> inputs;
        std::vector<real> grad;
        BackwardFn backward;
    };

    static std::vector<Graph*>& stack() {
        thread_local std::vector<Graph*> s;
        return s;
    }

    std::vector<Node> nodes_;
    std::unordered_map<const TensorImpl*, int> ids_;
    std::vector<std::pair<std::shared_ptr<TensorImpl>, int>> leaves_;
};

}  // namespace vmr
