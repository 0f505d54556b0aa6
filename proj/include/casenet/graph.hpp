#pragma once
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "casenet/tensor.hpp"

namespace casenet {

/// Append-only tape of operations, rebuilt for every forward pass. Insertion
/// order is the topological order: an op's inputs always precede it, and
/// backward() walks the tape once in reverse.
class Graph {
public:
    bool recording = true;

    bool wants_grad(const Tensor& a) const { return recording && a.requires_grad; }
    bool wants_grad(const Tensor& a, const Tensor& b) const {
        return recording && (a.requires_grad || b.requires_grad);
    }
    bool wants_grad(std::initializer_list<const Tensor*> ins) const {
        if (!recording) return false;
        for (const Tensor* t : ins)
            if (t->requires_grad) return true;
        return false;
    }

    /// Registers `out` as the result of an op over `inputs`. `back` reads
    /// out.grad and accumulates into the inputs' grads. Returns the node id.
    int push(const char* tag, std::initializer_list<const Tensor*> inputs, Tensor& out,
             std::function<void()> back);
    int push(const char* tag, const std::vector<const Tensor*>& inputs, Tensor& out,
             std::function<void()> back);

    /// Populates d(loss)/d(leaf) on every requires_grad leaf reachable from
    /// `loss`. Repeated calls accumulate into leaf grads; grads of op outputs
    /// are reset internally on each call.
    void backward(Tensor& loss);

    size_t size() const { return nodes_.size(); }
    const char* tag(int id) const { return nodes_[static_cast<size_t>(id)].tag; }
    const std::vector<int>& inputs_of(int id) const { return nodes_[static_cast<size_t>(id)].inputs; }

private:
    struct Node {
        const char* tag;
        std::vector<int> inputs;
        std::shared_ptr<std::vector<double>> out_grad;
        std::function<void()> back;
    };
    std::vector<Node> nodes_;
    bool backward_ran_ = false;  // node grads are fresh zeros until the first run
};

}  // namespace casenet
