#include "casenet/graph.hpp"

#include <algorithm>

#include "casenet/errors.hpp"

namespace casenet {

int Graph::push(const char* tag, std::initializer_list<const Tensor*> inputs, Tensor& out,
                std::function<void()> back) {
    return push(tag, std::vector<const Tensor*>(inputs.begin(), inputs.end()), out, std::move(back));
}

int Graph::push(const char* tag, const std::vector<const Tensor*>& inputs, Tensor& out,
                std::function<void()> back) {
    const int id = static_cast<int>(nodes_.size());
    Node node;
    node.tag = tag;
    for (const Tensor* t : inputs) {
        if (t->node >= id)
            throw ContractError(std::string("graph: input of '") + tag + "' does not precede it");
        node.inputs.push_back(t->node);
    }
    if (!out.grad) throw ContractError(std::string("graph: output of '") + tag + "' has no grad buffer");
    node.out_grad = out.grad;
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    out.node = id;
    return id;
}

void Graph::backward(Tensor& loss) {
    if (!loss.is_scalar())
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape));
    if (loss.node < 0) {
        // loss is a leaf (or untracked constant): only d(loss)/d(loss) = 1
        if (loss.requires_grad && loss.grad) (*loss.grad)[0] += 1.0;
        return;
    }
    if (backward_ran_)
        for (auto& n : nodes_) std::fill(n.out_grad->begin(), n.out_grad->end(), 0.0);
    backward_ran_ = true;
    (*nodes_[static_cast<size_t>(loss.node)].out_grad)[0] = 1.0;
    for (int i = loss.node; i >= 0; --i) nodes_[static_cast<size_t>(i)].back();
}

}  // namespace casenet
