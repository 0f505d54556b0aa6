#include "casenet/tensor.hpp"

#include <numeric>
#include <sstream>

namespace casenet {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    Tensor t;
    const auto n = shape_numel(shape);
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(static_cast<size_t>(n), 0.0);
    t.requires_grad = requires_grad;
    if (requires_grad) t.grad = std::make_shared<std::vector<double>>(static_cast<size_t>(n), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.data->begin(), t.data->end(), value);
    return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    const auto n = shape_numel(shape);
    if (n != static_cast<std::int64_t>(values.size()))
        throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_str(shape));
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<double>>(std::move(values));
    t.requires_grad = requires_grad;
    if (requires_grad) t.grad = std::make_shared<std::vector<double>>(static_cast<size_t>(n), 0.0);
    return t;
}

std::int64_t Tensor::numel() const { return data ? static_cast<std::int64_t>(data->size()) : 0; }

double Tensor::item() const {
    if (!is_scalar()) throw ContractError("item() requires a scalar tensor, got shape " + shape_str(shape));
    return (*data)[0];
}

Tensor Tensor::clone_detached() const {
    Tensor t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<double>>(*data);
    t.requires_grad = false;
    t.node = -1;
    return t;
}

void Tensor::zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

}  // namespace casenet
