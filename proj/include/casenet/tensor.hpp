#pragma once
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "casenet/errors.hpp"

namespace casenet {

/// Dense row-major f64 tensor. Copies share the underlying buffers; every
/// operation allocates a fresh output buffer, so op results never alias
/// their inputs. A tensor with requires_grad owns a same-shape grad buffer.
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<double>> data;
    std::shared_ptr<std::vector<double>> grad;  // null unless requires_grad
    bool requires_grad = false;
    int node = -1;  // id on the recording graph, -1 when untracked

    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);

    std::int64_t numel() const;
    int rank() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return numel() == 1; }

    double item() const;

    /// Deep copy of values (fresh buffers, grad dropped, untracked).
    Tensor clone_detached() const;

    void zero_grad();
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);
bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace casenet
