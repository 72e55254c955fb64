#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace skicl {

using Shape = std::vector<std::size_t>;

/// Tensor storage. Eigen picks its vectorized code path from a buffer's
/// address, so a fixed alignment keeps results independent of heap layout.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct TensorImpl;

// One recorded differentiable operation. `backward` receives the gradient of
// the op's output and accumulates into the inputs it captured.
struct OpRecord {
    std::string name;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void(std::span<const double>)> backward;
};

struct TensorImpl {
    Shape shape;
    Buffer values;
    Buffer grad;  // empty until first accumulation
    bool requires_grad = false;
    std::shared_ptr<OpRecord> producer;

    void accumulate_grad(std::span<const double> g);
    std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles with reverse-mode gradient tracking.
///
/// Copies share storage (handle semantics), like most tensor libraries;
/// use clone() for an independent value copy.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor from_buffer(Shape shape, Buffer values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim() const { return shape().size(); }
    std::size_t extent(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    std::span<double> mutable_values();
    double item() const;
    double operator[](std::size_t flat_index) const { return values()[flat_index]; }

    bool requires_grad() const;
    void set_requires_grad(bool flag);

    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Same values, no producer, no gradient tracking.
    Tensor detach() const;
    /// Independent copy of values; keeps requires_grad, drops producer and grad.
    Tensor clone() const;

    bool is_leaf() const;
    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

    static Tensor from_impl(std::shared_ptr<detail::TensorImpl> impl);

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Thread-local switch: while disabled, ops do not record producers.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool enabled);
};

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Ordered list of the ops reachable from a root tensor, inputs before
/// consumers. Built on demand by backward().
class ComputationTape {
public:
    explicit ComputationTape(const Tensor& root);

    const std::vector<std::shared_ptr<detail::TensorImpl>>& order() const { return order_; }
    std::size_t op_count() const;

    /// Runs every recorded backward rule exactly once, in reverse order.
    void run_backward(std::span<const double> seed) const;

private:
    std::vector<std::shared_ptr<detail::TensorImpl>> order_;
};

/// Accumulates d(loss)/d(t) into every reachable tensor that requires grad.
/// Throws std::invalid_argument for a non-scalar loss.
void backward(const Tensor& loss);

}  // namespace skicl
