#include "skicl/tensor/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace skicl {

namespace {

#if defined(__GLIBC__)
// Activation buffers are a few hundred KB; keep them on the heap instead of
// paying an mmap and page faults on every allocation.
const bool kAllocatorTuned = [] {
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    return true;
}();
#endif

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

void TensorImpl::accumulate_grad(std::span<const double> g) {
    if (grad.empty()) {
        grad.assign(g.begin(), g.end());
        return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

std::span<double> TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
}

}  // namespace detail

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
    for (auto e : shape) {
        if (e == 0) throw std::invalid_argument("Tensor: zero extent in shape " + shape_to_string(shape));
    }
    impl_->values.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : Tensor(from_buffer(std::move(shape), Buffer(values.begin(), values.end()), requires_grad)) {}

Tensor Tensor::from_buffer(Shape shape, Buffer values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_to_string(shape) + " holds " +
                                    std::to_string(shape_numel(shape)) + " values, got " +
                                    std::to_string(values.size()));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    return from_impl(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from_buffer(Shape{1}, Buffer{value}, requires_grad);
}

Tensor Tensor::from_impl(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
}

const Shape& Tensor::shape() const {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::extent(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) {
        throw std::out_of_range("Tensor: axis " + std::to_string(axis) + " out of range for shape " +
                                shape_to_string(s));
    }
    return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::values() const {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    return impl_->values;
}

std::span<double> Tensor::mutable_values() {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    return impl_->values;
}

double Tensor::item() const {
    if (numel() != 1) {
        throw std::invalid_argument("Tensor::item: expected one element, shape is " + shape_to_string(shape()));
    }
    return impl_->values[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    if (!impl_) throw std::logic_error("Tensor: use of undefined tensor");
    impl_->requires_grad = flag;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw std::logic_error("Tensor::grad: no gradient accumulated");
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    Tensor t;
    t.impl_ = std::make_shared<detail::TensorImpl>();
    t.impl_->shape = shape();
    t.impl_->values = impl_->values;
    return t;
}

Tensor Tensor::clone() const {
    Tensor t = detach();
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
}

bool Tensor::is_leaf() const { return impl_ && impl_->producer == nullptr; }

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool enabled) { grad_mode_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
NoGradGuard::~NoGradGuard() { GradMode::set_enabled(previous_); }

ComputationTape::ComputationTape(const Tensor& root) {
    // Iterative post-order DFS over producers yields a topological order.
    using ImplPtr = std::shared_ptr<detail::TensorImpl>;
    std::unordered_set<const detail::TensorImpl*> visited;
    std::vector<std::pair<ImplPtr, std::size_t>> stack;
    stack.emplace_back(root.impl(), 0);
    visited.insert(root.impl().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        const auto& producer = node->producer;
        if (producer && next < producer->inputs.size()) {
            ImplPtr child = producer->inputs[next++];
            if (child->requires_grad && visited.insert(child.get()).second) {
                stack.emplace_back(std::move(child), 0);
            }
            continue;
        }
        order_.push_back(node);
        stack.pop_back();
    }
}

std::size_t ComputationTape::op_count() const {
    return static_cast<std::size_t>(
        std::count_if(order_.begin(), order_.end(), [](const auto& n) { return n->producer != nullptr; }));
}

void ComputationTape::run_backward(std::span<const double> seed) const {
    if (order_.empty()) return;
    for (const auto& node : order_) {
        if (node->producer) node->grad.clear();
    }
    order_.back()->accumulate_grad(seed);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        const auto& node = *it;
        if (node->producer && !node->grad.empty()) node->producer->backward(node->grad);
    }
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                    (loss.defined() ? shape_to_string(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) return;
    ComputationTape tape(loss);
    const double seed[1] = {1.0};
    tape.run_backward(seed);
}

}  // namespace skicl
