#include "msseg/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace msseg {

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<Impl>()) {
    for (auto d : shape) {
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
    }
    impl_->value.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<Impl>()) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("shape " + to_string(shape) + " does not match " + std::to_string(values.size()) +
                         " values");
    }
    impl_->shape = std::move(shape);
    impl_->value = std::move(values);
}

void Tensor::check() const {
    if (!impl_) throw std::logic_error("use of undefined tensor");
}

const Shape& Tensor::shape() const {
    check();
    return impl_->shape;
}

std::size_t Tensor::dim(std::size_t i) const {
    const auto& s = shape();
    if (i >= s.size()) throw ShapeError("dimension " + std::to_string(i) + " out of range for " + to_string(s));
    return s[i];
}

std::size_t Tensor::numel() const {
    check();
    return impl_->value.size();
}

std::span<double> Tensor::data() {
    check();
    return impl_->value;
}

std::span<const double> Tensor::data() const {
    check();
    return impl_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return impl_->value[0];
}

double& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    const auto& s = impl_->shape;
    return impl_->value[((n * s[1] + c) * s[2] + h) * s[3] + w];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const auto& s = impl_->shape;
    return impl_->value[((n * s[1] + c) * s[2] + h) * s[3] + w];
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<double> Tensor::grad() {
    check();
    return impl_->grad;
}

std::span<const double> Tensor::grad() const {
    check();
    return impl_->grad;
}

std::span<double> Tensor::ensure_grad() const {
    check();
    if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
    return impl_->grad;
}

void Tensor::clear_grad() {
    check();
    impl_->grad.clear();
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    check();
    impl_->requires_grad = on;
    return *this;
}

const std::string& Tensor::name() const {
    check();
    return impl_->name;
}

Tensor& Tensor::set_name(std::string name) {
    check();
    impl_->name = std::move(name);
    return *this;
}

Tensor Tensor::clone() const {
    check();
    Tensor t(impl_->shape, impl_->value);
    t.impl_->name = impl_->name;
    return t;
}

namespace {
thread_local Graph* g_current = nullptr;
}

Graph::Graph() : previous_(g_current) { g_current = this; }

Graph::~Graph() { g_current = previous_; }

Graph* Graph::current() { return g_current; }

void Graph::record(Tensor output, std::function<void()> backward) {
    nodes_.push_back({std::move(output), std::move(backward)});
}

void Graph::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) throw std::logic_error("backward on a tensor with no recorded history");
    Tensor seed = loss;
    seed.ensure_grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (!it->output.has_grad()) continue;
        it->backward();
    }
}

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
    if (!Graph::current()) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t && t->requires_grad(); });
}

bool needs_grad(std::span<const Tensor> inputs) {
    if (!Graph::current()) return false;
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

void backward(const Tensor& loss) {
    Graph* g = Graph::current();
    if (!g) throw std::logic_error("backward called with no recording graph on this thread");
    g->backward(loss);
}

}  // namespace msseg
