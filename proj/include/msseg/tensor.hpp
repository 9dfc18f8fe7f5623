#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace msseg {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised by any op whose operand shapes are incompatible.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class Mode { Train, Eval };

/// Reference-counted handle to a dense row-major array of doubles that may
/// take part in a reverse-mode differentiation graph. Copies share storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t numel() const;

    std::span<double> data();
    std::span<const double> data() const;
    double item() const;

    /// Element access for rank-4 (N, C, H, W) tensors.
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

    bool has_grad() const;
    std::span<double> grad();
    std::span<const double> grad() const;
    /// Allocates (zero-filled) the gradient buffer if absent.
    std::span<double> ensure_grad() const;
    void clear_grad();

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);

    const std::string& name() const;
    Tensor& set_name(std::string name);

    /// Deep copy of the values with no graph history.
    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Impl {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;
        bool requires_grad = false;
        std::string name;
    };
    std::shared_ptr<Impl> impl_;

    void check() const;
};

/// Append-only tape of recorded operations. Constructing a Graph installs it
/// as the recording tape for the current thread until it is destroyed; with
/// no tape installed, ops compute values only.
class Graph {
public:
    Graph();
    ~Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    static Graph* current();

    /// Registers `backward`, which must read `output`'s gradient and
    /// accumulate into the gradients of the inputs that require them.
    void record(Tensor output, std::function<void()> backward);

    /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse insertion
    /// order. Leaf gradients accumulate across calls.
    void backward(const Tensor& loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor output;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
    Graph* previous_;
};

/// True when an op producing from these inputs must record a backward rule.
bool needs_grad(std::initializer_list<const Tensor*> inputs);
bool needs_grad(std::span<const Tensor> inputs);

/// backward on the current thread's graph.
void backward(const Tensor& loss);

}  // namespace msseg
