#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gatedfill {

/// Dense (n, c, h, w) extent. All tensors in the library are rank 4.
struct Shape {
    int64_t n = 0;
    int64_t c = 0;
    int64_t h = 0;
    int64_t w = 0;

    constexpr int64_t numel() const { return n * c * h * w; }
    constexpr int64_t plane() const { return h * w; }
    friend bool operator==(const Shape&, const Shape&) = default;
    std::string str() const;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename T>
class Tensor;

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into parents that require grad.
    std::function<void(Node&)> backward_fn;

    bool is_leaf() const { return parents.empty(); }
    std::vector<T>& ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
};

}  // namespace detail

/// Reference-counted handle to a node of the differentiation tape.
///
/// Values are immutable once an op has produced them. Leaves (parameters)
/// may be updated in place through `data_mut()` between forward passes.
/// The tape is rebuilt on every forward pass and released together with
/// the last handle to the loss.
template <typename T>
class Tensor {
public:
    using value_type = T;
    using Node = detail::Node<T>;
    using BackwardFn = std::function<void(Node&)>;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    /// Builds an op result. requires_grad is inherited from the parents;
    /// `backward` is dropped when no parent needs a gradient.
    static Tensor make_op(Shape shape, std::vector<T> data, const std::vector<Tensor>& parents,
                          BackwardFn backward);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->shape.numel(); }
    std::span<const T> data() const { return node_->data; }
    std::span<T> data_mut() { return node_->data; }
    T item() const;
    T at(int64_t n, int64_t c, int64_t y, int64_t x) const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool value);
    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient buffer; all zeros when nothing has been accumulated yet.
    std::vector<T> grad() const;
    void zero_grad() { node_->grad.clear(); }

    /// New leaf holding a copy of the values, disconnected from the tape.
    Tensor detach() const;

    /// Reverse-mode sweep from a scalar. Leaf gradients accumulate across
    /// calls; interior gradients are recomputed on each call.
    void backward() const;

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

template <typename T>
struct NamedTensor {
    std::string name;
    Tensor<T> tensor;
};

struct ConvGeometry {
    int kernel_h = 3;
    int kernel_w = 3;
    int stride = 1;
    int dilation = 1;
    int padding = 0;

    /// Zero padding that keeps the spatial size at stride 1.
    static ConvGeometry same(int kernel, int stride = 1, int dilation = 1);
    int half_h() const { return (kernel_h - 1) / 2; }
    int half_w() const { return (kernel_w - 1) / 2; }
    int64_t out_size(int64_t in, int kernel) const;
    void validate() const;
};

enum class Activation { none, elu, leaky_relu, tanh, relu, sigmoid };

const char* to_string(Activation act);
Activation activation_from_string(const std::string& name);

// --- ops ---------------------------------------------------------------

/// Cross-correlation with zero padding. `weight` is (out, in, k_h, k_w);
/// `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvGeometry& geom);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> neg(const Tensor<T>& a);
template <typename T> Tensor<T> abs(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);

template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> tanh(const Tensor<T>& a);
template <typename T> Tensor<T> elu(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& a, T alpha);
template <typename T> Tensor<T> activate(const Tensor<T>& a, Activation act, T leaky_alpha = T(0.2));

/// Adds bias[c] to every element of channel c. bias is (1, C, 1, 1).
template <typename T> Tensor<T> add_channel_bias(const Tensor<T>& a, const Tensor<T>& bias);

template <typename T> Tensor<T> upsample_nearest(const Tensor<T>& a, int factor);
template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> slice_channels(const Tensor<T>& a, int64_t begin, int64_t count);
/// Copies a single-channel map into `channels` identical channels.
template <typename T> Tensor<T> repeat_channels(const Tensor<T>& a, int64_t channels);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

/// Keeps large freed buffers in the heap instead of returning them to the
/// OS, which otherwise dominates the cost of the im2col scratch. No-op off
/// glibc. Idempotent.
void retain_freed_memory();

/// Nodes reachable from `root`, parents before children.
template <typename T>
std::vector<typename Tensor<T>::Node*> topological_order(const Tensor<T>& root);

}  // namespace gatedfill
