#include "gatedfill/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace gatedfill {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using MutMap = Eigen::Map<RowMatrix<T>>;

void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

void require_same(const Shape& a, const Shape& b, const char* op) {
    if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& a, Fwd fwd, Deriv deriv) {
    const auto x = a.data();
    std::vector<T> out(x.size());
    for (size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [deriv](auto& self) {
        auto& parent = *self.parents[0];
        auto& pg = parent.ensure_grad();
        for (size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * deriv(parent.data[i], self.data[i]);
    });
}

enum class BinaryKind { add, sub, mul };

template <typename T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinaryKind kind, const char* name) {
    const bool a_scalar = a.numel() == 1 && !(a.shape() == b.shape());
    const bool b_scalar = b.numel() == 1 && !(a.shape() == b.shape());
    if (!a_scalar && !b_scalar) require_same(a.shape(), b.shape(), name);
    const Shape shape = a_scalar ? b.shape() : a.shape();
    const auto n = static_cast<size_t>(shape.numel());
    const auto x = a.data();
    const auto y = b.data();
    auto xa = [&](size_t i) { return a_scalar ? x[0] : x[i]; };
    auto yb = [&](size_t i) { return b_scalar ? y[0] : y[i]; };
    std::vector<T> out(n);
    for (size_t i = 0; i < n; ++i) {
        switch (kind) {
            case BinaryKind::add: out[i] = xa(i) + yb(i); break;
            case BinaryKind::sub: out[i] = xa(i) - yb(i); break;
            case BinaryKind::mul: out[i] = xa(i) * yb(i); break;
        }
    }
    return Tensor<T>::make_op(shape, std::move(out), {a, b}, [kind, a_scalar, b_scalar](auto& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
            auto& ga = pa.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) {
                T d = g[i];
                if (kind == BinaryKind::mul) d *= b_scalar ? pb.data[0] : pb.data[i];
                ga[a_scalar ? 0 : i] += d;
            }
        }
        if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) {
                T d = g[i];
                if (kind == BinaryKind::sub) d = -d;
                if (kind == BinaryKind::mul) d *= a_scalar ? pa.data[0] : pa.data[i];
                gb[b_scalar ? 0 : i] += d;
            }
        }
    });
}

/// Output columns [lo, hi) whose input column ox * stride + offset lies in [0, width).
std::pair<int64_t, int64_t> valid_range(int64_t out_w, int64_t width, int64_t stride, int64_t offset) {
    int64_t lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
    int64_t hi = width - offset <= 0 ? 0 : (width - offset - 1) / stride + 1;
    lo = std::min(lo, out_w);
    hi = std::clamp(hi, lo, out_w);
    return {lo, hi};
}

}  // namespace

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << ", " << c << ", " << h << ", " << w << ")";
    return os.str();
}

// --- Tensor ------------------------------------------------------------

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
    require(shape.n >= 0 && shape.c >= 0 && shape.h >= 0 && shape.w >= 0, "negative extent " + shape.str());
    return from_data(shape, std::vector<T>(static_cast<size_t>(shape.numel()), value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_data(Shape shape, std::vector<T> data, bool requires_grad) {
    require(static_cast<int64_t>(data.size()) == shape.numel(),
            "data length " + std::to_string(data.size()) + " does not match shape " + shape.str());
    auto node = std::make_shared<Node>();
    node->shape = shape;
    node->data = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return from_data({1, 1, 1, 1}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::make_op(Shape shape, std::vector<T> data, const std::vector<Tensor>& parents,
                             BackwardFn backward) {
    Tensor out = from_data(shape, std::move(data), false);
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
        out.node_->requires_grad = true;
        out.node_->parents.reserve(parents.size());
        for (const auto& p : parents) out.node_->parents.push_back(p.node_);
        out.node_->backward_fn = std::move(backward);
    }
    return out;
}

template <typename T>
T Tensor<T>::item() const {
    require(numel() == 1, "item() on non-scalar tensor " + shape().str());
    return node_->data[0];
}

template <typename T>
T Tensor<T>::at(int64_t n, int64_t c, int64_t y, int64_t x) const {
    const Shape& s = shape();
    return node_->data[static_cast<size_t>(((n * s.c + c) * s.h + y) * s.w + x)];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
    require(node_->is_leaf(), "set_requires_grad on a non-leaf tensor");
    node_->requires_grad = value;
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
    if (node_->grad.empty()) return std::vector<T>(node_->data.size(), T(0));
    return node_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return from_data(shape(), node_->data, false);
}

template <typename T>
std::vector<typename Tensor<T>::Node*> topological_order(const Tensor<T>& root) {
    using Node = typename Tensor<T>::Node;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    if (!root.requires_grad()) return order;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

template <typename T>
void Tensor<T>::backward() const {
    require(numel() == 1, "backward() requires a scalar loss, got " + shape().str());
    if (!requires_grad()) return;
    auto order = topological_order(*this);
    for (Node* node : order) {
        if (!node->is_leaf()) node->grad.clear();
    }
    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->is_leaf() || !node->backward_fn) continue;
        node->ensure_grad();
        node->backward_fn(*node);
    }
}

void retain_freed_memory() {
#if defined(__GLIBC__)
    static const bool done = [] {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
        mallopt(M_TOP_PAD, 64 << 20);
        return true;
    }();
    (void)done;
#endif
}

// --- geometry ----------------------------------------------------------

ConvGeometry ConvGeometry::same(int kernel, int stride, int dilation) {
    ConvGeometry g;
    g.kernel_h = g.kernel_w = kernel;
    g.stride = stride;
    g.dilation = dilation;
    g.padding = dilation * (kernel - 1) / 2;
    return g;
}

int64_t ConvGeometry::out_size(int64_t in, int kernel) const {
    const int64_t span = static_cast<int64_t>(dilation) * (kernel - 1) + 1;
    const int64_t padded = in + 2 * static_cast<int64_t>(padding);
    if (padded < span) return 0;
    return (padded - span) / stride + 1;
}

void ConvGeometry::validate() const {
    require(kernel_h > 0 && kernel_w > 0 && kernel_h % 2 == 1 && kernel_w % 2 == 1,
            "kernel must be odd and positive, got " + std::to_string(kernel_h) + "x" + std::to_string(kernel_w));
    require(stride > 0, "stride must be positive");
    require(dilation > 0, "dilation must be positive");
    require(padding >= 0, "padding must be non-negative");
}

const char* to_string(Activation act) {
    switch (act) {
        case Activation::none: return "none";
        case Activation::elu: return "elu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
        case Activation::sigmoid: return "sigmoid";
    }
    return "none";
}

Activation activation_from_string(const std::string& name) {
    for (auto act : {Activation::none, Activation::elu, Activation::leaky_relu, Activation::tanh, Activation::relu,
                     Activation::sigmoid}) {
        if (name == to_string(act)) return act;
    }
    throw std::invalid_argument("unknown activation '" + name + "'");
}

// --- convolution -------------------------------------------------------

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvGeometry& geom) {
    geom.validate();
    const Shape& is = input.shape();
    const Shape& ws = weight.shape();
    if (ws.c != is.c || ws.h != geom.kernel_h || ws.w != geom.kernel_w) {
        throw ShapeError("conv2d: input " + is.str() + " incompatible with weight " + ws.str() + " (kernel " +
                         std::to_string(geom.kernel_h) + "x" + std::to_string(geom.kernel_w) + ")");
    }
    if (bias.defined() && bias.numel() != ws.n) {
        throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match weight " + ws.str());
    }
    const int64_t out_h = geom.out_size(is.h, geom.kernel_h);
    const int64_t out_w = geom.out_size(is.w, geom.kernel_w);
    if (out_h <= 0 || out_w <= 0 || is.n <= 0) {
        throw ShapeError("conv2d: zero-size output for input " + is.str() + " and weight " + ws.str());
    }

    const int64_t N = is.n, C = is.c, H = is.h, W = is.w;
    const int64_t KH = ws.h, KW = ws.w, Cout = ws.n;
    const int64_t K = C * KH * KW;
    const int64_t P = out_h * out_w;
    const int64_t NP = N * P;
    const int s = geom.stride, d = geom.dilation, pad = geom.padding;

    auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(K * NP));
    const auto x = input.data();
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t ki = 0; ki < KH; ++ki) {
            for (int64_t kj = 0; kj < KW; ++kj) {
                T* row = cols->data() + ((c * KH + ki) * KW + kj) * NP;
                const auto [lo, hi] = valid_range(out_w, W, s, kj * d - pad);
                for (int64_t n = 0; n < N; ++n) {
                    const T* plane = x.data() + (n * C + c) * H * W;
                    for (int64_t oy = 0; oy < out_h; ++oy) {
                        T* dst = row + n * P + oy * out_w;
                        const int64_t iy = oy * s - pad + ki * d;
                        if (iy < 0 || iy >= H || lo >= hi) continue;  // cols is zero-initialized
                        const T* src = plane + iy * W + kj * d - pad;
                        if (s == 1) {
                            std::copy(src + lo, src + hi, dst + lo);
                        } else {
                            for (int64_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * s];
                        }
                    }
                }
            }
        }
    }

    RowMatrix<T> prod(Cout, NP);
    prod.noalias() = ConstMap<T>(weight.data().data(), Cout, K) * ConstMap<T>(cols->data(), K, NP);

    std::vector<T> out(static_cast<size_t>(N * Cout * P));
    const auto b = bias.defined() ? bias.data() : std::span<const T>{};
    for (int64_t n = 0; n < N; ++n) {
        for (int64_t co = 0; co < Cout; ++co) {
            const T* src = prod.data() + co * NP + n * P;
            T* dst = out.data() + (n * Cout + co) * P;
            const T offset = b.empty() ? T(0) : b[co];
            for (int64_t p = 0; p < P; ++p) dst[p] = src[p] + offset;
        }
    }

    std::vector<Tensor<T>> parents{input, weight};
    if (bias.defined()) parents.push_back(bias);
    if (!weight.requires_grad()) cols.reset();

    return Tensor<T>::make_op(
        {N, Cout, out_h, out_w}, std::move(out), parents,
        [=](auto& self) {
            RowMatrix<T> g(Cout, NP);
            for (int64_t n = 0; n < N; ++n) {
                for (int64_t co = 0; co < Cout; ++co) {
                    const T* src = self.grad.data() + (n * Cout + co) * P;
                    std::copy(src, src + P, g.data() + co * NP + n * P);
                }
            }
            auto& in_node = *self.parents[0];
            auto& w_node = *self.parents[1];
            if (w_node.requires_grad) {
                auto& gw = w_node.ensure_grad();
                MutMap<T>(gw.data(), Cout, K).noalias() += g * ConstMap<T>(cols->data(), K, NP).transpose();
            }
            if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                auto& gb = self.parents[2]->ensure_grad();
                for (int64_t co = 0; co < Cout; ++co) gb[co] += g.row(co).sum();
            }
            if (in_node.requires_grad) {
                RowMatrix<T> dcols(K, NP);
                dcols.noalias() = ConstMap<T>(w_node.data.data(), Cout, K).transpose() * g;
                auto& gx = in_node.ensure_grad();
                for (int64_t c = 0; c < C; ++c) {
                    for (int64_t ki = 0; ki < KH; ++ki) {
                        for (int64_t kj = 0; kj < KW; ++kj) {
                            const T* row = dcols.data() + ((c * KH + ki) * KW + kj) * NP;
                            const auto [lo, hi] = valid_range(out_w, W, s, kj * d - pad);
                            for (int64_t n = 0; n < N; ++n) {
                                T* plane = gx.data() + (n * C + c) * H * W;
                                for (int64_t oy = 0; oy < out_h; ++oy) {
                                    const int64_t iy = oy * s - pad + ki * d;
                                    if (iy < 0 || iy >= H) continue;
                                    const T* src = row + n * P + oy * out_w;
                                    T* dst = plane + iy * W + kj * d - pad;
                                    for (int64_t ox = lo; ox < hi; ++ox) dst[ox * s] += src[ox];
                                }
                            }
                        }
                    }
                }
            }
        });
}

// --- elementwise -------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::add, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::sub, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return binary(a, b, BinaryKind::mul, "mul");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    return unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
    return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return unary(a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    return unary(
        a, [](T x) { return std::abs(x); }, [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
    return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary(
        a,
        [](T x) {
            // split by sign so large |x| never overflows exp; the clamp keeps
            // the open interval (0, 1) once exp saturates
            T y;
            if (x >= T(0)) {
                y = T(1) / (T(1) + std::exp(-x));
            } else {
                const T e = std::exp(x);
                y = e / (T(1) + e);
            }
            return std::clamp(y, std::numeric_limits<T>::min(), T(1) - std::numeric_limits<T>::epsilon() / 2);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
    return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> elu(const Tensor<T>& a) {
    return unary(
        a, [](T x) { return x >= T(0) ? x : std::expm1(x); }, [](T x, T y) { return x >= T(0) ? T(1) : y + T(1); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    return unary(a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T alpha) {
    return unary(
        a, [alpha](T x) { return x >= T(0) ? x : alpha * x; }, [alpha](T x, T) { return x >= T(0) ? T(1) : alpha; });
}

template <typename T>
Tensor<T> activate(const Tensor<T>& a, Activation act, T leaky_alpha) {
    switch (act) {
        case Activation::none: return a;
        case Activation::elu: return elu(a);
        case Activation::leaky_relu: return leaky_relu(a, leaky_alpha);
        case Activation::tanh: return tanh(a);
        case Activation::relu: return relu(a);
        case Activation::sigmoid: return sigmoid(a);
    }
    return a;
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& a, const Tensor<T>& bias) {
    const Shape s = a.shape();
    if (bias.numel() != s.c) throw ShapeError("add_channel_bias: bias " + bias.shape().str() + " vs " + s.str());
    const auto x = a.data();
    const auto b = bias.data();
    std::vector<T> out(x.size());
    const int64_t P = s.plane();
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t p = 0; p < P; ++p) {
                const size_t i = static_cast<size_t>((n * s.c + c) * P + p);
                out[i] = x[i] + b[c];
            }
    return Tensor<T>::make_op(s, std::move(out), {a, bias}, [s, P](auto& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            auto& ga = pa.ensure_grad();
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            for (int64_t n = 0; n < s.n; ++n)
                for (int64_t c = 0; c < s.c; ++c) {
                    const T* g = self.grad.data() + (n * s.c + c) * P;
                    T acc = T(0);
                    for (int64_t p = 0; p < P; ++p) acc += g[p];
                    gb[c] += acc;
                }
        }
    });
}

// --- structural --------------------------------------------------------

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& a, int factor) {
    require(factor >= 1, "upsample_nearest: factor must be >= 1");
    if (factor == 1) return a;
    const Shape s = a.shape();
    const Shape o{s.n, s.c, s.h * factor, s.w * factor};
    const auto x = a.data();
    std::vector<T> out(static_cast<size_t>(o.numel()));
    for (int64_t nc = 0; nc < s.n * s.c; ++nc)
        for (int64_t y = 0; y < o.h; ++y)
            for (int64_t xx = 0; xx < o.w; ++xx)
                out[(nc * o.h + y) * o.w + xx] = x[(nc * s.h + y / factor) * s.w + xx / factor];
    return Tensor<T>::make_op(o, std::move(out), {a}, [s, o, factor](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t nc = 0; nc < s.n * s.c; ++nc)
            for (int64_t y = 0; y < o.h; ++y)
                for (int64_t xx = 0; xx < o.w; ++xx)
                    g[(nc * s.h + y / factor) * s.w + xx / factor] += self.grad[(nc * o.h + y) * o.w + xx];
    });
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape sa = a.shape();
    const Shape sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
    }
    const Shape o{sa.n, sa.c + sb.c, sa.h, sa.w};
    const int64_t P = sa.plane();
    std::vector<T> out(static_cast<size_t>(o.numel()));
    for (int64_t n = 0; n < o.n; ++n) {
        auto xa = a.data().subspan(n * sa.c * P, sa.c * P);
        auto xb = b.data().subspan(n * sb.c * P, sb.c * P);
        std::copy(xa.begin(), xa.end(), out.begin() + n * o.c * P);
        std::copy(xb.begin(), xb.end(), out.begin() + n * o.c * P + sa.c * P);
    }
    return Tensor<T>::make_op(o, std::move(out), {a, b}, [sa, sb, o, P](auto& self) {
        for (int side = 0; side < 2; ++side) {
            auto& p = *self.parents[side];
            if (!p.requires_grad) continue;
            auto& g = p.ensure_grad();
            const int64_t c = side == 0 ? sa.c : sb.c;
            const int64_t offset = side == 0 ? 0 : sa.c;
            for (int64_t n = 0; n < o.n; ++n)
                for (int64_t i = 0; i < c * P; ++i) g[n * c * P + i] += self.grad[(n * o.c + offset) * P + i];
        }
    });
}

template <typename T>
Tensor<T> concat_batch(const Tensor<T>& a, const Tensor<T>& b) {
    const Shape sa = a.shape();
    const Shape sb = b.shape();
    if (sa.c != sb.c || sa.h != sb.h || sa.w != sb.w) throw ShapeError("concat_batch: " + sa.str() + " vs " + sb.str());
    std::vector<T> out(a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    const auto split = static_cast<size_t>(sa.numel());
    return Tensor<T>::make_op({sa.n + sb.n, sa.c, sa.h, sa.w}, std::move(out), {a, b}, [split](auto& self) {
        for (int side = 0; side < 2; ++side) {
            auto& p = *self.parents[side];
            if (!p.requires_grad) continue;
            auto& g = p.ensure_grad();
            const size_t offset = side == 0 ? 0 : split;
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offset + i];
        }
    });
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, int64_t begin, int64_t count) {
    const Shape s = a.shape();
    require(begin >= 0 && count > 0 && begin + count <= s.c,
            "slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                ") out of bounds for " + s.str());
    const Shape o{s.n, count, s.h, s.w};
    const int64_t P = s.plane();
    std::vector<T> out(static_cast<size_t>(o.numel()));
    for (int64_t n = 0; n < s.n; ++n) {
        auto src = a.data().subspan((n * s.c + begin) * P, count * P);
        std::copy(src.begin(), src.end(), out.begin() + n * count * P);
    }
    return Tensor<T>::make_op(o, std::move(out), {a}, [s, begin, count, P](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t n = 0; n < s.n; ++n)
            for (int64_t i = 0; i < count * P; ++i) g[(n * s.c + begin) * P + i] += self.grad[n * count * P + i];
    });
}

template <typename T>
Tensor<T> repeat_channels(const Tensor<T>& a, int64_t channels) {
    const Shape s = a.shape();
    require(s.c == 1, "repeat_channels expects a single-channel tensor, got " + s.str());
    require(channels >= 1, "repeat_channels: channel count must be positive");
    const Shape o{s.n, channels, s.h, s.w};
    const int64_t P = s.plane();
    std::vector<T> out(static_cast<size_t>(o.numel()));
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < channels; ++c)
            std::copy_n(a.data().begin() + n * P, P, out.begin() + (n * channels + c) * P);
    return Tensor<T>::make_op(o, std::move(out), {a}, [s, channels, P](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t n = 0; n < s.n; ++n)
            for (int64_t c = 0; c < channels; ++c)
                for (int64_t p = 0; p < P; ++p) g[n * P + p] += self.grad[(n * channels + c) * P + p];
    });
}

// --- reductions --------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    double acc = 0.0;
    for (T v : a.data()) acc += static_cast<double>(v);
    return Tensor<T>::make_op({1, 1, 1, 1}, {static_cast<T>(acc)}, {a}, [](auto& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    const auto n = a.numel();
    require(n > 0, "mean of an empty tensor");
    double acc = 0.0;
    for (T v : a.data()) acc += static_cast<double>(v);
    const T scale = T(1) / static_cast<T>(n);
    return Tensor<T>::make_op({1, 1, 1, 1}, {static_cast<T>(acc / static_cast<double>(n))}, {a},
                              [scale](auto& self) {
                                  auto& g = self.parents[0]->ensure_grad();
                                  const T d = self.grad[0] * scale;
                                  for (auto& v : g) v += d;
                              });
}

// --- instantiation -----------------------------------------------------

#define GATEDFILL_INSTANTIATE(T)                                                                        \
    template class Tensor<T>;                                                                           \
    template std::vector<Tensor<T>::Node*> topological_order(const Tensor<T>&);                         \
    template Tensor<T> concat_batch(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvGeometry&); \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                                                 \
    template Tensor<T> mul_scalar(const Tensor<T>&, T);                                                 \
    template Tensor<T> neg(const Tensor<T>&);                                                           \
    template Tensor<T> abs(const Tensor<T>&);                                                           \
    template Tensor<T> square(const Tensor<T>&);                                                        \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                       \
    template Tensor<T> tanh(const Tensor<T>&);                                                          \
    template Tensor<T> elu(const Tensor<T>&);                                                           \
    template Tensor<T> relu(const Tensor<T>&);                                                          \
    template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                 \
    template Tensor<T> activate(const Tensor<T>&, Activation, T);                                       \
    template Tensor<T> add_channel_bias(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> upsample_nearest(const Tensor<T>&, int);                                         \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> slice_channels(const Tensor<T>&, int64_t, int64_t);                              \
    template Tensor<T> repeat_channels(const Tensor<T>&, int64_t);                                      \
    template Tensor<T> sum(const Tensor<T>&);                                                           \
    template Tensor<T> mean(const Tensor<T>&);

GATEDFILL_INSTANTIATE(float)
GATEDFILL_INSTANTIATE(double)

#undef GATEDFILL_INSTANTIATE

}  // namespace gatedfill
