// Copyright (C) 2026 The freeu-lab Authors
// SPDX-License-Identifier: Apache-2.0
#include "freeu/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "freeu/gemm.hpp"

namespace freeu {

namespace detail {

Tensor& Node::grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor::zeros(value.shape());
    return grad;
}

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() noexcept { return g_grad_enabled; }

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

const Tensor& Var::grad() const { return node_->grad_buffer(); }

void Var::zero_grad() {
    auto& g = node_->grad_buffer();
    std::fill(g.data().begin(), g.data().end(), 0.0f);
}

void Var::assign(Tensor value) {
    if (value.shape() != node_->value.shape()) {
        throw ShapeError("assign: shape " + to_string(value.shape()) + " differs from " +
                         to_string(node_->value.shape()));
    }
    node_->value = std::move(value);
}

Var Var::from_op(Tensor value, const char* op, std::vector<Var> parents,
                 std::function<void(detail::Node&)> backward) {
    value.require_finite(op);
    Var out(std::move(value));
    out.node_->op = op;
    const bool needs = g_grad_enabled && std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
    if (needs) {
        out.node_->requires_grad = true;
        out.node_->backward = std::move(backward);
        for (auto& p : parents) out.node_->parents.push_back(p.node_);
    }
    return out;
}

void backward(const Var& loss) {
    if (!loss.defined() || loss.value().numel() != 1) {
        throw ShapeError("backward: loss must hold a single element, got shape " +
                         (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order over grad-requiring nodes.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node(), 0}};
    seen.insert(loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss.node()->grad_buffer()[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* node = *it;
        if (node->backward) node->backward(*node);
    }
}

namespace ops {

namespace {

using detail::Node;

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void accumulate(Tensor& dst, std::span<const float> src) {
    auto d = dst.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

// How `b` lines up against `a` in a binary elementwise op.
enum class Broadcast { kSame, kChannel, kBatchChannel };

Broadcast classify(const Shape& a, const Shape& b, const char* op) {
    if (a == b) return Broadcast::kSame;
    if (a.size() == 4) {
        const auto n = a[0], c = a[1];
        if ((b.size() == 1 && b[0] == c) || (b == Shape{1, c, 1, 1})) return Broadcast::kChannel;
        if (b == Shape{n, c, 1, 1} || b == Shape{n, c}) return Broadcast::kBatchChannel;
    }
    throw ShapeError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                     " are not broadcastable");
}

// Index into b for element (n, c) of a broadcast operand.
inline std::size_t bcast_index(Broadcast mode, std::int64_t n, std::int64_t c, std::int64_t channels) {
    return mode == Broadcast::kChannel ? static_cast<std::size_t>(c)
                                       : static_cast<std::size_t>(n * channels + c);
}

template <typename Fn>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, Broadcast mode, Fn fn) {
    Tensor out(a.shape());
    auto o = out.data();
    auto av = a.data();
    auto bv = b.data();
    if (mode == Broadcast::kSame) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = fn(av[i], bv[i]);
        return out;
    }
    const auto n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < c; ++j) {
            const float bj = bv[bcast_index(mode, i, j, c)];
            const std::size_t base = static_cast<std::size_t>((i * c + j) * hw);
            for (std::int64_t p = 0; p < hw; ++p) o[base + p] = fn(av[base + p], bj);
        }
    }
    return out;
}

// Sums a full-shaped gradient down to the broadcast operand's shape.
void reduce_into(Tensor& dst, const Tensor& full, Broadcast mode, const Tensor& weights, bool weighted) {
    auto d = dst.data();
    auto g = full.data();
    if (mode == Broadcast::kSame) {
        auto w = weights.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += weighted ? g[i] * w[i] : g[i];
        return;
    }
    const auto n = full.dim(0), c = full.dim(1), hw = full.dim(2) * full.dim(3);
    auto w = weights.data();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < c; ++j) {
            const std::size_t base = static_cast<std::size_t>((i * c + j) * hw);
            float s = 0.0f;
            for (std::int64_t p = 0; p < hw; ++p) s += weighted ? g[base + p] * w[base + p] : g[base + p];
            d[bcast_index(mode, i, j, c)] += s;
        }
    }
}

struct ConvGeometry {
    std::int64_t n, c_in, h, w, c_out, k, stride, pad, h_out, w_out;
    std::int64_t patch() const { return c_in * k * k; }
    std::int64_t pixels() const { return h_out * w_out; }
};

ConvGeometry conv_geometry(const Shape& x, const Shape& wt, const Shape& b, int stride, int padding) {
    auto fail = [&](const std::string& why) {
        throw ShapeError("conv2d: " + why + " (input " + to_string(x) + ", weight " + to_string(wt) + ")");
    };
    if (x.size() != 4 || wt.size() != 4) fail("expected rank-4 input and weight");
    if (x[1] != wt[1]) fail("input channels do not match weight");
    if (wt[2] != wt[3] || wt[2] % 2 == 0) fail("kernel must be square with odd extent");
    if (b.size() != 1 || b[0] != wt[0]) fail("bias shape " + to_string(b) + " does not match output channels");
    if (stride < 1 || padding < 0) fail("invalid stride/padding");
    ConvGeometry g{x[0], x[1], x[2], x[3], wt[0], wt[2], stride, padding, 0, 0};
    const auto span_h = g.h + 2 * g.pad - g.k;
    const auto span_w = g.w + 2 * g.pad - g.k;
    if (span_h < 0 || span_w < 0 || span_h % g.stride != 0 || span_w % g.stride != 0) {
        fail("output extent is not integral");
    }
    g.h_out = span_h / g.stride + 1;
    g.w_out = span_w / g.stride + 1;
    return g;
}

// col[(c*k + ky)*k + kx][oy*w_out + ox]
void im2col(const ConvGeometry& g, const float* x, float* col) {
    for (std::int64_t c = 0; c < g.c_in; ++c) {
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
            for (std::int64_t kx = 0; kx < g.k; ++kx) {
                float* row = col + ((c * g.k + ky) * g.k + kx) * g.pixels();
                for (std::int64_t oy = 0; oy < g.h_out; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.pad + ky;
                    float* dst = row + oy * g.w_out;
                    if (iy < 0 || iy >= g.h) {
                        std::fill_n(dst, g.w_out, 0.0f);
                        continue;
                    }
                    const float* src = x + (c * g.h + iy) * g.w;
                    for (std::int64_t ox = 0; ox < g.w_out; ++ox) {
                        const std::int64_t ix = ox * g.stride - g.pad + kx;
                        dst[ox] = (ix < 0 || ix >= g.w) ? 0.0f : src[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const float* col, float* dx) {
    for (std::int64_t c = 0; c < g.c_in; ++c) {
        for (std::int64_t ky = 0; ky < g.k; ++ky) {
            for (std::int64_t kx = 0; kx < g.k; ++kx) {
                const float* row = col + ((c * g.k + ky) * g.k + kx) * g.pixels();
                for (std::int64_t oy = 0; oy < g.h_out; ++oy) {
                    const std::int64_t iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.h) continue;
                    float* dst = dx + (c * g.h + iy) * g.w;
                    for (std::int64_t ox = 0; ox < g.w_out; ++ox) {
                        const std::int64_t ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.w) dst[ix] += row[oy * g.w_out + ox];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const ConvGeometry& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

Var conv2d(const Var& input, const Var& weight, const Var& bias, int stride, int padding) {
    const ConvGeometry g = conv_geometry(input.shape(), weight.shape(), bias.shape(), stride, padding);
    Tensor out({g.n, g.c_out, g.h_out, g.w_out});
    const auto patch = static_cast<std::size_t>(g.patch());
    const auto pixels = static_cast<std::size_t>(g.pixels());
    const std::size_t in_stride = static_cast<std::size_t>(g.c_in * g.h * g.w);
    const std::size_t out_stride = static_cast<std::size_t>(g.c_out) * pixels;
    std::vector<float> col(is_pointwise(g) ? 0 : patch * pixels);
    const float* x = input.value().data().data();
    const float* wt = weight.value().data().data();
    const float* bv = bias.value().data().data();
    for (std::int64_t i = 0; i < g.n; ++i) {
        const float* src = x + i * in_stride;
        if (!is_pointwise(g)) {
            im2col(g, src, col.data());
            src = col.data();
        }
        float* dst = out.data().data() + i * out_stride;
        kernels::gemm(static_cast<std::size_t>(g.c_out), pixels, patch, wt, src, dst);
        for (std::int64_t o = 0; o < g.c_out; ++o) {
            for (std::size_t p = 0; p < pixels; ++p) dst[o * pixels + p] += bv[o];
        }
    }

    return Var::from_op(std::move(out), "conv2d", {input, weight, bias}, [g](Node& self) {
        Node& in = parent(self, 0);
        Node& wn = parent(self, 1);
        Node& bn = parent(self, 2);
        const auto patch = static_cast<std::size_t>(g.patch());
        const auto pixels = static_cast<std::size_t>(g.pixels());
        const auto c_out = static_cast<std::size_t>(g.c_out);
        const std::size_t in_stride = static_cast<std::size_t>(g.c_in * g.h * g.w);
        const float* dy = self.grad.data().data();

        if (bn.requires_grad) {
            auto db = bn.grad_buffer().data();
            for (std::int64_t i = 0; i < g.n; ++i)
                for (std::size_t o = 0; o < c_out; ++o) {
                    const float* row = dy + (i * c_out + o) * pixels;
                    float s = 0.0f;
                    for (std::size_t p = 0; p < pixels; ++p) s += row[p];
                    db[o] += s;
                }
        }
        std::vector<float> col(patch * pixels);
        std::vector<float> col_t(patch * pixels);
        if (wn.requires_grad) {
            float* dw = wn.grad_buffer().data().data();
            const float* x = in.value.data().data();
            for (std::int64_t i = 0; i < g.n; ++i) {
                const float* src = x + i * in_stride;
                if (!is_pointwise(g)) {
                    im2col(g, src, col.data());
                    src = col.data();
                }
                kernels::transpose(patch, pixels, src, col_t.data());
                kernels::gemm(c_out, patch, pixels, dy + i * c_out * pixels, col_t.data(), dw, true);
            }
        }
        if (in.requires_grad) {
            std::vector<float> w_t(patch * c_out);
            kernels::transpose(c_out, patch, wn.value.data().data(), w_t.data());
            float* dx = in.grad_buffer().data().data();
            for (std::int64_t i = 0; i < g.n; ++i) {
                if (is_pointwise(g)) {
                    kernels::gemm(patch, pixels, c_out, w_t.data(), dy + i * c_out * pixels, dx + i * in_stride,
                                  true);
                } else {
                    kernels::gemm(patch, pixels, c_out, w_t.data(), dy + i * c_out * pixels, col.data());
                    col2im_add(g, col.data(), dx + i * in_stride);
                }
            }
        }
    });
}

Var add(const Var& a, const Var& b) {
    const Broadcast mode = classify(a.shape(), b.shape(), "add");
    Tensor out = broadcast_apply(a.value(), b.value(), mode, [](float x, float y) { return x + y; });
    return Var::from_op(std::move(out), "add", {a, b}, [mode](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) accumulate(pa.grad_buffer(), self.grad.data());
        if (pb.requires_grad) reduce_into(pb.grad_buffer(), self.grad, mode, self.grad, false);
    });
}

Var sub(const Var& a, const Var& b) {
    const Broadcast mode = classify(a.shape(), b.shape(), "sub");
    Tensor out = broadcast_apply(a.value(), b.value(), mode, [](float x, float y) { return x - y; });
    return Var::from_op(std::move(out), "sub", {a, b}, [mode](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) accumulate(pa.grad_buffer(), self.grad.data());
        if (pb.requires_grad) {
            Tensor neg = self.grad;
            for (auto& v : neg.data()) v = -v;
            reduce_into(pb.grad_buffer(), neg, mode, neg, false);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    const Broadcast mode = classify(a.shape(), b.shape(), "mul");
    Tensor out = broadcast_apply(a.value(), b.value(), mode, [](float x, float y) { return x * y; });
    return Var::from_op(std::move(out), "mul", {a, b}, [mode](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        if (pa.requires_grad) {
            Tensor da = broadcast_apply(self.grad, pb.value, mode, [](float g, float y) { return g * y; });
            accumulate(pa.grad_buffer(), da.data());
        }
        if (pb.requires_grad) reduce_into(pb.grad_buffer(), self.grad, mode, pa.value, true);
    });
}

Var scale(const Var& a, float factor) {
    Tensor out = a.value();
    for (auto& v : out.data()) v *= factor;
    return Var::from_op(std::move(out), "scale", {a}, [factor](Node& self) {
        auto d = parent(self, 0).grad_buffer().data();
        auto g = self.grad.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * factor;
    });
}

Var silu(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.data()) v = v / (1.0f + std::exp(-v));
    return Var::from_op(std::move(out), "silu", {a}, [](Node& self) {
        Node& pa = parent(self, 0);
        auto d = pa.grad_buffer().data();
        auto x = pa.value.data();
        auto g = self.grad.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
            const float s = 1.0f / (1.0f + std::exp(-x[i]));
            d[i] += g[i] * s * (1.0f + x[i] * (1.0f - s));
        }
    });
}

Var group_norm(const Var& input, int groups, const Var& gamma, const Var& beta, float eps) {
    const Shape& s = input.shape();
    if (s.size() != 4) throw ShapeError("group_norm: expected [N,C,H,W], got " + to_string(s));
    const auto n = s[0], c = s[1], hw = s[2] * s[3];
    if (groups < 1 || c % groups != 0) {
        throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible by " +
                         std::to_string(groups) + " groups");
    }
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
        throw ShapeError("group_norm: affine parameters must be [" + std::to_string(c) + "], got " +
                         to_string(gamma.shape()) + " and " + to_string(beta.shape()));
    }
    const auto per_group = (c / groups) * hw;
    auto xhat = std::make_shared<Tensor>(s);
    auto rstd = std::make_shared<std::vector<float>>(static_cast<std::size_t>(n * groups));
    Tensor out(s);
    auto x = input.value().data();
    auto xh = xhat->data();
    auto o = out.data();
    auto gm = gamma.value().data();
    auto bt = beta.value().data();
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t gi = 0; gi < groups; ++gi) {
            const std::size_t base = static_cast<std::size_t>((i * groups + gi) * per_group);
            double mean = 0.0;
            for (std::int64_t p = 0; p < per_group; ++p) mean += x[base + p];
            mean /= static_cast<double>(per_group);
            double var = 0.0;
            for (std::int64_t p = 0; p < per_group; ++p) {
                const double d = x[base + p] - mean;
                var += d * d;
            }
            var /= static_cast<double>(per_group);
            const float r = static_cast<float>(1.0 / std::sqrt(var + eps));
            (*rstd)[static_cast<std::size_t>(i * groups + gi)] = r;
            for (std::int64_t p = 0; p < per_group; ++p) {
                const std::size_t idx = base + p;
                const auto ch = static_cast<std::size_t>(gi * (c / groups) + p / hw);
                xh[idx] = static_cast<float>(x[idx] - mean) * r;
                o[idx] = xh[idx] * gm[ch] + bt[ch];
            }
        }
    }
    return Var::from_op(std::move(out), "group_norm", {input, gamma, beta},
                        [=](Node& self) {
                            Node& in = parent(self, 0);
                            Node& gn = parent(self, 1);
                            Node& bn = parent(self, 2);
                            auto g = self.grad.data();
                            auto xh = xhat->data();
                            const auto cpg = c / groups;
                            if (gn.requires_grad || bn.requires_grad) {
                                auto dg = gn.grad_buffer().data();
                                auto db = bn.grad_buffer().data();
                                for (std::int64_t i = 0; i < n; ++i)
                                    for (std::int64_t ch = 0; ch < c; ++ch) {
                                        const auto base = static_cast<std::size_t>((i * c + ch) * hw);
                                        float sg = 0.0f, sb = 0.0f;
                                        for (std::int64_t p = 0; p < hw; ++p) {
                                            sg += g[base + p] * xh[base + p];
                                            sb += g[base + p];
                                        }
                                        if (gn.requires_grad) dg[ch] += sg;
                                        if (bn.requires_grad) db[ch] += sb;
                                    }
                            }
                            if (!in.requires_grad) return;
                            auto dx = in.grad_buffer().data();
                            auto gm = gn.value.data();
                            std::vector<float> dxh(static_cast<std::size_t>(per_group));
                            for (std::int64_t i = 0; i < n; ++i) {
                                for (std::int64_t gi = 0; gi < groups; ++gi) {
                                    const auto base = static_cast<std::size_t>((i * groups + gi) * per_group);
                                    double m1 = 0.0, m2 = 0.0;
                                    for (std::int64_t p = 0; p < per_group; ++p) {
                                        const auto ch = static_cast<std::size_t>(gi * cpg + p / hw);
                                        dxh[p] = g[base + p] * gm[ch];
                                        m1 += dxh[p];
                                        m2 += static_cast<double>(dxh[p]) * xh[base + p];
                                    }
                                    m1 /= static_cast<double>(per_group);
                                    m2 /= static_cast<double>(per_group);
                                    const float r = (*rstd)[static_cast<std::size_t>(i * groups + gi)];
                                    for (std::int64_t p = 0; p < per_group; ++p) {
                                        dx[base + p] += r * static_cast<float>(dxh[p] - m1 - xh[base + p] * m2);
                                    }
                                }
                            }
                        });
}

Var resample(const Var& input, Resample mode) {
    const Shape& s = input.shape();
    if (s.size() != 4) throw ShapeError("resample: expected [N,C,H,W], got " + to_string(s));
    const auto planes = s[0] * s[1], h = s[2], w = s[3];
    if (mode == Resample::kDown2Avg) {
        if (h % 2 != 0 || w % 2 != 0) throw ShapeError("resample: down2_avg needs even extents, got " + to_string(s));
        const auto ho = h / 2, wo = w / 2;
        Tensor out({s[0], s[1], ho, wo});
        auto x = input.value().data();
        auto o = out.data();
        for (std::int64_t p = 0; p < planes; ++p)
            for (std::int64_t y = 0; y < ho; ++y)
                for (std::int64_t xx = 0; xx < wo; ++xx) {
                    const auto src = static_cast<std::size_t>((p * h + 2 * y) * w + 2 * xx);
                    o[static_cast<std::size_t>((p * ho + y) * wo + xx)] =
                        0.25f * (x[src] + x[src + 1] + x[src + w] + x[src + w + 1]);
                }
        return Var::from_op(std::move(out), "down2_avg", {input}, [=](Node& self) {
            auto d = parent(self, 0).grad_buffer().data();
            auto g = self.grad.data();
            for (std::int64_t p = 0; p < planes; ++p)
                for (std::int64_t y = 0; y < ho; ++y)
                    for (std::int64_t xx = 0; xx < wo; ++xx) {
                        const float q = 0.25f * g[static_cast<std::size_t>((p * ho + y) * wo + xx)];
                        const auto dst = static_cast<std::size_t>((p * h + 2 * y) * w + 2 * xx);
                        d[dst] += q;
                        d[dst + 1] += q;
                        d[dst + w] += q;
                        d[dst + w + 1] += q;
                    }
        });
    }
    const auto ho = h * 2, wo = w * 2;
    Tensor out({s[0], s[1], ho, wo});
    auto x = input.value().data();
    auto o = out.data();
    for (std::int64_t p = 0; p < planes; ++p)
        for (std::int64_t y = 0; y < ho; ++y)
            for (std::int64_t xx = 0; xx < wo; ++xx)
                o[static_cast<std::size_t>((p * ho + y) * wo + xx)] =
                    x[static_cast<std::size_t>((p * h + y / 2) * w + xx / 2)];
    return Var::from_op(std::move(out), "up2_nearest", {input}, [=](Node& self) {
        auto d = parent(self, 0).grad_buffer().data();
        auto g = self.grad.data();
        for (std::int64_t p = 0; p < planes; ++p)
            for (std::int64_t y = 0; y < ho; ++y)
                for (std::int64_t xx = 0; xx < wo; ++xx)
                    d[static_cast<std::size_t>((p * h + y / 2) * w + xx / 2)] +=
                        g[static_cast<std::size_t>((p * ho + y) * wo + xx)];
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3]) {
        throw ShapeError("concat_channels: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
    }
    const auto n = sa[0], ca = sa[1], cb = sb[1], hw = sa[2] * sa[3];
    Tensor out({n, ca + cb, sa[2], sa[3]});
    auto o = out.data().data();
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(a.value().data().data() + i * ca * hw, ca * hw, o + i * (ca + cb) * hw);
        std::copy_n(b.value().data().data() + i * cb * hw, cb * hw, o + (i * (ca + cb) + ca) * hw);
    }
    return Var::from_op(std::move(out), "concat_channels", {a, b}, [=](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        const float* g = self.grad.data().data();
        for (std::int64_t i = 0; i < n; ++i) {
            if (pa.requires_grad) {
                float* d = pa.grad_buffer().data().data() + i * ca * hw;
                const float* src = g + i * (ca + cb) * hw;
                for (std::int64_t p = 0; p < ca * hw; ++p) d[p] += src[p];
            }
            if (pb.requires_grad) {
                float* d = pb.grad_buffer().data().data() + i * cb * hw;
                const float* src = g + (i * (ca + cb) + ca) * hw;
                for (std::int64_t p = 0; p < cb * hw; ++p) d[p] += src[p];
            }
        }
    });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
    const Shape& sx = x.shape();
    const Shape& sw = weight.shape();
    if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[1] || bias.shape() != Shape{sw[0]}) {
        throw ShapeError("linear: incompatible shapes x " + to_string(sx) + ", weight " + to_string(sw) +
                         ", bias " + to_string(bias.shape()));
    }
    const auto n = sx[0], in = sx[1], outc = sw[0];
    Tensor out({n, outc});
    auto xv = x.value().data();
    auto wv = weight.value().data();
    auto bv = bias.value().data();
    auto o = out.data();
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < outc; ++j) {
            float s = 0.0f;
            for (std::int64_t p = 0; p < in; ++p) s += xv[i * in + p] * wv[j * in + p];
            o[i * outc + j] = s + bv[j];
        }
    return Var::from_op(std::move(out), "linear", {x, weight, bias}, [=](Node& self) {
        Node& px = parent(self, 0);
        Node& pw = parent(self, 1);
        Node& pb = parent(self, 2);
        auto g = self.grad.data();
        auto xv = px.value.data();
        auto wv = pw.value.data();
        if (px.requires_grad) {
            auto d = px.grad_buffer().data();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t p = 0; p < in; ++p) {
                    float s = 0.0f;
                    for (std::int64_t j = 0; j < outc; ++j) s += g[i * outc + j] * wv[j * in + p];
                    d[i * in + p] += s;
                }
        }
        if (pw.requires_grad) {
            auto d = pw.grad_buffer().data();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < outc; ++j)
                    for (std::int64_t p = 0; p < in; ++p) d[j * in + p] += g[i * outc + j] * xv[i * in + p];
        }
        if (pb.requires_grad) {
            auto d = pb.grad_buffer().data();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < outc; ++j) d[j] += g[i * outc + j];
        }
    });
}

Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return Var::from_op(std::move(out), "reshape", {a},
                        [](Node& self) { accumulate(parent(self, 0).grad_buffer(), self.grad.data()); });
}

Var sum(const Var& a) {
    double s = 0.0;
    for (float v : a.value().data()) s += v;
    return Var::from_op(Tensor({1}, {static_cast<float>(s)}), "sum", {a}, [](Node& self) {
        const float g = self.grad[0];
        for (auto& d : parent(self, 0).grad_buffer().data()) d += g;
    });
}

Var mean(const Var& a) { return scale(sum(a), 1.0f / static_cast<float>(a.value().numel())); }

Var mse(const Var& a, const Var& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mse: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) + " differ");
    }
    const auto count = static_cast<float>(a.value().numel());
    auto av = a.value().data();
    auto bv = b.value().data();
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = static_cast<double>(av[i]) - bv[i];
        s += d * d;
    }
    return Var::from_op(Tensor({1}, {static_cast<float>(s / count)}), "mse", {a, b}, [count](Node& self) {
        Node& pa = parent(self, 0);
        Node& pb = parent(self, 1);
        const float g = self.grad[0] * 2.0f / count;
        auto av = pa.value.data();
        auto bv = pb.value.data();
        if (pa.requires_grad) {
            auto d = pa.grad_buffer().data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * (av[i] - bv[i]);
        }
        if (pb.requires_grad) {
            auto d = pb.grad_buffer().data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g * (av[i] - bv[i]);
        }
    });
}

}  // namespace ops

}  // namespace freeu
