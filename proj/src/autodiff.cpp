#include "glissando/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "glissando/loss_kernels.hpp"

namespace glissando::ad {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXf>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXf>;

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

void Node::ensure_grad() {
    if (grad.empty()) grad.assign(static_cast<size_t>(size()), 0.0f);
}

namespace {

std::shared_ptr<Node> make_node(Shape shape, std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->store.assign(static_cast<size_t>(numel(n->shape)), 0.0f);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p->requires_grad) n->requires_grad = true;
    }
    return n;
}

// Accumulate helper: dst.grad += src (only when dst wants gradients).
inline void accum(Node* dst, const float* src) {
    if (!dst->requires_grad) return;
    dst->ensure_grad();
    VecMap(dst->grad.data(), dst->size()) += ConstVecMap(src, dst->size());
}

} // namespace

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    auto n = make_node(shape, {});
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::constant(const Shape& shape, std::vector<float> values) {
    if (static_cast<int64_t>(values.size()) != numel(shape)) {
        throw std::invalid_argument("Tensor::constant: value count does not match shape");
    }
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->store = std::move(values);
    return Tensor(std::move(n));
}

Tensor Tensor::view_of(const Shape& shape, const float* values, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->view = values;
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

void backward(const Tensor& root) {
    if (!root.defined() || root.size() != 1) {
        throw std::invalid_argument("backward: root must be a defined scalar");
    }
    // Iterative post-order DFS for the topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad();
    root.node()->grad[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->requires_grad && !n->grad.empty()) n->backprop();
    }
}

// --- elementwise / linear algebra ---------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("add: shape mismatch");
    }
    auto n = make_node(a.shape(), {a.shared_node(), b.shared_node()});
    VecMap(n->mut_data(), n->size()) =
        ConstVecMap(a.data(), a.size()) + ConstVecMap(b.data(), b.size());
    Node* raw = n.get();
    Node* pa = a.node();
    Node* pb = b.node();
    n->backprop = [raw, pa, pb] {
        accum(pa, raw->grad.data());
        accum(pb, raw->grad.data());
    };
    return Tensor(std::move(n));
}

Tensor scale(const Tensor& x, float s) {
    auto n = make_node(x.shape(), {x.shared_node()});
    VecMap(n->mut_data(), n->size()) = ConstVecMap(x.data(), x.size()) * s;
    Node* raw = n.get();
    Node* px = x.node();
    n->backprop = [raw, px, s] {
        if (!px->requires_grad) return;
        px->ensure_grad();
        VecMap(px->grad.data(), px->size()) +=
            ConstVecMap(raw->grad.data(), raw->size()) * s;
    };
    return Tensor(std::move(n));
}

Tensor relu(const Tensor& x) {
    auto n = make_node(x.shape(), {x.shared_node()});
    const float* in = x.data();
    float* out = n->mut_data();
    const int64_t count = n->size();
    for (int64_t i = 0; i < count; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
    Node* raw = n.get();
    Node* px = x.node();
    n->backprop = [raw, px] {
        if (!px->requires_grad) return;
        px->ensure_grad();
        const float* o = raw->data();
        const float* g = raw->grad.data();
        float* pg = px->grad.data();
        const int64_t count = raw->size();
        for (int64_t i = 0; i < count; ++i) {
            if (o[i] > 0.0f) pg[i] += g[i];
        }
    };
    return Tensor(std::move(n));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    const bool vec_in = x.shape().size() == 1;
    const int m = vec_in ? 1 : x.shape()[0];
    const int in = vec_in ? x.shape()[0] : x.shape()[1];
    if (w.shape().size() != 2 || w.shape()[0] != in) {
        throw std::invalid_argument("linear: weight shape mismatch");
    }
    const int out = w.shape()[1];
    Shape out_shape = vec_in ? Shape{out} : Shape{m, out};
    std::vector<std::shared_ptr<Node>> parents{x.shared_node(), w.shared_node()};
    if (bias.defined()) parents.push_back(bias.shared_node());
    auto n = make_node(out_shape, std::move(parents));

    MatMap y(n->mut_data(), m, out);
    y.noalias() = ConstMatMap(x.data(), m, in) * ConstMatMap(w.data(), in, out);
    if (bias.defined()) {
        y.rowwise() += ConstVecMap(bias.data(), out).transpose();
    }
    Node* raw = n.get();
    Node* px = x.node();
    Node* pw = w.node();
    Node* pb = bias.defined() ? bias.node() : nullptr;
    n->backprop = [raw, px, pw, pb, m, in, out] {
        ConstMatMap gy(raw->grad.data(), m, out);
        if (px->requires_grad) {
            px->ensure_grad();
            MatMap(px->grad.data(), m, in).noalias() +=
                gy * ConstMatMap(pw->data(), in, out).transpose();
        }
        if (pw->requires_grad) {
            pw->ensure_grad();
            MatMap(pw->grad.data(), in, out).noalias() +=
                ConstMatMap(px->data(), m, in).transpose() * gy;
        }
        if (pb && pb->requires_grad) {
            pb->ensure_grad();
            VecMap(pb->grad.data(), out) += gy.colwise().sum().transpose();
        }
    };
    return Tensor(std::move(n));
}

Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<float>& weights) {
    if (terms.empty() || terms.size() != weights.size()) {
        throw std::invalid_argument("weighted_sum: need matching terms and weights");
    }
    std::vector<std::shared_ptr<Node>> parents;
    float value = 0.0f;
    for (size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].size() != 1) {
            throw std::invalid_argument("weighted_sum: terms must be scalars");
        }
        parents.push_back(terms[i].shared_node());
        value += weights[i] * terms[i].data()[0];
    }
    auto n = make_node({1}, std::move(parents));
    n->mut_data()[0] = value;
    Node* raw = n.get();
    std::vector<Node*> raw_parents;
    for (const auto& t : terms) raw_parents.push_back(t.node());
    std::vector<float> ws = weights;
    n->backprop = [raw, raw_parents, ws] {
        const float g = raw->grad[0];
        for (size_t i = 0; i < raw_parents.size(); ++i) {
            Node* p = raw_parents[i];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            p->grad[0] += g * ws[i];
        }
    };
    return Tensor(std::move(n));
}

Tensor reshape(const Tensor& x, const Shape& shape) {
    if (numel(shape) != x.size()) {
        throw std::invalid_argument("reshape: element count mismatch");
    }
    auto n = make_node(shape, {x.shared_node()});
    std::copy(x.data(), x.data() + x.size(), n->mut_data());
    Node* raw = n.get();
    Node* px = x.node();
    n->backprop = [raw, px] { accum(px, raw->grad.data()); };
    return Tensor(std::move(n));
}

Tensor concat(const Tensor& a, const Tensor& b) {
    const bool vec = a.shape().size() == 1;
    if (vec != (b.shape().size() == 1)) {
        throw std::invalid_argument("concat: rank mismatch");
    }
    const int m = vec ? 1 : a.shape()[0];
    if (!vec && b.shape()[0] != m) {
        throw std::invalid_argument("concat: row count mismatch");
    }
    const int ca = vec ? a.shape()[0] : a.shape()[1];
    const int cb = vec ? b.shape()[0] : b.shape()[1];
    Shape out_shape = vec ? Shape{ca + cb} : Shape{m, ca + cb};
    auto n = make_node(out_shape, {a.shared_node(), b.shared_node()});
    float* out = n->mut_data();
    const float* da = a.data();
    const float* db = b.data();
    for (int r = 0; r < m; ++r) {
        std::copy(da + r * ca, da + (r + 1) * ca, out + r * (ca + cb));
        std::copy(db + r * cb, db + (r + 1) * cb, out + r * (ca + cb) + ca);
    }
    Node* raw = n.get();
    Node* pa = a.node();
    Node* pb = b.node();
    n->backprop = [raw, pa, pb, m, ca, cb] {
        const float* g = raw->grad.data();
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (int r = 0; r < m; ++r) {
                for (int c = 0; c < ca; ++c) pa->grad[r * ca + c] += g[r * (ca + cb) + c];
            }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (int r = 0; r < m; ++r) {
                for (int c = 0; c < cb; ++c) {
                    pb->grad[r * cb + c] += g[r * (ca + cb) + ca + c];
                }
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 3 || b.shape().size() != 3 || a.shape()[1] != b.shape()[1] ||
        a.shape()[2] != b.shape()[2]) {
        throw std::invalid_argument("concat_channels: spatial shape mismatch");
    }
    const int c1 = a.shape()[0], c2 = b.shape()[0];
    const int h = a.shape()[1], w = a.shape()[2];
    auto n = make_node({c1 + c2, h, w}, {a.shared_node(), b.shared_node()});
    std::copy(a.data(), a.data() + a.size(), n->mut_data());
    std::copy(b.data(), b.data() + b.size(), n->mut_data() + a.size());
    Node* raw = n.get();
    Node* pa = a.node();
    Node* pb = b.node();
    n->backprop = [raw, pa, pb] {
        if (pa->requires_grad) {
            pa->ensure_grad();
            VecMap(pa->grad.data(), pa->size()) +=
                ConstVecMap(raw->grad.data(), pa->size());
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            VecMap(pb->grad.data(), pb->size()) +=
                ConstVecMap(raw->grad.data() + pa->size(), pb->size());
        }
    };
    return Tensor(std::move(n));
}

// --- convolutional stack ---------------------------------------------------

namespace {

void im2col(const float* x, int cin, int h, int w, int k, int stride, int pad, int oh,
            int ow, float* col) {
    // col: [cin*k*k, oh*ow] row-major.
    for (int ci = 0; ci < cin; ++ci) {
        const float* plane = x + static_cast<int64_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* dst = col + (static_cast<int64_t>(ci) * k * k + ky * k + kx) *
                                       (static_cast<int64_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst + oy * ow, dst + (oy + 1) * ow, 0.0f);
                        continue;
                    }
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[oy * ow + ox] = (ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_accum(const float* col, int cin, int h, int w, int k, int stride, int pad,
                  int oh, int ow, float* gx) {
    for (int ci = 0; ci < cin; ++ci) {
        float* plane = gx + static_cast<int64_t>(ci) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* src = col + (static_cast<int64_t>(ci) * k * k + ky * k + kx) *
                                             (static_cast<int64_t>(oh) * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) plane[iy * w + ix] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int k, int stride,
              int pad) {
    if (x.shape().size() != 3) {
        throw std::invalid_argument("conv2d: input must be [C,H,W]");
    }
    const int cin = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
    if (w.shape().size() != 2 || w.shape()[1] != cin * k * k) {
        throw std::invalid_argument("conv2d: weight must be [Cout, Cin*k*k]");
    }
    const int cout = w.shape()[0];
    const int oh = (h + 2 * pad - k) / stride + 1; // floor semantics
    const int ow = (wd + 2 * pad - k) / stride + 1;
    if (oh < 1 || ow < 1) {
        throw std::invalid_argument("conv2d: output would be empty");
    }
    std::vector<std::shared_ptr<Node>> parents{x.shared_node(), w.shared_node()};
    if (bias.defined()) parents.push_back(bias.shared_node());
    auto n = make_node({cout, oh, ow}, std::move(parents));

    const int64_t kk = static_cast<int64_t>(cin) * k * k;
    const int64_t p = static_cast<int64_t>(oh) * ow;
    std::vector<float> col(kk * p);
    im2col(x.data(), cin, h, wd, k, stride, pad, oh, ow, col.data());
    MatMap y(n->mut_data(), cout, p);
    y.noalias() = ConstMatMap(w.data(), cout, kk) * ConstMatMap(col.data(), kk, p);
    if (bias.defined()) {
        y.colwise() += ConstVecMap(bias.data(), cout);
    }
    Node* raw = n.get();
    Node* px = x.node();
    Node* pw = w.node();
    Node* pb = bias.defined() ? bias.node() : nullptr;
    n->backprop = [raw, px, pw, pb, cin, h, wd, k, stride, pad, cout, oh, ow] {
        const int64_t kk = static_cast<int64_t>(cin) * k * k;
        const int64_t p = static_cast<int64_t>(oh) * ow;
        ConstMatMap gy(raw->grad.data(), cout, p);
        if (pw->requires_grad || px->requires_grad) {
            // The im2col buffer is rebuilt here rather than cached across the
            // forward pass to keep live activation memory at one copy.
            std::vector<float> col(kk * p);
            if (pw->requires_grad) {
                im2col(px->data(), cin, h, wd, k, stride, pad, oh, ow, col.data());
                pw->ensure_grad();
                MatMap(pw->grad.data(), cout, kk).noalias() += gy * ConstMatMap(col.data(), kk, p).transpose();
            }
            if (px->requires_grad) {
                MatMap gcol(col.data(), kk, p);
                gcol.noalias() = ConstMatMap(pw->data(), cout, kk).transpose() * gy;
                px->ensure_grad();
                col2im_accum(col.data(), cin, h, wd, k, stride, pad, oh, ow, px->grad.data());
            }
        }
        if (pb && pb->requires_grad) {
            pb->ensure_grad();
            VecMap(pb->grad.data(), cout) += gy.rowwise().sum();
        }
    };
    return Tensor(std::move(n));
}

Tensor deconv2x2(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.shape().size() != 3) {
        throw std::invalid_argument("deconv2x2: input must be [C,H,W]");
    }
    const int cin = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
    if (w.shape().size() != 2 || w.shape()[0] != cin || w.shape()[1] % 4 != 0) {
        throw std::invalid_argument("deconv2x2: weight must be [Cin, 4*Cout]");
    }
    const int cout = w.shape()[1] / 4;
    const int oh = 2 * h, ow = 2 * wd;
    std::vector<std::shared_ptr<Node>> parents{x.shared_node(), w.shared_node()};
    if (bias.defined()) parents.push_back(bias.shared_node());
    auto n = make_node({cout, oh, ow}, std::move(parents));

    const int64_t p = static_cast<int64_t>(h) * wd;
    std::vector<float> tmp(static_cast<size_t>(4) * cout * p);
    MatMap(tmp.data(), 4 * cout, p).noalias() =
        ConstMatMap(w.data(), cin, 4 * cout).transpose() * ConstMatMap(x.data(), cin, p);
    float* out = n->mut_data();
    for (int co = 0; co < cout; ++co) {
        const float b = bias.defined() ? bias.data()[co] : 0.0f;
        for (int ky = 0; ky < 2; ++ky) {
            for (int kx = 0; kx < 2; ++kx) {
                const float* src = tmp.data() + (static_cast<int64_t>(ky * 2 + kx) * cout + co) * p;
                for (int y = 0; y < h; ++y) {
                    float* dst = out + (static_cast<int64_t>(co) * oh + 2 * y + ky) * ow + kx;
                    for (int xcol = 0; xcol < wd; ++xcol) {
                        dst[2 * xcol] = src[y * wd + xcol] + b;
                    }
                }
            }
        }
    }
    Node* raw = n.get();
    Node* px = x.node();
    Node* pw = w.node();
    Node* pb = bias.defined() ? bias.node() : nullptr;
    n->backprop = [raw, px, pw, pb, cin, h, wd, cout] {
        const int oh = 2 * h, ow = 2 * wd;
        const int64_t p = static_cast<int64_t>(h) * wd;
        std::vector<float> gtmp(static_cast<size_t>(4) * cout * p);
        const float* g = raw->grad.data();
        for (int co = 0; co < cout; ++co) {
            for (int ky = 0; ky < 2; ++ky) {
                for (int kx = 0; kx < 2; ++kx) {
                    float* dst = gtmp.data() + (static_cast<int64_t>(ky * 2 + kx) * cout + co) * p;
                    for (int y = 0; y < h; ++y) {
                        const float* src = g + (static_cast<int64_t>(co) * oh + 2 * y + ky) * ow + kx;
                        for (int xcol = 0; xcol < wd; ++xcol) {
                            dst[y * wd + xcol] = src[2 * xcol];
                        }
                    }
                }
            }
        }
        if (pw->requires_grad) {
            pw->ensure_grad();
            MatMap(pw->grad.data(), cin, 4 * cout).noalias() +=
                ConstMatMap(px->data(), cin, p) * ConstMatMap(gtmp.data(), 4 * cout, p).transpose();
        }
        if (px->requires_grad) {
            px->ensure_grad();
            MatMap(px->grad.data(), cin, p).noalias() +=
                ConstMatMap(pw->data(), cin, 4 * cout) * ConstMatMap(gtmp.data(), 4 * cout, p);
        }
        if (pb && pb->requires_grad) {
            pb->ensure_grad();
            for (int co = 0; co < cout; ++co) {
                double s = 0.0;
                const float* plane = g + static_cast<int64_t>(co) * oh * ow;
                for (int64_t i = 0; i < static_cast<int64_t>(oh) * ow; ++i) s += plane[i];
                pb->grad[co] += static_cast<float>(s);
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  float eps) {
    const int c = x.shape()[0];
    const int64_t hw = x.size() / c;
    if (c % groups != 0) {
        throw std::invalid_argument("group_norm: channels not divisible by groups");
    }
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
        throw std::invalid_argument("group_norm: affine parameter shape mismatch");
    }
    auto n = make_node(x.shape(), {x.shared_node(), gamma.shared_node(), beta.shared_node()});
    const int cg = c / groups;
    auto stats = std::make_shared<std::vector<float>>(2 * groups); // mean, inv_std per group
    const float* in = x.data();
    float* out = n->mut_data();
    for (int g = 0; g < groups; ++g) {
        const int64_t base = static_cast<int64_t>(g) * cg * hw;
        const int64_t count = static_cast<int64_t>(cg) * hw;
        double mean = 0.0;
        for (int64_t i = 0; i < count; ++i) mean += in[base + i];
        mean /= static_cast<double>(count);
        double var = 0.0;
        for (int64_t i = 0; i < count; ++i) {
            const double d = in[base + i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(count);
        const float inv = 1.0f / std::sqrt(static_cast<float>(var) + eps);
        (*stats)[2 * g] = static_cast<float>(mean);
        (*stats)[2 * g + 1] = inv;
        for (int ci = 0; ci < cg; ++ci) {
            const int ch = g * cg + ci;
            const float gm = gamma.data()[ch];
            const float bt = beta.data()[ch];
            const float* src = in + (static_cast<int64_t>(ch)) * hw;
            float* dst = out + (static_cast<int64_t>(ch)) * hw;
            for (int64_t i = 0; i < hw; ++i) {
                dst[i] = (src[i] - static_cast<float>(mean)) * inv * gm + bt;
            }
        }
    }
    Node* raw = n.get();
    Node* px = x.node();
    Node* pg = gamma.node();
    Node* pb = beta.node();
    n->backprop = [raw, px, pg, pb, groups, cg, hw, stats] {
        const float* in = px->data();
        const float* g = raw->grad.data();
        const float* gam = pg->data();
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        if (px->requires_grad) px->ensure_grad();
        for (int grp = 0; grp < groups; ++grp) {
            const float mean = (*stats)[2 * grp];
            const float inv = (*stats)[2 * grp + 1];
            const int64_t count = static_cast<int64_t>(cg) * hw;
            // Channel-affine grads plus group-wide reductions for dx.
            double sum_dyp = 0.0, sum_dyp_xhat = 0.0;
            for (int ci = 0; ci < cg; ++ci) {
                const int ch = grp * cg + ci;
                const float* src = in + static_cast<int64_t>(ch) * hw;
                const float* gy = g + static_cast<int64_t>(ch) * hw;
                double dgamma = 0.0, dbeta = 0.0;
                for (int64_t i = 0; i < hw; ++i) {
                    const float xhat = (src[i] - mean) * inv;
                    dgamma += gy[i] * xhat;
                    dbeta += gy[i];
                    const float dyp = gy[i] * gam[ch];
                    sum_dyp += dyp;
                    sum_dyp_xhat += dyp * xhat;
                }
                if (pg->requires_grad) pg->grad[ch] += static_cast<float>(dgamma);
                if (pb->requires_grad) pb->grad[ch] += static_cast<float>(dbeta);
            }
            if (!px->requires_grad) continue;
            const float m1 = static_cast<float>(sum_dyp / count);
            const float m2 = static_cast<float>(sum_dyp_xhat / count);
            for (int ci = 0; ci < cg; ++ci) {
                const int ch = grp * cg + ci;
                const float* src = in + static_cast<int64_t>(ch) * hw;
                const float* gy = g + static_cast<int64_t>(ch) * hw;
                float* gx = px->grad.data() + static_cast<int64_t>(ch) * hw;
                const float gm = gam[ch];
                for (int64_t i = 0; i < hw; ++i) {
                    const float xhat = (src[i] - mean) * inv;
                    gx[i] += inv * (gy[i] * gm - m1 - xhat * m2);
                }
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor spatial_mean(const Tensor& x) {
    if (x.shape().size() != 3) {
        throw std::invalid_argument("spatial_mean: input must be [C,H,W]");
    }
    const int c = x.shape()[0];
    const int64_t hw = static_cast<int64_t>(x.shape()[1]) * x.shape()[2];
    auto n = make_node({c}, {x.shared_node()});
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        const float* src = x.data() + ch * hw;
        for (int64_t i = 0; i < hw; ++i) s += src[i];
        n->mut_data()[ch] = static_cast<float>(s / static_cast<double>(hw));
    }
    Node* raw = n.get();
    Node* px = x.node();
    n->backprop = [raw, px, c, hw] {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            const float g = raw->grad[ch] / static_cast<float>(hw);
            float* dst = px->grad.data() + ch * hw;
            for (int64_t i = 0; i < hw; ++i) dst[i] += g;
        }
    };
    return Tensor(std::move(n));
}

// --- point-set machinery ---------------------------------------------------

Tensor gather_rows(const Tensor& x, std::vector<int> idx) {
    if (x.shape().size() != 2) {
        throw std::invalid_argument("gather_rows: input must be [N,C]");
    }
    const int c = x.shape()[1];
    const int r = static_cast<int>(idx.size());
    auto n = make_node({r, c}, {x.shared_node()});
    for (int i = 0; i < r; ++i) {
        std::copy(x.data() + static_cast<int64_t>(idx[i]) * c,
                  x.data() + static_cast<int64_t>(idx[i] + 1) * c,
                  n->mut_data() + static_cast<int64_t>(i) * c);
    }
    Node* raw = n.get();
    Node* px = x.node();
    auto indices = std::make_shared<std::vector<int>>(std::move(idx));
    n->backprop = [raw, px, indices, c] {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (size_t i = 0; i < indices->size(); ++i) {
            const float* g = raw->grad.data() + i * c;
            float* dst = px->grad.data() + static_cast<int64_t>((*indices)[i]) * c;
            for (int j = 0; j < c; ++j) dst[j] += g[j];
        }
    };
    return Tensor(std::move(n));
}

Tensor segmented_max(const Tensor& x, std::vector<int> offsets) {
    if (x.shape().size() != 2) {
        throw std::invalid_argument("segmented_max: input must be [R,C]");
    }
    const int c = x.shape()[1];
    const int s = static_cast<int>(offsets.size()) - 1;
    if (s < 1 || offsets.front() != 0 || offsets.back() != x.shape()[0]) {
        throw std::invalid_argument("segmented_max: bad segment offsets");
    }
    auto n = make_node({s, c}, {x.shared_node()});
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(s) * c);
    for (int seg = 0; seg < s; ++seg) {
        if (offsets[seg + 1] <= offsets[seg]) {
            throw std::invalid_argument("segmented_max: empty segment");
        }
        float* out = n->mut_data() + static_cast<int64_t>(seg) * c;
        int* am = argmax->data() + static_cast<int64_t>(seg) * c;
        for (int j = 0; j < c; ++j) {
            float best = x.data()[static_cast<int64_t>(offsets[seg]) * c + j];
            int best_r = offsets[seg];
            for (int r = offsets[seg] + 1; r < offsets[seg + 1]; ++r) {
                const float v = x.data()[static_cast<int64_t>(r) * c + j];
                if (v > best) {
                    best = v;
                    best_r = r;
                }
            }
            out[j] = best;
            am[j] = best_r;
        }
    }
    Node* raw = n.get();
    Node* px = x.node();
    n->backprop = [raw, px, argmax, s, c] {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (int seg = 0; seg < s; ++seg) {
            const float* g = raw->grad.data() + static_cast<int64_t>(seg) * c;
            const int* am = argmax->data() + static_cast<int64_t>(seg) * c;
            for (int j = 0; j < c; ++j) {
                px->grad[static_cast<int64_t>(am[j]) * c + j] += g[j];
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor roi_align_gather(const Tensor& map, std::vector<RoiQuery> queries) {
    if (map.shape().size() != 3) {
        throw std::invalid_argument("roi_align_gather: map must be [C,H,W]");
    }
    const int c = map.shape()[0], h = map.shape()[1], w = map.shape()[2];
    const int p = static_cast<int>(queries.size());
    auto n = make_node({p, 4 * c}, {map.shared_node()});
    auto qs = std::make_shared<std::vector<RoiQuery>>(std::move(queries));

    auto bilinear = [&](const float* plane, float fy, float fx) -> float {
        const int y0 = static_cast<int>(std::floor(fy));
        const int x0 = static_cast<int>(std::floor(fx));
        const float wy1 = fy - y0, wx1 = fx - x0;
        float acc = 0.0f;
        for (int dy = 0; dy < 2; ++dy) {
            const int yy = y0 + dy;
            if (yy < 0 || yy >= h) continue;
            const float wy = dy ? wy1 : 1.0f - wy1;
            for (int dx = 0; dx < 2; ++dx) {
                const int xx = x0 + dx;
                if (xx < 0 || xx >= w) continue;
                const float wx = dx ? wx1 : 1.0f - wx1;
                acc += wy * wx * plane[yy * w + xx];
            }
        }
        return acc;
    };

    float* out = n->mut_data();
    for (int i = 0; i < p; ++i) {
        const RoiQuery& q = (*qs)[i];
        float* row = out + static_cast<int64_t>(i) * 4 * c;
        if (!q.valid) {
            std::fill(row, row + 4 * c, 0.0f);
            continue;
        }
        for (int t = 0; t < 4; ++t) {
            for (int ch = 0; ch < c; ++ch) {
                row[t * c + ch] =
                    bilinear(map.data() + static_cast<int64_t>(ch) * h * w, q.ty[t], q.tx[t]);
            }
        }
    }
    Node* raw = n.get();
    Node* pm = map.node();
    n->backprop = [raw, pm, qs, c, h, w] {
        if (!pm->requires_grad) return;
        pm->ensure_grad();
        for (size_t i = 0; i < qs->size(); ++i) {
            const RoiQuery& q = (*qs)[i];
            if (!q.valid) continue;
            const float* grow = raw->grad.data() + i * 4 * c;
            for (int t = 0; t < 4; ++t) {
                const int y0 = static_cast<int>(std::floor(q.ty[t]));
                const int x0 = static_cast<int>(std::floor(q.tx[t]));
                const float wy1 = q.ty[t] - y0, wx1 = q.tx[t] - x0;
                for (int dy = 0; dy < 2; ++dy) {
                    const int yy = y0 + dy;
                    if (yy < 0 || yy >= h) continue;
                    const float wy = dy ? wy1 : 1.0f - wy1;
                    for (int dx = 0; dx < 2; ++dx) {
                        const int xx = x0 + dx;
                        if (xx < 0 || xx >= w) continue;
                        const float wx = dx ? wx1 : 1.0f - wx1;
                        for (int ch = 0; ch < c; ++ch) {
                            pm->grad[(static_cast<int64_t>(ch) * h + yy) * w + xx] +=
                                wy * wx * grow[t * c + ch];
                        }
                    }
                }
            }
        }
    };
    return Tensor(std::move(n));
}

// --- stochastic / loss heads ----------------------------------------------

Tensor gauss_sample(const Tensor& mu, const Tensor& logvar, std::vector<float> eps) {
    if (mu.shape() != logvar.shape() || mu.size() != static_cast<int64_t>(eps.size())) {
        throw std::invalid_argument("gauss_sample: shape mismatch");
    }
    auto n = make_node(mu.shape(), {mu.shared_node(), logvar.shared_node()});
    auto noise = std::make_shared<std::vector<float>>(std::move(eps));
    const int64_t d = n->size();
    for (int64_t i = 0; i < d; ++i) {
        n->mut_data()[i] = mu.data()[i] + std::exp(0.5f * logvar.data()[i]) * (*noise)[i];
    }
    Node* raw = n.get();
    Node* pm = mu.node();
    Node* pl = logvar.node();
    n->backprop = [raw, pm, pl, noise] {
        const int64_t d = raw->size();
        if (pm->requires_grad) {
            pm->ensure_grad();
            for (int64_t i = 0; i < d; ++i) pm->grad[i] += raw->grad[i];
        }
        if (pl->requires_grad) {
            pl->ensure_grad();
            for (int64_t i = 0; i < d; ++i) {
                pl->grad[i] += raw->grad[i] * 0.5f * std::exp(0.5f * pl->data()[i]) * (*noise)[i];
            }
        }
    };
    return Tensor(std::move(n));
}

Tensor chamfer_loss(const Tensor& pred_points, std::vector<float> target_points) {
    if (pred_points.shape().size() != 2 || pred_points.shape()[1] != 3 ||
        target_points.size() % 3 != 0) {
        throw std::invalid_argument("chamfer_loss: points must be [N,3]");
    }
    const int n_pred = pred_points.shape()[0];
    const int n_gt = static_cast<int>(target_points.size() / 3);
    auto target = std::make_shared<std::vector<float>>(std::move(target_points));
    auto n = make_node({1}, {pred_points.shared_node()});
    n->mut_data()[0] = kernels::chamfer<float>(pred_points.data(), n_pred, target->data(), n_gt);
    Node* raw = n.get();
    Node* pp = pred_points.node();
    n->backprop = [raw, pp, target, n_pred, n_gt] {
        if (!pp->requires_grad) return;
        pp->ensure_grad();
        std::vector<float> ga(static_cast<size_t>(n_pred) * 3, 0.0f);
        kernels::chamfer_grad<float>(pp->data(), n_pred, target->data(), n_gt, ga.data(),
                                     nullptr);
        const float g = raw->grad[0];
        for (size_t i = 0; i < ga.size(); ++i) pp->grad[i] += g * ga[i];
    };
    return Tensor(std::move(n));
}

Tensor emd_loss(const Tensor& pred_points, std::vector<float> target_points) {
    if (pred_points.shape().size() != 2 || pred_points.shape()[1] != 3) {
        throw std::invalid_argument("emd_loss: points must be [N,3]");
    }
    const int n_pts = pred_points.shape()[0];
    if (static_cast<int>(target_points.size()) != n_pts * 3) {
        throw std::invalid_argument("emd_loss: clouds must have equal sizes");
    }
    auto target = std::make_shared<std::vector<float>>(std::move(target_points));
    auto assignment = std::make_shared<std::vector<int>>();
    auto n = make_node({1}, {pred_points.shared_node()});
    n->mut_data()[0] =
        kernels::emd<float>(pred_points.data(), target->data(), n_pts, assignment.get());
    Node* raw = n.get();
    Node* pp = pred_points.node();
    n->backprop = [raw, pp, target, assignment, n_pts] {
        if (!pp->requires_grad) return;
        pp->ensure_grad();
        // Gradient under the frozen optimal assignment from the forward pass.
        std::vector<float> ga(static_cast<size_t>(n_pts) * 3, 0.0f);
        kernels::emd_grad_fixed_assignment<float>(pp->data(), target->data(), n_pts,
                                                  *assignment, ga.data(), nullptr);
        const float g = raw->grad[0];
        for (size_t i = 0; i < ga.size(); ++i) pp->grad[i] += g * ga[i];
    };
    return Tensor(std::move(n));
}

Tensor pose_loss(const Tensor& q, const Tensor& t, std::vector<float> gt_points,
                 std::array<float, 4> q_gt, std::array<float, 3> t_gt) {
    if (q.shape() != Shape{4} || t.shape() != Shape{3} || gt_points.size() % 3 != 0) {
        throw std::invalid_argument("pose_loss: bad input shapes");
    }
    const int n_pts = static_cast<int>(gt_points.size() / 3);
    auto pts = std::make_shared<std::vector<float>>(std::move(gt_points));
    auto n = make_node({1}, {q.shared_node(), t.shared_node()});
    n->mut_data()[0] = kernels::per_point_l2<float>(pts->data(), n_pts, q.data(), t.data(),
                                                    q_gt.data(), t_gt.data());
    Node* raw = n.get();
    Node* pq = q.node();
    Node* pt = t.node();
    n->backprop = [raw, pq, pt, pts, q_gt, t_gt, n_pts] {
        float gq[4], gt3[3];
        kernels::per_point_l2<float>(pts->data(), n_pts, pq->data(), pt->data(), q_gt.data(),
                                     t_gt.data(), gq, gt3);
        const float g = raw->grad[0];
        if (pq->requires_grad) {
            pq->ensure_grad();
            for (int i = 0; i < 4; ++i) pq->grad[i] += g * gq[i];
        }
        if (pt->requires_grad) {
            pt->ensure_grad();
            for (int i = 0; i < 3; ++i) pt->grad[i] += g * gt3[i];
        }
    };
    return Tensor(std::move(n));
}

Tensor kl_loss(const Tensor& mu, const Tensor& logvar) {
    if (mu.shape() != logvar.shape() || mu.shape().size() != 1) {
        throw std::invalid_argument("kl_loss: mu/logvar must be matching vectors");
    }
    const int d = mu.shape()[0];
    auto n = make_node({1}, {mu.shared_node(), logvar.shared_node()});
    n->mut_data()[0] = kernels::kl_standard_normal<float>(mu.data(), logvar.data(), d);
    Node* raw = n.get();
    Node* pm = mu.node();
    Node* pl = logvar.node();
    n->backprop = [raw, pm, pl, d] {
        std::vector<float> gm(d), gl(d);
        kernels::kl_standard_normal<float>(pm->data(), pl->data(), d, gm.data(), gl.data());
        const float g = raw->grad[0];
        if (pm->requires_grad) {
            pm->ensure_grad();
            for (int i = 0; i < d; ++i) pm->grad[i] += g * gm[i];
        }
        if (pl->requires_grad) {
            pl->ensure_grad();
            for (int i = 0; i < d; ++i) pl->grad[i] += g * gl[i];
        }
    };
    return Tensor(std::move(n));
}

} // namespace glissando::ad
