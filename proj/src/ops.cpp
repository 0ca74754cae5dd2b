#include "slidekit/ops.hpp"

#include <cmath>
#include <string>

namespace slidekit {

using detail::TensorNode;

namespace detail {

Tensor make_op(std::vector<int> shape, std::vector<real> value, std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backprop) {
    auto node = make_node(std::move(shape), std::move(value));
    bool track = grad_enabled();
    if (track) {
        bool any = false;
        for (const auto& t : inputs) {
            any = any || t.tracked();
        }
        track = any;
    }
    if (track) {
        node->parents.reserve(inputs.size());
        for (const auto& t : inputs) {
            node->parents.push_back(t.node());
        }
        node->backprop = std::move(backprop);
    }
    return Tensor::wrap(node);
}

}  // namespace detail

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) {
        throw DataError(msg);
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shape mismatch");
}

// output index range [lo, hi) for which o*stride - padding + tap*dilation
// lands inside [0, n); keeps bounds checks out of the convolution inner loops
void tap_range(int n_out, int n_in, int stride, int padding, int tap_offset, int& lo, int& hi) {
    const int base = tap_offset - padding;
    // o*stride + base >= 0  ->  o >= ceil(-base/stride)
    lo = base >= 0 ? 0 : (-base + stride - 1) / stride;
    // o*stride + base <= n_in-1  ->  o <= floor((n_in-1-base)/stride)
    hi = std::min(n_out, base > n_in - 1 ? 0 : (n_in - 1 - base) / stride + 1);
    lo = std::min(lo, hi);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int dilation, int padding) {
    require(input.shape().size() == 3, "conv2d: input must be [C,H,W]");
    require(kernel.shape().size() == 4, "conv2d: kernel must be [Cout,Cin,k,k]");
    require(bias.shape().size() == 1, "conv2d: bias must be [Cout]");
    require(stride >= 1 && dilation >= 1 && padding >= 0, "conv2d: bad stride/dilation/padding");

    const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int cout = kernel.dim(0), k = kernel.dim(2);
    require(kernel.dim(1) == cin, "conv2d: incompatible channel counts");
    require(kernel.dim(3) == k, "conv2d: kernel must be square");
    require(bias.dim(0) == cout, "conv2d: bias size mismatch");

    const int ho = (h + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
    const int wo = (w + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
    require(h + 2 * padding >= dilation * (k - 1) + 1 && ho >= 1 && wo >= 1,
            "conv2d: non-positive output size");

    const auto& in = input.values();
    const auto& kv = kernel.values();
    const auto& bv = bias.values();
    std::vector<real> out(static_cast<size_t>(cout) * ho * wo);

    for (int oc = 0; oc < cout; ++oc) {
        real* op_ = &out[static_cast<size_t>(oc) * ho * wo];
        const real b = bv[oc];
        for (int i = 0; i < ho * wo; ++i) {
            op_[i] = b;
        }
        for (int ic = 0; ic < cin; ++ic) {
            const real* ip = &in[static_cast<size_t>(ic) * h * w];
            const real* kp = &kv[(static_cast<size_t>(oc) * cin + ic) * k * k];
            for (int kh = 0; kh < k; ++kh) {
                int oh_lo, oh_hi;
                tap_range(ho, h, stride, padding, kh * dilation, oh_lo, oh_hi);
                for (int kw = 0; kw < k; ++kw) {
                    const real kval = kp[kh * k + kw];
                    if (kval == real(0)) continue;
                    int ow_lo, ow_hi;
                    tap_range(wo, w, stride, padding, kw * dilation, ow_lo, ow_hi);
                    const int off = kw * dilation - padding;
                    for (int oh = oh_lo; oh < oh_hi; ++oh) {
                        const int ih = oh * stride - padding + kh * dilation;
                        const real* irow = ip + static_cast<size_t>(ih) * w;
                        real* orow = op_ + static_cast<size_t>(oh) * wo;
                        if (stride == 1) {
                            for (int ow = ow_lo; ow < ow_hi; ++ow) {
                                orow[ow] += kval * irow[ow + off];
                            }
                        } else {
                            for (int ow = ow_lo; ow < ow_hi; ++ow) {
                                orow[ow] += kval * irow[ow * stride + off];
                            }
                        }
                    }
                }
            }
        }
    }

    auto backprop = [cin, h, w, cout, k, ho, wo, stride, dilation, padding](TensorNode& self) {
        TensorNode& nin = *self.parents[0];
        TensorNode& nker = *self.parents[1];
        TensorNode& nbias = *self.parents[2];
        const auto& g = self.grad;
        const bool need_in = nin.tracked();
        const bool need_ker = nker.tracked();

        if (nbias.tracked()) {
            for (int oc = 0; oc < cout; ++oc) {
                const real* gp = &g[static_cast<size_t>(oc) * ho * wo];
                real acc = 0;
                for (int i = 0; i < ho * wo; ++i) acc += gp[i];
                nbias.grad[oc] += acc;
            }
        }
        if (!need_in && !need_ker) return;

        for (int oc = 0; oc < cout; ++oc) {
            const real* gp = &g[static_cast<size_t>(oc) * ho * wo];
            for (int ic = 0; ic < cin; ++ic) {
                const real* ip = &nin.value[static_cast<size_t>(ic) * h * w];
                real* gip = need_in ? &nin.grad[static_cast<size_t>(ic) * h * w] : nullptr;
                const size_t kbase = (static_cast<size_t>(oc) * cin + ic) * k * k;
                for (int kh = 0; kh < k; ++kh) {
                    int oh_lo, oh_hi;
                    tap_range(ho, h, stride, padding, kh * dilation, oh_lo, oh_hi);
                    for (int kw = 0; kw < k; ++kw) {
                        const real kval = nker.value[kbase + kh * k + kw];
                        int ow_lo, ow_hi;
                        tap_range(wo, w, stride, padding, kw * dilation, ow_lo, ow_hi);
                        const int off = kw * dilation - padding;
                        real gw_acc = 0;
                        for (int oh = oh_lo; oh < oh_hi; ++oh) {
                            const int ih = oh * stride - padding + kh * dilation;
                            const real* grow = gp + static_cast<size_t>(oh) * wo;
                            const real* irow = ip + static_cast<size_t>(ih) * w;
                            real* girow = need_in ? gip + static_cast<size_t>(ih) * w : nullptr;
                            if (need_ker && need_in && stride == 1) {
                                for (int ow = ow_lo; ow < ow_hi; ++ow) {
                                    gw_acc += grow[ow] * irow[ow + off];
                                    girow[ow + off] += grow[ow] * kval;
                                }
                            } else {
                                for (int ow = ow_lo; ow < ow_hi; ++ow) {
                                    const int iw = ow * stride + off;
                                    if (need_ker) gw_acc += grow[ow] * irow[iw];
                                    if (need_in) girow[iw] += grow[ow] * kval;
                                }
                            }
                        }
                        if (need_ker) nker.grad[kbase + kh * k + kw] += gw_acc;
                    }
                }
            }
        }
    };

    return detail::make_op({cout, ho, wo}, std::move(out), {input, kernel, bias}, backprop);
}

Tensor maxpool2d(const Tensor& input, int window) {
    require(input.shape().size() == 3, "maxpool2d: input must be [C,H,W]");
    require(window >= 1, "maxpool2d: bad window");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    require(h % window == 0 && w % window == 0, "maxpool2d: dims not divisible by window");
    const int ho = h / window, wo = w / window;

    const auto& in = input.values();
    std::vector<real> out(static_cast<size_t>(c) * ho * wo);
    std::vector<size_t> argmax(out.size());
    for (int ch = 0; ch < c; ++ch) {
        const real* ip = &in[static_cast<size_t>(ch) * h * w];
        for (int oh = 0; oh < ho; ++oh) {
            for (int ow = 0; ow < wo; ++ow) {
                size_t best_idx = (static_cast<size_t>(oh) * window) * w + ow * window;
                real best = ip[best_idx];
                for (int i = 0; i < window; ++i) {
                    for (int j = 0; j < window; ++j) {
                        const size_t idx = (static_cast<size_t>(oh) * window + i) * w + ow * window + j;
                        if (ip[idx] > best) {  // first occurrence wins on ties
                            best = ip[idx];
                            best_idx = idx;
                        }
                    }
                }
                const size_t o = (static_cast<size_t>(ch) * ho + oh) * wo + ow;
                out[o] = best;
                argmax[o] = static_cast<size_t>(ch) * h * w + best_idx;
            }
        }
    }

    auto backprop = [argmax](TensorNode& self) {
        TensorNode& nin = *self.parents[0];
        if (!nin.tracked()) return;
        for (size_t o = 0; o < self.grad.size(); ++o) {
            nin.grad[argmax[o]] += self.grad[o];
        }
    };

    return detail::make_op({c, ho, wo}, std::move(out), {input}, backprop);
}

Tensor upsample_nearest(const Tensor& input, int factor) {
    require(input.shape().size() == 3, "upsample_nearest: input must be [C,H,W]");
    require(factor >= 1, "upsample_nearest: bad factor");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int ho = h * factor, wo = w * factor;

    const auto& in = input.values();
    std::vector<real> out(static_cast<size_t>(c) * ho * wo);
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < ho; ++y) {
            const real* irow = &in[(static_cast<size_t>(ch) * h + y / factor) * w];
            real* orow = &out[(static_cast<size_t>(ch) * ho + y) * wo];
            for (int x = 0; x < wo; ++x) {
                orow[x] = irow[x / factor];
            }
        }
    }

    auto backprop = [c, h, w, ho, wo, factor](TensorNode& self) {
        TensorNode& nin = *self.parents[0];
        if (!nin.tracked()) return;
        for (int ch = 0; ch < c; ++ch) {
            for (int y = 0; y < ho; ++y) {
                const real* grow = &self.grad[(static_cast<size_t>(ch) * ho + y) * wo];
                real* girow = &nin.grad[(static_cast<size_t>(ch) * h + y / factor) * w];
                for (int x = 0; x < wo; ++x) {
                    girow[x / factor] += grow[x];
                }
            }
        }
    };

    return detail::make_op({c, ho, wo}, std::move(out), {input}, backprop);
}

Tensor relu(const Tensor& t) {
    std::vector<real> out(t.values());
    for (real& v : out) {
        if (v < real(0)) v = real(0);
    }
    auto backprop = [](TensorNode& self) {
        TensorNode& nin = *self.parents[0];
        if (!nin.tracked()) return;
        for (size_t i = 0; i < self.grad.size(); ++i) {
            if (nin.value[i] > real(0)) {  // relu'(0) = 0
                nin.grad[i] += self.grad[i];
            }
        }
    };
    return detail::make_op(t.shape(), std::move(out), {t}, backprop);
}

Tensor sigmoid(const Tensor& t) {
    std::vector<real> out(t.size());
    const auto& in = t.values();
    for (size_t i = 0; i < in.size(); ++i) {
        out[i] = real(1) / (real(1) + std::exp(-in[i]));
    }
    auto backprop = [](TensorNode& self) {
        TensorNode& nin = *self.parents[0];
        if (!nin.tracked()) return;
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const real o = self.value[i];
            nin.grad[i] += self.grad[i] * o * (real(1) - o);
        }
    };
    return detail::make_op(t.shape(), std::move(out), {t}, backprop);
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<real> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto backprop = [](TensorNode& self) {
        for (int p = 0; p < 2; ++p) {
            TensorNode& n = *self.parents[p];
            if (!n.tracked()) continue;
            for (size_t i = 0; i < self.grad.size(); ++i) n.grad[i] += self.grad[i];
        }
    };
    return detail::make_op(a.shape(), std::move(out), {a, b}, backprop);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<real> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    auto backprop = [](TensorNode& self) {
        TensorNode& na = *self.parents[0];
        TensorNode& nb = *self.parents[1];
        if (na.tracked()) {
            for (size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i];
        }
        if (nb.tracked()) {
            for (size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] -= self.grad[i];
        }
    };
    return detail::make_op(a.shape(), std::move(out), {a, b}, backprop);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<real> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    auto backprop = [](TensorNode& self) {
        TensorNode& na = *self.parents[0];
        TensorNode& nb = *self.parents[1];
        if (na.tracked()) {
            for (size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] * nb.value[i];
        }
        if (nb.tracked()) {
            for (size_t i = 0; i < self.grad.size(); ++i) nb.grad[i] += self.grad[i] * na.value[i];
        }
    };
    return detail::make_op(a.shape(), std::move(out), {a, b}, backprop);
}

Tensor divide(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "divide");
    std::vector<real> out(a.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] / b.values()[i];
    auto backprop = [](TensorNode& self) {
        TensorNode& na = *self.parents[0];
        TensorNode& nb = *self.parents[1];
        if (na.tracked()) {
            for (size_t i = 0; i < self.grad.size(); ++i) na.grad[i] += self.grad[i] / nb.value[i];
        }
        if (nb.tracked()) {
            for (size_t i = 0; i < self.grad.size(); ++i) {
                nb.grad[i] -= self.grad[i] * self.value[i] / nb.value[i];
            }
        }
    };
    return detail::make_op(a.shape(), std::move(out), {a, b}, backprop);
}

Tensor add_scalar(const Tensor& t, real c) {
    std::vector<real> out(t.values());
    for (real& v : out) v += c;
    auto backprop = [](TensorNode& self) {
        TensorNode& n = *self.parents[0];
        if (!n.tracked()) return;
        for (size_t i = 0; i < self.grad.size(); ++i) n.grad[i] += self.grad[i];
    };
    return detail::make_op(t.shape(), std::move(out), {t}, backprop);
}

Tensor mul_scalar(const Tensor& t, real c) {
    std::vector<real> out(t.values());
    for (real& v : out) v *= c;
    auto backprop = [c](TensorNode& self) {
        TensorNode& n = *self.parents[0];
        if (!n.tracked()) return;
        for (size_t i = 0; i < self.grad.size(); ++i) n.grad[i] += self.grad[i] * c;
    };
    return detail::make_op(t.shape(), std::move(out), {t}, backprop);
}

Tensor sum(const Tensor& t) {
    double acc = 0;
    for (real v : t.values()) acc += v;
    auto backprop = [](TensorNode& self) {
        TensorNode& n = *self.parents[0];
        if (!n.tracked()) return;
        const real g = self.grad[0];
        for (real& gv : n.grad) gv += g;
    };
    return detail::make_op({1}, {static_cast<real>(acc)}, {t}, backprop);
}

Tensor mean(const Tensor& t) {
    double acc = 0;
    for (real v : t.values()) acc += v;
    const real inv_n = real(1) / static_cast<real>(t.size());
    auto backprop = [inv_n](TensorNode& self) {
        TensorNode& n = *self.parents[0];
        if (!n.tracked()) return;
        const real g = self.grad[0] * inv_n;
        for (real& gv : n.grad) gv += g;
    };
    return detail::make_op({1}, {static_cast<real>(acc / static_cast<double>(t.size()))}, {t},
                           backprop);
}

Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    require(input.shape().size() == 1, "dense: input must be [n]");
    require(weight.shape().size() == 2, "dense: weight must be [m,n]");
    require(bias.shape().size() == 1, "dense: bias must be [m]");
    const int n = input.dim(0), m = weight.dim(0);
    require(weight.dim(1) == n && bias.dim(0) == m, "dense: shape mismatch");

    std::vector<real> out(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        const real* wr = &weight.values()[static_cast<size_t>(i) * n];
        real acc = bias.values()[i];
        for (int j = 0; j < n; ++j) acc += wr[j] * input.values()[j];
        out[i] = acc;
    }

    auto backprop = [m, n](TensorNode& self) {
        TensorNode& nx = *self.parents[0];
        TensorNode& nw = *self.parents[1];
        TensorNode& nb = *self.parents[2];
        for (int i = 0; i < m; ++i) {
            const real g = self.grad[i];
            if (nb.tracked()) nb.grad[i] += g;
            const real* wr = &nw.value[static_cast<size_t>(i) * n];
            real* gwr = nw.tracked() ? &nw.grad[static_cast<size_t>(i) * n] : nullptr;
            for (int j = 0; j < n; ++j) {
                if (nx.tracked()) nx.grad[j] += g * wr[j];
                if (gwr) gwr[j] += g * nx.value[j];
            }
        }
    };

    return detail::make_op({m}, std::move(out), {input, weight, bias}, backprop);
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require(a.shape().size() == 3 && b.shape().size() == 3, "concat_channels: inputs must be [C,H,W]");
    require(a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2), "concat_channels: spatial dims mismatch");
    const int ca = a.dim(0), cb = b.dim(0), h = a.dim(1), w = a.dim(2);

    std::vector<real> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());

    auto backprop = [](TensorNode& self) {
        TensorNode& na = *self.parents[0];
        TensorNode& nb = *self.parents[1];
        const size_t na_size = na.value.size();
        if (na.tracked()) {
            for (size_t i = 0; i < na_size; ++i) na.grad[i] += self.grad[i];
        }
        if (nb.tracked()) {
            for (size_t i = 0; i < nb.value.size(); ++i) nb.grad[i] += self.grad[na_size + i];
        }
    };

    return detail::make_op({ca + cb, h, w}, std::move(out), {a, b}, backprop);
}

Tensor global_avg_pool(const Tensor& t) {
    require(t.shape().size() == 3, "global_avg_pool: input must be [C,H,W]");
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    const size_t plane = static_cast<size_t>(h) * w;
    std::vector<real> out(static_cast<size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        const real* p = &t.values()[ch * plane];
        for (size_t i = 0; i < plane; ++i) acc += p[i];
        out[ch] = static_cast<real>(acc / static_cast<double>(plane));
    }
    const real inv = real(1) / static_cast<real>(plane);
    auto backprop = [c, plane, inv](TensorNode& self) {
        TensorNode& n = *self.parents[0];
        if (!n.tracked()) return;
        for (int ch = 0; ch < c; ++ch) {
            const real g = self.grad[ch] * inv;
            real* gp = &n.grad[ch * plane];
            for (size_t i = 0; i < plane; ++i) gp[i] += g;
        }
    };
    return detail::make_op({c}, std::move(out), {t}, backprop);
}

real grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point, real epsilon) {
    Tensor x = point.clone();
    x.set_requires_grad(true);
    Tensor loss = f(x);
    if (loss.size() != 1) {
        throw DataError("grad_check: function must be scalar-valued");
    }
    if (!std::isfinite(static_cast<double>(loss.item()))) {
        throw NumericError("grad_check: non-finite evaluation at point");
    }
    backward(loss);
    const std::vector<real> analytic = x.grad();

    NoGradGuard no_grad;
    real max_err = 0;
    for (size_t i = 0; i < point.size(); ++i) {
        Tensor xp = point.clone();
        Tensor xm = point.clone();
        xp.mutable_values()[i] += epsilon;
        xm.mutable_values()[i] -= epsilon;
        const real fp = f(xp).item();
        const real fm = f(xm).item();
        if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm))) {
            throw NumericError("grad_check: non-finite evaluation at point +- epsilon");
        }
        const real numeric = (fp - fm) / (2 * epsilon);
        const real denom = std::max(real(1e-8), std::abs(analytic[i]) + std::abs(numeric));
        max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
    }
    return max_err;
}

}  // namespace slidekit
