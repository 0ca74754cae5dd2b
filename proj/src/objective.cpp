#include "slidekit/objective.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace slidekit {

namespace {

// normalized 2-D Gaussian window, computed and applied in double
std::vector<double> gaussian_window2d(int size, double sigma) {
    std::vector<double> w1(static_cast<size_t>(size));
    const double c = (size - 1) / 2.0;
    double total = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - c;
        w1[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += w1[static_cast<size_t>(i)];
    }
    for (double& v : w1) v /= total;
    std::vector<double> w2(static_cast<size_t>(size) * size);
    for (int i = 0; i < size; ++i) {
        for (int j = 0; j < size; ++j) {
            w2[static_cast<size_t>(i) * size + j] = w1[static_cast<size_t>(i)] * w1[static_cast<size_t>(j)];
        }
    }
    return w2;
}

// per-window statistics saved for the backward pass
struct WindowStats {
    double mu_x, mu_y, var_x, var_y, cov;
};

}  // namespace

void validate(const SsimConfig& cfg) {
    if (cfg.window_size < 3 || cfg.window_size % 2 == 0) {
        throw DataError("ssim: window_size must be odd and >= 3");
    }
    if (!(cfg.k1 > 0) || !(cfg.k2 > 0)) {
        throw DataError("ssim: k1 and k2 must be positive");
    }
    if (!(cfg.dynamic_range > 0)) {
        throw DataError("ssim: dynamic_range must be positive");
    }
    if (!(cfg.window_sigma > 0)) {
        throw DataError("ssim: window_sigma must be positive");
    }
}

// Fused operator: Gaussian-windowed means/variances/covariance over the
// valid region, all intermediate arithmetic in double so zero-variance
// inputs reproduce the closed form to full float precision. The backward
// pass applies the analytic SSIM derivative; the finite-difference suite
// checks it independently.
SsimOutput ssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg) {
    validate(cfg);
    if (x.shape() != y.shape() || x.shape().size() != 3) {
        throw DataError("ssim: inputs must be [C,H,W] with equal shapes");
    }
    const int h = x.dim(1), w = x.dim(2);
    const int k = cfg.window_size;
    if (h < k || w < k) {
        throw DataError("ssim: window larger than image");
    }
    const int used_c = cfg.average_channels ? x.dim(0) : 1;
    const int hv = h - k + 1, wv = w - k + 1;
    const size_t n_windows = static_cast<size_t>(used_c) * hv * wv;

    const std::vector<double> win = gaussian_window2d(k, static_cast<double>(cfg.window_sigma));
    const double c1 = double(cfg.k1) * cfg.dynamic_range * cfg.k1 * cfg.dynamic_range;
    const double c2 = double(cfg.k2) * cfg.dynamic_range * cfg.k2 * cfg.dynamic_range;

    const auto& xv = x.values();
    const auto& yv = y.values();
    auto stats = std::make_shared<std::vector<WindowStats>>(n_windows);
    std::vector<real> map_valid(n_windows);
    double total = 0.0;

    for (int c = 0; c < used_c; ++c) {
        const real* xp = &xv[static_cast<size_t>(c) * h * w];
        const real* yp = &yv[static_cast<size_t>(c) * h * w];
        for (int oy = 0; oy < hv; ++oy) {
            for (int ox = 0; ox < wv; ++ox) {
                double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = 0; i < k; ++i) {
                    const real* xrow = xp + static_cast<size_t>(oy + i) * w + ox;
                    const real* yrow = yp + static_cast<size_t>(oy + i) * w + ox;
                    const double* wrow = &win[static_cast<size_t>(i) * k];
                    for (int j = 0; j < k; ++j) {
                        const double wx = wrow[j] * xrow[j];
                        const double wy = wrow[j] * yrow[j];
                        mx += wx;
                        my += wy;
                        sxx += wx * xrow[j];
                        syy += wy * yrow[j];
                        sxy += wx * yrow[j];
                    }
                }
                WindowStats st;
                st.mu_x = mx;
                st.mu_y = my;
                st.var_x = sxx - mx * mx;
                st.var_y = syy - my * my;
                st.cov = sxy - mx * my;
                const double a1 = 2.0 * mx * my + c1;
                const double a2 = 2.0 * st.cov + c2;
                const double b1 = mx * mx + my * my + c1;
                const double b2 = st.var_x + st.var_y + c2;
                const double s = (a1 * a2) / (b1 * b2);
                const size_t idx = (static_cast<size_t>(c) * hv + oy) * wv + ox;
                (*stats)[idx] = st;
                map_valid[idx] = static_cast<real>(s);
                total += s;
            }
        }
    }
    const double mean_value = total / static_cast<double>(n_windows);

    auto backprop = [used_c, h, w, hv, wv, k, win, c1, c2, stats](detail::TensorNode& self) {
        detail::TensorNode& nx = *self.parents[0];
        detail::TensorNode& ny = *self.parents[1];
        const bool need_x = nx.tracked();
        const bool need_y = ny.tracked();
        if (!need_x && !need_y) return;
        const double g = static_cast<double>(self.grad[0]) / static_cast<double>(stats->size());

        std::vector<double> gx(need_x ? static_cast<size_t>(used_c) * h * w : 0, 0.0);
        std::vector<double> gy(need_y ? static_cast<size_t>(used_c) * h * w : 0, 0.0);
        for (int c = 0; c < used_c; ++c) {
            const real* xp = &nx.value[static_cast<size_t>(c) * h * w];
            const real* yp = &ny.value[static_cast<size_t>(c) * h * w];
            for (int oy = 0; oy < hv; ++oy) {
                for (int ox = 0; ox < wv; ++ox) {
                    const WindowStats& st = (*stats)[(static_cast<size_t>(c) * hv + oy) * wv + ox];
                    const double a1 = 2.0 * st.mu_x * st.mu_y + c1;
                    const double a2 = 2.0 * st.cov + c2;
                    const double b1 = st.mu_x * st.mu_x + st.mu_y * st.mu_y + c1;
                    const double b2 = st.var_x + st.var_y + c2;
                    const double s = (a1 * a2) / (b1 * b2);
                    const double scale = 2.0 * g / (b1 * b2);
                    for (int i = 0; i < k; ++i) {
                        const size_t row = static_cast<size_t>(c) * h * w +
                                           static_cast<size_t>(oy + i) * w + ox;
                        const double* wrow = &win[static_cast<size_t>(i) * k];
                        for (int j = 0; j < k; ++j) {
                            const double wk = wrow[j];
                            const double xk = xp[static_cast<size_t>(oy + i) * w + ox + j];
                            const double yk = yp[static_cast<size_t>(oy + i) * w + ox + j];
                            if (need_x) {
                                gx[row + j] += wk * scale *
                                               (st.mu_y * a2 + a1 * (yk - st.mu_y) -
                                                s * (st.mu_x * b2 + b1 * (xk - st.mu_x)));
                            }
                            if (need_y) {
                                gy[row + j] += wk * scale *
                                               (st.mu_x * a2 + a1 * (xk - st.mu_x) -
                                                s * (st.mu_y * b2 + b1 * (yk - st.mu_y)));
                            }
                        }
                    }
                }
            }
        }
        for (size_t i = 0; i < gx.size(); ++i) {
            nx.grad[i] += static_cast<real>(gx[i]);
        }
        for (size_t i = 0; i < gy.size(); ++i) {
            ny.grad[i] += static_cast<real>(gy[i]);
        }
    };

    SsimOutput out;
    out.mean = detail::make_op({1}, {static_cast<real>(mean_value)}, {x, y}, backprop);

    // pad the per-pixel map back to input size by edge replication
    const int off = (k - 1) / 2;
    std::vector<real> padded(static_cast<size_t>(used_c) * h * w);
    for (int c = 0; c < used_c; ++c) {
        for (int yy = 0; yy < h; ++yy) {
            const int vy = std::clamp(yy - off, 0, hv - 1);
            const real* src = &map_valid[(static_cast<size_t>(c) * hv + vy) * wv];
            real* dst = &padded[(static_cast<size_t>(c) * h + yy) * w];
            for (int xx = 0; xx < w; ++xx) {
                dst[xx] = src[std::clamp(xx - off, 0, wv - 1)];
            }
        }
    }
    out.map = Tensor::from_values({used_c, h, w}, std::move(padded));
    return out;
}

Tensor ssim_loss(const Tensor& x, const Tensor& y, const SsimConfig& cfg) {
    return add_scalar(mul_scalar(ssim(x, y, cfg).mean, real(-1)), real(1));
}

real resolve_dynamic_range(const std::vector<Tensor>& tensors) {
    real lo = 0, hi = 0;
    bool first = true;
    for (const Tensor& t : tensors) {
        for (real v : t.values()) {
            if (first) {
                lo = hi = v;
                first = false;
            } else {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    return std::max(hi - lo, real(1e-3));
}

Tensor bce(const Tensor& prob, real label) {
    if (prob.size() != 1) {
        throw DataError("bce: probability must be a scalar tensor");
    }
    constexpr real kLo = real(1e-7);
    const real kHi = real(1) - kLo;
    const real raw = prob.values()[0];
    const real p = std::clamp(raw, kLo, kHi);
    const real loss = -(label * std::log(p) + (real(1) - label) * std::log(real(1) - p));

    auto backprop = [label, p, raw, kLo, kHi](detail::TensorNode& self) {
        detail::TensorNode& n = *self.parents[0];
        if (!n.tracked()) return;
        if (raw < kLo || raw > kHi) return;  // clamped: flat
        n.grad[0] += self.grad[0] * (p - label) / (p * (real(1) - p));
    };
    return detail::make_op({1}, {loss}, {prob}, backprop);
}

Tensor pixel_cross_entropy(const Tensor& logits, const Mask& mask) {
    if (logits.shape().size() != 3 || logits.dim(0) != 2) {
        throw DataError("pixel_cross_entropy: logits must be [2,H,W]");
    }
    const int h = logits.dim(1), w = logits.dim(2);
    if (mask.height != h || mask.width != w) {
        throw DataError("pixel_cross_entropy: mask dims mismatch");
    }
    const size_t plane = static_cast<size_t>(h) * w;
    const auto& lv = logits.values();

    double total = 0.0;
    for (size_t i = 0; i < plane; ++i) {
        const real l0 = lv[i], l1 = lv[plane + i];
        const real m = std::max(l0, l1);
        const real lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
        total += lse - (mask.data[i] ? l1 : l0);
    }
    const real loss = static_cast<real>(total / static_cast<double>(plane));

    std::vector<uint8_t> ids(mask.data);
    auto backprop = [plane, ids](detail::TensorNode& self) {
        detail::TensorNode& n = *self.parents[0];
        if (!n.tracked()) return;
        const real g = self.grad[0] / static_cast<real>(plane);
        for (size_t i = 0; i < plane; ++i) {
            const real l0 = n.value[i], l1 = n.value[plane + i];
            const real m = std::max(l0, l1);
            const real e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
            const real p1 = e1 / (e0 + e1);
            const real t1 = ids[i] ? real(1) : real(0);
            n.grad[plane + i] += g * (p1 - t1);
            n.grad[i] += g * ((real(1) - p1) - (real(1) - t1));
        }
    };
    return detail::make_op({1}, {loss}, {logits}, backprop);
}

}  // namespace slidekit
