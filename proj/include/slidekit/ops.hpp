#pragma once

#include <functional>
#include <vector>

#include "slidekit/tensor.hpp"

namespace slidekit {

namespace detail {
// Records an op node when taping is on and any input is tracked; otherwise
// returns a plain value tensor.
Tensor make_op(std::vector<int> shape, std::vector<real> value, std::vector<Tensor> inputs,
               std::function<void(TensorNode&)> backprop);
}  // namespace detail

// input [Cin,H,W], kernel [Cout,Cin,k,k], bias [Cout]; zero padding.
// H' = floor((H + 2*padding - dilation*(k-1) - 1)/stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride = 1,
              int dilation = 1, int padding = 0);

// Window must divide H and W; gradient routes to the first max per window.
Tensor maxpool2d(const Tensor& input, int window = 2);

Tensor upsample_nearest(const Tensor& input, int factor);

Tensor relu(const Tensor& t);
Tensor sigmoid(const Tensor& t);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& t, real c);
Tensor mul_scalar(const Tensor& t, real c);

Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);

// input [n], weight [m,n], bias [m] -> [m]
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor global_avg_pool(const Tensor& t);

// Max over coordinates of |analytic - central difference| /
// max(1e-8, |analytic| + |numeric|); f must be a pure scalar function.
real grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& point,
                real epsilon = real(1e-3));

}  // namespace slidekit
