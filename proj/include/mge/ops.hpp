#pragma once

#include <utility>
#include <vector>

#include "mge/tape.hpp"
#include "mge/tensor.hpp"

namespace mge::ops {

/// True when `t` participates in gradient recording on the active tape.
bool is_tracked(const Tensor& t);

// ----- elementwise -----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor abs(const Tensor& x);

// ----- reductions -----
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
/// x viewed as [groups x group_size x cols]; elementwise max over the middle
/// axis. Ties route the gradient to the lowest index.
Tensor max_over_groups(const Tensor& x, int64_t groups, int64_t group_size, int64_t cols);

// ----- linear algebra -----
Tensor matmul(const Tensor& a, const Tensor& b);        // [MxK]x[KxN]
Tensor matmul_nt(const Tensor& a, const Tensor& b);     // [NxC]x[MxC]^T -> [NxM]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x[NxCin] w[CinxCout] b[Cout]

// ----- convolution -----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding);

// ----- layout -----
Tensor reshape(const Tensor& x, std::vector<int64_t> shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor concat_cols(const std::vector<Tensor>& parts);   // rank-2, axis 1
Tensor concat_rows(const std::vector<Tensor>& parts);   // rank-2, axis 0
Tensor slice_cols(const Tensor& x, int64_t c0, int64_t c1);
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& idx);

/// Space-to-depth: [B,C,H,W] -> [B,C*r*r,H/r,W/r]. Output channel
/// c*r*r + dy*r + dx holds input pixel (h*r+dy, w*r+dx).
Tensor pixel_unshuffle(const Tensor& x, int r);
/// Depth-to-space inverse of pixel_unshuffle; bit-exact round trip.
Tensor pixel_shuffle(const Tensor& x, int r);

// ----- similarity / selection (graph plumbing) -----
/// y_i = x_i / max(||x_i||, eps), rows of a [NxC] matrix.
Tensor row_normalize(const Tensor& x, double eps);
/// s[i,j] = <a_i,b_j> / (max(||a_i||,eps) * max(||b_j||,eps)); differentiable.
Tensor cosine_similarity_rows(const Tensor& a, const Tensor& b, double eps = 1e-8);
/// Indices of the k largest scores, descending score, ties by ascending index.
std::vector<std::pair<int64_t, double>> topk_desc(const std::vector<double>& scores, int64_t k);

}  // namespace mge::ops
