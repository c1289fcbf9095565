#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "semformer/tensor.hpp"

namespace semformer::ad {

// Reverse-mode autodiff over Tensor. Each op builds a Node holding the
// forward value and a pull-style backward closure. Graphs are per-call
// (no global tape), so concurrent forward/backward passes on different
// graphs are safe.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    bool grad_ready = false;
    std::uint64_t id = 0;
    std::vector<Var> parents;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Tensor& g);
    const Tensor& grad_or_zero();  // zero tensor of value's shape if untouched
};

// Leaves.
Var leaf(Tensor value, bool requires_grad);
inline Var constant(Tensor value) { return leaf(std::move(value), false); }

// Elementwise / broadcast arithmetic.
Var add(const Var& a, const Var& b);                 // same shape
Var sub(const Var& a, const Var& b);                 // same shape
Var mul(const Var& a, const Var& b);                 // same shape
Var add_row_broadcast(const Var& a, const Var& b);   // a: (R,C), b: (C)
Var mul_col_broadcast(const Var& a, const Var& m);   // a: (R,C), m: (R,1) or (R)
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);

// Nonlinearities.
Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
Var log_op(const Var& a);
Var sqrt_op(const Var& a);   // sqrt(x + 1e-30), finite gradient at 0
Var square(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var reciprocal(const Var& a);

// Linear algebra / shape.
Var matmul(const Var& a, const Var& b);              // (R,K)x(K,C)
Var transpose(const Var& a);                         // 2-D
Var reshape(const Var& a, std::vector<std::int64_t> shape);
Var slice_rows(const Var& a, std::int64_t r0, std::int64_t r1);  // [r0, r1)
Var slice_cols(const Var& a, std::int64_t c0, std::int64_t c1);  // [c0, c1)
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

// Normalizations.
Var softmax_rows(const Var& a);
Var layer_norm(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-6);

// Reductions.
Var sum_all(const Var& a);        // -> scalar
Var mean_all(const Var& a);       // -> scalar
Var sum_rows(const Var& a);       // (R,C) -> (C), sum over rows
Var mean_rows(const Var& a);      // (R,C) -> (C)
Var max_rows(const Var& a);       // (R,C) -> (C), column max; grad to first argmax
// out(c,s) = max over rows c' != c of a(c',s); single row -> zeros.
Var rowwise_max_excluding(const Var& a);

// Spatial.
// a: (h,w) -> (H,W) bilinear, half-pixel centers (align_corners=false).
Var bilinear_upsample(const Var& a, std::int64_t out_h, std::int64_t out_w);
// img: (H*W, C) row-major pixels -> (n_patches, P*P*C), raster patch order.
Var extract_patches(const Var& img, std::int64_t h, std::int64_t w, std::int64_t patch);
// inverse of extract_patches: (n_patches, P*P*C) -> (H*W, C).
Var tile_patches(const Var& patches, std::int64_t h, std::int64_t w, std::int64_t patch);

// Scalar graph helpers (operate on shape-{1} Vars).
Var add_scalars(const std::vector<Var>& terms);
Var div_scalar(const Var& a, const Var& b, double eps = 0.0);  // a / (b + eps)
Var dot(const Var& a, const Var& b);  // flat dot product -> scalar

// Runs reverse pass from a scalar root. Gradients accumulate in every
// reachable node with requires_grad.
void backward(const Var& root);

}  // namespace semformer::ad
