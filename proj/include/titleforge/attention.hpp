#pragma once

#include <vector>

#include <torch/torch.h>

namespace titleforge {

// softmax(Q K^T / sqrt(d_k)) V for Q [n, d_k], K [m, d_k], V [m, d_v].
// Throws InvalidInput on mismatched or non-2-D shapes.
torch::Tensor attention_reference(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v);

// The softmax weights used by attention_reference, [n, m].
torch::Tensor attention_weights_reference(const torch::Tensor& q, const torch::Tensor& k);

struct HeadProjection {
    torch::Tensor w_q;  // [d_model, d_k]
    torch::Tensor w_k;  // [d_model, d_k]
    torch::Tensor w_v;  // [d_model, d_v]
};

struct MultiHeadProjections {
    std::vector<HeadProjection> heads;
    torch::Tensor w_o;  // [h * d_v, d_out]
};

// Concat(head_1..head_h) W^O with head_i = attention_reference(Q W_i^Q, K W_i^K, V W_i^V).
torch::Tensor multi_head_reference(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                   const MultiHeadProjections& projections);

}  // namespace titleforge
