#include "titleforge/attention.hpp"

#include <cmath>
#include <string>

#include "titleforge/error.hpp"

namespace titleforge {
namespace {

std::string shape_of(const torch::Tensor& t) {
    std::string s = "[";
    for (int64_t i = 0; i < t.dim(); ++i) {
        if (i) s += ", ";
        s += std::to_string(t.size(i));
    }
    return s + "]";
}

void require_matrix(const torch::Tensor& t, const char* name) {
    if (!t.defined() || t.dim() != 2) {
        throw InvalidInput(std::string(name) + " must be a matrix, got " + (t.defined() ? shape_of(t) : "undefined"));
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidInput("dimension mismatch: " + what);
}

}  // namespace

torch::Tensor attention_weights_reference(const torch::Tensor& q, const torch::Tensor& k) {
    require_matrix(q, "Q");
    require_matrix(k, "K");
    require(q.size(1) == k.size(1), "Q " + shape_of(q) + " vs K " + shape_of(k));
    require(q.size(1) > 0, "d_k must be positive");
    require(k.size(0) > 0, "K has no rows");
    auto scores = torch::matmul(q, k.t()) / std::sqrt(static_cast<double>(q.size(1)));
    return torch::softmax(scores, -1);
}

torch::Tensor attention_reference(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v) {
    require_matrix(v, "V");
    auto weights = attention_weights_reference(q, k);
    require(k.size(0) == v.size(0), "K " + shape_of(k) + " vs V " + shape_of(v));
    return torch::matmul(weights, v);
}

torch::Tensor multi_head_reference(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                   const MultiHeadProjections& projections) {
    require(!projections.heads.empty(), "no heads");
    require_matrix(projections.w_o, "W^O");
    std::vector<torch::Tensor> heads;
    int64_t concat_width = 0;
    for (const auto& h : projections.heads) {
        require_matrix(h.w_q, "W^Q");
        require_matrix(h.w_k, "W^K");
        require_matrix(h.w_v, "W^V");
        require(q.size(1) == h.w_q.size(0), "Q " + shape_of(q) + " vs W^Q " + shape_of(h.w_q));
        require(k.size(1) == h.w_k.size(0), "K " + shape_of(k) + " vs W^K " + shape_of(h.w_k));
        require(v.size(1) == h.w_v.size(0), "V " + shape_of(v) + " vs W^V " + shape_of(h.w_v));
        heads.push_back(attention_reference(torch::matmul(q, h.w_q), torch::matmul(k, h.w_k), torch::matmul(v, h.w_v)));
        concat_width += h.w_v.size(1);
    }
    require(concat_width == projections.w_o.size(0),
            "concatenated heads width " + std::to_string(concat_width) + " vs W^O " + shape_of(projections.w_o));
    return torch::matmul(torch::cat(heads, 1), projections.w_o);
}

}  // namespace titleforge
