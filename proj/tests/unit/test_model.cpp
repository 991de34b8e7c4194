#include "../support/doctest_torch.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "../support/tiny.hpp"
#include "titleforge/attention.hpp"
#include "titleforge/checkpoint.hpp"
#include "titleforge/error.hpp"
#include "titleforge/model.hpp"

using namespace titleforge;
using namespace titleforge::testing;

namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

auto f64 = torch::TensorOptions().dtype(torch::kDouble);

Mat to_mat(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kDouble).contiguous();
    Mat m(static_cast<std::size_t>(c.size(0)), Vec(static_cast<std::size_t>(c.size(1))));
    auto a = c.accessor<double, 2>();
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m[i].size(); ++j) m[i][j] = a[static_cast<long>(i)][static_cast<long>(j)];
    }
    return m;
}

Vec to_vec(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kDouble).contiguous();
    return Vec(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

// Scalar softmax over one row.
Vec softmax_row(const Vec& x) {
    double m = -1e300;
    for (double v : x) m = std::max(m, v);
    double z = 0;
    for (double v : x) z += std::exp(v - m);
    Vec out;
    for (double v : x) out.push_back(std::exp(v - m) / z);
    return out;
}

// Loop-based attention: the oracle for attention_reference.
Mat loop_attention(const Mat& q, const Mat& k, const Mat& v) {
    Mat out;
    double scale = 1.0 / std::sqrt(static_cast<double>(q[0].size()));
    for (const auto& qi : q) {
        Vec logits;
        for (const auto& kj : k) {
            double s = 0;
            for (std::size_t d = 0; d < qi.size(); ++d) s += qi[d] * kj[d];
            logits.push_back(s * scale);
        }
        auto w = softmax_row(logits);
        Vec o(v[0].size(), 0.0);
        for (std::size_t j = 0; j < v.size(); ++j) {
            for (std::size_t d = 0; d < o.size(); ++d) o[d] += w[j] * v[j][d];
        }
        out.push_back(o);
    }
    return out;
}

Mat matmul(const Mat& a, const Mat& b) {
    Mat out(a.size(), Vec(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t k = 0; k < b.size(); ++k) {
            for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
        }
    }
    return out;
}

void check_close(const torch::Tensor& t, const Mat& m, double tol) {
    auto a = to_mat(t);
    REQUIRE(a.size() == m.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].size() == m[i].size());
        for (std::size_t j = 0; j < a[i].size(); ++j) CHECK(std::abs(a[i][j] - m[i][j]) <= tol);
    }
}

// ---------------------------------------------------------------------------
// Scalar re-implementation of the encoder-decoder for the loss oracle.

struct ScalarModel {
    std::map<std::string, torch::Tensor> p;
    std::int64_t heads;

    Mat W(const std::string& name) const { return to_mat(p.at(name)); }
    Vec w(const std::string& name) const { return to_vec(p.at(name)); }

    static Vec linear(const Vec& x, const Mat& weight) {  // weight [out, in]
        Vec y(weight.size(), 0.0);
        for (std::size_t o = 0; o < weight.size(); ++o) {
            for (std::size_t i = 0; i < x.size(); ++i) y[o] += weight[o][i] * x[i];
        }
        return y;
    }
    static Vec rms(const Vec& x, const Vec& g) {
        double ms = 0;
        for (double v : x) ms += v * v;
        ms /= static_cast<double>(x.size());
        double r = 1.0 / std::sqrt(ms + 1e-6);
        Vec y;
        for (std::size_t i = 0; i < x.size(); ++i) y.push_back(x[i] * r * g[i]);
        return y;
    }
    static Vec add(Vec a, const Vec& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        return a;
    }

    Mat attention(const std::string& prefix, const Mat& xq, const Mat& xkv, bool causal) const {
        auto wq = W(prefix + ".w_q.weight"), wk = W(prefix + ".w_k.weight"), wv = W(prefix + ".w_v.weight"),
             wo = W(prefix + ".w_o.weight");
        std::size_t d = wq.size(), dk = d / static_cast<std::size_t>(heads);
        Mat q, k, v;
        for (const auto& x : xq) q.push_back(linear(x, wq));
        for (const auto& x : xkv) {
            k.push_back(linear(x, wk));
            v.push_back(linear(x, wv));
        }
        Mat out;
        for (std::size_t i = 0; i < xq.size(); ++i) {
            Vec concat;
            for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
                Vec logits;
                std::size_t keys = causal ? i + 1 : xkv.size();
                for (std::size_t j = 0; j < keys; ++j) {
                    double s = 0;
                    for (std::size_t c = h * dk; c < (h + 1) * dk; ++c) s += q[i][c] * k[j][c];
                    logits.push_back(s / std::sqrt(static_cast<double>(dk)));
                }
                auto a = softmax_row(logits);
                for (std::size_t c = h * dk; c < (h + 1) * dk; ++c) {
                    double acc = 0;
                    for (std::size_t j = 0; j < keys; ++j) acc += a[j] * v[j][c];
                    concat.push_back(acc);
                }
            }
            out.push_back(linear(concat, wo));
        }
        return out;
    }

    Vec ff(const std::string& prefix, const Vec& x) const {
        auto h = linear(x, W(prefix + ".wi.weight"));
        for (auto& v : h) v = std::max(0.0, v);
        return linear(h, W(prefix + ".wo.weight"));
    }

    // Summed NLL of `target` given encoder embeddings built from ids with soft rows substituted.
    double loss(const std::vector<TokenId>& ids, const std::map<std::size_t, std::size_t>& soft, const Mat& bank,
                const std::vector<TokenId>& target) const {
        auto E = W("embed.weight");
        auto Pe = W("encoder_positions.weight");
        auto Pd = W("decoder_positions.weight");
        Mat x;
        for (std::size_t t = 0; t < ids.size(); ++t) {
            auto it = soft.find(t);
            Vec e = it == soft.end() ? E[static_cast<std::size_t>(ids[t])] : bank[it->second];
            x.push_back(add(e, Pe[t]));
        }
        // Encoder layer.
        Mat h;
        for (const auto& r : x) h.push_back(rms(r, w("encoder_layers.0.norm_attn.weight")));
        auto att = attention("encoder_layers.0.attn", h, h, false);
        for (std::size_t t = 0; t < x.size(); ++t) x[t] = add(x[t], att[t]);
        for (auto& r : x) r = add(r, ff("encoder_layers.0.ff", rms(r, w("encoder_layers.0.norm_ff.weight"))));
        Mat memory;
        for (const auto& r : x) memory.push_back(rms(r, w("encoder_norm.weight")));

        // Decoder layer over <bos> + target[:-1].
        std::vector<TokenId> dec{Tokenizer::kBos};
        dec.insert(dec.end(), target.begin(), target.end() - 1);
        Mat y;
        for (std::size_t t = 0; t < dec.size(); ++t) y.push_back(add(E[static_cast<std::size_t>(dec[t])], Pd[t]));
        Mat hs;
        for (const auto& r : y) hs.push_back(rms(r, w("decoder_layers.0.norm_self.weight")));
        auto sa = attention("decoder_layers.0.self_attn", hs, hs, true);
        for (std::size_t t = 0; t < y.size(); ++t) y[t] = add(y[t], sa[t]);
        Mat hc;
        for (const auto& r : y) hc.push_back(rms(r, w("decoder_layers.0.norm_cross.weight")));
        auto ca = attention("decoder_layers.0.cross_attn", hc, memory, false);
        for (std::size_t t = 0; t < y.size(); ++t) y[t] = add(y[t], ca[t]);
        for (auto& r : y) r = add(r, ff("decoder_layers.0.ff", rms(r, w("decoder_layers.0.norm_ff.weight"))));

        double total = 0;
        double scale = 1.0 / std::sqrt(static_cast<double>(E[0].size()));
        for (std::size_t t = 0; t < y.size(); ++t) {
            auto hidden = rms(y[t], w("decoder_norm.weight"));
            Vec logits;
            for (const auto& e : E) {
                double s = 0;
                for (std::size_t c = 0; c < e.size(); ++c) s += hidden[c] * scale * e[c];
                logits.push_back(s);
            }
            // Step-by-step log-softmax.
            double m = -1e300;
            for (double l : logits) m = std::max(m, l);
            double z = 0;
            for (double l : logits) z += std::exp(l - m);
            total -= logits[static_cast<std::size_t>(target[t])] - m - std::log(z);
        }
        return total;
    }
};

ModelInput example_input(std::size_t soft_row = 0) {
    ModelInput in;
    in.token_ids = {100, Tokenizer::kSoft, 70, 80, Tokenizer::kSoft, Tokenizer::kEos};
    in.soft_positions = {{1, soft_row}, {4, 1}};
    in.attention_mask.assign(in.token_ids.size(), true);
    return in;
}

double loss_value(Seq2SeqModel& model, const SoftPromptBank& bank, const ModelInput& in, const std::vector<TokenId>& tgt) {
    torch::NoGradGuard g;
    return forward_with_prompts(model, bank, in, tgt).loss.item<double>();
}

std::string temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("titleforge_test_" + name);
    std::filesystem::remove_all(p);
    return p.string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Reference attention

TEST_CASE("attention: single key returns its value; identical keys average the values") {
    auto q = torch::tensor({{0.3, -1.2}}, f64);
    auto v = torch::tensor({{4.0, 5.0, 6.0}}, f64);
    check_close(attention_reference(q, q, v), {{4.0, 5.0, 6.0}}, 1e-15);

    auto k = torch::tensor({{1.0, 2.0}, {1.0, 2.0}}, f64);
    auto v2 = torch::tensor({{1.0, 0.0}, {3.0, 8.0}}, f64);
    check_close(attention_reference(q, k, v2), {{2.0, 4.0}}, 1e-15);
}

TEST_CASE("attention: random 2x2 case matches a hand-rolled softmax") {
    Mat q{{0.5, -0.25}, {1.5, 0.75}}, k{{-1.0, 2.0}, {0.25, 0.5}}, v{{1.0, -2.0}, {3.0, 0.5}};
    // Hand-rolled: scores s_ij = q_i . k_j / sqrt(2), weights exp(s)/sum exp(s).
    Mat expected;
    for (const auto& qi : q) {
        double s0 = (qi[0] * k[0][0] + qi[1] * k[0][1]) / std::sqrt(2.0);
        double s1 = (qi[0] * k[1][0] + qi[1] * k[1][1]) / std::sqrt(2.0);
        double w0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
        double w1 = 1.0 - w0;
        expected.push_back({w0 * v[0][0] + w1 * v[1][0], w0 * v[0][1] + w1 * v[1][1]});
    }
    auto t = [](const Mat& m) { return torch::tensor({m[0][0], m[0][1], m[1][0], m[1][1]}, f64).view({2, 2}); };
    check_close(attention_reference(t(q), t(k), t(v)), expected, 1e-14);
}

TEST_CASE("attention: softmax rows sum to one and are shift invariant") {
    torch::manual_seed(3);
    for (int i = 0; i < 200; ++i) {
        auto n = 1 + i % 5, m = 1 + (i * 7) % 6, dk = 1 + i % 4, dv = 1 + i % 3;
        auto q = torch::randn({n, dk}, f64) * 3;
        auto k = torch::randn({m, dk}, f64) * 3;
        auto v = torch::randn({m, dv}, f64);
        auto w = attention_weights_reference(q, k);
        CHECK((w.sum(1) - 1.0).abs().max().item<double>() <= 1e-9);
        // Shifting every key by u adds q_i . u to all logits of row i.
        auto u = torch::randn({1, dk}, f64) * 5;
        auto shifted = attention_reference(q, k + u, v);
        CHECK((shifted - attention_reference(q, k, v)).abs().max().item<double>() <= 1e-9);
        check_close(attention_reference(q, k, v), loop_attention(to_mat(q), to_mat(k), to_mat(v)), 1e-12);
    }
}

TEST_CASE("attention: dimension mismatches are errors") {
    auto a = torch::randn({2, 3}, f64);
    CHECK_THROWS_AS(attention_reference(a, torch::randn({2, 4}, f64), torch::randn({2, 3}, f64)), InvalidInput);
    CHECK_THROWS_AS(attention_reference(a, torch::randn({2, 3}, f64), torch::randn({3, 3}, f64)), InvalidInput);
    CHECK_THROWS_AS(attention_reference(torch::randn({3}, f64), a, a), InvalidInput);
    MultiHeadProjections p{{{torch::eye(3, f64), torch::eye(3, f64), torch::eye(3, f64)}}, torch::eye(4, f64)};
    CHECK_THROWS_AS(multi_head_reference(a, a, a, p), InvalidInput);
    p.w_o = torch::eye(3, f64);
    p.heads[0].w_k = torch::eye(2, f64);
    CHECK_THROWS_AS(multi_head_reference(a, a, a, p), InvalidInput);
}

TEST_CASE("multi-head: identity single head and block-identity output") {
    torch::manual_seed(5);
    auto q = torch::randn({3, 4}, f64), k = torch::randn({5, 4}, f64), v = torch::randn({5, 4}, f64);
    auto I = torch::eye(4, f64);
    MultiHeadProjections one{{{I, I, I}}, I};
    CHECK((multi_head_reference(q, k, v, one) - attention_reference(q, k, v)).abs().max().item<double>() <= 1e-14);

    std::vector<HeadProjection> heads;
    for (int h = 0; h < 2; ++h) heads.push_back({torch::randn({4, 2}, f64), torch::randn({4, 2}, f64), torch::randn({4, 3}, f64)});
    MultiHeadProjections two{heads, torch::eye(6, f64)};
    auto expected = torch::cat({attention_reference(q.matmul(heads[0].w_q), k.matmul(heads[0].w_k), v.matmul(heads[0].w_v)),
                                attention_reference(q.matmul(heads[1].w_q), k.matmul(heads[1].w_k), v.matmul(heads[1].w_v))},
                               1);
    CHECK((multi_head_reference(q, k, v, two) - expected).abs().max().item<double>() <= 1e-14);
}

TEST_CASE("multi-head: random case matches a brute-force per-head loop") {
    std::mt19937 rng(11);
    std::normal_distribution<double> nd;
    auto rand_mat = [&](std::size_t r, std::size_t c) {
        Mat m(r, Vec(c));
        for (auto& row : m) for (auto& x : row) x = nd(rng);
        return m;
    };
    auto to_t = [](const Mat& m) {
        auto t = torch::empty({static_cast<long>(m.size()), static_cast<long>(m[0].size())}, f64);
        for (std::size_t i = 0; i < m.size(); ++i) for (std::size_t j = 0; j < m[0].size(); ++j) t[i][j] = m[i][j];
        return t;
    };
    for (int trial = 0; trial < 20; ++trial) {
        auto q = rand_mat(3, 6), k = rand_mat(4, 6), v = rand_mat(4, 6);
        MultiHeadProjections p;
        Mat concat(3);
        for (int h = 0; h < 3; ++h) {
            auto wq = rand_mat(6, 2), wk = rand_mat(6, 2), wv = rand_mat(6, 2);
            p.heads.push_back({to_t(wq), to_t(wk), to_t(wv)});
            auto head = loop_attention(matmul(q, wq), matmul(k, wk), matmul(v, wv));
            for (std::size_t i = 0; i < 3; ++i) concat[i].insert(concat[i].end(), head[i].begin(), head[i].end());
        }
        auto wo = rand_mat(6, 5);
        p.w_o = to_t(wo);
        check_close(multi_head_reference(to_t(q), to_t(k), to_t(v), p), matmul(concat, wo), 1e-12);
    }
}

TEST_CASE("model attention layer agrees with multi_head_reference on its own projections") {
    torch::manual_seed(9);
    MultiHeadAttention attn(8, 2);
    attn->to(torch::kDouble);
    auto x = torch::randn({1, 5, 8}, f64), mem = torch::randn({1, 7, 8}, f64);
    auto keep = torch::ones({1, 1, 7}, torch::kBool);
    torch::NoGradGuard g;
    auto out = attn(x, mem, keep)[0];
    MultiHeadProjections p;
    for (int h = 0; h < 2; ++h) {
        auto cols = torch::indexing::Slice(h * 4, (h + 1) * 4);
        p.heads.push_back({attn->w_q->weight.t().index({torch::indexing::Slice(), cols}),
                           attn->w_k->weight.t().index({torch::indexing::Slice(), cols}),
                           attn->w_v->weight.t().index({torch::indexing::Slice(), cols})});
    }
    p.w_o = attn->w_o->weight.t();
    auto ref = multi_head_reference(x[0], mem[0], mem[0], p);
    CHECK((out - ref).abs().max().item<double>() <= 1e-12);
}

// ---------------------------------------------------------------------------
// Loss

TEST_CASE("loss: zero when every target token has probability one") {
    auto logits = torch::full({2, 3, 5}, -1e4, f64);
    auto labels = torch::tensor({{1, 4, 0}, {2, 2, 3}}, torch::kLong);
    for (int b = 0; b < 2; ++b) for (int t = 0; t < 3; ++t) logits[b][t][labels[b][t].item<long>()] = 0.0;
    auto mask = torch::ones({2, 3}, torch::kBool);
    CHECK(sequence_nll(logits, labels, mask).abs().max().item<double>() == 0.0);
}

TEST_CASE("loss: uniform logits give k ln V") {
    auto ckpt = tiny_checkpoint();
    {
        torch::NoGradGuard g;
        ckpt.model->decoder_norm->weight.zero_();
    }
    auto V = static_cast<double>(ckpt.config.vocab_size);
    for (std::size_t k = 1; k <= 5; ++k) {
        std::vector<TokenId> target(k, 100);
        target.back() = Tokenizer::kEos;
        auto loss = loss_value(ckpt.model, ckpt.bank, example_input(), target);
        CHECK(std::abs(loss - static_cast<double>(k) * std::log(V)) <= 1e-6 * std::max(1.0, loss));
        CHECK(std::abs(loss - static_cast<double>(k) * std::log(V)) <= 1e-5);
    }
}

TEST_CASE("loss: tiny 2-layer model matches the step-by-step scalar oracle") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto ckpt = tiny_checkpoint(seed);
        ckpt.model->to(torch::kDouble);
        ckpt.bank->to(torch::kDouble);
        SoftPromptBank bank(2, ckpt.config.d_model);
        bank->to(torch::kDouble);
        {
            torch::NoGradGuard g;
            bank->vectors.normal_();
        }
        ScalarModel oracle;
        for (const auto& p : ckpt.model->named_parameters()) oracle.p[p.key()] = p.value();
        oracle.heads = ckpt.config.num_heads;
        std::vector<TokenId> target{110, 90, Tokenizer::kEos};
        auto in = example_input();
        auto expected = oracle.loss(in.token_ids, in.soft_positions, to_mat(bank->vectors), target);
        auto got = loss_value(ckpt.model, bank, in, target);
        CHECK(std::abs(got - expected) <= 1e-6);
        CHECK(got > 0);
    }
}

TEST_CASE("loss: padding is excluded and the batch loss is the mean of per-example sums") {
    auto ckpt = tiny_checkpoint();
    ckpt.model->to(torch::kDouble);
    ckpt.bank->to(torch::kDouble);
    auto a = example_input();
    ModelInput b;
    b.token_ids = {90, 100, 110, 120, 130, 140, 150, Tokenizer::kEos};
    b.attention_mask.assign(b.token_ids.size(), true);
    std::vector<TokenId> ta{100, Tokenizer::kEos}, tb{130, 131, 132, 133, Tokenizer::kEos};
    SoftPromptBank bank(2, ckpt.config.d_model);
    bank->to(torch::kDouble);
    auto la = loss_value(ckpt.model, bank, a, ta);
    auto lb = loss_value(ckpt.model, bank, b, tb);
    torch::NoGradGuard g;
    auto out = forward_with_prompts(ckpt.model, bank, collate({a, b}, {ta, tb}, ckpt.config, 2));
    CHECK(std::abs(out.example_losses[0].item<double>() - la) <= 1e-10);
    CHECK(std::abs(out.example_losses[1].item<double>() - lb) <= 1e-10);
    CHECK(std::abs(out.loss.item<double>() - (la + lb) / 2) <= 1e-10);
    CHECK(out.logits.size(0) == 2);
    CHECK(out.logits.size(1) == 5);
    CHECK(out.logits.size(2) == ckpt.config.vocab_size);
}

TEST_CASE("loss: invalid ids, rows and lengths are errors") {
    auto ckpt = tiny_checkpoint();
    SoftPromptBank bank(2, ckpt.config.d_model);
    auto in = example_input();
    auto bad = in;
    bad.token_ids[0] = ckpt.config.vocab_size;
    CHECK_THROWS_AS(forward_with_prompts(ckpt.model, bank, bad, {100, 1}), InvalidInput);
    bad = in;
    bad.token_ids[0] = -1;
    CHECK_THROWS_AS(forward_with_prompts(ckpt.model, bank, bad, {100, 1}), InvalidInput);
    CHECK_THROWS_AS(forward_with_prompts(ckpt.model, bank, in, {ckpt.config.vocab_size + 5, 1}), InvalidInput);
    CHECK_THROWS_AS(forward_with_prompts(ckpt.model, bank, example_input(2), {100, 1}), InvalidInput);
    CHECK_THROWS_AS(forward_with_prompts(ckpt.model, bank, in, std::vector<TokenId>(17, 100)), InvalidInput);
    CHECK_THROWS_AS(forward_with_prompts(ckpt.model, bank, in, {}), InvalidInput);
    ModelInput longer;
    longer.token_ids.assign(65, 100);
    CHECK_THROWS_AS(forward_with_prompts(ckpt.model, bank, longer, {100, 1}), InvalidInput);
}

TEST_CASE("loss: soft-prompt gradients match central finite differences") {
    for (std::uint64_t seed : {4u, 5u}) {
        auto ckpt = tiny_checkpoint(seed);
        ckpt.model->to(torch::kDouble);
        for (auto& p : ckpt.model->parameters()) p.set_requires_grad(false);  // frozen mini-model
        SoftPromptBank bank(2, ckpt.config.d_model);
        bank->to(torch::kDouble);
        {
            torch::NoGradGuard g;
            bank->vectors.normal_();
        }
        auto in = example_input();
        std::vector<TokenId> target{110, 90, 100, Tokenizer::kEos};
        auto out = forward_with_prompts(ckpt.model, bank, in, target);
        out.loss.backward();
        auto analytic = bank->vectors.grad().clone();
        REQUIRE(analytic.abs().sum().item<double>() > 0);

        auto numeric = torch::zeros_like(analytic);
        const double eps = 1e-5;
        for (long r = 0; r < analytic.size(0); ++r) {
            for (long c = 0; c < analytic.size(1); ++c) {
                double orig;
                {
                    torch::NoGradGuard g;
                    orig = bank->vectors[r][c].item<double>();
                    bank->vectors[r][c] = orig + eps;
                }
                auto plus = loss_value(ckpt.model, bank, in, target);
                {
                    torch::NoGradGuard g;
                    bank->vectors[r][c] = orig - eps;
                }
                auto minus = loss_value(ckpt.model, bank, in, target);
                {
                    torch::NoGradGuard g;
                    bank->vectors[r][c] = orig;
                }
                numeric[r][c] = (plus - minus) / (2 * eps);
            }
        }
        for (long r = 0; r < analytic.size(0); ++r) {
            auto a = analytic[r], n = numeric[r];
            double rel = (a - n).norm().item<double>() / std::max(a.norm().item<double>(), n.norm().item<double>());
            INFO("row " << r << " relative error " << rel);
            CHECK(rel <= 1e-4);
        }
    }
}

TEST_CASE("loss: gradients reach the bank and, unless frozen, the backbone") {
    auto ckpt = tiny_checkpoint();
    auto in = example_input();
    SoftPromptBank bank(2, ckpt.config.d_model);
    {
        torch::NoGradGuard g;
        bank->vectors.normal_();
    }
    forward_with_prompts(ckpt.model, bank, in, {100, 1}).loss.backward();
    CHECK(bank->vectors.grad().abs().sum().item<double>() > 0);
    for (const auto& p : ckpt.model->named_parameters()) {
        if (p.key() == "decoder_positions.weight" || p.key() == "encoder_positions.weight") continue;
        INFO(p.key());
        CHECK(p.value().grad().defined());
    }
    CHECK(ckpt.model->embed->weight.grad().abs().sum().item<double>() > 0);
}

TEST_CASE("multitask loss: examples and properties over 1000 random cases") {
    CHECK(multitask_loss(std::vector<double>(6, 2.5), 6) == 2.5);
    CHECK(multitask_loss(std::vector<double>{0, 0, 0, 0, 0, 6}, 6) == 1.0);
    CHECK(multitask_loss(std::vector<double>{1, 2, 3, 4, 5, 6}, 6) == 3.5);
    CHECK(multitask_loss(std::vector<double>{4.25}, 1) == 4.25);
    CHECK_THROWS_AS(multitask_loss(std::vector<double>{}, 6), InvalidInput);
    CHECK_THROWS_AS(multitask_loss(std::vector<torch::Tensor>{}, 6), InvalidInput);
    CHECK_THROWS_AS(multitask_loss(std::vector<double>{1.0, 2.0}, 1), InvalidInput);
    CHECK_THROWS_AS(multitask_loss(std::vector<double>{1.0}, 0), InvalidInput);

    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> loss(0.0, 20.0), scale(0.01, 100.0);
    for (int i = 0; i < 1000; ++i) {
        auto n = static_cast<std::size_t>(1 + rng() % 12);
        std::vector<double> l(n);
        for (auto& x : l) x = loss(rng);
        double mean = multitask_loss(l, static_cast<std::int64_t>(n));
        double manual = 0;
        for (double x : l) manual += x;
        manual /= static_cast<double>(n);
        CHECK(mean == doctest::Approx(manual).epsilon(1e-12));
        double lo = *std::min_element(l.begin(), l.end()), hi = *std::max_element(l.begin(), l.end());
        CHECK(mean >= lo - 1e-12);
        CHECK(mean <= hi + 1e-12);

        auto perm = l;
        std::shuffle(perm.begin(), perm.end(), rng);
        CHECK(multitask_loss(perm, static_cast<std::int64_t>(n)) == doctest::Approx(mean).epsilon(1e-12));

        double c = scale(rng);
        auto scaled = l;
        for (auto& x : scaled) x *= c;
        CHECK(multitask_loss(scaled, static_cast<std::int64_t>(n)) == doctest::Approx(c * mean).epsilon(1e-12));

        std::vector<double> same(n, l[0]);
        CHECK(multitask_loss(same, static_cast<std::int64_t>(n)) == doctest::Approx(l[0]).epsilon(1e-12));

        std::vector<torch::Tensor> t;
        for (double x : l) t.push_back(torch::tensor(x, f64));
        CHECK(multitask_loss(t, static_cast<std::int64_t>(n)).item<double>() == doctest::Approx(mean).epsilon(1e-12));
    }
}

// ---------------------------------------------------------------------------
// Determinism and persistence

TEST_CASE("model: evaluation forward is bitwise deterministic and survives save/load") {
    auto ckpt = tiny_checkpoint(7);
    ckpt.model->eval();
    auto in = ckpt.prompt.render(toy_quads("python", 1).front(), ckpt.tokenizer);
    auto target = encode_target("How to sort a list?", ckpt.tokenizer, 16);
    auto a = loss_value(ckpt.model, ckpt.bank, in, target);
    auto b = loss_value(ckpt.model, ckpt.bank, in, target);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);

    auto dir = temp_dir("ckpt_roundtrip");
    save_checkpoint(dir, ckpt);
    auto loaded = load_checkpoint(dir);
    auto c = loss_value(loaded.model, loaded.bank, in, target);
    CHECK(std::memcmp(&a, &c, sizeof a) == 0);
    CHECK(loaded.model_version() == ckpt.model_version());
    CHECK(loaded.bank->init_source == ckpt.bank->init_source);
    CHECK(loaded.languages == ckpt.languages);
    CHECK(read_manifest(dir)["model_version"] == ckpt.model_version());

    auto copy = clone_checkpoint(ckpt);
    CHECK(copy.model_version() == ckpt.model_version());
    {
        torch::NoGradGuard g;
        copy.bank->vectors.add_(1.0);
    }
    CHECK(copy.model_version() != ckpt.model_version());
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint: bank rows follow the template and init from token embeddings") {
    auto hybrid = tiny_checkpoint(1, TemplateKind::hybrid);
    CHECK(hybrid.bank->rows() == static_cast<std::int64_t>(soft_row_count(build_template(TemplateKind::hybrid), hybrid.tokenizer)));
    for (std::int64_t r = 0; r < hybrid.bank->rows(); ++r) {
        auto src = hybrid.bank->init_source[static_cast<std::size_t>(r)];
        if (src >= 0) CHECK(torch::equal(hybrid.bank->vectors[r], hybrid.model->embed->weight[src]));
    }
    auto hard = tiny_checkpoint(1, TemplateKind::hard);
    CHECK(hard.bank->rows() == 0);
    auto ft = tiny_checkpoint(1, TemplateKind::hybrid, true);
    CHECK(ft.bank->rows() == 0);
    auto soft = tiny_checkpoint(1, TemplateKind::soft);
    CHECK(soft.bank->rows() >= 3);
    CHECK(std::isfinite(soft.bank->vectors.sum().item<double>()));
}

TEST_CASE("checkpoint: mismatched parts are rejected") {
    auto ckpt = tiny_checkpoint(3);
    auto dir = temp_dir("ckpt_mismatch");
    save_checkpoint(dir, ckpt);

    SUBCASE("tokenizer replaced") {
        auto other = tiny_tokenizer(toy_quads("java", 30));
        other.save(dir + "/tokenizer.json");
        CHECK_THROWS_AS(load_checkpoint(dir), ManifestMismatch);
    }
    SUBCASE("weights from another checkpoint") {
        auto other = tiny_checkpoint(4);
        torch::save(other.model, dir + "/model.pt");
        CHECK_THROWS_AS(load_checkpoint(dir), ManifestMismatch);
    }
    SUBCASE("template changed in the manifest") {
        auto m = read_manifest(dir);
        m["prompt"]["template"] = "soft";
        std::ofstream(dir + "/manifest.json") << m.dump();
        CHECK_THROWS_AS(load_checkpoint(dir), ManifestMismatch);
    }
    SUBCASE("shape change") {
        auto m = read_manifest(dir);
        m["model"]["d_ff"] = 64;
        std::ofstream(dir + "/manifest.json") << m.dump();
        CHECK_THROWS_AS(load_checkpoint(dir), ManifestMismatch);
    }
    SUBCASE("missing directory") { CHECK_THROWS_AS(load_checkpoint(dir + "/nope"), Error); }
    std::filesystem::remove_all(dir);
}

TEST_CASE("model config validation and presets") {
    auto c = ModelConfig::base(32000);
    CHECK(c.d_model == 768);
    CHECK(c.num_heads == 12);
    CHECK(c.num_layers == 12);
    CHECK(c.d_k() == 64);
    CHECK(c.max_encoder_len == 512);
    CHECK(c.max_decoder_len == 64);
    CHECK_NOTHROW(c.validate());
    CHECK(ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
    c.num_heads = 5;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    c = ModelConfig::small(1000);
    c.max_decoder_len = 0;
    CHECK_THROWS_AS(c.validate(), InvalidInput);
    CHECK_THROWS_AS(ModelConfig::preset("huge", 1000), InvalidInput);
}
