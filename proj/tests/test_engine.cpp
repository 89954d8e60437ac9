#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "lcmon/corpus.hpp"
#include "lcmon/engine.hpp"
#include "lcmon/errors.hpp"

using namespace lcmon;

namespace {

ModelConfig toy_config() {
    ModelConfig c;
    c.n_layers = 2;
    c.d_model = 64;
    c.n_q_heads = 8;
    c.n_kv_heads = 2;
    c.head_dim = 8;
    c.ffn_hidden = 128;
    c.vocab_size = 258;
    c.rope_base = 10000.0;
    c.max_position = 4608;
    c.init_seed = 17;
    return c;
}

std::vector<TokenId> random_tokens(std::size_t n, std::int32_t vocab, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<TokenId> t(n);
    for (auto& v : t) v = static_cast<TokenId>(rng() % static_cast<std::uint64_t>(vocab));
    return t;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("config validation names the violated constraint") {
    auto c = toy_config();
    c.n_q_heads = 6;
    c.n_kv_heads = 4;
    CHECK_THROWS_WITH_AS(Model::init(c), doctest::Contains("divisible"), ValidationError);
    c = toy_config();
    c.rope_base = 1.0;
    CHECK_THROWS_WITH_AS(Model::init(c), doctest::Contains("rope_base"), ValidationError);
    c = toy_config();
    c.moe = MoeConfig{4, 5, true};
    CHECK_THROWS_WITH_AS(Model::init(c), doctest::Contains("n_active"), ValidationError);
}

TEST_CASE("group size arithmetic") {
    auto c = toy_config();
    c.n_q_heads = 8;
    c.n_kv_heads = 8;
    CHECK(c.group_size() == 1);
    c.n_q_heads = 32;
    c.n_kv_heads = 8;
    CHECK(c.group_size() == 4);
}

TEST_CASE("init is deterministic") {
    auto a = Model::init(toy_config());
    auto b = Model::init(toy_config());
    CHECK(a.weight_checksum() == b.weight_checksum());
    auto c = toy_config();
    c.init_seed = 18;
    CHECK(Model::init(c).weight_checksum() != a.weight_checksum());
}

TEST_CASE("zeroed output projection gives uniform rows") {
    auto model = Model::init(toy_config());
    auto& head = model.tensor("lm_head");
    std::fill(head.begin(), head.end(), 0.0f);
    auto fo = model.forward(random_tokens(5, 258, 3));
    const double expected = -std::log(258.0);
    for (std::size_t p = 0; p < fo.n_positions; ++p)
        for (std::size_t v = 0; v < fo.vocab; ++v)
            CHECK(fo.logprobs[p * fo.vocab + v] == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("single token forward") {
    auto model = Model::init(toy_config());
    auto fo = model.forward({42}, CaptureMode::full);
    CHECK(fo.n_positions == 1);
    for (const auto& row : fo.rows) {
        REQUIRE(row.size() == 1);
        CHECK(row[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("logprob rows are normalized and attention rows sum to 1") {
    auto model = Model::init(toy_config());
    auto tokens = random_tokens(128, 258, 5);
    auto fo = model.forward(tokens, CaptureMode::full);
    for (std::size_t p = 0; p < fo.n_positions; ++p) {
        double lse = 0.0;
        for (std::size_t v = 0; v < fo.vocab; ++v) lse += std::exp(fo.logprobs[p * fo.vocab + v]);
        CHECK(std::abs(std::log(lse)) < 1e-5);
    }
    const std::size_t nl = 2, nq = 8;
    for (std::size_t p = 0; p < fo.n_positions; ++p)
        for (std::size_t l = 0; l < nl; ++l)
            for (std::size_t h = 0; h < nq; ++h) {
                const auto& row = fo.rows[(p * nl + l) * nq + h];
                // causality: rows only cover positions <= p
                REQUIRE(row.size() == p + 1);
                double sum = 0.0;
                for (float v : row) {
                    CHECK(v >= 0.0f);
                    sum += v;
                }
                CHECK(std::abs(sum - 1.0) < 1e-5);
                CHECK(fo.argmax[(p * nl + l) * nq + h] <= p);
            }
}

TEST_CASE("forward is bit-identical across runs") {
    auto model = Model::init(toy_config());
    auto tokens = random_tokens(64, 258, 6);
    auto a = model.forward(tokens);
    auto b = model.forward(tokens);
    CHECK(a.logprobs == b.logprobs);
}

TEST_CASE("capacity error") {
    auto c = toy_config();
    c.max_position = 16;
    auto model = Model::init(c);
    CHECK_THROWS_AS(model.forward(random_tokens(17, 258, 1)), ComputationError);
}

TEST_CASE("answer_logprobs teacher forcing") {
    auto model = Model::init(toy_config());
    NiahSample s;
    s.tokens = random_tokens(40, 258, 8);
    s.answer_span = {30, 40};
    s.needle_span = {5, 10};
    auto lps = model.answer_logprobs(s);
    REQUIRE(lps.size() == 10);
    auto fo = model.forward(s.tokens);
    for (std::size_t i = 0; i < 10; ++i)
        CHECK(lps[i] == doctest::Approx(fo.logprob(29 + i, s.tokens[30 + i])).epsilon(1e-12));
    CHECK(model.answer_logprobs(s) == lps);

    auto& head = model.tensor("lm_head");
    std::fill(head.begin(), head.end(), 0.0f);
    auto uniform = model.answer_logprobs(s);
    for (double lp : uniform) CHECK(lp == doctest::Approx(-std::log(258.0)).epsilon(1e-6));

    s.answer_span = {30, 30};
    CHECK_THROWS_AS(model.answer_logprobs(s), UsageError);
}

TEST_CASE("greedy decode") {
    auto model = Model::init(toy_config());
    auto prompt = random_tokens(12, 258, 9);

    SUBCASE("max_new zero") { CHECK(model.greedy_decode(prompt, 0).empty()); }
    SUBCASE("uniform logits repeat token 0") {
        auto& head = model.tensor("lm_head");
        std::fill(head.begin(), head.end(), 0.0f);
        auto out = model.greedy_decode(prompt, 4);
        CHECK(out == std::vector<TokenId>{0, 0, 0, 0});
    }
    SUBCASE("decode then teacher-force is self-consistent") {
        auto out = model.greedy_decode(prompt, 6);
        auto seq = prompt;
        for (TokenId t : out) seq.push_back(t);
        auto fo = model.forward(seq);
        for (std::size_t i = 0; i < out.size(); ++i) {
            std::size_t qpos = prompt.size() + i - 1;
            TokenId best = 0;
            for (TokenId v = 1; v < 258; ++v)
                if (fo.logprob(qpos, v) > fo.logprob(qpos, best)) best = v;
            CHECK(best == out[i]);
        }
    }
}

TEST_CASE("rope rotation is an isometry") {
    std::mt19937_64 rng(11);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    for (double base : {500000.0, 2000000.0, 10000.0}) {
        for (std::size_t pos : {std::size_t{0}, std::size_t{17}, std::size_t{4096}}) {
            std::vector<float> v(8);
            for (auto& x : v) x = dist(rng);
            double norm_before = 0.0;
            for (float x : v) norm_before += double(x) * x;
            rope_rotate(v, pos, base);
            double norm_after = 0.0;
            for (float x : v) norm_after += double(x) * x;
            CHECK(std::abs(std::sqrt(norm_before) - std::sqrt(norm_after)) < 1e-6);
        }
    }
}

TEST_CASE("rope relative-position property") {
    std::mt19937_64 rng(13);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    const double base = 10000.0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<float> q(16), k(16);
        for (auto& x : q) x = dist(rng);
        for (auto& x : k) x = dist(rng);
        std::size_t m = rng() % 2048, delta = rng() % 2048;
        std::size_t n = m + delta;
        auto qm = q, kn = k, q0 = q, kd = k;
        rope_rotate(qm, m, base);
        rope_rotate(kn, n, base);
        rope_rotate(q0, 0, base);
        rope_rotate(kd, delta, base);
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < 16; ++i) {
            s1 += double(qm[i]) * kn[i];
            s2 += double(q0[i]) * kd[i];
        }
        CHECK(std::abs(s1 - s2) < 1e-4);
    }
}

TEST_CASE("set_rope_base changes distant positions only") {
    auto c = toy_config();
    c.n_layers = 2;
    auto model = Model::init(c);
    auto same = model.with_rope_base(c.rope_base);
    auto tokens = random_tokens(64, 258, 14);
    CHECK(model.forward(tokens).logprobs == same.forward(tokens).logprobs);

    auto m500k = model.with_rope_base(500000.0);
    auto m2m = model.with_rope_base(2000000.0);
    auto long_tokens = random_tokens(4097, 258, 15);
    auto a = m500k.forward(long_tokens);
    auto b = m2m.forward(long_tokens);
    // position 0 carries the identity rotation for every base
    for (std::size_t v = 0; v < a.vocab; ++v)
        CHECK(a.logprobs[v] == b.logprobs[v]);
    bool differs = false;
    for (std::size_t v = 0; v < a.vocab; ++v)
        if (a.logprobs[4096 * a.vocab + v] != b.logprobs[4096 * b.vocab + v]) differs = true;
    CHECK(differs);
}

TEST_CASE("gqa routing: zeroing a kv head degenerates exactly its group") {
    auto c = toy_config();
    auto model = Model::init(c);
    // kv head 1 serves query heads 4..7; zero its key projection in layer 0
    auto& wk = model.tensor("L0.wk");
    const std::size_t nkv_hd = 2 * 8;
    for (std::size_t row = 0; row < 64; ++row)
        for (std::size_t col = 8; col < 16; ++col) wk[row * nkv_hd + col] = 0.0f;
    auto fo = model.forward(random_tokens(32, 258, 16), CaptureMode::full);
    const std::size_t nl = 2, nq = 8, p = 31;
    for (std::size_t h = 0; h < nq; ++h) {
        const auto& row = fo.rows[(p * nl + 0) * nq + h];
        double max_dev = 0.0;
        for (float v : row) max_dev = std::max(max_dev, std::abs(v - 1.0 / double(p + 1)));
        if (h >= 4)
            CHECK(max_dev < 1e-7);  // zero scores -> uniform attention
        else
            CHECK(max_dev > 1e-4);
    }
}

TEST_CASE("moe gate selects exactly n_active with normalized weights") {
    auto gates = moe_gate({0.3, 0.9, 0.9, -2.0, 0.1}, 3);
    REQUIRE(gates.size() == 3);
    double sum = 0.0;
    for (auto [idx, w] : gates) {
        CHECK(w > 0.0);
        sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    // top logits 0.9 (idx 1), 0.9 (idx 2), then 0.3 (idx 0); ties go to low index
    CHECK(gates[0].first == 1);
    CHECK(gates[1].first == 2);
    CHECK(gates[2].first == 0);
}

TEST_CASE("moe model forward runs deterministically") {
    auto c = toy_config();
    c.moe = MoeConfig{4, 2, true};
    auto model = Model::init(c);
    auto tokens = random_tokens(24, 258, 19);
    auto a = model.forward(tokens);
    auto b = model.forward(tokens);
    CHECK(a.logprobs == b.logprobs);
    double lse = 0.0;
    for (std::size_t v = 0; v < a.vocab; ++v) lse += std::exp(a.logprobs[v]);
    CHECK(std::abs(std::log(lse)) < 1e-5);
}

TEST_CASE("weights and config round-trip through files") {
    auto c = toy_config();
    c.moe = MoeConfig{2, 1, true};
    auto model = Model::init(c);
    auto cfg_path = temp_path("lcmon_model.json");
    auto w_path = temp_path("lcmon_model.bin");
    write_model_config(cfg_path, c);
    model.save_weights(w_path);
    auto loaded = Model::load(cfg_path, w_path);
    CHECK(loaded.weight_checksum() == model.weight_checksum());
    auto tokens = random_tokens(16, 258, 20);
    CHECK(loaded.forward(tokens).logprobs == model.forward(tokens).logprobs);
    CHECK(loaded.config().moe->n_experts == 2);
    std::filesystem::remove(cfg_path);
    std::filesystem::remove(w_path);
}

TEST_CASE("trace_answer aligns with the answer span") {
    auto model = Model::init(toy_config());
    NiahSample s;
    s.sample_id = "t";
    s.tokens = random_tokens(48, 258, 21);
    s.needle_span = {4, 9};
    s.answer_span = {40, 48};
    auto trace = model.trace_answer(s);
    REQUIRE(trace.steps.size() == 8);
    for (std::size_t i = 0; i < trace.steps.size(); ++i) {
        CHECK(trace.steps[i].query_position == 39 + i);
        CHECK(trace.steps[i].forced_token_id == s.tokens[40 + i]);
        for (std::size_t pos : trace.steps[i].argmax_positions)
            CHECK(pos <= trace.steps[i].query_position);
    }
    auto decoded = model.trace_answer(s, CaptureMode::argmax, true);
    CHECK(decoded.steps.size() == 8);
}
