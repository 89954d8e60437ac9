#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lcmon/corpus.hpp"
#include "lcmon/tokenizer.hpp"
#include "lcmon/trace.hpp"

namespace lcmon {

struct MoeConfig {
    std::int32_t n_experts = 0;
    std::int32_t n_active = 0;
    bool shared_expert = true;
};

struct ModelConfig {
    std::int32_t n_layers = 2;
    std::int32_t d_model = 64;
    std::int32_t n_q_heads = 8;
    std::int32_t n_kv_heads = 2;
    std::int32_t head_dim = 8;
    std::int32_t ffn_hidden = 128;
    std::int32_t vocab_size = 258;
    double rope_base = 10000.0;
    std::int32_t max_position = 8192;
    std::optional<MoeConfig> moe;
    std::uint64_t init_seed = 0;

    std::int32_t group_size() const { return n_q_heads / n_kv_heads; }
    void validate() const;
};

ModelConfig read_model_config(const std::string& path);
void write_model_config(const std::string& path, const ModelConfig& config);

struct ForwardOutput {
    std::size_t n_positions = 0;
    std::size_t vocab = 0;
    CaptureMode capture = CaptureMode::none;
    // row-major [position][vocab], natural-log probabilities
    std::vector<float> logprobs;
    // capture != none: [position][layer][q_head] argmax input position
    std::vector<std::size_t> argmax;
    // capture == full: row at ((position*n_layers + layer)*n_q_heads + head),
    // length position+1
    std::vector<std::vector<float>> rows;

    float logprob(std::size_t pos, TokenId token) const {
        return logprobs[pos * vocab + static_cast<std::size_t>(token)];
    }
};

// Deterministic decoder-only transformer: RMSNorm pre-norm blocks, RoPE,
// grouped-query attention, SwiGLU feed-forward (dense or top-k MoE with an
// optional shared expert). Weights are float32; accumulation is double.
// Instances are immutable after construction/load, so concurrent forward
// passes over distinct inputs are safe.
class Model {
public:
    static Model init(const ModelConfig& config);
    static Model load(const std::string& config_path, const std::string& weights_path);

    void save_weights(const std::string& path) const;
    std::uint32_t weight_checksum() const;

    const ModelConfig& config() const { return config_; }

    // Tensor access by name; used by tests and the weight file writer.
    std::vector<float>& tensor(const std::string& name);
    const std::vector<float>& tensor(const std::string& name) const;
    std::vector<std::string> tensor_names() const;

    ForwardOutput forward(const std::vector<TokenId>& tokens,
                          CaptureMode capture = CaptureMode::none) const;

    // Teacher-forced logprob of each answer token, read from the logits at
    // the preceding position.
    std::vector<double> answer_logprobs(const NiahSample& sample) const;

    std::vector<TokenId> greedy_decode(const std::vector<TokenId>& prompt, std::size_t max_new,
                                       TokenId eos_id = -1) const;

    // Attention trace aligned with the sample's answer span. Teacher-forced
    // by default; decode=true instead attributes the tokens produced by
    // greedy decoding from the answer marker onward.
    AttentionTrace trace_answer(const NiahSample& sample, CaptureMode capture = CaptureMode::argmax,
                                bool decode = false) const;

    Model with_rope_base(double base) const;

private:
    Model() = default;
    ModelConfig config_;
    std::map<std::string, std::vector<float>> tensors_;
};

// RoPE rotation of one head vector (length head_dim) at a position. Exposed
// for the relative-position and isometry property tests.
void rope_rotate(std::vector<float>& head_vec, std::size_t position, double base);

// Top-k gate over router logits: returns (expert index, weight) pairs for
// exactly n_active experts, weights summing to 1. Ties broken toward the
// lowest expert index.
std::vector<std::pair<std::int32_t, double>> moe_gate(const std::vector<double>& router_logits,
                                                      std::int32_t n_active);

}  // namespace lcmon
