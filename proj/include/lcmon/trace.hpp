#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcmon/tokenizer.hpp"

namespace lcmon {

enum class CaptureMode { none, argmax, full };

// One teacher-forced (or decoded) step: the token being attributed and, for
// every (layer, q_head), the input position receiving the most attention
// mass at the query position whose logits predict that token. Full rows are
// kept only in full-capture mode.
struct TraceStep {
    TokenId forced_token_id = 0;
    std::size_t query_position = 0;
    // n_layers x n_q_heads, row-major
    std::vector<std::size_t> argmax_positions;
    // full mode only: per (layer, q_head) attention row of length
    // query_position + 1, row-major over (layer, head)
    std::vector<std::vector<float>> full_rows;
};

struct AttentionTrace {
    std::string sample_id;
    CaptureMode capture_mode = CaptureMode::argmax;
    std::size_t n_layers = 0;
    std::size_t n_q_heads = 0;
    std::vector<TraceStep> steps;

    std::size_t argmax_at(const TraceStep& step, std::size_t layer, std::size_t head) const {
        return step.argmax_positions[layer * n_q_heads + head];
    }
};

}  // namespace lcmon
