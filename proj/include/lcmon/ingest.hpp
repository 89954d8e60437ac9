#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lcmon/analytics.hpp"
#include "lcmon/corpus.hpp"
#include "lcmon/trace.hpp"

namespace lcmon {

// Interchange records for monitoring external training runs. All three
// trace formats are line-delimited JSON; benchmark series are CSV.

struct LogprobTraceRecord {
    std::string sample_id;
    std::uint64_t checkpoint_tokens = 0;
    std::vector<double> answer_token_logprobs;  // natural log, all <= 0
    CellTag cell;
};

struct AttentionStepRecord {
    TokenId forced_token_id = 0;
    std::size_t query_position = 0;
    std::vector<std::vector<std::size_t>> argmax_positions;  // n_layers rows of n_q_heads
};

struct AttentionTraceRecord {
    std::string sample_id;
    std::uint64_t checkpoint_tokens = 0;
    std::size_t n_layers = 0;
    std::size_t n_q_heads = 0;
    Span needle_span;
    std::vector<AttentionStepRecord> steps;
};

std::vector<LogprobTraceRecord> read_logprob_traces(const std::string& path);
void write_logprob_traces(const std::string& path, const std::vector<LogprobTraceRecord>& records);

std::vector<AttentionTraceRecord> read_attention_traces(const std::string& path);
void write_attention_traces(const std::string& path,
                            const std::vector<AttentionTraceRecord>& records);

std::vector<CheckpointSeries> read_benchmark_series(const std::string& path);
void write_benchmark_series(const std::string& path, const std::vector<CheckpointSeries>& series);

// Flattens an ingested record into the trace shape metrics operates on.
AttentionTrace to_trace(const AttentionTraceRecord& record);
AttentionTraceRecord from_trace(const AttentionTrace& trace, std::uint64_t checkpoint_tokens,
                                const Span& needle_span);

}  // namespace lcmon
