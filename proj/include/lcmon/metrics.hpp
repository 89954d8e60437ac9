#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcmon/corpus.hpp"
#include "lcmon/trace.hpp"

namespace lcmon {

enum class PplAggregation {
    geometric,       // exp(mean NLL) over answer tokens
    arithmetic_token // arithmetic mean of per-token PPL values
};

struct AnswerPpl {
    std::string sample_id;
    double ppl = 0.0;
    std::size_t n_answer_tokens = 0;
    double mean_nll = 0.0;  // natural-log units
    CellTag cell;
};

AnswerPpl answer_ppl(const std::vector<double>& logprobs,
                     PplAggregation agg = PplAggregation::geometric);

// 1 iff the whitespace-normalized, case-folded gold answer is a substring of
// the normalized decoded text.
int niah_binary_score(const std::string& decoded_text, const std::string& gold_answer);
std::string normalize_for_match(const std::string& text);

struct RetrievalScoreMatrix {
    std::size_t n_layers = 0;
    std::size_t n_heads = 0;
    std::vector<double> scores;  // row-major [layer][head], each in [0,1]
    std::size_t n_samples_aggregated = 0;

    double& at(std::size_t layer, std::size_t head) { return scores[layer * n_heads + head]; }
    double at(std::size_t layer, std::size_t head) const { return scores[layer * n_heads + head]; }
    std::size_t head_count() const { return n_layers * n_heads; }
};

struct HeadSet {
    std::vector<std::pair<std::size_t, std::size_t>> heads;  // (layer, head), sorted
    double threshold_used = 0.0;
};

// Per-sample retrieval scores: for each head, the fraction of distinct needle
// token ids the head "copied" (argmax attention landed on a needle position
// holding the token being generated). multiset=true counts needle tokens with
// multiplicity instead of as a set.
RetrievalScoreMatrix retrieval_scores(const AttentionTrace& trace, const NiahSample& sample,
                                      bool multiset = false);

RetrievalScoreMatrix aggregate_scores(const std::vector<RetrievalScoreMatrix>& per_sample);

// Heads with score strictly above the threshold, ordered by (layer, head).
HeadSet identify_retrieval_heads(const RetrievalScoreMatrix& matrix, double threshold);

struct ScoreMatrixMeta {
    std::uint64_t checkpoint_tokens = 0;
    std::size_t n_samples_aggregated = 0;
    double threshold = 0.1;
};

// CSV table (rows = layers, columns = heads) plus a sidecar metadata record
// at <path>.meta.json.
void write_score_matrix(const std::string& path, const RetrievalScoreMatrix& matrix,
                        const ScoreMatrixMeta& meta);
RetrievalScoreMatrix read_score_matrix(const std::string& path);

void write_answer_ppls(const std::string& path, const std::vector<AnswerPpl>& records);
std::vector<AnswerPpl> read_answer_ppls(const std::string& path);

}  // namespace lcmon
