#include "lcmon/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "lcmon/errors.hpp"

namespace lcmon {

using json = nlohmann::ordered_json;

AnswerPpl answer_ppl(const std::vector<double>& logprobs, PplAggregation agg) {
    if (logprobs.empty()) throw UsageError("answer_ppl: empty logprob sequence");
    double sum_nll = 0.0;
    double sum_token_ppl = 0.0;
    for (double lp : logprobs) {
        if (lp > 0.0)
            throw ValidationError("answer_ppl: positive logprob " + std::to_string(lp) +
                                  " (probabilities must be <= 1)");
        sum_nll += -lp;
        sum_token_ppl += std::exp(-lp);
    }
    AnswerPpl r;
    r.n_answer_tokens = logprobs.size();
    r.mean_nll = sum_nll / static_cast<double>(logprobs.size());
    r.ppl = agg == PplAggregation::geometric
                ? std::exp(r.mean_nll)
                : sum_token_ppl / static_cast<double>(logprobs.size());
    return r;
}

std::string normalize_for_match(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            if (!out.empty()) pending_space = true;
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    return out;
}

int niah_binary_score(const std::string& decoded_text, const std::string& gold_answer) {
    if (gold_answer.empty()) throw UsageError("niah_binary_score: gold answer is empty");
    return normalize_for_match(decoded_text).find(normalize_for_match(gold_answer)) !=
                   std::string::npos
               ? 1
               : 0;
}

RetrievalScoreMatrix retrieval_scores(const AttentionTrace& trace, const NiahSample& sample,
                                      bool multiset) {
    if (trace.steps.size() != sample.answer_span.size())
        throw ValidationError("retrieval_scores: trace has " + std::to_string(trace.steps.size()) +
                              " steps but answer_span holds " +
                              std::to_string(sample.answer_span.size()) + " tokens");
    const std::size_t n_heads_total = trace.n_layers * trace.n_q_heads;

    // Needle token ids: distinct set and per-id multiplicity.
    std::set<TokenId> needle_set;
    std::map<TokenId, std::size_t> needle_count;
    for (std::size_t i = sample.needle_span.begin; i < sample.needle_span.end; ++i) {
        needle_set.insert(sample.tokens[i]);
        ++needle_count[sample.tokens[i]];
    }
    const std::size_t needle_len = sample.needle_span.size();
    if (needle_set.empty()) throw ValidationError("retrieval_scores: empty needle span");

    std::vector<std::set<TokenId>> copied(n_heads_total);
    std::vector<std::map<TokenId, std::size_t>> copied_count(n_heads_total);

    for (std::size_t si = 0; si < trace.steps.size(); ++si) {
        const TraceStep& step = trace.steps[si];
        if (step.argmax_positions.size() != n_heads_total)
            throw ValidationError("retrieval_scores: step " + std::to_string(si) +
                                  " argmax matrix shape mismatch");
        const TokenId w = step.forced_token_id;
        for (std::size_t hi = 0; hi < n_heads_total; ++hi) {
            const std::size_t j = step.argmax_positions[hi];
            if (j > step.query_position)
                throw ValidationError("retrieval_scores: step " + std::to_string(si) +
                                      " argmax position exceeds query position");
            // Copy criteria: argmax lands inside the needle on the token
            // currently being generated, and that token belongs to the needle.
            if (sample.needle_span.contains(j) && j < sample.tokens.size() &&
                sample.tokens[j] == w && needle_set.count(w)) {
                copied[hi].insert(w);
                ++copied_count[hi][w];
            }
        }
    }

    RetrievalScoreMatrix m;
    m.n_layers = trace.n_layers;
    m.n_heads = trace.n_q_heads;
    m.n_samples_aggregated = 1;
    m.scores.resize(n_heads_total);
    for (std::size_t hi = 0; hi < n_heads_total; ++hi) {
        if (!multiset) {
            std::size_t hit = 0;
            for (TokenId t : copied[hi])
                if (needle_set.count(t)) ++hit;
            m.scores[hi] = static_cast<double>(hit) / static_cast<double>(needle_set.size());
        } else {
            std::size_t hit = 0;
            for (const auto& [t, c] : copied_count[hi])
                hit += std::min(c, needle_count[t]);
            m.scores[hi] = static_cast<double>(hit) / static_cast<double>(needle_len);
        }
    }
    return m;
}

RetrievalScoreMatrix aggregate_scores(const std::vector<RetrievalScoreMatrix>& per_sample) {
    if (per_sample.empty()) throw UsageError("aggregate_scores: empty input");
    const auto& first = per_sample.front();
    RetrievalScoreMatrix out;
    out.n_layers = first.n_layers;
    out.n_heads = first.n_heads;
    out.n_samples_aggregated = per_sample.size();
    out.scores.assign(first.scores.size(), 0.0);
    for (const auto& m : per_sample) {
        if (m.n_layers != out.n_layers || m.n_heads != out.n_heads)
            throw ValidationError("aggregate_scores: shape mismatch (" +
                                  std::to_string(m.n_layers) + "x" + std::to_string(m.n_heads) +
                                  " vs " + std::to_string(out.n_layers) + "x" +
                                  std::to_string(out.n_heads) + ")");
        for (std::size_t i = 0; i < out.scores.size(); ++i) out.scores[i] += m.scores[i];
    }
    for (auto& s : out.scores) s /= static_cast<double>(per_sample.size());
    return out;
}

HeadSet identify_retrieval_heads(const RetrievalScoreMatrix& matrix, double threshold) {
    if (threshold < 0.0 || threshold > 1.0)
        throw UsageError("identify_retrieval_heads: threshold must lie in [0,1]");
    HeadSet set;
    set.threshold_used = threshold;
    for (std::size_t l = 0; l < matrix.n_layers; ++l)
        for (std::size_t h = 0; h < matrix.n_heads; ++h)
            if (matrix.at(l, h) > threshold) set.heads.emplace_back(l, h);
    return set;
}

void write_score_matrix(const std::string& path, const RetrievalScoreMatrix& matrix,
                        const ScoreMatrixMeta& meta) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write score matrix: " + path);
    out.precision(17);
    for (std::size_t l = 0; l < matrix.n_layers; ++l) {
        for (std::size_t h = 0; h < matrix.n_heads; ++h) {
            if (h) out << ',';
            out << matrix.at(l, h);
        }
        out << '\n';
    }
    json j;
    j["checkpoint_tokens"] = meta.checkpoint_tokens;
    j["n_samples_aggregated"] = meta.n_samples_aggregated;
    j["threshold"] = meta.threshold;
    std::ofstream side(path + ".meta.json");
    side << j.dump(2) << '\n';
}

RetrievalScoreMatrix read_score_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open score matrix: " + path);
    RetrievalScoreMatrix m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            std::string field = line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                            : comma - pos);
            try {
                row.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw ParseError("score matrix: bad value '" + field + "'", line_no);
            }
            if (comma == std::string::npos) break;
            pos = comma + 1;
        }
        if (m.n_heads == 0) m.n_heads = row.size();
        if (row.size() != m.n_heads)
            throw ParseError("score matrix: ragged row (" + std::to_string(row.size()) +
                                 " vs " + std::to_string(m.n_heads) + " columns)",
                             line_no);
        for (double v : row) {
            if (v < 0.0 || v > 1.0)
                throw ParseError("score matrix: value " + std::to_string(v) + " outside [0,1]",
                                 line_no);
            m.scores.push_back(v);
        }
        ++m.n_layers;
    }
    std::ifstream side(path + ".meta.json");
    if (side) {
        try {
            json j;
            side >> j;
            m.n_samples_aggregated = j.value("n_samples_aggregated", std::size_t{0});
        } catch (const json::exception&) {
            // sidecar is advisory for reads
        }
    }
    return m;
}

void write_answer_ppls(const std::string& path, const std::vector<AnswerPpl>& records) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write metric file: " + path);
    for (const auto& r : records) {
        json j;
        j["sample_id"] = r.sample_id;
        j["ppl"] = r.ppl;
        j["n_answer_tokens"] = r.n_answer_tokens;
        j["mean_nll"] = r.mean_nll;
        json cell = json::object();
        if (r.cell.length) cell["length"] = *r.cell.length;
        if (r.cell.depth) cell["depth"] = *r.cell.depth;
        if (r.cell.absolute_distance) cell["absolute_distance"] = *r.cell.absolute_distance;
        if (r.cell.interference_length) cell["interference_length"] = *r.cell.interference_length;
        j["cell"] = cell;
        out << j.dump() << '\n';
    }
}

std::vector<AnswerPpl> read_answer_ppls(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open metric file: " + path);
    std::vector<AnswerPpl> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            AnswerPpl r;
            r.sample_id = j.at("sample_id").get<std::string>();
            r.ppl = j.at("ppl").get<double>();
            r.n_answer_tokens = j.at("n_answer_tokens").get<std::size_t>();
            r.mean_nll = j.at("mean_nll").get<double>();
            if (j.contains("cell")) {
                const json& c = j["cell"];
                if (c.contains("length")) r.cell.length = c["length"].get<std::size_t>();
                if (c.contains("depth")) r.cell.depth = c["depth"].get<double>();
                if (c.contains("absolute_distance"))
                    r.cell.absolute_distance = c["absolute_distance"].get<std::size_t>();
                if (c.contains("interference_length"))
                    r.cell.interference_length = c["interference_length"].get<std::size_t>();
            }
            records.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError(std::string("metrics: ") + e.what(), line_no);
        }
    }
    return records;
}

}  // namespace lcmon
