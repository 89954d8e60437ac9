#include "lcmon/ingest.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lcmon/errors.hpp"

namespace lcmon {

using json = nlohmann::ordered_json;

namespace {

CellTag cell_from_json(const json& c) {
    CellTag tag;
    if (c.contains("length")) tag.length = c["length"].get<std::size_t>();
    if (c.contains("depth")) tag.depth = c["depth"].get<double>();
    if (c.contains("absolute_distance"))
        tag.absolute_distance = c["absolute_distance"].get<std::size_t>();
    if (c.contains("interference_length"))
        tag.interference_length = c["interference_length"].get<std::size_t>();
    return tag;
}

json cell_to_json(const CellTag& tag) {
    json c = json::object();
    if (tag.length) c["length"] = *tag.length;
    if (tag.depth) c["depth"] = *tag.depth;
    if (tag.absolute_distance) c["absolute_distance"] = *tag.absolute_distance;
    if (tag.interference_length) c["interference_length"] = *tag.interference_length;
    return c;
}

}  // namespace

std::vector<LogprobTraceRecord> read_logprob_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open logprob trace file: " + path);
    std::vector<LogprobTraceRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("logprob trace: ") + e.what(), line_no);
        }
        LogprobTraceRecord r;
        try {
            r.sample_id = j.at("sample_id").get<std::string>();
            r.checkpoint_tokens = j.at("checkpoint_tokens").get<std::uint64_t>();
            r.answer_token_logprobs = j.at("answer_token_logprobs").get<std::vector<double>>();
            if (j.contains("cell")) r.cell = cell_from_json(j["cell"]);
        } catch (const json::exception& e) {
            throw ParseError(std::string("logprob trace: ") + e.what(), line_no);
        }
        if (r.answer_token_logprobs.empty())
            throw ParseError("logprob trace: field answer_token_logprobs is empty", line_no);
        for (double lp : r.answer_token_logprobs)
            if (lp > 0.0)
                throw ParseError("logprob trace: field answer_token_logprobs holds positive "
                                 "logprob " + std::to_string(lp),
                                 line_no);
        records.push_back(std::move(r));
    }
    return records;
}

void write_logprob_traces(const std::string& path,
                          const std::vector<LogprobTraceRecord>& records) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write logprob trace file: " + path);
    for (const auto& r : records) {
        json j;
        j["sample_id"] = r.sample_id;
        j["checkpoint_tokens"] = r.checkpoint_tokens;
        j["answer_token_logprobs"] = r.answer_token_logprobs;
        j["cell"] = cell_to_json(r.cell);
        out << j.dump() << '\n';
    }
}

std::vector<AttentionTraceRecord> read_attention_traces(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open attention trace file: " + path);
    std::vector<AttentionTraceRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("attention trace: ") + e.what(), line_no);
        }
        AttentionTraceRecord r;
        try {
            r.sample_id = j.at("sample_id").get<std::string>();
            r.checkpoint_tokens = j.at("checkpoint_tokens").get<std::uint64_t>();
            r.n_layers = j.at("n_layers").get<std::size_t>();
            r.n_q_heads = j.at("n_q_heads").get<std::size_t>();
            const json& span = j.at("needle_span");
            r.needle_span = Span{span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>()};
            for (const json& js : j.at("steps")) {
                AttentionStepRecord step;
                step.forced_token_id = js.at("forced_token_id").get<TokenId>();
                step.query_position = js.at("query_position").get<std::size_t>();
                step.argmax_positions =
                    js.at("argmax_positions").get<std::vector<std::vector<std::size_t>>>();
                r.steps.push_back(std::move(step));
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("attention trace: ") + e.what(), line_no);
        }
        for (std::size_t si = 0; si < r.steps.size(); ++si) {
            const auto& step = r.steps[si];
            if (step.argmax_positions.size() != r.n_layers)
                throw ParseError("attention trace: field argmax_positions at step " +
                                     std::to_string(si) + " has " +
                                     std::to_string(step.argmax_positions.size()) +
                                     " rows, expected n_layers=" + std::to_string(r.n_layers),
                                 line_no);
            for (const auto& row : step.argmax_positions) {
                if (row.size() != r.n_q_heads)
                    throw ParseError("attention trace: field argmax_positions at step " +
                                         std::to_string(si) + " has a row of " +
                                         std::to_string(row.size()) + " heads, expected " +
                                         std::to_string(r.n_q_heads),
                                     line_no);
                for (std::size_t pos : row)
                    if (pos > step.query_position)
                        throw ParseError("attention trace: field argmax_positions at step " +
                                             std::to_string(si) + " violates causality (position " +
                                             std::to_string(pos) + " > query_position " +
                                             std::to_string(step.query_position) + ")",
                                         line_no);
            }
        }
        records.push_back(std::move(r));
    }
    return records;
}

void write_attention_traces(const std::string& path,
                            const std::vector<AttentionTraceRecord>& records) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write attention trace file: " + path);
    for (const auto& r : records) {
        json j;
        j["sample_id"] = r.sample_id;
        j["checkpoint_tokens"] = r.checkpoint_tokens;
        j["n_layers"] = r.n_layers;
        j["n_q_heads"] = r.n_q_heads;
        j["needle_span"] = json::array({r.needle_span.begin, r.needle_span.end});
        json steps = json::array();
        for (const auto& s : r.steps) {
            json js;
            js["forced_token_id"] = s.forced_token_id;
            js["query_position"] = s.query_position;
            js["argmax_positions"] = s.argmax_positions;
            steps.push_back(std::move(js));
        }
        j["steps"] = std::move(steps);
        out << j.dump() << '\n';
    }
}

std::vector<CheckpointSeries> read_benchmark_series(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open benchmark series file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "benchmark_name,checkpoint_tokens,score")
        throw ParseError("benchmark series: expected header "
                         "'benchmark_name,checkpoint_tokens,score'",
                         1);
    std::map<std::string, std::map<std::uint64_t, double>> grouped;
    std::vector<std::string> order;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name, tok_str, score_str;
        if (!std::getline(ls, name, ',') || !std::getline(ls, tok_str, ',') ||
            !std::getline(ls, score_str))
            throw ParseError("benchmark series: malformed row", line_no);
        std::uint64_t n;
        double score;
        try {
            n = std::stoull(tok_str);
            score = std::stod(score_str);
        } catch (const std::exception&) {
            throw ParseError("benchmark series: bad numeric field in row '" + line + "'",
                             line_no);
        }
        if (!grouped.count(name)) order.push_back(name);
        if (grouped[name].count(n))
            throw ParseError("benchmark series: duplicate checkpoint " + std::to_string(n) +
                                 " for benchmark '" + name + "'",
                             line_no);
        grouped[name][n] = score;
    }
    std::vector<CheckpointSeries> out;
    for (const auto& name : order) {
        CheckpointSeries s;
        s.metric_name = name;
        for (const auto& [n, v] : grouped[name]) s.points.emplace_back(n, v);
        out.push_back(std::move(s));
    }
    return out;
}

void write_benchmark_series(const std::string& path,
                            const std::vector<CheckpointSeries>& series) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write benchmark series file: " + path);
    out.precision(17);
    out << "benchmark_name,checkpoint_tokens,score\n";
    for (const auto& s : series)
        for (const auto& [n, v] : s.points) out << s.metric_name << ',' << n << ',' << v << '\n';
}

AttentionTrace to_trace(const AttentionTraceRecord& record) {
    AttentionTrace t;
    t.sample_id = record.sample_id;
    t.capture_mode = CaptureMode::argmax;
    t.n_layers = record.n_layers;
    t.n_q_heads = record.n_q_heads;
    for (const auto& s : record.steps) {
        TraceStep step;
        step.forced_token_id = s.forced_token_id;
        step.query_position = s.query_position;
        step.argmax_positions.reserve(record.n_layers * record.n_q_heads);
        for (const auto& row : s.argmax_positions)
            step.argmax_positions.insert(step.argmax_positions.end(), row.begin(), row.end());
        t.steps.push_back(std::move(step));
    }
    return t;
}

AttentionTraceRecord from_trace(const AttentionTrace& trace, std::uint64_t checkpoint_tokens,
                                const Span& needle_span) {
    AttentionTraceRecord r;
    r.sample_id = trace.sample_id;
    r.checkpoint_tokens = checkpoint_tokens;
    r.n_layers = trace.n_layers;
    r.n_q_heads = trace.n_q_heads;
    r.needle_span = needle_span;
    for (const auto& s : trace.steps) {
        AttentionStepRecord step;
        step.forced_token_id = s.forced_token_id;
        step.query_position = s.query_position;
        step.argmax_positions.resize(trace.n_layers);
        for (std::size_t l = 0; l < trace.n_layers; ++l)
            step.argmax_positions[l].assign(
                s.argmax_positions.begin() + static_cast<std::ptrdiff_t>(l * trace.n_q_heads),
                s.argmax_positions.begin() +
                    static_cast<std::ptrdiff_t>((l + 1) * trace.n_q_heads));
        r.steps.push_back(std::move(step));
    }
    return r;
}

}  // namespace lcmon
