#include "lcmon/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lcmon/errors.hpp"

namespace lcmon {

using json = nlohmann::ordered_json;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    // splitmix64 finalizer
    std::uint64_t z = seed ^ (salt * 0x9E3779B97F4A7C15ULL);
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

NiahTemplate NiahTemplate::standard() {
    NiahTemplate t;
    t.needle_text =
        " The best thing to do in San Francisco is eat a sandwich and sit in "
        "Dolores Park on a sunny day. ";
    t.question_text = "\n\nQuestion: What is the best thing to do in San Francisco?\n\n";
    t.answer_marker = "Answer:";
    t.answer_text =
        " The best thing to do in San Francisco is eat a sandwich and sit in "
        "Dolores Park on a sunny day.";
    return t;
}

void NiahTemplate::validate() const {
    if (needle_text.empty()) throw ValidationError("template: needle_text is empty");
    if (question_text.empty()) throw ValidationError("template: question_text is empty");
    if (answer_text.empty()) throw ValidationError("template: answer_text is empty");
    if (answer_marker.empty()) throw ValidationError("template: answer_marker is empty");
    for (const auto* field : {&needle_text, &question_text, &answer_text}) {
        if (field->find(answer_marker) != std::string::npos)
            throw ValidationError("template: answer_marker must not occur inside "
                                  "needle/question/answer text");
    }
}

std::string CellTag::label() const {
    std::ostringstream os;
    if (length) os << "len=" << *length;
    if (depth) os << (length ? "," : "") << "depth=" << *depth;
    if (absolute_distance) os << "abs=" << *absolute_distance;
    if (interference_length) os << (absolute_distance ? "," : "") << "intf=" << *interference_length;
    return os.str();
}

FillerSource FillerSource::from_documents(std::vector<std::string> documents) {
    FillerSource f;
    for (const auto& doc : documents) {
        auto ids = tokenize(doc);
        f.pool_.insert(f.pool_.end(), ids.begin(), ids.end());
    }
    return f;
}

namespace {
constexpr const char* kWords[] = {
    "the",    "harbor", "lantern", "quiet",  "river",  "stone",  "walked", "beneath",
    "old",    "bridge", "morning", "light",  "fell",   "across", "narrow", "street",
    "and",    "every",  "window",  "held",   "small",  "garden", "of",     "wind",
    "carried", "salt",  "from",    "open",   "sea",    "toward", "hills",  "where",
    "birds",  "turned", "slowly",  "over",   "fields", "a",      "traveler", "paused",
    "to",     "watch",  "clouds",  "gather", "before", "rain",   "settled", "softly",
    "on",     "rooftops"};
constexpr std::size_t kNumWords = sizeof(kWords) / sizeof(kWords[0]);
}  // namespace

FillerSource FillerSource::synthetic(std::uint64_t seed, std::size_t min_bytes) {
    std::mt19937_64 rng(mix_seed(seed, 0xF177E7));
    std::string text;
    text.reserve(min_bytes + 64);
    std::size_t words_in_sentence = 0;
    while (text.size() < min_bytes) {
        const char* w = kWords[rng() % kNumWords];
        if (words_in_sentence == 0 && !text.empty()) text += ' ';
        text += w;
        ++words_in_sentence;
        if (words_in_sentence >= 6 + rng() % 10) {
            text += '.';
            words_in_sentence = 0;
        } else {
            text += ' ';
        }
    }
    FillerSource f;
    f.pool_ = tokenize(text);
    return f;
}

std::vector<TokenId> FillerSource::window(std::uint64_t seed, std::size_t n) const {
    if (n == 0) return {};
    if (pool_.size() < n)
        throw ValidationError("filler source exhausted: need " + std::to_string(n) +
                              " tokens, pool holds " + std::to_string(pool_.size()));
    std::size_t offset = mix_seed(seed, 0x77D0) % (pool_.size() - n + 1);
    return {pool_.begin() + static_cast<std::ptrdiff_t>(offset),
            pool_.begin() + static_cast<std::ptrdiff_t>(offset + n)};
}

namespace {

// Assembles the final token sequence and spans from the fixed parts.
NiahSample assemble(const NiahTemplate& tmpl, const std::vector<TokenId>& before,
                    const std::vector<TokenId>& after, const TokenizerSpec& spec,
                    std::uint64_t seed) {
    auto needle = tokenize(tmpl.needle_text, spec);
    auto question = tokenize(tmpl.question_text, spec);
    auto marker = tokenize(tmpl.answer_marker, spec);
    auto answer = tokenize(tmpl.answer_text, spec);

    NiahSample s;
    s.seed = seed;
    s.before_len = before.size();
    s.after_len = after.size();
    s.tokens.reserve(before.size() + needle.size() + after.size() + question.size() +
                     marker.size() + answer.size());
    auto append = [&s](const std::vector<TokenId>& part) {
        s.tokens.insert(s.tokens.end(), part.begin(), part.end());
    };
    append(before);
    s.needle_span = {s.tokens.size(), s.tokens.size() + needle.size()};
    append(needle);
    append(after);
    s.question_span = {s.tokens.size(), s.tokens.size() + question.size()};
    append(question);
    append(marker);
    s.answer_span = {s.tokens.size(), s.tokens.size() + answer.size()};
    append(answer);
    s.target_length = s.tokens.size();

    // The marker must occur exactly once in the rendered text; a filler window
    // could collide with it.
    std::string rendered = detokenize(s.tokens, spec);
    std::size_t first = rendered.find(tmpl.answer_marker);
    if (first == std::string::npos ||
        rendered.find(tmpl.answer_marker, first + 1) != std::string::npos)
        throw ValidationError("rendered sample does not contain the answer marker exactly once");
    return s;
}

}  // namespace

NiahSample build_sample(const NiahTemplate& tmpl, const FillerSource& filler,
                        std::size_t target_length, double depth,
                        const TokenizerSpec& spec, std::uint64_t seed) {
    tmpl.validate();
    if (depth < 0.0 || depth > 1.0)
        throw ValidationError("depth must lie in [0,1], got " + std::to_string(depth));

    const std::size_t needle_len = tokenize(tmpl.needle_text, spec).size();
    const std::size_t tail_len = tokenize(tmpl.question_text, spec).size() +
                                 tokenize(tmpl.answer_marker, spec).size() +
                                 tokenize(tmpl.answer_text, spec).size();
    const std::size_t min_len = needle_len + tail_len;
    if (target_length < min_len)
        throw ValidationError("target_length " + std::to_string(target_length) +
                              " too small; minimum feasible length is " + std::to_string(min_len));

    const std::size_t context_budget = target_length - tail_len;
    const std::size_t before_len =
        static_cast<std::size_t>(std::llround(depth * static_cast<double>(context_budget - needle_len)));
    const std::size_t after_len = context_budget - needle_len - before_len;

    auto before = filler.window(mix_seed(seed, 0xBEF0), before_len);
    auto after = filler.window(mix_seed(seed, 0xAF7E), after_len);
    NiahSample s = assemble(tmpl, before, after, spec, seed);
    s.depth = depth;
    return s;
}

NiahSample build_interference_sample(const NiahTemplate& tmpl, const FillerSource& filler,
                                     std::size_t absolute_distance,
                                     std::size_t interference_length,
                                     const TokenizerSpec& spec, std::uint64_t seed) {
    tmpl.validate();
    // The after-context window depends only on (seed, absolute_distance), so a
    // sweep over interference_length holds it bit-for-bit constant.
    auto before = filler.window(mix_seed(seed, 0xBEF0), interference_length);
    auto after = filler.window(mix_seed(seed, 0xAF7E), absolute_distance);
    NiahSample s = assemble(tmpl, before, after, spec, seed);
    const std::size_t context = s.before_len + s.needle_span.size() + s.after_len;
    s.depth = context > s.needle_span.size()
                  ? static_cast<double>(s.before_len) /
                        static_cast<double>(context - s.needle_span.size())
                  : 0.0;
    s.cell.absolute_distance = absolute_distance;
    s.cell.interference_length = interference_length;
    return s;
}

std::vector<NiahSample> build_grid_corpus(const NiahTemplate& tmpl, const FillerSource& filler,
                                          const std::vector<std::size_t>& lengths,
                                          const std::vector<double>& depths,
                                          std::size_t samples_per_cell,
                                          const TokenizerSpec& spec, std::uint64_t seed) {
    if (lengths.empty() || depths.empty())
        throw UsageError("grid corpus: lengths and depths must be nonempty");
    if (samples_per_cell < 1) throw UsageError("grid corpus: samples_per_cell must be >= 1");

    std::vector<NiahSample> out;
    out.reserve(lengths.size() * depths.size() * samples_per_cell);
    std::size_t cell_index = 0;
    for (std::size_t li = 0; li < lengths.size(); ++li) {
        for (std::size_t di = 0; di < depths.size(); ++di, ++cell_index) {
            for (std::size_t r = 0; r < samples_per_cell; ++r) {
                std::uint64_t s = mix_seed(mix_seed(seed, cell_index), r);
                NiahSample sample;
                try {
                    sample = build_sample(tmpl, filler, lengths[li], depths[di], spec, s);
                } catch (const std::exception& e) {
                    throw ValidationError("cell (length=" + std::to_string(lengths[li]) +
                                          ", depth=" + std::to_string(depths[di]) +
                                          "): " + e.what());
                }
                sample.cell.length = lengths[li];
                sample.cell.depth = depths[di];
                char buf[96];
                std::snprintf(buf, sizeof(buf), "L%zu_D%.3f_R%zu", lengths[li], depths[di], r);
                sample.sample_id = buf;
                out.push_back(std::move(sample));
            }
        }
    }
    return out;
}

namespace {

json span_to_json(const Span& s) { return json::array({s.begin, s.end}); }

Span span_from_json(const json& j) {
    return Span{j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()};
}

}  // namespace

void write_corpus(const std::string& path, const std::vector<NiahSample>& samples) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot open corpus file for writing: " + path);
    for (const auto& s : samples) {
        json j;
        j["sample_id"] = s.sample_id;
        j["tokens"] = s.tokens;
        j["needle_span"] = span_to_json(s.needle_span);
        j["question_span"] = span_to_json(s.question_span);
        j["answer_span"] = span_to_json(s.answer_span);
        j["target_length"] = s.target_length;
        j["depth"] = s.depth;
        j["before_len"] = s.before_len;
        j["after_len"] = s.after_len;
        j["seed"] = s.seed;
        json cell = json::object();
        if (s.cell.length) cell["length"] = *s.cell.length;
        if (s.cell.depth) cell["depth"] = *s.cell.depth;
        if (s.cell.absolute_distance) cell["absolute_distance"] = *s.cell.absolute_distance;
        if (s.cell.interference_length) cell["interference_length"] = *s.cell.interference_length;
        j["cell"] = cell;
        out << j.dump() << '\n';
    }
}

std::vector<NiahSample> read_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open corpus file: " + path);
    std::vector<NiahSample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("corpus: ") + e.what(), line_no);
        }
        try {
            NiahSample s;
            s.sample_id = j.at("sample_id").get<std::string>();
            s.tokens = j.at("tokens").get<std::vector<TokenId>>();
            s.needle_span = span_from_json(j.at("needle_span"));
            s.question_span = span_from_json(j.at("question_span"));
            s.answer_span = span_from_json(j.at("answer_span"));
            s.target_length = j.at("target_length").get<std::size_t>();
            s.depth = j.at("depth").get<double>();
            s.before_len = j.at("before_len").get<std::size_t>();
            s.after_len = j.at("after_len").get<std::size_t>();
            s.seed = j.at("seed").get<std::uint64_t>();
            if (j.contains("cell")) {
                const json& c = j["cell"];
                if (c.contains("length")) s.cell.length = c["length"].get<std::size_t>();
                if (c.contains("depth")) s.cell.depth = c["depth"].get<double>();
                if (c.contains("absolute_distance"))
                    s.cell.absolute_distance = c["absolute_distance"].get<std::size_t>();
                if (c.contains("interference_length"))
                    s.cell.interference_length = c["interference_length"].get<std::size_t>();
            }
            if (s.tokens.size() != s.target_length)
                throw ValidationError("token count " + std::to_string(s.tokens.size()) +
                                      " does not match target_length " +
                                      std::to_string(s.target_length));
            if (s.answer_span.size() == 0) throw ValidationError("answer_span is empty");
            samples.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError(std::string("corpus: ") + e.what(), line_no);
        } catch (const ValidationError& e) {
            throw ParseError(std::string("corpus: ") + e.what(), line_no);
        }
    }
    return samples;
}

}  // namespace lcmon
