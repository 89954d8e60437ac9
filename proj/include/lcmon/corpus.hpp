#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lcmon/tokenizer.hpp"

namespace lcmon {

// Half-open token index range [begin, end).
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool contains(std::size_t i) const { return i >= begin && i < end; }
    bool operator==(const Span&) const = default;
};

struct NiahTemplate {
    std::string needle_text;
    std::string question_text;
    std::string answer_text;
    std::string answer_marker;

    // The needle/question/answer used throughout unless overridden.
    static NiahTemplate standard();
    void validate() const;
};

// Which (length, depth) or (absolute_distance, interference) cell a sample
// belongs to. Grid samples carry length+depth; interference samples carry
// the other pair.
struct CellTag {
    std::optional<std::size_t> length;
    std::optional<double> depth;
    std::optional<std::size_t> absolute_distance;
    std::optional<std::size_t> interference_length;
    bool operator==(const CellTag&) const = default;
    std::string label() const;
};

struct NiahSample {
    std::string sample_id;
    std::vector<TokenId> tokens;
    Span needle_span;
    Span question_span;
    Span answer_span;
    std::size_t target_length = 0;
    double depth = 0.0;
    std::size_t before_len = 0;
    std::size_t after_len = 0;
    std::uint64_t seed = 0;
    CellTag cell;
};

// Haystack text source. Filler is drawn as a contiguous random window over
// the concatenated documents; the synthetic source generates deterministic
// word-salad text so no external corpus is required.
class FillerSource {
public:
    static FillerSource from_documents(std::vector<std::string> documents);
    static FillerSource synthetic(std::uint64_t seed, std::size_t min_bytes);

    // Contiguous window of n token ids starting at a seeded offset.
    std::vector<TokenId> window(std::uint64_t seed, std::size_t n) const;

    std::size_t total_tokens() const { return pool_.size(); }

private:
    std::vector<TokenId> pool_;
};

NiahSample build_sample(const NiahTemplate& tmpl, const FillerSource& filler,
                        std::size_t target_length, double depth,
                        const TokenizerSpec& spec, std::uint64_t seed);

NiahSample build_interference_sample(const NiahTemplate& tmpl, const FillerSource& filler,
                                     std::size_t absolute_distance,
                                     std::size_t interference_length,
                                     const TokenizerSpec& spec, std::uint64_t seed);

std::vector<NiahSample> build_grid_corpus(const NiahTemplate& tmpl, const FillerSource& filler,
                                          const std::vector<std::size_t>& lengths,
                                          const std::vector<double>& depths,
                                          std::size_t samples_per_cell,
                                          const TokenizerSpec& spec, std::uint64_t seed);

// Line-delimited corpus format: one JSON record per line, field names frozen.
void write_corpus(const std::string& path, const std::vector<NiahSample>& samples);
std::vector<NiahSample> read_corpus(const std::string& path);

// Deterministic 64-bit mixer used to derive per-sample seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace lcmon
