// lcmon: corpus generation, engine evaluation, retrieval-head scoring,
// convergence analytics, and report rendering as one CLI.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <nlohmann/json.hpp>

#include "lcmon/analytics.hpp"
#include "lcmon/corpus.hpp"
#include "lcmon/engine.hpp"
#include "lcmon/errors.hpp"
#include "lcmon/ingest.hpp"
#include "lcmon/metrics.hpp"
#include "lcmon/report.hpp"
#include "lcmon/tokenizer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace lcmon;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitComputation = 4;

// Relative output paths are resolved against LCMON_OUT_DIR when it is set.
std::string out_path(const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    const char* base = std::getenv("LCMON_OUT_DIR");
    if (!base || !*base) return path;
    return (fs::path(base) / path).string();
}

void ensure_parent(const std::string& path) {
    auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

// Route a library writer through a temp file so readers never see a partial
// artifact.
template <class Fn>
void write_atomically(const std::string& path, Fn&& writer) {
    ensure_parent(path);
    const std::string tmp = path + ".tmp";
    writer(tmp);
    fs::rename(tmp, path);
}

void write_matrix_atomically(const std::string& path, const RetrievalScoreMatrix& m,
                             const ScoreMatrixMeta& meta) {
    ensure_parent(path);
    const std::string tmp = path + ".tmp";
    write_score_matrix(tmp, m, meta);
    fs::rename(tmp, path);
    fs::rename(tmp + ".meta.json", path + ".meta.json");
}

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string fmt_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------- gen

struct GenOpts {
    std::string out;
    std::string variant = "grid";
    std::vector<std::size_t> lengths = {1024, 2048, 4096, 8192, 16384, 32768, 65536};
    std::vector<double> depths = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::size_t per_cell = 5;
    std::vector<std::size_t> abs_distances;
    std::vector<std::size_t> interferences;
    std::uint64_t seed = 0;
    std::size_t filler_bytes = 0;  // 0 means sized automatically
};

std::string run_gen(const GenOpts& o) {
    auto tmpl = NiahTemplate::standard();
    TokenizerSpec spec;
    std::vector<NiahSample> corpus;

    if (o.variant == "grid") {
        std::size_t need = o.filler_bytes;
        if (need == 0) {
            for (auto l : o.lengths) need = std::max(need, l);
            need += 8192;
        }
        auto filler = FillerSource::synthetic(mix_seed(o.seed, 0xF111), need);
        corpus = build_grid_corpus(tmpl, filler, o.lengths, o.depths, o.per_cell, spec, o.seed);
    } else if (o.variant == "interference") {
        if (o.abs_distances.empty() || o.interferences.empty())
            throw UsageError("interference variant needs --abs-distance and --interference");
        std::size_t need = o.filler_bytes;
        if (need == 0) {
            for (auto v : o.abs_distances) need = std::max(need, v);
            for (auto v : o.interferences) need = std::max(need, v);
            need += 8192;
        }
        auto filler = FillerSource::synthetic(mix_seed(o.seed, 0xF111), need);
        std::size_t cell_index = 0;
        for (auto abs_d : o.abs_distances) {
            for (auto intf : o.interferences) {
                for (std::size_t r = 0; r < o.per_cell; ++r) {
                    std::uint64_t s = mix_seed(mix_seed(mix_seed(o.seed, 0x17F), cell_index), r);
                    auto sample = build_interference_sample(tmpl, filler, abs_d, intf, spec, s);
                    char buf[96];
                    std::snprintf(buf, sizeof(buf), "A%zu_I%zu_R%zu", abs_d, intf, r);
                    sample.sample_id = buf;
                    corpus.push_back(std::move(sample));
                }
                ++cell_index;
            }
        }
    } else {
        throw UsageError("unknown --variant '" + o.variant + "' (grid or interference)");
    }

    const std::string path = out_path(o.out);
    write_atomically(path, [&](const std::string& p) { write_corpus(p, corpus); });
    std::cout << "gen: wrote " << corpus.size() << " samples (seed " << o.seed << ") to " << path
              << "\n";
    return path;
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
    std::string corpus;
    std::string model_config;
    std::string weights;
    std::string traces;  // logprob trace path, alternative to the engine
    std::string out_ppl;
    std::string out_grid;
    std::string out_traces;  // export engine logprobs in the interchange format
    std::string out_binary;
    std::string agg = "geometric";
    bool decode = false;
    std::uint64_t checkpoint_tokens = 0;
};

void run_eval(const EvalOpts& o) {
    auto corpus = read_corpus(o.corpus);
    if (corpus.empty()) throw UsageError("eval: corpus '" + o.corpus + "' holds no samples");
    const bool engine_path = !o.weights.empty();
    if (!engine_path && o.traces.empty())
        throw UsageError("eval: provide --model-config/--weights or --traces");
    if (engine_path && o.model_config.empty())
        throw UsageError("eval: --weights needs --model-config");

    PplAggregation agg;
    if (o.agg == "geometric")
        agg = PplAggregation::geometric;
    else if (o.agg == "arithmetic")
        agg = PplAggregation::arithmetic_token;
    else
        throw UsageError("eval: unknown --agg '" + o.agg + "' (geometric or arithmetic)");

    std::vector<AnswerPpl> records;
    std::vector<LogprobTraceRecord> exported;

    if (engine_path) {
        auto model = Model::load(o.model_config, o.weights);
        std::vector<int> binary_scores;
        std::ostringstream binary_csv;
        binary_csv << "sample_id,binary_score\n";
        for (const auto& sample : corpus) {
            auto lps = model.answer_logprobs(sample);
            auto r = answer_ppl(lps, agg);
            r.sample_id = sample.sample_id;
            r.cell = sample.cell;
            records.push_back(std::move(r));
            if (!o.out_traces.empty())
                exported.push_back({sample.sample_id, o.checkpoint_tokens, lps, sample.cell});
            if (o.decode) {
                std::vector<TokenId> prompt(sample.tokens.begin(),
                                            sample.tokens.begin() + sample.answer_span.begin);
                auto decoded = model.greedy_decode(prompt, sample.answer_span.size());
                std::vector<TokenId> gold_toks(sample.tokens.begin() + sample.answer_span.begin,
                                               sample.tokens.begin() + sample.answer_span.end);
                int score = niah_binary_score(detokenize(decoded), detokenize(gold_toks));
                binary_scores.push_back(score);
                binary_csv << sample.sample_id << ',' << score << '\n';
            }
        }
        if (o.decode && !o.out_binary.empty()) {
            ensure_parent(out_path(o.out_binary));
            atomic_write(out_path(o.out_binary), binary_csv.str());
        }
        if (o.decode && !binary_scores.empty()) {
            double mean = 0;
            for (int s : binary_scores) mean += s;
            std::cout << "eval: binary NIAH score "
                      << fmt_g(mean / double(binary_scores.size())) << " over "
                      << binary_scores.size() << " samples\n";
        }
    } else {
        if (o.decode) throw UsageError("eval: --decode needs the engine path");
        std::set<std::string> known;
        for (const auto& s : corpus) known.insert(s.sample_id);
        for (const auto& rec : read_logprob_traces(o.traces)) {
            if (!known.count(rec.sample_id))
                throw ValidationError("eval: trace sample_id '" + rec.sample_id +
                                      "' is not in the corpus");
            auto r = answer_ppl(rec.answer_token_logprobs, agg);
            r.sample_id = rec.sample_id;
            r.cell = rec.cell;
            records.push_back(std::move(r));
        }
        if (records.empty()) throw UsageError("eval: trace file holds no records");
    }

    if (!o.out_ppl.empty())
        write_atomically(out_path(o.out_ppl),
                         [&](const std::string& p) { write_answer_ppls(p, records); });
    if (!o.out_traces.empty())
        write_atomically(out_path(o.out_traces),
                         [&](const std::string& p) { write_logprob_traces(p, exported); });
    if (!o.out_grid.empty()) {
        auto grid = ppl_grid(records);
        // write_grid emits a counts sidecar next to the table; rename both
        const std::string path = out_path(o.out_grid);
        ensure_parent(path);
        write_grid(path + ".tmp", grid);
        fs::rename(path + ".tmp", path);
        fs::rename(path + ".tmp.meta.json", path + ".meta.json");
        std::cout << "eval: grid " << grid.lengths.size() << "x" << grid.depths.size()
                  << " written to " << out_path(o.out_grid) << "\n";
    }
    std::cout << "eval: " << records.size() << " samples scored\n";
}

// ---------------------------------------------------------------- heads

struct HeadsOpts {
    std::string corpus;
    std::string model_config;
    std::string weights;
    std::string traces;  // attention trace path, alternative to the engine
    std::string out_matrix;
    std::string out_heads;
    double threshold = 0.1;
    bool multiset = false;
    bool decode = false;
    std::uint64_t checkpoint_tokens = 0;
};

void run_heads(const HeadsOpts& o) {
    auto corpus = read_corpus(o.corpus);
    if (corpus.empty()) throw UsageError("heads: corpus '" + o.corpus + "' holds no samples");
    const bool engine_path = !o.weights.empty();
    if (!engine_path && o.traces.empty())
        throw UsageError("heads: provide --model-config/--weights or --traces");

    std::vector<RetrievalScoreMatrix> per_sample;
    if (engine_path) {
        if (o.model_config.empty()) throw UsageError("heads: --weights needs --model-config");
        auto model = Model::load(o.model_config, o.weights);
        for (const auto& sample : corpus) {
            auto trace = model.trace_answer(sample, CaptureMode::argmax, o.decode);
            per_sample.push_back(retrieval_scores(trace, sample, o.multiset));
        }
    } else {
        std::map<std::string, const NiahSample*> by_id;
        for (const auto& s : corpus) by_id[s.sample_id] = &s;
        for (const auto& rec : read_attention_traces(o.traces)) {
            auto it = by_id.find(rec.sample_id);
            if (it == by_id.end())
                throw ValidationError("heads: trace sample_id '" + rec.sample_id +
                                      "' is not in the corpus");
            per_sample.push_back(retrieval_scores(to_trace(rec), *it->second, o.multiset));
        }
        if (per_sample.empty()) throw UsageError("heads: trace file holds no records");
    }

    auto matrix = aggregate_scores(per_sample);
    if (!o.out_matrix.empty())
        write_matrix_atomically(out_path(o.out_matrix), matrix,
                                {o.checkpoint_tokens, matrix.n_samples_aggregated, o.threshold});

    auto heads = identify_retrieval_heads(matrix, o.threshold);
    if (!o.out_heads.empty()) {
        json j;
        j["threshold"] = heads.threshold_used;
        j["count"] = heads.heads.size();
        j["heads"] = json::array();
        for (auto [l, h] : heads.heads)
            j["heads"].push_back({{"layer", l}, {"head", h}, {"score", matrix.at(l, h)}});
        ensure_parent(out_path(o.out_heads));
        atomic_write(out_path(o.out_heads), j.dump(2) + "\n");
    }
    std::cout << "heads: " << heads.heads.size() << " of " << matrix.head_count()
              << " heads above threshold " << fmt_g(o.threshold) << " ("
              << matrix.n_samples_aggregated << " samples)\n";
}

// ---------------------------------------------------------------- stability

struct StabilityOpts {
    std::string a, b, out;
    std::size_t k = 30;
};

void run_stability(const StabilityOpts& o) {
    auto report = top_k_overlap(read_score_matrix(o.a), read_score_matrix(o.b), o.k);
    if (!o.out.empty())
        write_atomically(out_path(o.out),
                         [&](const std::string& p) { write_stability(p, report); });
    std::cout << "stability: overlap " << report.overlap << "/" << report.k << ", spearman rho "
              << fmt_g(report.spearman_rho) << " (p " << fmt_g(report.p_value) << ")\n";
}

// ---------------------------------------------------------------- fit

struct FitOpts {
    std::string series, metric, out, out_curve;
    double plateau_epsilon = 0.0;
    std::size_t plateau_window = 3;
};

void run_fit(const FitOpts& o) {
    auto all = read_series(o.series);
    if (all.empty()) throw UsageError("fit: series file holds no rows");
    const CheckpointSeries* chosen = nullptr;
    if (o.metric.empty()) {
        chosen = &all.front();
    } else {
        for (const auto& s : all)
            if (s.metric_name == o.metric) chosen = &s;
        if (!chosen) throw UsageError("fit: metric '" + o.metric + "' is not in the file");
    }

    CheckpointSeries kept{chosen->metric_name, {}};
    std::size_t excluded = 0;
    for (auto [n, v] : chosen->points) {
        if (n == 0) {
            ++excluded;
            std::cout << "fit: excluded row with checkpoint_tokens=0 (value " << fmt_g(v)
                      << ")\n";
        } else {
            kept.points.emplace_back(n, v);
        }
    }
    if (kept.points.size() < 2)
        throw UsageError("fit: need at least 2 positive-N points, have " +
                         std::to_string(kept.points.size()));

    auto fit = fit_scaling_law(kept);
    std::cout << "fit: " << kept.metric_name << " ~ " << fmt_g(fit.A) << " * ln(N) + "
              << fmt_g(fit.B) << "  (r^2 " << fmt_g(fit.r_squared) << ", " << kept.points.size()
              << " points, " << excluded << " excluded)\n";
    std::cout << "fit: residuals";
    for (double r : fit.residuals) std::cout << ' ' << fmt_g(r);
    std::cout << "\n";

    if (o.plateau_epsilon > 0.0) {
        auto idx = detect_plateau(kept, o.plateau_epsilon, o.plateau_window);
        if (idx)
            std::cout << "fit: plateau from checkpoint_tokens=" << kept.points[*idx].first
                      << "\n";
        else
            std::cout << "fit: no plateau detected\n";
    }

    if (!o.out.empty())
        write_atomically(out_path(o.out), [&](const std::string& p) { write_fit(p, fit); });
    if (!o.out_curve.empty()) {
        CheckpointSeries curve{kept.metric_name + "_fit", {}};
        for (auto [n, v] : kept.points)
            curve.points.emplace_back(n, fit.A * std::log(double(n)) + fit.B);
        write_atomically(out_path(o.out_curve),
                         [&](const std::string& p) { write_series(p, {curve}); });
    }
}

// ---------------------------------------------------------------- correlate

struct CorrelateOpts {
    std::string series, out;
    bool mean_row = false;
    bool permutation = false;
    bool rank = false;
};

void run_correlate(const CorrelateOpts& o) {
    auto all = read_series(o.series);
    if (all.size() < 2) throw UsageError("correlate: need at least 2 series, have " +
                                         std::to_string(all.size()));
    std::ostringstream csv;
    csv << "series_a,series_b,r,p\n";
    std::vector<double> rs;
    for (std::size_t i = 0; i < all.size(); ++i) {
        for (std::size_t j = i + 1; j < all.size(); ++j) {
            auto [x, y] = align_series(all[i], all[j]);
            Correlation c = o.rank ? spearman(x, y) : pearson(x, y);
            if (o.permutation) c.p = pearson_permutation_p(x, y);
            rs.push_back(c.r);
            csv << all[i].metric_name << ',' << all[j].metric_name << ',' << fmt_full(c.r) << ','
                << fmt_full(c.p) << '\n';
            std::cout << "correlate: " << all[i].metric_name << " vs " << all[j].metric_name
                      << "  r " << fmt_g(c.r) << "  p " << fmt_g(c.p) << "\n";
        }
    }
    if (o.mean_row) {
        double m = series_mean(rs);
        csv << "mean,," << fmt_full(m) << ",\n";
        std::cout << "correlate: mean r " << fmt_g(m) << "\n";
    }
    if (!o.out.empty()) {
        ensure_parent(out_path(o.out));
        atomic_write(out_path(o.out), csv.str());
    }
}

// ---------------------------------------------------------------- report

struct ReportOpts {
    std::string grid, matrix, series, out_dir;
    bool log_x = false;
    bool marginal = false;
};

int run_report(const ReportOpts& o) {
    const std::string dir = out_path(o.out_dir.empty() ? "." : o.out_dir);
    fs::create_directories(dir);
    std::vector<ManifestEntry> manifest;

    auto emit = [&](const std::string& name, const std::string& svg) {
        atomic_write((fs::path(dir) / name).string(), svg);
        manifest.push_back({name, crc32_of(svg), svg.size()});
    };
    auto available = [&](const std::string& path, const char* what) {
        if (path.empty()) return false;
        if (!fs::exists(path)) {
            std::cerr << "report: skipping " << what << ", missing file " << path << "\n";
            return false;
        }
        return true;
    };

    if (available(o.grid, "perplexity heatmap")) {
        auto grid = read_grid(o.grid);
        HeatmapInput in;
        in.title = "answer perplexity by context length and needle depth";
        in.x_axis_label = "needle depth";
        in.y_axis_label = "context length";
        for (double d : grid.depths) in.x_labels.push_back(fmt_g(d));
        for (auto l : grid.lengths) in.y_labels.push_back(std::to_string(l));
        in.values = grid.cells;
        emit("ppl_grid.svg", render_heatmap_svg(in));
        if (o.marginal) {
            CurveInput ci;
            ci.title = "depth marginal (mean perplexity over lengths)";
            ci.x_axis_label = "needle depth";
            ci.y_axis_label = "mean perplexity";
            CurveSeries s{"all lengths", {}};
            auto m = depth_marginal(grid);
            for (std::size_t i = 0; i < m.size(); ++i) s.points.emplace_back(grid.depths[i], m[i]);
            ci.series.push_back(std::move(s));
            emit("depth_marginal.svg", render_curves_svg(ci));
        }
    }
    if (available(o.matrix, "retrieval-head heatmap")) {
        auto m = read_score_matrix(o.matrix);
        HeatmapInput in;
        in.title = "retrieval scores by layer and head";
        in.x_axis_label = "head";
        in.y_axis_label = "layer";
        for (std::size_t h = 0; h < m.n_heads; ++h) in.x_labels.push_back(std::to_string(h));
        for (std::size_t l = 0; l < m.n_layers; ++l) in.y_labels.push_back(std::to_string(l));
        in.values = m.scores;
        emit("retrieval_heads.svg", render_heatmap_svg(in));
    }
    if (available(o.series, "checkpoint curves")) {
        auto all = read_series(o.series);
        CurveInput ci;
        ci.title = "metrics across training checkpoints";
        ci.x_axis_label = "checkpoint tokens";
        ci.y_axis_label = "value";
        ci.log_x = o.log_x;
        for (const auto& s : all) {
            CurveSeries cs{s.metric_name, {}};
            for (auto [n, v] : s.points) cs.points.emplace_back(double(n), v);
            ci.series.push_back(std::move(cs));
        }
        emit("series.svg", render_curves_svg(ci));
    }

    if (manifest.empty()) throw UsageError("report: nothing rendered (no readable inputs)");
    write_manifest((fs::path(dir) / "manifest.json").string(), manifest);
    std::cout << "report: rendered " << manifest.size() << " artifacts into " << dir << "\n";
    return 0;
}

// ---------------------------------------------------------------- model-init

struct InitOpts {
    std::string out_config, out_weights;
    ModelConfig config;
    std::int32_t moe_experts = 0, moe_active = 0;
    bool moe_no_shared = false;
};

void run_model_init(const InitOpts& o) {
    ModelConfig cfg = o.config;
    if (o.moe_experts > 0) cfg.moe = MoeConfig{o.moe_experts, o.moe_active, !o.moe_no_shared};
    cfg.validate();
    auto model = Model::init(cfg);
    write_atomically(out_path(o.out_config),
                     [&](const std::string& p) { write_model_config(p, cfg); });
    write_atomically(out_path(o.out_weights),
                     [&](const std::string& p) { model.save_weights(p); });
    char crc[16];
    std::snprintf(crc, sizeof(crc), "%08x", model.weight_checksum());
    std::cout << "model-init: " << cfg.n_layers << " layers, d_model " << cfg.d_model
              << ", checksum " << crc << "\n";
}

// ---------------------------------------------------------------- monitor

struct MonitorOpts {
    std::string out_dir;
    std::vector<std::size_t> lengths = {512, 1024};
    std::vector<double> depths = {0.0, 0.5, 1.0};
    std::size_t per_cell = 1;
    std::uint64_t seed = 0;
    std::string model_config, weights;
    std::string prev_matrix, series;
    double threshold = 0.1;
    std::uint64_t checkpoint_tokens = 0;
};

void run_monitor(const MonitorOpts& o) {
    const fs::path dir = out_path(o.out_dir);
    fs::create_directories(dir);

    GenOpts gen;
    gen.out = (dir / "corpus.jsonl").string();
    gen.lengths = o.lengths;
    gen.depths = o.depths;
    gen.per_cell = o.per_cell;
    gen.seed = o.seed;
    run_gen(gen);

    std::string cfg_path = o.model_config, w_path = o.weights;
    if (w_path.empty()) {
        InitOpts init;
        init.out_config = (dir / "model_config.json").string();
        init.out_weights = (dir / "weights.bin").string();
        init.config.init_seed = o.seed;
        run_model_init(init);
        cfg_path = init.out_config;
        w_path = init.out_weights;
    }

    EvalOpts eval;
    eval.corpus = gen.out;
    eval.model_config = cfg_path;
    eval.weights = w_path;
    eval.out_ppl = (dir / "answer_ppl.jsonl").string();
    eval.out_grid = (dir / "ppl_grid.csv").string();
    eval.checkpoint_tokens = o.checkpoint_tokens;
    run_eval(eval);

    HeadsOpts heads;
    heads.corpus = gen.out;
    heads.model_config = cfg_path;
    heads.weights = w_path;
    heads.out_matrix = (dir / "head_scores.csv").string();
    heads.out_heads = (dir / "retrieval_heads.json").string();
    heads.threshold = o.threshold;
    heads.checkpoint_tokens = o.checkpoint_tokens;
    run_heads(heads);

    if (!o.prev_matrix.empty()) {
        StabilityOpts st;
        st.a = o.prev_matrix;
        st.b = heads.out_matrix;
        auto m = read_score_matrix(heads.out_matrix);
        st.k = std::min<std::size_t>(30, m.head_count());
        st.out = (dir / "stability.json").string();
        run_stability(st);
    }
    if (!o.series.empty()) {
        FitOpts fit;
        fit.series = o.series;
        fit.out = (dir / "scaling_fit.json").string();
        run_fit(fit);
    }

    ReportOpts rep;
    rep.grid = eval.out_grid;
    rep.matrix = heads.out_matrix;
    rep.series = o.series;
    rep.out_dir = dir.string();
    rep.marginal = true;
    run_report(rep);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"long-context training diagnostics: NIAH corpora, answer perplexity, "
                 "retrieval-head scoring, convergence analytics, SVG reports"};
    app.require_subcommand(1);

    auto gen = std::make_shared<GenOpts>();
    auto* c_gen = app.add_subcommand("gen", "generate a NIAH evaluation corpus");
    c_gen->add_option("--out", gen->out, "corpus output path (JSONL)")->required();
    c_gen->add_option("--variant", gen->variant, "grid or interference");
    c_gen->add_option("--lengths", gen->lengths, "context lengths in tokens")->delimiter(',');
    c_gen->add_option("--depths", gen->depths, "needle depths in [0,1]")->delimiter(',');
    c_gen->add_option("--per-cell", gen->per_cell, "samples per cell");
    c_gen->add_option("--abs-distance", gen->abs_distances,
                      "needle-to-question distances (interference variant)")
        ->delimiter(',');
    c_gen->add_option("--interference", gen->interferences,
                      "interference context lengths (interference variant)")
        ->delimiter(',');
    c_gen->add_option("--seed", gen->seed, "corpus seed");
    c_gen->add_option("--filler-bytes", gen->filler_bytes, "synthetic filler pool size");
    c_gen->callback([gen] { run_gen(*gen); });

    auto eval = std::make_shared<EvalOpts>();
    auto* c_eval = app.add_subcommand("eval", "score answer perplexity over a corpus");
    c_eval->add_option("--corpus", eval->corpus, "corpus path")->required();
    c_eval->add_option("--model-config", eval->model_config, "engine config path");
    c_eval->add_option("--weights", eval->weights, "engine weights path");
    c_eval->add_option("--traces", eval->traces, "logprob trace path (instead of the engine)");
    c_eval->add_option("--out-ppl", eval->out_ppl, "per-sample records output (JSONL)");
    c_eval->add_option("--out-grid", eval->out_grid, "aggregated grid output (CSV)");
    c_eval->add_option("--out-traces", eval->out_traces, "export engine logprob traces");
    c_eval->add_option("--out-binary", eval->out_binary, "binary-score output (CSV)");
    c_eval->add_option("--agg", eval->agg, "geometric or arithmetic");
    c_eval->add_flag("--decode", eval->decode, "also greedy-decode and score binary matches");
    c_eval->add_option("--checkpoint-tokens", eval->checkpoint_tokens,
                       "checkpoint label for exported traces");
    c_eval->callback([eval] { run_eval(*eval); });

    auto heads = std::make_shared<HeadsOpts>();
    auto* c_heads = app.add_subcommand("heads", "score retrieval heads from attention");
    c_heads->add_option("--corpus", heads->corpus, "corpus path")->required();
    c_heads->add_option("--model-config", heads->model_config, "engine config path");
    c_heads->add_option("--weights", heads->weights, "engine weights path");
    c_heads->add_option("--traces", heads->traces, "attention trace path (instead of the engine)");
    c_heads->add_option("--out-matrix", heads->out_matrix, "score matrix output (CSV)");
    c_heads->add_option("--out-heads", heads->out_heads, "identified head set output (JSON)");
    c_heads->add_option("--threshold", heads->threshold, "retrieval-head threshold");
    c_heads->add_flag("--multiset", heads->multiset, "count needle tokens with multiplicity");
    c_heads->add_flag("--decode", heads->decode, "attribute decoded tokens instead of forced");
    c_heads->add_option("--checkpoint-tokens", heads->checkpoint_tokens,
                        "checkpoint label for the matrix sidecar");
    c_heads->callback([heads] { run_heads(*heads); });

    auto stab = std::make_shared<StabilityOpts>();
    auto* c_stab = app.add_subcommand("stability", "compare two head-score matrices");
    c_stab->add_option("--a", stab->a, "first score matrix")->required();
    c_stab->add_option("--b", stab->b, "second score matrix")->required();
    c_stab->add_option("--k", stab->k, "top-k for the overlap");
    c_stab->add_option("--out", stab->out, "stability report output (JSON)");
    c_stab->callback([stab] { run_stability(*stab); });

    auto fit = std::make_shared<FitOpts>();
    auto* c_fit = app.add_subcommand("fit", "fit value ~ A*ln(N) + B over checkpoints");
    c_fit->add_option("--series", fit->series, "series path (CSV)")->required();
    c_fit->add_option("--metric", fit->metric, "metric name (default: first in file)");
    c_fit->add_option("--out", fit->out, "fit record output (JSON)");
    c_fit->add_option("--out-curve", fit->out_curve, "fitted-curve samples output (CSV)");
    c_fit->add_option("--plateau-epsilon", fit->plateau_epsilon,
                      "relative change bound for plateau detection (0 disables)");
    c_fit->add_option("--plateau-window", fit->plateau_window, "plateau window size");
    c_fit->callback([fit] { run_fit(*fit); });

    auto corr = std::make_shared<CorrelateOpts>();
    auto* c_corr = app.add_subcommand("correlate", "pairwise correlations between series");
    c_corr->add_option("--series", corr->series, "series path (CSV)")->required();
    c_corr->add_option("--out", corr->out, "correlation table output (CSV)");
    c_corr->add_flag("--mean", corr->mean_row, "append the mean-r row");
    c_corr->add_flag("--rank", corr->rank, "rank correlation instead of product-moment");
    c_corr->add_flag("--permutation", corr->permutation, "exact permutation p (n <= 8)");
    c_corr->callback([corr] { run_correlate(*corr); });

    auto rep = std::make_shared<ReportOpts>();
    auto* c_rep = app.add_subcommand("report", "render SVG heatmaps/curves plus a manifest");
    c_rep->add_option("--grid", rep->grid, "perplexity grid (CSV)");
    c_rep->add_option("--matrix", rep->matrix, "head-score matrix (CSV)");
    c_rep->add_option("--series", rep->series, "checkpoint series (CSV)");
    c_rep->add_option("--out-dir", rep->out_dir, "output directory")->required();
    c_rep->add_flag("--log-x", rep->log_x, "log-scale checkpoint axis");
    c_rep->add_flag("--marginal", rep->marginal, "also render the depth marginal");
    c_rep->callback([rep] { run_report(*rep); });

    auto init = std::make_shared<InitOpts>();
    auto* c_init = app.add_subcommand("model-init", "initialize toy engine weights");
    c_init->add_option("--out-config", init->out_config, "config output (JSON)")->required();
    c_init->add_option("--out-weights", init->out_weights, "weights output")->required();
    c_init->add_option("--layers", init->config.n_layers, "decoder layers");
    c_init->add_option("--d-model", init->config.d_model, "model width");
    c_init->add_option("--q-heads", init->config.n_q_heads, "query heads");
    c_init->add_option("--kv-heads", init->config.n_kv_heads, "key/value heads");
    c_init->add_option("--head-dim", init->config.head_dim, "head dimension");
    c_init->add_option("--ffn", init->config.ffn_hidden, "feed-forward hidden width");
    c_init->add_option("--rope-base", init->config.rope_base, "rotary base");
    c_init->add_option("--max-pos", init->config.max_position, "maximum sequence length");
    c_init->add_option("--seed", init->config.init_seed, "weight init seed");
    c_init->add_option("--moe-experts", init->moe_experts, "expert count (0 = dense)");
    c_init->add_option("--moe-active", init->moe_active, "active experts per token");
    c_init->add_flag("--moe-no-shared", init->moe_no_shared, "drop the shared expert");
    c_init->callback([init] { run_model_init(*init); });

    auto mon = std::make_shared<MonitorOpts>();
    auto* c_mon = app.add_subcommand("monitor",
                                     "chain gen, eval, heads, stability, fit, and report");
    c_mon->add_option("--out-dir", mon->out_dir, "checkpoint output directory")->required();
    c_mon->add_option("--lengths", mon->lengths, "context lengths")->delimiter(',');
    c_mon->add_option("--depths", mon->depths, "needle depths")->delimiter(',');
    c_mon->add_option("--per-cell", mon->per_cell, "samples per cell");
    c_mon->add_option("--seed", mon->seed, "corpus and init seed");
    c_mon->add_option("--model-config", mon->model_config, "engine config path");
    c_mon->add_option("--weights", mon->weights, "engine weights (default: init a toy model)");
    c_mon->add_option("--prev-matrix", mon->prev_matrix,
                      "previous checkpoint's score matrix for stability");
    c_mon->add_option("--series", mon->series, "benchmark/metric series for fitting");
    c_mon->add_option("--threshold", mon->threshold, "retrieval-head threshold");
    c_mon->add_option("--checkpoint-tokens", mon->checkpoint_tokens, "checkpoint label");
    c_mon->callback([mon] { run_monitor(*mon); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ComputationError& e) {
        std::cerr << "computation error: " << e.what() << "\n";
        return kExitComputation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
