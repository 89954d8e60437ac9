// Acceptance checks, one pass/fail line each. argv[1] is the path to the
// command-line binary used by the end-to-end smoke check.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lcmon/analytics.hpp"
#include "lcmon/corpus.hpp"
#include "lcmon/engine.hpp"
#include "lcmon/metrics.hpp"
#include "lcmon/tokenizer.hpp"

namespace fs = std::filesystem;
using namespace lcmon;
using clock_type = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void run_criterion(const std::string& name, const std::function<bool()>& fn) {
    bool ok = false;
    std::string detail;
    try {
        ok = fn();
    } catch (const std::exception& e) {
        detail = std::string(" (") + e.what() + ")";
    }
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << detail << "\n";
    if (!ok) ++g_failures;
}

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

// Plain-loop re-derivation of the per-head retrieval score.
double oracle_retrieval_score(const AttentionTrace& trace, const NiahSample& sample,
                              std::size_t layer, std::size_t head) {
    std::set<TokenId> needle_ids;
    for (std::size_t i = sample.needle_span.begin; i < sample.needle_span.end; ++i)
        needle_ids.insert(sample.tokens[i]);
    std::set<TokenId> copied;
    for (const auto& step : trace.steps) {
        std::size_t j = step.argmax_positions[layer * trace.n_q_heads + head];
        if (j >= sample.needle_span.begin && j < sample.needle_span.end &&
            sample.tokens[j] == step.forced_token_id)
            copied.insert(step.forced_token_id);
    }
    return double(copied.size()) / double(needle_ids.size());
}

// Textbook product-moment formula, written independently of the library.
double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
    }
    double num = double(n) * sxy - sx * sy;
    double den = std::sqrt(double(n) * sxx - sx * sx) * std::sqrt(double(n) * syy - sy * sy);
    return num / den;
}

std::vector<double> oracle_ranks(const std::vector<double>& v) {
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t below = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++below;
            if (v[j] == v[i]) ++equal;
        }
        ranks[i] = double(below) + (double(equal) + 1.0) / 2.0;
    }
    return ranks;
}

NiahSample random_sample(std::mt19937_64& rng, std::size_t n_steps) {
    NiahSample s;
    s.sample_id = "rand";
    const std::size_t needle_len = 3 + rng() % 6;
    const std::size_t before = rng() % 10;
    const std::size_t mid = 1 + rng() % 10;
    s.tokens.resize(before + needle_len + mid + n_steps);
    for (auto& t : s.tokens) t = TokenId(rng() % 12);  // small vocab forces collisions
    s.needle_span = {before, before + needle_len};
    s.answer_span = {s.tokens.size() - n_steps, s.tokens.size()};
    return s;
}

AttentionTrace random_trace(std::mt19937_64& rng, const NiahSample& s, std::size_t nl,
                            std::size_t nh) {
    AttentionTrace t;
    t.sample_id = s.sample_id;
    t.n_layers = nl;
    t.n_q_heads = nh;
    for (std::size_t p = s.answer_span.begin; p < s.answer_span.end; ++p) {
        TraceStep step;
        step.forced_token_id = s.tokens[p];
        step.query_position = p - 1;
        step.argmax_positions.resize(nl * nh);
        for (auto& pos : step.argmax_positions) pos = rng() % (step.query_position + 1);
        t.steps.push_back(std::move(step));
    }
    return t;
}

bool run_cmd(const std::string& cmd) { return std::system(cmd.c_str()) == 0; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";

    run_criterion("retrieval-score oracle equivalence (1000 random traces, <10s)", [] {
        auto t0 = clock_type::now();
        std::mt19937_64 rng(4242);
        for (int trial = 0; trial < 1000; ++trial) {
            std::size_t nl = 1 + rng() % 4, nh = 1 + rng() % 4;
            auto s = random_sample(rng, 1 + rng() % 50);
            auto t = random_trace(rng, s, nl, nh);
            auto m = retrieval_scores(t, s);
            for (std::size_t l = 0; l < nl; ++l)
                for (std::size_t h = 0; h < nh; ++h)
                    if (m.at(l, h) != oracle_retrieval_score(t, s, l, h)) return false;
        }
        return seconds_since(t0) < 10.0;
    });

    run_criterion("planted retrieval head recovered exactly at threshold 0.1", [] {
        NiahSample s;
        s.tokens = {0, 10, 11, 12, 13, 14, 1, 2, 10, 11, 12, 13, 14};
        s.needle_span = {1, 6};
        s.answer_span = {8, 13};
        AttentionTrace t;
        t.n_layers = 2;
        t.n_q_heads = 4;
        for (std::size_t p = 8; p < 13; ++p) {
            TraceStep step;
            step.forced_token_id = s.tokens[p];
            step.query_position = p - 1;
            step.argmax_positions.assign(8, 0);
            if (p < 11) step.argmax_positions[1 * 4 + 2] = p - 7;  // layer 1 head 2 copies 3 of 5
            t.steps.push_back(std::move(step));
        }
        auto set = identify_retrieval_heads(retrieval_scores(t, s), 0.1);
        return set.heads.size() == 1 && set.heads[0].first == 1 && set.heads[0].second == 2;
    });

    run_criterion("perplexity closed forms and concatenation decomposition", [] {
        for (double v : {2.0, 256.0, 65536.0}) {
            std::vector<double> lps(9, std::log(1.0 / v));
            if (std::abs(answer_ppl(lps).ppl - v) > 1e-9) return false;
        }
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> dist(-6.0, 0.0);
        std::vector<double> a(11), b(17);
        for (auto& x : a) x = dist(rng);
        for (auto& x : b) x = dist(rng);
        auto cat = a;
        cat.insert(cat.end(), b.begin(), b.end());
        double weighted =
            (answer_ppl(a).mean_nll * 11.0 + answer_ppl(b).mean_nll * 17.0) / 28.0;
        return std::abs(answer_ppl(cat).ppl - std::exp(weighted)) < 1e-12;
    });

    run_criterion("scaling-fit recovery, exact and under noise", [] {
        const double A = -0.5, B = 12.0;
        CheckpointSeries exact{"ppl", {}};
        for (std::uint64_t n : {7ull, 55ull, 403ull, 2981ull})
            exact.points.emplace_back(n, A * std::log(double(n)) + B);
        auto f = fit_scaling_law(exact);
        if (std::abs(f.A - A) > 1e-9 || std::abs(f.B - B) > 1e-9) return false;

        const double sigma = 0.01;
        const std::size_t n_pts = 20;
        std::vector<double> xs;
        for (std::size_t i = 0; i < n_pts; ++i)
            xs.push_back(std::log(1e9 * std::pow(2.0, double(i))));
        double xbar = 0;
        for (double x : xs) xbar += x;
        xbar /= double(n_pts);
        double sxx = 0;
        for (double x : xs) sxx += (x - xbar) * (x - xbar);
        const double se_a = sigma / std::sqrt(sxx);
        const double se_b = sigma * std::sqrt(1.0 / double(n_pts) + xbar * xbar / sxx);

        int in_bound = 0;
        for (int trial = 0; trial < 1000; ++trial) {
            std::mt19937_64 rng(1000 + std::uint64_t(trial));
            std::normal_distribution<double> noise(0.0, sigma);
            CheckpointSeries s{"ppl", {}};
            for (std::size_t i = 0; i < n_pts; ++i) {
                auto n = std::uint64_t(1e9 * std::pow(2.0, double(i)));
                s.points.emplace_back(n, A * std::log(double(n)) + B + noise(rng));
            }
            auto fit = fit_scaling_law(s);
            if (std::abs(fit.A - A) <= 3.0 * se_a && std::abs(fit.B - B) <= 3.0 * se_b)
                ++in_bound;
        }
        return in_bound >= 990;
    });

    run_criterion("rank statistics match textbook oracles (ties included)", [] {
        std::mt19937_64 rng(77);
        std::uniform_int_distribution<int> val(0, 6);  // small range provokes ties
        for (int trial = 0; trial < 300; ++trial) {
            std::size_t n = 3 + rng() % 8;  // lengths up to 10
            std::vector<double> x(n), y(n);
            for (auto& v : x) v = val(rng);
            for (auto& v : y) v = val(rng);
            bool xconst = std::set<double>(x.begin(), x.end()).size() < 2;
            bool yconst = std::set<double>(y.begin(), y.end()).size() < 2;
            if (xconst || yconst) continue;
            if (std::abs(pearson(x, y).r - oracle_pearson(x, y)) > 1e-12) return false;
            double rho = oracle_pearson(oracle_ranks(x), oracle_ranks(y));
            if (std::abs(spearman(x, y).r - rho) > 1e-12) return false;
        }
        std::vector<double> up = {1, 2, 3, 4, 5, 6}, down = {9, 7, 5, 3, 1, -1};
        return spearman(up, up).r == 1.0 && spearman(up, down).r == -1.0 &&
               pearson(up, up).r == 1.0;
    });

    run_criterion("reference correlation-table means reproduced", [] {
        double m1 = series_mean({-0.9115, -0.9231, -0.6283});
        double m2 = series_mean({0.8552, 0.8927, 0.4977});
        return std::abs(m1 - (-0.8210)) < 5e-4 && std::abs(m2 - 0.7486) < 5e-4;
    });

    run_criterion("corpus exactness over a 7x11x2 grid plus interference sweeps", [] {
        auto tmpl = NiahTemplate::standard();
        TokenizerSpec spec;
        std::vector<std::size_t> lengths = {384, 512, 768, 1024, 2048, 4096, 8192};
        std::vector<double> depths;
        for (int i = 0; i <= 10; ++i) depths.push_back(i / 10.0);
        auto filler = FillerSource::synthetic(2, 16384);
        auto corpus = build_grid_corpus(tmpl, filler, lengths, depths, 2, spec, 3);
        if (corpus.size() != 154) return false;

        const std::size_t needle_len = tokenize(tmpl.needle_text, spec).size();
        const std::size_t tail = tokenize(tmpl.question_text, spec).size() +
                                 tokenize(tmpl.answer_marker, spec).size() +
                                 tokenize(tmpl.answer_text, spec).size();
        for (const auto& s : corpus) {
            if (s.tokens.size() != s.target_length) return false;
            const std::size_t budget = s.target_length - tail;
            auto expected = std::size_t(
                std::llround(s.depth * double(budget - needle_len)));
            if (s.needle_span.begin != expected) return false;
        }

        std::vector<TokenId> reference;
        for (std::size_t intf : {0u, 64u, 256u, 1024u}) {
            auto s = build_interference_sample(tmpl, filler, 2048, intf, spec, 9);
            if (s.after_len != 2048) return false;
            std::vector<TokenId> after(s.tokens.begin() + s.needle_span.end,
                                       s.tokens.begin() + s.needle_span.end + 2048);
            if (reference.empty())
                reference = after;
            else if (after != reference)
                return false;
        }
        return true;
    });

    run_criterion("engine invariants on the 2-layer toy configuration", [] {
        ModelConfig cfg;
        cfg.max_position = 4608;
        cfg.init_seed = 17;
        auto model = Model::init(cfg);

        std::mt19937_64 rng(99);
        std::vector<TokenId> tokens(96);
        for (auto& t : tokens) t = TokenId(rng() % 258);
        auto out = model.forward(tokens, CaptureMode::full);
        for (std::size_t p = 0; p < out.n_positions; ++p)
            for (std::size_t l = 0; l < 2; ++l)
                for (std::size_t h = 0; h < 8; ++h) {
                    const auto& row = out.rows[(p * 2 + l) * 8 + h];
                    // future positions hold no mass at all: the row stops at p
                    if (row.size() != p + 1) return false;
                    double sum = 0;
                    for (float v : row) sum += v;
                    if (std::abs(sum - 1.0) > 1e-5) return false;
                }

        // relative-position property: q.k dot depends only on the offset
        std::normal_distribution<double> nd(0.0, 1.0);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<float> q(8), k(8);
            for (auto& v : q) v = float(nd(rng));
            for (auto& v : k) v = float(nd(rng));
            for (std::size_t base_pos : {0ull, 777ull, 4000ull}) {
                auto q1 = q, k1 = k, q2 = q, k2 = k;
                rope_rotate(q1, 0, cfg.rope_base);
                rope_rotate(k1, 96, cfg.rope_base);
                rope_rotate(q2, base_pos, cfg.rope_base);
                rope_rotate(k2, base_pos + 96, cfg.rope_base);
                double d1 = 0, d2 = 0;
                for (std::size_t i = 0; i < 8; ++i) {
                    d1 += double(q1[i]) * k1[i];
                    d2 += double(q2[i]) * k2[i];
                }
                if (std::abs(d1 - d2) > 1e-4 * std::max(1.0, std::abs(d1))) return false;
            }
        }
        // isometry at positions up to 4096
        for (std::size_t pos : {1ull, 63ull, 1024ull, 4096ull}) {
            std::vector<float> v(8);
            for (auto& x : v) x = float(nd(rng));
            double before = 0;
            for (float x : v) before += double(x) * x;
            rope_rotate(v, pos, cfg.rope_base);
            double after = 0;
            for (float x : v) after += double(x) * x;
            if (std::abs(std::sqrt(after) - std::sqrt(before)) > 1e-6) return false;
        }

        auto gates = moe_gate({0.4, 1.9, -0.3, 1.1, 0.0}, 3);
        if (gates.size() != 3) return false;
        double gsum = 0;
        for (auto [e, w] : gates) gsum += w;
        if (std::abs(gsum - 1.0) > 1e-6) return false;

        auto again = Model::init(cfg).forward(tokens, CaptureMode::full);
        return again.logprobs == out.logprobs && again.argmax == out.argmax;
    });

    run_criterion("end-to-end smoke through the command line (<60s, rerun identical)",
                  [&cli] {
        if (cli.empty()) return false;
        auto t0 = clock_type::now();
        const fs::path base = fs::temp_directory_path() / "lcmon_accept";
        fs::remove_all(base);
        fs::create_directories(base);

        auto stage = [&](const fs::path& dir) {
            fs::create_directories(dir);
            std::string q = "\"" + cli + "\"";
            auto p = [&](const char* name) { return (dir / name).string(); };
            if (!run_cmd(q + " model-init --out-config " + p("cfg.json") + " --out-weights " +
                         p("w.bin") + " --seed 17 >/dev/null"))
                return false;
            if (!run_cmd(q + " gen --out " + p("corpus.jsonl") +
                         " --lengths 384,512,1024 --depths 0.0,0.5,1.0 --per-cell 2"
                         " --seed 11 >/dev/null"))
                return false;
            if (!run_cmd(q + " eval --corpus " + p("corpus.jsonl") + " --model-config " +
                         p("cfg.json") + " --weights " + p("w.bin") + " --out-ppl " +
                         p("ppl.jsonl") + " --out-grid " + p("grid.csv") + " >/dev/null"))
                return false;
            if (!run_cmd(q + " heads --corpus " + p("corpus.jsonl") + " --model-config " +
                         p("cfg.json") + " --weights " + p("w.bin") + " --out-matrix " +
                         p("matrix.csv") + " --out-heads " + p("heads.json") + " >/dev/null"))
                return false;
            if (!run_cmd(q + " report --grid " + p("grid.csv") + " --matrix " + p("matrix.csv") +
                         " --out-dir " + (dir / "report").string() + " >/dev/null"))
                return false;
            return true;
        };
        if (!stage(base / "run1")) return false;
        if (!stage(base / "run2")) return false;

        for (const char* f : {"corpus.jsonl", "ppl.jsonl", "grid.csv", "matrix.csv",
                              "matrix.csv.meta.json", "heads.json", "report/ppl_grid.svg",
                              "report/retrieval_heads.svg", "report/manifest.json"}) {
            auto a = slurp(base / "run1" / f), b = slurp(base / "run2" / f);
            if (a.empty() || a != b) return false;
        }
        return seconds_since(t0) < 60.0;
    });

    run_criterion("threshold monotonicity and top-k self-overlap", [] {
        std::mt19937_64 rng(123);
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        RetrievalScoreMatrix m{4, 8, {}, 1};
        m.scores.resize(32);
        for (auto& v : m.scores) v = dist(rng);

        std::vector<std::pair<std::size_t, std::size_t>> prev;
        bool first = true;
        for (double thr : {0.05, 0.1, 0.2, 0.5}) {
            auto set = identify_retrieval_heads(m, thr).heads;
            if (!first) {
                for (const auto& h : set)
                    if (std::find(prev.begin(), prev.end(), h) == prev.end()) return false;
                if (set.size() > prev.size()) return false;
            }
            prev = set;
            first = false;
        }
        for (std::size_t k = 1; k <= m.head_count(); ++k)
            if (top_k_overlap(m, m, k).overlap != k) return false;
        return true;
    });

    std::cout << (g_failures == 0 ? "ALL ACCEPTANCE CRITERIA PASSED"
                                  : "ACCEPTANCE FAILURES: " + std::to_string(g_failures))
              << "\n";
    return g_failures == 0 ? 0 : 1;
}
