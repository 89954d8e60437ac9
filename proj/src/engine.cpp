#include "lcmon/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "lcmon/errors.hpp"

namespace lcmon {

using json = nlohmann::ordered_json;

void ModelConfig::validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("model config: " + what); };
    if (n_layers < 1) fail("n_layers must be >= 1");
    if (d_model < 1) fail("d_model must be >= 1");
    if (n_q_heads < 1 || n_kv_heads < 1) fail("head counts must be >= 1");
    if (n_q_heads % n_kv_heads != 0) fail("n_q_heads must be divisible by n_kv_heads");
    if (head_dim < 2 || head_dim % 2 != 0) fail("head_dim must be even and >= 2");
    if (ffn_hidden < 1) fail("ffn_hidden must be >= 1");
    if (vocab_size < 2) fail("vocab_size must be >= 2");
    if (!(rope_base > 1.0)) fail("rope_base must be > 1");
    if (max_position < 1) fail("max_position must be >= 1");
    if (moe) {
        if (moe->n_experts < 1) fail("moe.n_experts must be >= 1");
        if (moe->n_active < 1 || moe->n_active > moe->n_experts)
            fail("moe.n_active must satisfy 1 <= n_active <= n_experts");
    }
}

ModelConfig read_model_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open model config: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("model config " + path + ": " + e.what());
    }
    ModelConfig c;
    try {
        c.n_layers = j.at("n_layers").get<std::int32_t>();
        c.d_model = j.at("d_model").get<std::int32_t>();
        c.n_q_heads = j.at("n_q_heads").get<std::int32_t>();
        c.n_kv_heads = j.at("n_kv_heads").get<std::int32_t>();
        c.head_dim = j.at("head_dim").get<std::int32_t>();
        c.ffn_hidden = j.at("ffn_hidden").get<std::int32_t>();
        c.vocab_size = j.at("vocab_size").get<std::int32_t>();
        c.rope_base = j.at("rope_base").get<double>();
        c.max_position = j.at("max_position").get<std::int32_t>();
        if (j.contains("moe") && !j["moe"].is_null()) {
            MoeConfig m;
            m.n_experts = j["moe"].at("n_experts").get<std::int32_t>();
            m.n_active = j["moe"].at("n_active").get<std::int32_t>();
            m.shared_expert = j["moe"].value("shared_expert", true);
            c.moe = m;
        }
        c.init_seed = j.value("init_seed", std::uint64_t{0});
    } catch (const json::exception& e) {
        throw ValidationError("model config " + path + ": " + e.what());
    }
    c.validate();
    return c;
}

void write_model_config(const std::string& path, const ModelConfig& c) {
    json j;
    j["n_layers"] = c.n_layers;
    j["d_model"] = c.d_model;
    j["n_q_heads"] = c.n_q_heads;
    j["n_kv_heads"] = c.n_kv_heads;
    j["head_dim"] = c.head_dim;
    j["ffn_hidden"] = c.ffn_hidden;
    j["vocab_size"] = c.vocab_size;
    j["rope_base"] = c.rope_base;
    j["max_position"] = c.max_position;
    if (c.moe) {
        j["moe"] = {{"n_experts", c.moe->n_experts},
                    {"n_active", c.moe->n_active},
                    {"shared_expert", c.moe->shared_expert}};
    }
    j["init_seed"] = c.init_seed;
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write model config: " + path);
    out << j.dump(2) << '\n';
}

namespace {

struct TensorSpec {
    std::string name;
    std::size_t rows, cols;  // cols == 1 for vectors
};

std::vector<TensorSpec> tensor_layout(const ModelConfig& c) {
    std::vector<TensorSpec> specs;
    const auto n = [](std::int32_t v) { return static_cast<std::size_t>(v); };
    specs.push_back({"embed", n(c.vocab_size), n(c.d_model)});
    for (std::int32_t l = 0; l < c.n_layers; ++l) {
        std::string p = "L" + std::to_string(l) + ".";
        specs.push_back({p + "attn_norm", n(c.d_model), 1});
        specs.push_back({p + "wq", n(c.d_model), n(c.n_q_heads) * n(c.head_dim)});
        specs.push_back({p + "wk", n(c.d_model), n(c.n_kv_heads) * n(c.head_dim)});
        specs.push_back({p + "wv", n(c.d_model), n(c.n_kv_heads) * n(c.head_dim)});
        specs.push_back({p + "wo", n(c.n_q_heads) * n(c.head_dim), n(c.d_model)});
        specs.push_back({p + "ffn_norm", n(c.d_model), 1});
        auto ffn = [&](const std::string& q) {
            specs.push_back({q + "w1", n(c.d_model), n(c.ffn_hidden)});
            specs.push_back({q + "w3", n(c.d_model), n(c.ffn_hidden)});
            specs.push_back({q + "w2", n(c.ffn_hidden), n(c.d_model)});
        };
        if (c.moe) {
            specs.push_back({p + "router", n(c.d_model), n(c.moe->n_experts)});
            if (c.moe->shared_expert) ffn(p + "shared.");
            for (std::int32_t e = 0; e < c.moe->n_experts; ++e)
                ffn(p + "expert" + std::to_string(e) + ".");
        } else {
            ffn(p + "ffn.");
        }
    }
    specs.push_back({"final_norm", n(c.d_model), 1});
    specs.push_back({"lm_head", n(c.d_model), n(c.vocab_size)});
    return specs;
}

// y[out] += x[in] * W[in][out], double accumulation
void matvec(const float* x, const float* w, std::size_t d_in, std::size_t d_out, float* y) {
    std::vector<double> acc(d_out, 0.0);
    for (std::size_t i = 0; i < d_in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const float* row = w + i * d_out;
        for (std::size_t o = 0; o < d_out; ++o) acc[o] += xi * row[o];
    }
    for (std::size_t o = 0; o < d_out; ++o) y[o] = static_cast<float>(acc[o]);
}

void rmsnorm(const float* x, const float* weight, std::size_t d, float* y) {
    double ss = 0.0;
    for (std::size_t i = 0; i < d; ++i) ss += static_cast<double>(x[i]) * x[i];
    const double scale = 1.0 / std::sqrt(ss / static_cast<double>(d) + 1e-6);
    for (std::size_t i = 0; i < d; ++i)
        y[i] = static_cast<float>(x[i] * scale * static_cast<double>(weight[i]));
}

double silu(double v) { return v / (1.0 + std::exp(-v)); }

}  // namespace

void rope_rotate(std::vector<float>& head_vec, std::size_t position, double base) {
    const std::size_t hd = head_vec.size();
    for (std::size_t i = 0; 2 * i + 1 < hd; ++i) {
        const double freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
        const double angle = static_cast<double>(position) * freq;
        const double c = std::cos(angle), s = std::sin(angle);
        const double a = head_vec[2 * i], b = head_vec[2 * i + 1];
        head_vec[2 * i] = static_cast<float>(a * c - b * s);
        head_vec[2 * i + 1] = static_cast<float>(a * s + b * c);
    }
}

std::vector<std::pair<std::int32_t, double>> moe_gate(const std::vector<double>& router_logits,
                                                      std::int32_t n_active) {
    const std::int32_t n = static_cast<std::int32_t>(router_logits.size());
    if (n_active < 1 || n_active > n)
        throw ValidationError("moe_gate: n_active out of range");
    std::vector<std::int32_t> order(router_logits.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
        if (router_logits[a] != router_logits[b]) return router_logits[a] > router_logits[b];
        return a < b;
    });
    order.resize(static_cast<std::size_t>(n_active));
    double max_logit = router_logits[order[0]];
    double sum = 0.0;
    std::vector<std::pair<std::int32_t, double>> out;
    out.reserve(order.size());
    for (std::int32_t idx : order) {
        double w = std::exp(router_logits[idx] - max_logit);
        sum += w;
        out.emplace_back(idx, w);
    }
    for (auto& [idx, w] : out) w /= sum;
    return out;
}

Model Model::init(const ModelConfig& config) {
    config.validate();
    Model m;
    m.config_ = config;
    std::mt19937_64 rng(mix_seed(config.init_seed, 0x10D31));
    std::normal_distribution<float> dist(0.0f, 0.02f);
    for (const auto& spec : tensor_layout(config)) {
        auto& t = m.tensors_[spec.name];
        t.resize(spec.rows * spec.cols);
        const bool is_norm = spec.name.find("norm") != std::string::npos;
        for (auto& v : t) v = is_norm ? 1.0f : dist(rng);
    }
    return m;
}

std::vector<float>& Model::tensor(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ValidationError("unknown tensor: " + name);
    return it->second;
}

const std::vector<float>& Model::tensor(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ValidationError("unknown tensor: " + name);
    return it->second;
}

std::vector<std::string> Model::tensor_names() const {
    std::vector<std::string> names;
    names.reserve(tensors_.size());
    for (const auto& [name, _] : tensors_) names.push_back(name);
    return names;
}

void Model::save_weights(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot write weights: " + path);
    std::ostringstream header;
    header << "lcmon-weights v1\n";
    std::size_t offset = 0;  // in floats, from start of data section
    const auto layout = tensor_layout(config_);
    for (const auto& spec : layout) {
        header << "tensor " << spec.name << ' ' << spec.rows << 'x' << spec.cols << ' '
               << offset << '\n';
        offset += spec.rows * spec.cols;
    }
    header << "end\n";
    out << header.str();
    for (const auto& spec : layout) {
        const auto& t = tensor(spec.name);
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
}

Model Model::load(const std::string& config_path, const std::string& weights_path) {
    Model m;
    m.config_ = read_model_config(config_path);
    std::ifstream in(weights_path, std::ios::binary);
    if (!in) throw UsageError("cannot open weights: " + weights_path);
    std::string line;
    if (!std::getline(in, line) || line != "lcmon-weights v1")
        throw ValidationError("weights " + weights_path + ": bad magic line");
    struct Entry {
        std::string name;
        std::size_t count;
    };
    std::vector<Entry> entries;
    while (std::getline(in, line) && line != "end") {
        std::istringstream ls(line);
        std::string tag, name, shape;
        std::size_t offset;
        if (!(ls >> tag >> name >> shape >> offset) || tag != "tensor")
            throw ValidationError("weights: malformed header line: " + line);
        auto x = shape.find('x');
        std::size_t rows = std::stoull(shape.substr(0, x));
        std::size_t cols = std::stoull(shape.substr(x + 1));
        entries.push_back({name, rows * cols});
    }
    const auto layout = tensor_layout(m.config_);
    if (entries.size() != layout.size())
        throw ValidationError("weights: tensor count does not match config");
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (entries[i].name != layout[i].name ||
            entries[i].count != layout[i].rows * layout[i].cols)
            throw ValidationError("weights: tensor " + entries[i].name +
                                  " does not match config layout");
        auto& t = m.tensors_[entries[i].name];
        t.resize(entries[i].count);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!in) throw ValidationError("weights: truncated data for tensor " + entries[i].name);
    }
    return m;
}

std::uint32_t Model::weight_checksum() const {
    uLong crc = crc32(0L, Z_NULL, 0);
    for (const auto& spec : tensor_layout(config_)) {
        const auto& t = tensor(spec.name);
        crc = crc32(crc, reinterpret_cast<const Bytef*>(t.data()),
                    static_cast<uInt>(t.size() * sizeof(float)));
    }
    return static_cast<std::uint32_t>(crc);
}

ForwardOutput Model::forward(const std::vector<TokenId>& tokens, CaptureMode capture) const {
    const auto& c = config_;
    const std::size_t T = tokens.size();
    if (T == 0) throw UsageError("forward: empty token sequence");
    if (T > static_cast<std::size_t>(c.max_position))
        throw ComputationError("sequence length " + std::to_string(T) +
                               " exceeds max_position " + std::to_string(c.max_position));
    for (TokenId t : tokens)
        if (t < 0 || t >= c.vocab_size)
            throw ValidationError("token id " + std::to_string(t) + " out of vocab range");

    const std::size_t d = static_cast<std::size_t>(c.d_model);
    const std::size_t hd = static_cast<std::size_t>(c.head_dim);
    const std::size_t nq = static_cast<std::size_t>(c.n_q_heads);
    const std::size_t nkv = static_cast<std::size_t>(c.n_kv_heads);
    const std::size_t nl = static_cast<std::size_t>(c.n_layers);
    const std::size_t group = nq / nkv;

    ForwardOutput out;
    out.n_positions = T;
    out.vocab = static_cast<std::size_t>(c.vocab_size);
    out.capture = capture;
    if (capture != CaptureMode::none) out.argmax.assign(T * nl * nq, 0);
    if (capture == CaptureMode::full) out.rows.resize(T * nl * nq);

    std::vector<float> h(T * d);
    const auto& embed = tensor("embed");
    for (std::size_t t = 0; t < T; ++t)
        std::memcpy(&h[t * d], &embed[static_cast<std::size_t>(tokens[t]) * d],
                    d * sizeof(float));

    std::vector<float> normed(T * d);
    std::vector<float> q(T * nq * hd), k(T * nkv * hd), v(T * nkv * hd);
    std::vector<float> attn_out(T * nq * hd), proj(d);
    std::vector<float> head_buf(hd);

    for (std::size_t l = 0; l < nl; ++l) {
        const std::string p = "L" + std::to_string(l) + ".";
        const auto& attn_norm = tensor(p + "attn_norm");
        const auto& wq = tensor(p + "wq");
        const auto& wk = tensor(p + "wk");
        const auto& wv = tensor(p + "wv");
        const auto& wo = tensor(p + "wo");

        for (std::size_t t = 0; t < T; ++t) {
            rmsnorm(&h[t * d], attn_norm.data(), d, &normed[t * d]);
            matvec(&normed[t * d], wq.data(), d, nq * hd, &q[t * nq * hd]);
            matvec(&normed[t * d], wk.data(), d, nkv * hd, &k[t * nkv * hd]);
            matvec(&normed[t * d], wv.data(), d, nkv * hd, &v[t * nkv * hd]);
            for (std::size_t hh = 0; hh < nq; ++hh) {
                head_buf.assign(q.begin() + static_cast<std::ptrdiff_t>(t * nq * hd + hh * hd),
                                q.begin() + static_cast<std::ptrdiff_t>(t * nq * hd + (hh + 1) * hd));
                rope_rotate(head_buf, t, c.rope_base);
                std::copy(head_buf.begin(), head_buf.end(), q.begin() + static_cast<std::ptrdiff_t>(t * nq * hd + hh * hd));
            }
            for (std::size_t hh = 0; hh < nkv; ++hh) {
                head_buf.assign(k.begin() + static_cast<std::ptrdiff_t>(t * nkv * hd + hh * hd),
                                k.begin() + static_cast<std::ptrdiff_t>(t * nkv * hd + (hh + 1) * hd));
                rope_rotate(head_buf, t, c.rope_base);
                std::copy(head_buf.begin(), head_buf.end(), k.begin() + static_cast<std::ptrdiff_t>(t * nkv * hd + hh * hd));
            }
        }

        const double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
        std::vector<double> scores;
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t qh = 0; qh < nq; ++qh) {
                const std::size_t kvh = qh / group;
                const float* qv = &q[t * nq * hd + qh * hd];
                scores.assign(t + 1, 0.0);
                std::size_t best = 0;
                for (std::size_t s = 0; s <= t; ++s) {
                    const float* kv = &k[s * nkv * hd + kvh * hd];
                    double dot = 0.0;
                    for (std::size_t i = 0; i < hd; ++i)
                        dot += static_cast<double>(qv[i]) * kv[i];
                    scores[s] = dot * inv_sqrt_hd;
                    if (scores[s] > scores[best]) best = s;  // lowest position wins ties
                }
                double sum = 0.0;
                const double peak = scores[best];
                for (std::size_t s = 0; s <= t; ++s) {
                    scores[s] = std::exp(scores[s] - peak);
                    sum += scores[s];
                }
                for (std::size_t s = 0; s <= t; ++s) scores[s] /= sum;
                if (capture != CaptureMode::none)
                    out.argmax[(t * nl + l) * nq + qh] = best;
                if (capture == CaptureMode::full) {
                    auto& row = out.rows[(t * nl + l) * nq + qh];
                    row.assign(scores.begin(), scores.end());
                }
                float* dst = &attn_out[t * nq * hd + qh * hd];
                std::vector<double> acc(hd, 0.0);
                for (std::size_t s = 0; s <= t; ++s) {
                    const float* vv = &v[s * nkv * hd + kvh * hd];
                    for (std::size_t i = 0; i < hd; ++i) acc[i] += scores[s] * vv[i];
                }
                for (std::size_t i = 0; i < hd; ++i) dst[i] = static_cast<float>(acc[i]);
            }
        }
        for (std::size_t t = 0; t < T; ++t) {
            matvec(&attn_out[t * nq * hd], wo.data(), nq * hd, d, proj.data());
            for (std::size_t i = 0; i < d; ++i) h[t * d + i] += proj[i];
        }

        const auto& ffn_norm = tensor(p + "ffn_norm");
        std::vector<float> gate(static_cast<std::size_t>(c.ffn_hidden));
        std::vector<float> up(static_cast<std::size_t>(c.ffn_hidden));
        std::vector<float> act(static_cast<std::size_t>(c.ffn_hidden));
        std::vector<float> ffn_out(d);
        auto run_ffn = [&](const std::string& prefix, const float* x, double weight,
                           std::vector<double>& acc) {
            matvec(x, tensor(prefix + "w1").data(), d, gate.size(), gate.data());
            matvec(x, tensor(prefix + "w3").data(), d, up.size(), up.data());
            for (std::size_t i = 0; i < act.size(); ++i)
                act[i] = static_cast<float>(silu(gate[i]) * up[i]);
            matvec(act.data(), tensor(prefix + "w2").data(), act.size(), d, ffn_out.data());
            for (std::size_t i = 0; i < d; ++i) acc[i] += weight * ffn_out[i];
        };
        for (std::size_t t = 0; t < T; ++t) {
            rmsnorm(&h[t * d], ffn_norm.data(), d, &normed[t * d]);
            std::vector<double> acc(d, 0.0);
            if (c.moe) {
                std::vector<float> logits_f(static_cast<std::size_t>(c.moe->n_experts));
                matvec(&normed[t * d], tensor(p + "router").data(), d, logits_f.size(),
                       logits_f.data());
                std::vector<double> logits(logits_f.begin(), logits_f.end());
                if (c.moe->shared_expert) run_ffn(p + "shared.", &normed[t * d], 1.0, acc);
                for (const auto& [e, w] : moe_gate(logits, c.moe->n_active))
                    run_ffn(p + "expert" + std::to_string(e) + ".", &normed[t * d], w, acc);
            } else {
                run_ffn(p + "ffn.", &normed[t * d], 1.0, acc);
            }
            for (std::size_t i = 0; i < d; ++i) h[t * d + i] += static_cast<float>(acc[i]);
        }
    }

    const auto& final_norm = tensor("final_norm");
    const auto& lm_head = tensor("lm_head");
    out.logprobs.resize(T * out.vocab);
    std::vector<float> logits(out.vocab);
    for (std::size_t t = 0; t < T; ++t) {
        rmsnorm(&h[t * d], final_norm.data(), d, &normed[t * d]);
        matvec(&normed[t * d], lm_head.data(), d, out.vocab, logits.data());
        double mx = logits[0];
        for (std::size_t i = 1; i < out.vocab; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
        double sum = 0.0;
        for (std::size_t i = 0; i < out.vocab; ++i) sum += std::exp(logits[i] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t i = 0; i < out.vocab; ++i)
            out.logprobs[t * out.vocab + i] = static_cast<float>(logits[i] - lse);
    }
    return out;
}

std::vector<double> Model::answer_logprobs(const NiahSample& sample) const {
    if (sample.answer_span.size() == 0)
        throw UsageError("answer_logprobs: answer_span is empty");
    if (sample.answer_span.begin < 1 || sample.answer_span.end > sample.tokens.size())
        throw ValidationError("answer_logprobs: answer_span out of range");
    ForwardOutput fo = forward(sample.tokens);
    std::vector<double> lps;
    lps.reserve(sample.answer_span.size());
    for (std::size_t p = sample.answer_span.begin; p < sample.answer_span.end; ++p)
        lps.push_back(fo.logprob(p - 1, sample.tokens[p]));
    return lps;
}

std::vector<TokenId> Model::greedy_decode(const std::vector<TokenId>& prompt, std::size_t max_new,
                                          TokenId eos_id) const {
    std::vector<TokenId> seq = prompt;
    std::vector<TokenId> generated;
    for (std::size_t step = 0; step < max_new; ++step) {
        ForwardOutput fo = forward(seq);
        const std::size_t last = fo.n_positions - 1;
        TokenId best = 0;
        float best_lp = fo.logprob(last, 0);
        for (TokenId t = 1; t < static_cast<TokenId>(fo.vocab); ++t) {
            float lp = fo.logprob(last, t);
            if (lp > best_lp) {  // lowest token id wins ties
                best_lp = lp;
                best = t;
            }
        }
        generated.push_back(best);
        if (best == eos_id) break;
        seq.push_back(best);
        if (seq.size() > static_cast<std::size_t>(config_.max_position)) break;
    }
    return generated;
}

AttentionTrace Model::trace_answer(const NiahSample& sample, CaptureMode capture,
                                   bool decode) const {
    if (capture == CaptureMode::none)
        throw UsageError("trace_answer: capture mode must be argmax or full");
    const std::size_t nl = static_cast<std::size_t>(config_.n_layers);
    const std::size_t nq = static_cast<std::size_t>(config_.n_q_heads);
    AttentionTrace trace;
    trace.sample_id = sample.sample_id;
    trace.capture_mode = capture;
    trace.n_layers = nl;
    trace.n_q_heads = nq;

    auto extract_step = [&](const ForwardOutput& fo, std::size_t qpos, TokenId forced) {
        TraceStep step;
        step.forced_token_id = forced;
        step.query_position = qpos;
        step.argmax_positions.assign(fo.argmax.begin() + static_cast<std::ptrdiff_t>(qpos * nl * nq),
                                     fo.argmax.begin() + static_cast<std::ptrdiff_t>((qpos + 1) * nl * nq));
        if (capture == CaptureMode::full)
            step.full_rows.assign(fo.rows.begin() + static_cast<std::ptrdiff_t>(qpos * nl * nq),
                                  fo.rows.begin() + static_cast<std::ptrdiff_t>((qpos + 1) * nl * nq));
        trace.steps.push_back(std::move(step));
    };

    if (!decode) {
        ForwardOutput fo = forward(sample.tokens, capture);
        for (std::size_t p = sample.answer_span.begin; p < sample.answer_span.end; ++p)
            extract_step(fo, p - 1, sample.tokens[p]);
    } else {
        std::vector<TokenId> seq(sample.tokens.begin(),
                                 sample.tokens.begin() + static_cast<std::ptrdiff_t>(sample.answer_span.begin));
        for (std::size_t i = 0; i < sample.answer_span.size(); ++i) {
            ForwardOutput fo = forward(seq, capture);
            const std::size_t last = fo.n_positions - 1;
            TokenId best = 0;
            float best_lp = fo.logprob(last, 0);
            for (TokenId t = 1; t < static_cast<TokenId>(fo.vocab); ++t) {
                if (fo.logprob(last, t) > best_lp) {
                    best_lp = fo.logprob(last, t);
                    best = t;
                }
            }
            extract_step(fo, last, best);
            seq.push_back(best);
        }
    }
    return trace;
}

Model Model::with_rope_base(double base) const {
    if (!(base > 1.0)) throw ValidationError("rope base must be > 1");
    Model m = *this;
    m.config_.rope_base = base;
    return m;
}

}  // namespace lcmon
