#include "lcmon/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "lcmon/errors.hpp"

namespace lcmon {

using json = nlohmann::ordered_json;

std::vector<double> CheckpointSeries::values() const {
    std::vector<double> v;
    v.reserve(points.size());
    for (const auto& [n, val] : points) v.push_back(val);
    return v;
}

PplGrid ppl_grid(const std::vector<AnswerPpl>& per_sample) {
    if (per_sample.empty()) throw UsageError("ppl_grid: no samples");
    std::set<std::size_t> length_set;
    std::set<double> depth_set;
    for (const auto& r : per_sample) {
        if (!r.cell.length || !r.cell.depth)
            throw ValidationError("ppl_grid: sample " + r.sample_id +
                                  " lacks a (length, depth) cell tag");
        length_set.insert(*r.cell.length);
        depth_set.insert(*r.cell.depth);
    }
    PplGrid g;
    g.lengths.assign(length_set.begin(), length_set.end());
    g.depths.assign(depth_set.begin(), depth_set.end());
    const std::size_t n_cells = g.lengths.size() * g.depths.size();
    g.cells.assign(n_cells, 0.0);
    g.counts.assign(n_cells, 0);
    auto index_of = [](const auto& v, const auto& x) {
        return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
    };
    for (const auto& r : per_sample) {
        std::size_t li = index_of(g.lengths, *r.cell.length);
        std::size_t di = index_of(g.depths, *r.cell.depth);
        g.cells[li * g.depths.size() + di] += r.ppl;
        ++g.counts[li * g.depths.size() + di];
    }
    for (std::size_t li = 0; li < g.lengths.size(); ++li)
        for (std::size_t di = 0; di < g.depths.size(); ++di) {
            std::size_t c = g.counts[li * g.depths.size() + di];
            if (c == 0)
                throw ValidationError("ppl_grid: empty cell (length=" +
                                      std::to_string(g.lengths[li]) +
                                      ", depth=" + std::to_string(g.depths[di]) + ")");
            g.cells[li * g.depths.size() + di] /= static_cast<double>(c);
        }
    return g;
}

std::vector<double> depth_marginal(const PplGrid& grid, std::optional<std::size_t> min_length,
                                   std::optional<std::size_t> max_length) {
    std::vector<double> marginal(grid.depths.size(), 0.0);
    std::size_t n_lengths = 0;
    for (std::size_t li = 0; li < grid.lengths.size(); ++li) {
        if (min_length && grid.lengths[li] < *min_length) continue;
        if (max_length && grid.lengths[li] > *max_length) continue;
        ++n_lengths;
        for (std::size_t di = 0; di < grid.depths.size(); ++di)
            marginal[di] += grid.cell(li, di);
    }
    if (n_lengths == 0) throw UsageError("depth_marginal: length filter excludes every length");
    for (auto& v : marginal) v /= static_cast<double>(n_lengths);
    return marginal;
}

ScalingFit fit_scaling_law(const CheckpointSeries& series) {
    const auto& pts = series.points;
    if (pts.size() < 2) throw UsageError("fit_scaling_law: need at least 2 points");
    std::vector<double> x, y;
    for (const auto& [n, v] : pts) {
        if (n == 0)
            throw ComputationError("fit_scaling_law: checkpoint_tokens must be > 0 "
                                   "(exclude or offset the 0-token baseline)");
        x.push_back(std::log(static_cast<double>(n)));
        y.push_back(v);
    }
    const std::size_t n = x.size();
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    ScalingFit fit;
    fit.A = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.B = my - fit.A * mx;
    double ss_res = 0.0, ss_tot = 0.0;
    fit.residuals.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double r = y[i] - (fit.A * x[i] + fit.B);
        fit.residuals.push_back(r);
        ss_res += r * r;
        ss_tot += (y[i] - my) * (y[i] - my);
    }
    fit.r_squared = ss_tot > 0.0 ? std::max(0.0, 1.0 - ss_res / ss_tot) : 1.0;
    return fit;
}

std::optional<std::size_t> detect_plateau(const CheckpointSeries& series, double rel_epsilon,
                                          std::size_t window) {
    if (window < 1) throw UsageError("detect_plateau: window must be >= 1");
    if (!(rel_epsilon > 0.0)) throw UsageError("detect_plateau: rel_epsilon must be > 0");
    const auto& pts = series.points;
    if (pts.size() <= window) return std::nullopt;
    for (std::size_t i = 0; i + window < pts.size(); ++i) {
        const double vi = pts[i].second;
        bool flat = true;
        for (std::size_t j = i + 1; j <= i + window; ++j) {
            const double vj = pts[j].second;
            if (vi == 0.0 ? vj != 0.0 : std::abs(vj - vi) / std::abs(vi) >= rel_epsilon) {
                flat = false;
                break;
            }
        }
        if (flat) return i;
    }
    return std::nullopt;
}

namespace {

double t_two_sided_p(double t, std::size_t dof) {
    boost::math::students_t_distribution<double> dist(static_cast<double>(dof));
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

double correlation_r(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw ComputationError("correlation: zero variance in input series");
    // Exact-linearity snap keeps rank data at exactly +/-1.
    if (sxy * sxy == sxx * syy) return sxy > 0.0 ? 1.0 : -1.0;
    double r = sxy / (std::sqrt(sxx) * std::sqrt(syy));
    return std::clamp(r, -1.0, 1.0);
}

Correlation correlation_with_p(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw UsageError("correlation: series lengths differ (" + std::to_string(x.size()) +
                         " vs " + std::to_string(y.size()) + ")");
    if (x.size() < 3) throw UsageError("correlation: need at least 3 points");
    Correlation c;
    c.r = correlation_r(x, y);
    const std::size_t dof = x.size() - 2;
    if (std::abs(c.r) >= 1.0) {
        c.p = 0.0;
    } else {
        double t = c.r * std::sqrt(static_cast<double>(dof) / (1.0 - c.r * c.r));
        c.p = t_two_sided_p(t, dof);
    }
    return c;
}

}  // namespace

Correlation pearson(const std::vector<double>& x, const std::vector<double>& y) {
    return correlation_with_p(x, y);
}

std::vector<double> fractional_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        // tied block [i, j] gets the mean of 1-based ranks i+1..j+1
        double mean_rank = static_cast<double>(i + j + 2) / 2.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

Correlation spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw UsageError("spearman: series lengths differ");
    return correlation_with_p(fractional_ranks(x), fractional_ranks(y));
}

double pearson_permutation_p(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3)
        throw UsageError("permutation p: need equal lengths >= 3");
    if (x.size() > 8) throw UsageError("permutation p: exact enumeration limited to n <= 8");
    const double r_obs = std::abs(correlation_r(x, y));
    std::vector<double> perm = y;
    std::sort(perm.begin(), perm.end());
    std::size_t total = 0, at_least = 0;
    do {
        ++total;
        if (std::abs(correlation_r(x, perm)) >= r_obs - 1e-12) ++at_least;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(at_least) / static_cast<double>(total);
}

StabilityReport top_k_overlap(const RetrievalScoreMatrix& a, const RetrievalScoreMatrix& b,
                              std::size_t k) {
    if (a.n_layers != b.n_layers || a.n_heads != b.n_heads)
        throw ValidationError("top_k_overlap: matrix shapes differ (" +
                              std::to_string(a.n_layers) + "x" + std::to_string(a.n_heads) +
                              " vs " + std::to_string(b.n_layers) + "x" +
                              std::to_string(b.n_heads) + ")");
    if (k > a.head_count())
        throw UsageError("top_k_overlap: k=" + std::to_string(k) + " exceeds head count " +
                         std::to_string(a.head_count()));
    auto top_set = [k](const RetrievalScoreMatrix& m) {
        std::vector<std::size_t> order(m.head_count());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            if (m.scores[x] != m.scores[y]) return m.scores[x] > m.scores[y];
            return x < y;  // (layer, head) order breaks ties
        });
        return std::set<std::size_t>(order.begin(),
                                     order.begin() + static_cast<std::ptrdiff_t>(k));
    };
    auto ta = top_set(a), tb = top_set(b);
    StabilityReport rep;
    rep.k = k;
    for (std::size_t idx : ta)
        if (tb.count(idx)) ++rep.overlap;
    Correlation c = spearman(a.scores, b.scores);
    rep.spearman_rho = c.r;
    rep.p_value = c.p;
    return rep;
}

double series_mean(const std::vector<double>& values) {
    if (values.empty()) throw UsageError("series_mean: empty input");
    return std::accumulate(values.begin(), values.end(), 0.0) /
           static_cast<double>(values.size());
}

std::pair<std::vector<double>, std::vector<double>> align_series(const CheckpointSeries& a,
                                                                 const CheckpointSeries& b) {
    std::map<std::uint64_t, double> ma, mb;
    for (const auto& [n, v] : a.points) ma[n] = v;
    for (const auto& [n, v] : b.points) mb[n] = v;
    std::string missing;
    for (const auto& [n, v] : ma)
        if (!mb.count(n)) missing += (missing.empty() ? "" : ", ") + std::to_string(n);
    for (const auto& [n, v] : mb)
        if (!ma.count(n)) missing += (missing.empty() ? "" : ", ") + std::to_string(n);
    if (!missing.empty())
        throw ValidationError("series '" + a.metric_name + "' and '" + b.metric_name +
                              "' cannot be aligned; missing checkpoints: " + missing);
    std::pair<std::vector<double>, std::vector<double>> out;
    for (const auto& [n, v] : ma) {
        out.first.push_back(v);
        out.second.push_back(mb[n]);
    }
    return out;
}

void write_series(const std::string& path, const std::vector<CheckpointSeries>& series) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write series file: " + path);
    out.precision(17);
    out << "checkpoint_tokens,metric_name,value\n";
    for (const auto& s : series)
        for (const auto& [n, v] : s.points) out << n << ',' << s.metric_name << ',' << v << '\n';
}

std::vector<CheckpointSeries> read_series(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open series file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "checkpoint_tokens,metric_name,value")
        throw ParseError("series: expected header 'checkpoint_tokens,metric_name,value'", 1);
    std::map<std::string, std::map<std::uint64_t, double>> grouped;
    std::vector<std::string> order;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok_str, name, val_str;
        if (!std::getline(ls, tok_str, ',') || !std::getline(ls, name, ',') ||
            !std::getline(ls, val_str))
            throw ParseError("series: malformed row", line_no);
        std::uint64_t n;
        double v;
        try {
            n = std::stoull(tok_str);
            v = std::stod(val_str);
        } catch (const std::exception&) {
            throw ParseError("series: bad numeric field in row '" + line + "'", line_no);
        }
        if (!grouped.count(name)) order.push_back(name);
        if (grouped[name].count(n))
            throw ParseError("series: duplicate checkpoint " + std::to_string(n) +
                                 " for metric '" + name + "'",
                             line_no);
        grouped[name][n] = v;
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

void write_grid(const std::string& path, const PplGrid& grid) {
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write grid file: " + path);
    out.precision(17);
    out << "length\\depth";
    for (double d : grid.depths) out << ',' << d;
    out << '\n';
    for (std::size_t li = 0; li < grid.lengths.size(); ++li) {
        out << grid.lengths[li];
        for (std::size_t di = 0; di < grid.depths.size(); ++di) out << ',' << grid.cell(li, di);
        out << '\n';
    }
    json meta;
    meta["counts"] = grid.counts;
    std::ofstream side(path + ".meta.json");
    side << meta.dump() << '\n';
}

PplGrid read_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open grid file: " + path);
    PplGrid g;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("grid: empty file", 1);
    {
        std::istringstream ls(line);
        std::string field;
        std::getline(ls, field, ',');
        if (field != "length\\depth")
            throw ParseError("grid: expected 'length\\depth' header cell, got '" + field + "'", 1);
        while (std::getline(ls, field, ',')) g.depths.push_back(std::stod(field));
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field;
        std::getline(ls, field, ',');
        try {
            g.lengths.push_back(std::stoull(field));
            std::size_t n_vals = 0;
            while (std::getline(ls, field, ',')) {
                g.cells.push_back(std::stod(field));
                ++n_vals;
            }
            if (n_vals != g.depths.size())
                throw ParseError("grid: row has " + std::to_string(n_vals) + " cells, expected " +
                                     std::to_string(g.depths.size()),
                                 line_no);
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception&) {
            throw ParseError("grid: bad numeric field in row '" + line + "'", line_no);
        }
    }
    g.counts.assign(g.cells.size(), 0);
    std::ifstream side(path + ".meta.json");
    if (side) {
        try {
            json meta;
            side >> meta;
            auto counts = meta.value("counts", std::vector<std::size_t>{});
            if (counts.size() == g.cells.size()) g.counts = counts;
        } catch (const json::exception&) {
        }
    }
    return g;
}

void write_fit(const std::string& path, const ScalingFit& fit) {
    json j;
    j["A"] = fit.A;
    j["B"] = fit.B;
    j["r_squared"] = fit.r_squared;
    j["residuals"] = fit.residuals;
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write fit record: " + path);
    out << j.dump(2) << '\n';
}

void write_stability(const std::string& path, const StabilityReport& report) {
    json j;
    j["k"] = report.k;
    j["overlap"] = report.overlap;
    j["spearman_rho"] = report.spearman_rho;
    j["p_value"] = report.p_value;
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write stability report: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace lcmon
