#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <optional>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "smallball/smallball.hpp"

namespace smallball::runner {

using json = nlohmann::json;

inline constexpr const char* kVersion = "smallball 0.1.0";

enum class ExperimentKind { slb, blocks, sv, verify_main, erm, tournament, fixed_point };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::slb: return "slb";
        case ExperimentKind::blocks: return "blocks";
        case ExperimentKind::sv: return "sv";
        case ExperimentKind::verify_main: return "verify-main";
        case ExperimentKind::erm: return "erm";
        case ExperimentKind::tournament: return "tournament";
        case ExperimentKind::fixed_point: return "fixed-point";
    }
    return "?";
}

inline ExperimentKind parse_experiment(std::string name) {
    std::replace(name.begin(), name.end(), '_', '-');
    for (auto k : {ExperimentKind::slb, ExperimentKind::blocks, ExperimentKind::sv, ExperimentKind::verify_main,
                   ExperimentKind::erm, ExperimentKind::tournament, ExperimentKind::fixed_point}) {
        if (to_string(k) == name) {
            return k;
        }
    }
    fail(ErrorKind::config, "experiment: unknown experiment '" + name + "'");
}

// ---------------------------------------------------------------------------
// Typed access to a JSON table with field paths in every error
// ---------------------------------------------------------------------------

/// A nonnegative integral number, whether stored signed, unsigned or as a float.
inline std::optional<std::uint64_t> as_count(const json& v) {
    if (v.is_number_unsigned()) {
        return v.get<std::uint64_t>();
    }
    if (v.is_number_integer()) {
        const auto i = v.get<std::int64_t>();
        return i >= 0 ? std::optional<std::uint64_t>(static_cast<std::uint64_t>(i)) : std::nullopt;
    }
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d >= 0.0 && d < 1.8e19 && d == std::floor(d)) {
            return static_cast<std::uint64_t>(d);
        }
    }
    return std::nullopt;
}

class Fields {
  public:
    Fields(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) {
            fail(ErrorKind::config, path_ + ": expected a table");
        }
    }

    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    bool has(const std::string& key) const {
        seen_.insert(key);
        return node_.contains(key);
    }

    const json& raw(const std::string& key) const {
        seen_.insert(key);
        if (!node_.contains(key)) {
            fail(ErrorKind::config, path(key) + ": required field missing");
        }
        return node_.at(key);
    }

    double number(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_number()) {
            fail(ErrorKind::config, path(key) + ": expected a number");
        }
        return v.get<double>();
    }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    std::uint64_t unsigned_integer(const std::string& key) const {
        const auto v = as_count(raw(key));
        if (!v) {
            fail(ErrorKind::config, path(key) + ": expected a nonnegative integer");
        }
        return *v;
    }
    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? unsigned_integer(key) : fallback;
    }
    std::size_t positive(const std::string& key) const {
        const auto v = unsigned_integer(key);
        if (v == 0) {
            fail(ErrorKind::config, path(key) + ": must be positive");
        }
        return static_cast<std::size_t>(v);
    }
    std::size_t positive(const std::string& key, std::size_t fallback) const {
        return has(key) ? positive(key) : fallback;
    }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = raw(key);
        if (!v.is_boolean()) {
            fail(ErrorKind::config, path(key) + ": expected true or false");
        }
        return v.get<bool>();
    }

    std::string string(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_string()) {
            fail(ErrorKind::config, path(key) + ": expected a string");
        }
        return v.get<std::string>();
    }
    std::string string(const std::string& key, const std::string& fallback) const {
        return has(key) ? string(key) : fallback;
    }

    std::vector<double> numbers(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_array() || v.empty()) {
            fail(ErrorKind::config, path(key) + ": expected a nonempty array of numbers");
        }
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) {
                fail(ErrorKind::config, path(key) + "[" + std::to_string(i) + "]: expected a number");
            }
            out.push_back(v[i].get<double>());
        }
        return out;
    }
    std::vector<std::size_t> positives(const std::string& key) const {
        const auto& v = raw(key);
        if (!v.is_array() || v.empty()) {
            fail(ErrorKind::config, path(key) + ": expected a nonempty array of positive integers");
        }
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto c = as_count(v[i]);
            if (!c || *c == 0) {
                fail(ErrorKind::config, path(key) + "[" + std::to_string(i) + "]: expected a positive integer");
            }
            out.push_back(static_cast<std::size_t>(*c));
        }
        return out;
    }

    Fields table(const std::string& key) const { return Fields(raw(key), path(key)); }

    /// Rejects keys that no accessor asked for.
    void finish() const {
        for (const auto& [key, value] : node_.items()) {
            if (!seen_.contains(key)) {
                fail(ErrorKind::config, path(key) + ": unknown field");
            }
        }
    }

    void check(bool ok, const std::string& key, const std::string& msg) const {
        if (!ok) {
            fail(ErrorKind::config, path(key) + ": " + msg);
        }
    }

  private:
    const json& node_;
    std::string path_;
    mutable std::set<std::string> seen_;
};

/// {"kind": "pareto_sym", "params": {"tail_index": 4.5}, "standardized": true}
/// or a bare kind name.
inline ScalarLaw parse_law(const json& node, const std::string& path) {
    if (node.is_string()) {
        return parse_law(json{{"kind", node}}, path);
    }
    Fields f(node, path);
    const auto kind = f.string("kind");
    const bool standardized = f.boolean("standardized", true);
    ScalarLaw law;
    const auto param = [&](const std::string& name) {
        auto p = f.table("params");
        const double v = p.number(name);
        p.finish();
        return v;
    };
    if (kind == "rademacher") {
        law = ScalarLaw::rademacher();
    } else if (kind == "uniform_sym") {
        law = ScalarLaw::uniform_sym(standardized);
    } else if (kind == "gaussian") {
        law = ScalarLaw::gaussian();
    } else if (kind == "student_t") {
        law = ScalarLaw::student_t(param("dof"), standardized);
    } else if (kind == "pareto_sym") {
        law = ScalarLaw::pareto_sym(param("tail_index"), standardized);
    } else {
        fail(ErrorKind::config, f.path("kind") + ": unknown law '" + kind + "'");
    }
    f.finish();
    try {
        law.validate();
    } catch (const Error& e) {
        fail(ErrorKind::config, path + ": " + e.what());
    }
    return law;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::sv;
    json params = json::object();
    std::uint64_t master_seed = 0;
    std::size_t trials = 1;
    unsigned threads = 1;  // 0 = all hardware threads
    json source;           // the input document with overrides applied

    /// Canonical text of the configuration: sorted keys, no whitespace.
    std::string echo() const { return source.dump(); }
};

inline ExperimentConfig parse_config(const json& doc) {
    Fields f(doc, "");
    ExperimentConfig cfg;
    cfg.experiment = parse_experiment(f.string("experiment"));
    cfg.master_seed = f.unsigned_integer("master_seed", 0);
    cfg.trials = f.positive("trials", 1);
    if (f.has("threads")) {
        const auto& t = f.raw("threads");
        if (t.is_string() && t.get<std::string>() == "auto") {
            cfg.threads = 0;
        } else if (const auto c = as_count(t); c && *c > 0 && *c <= 4096) {
            cfg.threads = static_cast<unsigned>(*c);
        } else {
            fail(ErrorKind::config, "threads: expected a positive integer or \"auto\"");
        }
    }
    cfg.params = f.has("params") ? f.raw("params") : json::object();
    if (!cfg.params.is_object()) {
        fail(ErrorKind::config, "params: expected a table");
    }
    f.finish();
    cfg.source = doc;
    return cfg;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::config, path + ": cannot open config file");
    }
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::config, path + ": " + e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path) { return parse_config(read_json_file(path)); }

/// Applies command-line overrides and keeps the echo in sync.
inline void override_config(ExperimentConfig& cfg, std::optional<std::uint64_t> seed, std::optional<std::size_t> trials,
                            std::optional<unsigned> threads) {
    if (seed) {
        cfg.master_seed = *seed;
        cfg.source["master_seed"] = *seed;
    }
    if (trials) {
        require(*trials > 0, ErrorKind::config, "trials: must be positive");
        cfg.trials = *trials;
        cfg.source["trials"] = *trials;
    }
    if (threads) {
        cfg.threads = *threads;
        cfg.source["threads"] = *threads == 0 ? json("auto") : json(*threads);
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

using Cell = std::variant<std::int64_t, double, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row) {
        require(row.size() == columns.size(), ErrorKind::shape, "row width differs from header");
        rows.push_back(std::move(row));
    }
    friend bool operator==(const Table&, const Table&) = default;
};

inline Cell cell(std::size_t v) { return static_cast<std::int64_t>(v); }
inline Cell cell(long long v) { return static_cast<std::int64_t>(v); }
inline Cell cell(double v) { return v; }
inline Cell cell(std::string v) { return v; }
inline Cell cell(bool v) { return static_cast<std::int64_t>(v ? 1 : 0); }

struct ExperimentResult {
    json config;
    Table rows;
    json summary = json::object();
    double seconds = 0.0;
    std::string version = kVersion;
};

// ---------------------------------------------------------------------------
// Experiment drivers
// ---------------------------------------------------------------------------

namespace detail {

inline Parallel parallel_of(const ExperimentConfig& cfg) { return Parallel{cfg.threads}; }

/// Finite linear class: {"handles": [[...], ...]} or {"random_ball": {"count", "radius", "d"}}.
inline std::vector<FunctionHandle> parse_finite_class(const Fields& f, Eigen::Index d, std::uint64_t seed) {
    std::vector<FunctionHandle> out;
    if (f.has("handles")) {
        const auto& hs = f.raw("handles");
        f.check(hs.is_array() && !hs.empty(), "handles", "expected a nonempty array of coefficient arrays");
        for (std::size_t k = 0; k < hs.size(); ++k) {
            const auto key = "handles[" + std::to_string(k) + "]";
            f.check(hs[k].is_array() && static_cast<Eigen::Index>(hs[k].size()) == d, key,
                    "expected " + std::to_string(d) + " coefficients");
            Vector t(d);
            for (Eigen::Index j = 0; j < d; ++j) {
                f.check(hs[k][static_cast<std::size_t>(j)].is_number(), key, "expected numbers");
                t[j] = hs[k][static_cast<std::size_t>(j)].get<double>();
            }
            out.push_back(FunctionHandle::linear(t, "f" + std::to_string(k)));
        }
    } else if (f.has("random_ball")) {
        const auto rb = f.table("random_ball");
        const auto count = rb.positive("count");
        const double radius = rb.number("radius");
        rb.check(radius > 0.0, "radius", "must be positive");
        rb.finish();
        for (std::size_t k = 0; k < count; ++k) {
            auto engine = make_engine(seed, k, Stream::directions);
            const Vector dir = smallball::detail::random_direction(engine, d);
            const double u = std::pow(uniform01(engine), 1.0 / static_cast<double>(d));
            out.push_back(FunctionHandle::linear(radius * u * dir, "f" + std::to_string(k)));
        }
    } else {
        fail(ErrorKind::config, f.path("handles") + ": class needs 'handles' or 'random_ball'");
    }
    return out;
}

inline Vector parse_coefficients(const Fields& f, const std::string& key) {
    const auto xs = f.numbers(key);
    return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

struct NoiseSpec {
    ScalarLaw law = ScalarLaw::gaussian();
    double sigma = 1.0;
};

inline NoiseSpec parse_noise(const Fields& f) {
    NoiseSpec out;
    if (!f.has("noise")) {
        return out;
    }
    const auto n = f.table("noise");
    out.law = n.has("law") ? parse_law(n.raw("law"), n.path("law")) : ScalarLaw::gaussian();
    out.sigma = n.number("sigma", 1.0);
    n.check(out.sigma >= 0.0, "sigma", "must be nonnegative");
    n.finish();
    return out;
}

inline std::string winner_name(MatchWinner w) {
    switch (w) {
        case MatchWinner::first: return "first";
        case MatchWinner::second: return "second";
        case MatchWinner::draw: return "draw";
    }
    return "?";
}

}  // namespace detail

/// Reads a dataset with d feature columns followed by one target column. A
/// first line that does not parse as numbers is taken as a header.
inline Dataset load_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::config, path + ": cannot open dataset");
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        std::vector<double> row;
        bool numeric = true;
        std::stringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            const auto b = tok.find_first_not_of(" \t");
            const auto e = tok.find_last_not_of(" \t");
            tok = b == std::string::npos ? "" : tok.substr(b, e - b + 1);
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc{} || ptr != tok.data() + tok.size() || tok.empty()) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (rows.empty() && lineno == 1) {
                continue;  // header
            }
            fail(ErrorKind::config, path + ":" + std::to_string(lineno) + ": non-numeric field");
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            fail(ErrorKind::config, path + ":" + std::to_string(lineno) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty() || rows.front().size() < 2) {
        fail(ErrorKind::config, path + ": need at least one row with a feature and a target column");
    }
    const auto N = static_cast<Eigen::Index>(rows.size());
    const auto d = static_cast<Eigen::Index>(rows.front().size() - 1);
    Dataset data;
    data.X.resize(N, d);
    Vector y(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            data.X(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        y[i] = rows[static_cast<std::size_t>(i)].back();
    }
    data.y = std::move(y);
    data.meta.law = "file:" + path;
    return data;
}

namespace detail {

/// "data": {"path": FILE} or {"N", "d", "target": [...], "noise": {...}, "design": law}.
inline Dataset parse_dataset(const Fields& p, std::uint64_t seed) {
    const auto f = p.table("data");
    if (f.has("path")) {
        auto data = load_dataset_csv(f.string("path"));
        f.finish();
        return data;
    }
    const auto N = f.positive("N");
    const auto target = parse_coefficients(f, "target");
    const auto noise = parse_noise(f);
    const auto design = f.has("design") ? parse_law(f.raw("design"), f.path("design")) : ScalarLaw::gaussian();
    f.finish();
    return sample_regression(FunctionHandle::linear(target, "target"), noise.law, noise.sigma,
                             static_cast<Eigen::Index>(N), target.size(), seed, design);
}

inline ExperimentResult run_slb(const ExperimentConfig& cfg) {
    const Fields p(cfg.params, "params");
    const auto m = p.positive("m");
    const double xi = p.number("xi");
    p.check(xi > 0.0 && xi < 1.0, "xi", "must lie in (0,1)");
    const auto law = p.has("law") ? parse_law(p.raw("law"), "params.law") : ScalarLaw::gaussian();
    const double l2 = std::sqrt(law.second_moment());
    SlbConstants c;
    if (p.has("constants")) {
        const auto cf = p.table("constants");
        c.c0 = cf.number("c0", 1.0);
        c.c1 = cf.number("c1", 1.0);
        cf.finish();
    }
    const auto regime = p.string("regime");
    MomentProfile profile;
    profile.l2_norm = l2;
    if (regime == "bounded") {
        double M = 0.0;
        if (p.has("M")) {
            M = p.number("M");
        } else {
            p.check(law.kind == LawKind::rademacher || law.kind == LawKind::uniform_sym, "M",
                    "required for unbounded laws");
            M = law.scale();  // both laws live on [-1, 1] before scaling
        }
        profile.regime = BoundedRegime{M};
    } else if (regime == "lp") {
        const double pp = p.number("p");
        p.check(pp > 2.0, "p", "must exceed 2");
        p.check(law.has_finite_moment(pp), "p", law.name() + " has no finite moment of this order");
        profile.regime = LpRegime{pp, p.number("norm_lp", std::pow(law.absolute_moment(pp), 1.0 / pp))};
    } else if (regime == "norm_equiv") {
        const double q = p.number("q");
        p.check(q > 2.0, "q", "must exceed 2");
        p.check(law.has_finite_moment(q), "q", law.name() + " has no finite moment of this order");
        profile.regime = NormEquivRegime{q, p.number("L", std::pow(law.absolute_moment(q), 1.0 / q) / l2)};
    } else if (regime == "uniform_integrable") {
        const double kappa = p.has("kappa") ? p.number("kappa") : tail_cutoff(law, xi) / l2;
        p.check(kappa > 0.0, "kappa", "must be positive");
        profile.regime = UniformIntegrableRegime{[kappa](double) { return kappa; }};
    } else {
        fail(ErrorKind::config, "params.regime: expected bounded, lp, norm_equiv or uniform_integrable");
    }
    std::optional<long long> ell_override;
    if (p.has("ell")) {
        ell_override = static_cast<long long>(p.unsigned_integer("ell"));
        p.check(*ell_override <= static_cast<long long>(m), "ell", "must not exceed m");
    }
    p.finish();
    try {
        profile.validate();
    } catch (const Error& e) {
        fail(ErrorKind::config, std::string("params: ") + e.what());
    }

    const auto params = slb_params(profile, m, xi, c);
    const long long ell = ell_override.value_or(params.ell);
    const auto est = estimate_slb_failure(HSampler{law, {}, {}}, m, xi, ell, cfg.trials, cfg.master_seed,
                                          parallel_of(cfg));
    ExperimentResult res;
    res.rows.columns = {"trial", "trimmed_sq_mean", "failed"};
    const double threshold = (1.0 - xi) * est.second_moment;
    for (std::size_t t = 0; t < est.trimmed.size(); ++t) {
        res.rows.add({cell(t), cell(est.trimmed[t]), cell(est.trimmed[t] < threshold)});
    }
    res.summary = {{"ell", ell},
                   {"ell_formula", params.ell},
                   {"ell_raw", params.ell_raw},
                   {"k", params.k},
                   {"failure_rate", est.rate},
                   {"stderr", est.stderr_},
                   {"failures", est.failures},
                   {"second_moment", est.second_moment},
                   {"law", law.name()},
                   {"warnings", params.warnings}};
    return res;
}

struct BlockSetup {
    std::vector<std::size_t> Ns;
    std::size_t n = 1;
    double xi = 0.2;
    double eta = 0.1;
    Eigen::Index d = 10;
    std::size_t net_size = 200;
    ScalarLaw law = ScalarLaw::gaussian();
    bool attack = false;
};

inline BlockSetup parse_block_setup(const Fields& p, bool many) {
    BlockSetup s;
    if (many) {
        s.Ns = p.positives("Ns");
    } else {
        s.Ns = {p.positive("N")};
    }
    s.n = p.positive("n");
    for (std::size_t i = 0; i < s.Ns.size(); ++i) {
        const auto key = many ? "Ns[" + std::to_string(i) + "]" : std::string("N");
        if (s.Ns[i] % s.n != 0) {
            fail(ErrorKind::config, p.path("n") + " = " + std::to_string(s.n) + " does not divide " + p.path(key) +
                                        " = " + std::to_string(s.Ns[i]));
        }
    }
    s.xi = p.number("xi", 0.2);
    p.check(s.xi > 0.0 && s.xi < 1.0, "xi", "must lie in (0,1)");
    s.eta = p.number("eta", 0.1);
    p.check(s.eta >= 0.0 && s.eta < 1.0, "eta", "must lie in [0,1)");
    s.d = static_cast<Eigen::Index>(p.positive("d", 10));
    s.net_size = p.positive("net_size", 200);
    s.law = p.has("law") ? parse_law(p.raw("law"), "params.law") : ScalarLaw::gaussian();
    p.check(s.law.standardized, "law", "the design law must be standardized");
    s.attack = p.boolean("attack", false);
    p.finish();
    return s;
}

inline NetSpec block_net(const BlockSetup& s, std::uint64_t master_seed) {
    return random_sphere_net(s.d, s.net_size, hash_combine(master_seed, static_cast<std::uint64_t>(Stream::directions)));
}

inline ExperimentResult run_blocks(const ExperimentConfig& cfg) {
    const auto s = parse_block_setup(Fields(cfg.params, "params"), false);
    const auto net = block_net(s, cfg.master_seed);
    const auto check = verify_main_theorem(net, {s.law, s.d, s.Ns.front(), s.n}, s.xi, s.eta, cfg.trials,
                                           cfg.master_seed, parallel_of(cfg), s.attack);
    ExperimentResult res;
    res.rows.columns = {"trial", "min_count", "argmin_id"};
    if (s.attack) {
        res.rows.columns.push_back("attack_min_count");
    }
    for (std::size_t t = 0; t < cfg.trials; ++t) {
        std::vector<Cell> row{cell(t), cell(check.min_counts[t]), cell(net.points[check.argmins[t]].id())};
        if (s.attack) {
            row.push_back(cell(check.attack_counts[t]));
        }
        res.rows.add(std::move(row));
    }
    double mean = 0.0;
    for (auto c : check.min_counts) {
        mean += static_cast<double>(c);
    }
    res.summary = {{"N", s.Ns.front()},
                   {"n", s.n},
                   {"xi", s.xi},
                   {"eta", s.eta},
                   {"d", s.d},
                   {"net_size", net.size()},
                   {"required", check.required},
                   {"success_rate", check.success_rate},
                   {"worst_min_count", check.worst_min_count},
                   {"mean_min_count", mean / static_cast<double>(cfg.trials)}};
    if (s.attack) {
        const auto disagreements = std::inner_product(
            check.min_counts.begin(), check.min_counts.end(), check.attack_counts.begin(), std::size_t{0},
            std::plus<>(), [](std::size_t a, std::size_t b) { return static_cast<std::size_t>(b < a); });
        res.summary["attack_below_net"] = disagreements;
    }
    return res;
}

inline ExperimentResult run_verify_main(const ExperimentConfig& cfg) {
    const auto s = parse_block_setup(Fields(cfg.params, "params"), true);
    const auto net = block_net(s, cfg.master_seed);
    ExperimentResult res;
    res.rows.columns = {"N", "trial", "min_count", "argmin_id", "success"};
    json per_n = json::array();
    std::vector<double> rates;
    for (std::size_t N : s.Ns) {
        const auto check = verify_main_theorem(net, {s.law, s.d, N, s.n}, s.xi, s.eta, cfg.trials,
                                               derive_seed(cfg.master_seed, N), parallel_of(cfg));
        for (std::size_t t = 0; t < cfg.trials; ++t) {
            res.rows.add({cell(N), cell(t), cell(check.min_counts[t]), cell(net.points[check.argmins[t]].id()),
                          cell(check.min_counts[t] >= check.required)});
        }
        per_n.push_back({{"N", N}, {"success_rate", check.success_rate}, {"worst_min_count", check.worst_min_count},
                         {"required", check.required}});
        rates.push_back(check.success_rate);
    }
    // monotone in N: order the rates by N
    std::vector<std::size_t> order(s.Ns.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s.Ns[a] < s.Ns[b]; });
    bool monotone = true;
    for (std::size_t i = 1; i < order.size(); ++i) {
        monotone = monotone && rates[order[i]] >= rates[order[i - 1]];
    }
    res.summary = {{"n", s.n}, {"xi", s.xi}, {"eta", s.eta}, {"d", s.d}, {"net_size", net.size()},
                   {"per_N", per_n}, {"monotone_in_N", monotone}};
    return res;
}

inline ExperimentResult run_sv(const ExperimentConfig& cfg) {
    const Fields p(cfg.params, "params");
    SvGrid grid;
    for (double d : p.numbers("dims")) {
        p.check(d >= 1.0 && d == std::floor(d), "dims", "expected positive integers");
        grid.dims.push_back(static_cast<Eigen::Index>(d));
    }
    grid.aspects = p.numbers("aspects");
    grid.law = p.has("law") ? parse_law(p.raw("law"), "params.law") : ScalarLaw::gaussian();
    grid.q = p.number("q", 4.0);
    const double quantile = p.number("quantile", 0.5);
    p.check(quantile > 0.0 && quantile < 1.0, "quantile", "must lie in (0,1)");
    const double bound_constant = p.number("bound_constant", 3.0);
    p.finish();
    grid.trials = cfg.trials;
    grid.seed = cfg.master_seed;
    try {
        validate(grid);
    } catch (const Error& e) {
        fail(ErrorKind::config, std::string("params: ") + e.what());
    }

    const auto result = run_sv_experiment(grid, parallel_of(cfg));
    ExperimentResult res;
    res.rows.columns = {"d", "N", "trial", "lambda_min"};
    json cells = json::array();
    std::size_t within = 0;
    std::size_t total = 0;
    for (const auto& c : result.cells) {
        for (std::size_t t = 0; t < c.lambda_min.size(); ++t) {
            res.rows.add({cell(static_cast<std::size_t>(c.d)), cell(static_cast<std::size_t>(c.N)), cell(t),
                          cell(c.lambda_min[t])});
            within += (1.0 - c.lambda_min[t]) <= bound_constant * std::sqrt(static_cast<double>(c.d) / static_cast<double>(c.N));
            ++total;
        }
        cells.push_back({{"d", c.d}, {"N", c.N}, {"median_lambda_min", sample_quantile(c.lambda_min, 0.5)},
                         {"bound_argument", c.bound_argument}});
    }
    res.summary = {{"law", grid.law.name()},
                   {"q", grid.q},
                   {"target_exponent", 1.0 - 2.0 / grid.q},
                   {"quantile", quantile},
                   {"cells", cells},
                   {"bound_constant", bound_constant},
                   {"fraction_within_sqrt_bound", static_cast<double>(within) / static_cast<double>(total)}};
    const auto fit_json = [&](bool with_log) -> json {
        try {
            const auto fit = fit_scaling_exponent(result, quantile, with_log);
            return {{"exponent", fit.exponent}, {"intercept", fit.intercept}, {"r2", fit.r2}};
        } catch (const Error& e) {
            return {{"error", e.what()}};
        }
    };
    res.summary["fit_with_log"] = fit_json(true);
    res.summary["fit_without_log"] = fit_json(false);
    return res;
}

inline ExperimentResult run_erm(const ExperimentConfig& cfg) {
    const Fields p(cfg.params, "params");
    const auto data = parse_dataset(p, cfg.master_seed);
    const auto cls = p.table("class");
    ExperimentResult res;
    if (cls.has("ball")) {
        const auto ball = cls.table("ball");
        const double radius = ball.number("radius");
        ball.check(radius >= 0.0, "radius", "must be nonnegative");
        const double tol = ball.number("tol", 1e-10);
        const auto max_iter = ball.positive("max_iter", 100000);
        ball.finish();
        cls.finish();
        p.finish();
        const auto fit = erm_linear_ball(data, radius, tol, max_iter);
        res.rows.columns = {"coordinate", "t"};
        for (Eigen::Index j = 0; j < fit.t.size(); ++j) {
            res.rows.add({cell(static_cast<std::size_t>(j)), cell(fit.t[j])});
        }
        res.summary = {{"class", "ball"}, {"radius", radius}, {"objective", fit.objective},
                       {"kkt_residual", fit.kkt_residual}, {"iterations", fit.iterations},
                       {"t", std::vector<double>(fit.t.data(), fit.t.data() + fit.t.size())}};
        return res;
    }
    const auto handles = parse_finite_class(cls, data.dim(), derive_seed(cfg.master_seed, 1));
    cls.finish();
    p.finish();
    const auto choice = erm_finite(handles, data);
    res.rows.columns = {"index", "id", "risk"};
    for (std::size_t k = 0; k < handles.size(); ++k) {
        res.rows.add({cell(k), cell(handles[k].id()), cell(choice.risks[k])});
    }
    res.summary = {{"class", "finite"}, {"selected", choice.index}, {"selected_id", handles[choice.index].id()},
                   {"selected_risk", choice.risks[choice.index]}, {"N", data.size()}, {"d", data.dim()}};
    return res;
}

inline ExperimentResult run_tournament(const ExperimentConfig& cfg) {
    const Fields p(cfg.params, "params");
    const auto data = parse_dataset(p, cfg.master_seed);
    const auto n_blocks = p.positive("n_blocks");
    if (static_cast<std::size_t>(data.size()) % n_blocks != 0) {
        fail(ErrorKind::config, "params.n_blocks = " + std::to_string(n_blocks) + " does not divide the dataset size " +
                                    std::to_string(data.size()));
    }
    const double margin = p.number("draw_margin", 0.0);
    p.check(margin >= 0.0, "draw_margin", "must be nonnegative");
    const auto cls = p.table("class");
    const auto handles = parse_finite_class(cls, data.dim(), derive_seed(cfg.master_seed, 1));
    cls.finish();
    p.finish();

    const auto tour = tournament_select(handles, data, n_blocks, margin, parallel_of(cfg));
    const auto erm = erm_finite(handles, data);
    ExperimentResult res;
    res.rows.columns = {"first", "second", "first_wins", "second_wins", "ties", "distance", "winner"};
    for (const auto& m : tour.matches) {
        res.rows.add({cell(handles[m.first].id()), cell(handles[m.second].id()), cell(m.outcome.first_wins),
                      cell(m.outcome.second_wins), cell(m.outcome.ties), cell(m.outcome.distance),
                      cell(winner_name(m.outcome.winner))});
    }
    if (res.rows.rows.empty()) {
        res.rows.add({cell(handles[0].id()), cell(handles[0].id()), cell(std::size_t{0}), cell(std::size_t{0}),
                      cell(n_blocks), cell(0.0), cell(std::string("draw"))});
    }
    res.summary = {{"selected", tour.index},
                   {"selected_id", handles[tour.index].id()},
                   {"no_champion", tour.no_champion},
                   {"wins", tour.wins},
                   {"losses", tour.losses},
                   {"median_block_risk", tour.median_block_risk},
                   {"erm_selected", erm.index},
                   {"risks", erm.risks},
                   {"n_blocks", n_blocks},
                   {"draw_margin", margin}};
    return res;
}

inline ExperimentResult run_fixed_point(const ExperimentConfig& cfg) {
    const Fields p(cfg.params, "params");
    const auto f_star = FunctionHandle::linear(parse_coefficients(p, "f_star"), "f_star");
    const auto d = f_star.coefficients().size();
    const auto cls = p.table("class");
    const auto handles = parse_finite_class(cls, d, derive_seed(cfg.master_seed, 1));
    cls.finish();
    const auto noise = parse_noise(p);
    const double delta = p.number("delta", 0.1);
    p.check(delta > 0.0 && delta < 1.0, "delta", "must lie in (0,1)");
    const double rho = p.number("rho", 1.0);
    p.check(rho > 0.0, "rho", "must be positive");
    const auto sizes = p.positives("sample_sizes");
    R1Options opts;
    opts.r_lo = p.number("r_lo", opts.r_lo);
    opts.r_hi = p.number("r_hi", opts.r_hi);
    opts.tol = p.number("tol", opts.tol);
    p.check(opts.r_lo > 0.0 && opts.r_hi > opts.r_lo, "r_hi", "need 0 < r_lo < r_hi");
    opts.design = p.has("design") ? parse_law(p.raw("design"), "params.design") : ScalarLaw::gaussian();
    p.finish();
    if (delta * static_cast<double>(cfg.trials) < 20.0) {
        fail(ErrorKind::config, "trials: delta * trials must be at least 20 to resolve the tail");
    }

    const auto est = r1_estimate(handles, f_star, NoiseModel{noise.law, noise.sigma}, delta, rho, sizes, d,
                                 cfg.trials, cfg.master_seed, opts, parallel_of(cfg));
    ExperimentResult res;
    res.rows.columns = {"N", "r1", "bisection_steps"};
    json per_n = json::array();
    for (const auto& e : est) {
        res.rows.add({cell(e.N), cell(e.r1), cell(e.trace.size())});
        per_n.push_back({{"N", e.N}, {"r1", e.r1}});
    }
    res.summary = {{"delta", delta}, {"rho", rho}, {"class_size", handles.size()}, {"noise", noise.law.name()},
                   {"sigma", noise.sigma}, {"per_N", per_n}};
    return res;
}

}  // namespace detail

/// Runs the configured experiment. Invalid parameters raise config errors
/// naming the offending field; numerical failures propagate with their kind.
inline ExperimentResult run(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentResult res;
    try {
        switch (cfg.experiment) {
            case ExperimentKind::slb: res = detail::run_slb(cfg); break;
            case ExperimentKind::blocks: res = detail::run_blocks(cfg); break;
            case ExperimentKind::sv: res = detail::run_sv(cfg); break;
            case ExperimentKind::verify_main: res = detail::run_verify_main(cfg); break;
            case ExperimentKind::erm: res = detail::run_erm(cfg); break;
            case ExperimentKind::tournament: res = detail::run_tournament(cfg); break;
            case ExperimentKind::fixed_point: res = detail::run_fixed_point(cfg); break;
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::config) {
            throw;
        }
        fail(e.kind(), to_string(cfg.experiment) + ": " + e.what());
    }
    res.config = cfg.source;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    require(!res.rows.rows.empty(), ErrorKind::contract, "experiment produced no rows");
    return res;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class Format { csv, json, markdown };

/// Shortest round-trip text for a double, always recognizable as a double.
inline std::string format_number(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, ptr);
    if (s.find_first_of(".e") == std::string::npos) {
        s += ".0";
    }
    return s;
}

inline std::string format_cell(const Cell& c) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(v);
            } else if constexpr (std::is_same_v<T, double>) {
                return format_number(v);
            } else {
                std::string out = "\"";
                for (char ch : v) {
                    out += ch;
                    if (ch == '"') {
                        out += '"';
                    }
                }
                return out + "\"";
            }
        },
        c);
}

/// Rows as CSV. Strings are always quoted, so every cell's type survives
/// parse_csv. The first line is a version comment.
inline std::string to_csv(const Table& t) {
    std::string out = std::string("# ") + kVersion + "\n";
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
        out += (j ? "," : "") + t.columns[j];
    }
    out += "\n";
    for (const auto& row : t.rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            out += (j ? "," : "") + format_cell(row[j]);
        }
        out += "\n";
    }
    return out;
}

inline Cell parse_cell(const std::string& tok) {
    if (!tok.empty() && tok.front() == '"') {
        require(tok.size() >= 2 && tok.back() == '"', ErrorKind::input, "unterminated quoted field");
        std::string out;
        for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
            out += tok[i];
            if (tok[i] == '"') {
                ++i;
            }
        }
        return out;
    }
    if (tok == "nan") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (tok == "inf" || tok == "-inf") {
        return tok == "inf" ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    }
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    if (tok.find_first_of(".eE") == std::string::npos) {
        std::int64_t v = 0;
        const auto [ptr, ec] = std::from_chars(first, last, v);
        require(ec == std::errc{} && ptr == last, ErrorKind::input, "bad integer field '" + tok + "'");
        return v;
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    require(ec == std::errc{} && ptr == last, ErrorKind::input, "bad numeric field '" + tok + "'");
    return v;
}

inline Table parse_csv(const std::string& text) {
    Table t;
    std::stringstream ss(text);
    std::string line;
    bool header = true;
    while (std::getline(ss, line)) {
        if (line.empty() || line.front() == '#') {
            continue;
        }
        std::vector<std::string> fields;
        std::string cur;
        bool quoted = false;
        for (char ch : line) {
            if (ch == '"') {
                quoted = !quoted;
            }
            if (ch == ',' && !quoted) {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        fields.push_back(cur);
        if (header) {
            t.columns = fields;
            header = false;
            continue;
        }
        std::vector<Cell> row;
        for (const auto& f : fields) {
            row.push_back(parse_cell(f));
        }
        t.add(std::move(row));
    }
    return t;
}

inline json cell_json(const Cell& c) {
    return std::visit([](const auto& v) { return json(v); }, c);
}

inline json to_json(const ExperimentResult& r, bool include_rows = true) {
    json doc = {{"version", r.version}, {"config", r.config}, {"summary", r.summary}, {"timing", {{"seconds", r.seconds}}}};
    if (include_rows) {
        json data = json::array();
        for (const auto& row : r.rows.rows) {
            json jr = json::array();
            for (const auto& c : row) {
                jr.push_back(cell_json(c));
            }
            data.push_back(std::move(jr));
        }
        doc["rows"] = {{"columns", r.rows.columns}, {"data", std::move(data)}};
    }
    return doc;
}

inline Table rows_from_json(const json& doc) {
    Table t;
    t.columns = doc.at("rows").at("columns").get<std::vector<std::string>>();
    for (const auto& jr : doc.at("rows").at("data")) {
        std::vector<Cell> row;
        for (const auto& c : jr) {
            if (c.is_string()) {
                row.push_back(c.get<std::string>());
            } else if (c.is_number_integer()) {
                row.push_back(c.get<std::int64_t>());
            } else if (c.is_number_float()) {
                row.push_back(c.get<double>());
            } else {
                // non-finite doubles serialize as null
                row.push_back(std::numeric_limits<double>::quiet_NaN());
            }
        }
        t.add(std::move(row));
    }
    return t;
}

namespace detail {

inline std::string md_value(const json& v) {
    if (v.is_number_float()) {
        return format_number(v.get<double>());
    }
    if (v.is_string()) {
        return v.get<std::string>();
    }
    return v.dump();
}

}  // namespace detail

inline std::string to_markdown(const ExperimentResult& r) {
    std::ostringstream out;
    const auto experiment = r.config.value("experiment", std::string("?"));
    out << "# " << experiment << "\n\n";
    out << "_" << r.version << "_, " << r.rows.rows.size() << " rows, "
        << detail::md_value(json(r.seconds)) << " s\n\n";
    out << "| key | value |\n|---|---|\n";
    for (const auto& [key, value] : r.summary.items()) {
        if (key == "cells" || key == "per_N") {
            continue;
        }
        out << "| " << key << " | " << detail::md_value(value) << " |\n";
    }
    if (r.summary.contains("target_exponent")) {
        out << "\n## Scaling fit\n\n";
        const auto& fit = r.summary.at("fit_with_log");
        out << "Fitted exponent (argument (d/N) log(eN/d)): "
            << (fit.contains("exponent") ? detail::md_value(fit.at("exponent")) : detail::md_value(fit.at("error")))
            << "; target 1 - 2/q = " << detail::md_value(r.summary.at("target_exponent")) << "\n\n";
        out << "| d | N | median lambda_min | argument |\n|---|---|---|---|\n";
        for (const auto& c : r.summary.at("cells")) {
            out << "| " << c.at("d").dump() << " | " << c.at("N").dump() << " | "
                << detail::md_value(c.at("median_lambda_min")) << " | " << detail::md_value(c.at("bound_argument"))
                << " |\n";
        }
    }
    if (r.summary.contains("per_N")) {
        out << "\n## By sample size\n\n";
        const auto& per = r.summary.at("per_N");
        std::vector<std::string> keys;
        for (const auto& [k, v] : per.front().items()) {
            keys.push_back(k);
        }
        out << "|";
        for (const auto& k : keys) {
            out << " " << k << " |";
        }
        out << "\n|";
        for (std::size_t i = 0; i < keys.size(); ++i) {
            out << "---|";
        }
        out << "\n";
        for (const auto& e : per) {
            out << "|";
            for (const auto& k : keys) {
                out << " " << detail::md_value(e.at(k)) << " |";
            }
            out << "\n";
        }
    }
    return out.str();
}

inline std::string report(const ExperimentResult& r, Format format) {
    require(!r.rows.rows.empty(), ErrorKind::input, "empty result");
    switch (format) {
        case Format::csv: return to_csv(r.rows);
        case Format::json: return to_json(r).dump(2) + "\n";
        case Format::markdown: return to_markdown(r);
    }
    return {};
}

/// Process exit status for an error kind.
inline int exit_code(ErrorKind kind) {
    if (kind == ErrorKind::config) {
        return 2;
    }
    return is_numerical_contract(kind) ? 3 : 2;
}

}  // namespace smallball::runner
