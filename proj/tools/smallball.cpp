#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "smallball/runner.hpp"

namespace {

using namespace smallball;
using namespace smallball::runner;

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::optional<std::string> threads;
    std::string out_dir;
    std::string format = "json";
};

struct BlockFlags {
    std::optional<std::size_t> N, n, net_size, d;
    std::optional<double> xi, eta;
};

struct DataFlags {
    std::string data_path;
};

void add_common(CLI::App* sub, CommonFlags& f, bool config_required) {
    auto* opt = sub->add_option("--config", f.config_path, "experiment config (JSON)");
    if (config_required) {
        opt->required();
    }
    sub->add_option("--seed", f.seed, "master seed (64-bit unsigned)");
    sub->add_option("--trials", f.trials, "number of trials");
    sub->add_option("--threads", f.threads, "worker threads, or 'auto'");
    sub->add_option("--out", f.out_dir, "write rows.csv, result.json and report.md here");
    sub->add_option("--format", f.format, "stdout format without --out")
        ->check(CLI::IsMember({"json", "csv", "markdown"}));
}

std::optional<unsigned> parse_threads(const std::optional<std::string>& text) {
    if (!text) {
        return std::nullopt;
    }
    if (*text == "auto") {
        return 0u;
    }
    try {
        std::size_t used = 0;
        const long v = std::stol(*text, &used);
        if (used == text->size() && v > 0) {
            return static_cast<unsigned>(v);
        }
    } catch (const std::exception&) {
    }
    fail(ErrorKind::config, "--threads: expected a positive integer or 'auto'");
}

ExperimentConfig build_config(ExperimentKind kind, const CommonFlags& f, const BlockFlags* blocks,
                              const DataFlags* data) {
    json doc = f.config_path.empty() ? json{{"experiment", to_string(kind)}, {"params", json::object()}}
                                     : read_json_file(f.config_path);
    if (!doc.is_object()) {
        fail(ErrorKind::config, "config: expected a table");
    }
    if (!doc.contains("experiment")) {
        doc["experiment"] = to_string(kind);
    }
    if (doc.contains("experiment") && doc["experiment"].is_string() &&
        parse_experiment(doc["experiment"].get<std::string>()) != kind) {
        fail(ErrorKind::config, "experiment: config is for '" + doc["experiment"].get<std::string>() +
                                    "', not '" + to_string(kind) + "'");
    }
    if (!doc.contains("params")) {
        doc["params"] = json::object();
    }
    auto& params = doc["params"];
    if (blocks) {
        if (blocks->N) params["N"] = *blocks->N;
        if (blocks->n) params["n"] = *blocks->n;
        if (blocks->net_size) params["net_size"] = *blocks->net_size;
        if (blocks->d) params["d"] = *blocks->d;
        if (blocks->xi) params["xi"] = *blocks->xi;
        if (blocks->eta) params["eta"] = *blocks->eta;
    }
    if (data && !data->data_path.empty()) {
        params["data"] = {{"path", data->data_path}};
    }
    auto cfg = parse_config(doc);
    override_config(cfg, f.seed, f.trials, parse_threads(f.threads));
    return cfg;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(ErrorKind::config, path.string() + ": cannot write");
    }
    out << text;
}

void emit(const ExperimentResult& result, const CommonFlags& f) {
    if (!f.out_dir.empty()) {
        std::filesystem::create_directories(f.out_dir);
        const std::filesystem::path dir(f.out_dir);
        write_file(dir / "rows.csv", report(result, Format::csv));
        write_file(dir / "result.json", report(result, Format::json));
        write_file(dir / "report.md", report(result, Format::markdown));
        // the summary alone goes to stdout
        json summary = result.summary;
        summary["version"] = result.version;
        std::cout << summary.dump(2) << "\n";
        return;
    }
    if (f.format == "csv") {
        std::cout << report(result, Format::csv);
    } else if (f.format == "markdown") {
        std::cout << report(result, Format::markdown);
    } else {
        std::cout << report(result, Format::json);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Small-ball experiments: stable lower bounds, block counts, smallest singular values, learners"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    struct Sub {
        ExperimentKind kind;
        CLI::App* app;
        CommonFlags flags;
    };
    std::vector<std::unique_ptr<Sub>> subs;
    BlockFlags block_flags;
    DataFlags erm_data, tour_data;

    const auto make = [&](ExperimentKind kind, const std::string& help, bool config_required) -> Sub& {
        auto sub = std::make_unique<Sub>();
        sub->kind = kind;
        sub->app = app.add_subcommand(to_string(kind), help);
        add_common(sub->app, sub->flags, config_required);
        subs.push_back(std::move(sub));
        return *subs.back();
    };
    make(ExperimentKind::slb, "failure rate of the trimmed quadratic mean", true);
    auto& blocks = make(ExperimentKind::blocks, "worst good-block count over a sphere net", false);
    blocks.app->add_option("--N", block_flags.N, "sample size");
    blocks.app->add_option("--n", block_flags.n, "number of blocks");
    blocks.app->add_option("--xi", block_flags.xi, "relative slack");
    blocks.app->add_option("--eta", block_flags.eta, "allowed fraction of bad blocks");
    blocks.app->add_option("--net-size", block_flags.net_size, "number of net directions");
    blocks.app->add_option("--d", block_flags.d, "dimension");
    make(ExperimentKind::sv, "smallest eigenvalue of the empirical Gram matrix over a grid", true);
    make(ExperimentKind::verify_main, "block experiment over several sample sizes", true);
    auto& erm = make(ExperimentKind::erm, "empirical risk minimization", false);
    erm.app->add_option("--data", erm_data.data_path, "dataset CSV: d feature columns then the target");
    auto& tour = make(ExperimentKind::tournament, "block-wise tournament selection", false);
    tour.app->add_option("--data", tour_data.data_path, "dataset CSV: d feature columns then the target");
    make(ExperimentKind::fixed_point, "multiplier fixed point r1(delta)", true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    for (const auto& sub : subs) {
        if (!sub->app->parsed()) {
            continue;
        }
        try {
            const BlockFlags* bf = sub->kind == ExperimentKind::blocks ? &block_flags : nullptr;
            const DataFlags* df = sub->kind == ExperimentKind::erm          ? &erm_data
                                  : sub->kind == ExperimentKind::tournament ? &tour_data
                                                                            : nullptr;
            const auto cfg = build_config(sub->kind, sub->flags, bf, df);
            emit(run(cfg), sub->flags);
            return 0;
        } catch (const Error& e) {
            std::cerr << "error [" << smallball::to_string(e.kind()) << "]: " << e.what() << "\n";
            return exit_code(e.kind());
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
    }
    return 2;
}
