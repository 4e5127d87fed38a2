#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>

#include "smallball/runner.hpp"

using namespace smallball;
using namespace smallball::runner;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::input;
}

std::string message_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

ExperimentConfig sv_config(std::size_t trials, const json& dims, const json& aspects, unsigned threads = 1) {
    auto cfg = parse_config({{"experiment", "sv"},
                             {"master_seed", 7},
                             {"trials", trials},
                             {"threads", threads},
                             {"params", {{"dims", dims}, {"aspects", aspects}, {"law", "gaussian"}}}});
    return cfg;
}

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / ("smallball_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
    const auto path = temp_dir() / name;
    std::ofstream(path) << text;
    return path;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SMALLBALL_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Runner, SingleTrialOneDimensionalSv) {
    // d = 1, N = 4000: lambda_min is the mean of squares, close to 1
    const auto res = run(sv_config(1, {1}, {4000}));
    ASSERT_EQ(res.rows.rows.size(), 1U);
    EXPECT_EQ(res.rows.columns, (std::vector<std::string>{"d", "N", "trial", "lambda_min"}));
    EXPECT_EQ(std::get<std::int64_t>(res.rows.rows[0][1]), 4000);
    EXPECT_NEAR(std::get<double>(res.rows.rows[0][3]), 1.0, 0.1);
}

TEST(Runner, IdenticalConfigGivesIdenticalCsv) {
    const auto a = to_csv(run(sv_config(5, {2, 3}, {4, 8})).rows);
    const auto b = to_csv(run(sv_config(5, {2, 3}, {4, 8})).rows);
    EXPECT_EQ(a, b);
    const auto c = to_csv(run(sv_config(5, {2, 3}, {4, 8}, 8)).rows);
    EXPECT_EQ(a, c);
}

TEST(Runner, BlockDivisibilityNamesBothFields) {
    const auto cfg = parse_config({{"experiment", "blocks"}, {"params", {{"N", 100}, {"n", 7}}}});
    EXPECT_EQ(kind_of([&] { run(cfg); }), ErrorKind::config);
    const auto msg = message_of([&] { run(cfg); });
    EXPECT_NE(msg.find("params.n"), std::string::npos) << msg;
    EXPECT_NE(msg.find("params.N"), std::string::npos) << msg;
}

TEST(Runner, UnknownFieldsRejectedWithPath) {
    EXPECT_NE(message_of([] { parse_config({{"experiment", "sv"}, {"seed", 3}}); }).find("seed"), std::string::npos);
    const auto cfg = parse_config({{"experiment", "sv"}, {"params", {{"dims", {2}}, {"aspects", {4}}, {"dimz", 1}}}});
    const auto msg = message_of([&] { run(cfg); });
    EXPECT_NE(msg.find("params.dimz"), std::string::npos) << msg;
    EXPECT_EQ(kind_of([] { parse_config({{"experiment", "nope"}}); }), ErrorKind::config);
    EXPECT_EQ(kind_of([] { parse_config({{"experiment", "sv"}, {"threads", 0}}); }), ErrorKind::config);
}

TEST(Runner, WrongTypeNamesField) {
    const auto cfg = parse_config({{"experiment", "slb"}, {"params", {{"m", "ten"}, {"xi", 0.1}, {"regime", "lp"}}}});
    const auto msg = message_of([&] { run(cfg); });
    EXPECT_NE(msg.find("params.m"), std::string::npos) << msg;
}

TEST(Runner, ThreadsAutoAccepted) {
    const auto cfg = parse_config({{"experiment", "sv"}, {"threads", "auto"}});
    EXPECT_EQ(cfg.threads, 0U);
}

TEST(Runner, CsvRoundTrip) {
    Table t;
    t.columns = {"i", "x", "s"};
    t.add({cell(std::size_t{3}), cell(0.1), cell(std::string("a,\"b\""))});
    t.add({cell(-5LL), cell(2.0), cell(std::string("7"))});
    t.add({cell(std::size_t{0}), cell(1e-300), cell(std::string(""))});
    t.add({cell(std::size_t{1}), cell(std::numeric_limits<double>::infinity()), cell(std::string("x"))});
    const auto text = to_csv(t);
    EXPECT_EQ(text.rfind("# smallball", 0), 0U);
    EXPECT_EQ(parse_csv(text), t);
}

TEST(Runner, ExperimentCsvRoundTrip) {
    const auto res = run(sv_config(4, {2, 3}, {4, 16}));
    EXPECT_EQ(parse_csv(to_csv(res.rows)), res.rows);
}

TEST(Runner, JsonCarriesConfigEchoAndRows) {
    const auto cfg = sv_config(3, {2}, {4, 8});
    const auto res = run(cfg);
    const auto doc = json::parse(report(res, Format::json));
    EXPECT_EQ(doc.at("config"), cfg.source);
    EXPECT_EQ(doc.at("config").dump(), cfg.echo());
    EXPECT_EQ(doc.at("version"), kVersion);
    EXPECT_TRUE(doc.at("summary").contains("fit_with_log"));
    EXPECT_EQ(rows_from_json(doc), res.rows);
}

TEST(Runner, OverridesReflectedInEcho) {
    auto cfg = sv_config(3, {2}, {4});
    override_config(cfg, 99, 5, 2);
    EXPECT_EQ(cfg.master_seed, 99U);
    EXPECT_EQ(cfg.source.at("master_seed"), 99);
    EXPECT_EQ(cfg.source.at("trials"), 5);
    EXPECT_EQ(run(cfg).rows.rows.size(), 5U);
}

TEST(Runner, MarkdownListsEveryCell) {
    const auto md = report(run(sv_config(3, {2, 5}, {4})), Format::markdown);
    EXPECT_NE(md.find("| 2 | 8 |"), std::string::npos) << md;
    EXPECT_NE(md.find("| 5 | 20 |"), std::string::npos) << md;
    EXPECT_NE(md.find("target 1 - 2/q"), std::string::npos);
}

TEST(Runner, EmptyResultRejected) {
    ExperimentResult r;
    EXPECT_EQ(kind_of([&] { report(r, Format::csv); }), ErrorKind::input);
}

TEST(Runner, SlbSummaryFields) {
    const auto res = run(parse_config({{"experiment", "slb"},
                                       {"trials", 300},
                                       {"params", {{"regime", "bounded"}, {"m", 100}, {"xi", 0.2}, {"law", "uniform_sym"}}}}));
    for (const char* key : {"ell", "k", "failure_rate", "stderr"}) {
        EXPECT_TRUE(res.summary.contains(key)) << key;
    }
    EXPECT_EQ(res.rows.rows.size(), 300U);
}

TEST(Runner, ErmFromDatasetFile) {
    const auto path = write_temp("data.csv", "x1,x2,y\n1,0,2\n0,1,-1\n1,1,1\n2,0,4\n");
    const auto res = run(parse_config(
        {{"experiment", "erm"},
         {"params", {{"data", {{"path", path.string()}}}, {"class", {{"handles", {{2.0, -1.0}, {0.0, 0.0}}}}}}}}));
    EXPECT_EQ(res.summary.at("selected"), 0);
    EXPECT_DOUBLE_EQ(std::get<double>(res.rows.rows[0][2]), 0.0);
}

TEST(Runner, TournamentDivisibilityIsConfigError) {
    const auto cfg = parse_config({{"experiment", "tournament"},
                                   {"params",
                                    {{"data", {{"N", 50}, {"target", {1.0}}}},
                                     {"n_blocks", 7},
                                     {"class", {{"handles", {{1.0}, {0.0}}}}}}}});
    const auto msg = message_of([&] { run(cfg); });
    EXPECT_EQ(kind_of([&] { run(cfg); }), ErrorKind::config);
    EXPECT_NE(msg.find("params.n_blocks"), std::string::npos);
}

TEST(Runner, ExitCodes) {
    EXPECT_EQ(exit_code(ErrorKind::config), 2);
    EXPECT_EQ(exit_code(ErrorKind::convergence), 3);
    EXPECT_EQ(exit_code(ErrorKind::resolution), 3);
    EXPECT_EQ(exit_code(ErrorKind::rank_deficiency), 3);
}

TEST(Cli, SuccessWritesOutputs) {
    const auto out = temp_dir() / "sv_out";
    EXPECT_EQ(run_cli(std::string("sv --config ") + SMALLBALL_CONFIG_DIR + "/sv.json --trials 2 --out " + out.string()), 0);
    EXPECT_TRUE(std::filesystem::exists(out / "rows.csv"));
    EXPECT_TRUE(std::filesystem::exists(out / "result.json"));
    EXPECT_TRUE(std::filesystem::exists(out / "report.md"));
    const auto doc = json::parse(slurp(out / "result.json"));
    EXPECT_EQ(doc.at("config").at("trials"), 2);
}

TEST(Cli, BlocksFromFlagsOnly) {
    EXPECT_EQ(run_cli("blocks --N 200 --n 10 --d 4 --net-size 20 --trials 3 --seed 5"), 0);
}

TEST(Cli, ConfigErrorsExitTwo) {
    EXPECT_EQ(run_cli("blocks --N 100 --n 7"), 2);
    const auto bad = write_temp("bad.json", R"({"experiment": "sv", "params": {"dims": [2], "aspects": [4], "oops": 1}})");
    EXPECT_EQ(run_cli("sv --config " + bad.string()), 2);
    EXPECT_EQ(run_cli("sv --config /nonexistent/file.json"), 2);
    EXPECT_EQ(run_cli("slb --config " + (std::string(SMALLBALL_CONFIG_DIR) + "/sv.json")), 2);
    EXPECT_EQ(run_cli("sv"), 2);
}

TEST(Cli, NumericalContractExitsThree) {
    // projected gradient with a single iteration cannot reach the tolerance
    const auto cfg = write_temp("erm_ball.json", R"({"experiment": "erm", "params": {
        "data": {"N": 50, "target": [3.0, -2.0, 1.0]},
        "class": {"ball": {"radius": 1.0, "tol": 1e-14, "max_iter": 1}}}})");
    EXPECT_EQ(run_cli("erm --config " + cfg.string()), 3);
}

TEST(Cli, DataFlagFeedsErm) {
    const auto data = write_temp("cli_data.csv", "1,0,2\n0,1,-1\n1,1,1\n2,0,4\n");
    const auto cfg = write_temp("erm_finite.json", R"({"experiment": "erm", "params": {
        "class": {"handles": [[2.0, -1.0], [0.0, 0.0]]}}})");
    EXPECT_EQ(run_cli("erm --config " + cfg.string() + " --data " + data.string()), 0);
}

TEST(Cli, SampleConfigsRun) {
    for (const auto& entry : std::filesystem::directory_iterator(SMALLBALL_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") {
            continue;
        }
        const auto name = entry.path().stem().string();
        const auto doc = read_json_file(entry.path().string());
        const auto sub = doc.at("experiment").get<std::string>();
        const auto out = temp_dir() / ("cfg_" + name);
        EXPECT_EQ(run_cli(sub + " --config " + entry.path().string() + " --out " + out.string()), 0) << name;
    }
}
