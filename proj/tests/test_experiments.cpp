#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>

#include "secpon/experiments.hpp"

using namespace secpon;
using namespace secpon::exp;
using nlohmann::json;

namespace {

std::string row_for(const CsvTable& t, const std::string& a, const std::string& snr)
{
    // columns: experiment, seed, a, snr_db, ...
    std::string out;
    for (const auto& r : t.rows)
        if (r[2] == a && r[3] == snr) {
            for (const auto& c : r)
                out += c + ",";
            out += "\n";
        }
    return out;
}

} // namespace

TEST(ExperimentSpec, RejectsUnknownAndMalformed)
{
    EXPECT_THROW(ExperimentSpec::make("bogus"), ConfigError);
    EXPECT_THROW(ExperimentSpec::make("theory-curves", json::array()), ConfigError);
    EXPECT_THROW(ExperimentSpec::make("theory-curves", json{{"seed", -4}}), ConfigError);
    const auto s = ExperimentSpec::make("theory-curves", json{{"seed", 9}, {"x", 1}});
    EXPECT_EQ(s.seed, 9u);
    EXPECT_FALSE(s.params.contains("seed"));
    EXPECT_EQ(ExperimentSpec::make("theory-curves", json{{"seed", 9}}, 5).seed, 5u);
    EXPECT_EQ(ExperimentSpec::make("theory-curves", json::object(), std::nullopt, 0).jobs, 1u);
}

TEST(ExperimentSpec, ParameterTypes)
{
    const auto s = ExperimentSpec::make(
        "keydist", json{{"n", 2.5}, {"i", 3}, {"f", 3.0}, {"neg", -1}, {"b", true}, {"t", "x"}, {"inf", "inf"}});
    EXPECT_DOUBLE_EQ(s.number("n", 0), 2.5);
    EXPECT_DOUBLE_EQ(s.number("missing", 7), 7.0);
    EXPECT_TRUE(std::isinf(s.number("inf", 0)));
    EXPECT_THROW(s.number("t", 0), ConfigError);
    EXPECT_EQ(s.count("i", 0), 3u);
    EXPECT_EQ(s.count("f", 0), 3u);
    EXPECT_THROW(s.count("n", 0), ConfigError);
    EXPECT_THROW(s.count("neg", 0), ConfigError);
    EXPECT_TRUE(s.flag("b", false));
    EXPECT_THROW(s.flag("i", false), ConfigError);
    EXPECT_EQ(s.text("t", ""), "x");
    EXPECT_THROW(s.text("i", ""), ConfigError);
}

TEST(ExperimentSpec, Grids)
{
    const auto s = ExperimentSpec::make(
        "keydist", json{{"r", {{"start", 1}, {"stop", 2}, {"step", 0.25}}},
                        {"arr", json::array({1, "inf", "operating"})},
                        {"bad", {{"start", 10}, {"stop", 4}, {"step", 1}}},
                        {"zero", {{"start", 1}, {"stop", 4}, {"step", 0}}},
                        {"empty", json::array()},
                        {"junk", json::array({"x"})},
                        {"scalar", 3}});
    EXPECT_EQ(s.grid("r", {}), (std::vector<double>{1, 1.25, 1.5, 1.75, 2}));
    const auto arr = s.grid("arr", {}, [] { return 12.5; });
    ASSERT_EQ(arr.size(), 3u);
    EXPECT_TRUE(std::isinf(arr[1]));
    EXPECT_DOUBLE_EQ(arr[2], 12.5);
    EXPECT_THROW(s.grid("arr", {}), ConfigError); // "operating" without a resolver
    EXPECT_THROW(s.grid("bad", {}), ConfigError);
    EXPECT_THROW(s.grid("zero", {}), ConfigError);
    EXPECT_THROW(s.grid("empty", {}), ConfigError);
    EXPECT_THROW(s.grid("junk", {}), ConfigError);
    EXPECT_THROW(s.grid("scalar", {}), ConfigError);
    EXPECT_THROW(s.grid("missing", {}), ConfigError);
    EXPECT_EQ(s.grid("missing", {4.0}), std::vector<double>{4.0});
}

TEST(Statistics, WilsonInterval)
{
    const auto [l0, h0] = wilson95(0, 10);
    EXPECT_DOUBLE_EQ(l0, 0.0);
    const double z2 = 1.959963984540054 * 1.959963984540054;
    EXPECT_NEAR(h0, z2 / (10 + z2), 1e-12);
    const auto [l, h] = wilson95(5, 10);
    EXPECT_NEAR(l, 0.236593, 1e-5);
    EXPECT_NEAR(h, 0.763407, 1e-5);
    EXPECT_EQ(wilson95(0, 0), std::make_pair(0.0, 1.0));
    // coverage near 95% for p = 0.1, n = 200
    Rng r(1, 1);
    int covered = 0;
    const int trials = 4000;
    for (int t = 0; t < trials; ++t) {
        std::size_t e = 0;
        for (int i = 0; i < 200; ++i)
            e += r.uniform() < 0.1;
        const auto [lo, hi] = wilson95(e, 200);
        covered += lo <= 0.1 && 0.1 <= hi;
    }
    EXPECT_NEAR(covered / double(trials), 0.95, 0.015);
}

TEST(Statistics, BinomialAndDex)
{
    EXPECT_DOUBLE_EQ(binomial_two_sided_p(500, 1000), 1.0);
    // z = 1.96 gives p = 0.05
    const std::size_t n = 1'000'000;
    const auto k = static_cast<std::size_t>(n / 2 + 1.959963984540054 * std::sqrt(n / 4.0));
    EXPECT_NEAR(binomial_two_sided_p(k, n), 0.05, 2e-3);
    EXPECT_NEAR(binomial_two_sided_p(n - k, n), binomial_two_sided_p(k, n), 1e-12);
    EXPECT_NEAR(dex_error(1e-3, 1e-2), 1.0, 1e-12);
    EXPECT_TRUE(std::isinf(dex_error(0.0, 1e-2)));
    EXPECT_TRUE((Count{99, 1000}.low_confidence()));
    EXPECT_FALSE((Count{100, 1000}.low_confidence()));
}

TEST(Tables, FormattingAndWidth)
{
    EXPECT_EQ(std::stod(fmt(0.1)), 0.1);
    EXPECT_EQ(fmt(std::numeric_limits<double>::quiet_NaN()), "nan");
    EXPECT_EQ(fmt(-std::numeric_limits<double>::infinity()), "-inf");
    EXPECT_EQ(fmt(std::size_t(42)), "42");
    EXPECT_EQ(fmt(true), "1");
    CsvTable t;
    t.header = {"a", "b"};
    t.add(1.5, "x");
    EXPECT_THROW(t.add(1.0), std::logic_error);
    EXPECT_EQ(t.str(), "a,b\n1.5,x\n");
}

TEST(Seeds, CellSeedsAreStableAndDistinct)
{
    const auto s = ExperimentSpec::make("sweep-a", json::object(), 3);
    EXPECT_EQ(cell_seed(s, {1.7, 10.0}), cell_seed(s, {1.7, 10.0}));
    EXPECT_NE(cell_seed(s, {1.7, 10.0}), cell_seed(s, {10.0, 1.7}));
    EXPECT_NE(cell_seed(s, {1.7, 10.0}), cell_seed(ExperimentSpec::make("sweep-a", json::object(), 4), {1.7, 10.0}));
    EXPECT_NE(cell_seed(s, {1.7}), cell_seed(ExperimentSpec::make("keydist", json::object(), 3), {1.7}));
}

TEST(Parallel, EveryIndexOnceAndErrorsPropagate)
{
    std::vector<std::atomic<int>> hits(101);
    parallel_for(hits.size(), 3, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits)
        EXPECT_EQ(h.load(), 1);
    EXPECT_THROW(parallel_for(10, 2,
                              [](std::size_t i) {
                                  if (i == 7)
                                      throw std::runtime_error("x");
                              }),
                 std::runtime_error);
    parallel_for(0, 4, [](std::size_t) { FAIL(); });
}

TEST(TheoryCurves, RowsChecksAndTargets)
{
    const auto r = run_experiment(ExperimentSpec::make("theory-curves"));
    EXPECT_EQ(r.table.rows.size(), 3u * 25u * 3u);
    EXPECT_EQ(r.extra_tables.at("tradeoff").rows.size(), 6u);
    EXPECT_TRUE(r.all_pass());
    EXPECT_NEAR(r.summary["operating_snr_db"].get<double>(), 12.3434, 1e-3);
    EXPECT_THROW(run_experiment(ExperimentSpec::make("theory-curves", json{{"a", json::array({0.0})}})), std::invalid_argument);
    const auto bad = run_experiment(ExperimentSpec::make("theory-curves", json{{"tradeoff_a", {2.9, 0.5}}}));
    EXPECT_FALSE(bad.all_pass());
}

TEST(SweepA, CellsReproduceInIsolationAndAcrossJobCounts)
{
    const json full{{"a", {1.0, 1.7}}, {"snr_db", {8, 10}}, {"symbols", 20000}};
    const json single{{"a", json::array({1.7})}, {"snr_db", json::array({10})}, {"symbols", 20000}};
    const auto r1 = run_experiment(ExperimentSpec::make("sweep-a", full, 5, 1));
    const auto r2 = run_experiment(ExperimentSpec::make("sweep-a", full, 5, 2));
    EXPECT_EQ(r1.table.str(), r2.table.str());
    const auto rs = run_experiment(ExperimentSpec::make("sweep-a", single, 5, 1));
    const auto a = row_for(r1.table, fmt(1.7), fmt(10.0));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, row_for(rs.table, fmt(1.7), fmt(10.0)));
    const auto other_seed = run_experiment(ExperimentSpec::make("sweep-a", single, 6, 1));
    EXPECT_NE(row_for(other_seed.table, fmt(1.7), fmt(10.0)), a);
    EXPECT_THROW(run_experiment(ExperimentSpec::make("sweep-a", json{{"symbols", 0}})), ConfigError);
}

TEST(CprConfigParsing, RejectsUnknownInterpolation)
{
    EXPECT_THROW(cpr_point_config(ExperimentSpec::make("cpr-penalty", json{{"interpolation", "cubic"}})),
                 ConfigError);
    EXPECT_THROW(cpr_point_config(ExperimentSpec::make("cpr-penalty", json{{"payload_symbols", 0}})), ConfigError);
    const auto c = cpr_point_config(ExperimentSpec::make("cpr-penalty", json{{"interpolation", "hold"}, {"half_window", 5}}));
    EXPECT_EQ(c.cpr.interpolation, Interpolation::hold);
    EXPECT_EQ(c.cpr.half_window, 5u);
}

TEST(ProtocolParsing, RejectsBadValues)
{
    EXPECT_THROW(protocol_config(ExperimentSpec::make("keydist", json{{"cadence", "hourly"}})), ConfigError);
    EXPECT_THROW(protocol_config(ExperimentSpec::make("keydist", json{{"control_loss_probability", 1.5}})),
                 ConfigError);
    EXPECT_THROW(protocol_config(ExperimentSpec::make("keydist", json{{"a", 3.5}})), std::invalid_argument);
    EXPECT_THROW(session_channel(ExperimentSpec::make("keydist", json{{"linewidth_hz", -1}}), 10.0, 1), ConfigError);
    EXPECT_THROW(run_experiment(ExperimentSpec::make("keydist", json{{"frames", 0}})), ConfigError);
}

TEST(Results, WritesCsvAndJson)
{
    const auto dir = std::filesystem::temp_directory_path() / "secpon_results_test";
    std::filesystem::remove_all(dir);
    const auto s = ExperimentSpec::make("theory-curves", json{{"snr_db", {10, 12}}}, 3);
    const auto r = run_experiment(s);
    write_results(r, s, dir, 0.25);
    ASSERT_TRUE(std::filesystem::exists(dir / "theory-curves.csv"));
    ASSERT_TRUE(std::filesystem::exists(dir / "theory-curves_tradeoff.csv"));
    std::ifstream js(dir / "theory-curves.json");
    const auto j = json::parse(js);
    EXPECT_EQ(j["experiment"], "theory-curves");
    EXPECT_EQ(j["config"]["seed"], 3);
    EXPECT_EQ(j["wall_time_s"], 0.25);
    EXPECT_EQ(j["checks"].size(), r.checks.size());
    EXPECT_EQ(j["csv"]["columns"].size(), r.table.header.size());
    EXPECT_FALSE(j["version"].get<std::string>().empty());
    std::ifstream cs(dir / "theory-curves.csv");
    std::stringstream buf;
    buf << cs.rdbuf();
    EXPECT_EQ(buf.str(), r.table.str());
    std::filesystem::remove_all(dir);
}
