#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "pathineq/experiments.hpp"

using namespace pathineq;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("pathineq_exp_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentSpec small(Recipe r, const std::string& name) {
    ExperimentSpec s;
    s.name = name;
    s.theorem = "test";
    s.recipe = r;
    s.steps = 20;
    s.n_paths = 64;
    s.n_train = 800;
    s.bootstrap = 8;
    s.seed = 17;
    return s;
}

const char* kValid = R"(format = pathineq-experiment/1
name = brownian-small
theorem = Wiener T2
recipe = brownian
seed = 5

[grid]
horizon = 1
steps = 20

[sample]
n_paths = 64

[tilts]
battery = zero,constant:1,adapted:0.5
bootstrap = 8
)";

}  // namespace

TEST(ExperimentSpec, ParsesAndRoundTrips) {
    std::istringstream is(kValid);
    auto s = parse_experiment(is);
    EXPECT_EQ(s.name, "brownian-small");
    EXPECT_EQ(s.recipe, Recipe::Brownian);
    EXPECT_EQ(s.steps, 20);
    EXPECT_EQ(s.n_paths, 64u);
    EXPECT_EQ(s.seed, 5u);
    EXPECT_FALSE(s.constant.has_value());
    std::ostringstream os;
    write_experiment(s, os);
    std::istringstream back(os.str());
    auto t = parse_experiment(back);
    EXPECT_EQ(t.to_json(), s.to_json());
}

TEST(ExperimentSpec, RejectsBadInput) {
    auto parse = [](const std::string& text) {
        std::istringstream is(text);
        return parse_experiment(is);
    };
    EXPECT_THROW(parse("name = x\nrecipe = brownian\n"), std::invalid_argument);                  // no format
    EXPECT_THROW(parse("format = other/2\nname = x\nrecipe = brownian\n"), std::invalid_argument);  // wrong format
    EXPECT_THROW(parse("format = pathineq-experiment/1\nname = x\nrecipe = nope\n"), std::invalid_argument);
    EXPECT_THROW(parse("format = pathineq-experiment/1\nname = a/b\nrecipe = brownian\n"), std::invalid_argument);
    EXPECT_THROW(parse("format = pathineq-experiment/1\nname = x\nrecipe = brownian\n[grid]\nsteps = ten\n"),
                 std::invalid_argument);
    EXPECT_THROW(parse("format = pathineq-experiment/1\n[[broken\n"), std::invalid_argument);
    EXPECT_THROW(load_experiment("/nonexistent/spec.ini"), std::runtime_error);
}

TEST(ExperimentSpec, TiltParser) {
    auto t = tilt_battery_from("zero, constant:2, ramp:1, sine:1.5, adapted:0.8", 1, 1.0);
    ASSERT_EQ(t.size(), 5u);
    EXPECT_EQ(t[0].shape, TiltShape::Zero);
    EXPECT_EQ(t[1].shape, TiltShape::Constant);
    EXPECT_EQ(t[4].kind, TiltKind::Adapted);
    EXPECT_EQ(tilt_battery_from("standard", 2, 1.0).size(), standard_tilt_battery(2).size());
    EXPECT_THROW(tilt_battery_from("wobble:1", 1, 1.0), std::invalid_argument);
    EXPECT_THROW(tilt_battery_from("constant:x", 1, 1.0), std::invalid_argument);
    EXPECT_THROW(tilt_battery_from(" , ", 1, 1.0), std::invalid_argument);
}

TEST(Registries, TerminalsAndDrifts) {
    auto grid = make_grid(1.0, 4);
    Path p(grid, 1, {0.0, 1.0, 3.0, -1.0, 2.0});
    EXPECT_DOUBLE_EQ(terminal_library("wT", {}).F(p), 2.0);
    EXPECT_DOUBLE_EQ(terminal_library("running-max", {{"F_scale", 2.0}}).F(p), 6.0);
    EXPECT_DOUBLE_EQ(terminal_library("clipped-wT", {{"clip", 1.5}}).F(p), 1.5);
    EXPECT_DOUBLE_EQ(terminal_library("sin-wT", {}).L_F, 1.0);
    EXPECT_THROW(terminal_library("nope", {}), std::invalid_argument);
    auto m = drift_library("gaussian-bump", {{"amplitude", 2.0}});
    EXPECT_DOUBLE_EQ(m.b(0.0, 0.0), 2.0);
    EXPECT_THROW(drift_library("nope", {}), std::invalid_argument);
    EXPECT_EQ(obstacle_library("put", {{"K", 1.0}}).L_Gamma, 1.0);
    EXPECT_THROW(obstacle_library("nope", {}), std::invalid_argument);
}

TEST(BuildProcess, ConstantsComeFromTheCalculators) {
    auto b = build_process(small(Recipe::Brownian, "b"));
    EXPECT_DOUBLE_EQ(b.constant, 2.0);

    auto q = small(Recipe::BsdeQuadratic, "q");
    q.choices = {{"terminal", "wT"}};
    q.params = {{"F_scale", 0.5}};
    EXPECT_DOUBLE_EQ(build_process(q).constant, 2.0 * 0.25);

    auto l = small(Recipe::BsdeLipschitz, "l");
    l.choices = {{"generator", "linear-sin"}, {"terminal", "sin-wT"}};
    l.params = {{"alpha", 1.0}, {"beta", 1.0}, {"gamma", 1.0}};
    auto lb = build_process(l);
    EXPECT_NEAR(lb.constant, 2.0 * 4.0 * std::exp(2.0), 1e-12);
    l.choices["output"] = "z";
    auto lz = build_process(l);
    EXPECT_DOUBLE_EQ(lz.theta, 0.25);
    EXPECT_EQ(lz.form, RhsForm::ProductWithPower);
    l.choices["output"] = "bogus";
    EXPECT_THROW(build_process(l), std::invalid_argument);

    auto u = small(Recipe::UtilityMax, "u");
    u.choices = {{"generator", "utility"}, {"terminal", "sin-wT"}};
    u.params = {{"theta", 0.5}, {"shape", 1.0}, {"lo", -1.0}, {"hi", 1.0}};
    EXPECT_THROW(build_process(u), std::invalid_argument);

    auto user = small(Recipe::Brownian, "c");
    user.constant = 7.0;
    EXPECT_DOUBLE_EQ(build_process(user).constant, 7.0);
}

TEST(RunExperiment, WritesArtifactsAtomically) {
    auto root = scratch("run");
    std::istringstream is(kValid);
    auto s = parse_experiment(is);
    auto r = run_experiment(s, root);
    EXPECT_EQ(r.verdict, Verdict::Pass);
    for (const char* f : {"report.json", "tilts.csv", "tails.csv", "samples.bin", "spec.ini"})
        EXPECT_TRUE(fs::exists(root / s.name / f)) << f;
    auto bundle = load_bundle((root / s.name / "samples.bin").string());
    EXPECT_EQ(bundle.size(), 64u);
    std::ifstream rj(root / s.name / "report.json");
    auto j = nlohmann::json::parse(rj);
    EXPECT_EQ(j["verdict"], "pass");
    EXPECT_EQ(j["verification"]["tilts"].size(), 3u);

    // same seed, same report
    auto r2 = run_experiment(s, root);
    EXPECT_EQ(r2.report.dump(), r.report.dump());

    // a failing run leaves no directory behind
    auto bad = s;
    bad.name = "bad";
    bad.tilts = "nonsense";
    EXPECT_THROW(run_experiment(bad, root), std::invalid_argument);
    EXPECT_FALSE(fs::exists(root / "bad"));
    for (const auto& e : fs::directory_iterator(root)) EXPECT_EQ(e.path().filename(), s.name);
    fs::remove_all(root);
}

TEST(RunExperiment, NegativeControlFails) {
    auto root = scratch("neg");
    auto s = small(Recipe::Brownian, "neg");
    s.constant = 0.05;
    s.tilts = "zero,constant:3";
    EXPECT_EQ(run_experiment(s, root).verdict, Verdict::Fail);
    fs::remove_all(root);
}

TEST(RunExperiment, QuadraticWithLsiCheck) {
    auto root = scratch("lsi");
    auto s = small(Recipe::BsdeQuadratic, "lsi");
    s.choices = {{"terminal", "sin-wT"}};
    s.lsi = true;
    s.lsi_n = 4000;
    auto r = run_experiment(s, root);
    EXPECT_TRUE(r.report["checks"]["lsi"]["pass"].get<bool>());
    EXPECT_NE(r.verdict, Verdict::Fail) << r.report.dump(1);
    fs::remove_all(root);
}

TEST(StandardSuite, NamesAndSeedsAreDistinct) {
    auto suite = standard_suite();
    EXPECT_GE(suite.size(), 7u);
    std::set<std::string> names;
    std::set<std::uint64_t> seeds;
    for (const auto& s : suite) {
        EXPECT_FALSE(s.theorem.empty());
        names.insert(s.name);
        seeds.insert(s.seed);
    }
    EXPECT_EQ(names.size(), suite.size());
    EXPECT_EQ(seeds.size(), suite.size());
}

TEST(Constants, ReportFromMetadata) {
    auto j = constants_report({{"T", "1"}, {"L_F", "1"}, {"L_g", "1"}, {"m", "1"}, {"d", "1"}});
    EXPECT_NEAR(j["C_y_multi"]["value"].get<double>(), 8.0 * std::exp(2.0), 1e-12);
    EXPECT_DOUBLE_EQ(j["C_y_1d"]["value"].get<double>(), 2.0);
    EXPECT_FALSE(j["C_y_multi"]["formula"].get<std::string>().empty());

    auto s = constants_report({{"c1", "0"}, {"c2", "0"}, {"c3", "0"}, {"sigma_inf", "1"}, {"L_sigma", "0"}});
    EXPECT_DOUBLE_EQ(s["C_x_theorem"]["value"].get<double>(), 6.0);

    auto p = constants_report({{"C", "2"}, {"L_psi", "3"}});
    EXPECT_DOUBLE_EQ(p["pushforward"]["value"].get<double>(), 18.0);

    EXPECT_THROW(constants_report({}), std::invalid_argument);
    EXPECT_THROW(constants_report({{"T", "1"}}), std::invalid_argument);
    EXPECT_THROW(constants_report({{"L_F", "one"}}), std::invalid_argument);
    EXPECT_THROW(constants_report({{"bogus", "1"}}), std::invalid_argument);
}
