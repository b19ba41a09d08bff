#include "ksc/config.hpp"
#include "ksc/runner.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace ksc;
namespace fs = std::filesystem;

namespace {

ErrorCode code_of(const std::string& text, Task task) {
    try {
        parse_config_text(text, task);
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::InvalidArgument;  // sentinel: no error
}

std::string message_of(const std::string& text, Task task) {
    try {
        parse_config_text(text, task);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

std::map<std::string, std::string> read_dir(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().filename() == "timings.json") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out[e.path().filename().string()] = ss.str();
    }
    return out;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("ksc-test-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST(Config, MinimalDocumentUsesDefaults) {
    auto sc = parse_config_text(R"({"spectral_core": {"a": "pi", "nu": "1"}})", Task::Spectrum);
    ASSERT_TRUE(sc.spec.has_value());
    EXPECT_DOUBLE_EQ(sc.spec->nu(), 1.0);
    EXPECT_NEAR(sc.spec->a(), kPi, 1e-15);
    EXPECT_EQ(sc.seed, 0u);
}

TEST(Config, UnknownFieldIsReportedWithItsPath) {
    const std::string text = R"({"spectral_core": {"a": "pi", "nu": "1", "K_z": 3}})";
    EXPECT_EQ(code_of(text, Task::Spectrum), ErrorCode::Config);
    EXPECT_NE(message_of(text, Task::Spectrum).find("spectral_core.K_z"), std::string::npos);
}

TEST(Config, UnknownTopLevelSectionIsRejected) {
    const std::string text = R"({"spectral_core": {"a": "pi", "nu": "1"}, "extras": {}})";
    EXPECT_NE(message_of(text, Task::Spectrum).find("extras"), std::string::npos);
}

TEST(Config, SyntaxErrorNamesLineAndColumn) {
    const std::string text = "{\n  \"spectral_core\": {\"a\": \"pi\",\n  \"nu\": }\n}";
    auto msg = message_of(text, Task::Spectrum);
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("column"), std::string::npos);
}

TEST(Config, WrongTypeIsAConfigError) {
    EXPECT_EQ(code_of(R"({"spectral_core": {"a": "pi", "nu": "1", "K_x": "eight"}})", Task::Spectrum),
              ErrorCode::Config);
}

TEST(Config, CriticalNuRefusedForControlTasksOnly) {
    const std::string text = R"({"spectral_core": {"a": "pi", "nu": "7/1"}})";
    EXPECT_EQ(code_of(text, Task::Control1D), ErrorCode::CriticalParameter);
    EXPECT_EQ(code_of(text, Task::ControlND), ErrorCode::CriticalParameter);
    EXPECT_NO_THROW(parse_config_text(text, Task::CriticalSet));
}

TEST(Config, TaskNamesRoundTrip) {
    for (const auto& [name, task] : task_names()) {
        EXPECT_EQ(parse_task(name), task);
        EXPECT_EQ(task_name(task), name);
    }
    EXPECT_FALSE(parse_task("bogus").has_value());
}

TEST(Runner, ExitCodesPerErrorKind) {
    EXPECT_EQ(exit_code_for(ErrorCode::Config), 2);
    EXPECT_EQ(exit_code_for(ErrorCode::CriticalParameter), 3);
    EXPECT_EQ(exit_code_for(ErrorCode::BelowMinimalTime), 4);
    EXPECT_EQ(exit_code_for(ErrorCode::IllConditioned), 5);
    EXPECT_EQ(exit_code_for(ErrorCode::NoContraction), 6);
    EXPECT_EQ(exit_code_for(ErrorCode::RationalPoint), 7);
    EXPECT_EQ(exit_code_for(ErrorCode::GramianSingular), 8);
    EXPECT_EQ(exit_code_for(ErrorCode::DuplicateRate), 1);
}

TEST(Runner, NumbersRoundTripThroughText) {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) EXPECT_EQ(std::stod(fmt(v)), v);
}

TEST(Runner, SeededDrawsAreReproducibleAndBounded) {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        double x = a.symmetric(), y = b.symmetric(), z = c.symmetric();
        EXPECT_EQ(x, y);
        EXPECT_GE(x, -1.0);
        EXPECT_LT(x, 1.0);
        differs |= x != z;
    }
    EXPECT_TRUE(differs);
}

TEST(Runner, RepeatedRunsProduceIdenticalArtifacts) {
    const std::string text = R"({
      "spectral_core": {"a": "pi", "nu": "1", "K_x": 6, "J_y": 4},
      "initial": {"kind": "random"},
      "control_1d": {"j": 1, "T": 0.5, "K_trunc": 6, "samples": 21},
      "seed": 5
    })";
    auto sc = parse_config_text(text, Task::Control1D);
    auto root = scratch("determinism");
    auto r1 = run_scenario(sc, root.string());
    auto r2 = run_scenario(sc, root.string());
    ASSERT_EQ(r1.exit_code, 0) << r1.message;
    ASSERT_EQ(r2.exit_code, 0) << r2.message;
    EXPECT_NE(r1.dir, r2.dir);
    auto a = read_dir(r1.dir), b = read_dir(r2.dir);
    EXPECT_GT(a.size(), 2u);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(fs::exists(r1.dir / "timings.json"));
    fs::remove_all(root);
}

TEST(Runner, FailedRunStillWritesManifestWithExitCode) {
    const std::string text = R"({
      "spectral_core": {"a": "pi", "nu": "0", "K_x": 8, "J_y": 2},
      "pointwise_control": {"T": 1.0, "point": {"kind": "rational", "value": "1/3"}}
    })";
    auto sc = parse_config_text(text, Task::ControlPoint);
    auto root = scratch("failure");
    auto r = run_scenario(sc, root.string());
    EXPECT_EQ(r.exit_code, 7);
    std::ifstream in(r.dir / "manifest.json");
    auto j = Json::parse(in);
    EXPECT_EQ(j["exit_code"], 7);
    EXPECT_EQ(j["status"], "RationalPoint");
    fs::remove_all(root);
}

TEST(Runner, SeedChangesTheRunHash) {
    const std::string text = R"({"spectral_core": {"a": "pi", "nu": "1"}, "seed": 1})";
    auto a = parse_config_text(text, Task::Spectrum);
    auto b = a;
    b.seed = 2;
    EXPECT_NE(run_hash(a), run_hash(b));
    EXPECT_EQ(run_hash(a).size(), 8u);
}
