#include <doctest.h>

#include <chrono>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mmagent/errors.hpp"
#include "mmagent/gateway.hpp"
#include "mmagent/sandbox.hpp"
#include "test_helpers.hpp"

using mmagent::CodeArtifact;
using mmagent::ExecStatus;
using mmagent::ExecutionOutcome;
using mmagent::MockGateway;
using mmagent::ModelingScheme;
using mmagent::ParseError;
using mmagent::PipelineConfig;
using mmagent::Problem;
using mmagent::ResourceBundle;
using mmagent::SolverSandbox;
using mmagent::Subtask;
using mmagent::TemplateRegistry;

namespace {

const TemplateRegistry& registry() {
    static const TemplateRegistry r = TemplateRegistry::load(testutil::templates_dir());
    return r;
}

Subtask sample_subtask() {
    Subtask t;
    t.id = "1";
    t.description = "compute a number";
    t.dependency_narrative = "stands alone";
    return t;
}

ModelingScheme sample_scheme() {
    ModelingScheme s;
    s.formulas = "y = 2x";
    s.narrative = "double the input";
    return s;
}

Problem dataset_problem() {
    Problem p;
    p.background = "b";
    p.requirements = "r";
    p.dataset_path = "data.csv";
    p.is_policy = false;
    return p;
}

CodeArtifact artifact_with(const std::string& source) {
    CodeArtifact a;
    a.source = source;
    a.save_path = "solution.py";
    return a;
}

std::string fenced(const std::string& code) { return "```python\n" + code + "\n```"; }

}  // namespace

TEST_CASE("fenced code extraction") {
    CHECK(mmagent::extract_fenced_code("```python\nprint(1)\n```") == "print(1)");
    CHECK(mmagent::extract_fenced_code("prose\n```\nx = 1\ny = 2\n```\ntrailer") ==
          "x = 1\ny = 2");
    // The first fence wins.
    CHECK(mmagent::extract_fenced_code("```\nfirst\n```\n```\nsecond\n```") == "first");
    CHECK_THROWS_AS(mmagent::extract_fenced_code("no fence at all"), ParseError);
    CHECK_THROWS_AS(mmagent::extract_fenced_code("```python\nunterminated"), ParseError);
    CHECK_THROWS_AS(mmagent::extract_fenced_code("```\n\n```"), ParseError);
}

TEST_CASE("execution captures exit status, logs, and new files") {
    PipelineConfig config;
    MockGateway gateway(nlohmann::json::object());
    SolverSandbox sandbox(gateway, registry(), config);

    SUBCASE("successful script") {
        testutil::TempDir dir("sandbox-ok");
        const auto outcome = sandbox.execute(
            artifact_with("print('hello')\nopen('made.txt', 'w').write('x')\n"), dir.path());
        CHECK(outcome.status == ExecStatus::success);
        CHECK(outcome.exit_code == 0);
        CHECK(outcome.stdout_tail.find("hello") != std::string::npos);
        CHECK(outcome.files_created == std::vector<std::string>{"made.txt"});
        CHECK(testutil::read_file(dir.path() / "stdout.log").find("hello") != std::string::npos);
        CHECK(std::filesystem::exists(dir.path() / "solution.py"));
    }
    SUBCASE("failing script") {
        testutil::TempDir dir("sandbox-fail");
        const auto outcome = sandbox.execute(
            artifact_with("import sys\nsys.stderr.write('boom\\n')\nsys.exit(3)\n"), dir.path());
        CHECK(outcome.status == ExecStatus::nonzero_exit);
        CHECK(outcome.exit_code == 3);
        CHECK(outcome.stderr_tail.find("boom") != std::string::npos);
    }
    SUBCASE("logs and the script never count as created files") {
        testutil::TempDir dir("sandbox-clean");
        const auto outcome = sandbox.execute(artifact_with("print('quiet')\n"), dir.path());
        CHECK(outcome.status == ExecStatus::success);
        CHECK(outcome.files_created.empty());
    }
    SUBCASE("missing interpreter is a spawn failure") {
        testutil::TempDir dir("sandbox-spawn");
        PipelineConfig broken;
        broken.interpreter_command = "definitely-not-a-real-interpreter-9000";
        SolverSandbox bad(gateway, registry(), broken);
        const auto outcome = bad.execute(artifact_with("print(1)\n"), dir.path());
        CHECK(outcome.status == ExecStatus::spawn_failure);
        CHECK(outcome.stderr_tail.find("definitely-not-a-real-interpreter-9000") !=
              std::string::npos);
    }
}

TEST_CASE("runaway scripts are killed near the deadline") {
    PipelineConfig config;
    config.exec_timeout = std::chrono::milliseconds(1000);
    MockGateway gateway(nlohmann::json::object());
    SolverSandbox sandbox(gateway, registry(), config);

    testutil::TempDir dir("sandbox-timeout");
    const auto started = std::chrono::steady_clock::now();
    const auto outcome =
        sandbox.execute(artifact_with("import time\ntime.sleep(30)\n"), dir.path());
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);

    CHECK(outcome.status == ExecStatus::timeout);
    // Killed within two seconds of the deadline.
    CHECK(elapsed.count() < 3000);
    CHECK(outcome.duration.count() >= 1000);
}

TEST_CASE("repair loop consumes rounds until success or the budget") {
    Problem problem = dataset_problem();
    problem.dataset_summary = "numbers";

    SUBCASE("always failing consumes every round") {
        PipelineConfig config;
        config.n_repair = 2;
        MockGateway gateway(nlohmann::json{
            {"codegen", {fenced("raise SystemExit('first failure')")}},
            {"repair",
             {fenced("raise SystemExit('second failure')"),
              fenced("raise SystemExit('third failure')"), fenced("never used")}}});
        SolverSandbox sandbox(gateway, registry(), config);

        testutil::TempDir dir("repair-exhaust");
        CodeArtifact artifact = sandbox.generate_code(sample_subtask(), sample_scheme(),
                                                      ResourceBundle{}, problem, dir.path());
        ExecutionOutcome outcome = sandbox.execute(artifact, dir.path());
        REQUIRE(outcome.status == ExecStatus::nonzero_exit);
        const auto result = sandbox.repair_loop(artifact, outcome, sample_scheme(), dir.path());
        CHECK(result.attempts == 2);
        CHECK(result.outcome.status == ExecStatus::nonzero_exit);
        CHECK(gateway.consumed("repair") == 2);
        CHECK(result.artifact.attempt == 2);
        CHECK(result.artifact.source.find("third failure") != std::string::npos);
    }
    SUBCASE("second repair passes") {
        PipelineConfig config;
        config.n_repair = 3;
        MockGateway gateway(nlohmann::json{
            {"codegen", {fenced("raise SystemExit('broken')")}},
            {"repair",
             {fenced("raise SystemExit('still broken')"), fenced("print('fixed')"),
              fenced("never used")}}});
        SolverSandbox sandbox(gateway, registry(), config);

        testutil::TempDir dir("repair-pass2");
        CodeArtifact artifact = sandbox.generate_code(sample_subtask(), sample_scheme(),
                                                      ResourceBundle{}, problem, dir.path());
        ExecutionOutcome outcome = sandbox.execute(artifact, dir.path());
        const auto result = sandbox.repair_loop(artifact, outcome, sample_scheme(), dir.path());
        CHECK(result.attempts == 2);
        CHECK(result.outcome.status == ExecStatus::success);
        CHECK(gateway.consumed("repair") == 2);
    }
    SUBCASE("a passing first run skips the loop entirely") {
        PipelineConfig config;
        MockGateway gateway(nlohmann::json{{"codegen", {fenced("print('ok')")}}});
        SolverSandbox sandbox(gateway, registry(), config);

        testutil::TempDir dir("repair-skip");
        CodeArtifact artifact = sandbox.generate_code(sample_subtask(), sample_scheme(),
                                                      ResourceBundle{}, problem, dir.path());
        ExecutionOutcome outcome = sandbox.execute(artifact, dir.path());
        const auto result = sandbox.repair_loop(artifact, outcome, sample_scheme(), dir.path());
        CHECK(result.attempts == 0);
        CHECK(result.outcome.status == ExecStatus::success);
        CHECK(gateway.consumed("repair") == 0);
    }
    SUBCASE("zero budget leaves the failure as-is") {
        PipelineConfig config;
        config.n_repair = 0;
        MockGateway gateway(nlohmann::json{{"codegen", {fenced("raise SystemExit(1)")}}});
        SolverSandbox sandbox(gateway, registry(), config);

        testutil::TempDir dir("repair-none");
        CodeArtifact artifact = sandbox.generate_code(sample_subtask(), sample_scheme(),
                                                      ResourceBundle{}, problem, dir.path());
        ExecutionOutcome outcome = sandbox.execute(artifact, dir.path());
        const auto result = sandbox.repair_loop(artifact, outcome, sample_scheme(), dir.path());
        CHECK(result.attempts == 0);
        CHECK(result.outcome.status == ExecStatus::nonzero_exit);
        CHECK(gateway.consumed("repair") == 0);
    }
}

TEST_CASE("code generation re-prompts once when the fence is missing") {
    Problem problem = dataset_problem();
    PipelineConfig config;

    SUBCASE("second reply carries the fence") {
        MockGateway gateway(
            nlohmann::json{{"codegen", {"no code here", fenced("print('late')")}}});
        SolverSandbox sandbox(gateway, registry(), config);
        testutil::TempDir dir("codegen-retry");
        const CodeArtifact artifact = sandbox.generate_code(
            sample_subtask(), sample_scheme(), ResourceBundle{}, problem, dir.path());
        CHECK(artifact.source == "print('late')");
        CHECK(artifact.attempt == 0);
        CHECK(artifact.save_path == std::filesystem::path("solution.py"));
        CHECK(gateway.consumed("codegen") == 2);
    }
    SUBCASE("two fenceless replies fail") {
        MockGateway gateway(nlohmann::json{{"codegen", {"nope", "still nope", "unused"}}});
        SolverSandbox sandbox(gateway, registry(), config);
        testutil::TempDir dir("codegen-fail");
        CHECK_THROWS_AS(sandbox.generate_code(sample_subtask(), sample_scheme(), ResourceBundle{},
                                              problem, dir.path()),
                        ParseError);
        CHECK(gateway.consumed("codegen") == 2);
    }
    SUBCASE("policy problems never generate code") {
        Problem policy = dataset_problem();
        policy.is_policy = true;
        MockGateway gateway(nlohmann::json::object());
        SolverSandbox sandbox(gateway, registry(), config);
        testutil::TempDir dir("codegen-policy");
        CHECK_THROWS_AS(sandbox.generate_code(sample_subtask(), sample_scheme(), ResourceBundle{},
                                              policy, dir.path()),
                        mmagent::ValidationError);
    }
}

TEST_CASE("structure extraction keeps only files that exist") {
    PipelineConfig config;
    const std::string reply = R"({
        "class": [],
        "function": [{"function_name": "main", "description": "entry"}],
        "file_outputs": [
            {"path": "real.csv", "file_description": "kept", "column_name": ["a", "b"]},
            {"path": "ghost.csv", "file_description": "dropped"}
        ]
    })";
    MockGateway gateway(nlohmann::json{{"structure", {reply}}});
    SolverSandbox sandbox(gateway, registry(), config);

    testutil::TempDir dir("structure");
    testutil::write_file(dir.path() / "real.csv", "a,b\n1,2\n");

    std::vector<std::string> warnings;
    const auto structure =
        sandbox.extract_structure(artifact_with("print(1)"), dir.path(), &warnings);
    CHECK(structure.at("script_path") == "solution.py");
    REQUIRE(structure.at("file_outputs").size() == 1);
    CHECK(structure.at("file_outputs")[0].at("path") == "real.csv");
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("ghost.csv") != std::string::npos);
}

TEST_CASE("full solve assembles outputs and stops early on failure") {
    Problem problem = dataset_problem();
    problem.dataset_summary = "numbers";

    SUBCASE("success path produces the full record") {
        PipelineConfig config;
        const std::string structure_reply = R"({
            "class": [],
            "function": [],
            "file_outputs": [
                {"path": "out.csv", "file_description": "doubled values",
                 "column_name": ["x", "y"]}
            ]
        })";
        MockGateway gateway(nlohmann::json{
            {"codegen", {fenced("open('out.csv', 'w').write('x,y\\n1,2\\n')\nprint('done')")}},
            {"structure", {structure_reply}},
            {"interpret", {"values doubled cleanly"}},
            {"answer", {"the doubled table"}}});
        SolverSandbox sandbox(gateway, registry(), config);

        testutil::TempDir dir("solve-ok");
        const auto result = sandbox.solve_full(sample_subtask(), sample_scheme(), ResourceBundle{},
                                               problem, dir.path());
        CHECK(result.final_status == ExecStatus::success);
        CHECK(result.attempts == 0);
        CHECK(result.warnings.empty());
        REQUIRE(result.outputs.code.has_value());
        CHECK(result.outputs.code->find("out.csv") != std::string::npos);
        REQUIRE(result.outputs.execution_result.has_value());
        REQUIRE(result.outputs.code_structure.has_value());
        REQUIRE(result.outputs.produced_files.size() == 1);
        CHECK(result.outputs.produced_files[0].path == "out.csv");
        CHECK(result.outputs.produced_files[0].columns == std::vector<std::string>{"x", "y"});
        CHECK(result.outputs.interpretation == "values doubled cleanly");
        CHECK(result.outputs.answer == "the doubled table");
        CHECK(result.outputs.scheme.find("y = 2x") != std::string::npos);
        CHECK(result.outputs.scheme.find("double the input") != std::string::npos);
    }
    SUBCASE("terminal failure skips structure, interpretation, and answer") {
        PipelineConfig config;
        config.n_repair = 1;
        MockGateway gateway(nlohmann::json{
            {"codegen", {fenced("raise SystemExit('no')")}},
            {"repair", {fenced("raise SystemExit('still no')")}},
            {"structure", {"unused"}},
            {"interpret", {"unused"}},
            {"answer", {"unused"}}});
        SolverSandbox sandbox(gateway, registry(), config);

        testutil::TempDir dir("solve-fail");
        const auto result = sandbox.solve_full(sample_subtask(), sample_scheme(), ResourceBundle{},
                                               problem, dir.path());
        CHECK(result.final_status == ExecStatus::nonzero_exit);
        CHECK(result.attempts == 1);
        REQUIRE(result.outputs.code.has_value());
        REQUIRE(result.outputs.execution_result.has_value());
        CHECK_FALSE(result.outputs.code_structure.has_value());
        CHECK(result.outputs.interpretation.empty());
        CHECK(result.outputs.answer.empty());
        CHECK(gateway.consumed("structure") == 0);
        CHECK(gateway.consumed("interpret") == 0);
        CHECK(gateway.consumed("answer") == 0);
    }
    SUBCASE("claimed files the run never made are dropped with a warning") {
        PipelineConfig config;
        const std::string structure_reply = R"({
            "class": [],
            "function": [],
            "file_outputs": [
                {"path": "stale.csv", "file_description": "from an earlier run"}
            ]
        })";
        MockGateway gateway(nlohmann::json{{"codegen", {fenced("print('quiet')")}},
                                           {"structure", {structure_reply}},
                                           {"interpret", {"i"}},
                                           {"answer", {"a"}}});
        SolverSandbox sandbox(gateway, registry(), config);

        testutil::TempDir dir("solve-stale");
        // The file exists on disk but predates the run.
        testutil::write_file(dir.path() / "stale.csv", "old\n");
        const auto result = sandbox.solve_full(sample_subtask(), sample_scheme(), ResourceBundle{},
                                               problem, dir.path());
        CHECK(result.final_status == ExecStatus::success);
        CHECK(result.outputs.produced_files.empty());
        REQUIRE_FALSE(result.warnings.empty());
        CHECK(result.warnings.back().find("stale.csv") != std::string::npos);
    }
}

TEST_CASE("policy solving consumes no code prompts") {
    PipelineConfig config;
    MockGateway gateway(nlohmann::json{{"interpret", {"the insight"}}, {"answer", {"the plan"}}});
    SolverSandbox sandbox(gateway, registry(), config);

    const auto outputs = sandbox.solve_policy(sample_subtask(), sample_scheme());
    CHECK_FALSE(outputs.code.has_value());
    CHECK_FALSE(outputs.execution_result.has_value());
    CHECK_FALSE(outputs.code_structure.has_value());
    CHECK(outputs.produced_files.empty());
    CHECK(outputs.interpretation == "the insight");
    CHECK(outputs.answer == "the plan");
    CHECK(outputs.scheme.find("y = 2x") != std::string::npos);
    CHECK(gateway.consumed("codegen") == 0);
    CHECK(gateway.consumed("structure") == 0);
    CHECK(gateway.transcript().size() == 2);
}
