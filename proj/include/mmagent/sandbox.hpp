#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmagent/config.hpp"
#include "mmagent/gateway.hpp"
#include "mmagent/memory.hpp"
#include "mmagent/modeling.hpp"
#include "mmagent/problem.hpp"
#include "mmagent/prompts.hpp"

namespace mmagent {

enum class ExecStatus { success, nonzero_exit, timeout, spawn_failure };

const char* to_string(ExecStatus status);

struct CodeArtifact {
    std::string source;
    std::filesystem::path save_path;  // relative to the task workdir
    int attempt = 0;
};

struct ExecutionOutcome {
    ExecStatus status = ExecStatus::spawn_failure;
    int exit_code = -1;
    std::string stdout_tail;
    std::string stderr_tail;
    std::chrono::milliseconds duration{0};
    // Workdir-relative paths that appeared during the run, sorted.
    std::vector<std::string> files_created;
};

/// Extracts the first fenced code block from a reply. Throws ParseError when
/// no fence is present.
std::string extract_fenced_code(const std::string& reply);

/// Runs generated solver code in an isolated working directory and drives
/// the generate / execute / repair / interpret / answer chain for a subtask.
class SolverSandbox {
public:
    SolverSandbox(LlmGateway& gateway, const TemplateRegistry& templates,
                  const PipelineConfig& config);

    CodeArtifact generate_code(const Subtask& subtask, const ModelingScheme& scheme,
                               const ResourceBundle& resources, const Problem& problem,
                               const std::filesystem::path& workdir);

    /// Writes the artifact into the workdir, spawns the configured
    /// interpreter on it, enforces the timeout, and reports what happened.
    /// stdout/stderr stream to stdout.log / stderr.log in the workdir.
    ExecutionOutcome execute(const CodeArtifact& artifact,
                             const std::filesystem::path& workdir);

    struct RepairResult {
        CodeArtifact artifact;
        ExecutionOutcome outcome;
        int attempts = 0;  // repair rounds consumed; 0 when the first run passed
    };

    /// Repairs a failing artifact up to n_repair times, feeding the latest
    /// error tail back through the debugging prompt. Stops early on success.
    RepairResult repair_loop(CodeArtifact artifact, ExecutionOutcome outcome,
                             const ModelingScheme& scheme,
                             const std::filesystem::path& workdir);

    /// Asks for the code-structure record and validates it. Claimed output
    /// files that do not exist under the workdir are dropped with a warning.
    nlohmann::json extract_structure(const CodeArtifact& artifact,
                                     const std::filesystem::path& workdir,
                                     std::vector<std::string>* warnings = nullptr);

    std::string interpret_results(const Subtask& subtask, const ModelingScheme& scheme,
                                  const ExecutionOutcome* outcome);

    std::string formulate_answer(const Subtask& subtask, const ModelingScheme& scheme,
                                 const std::string& interpretation);

    /// Full solve for a subtask with code: generate, execute, repair,
    /// extract structure, interpret, answer.
    struct SolveResult {
        TaskOutputs outputs;
        ExecStatus final_status = ExecStatus::spawn_failure;
        int attempts = 0;
        std::vector<std::string> warnings;
    };
    SolveResult solve_full(const Subtask& subtask, const ModelingScheme& scheme,
                           const ResourceBundle& resources, const Problem& problem,
                           const std::filesystem::path& workdir);

    /// Solve for policy problems: no code, no execution; scheme is
    /// interpreted directly.
    TaskOutputs solve_policy(const Subtask& subtask, const ModelingScheme& scheme);

private:
    LlmGateway& gateway_;
    const TemplateRegistry& templates_;
    PipelineConfig config_;

    std::string request_code(const std::string& tag,
                             const std::map<std::string, std::string>& slots);
};

}  // namespace mmagent
