#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mmagent/config.hpp"
#include "mmagent/gateway.hpp"
#include "mmagent/hmml.hpp"
#include "mmagent/memory.hpp"
#include "mmagent/problem.hpp"
#include "mmagent/prompts.hpp"

namespace mmagent {

enum class TaskStatus { completed, failed, skipped };

const char* to_string(TaskStatus status);

struct TaskRecord {
    std::string id;
    TaskStatus status = TaskStatus::skipped;
    bool policy = false;
    int attempts = 0;
    std::string failure_reason;
    // For skipped tasks: the failed or skipped prerequisites responsible.
    std::vector<std::string> blocked_on;
};

/// Auditable record of one pipeline run, persisted as manifest.json.
struct RunManifest {
    std::string run_id;
    std::string problem_path;
    nlohmann::json config_snapshot;
    std::vector<TaskRecord> tasks;
    std::map<std::string, double> stage_seconds;
    nlohmann::json usage;
    std::map<std::string, std::string> outputs;  // logical name -> relative path
    bool report_ok = false;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);
};

struct RunResult {
    std::filesystem::path run_dir;
    RunManifest manifest;
    bool ok = false;
};

/// Drives the full pipeline: analysis, per-task modeling and solving in
/// topological order, then report assembly. A failed task skips its
/// dependents; independent tasks continue.
class Orchestrator {
public:
    Orchestrator(LlmGateway& gateway, const TemplateRegistry& templates,
                 const MethodLibrary& library, PipelineConfig config,
                 std::filesystem::path runs_root);

    RunResult run_pipeline(const Problem& problem, const std::string& problem_path,
                           const std::string& run_id);

private:
    LlmGateway& gateway_;
    const TemplateRegistry& templates_;
    const MethodLibrary& library_;
    PipelineConfig config_;
    std::filesystem::path runs_root_;
};

std::string default_run_id();

}  // namespace mmagent
