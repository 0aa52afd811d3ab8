#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>

namespace mmagent {

/// Knobs for a pipeline run. Defaults reproduce the reference setup; all of
/// them can be overridden from a JSON config file.
struct PipelineConfig {
    int tasknum = 4;
    double omega = 0.7;
    int top_k = 5;
    int n_reflect = 1;
    int n_refine = 2;
    int n_repair = 3;
    std::chrono::milliseconds exec_timeout{300000};

    std::string interpreter_command = "python3";
    std::string solver_extension = "py";
    // "builtin" runs the in-process structural checker; empty disables the
    // compile check entirely; anything else is an external command invoked
    // with the report path appended.
    std::optional<std::string> latex_check_command = "builtin";
    bool parallel_tasks = false;

    double price_per_input_token = 0.0;
    double price_per_output_token = 0.0;

    // Plumbing knobs.
    bool transitive_resources = false;
    std::size_t resource_excerpt_chars = 2000;
    std::size_t error_tail_bytes = 4096;
    std::size_t output_tail_bytes = 8192;
    int chart_count = 2;
    int retry_budget = 2;
    double prose_temperature = 0.7;
    std::string decompose_principle;
    std::string code_template;

    void validate() const;
};

PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json_text(const std::string& text, const std::string& origin = "<string>");
std::string config_to_json_text(const PipelineConfig& config);

/// Sampling temperature policy: structure-bearing tags (dag, structure, meta,
/// decompose, dependency, chart, judge_*) always run at 0; prose tags use the
/// configured prose temperature.
double temperature_for_tag(const std::string& tag, const PipelineConfig& config);

}  // namespace mmagent
