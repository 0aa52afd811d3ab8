#include "mmagent/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

using ordered_json = nlohmann::ordered_json;

void check(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("config: " + msg);
}

}  // namespace

void PipelineConfig::validate() const {
    check(tasknum >= 1, "tasknum must be >= 1");
    check(omega >= 0.0 && omega <= 1.0, "omega must lie in [0, 1]");
    check(top_k >= 1, "top_k must be >= 1");
    check(n_reflect >= 0, "n_reflect must be >= 0");
    check(n_refine >= 0, "n_refine must be >= 0");
    check(n_repair >= 0, "n_repair must be >= 0");
    check(exec_timeout.count() > 0, "exec_timeout must be positive");
    check(!interpreter_command.empty(), "interpreter_command must not be empty");
    check(!solver_extension.empty(), "solver_extension must not be empty");
    check(price_per_input_token >= 0.0, "price_per_input_token must be >= 0");
    check(price_per_output_token >= 0.0, "price_per_output_token must be >= 0");
    check(resource_excerpt_chars > 0, "resource_excerpt_chars must be positive");
    check(error_tail_bytes > 0, "error_tail_bytes must be positive");
    check(output_tail_bytes > 0, "output_tail_bytes must be positive");
    check(chart_count >= 0, "chart_count must be >= 0");
    check(retry_budget >= 0, "retry_budget must be >= 0");
    check(prose_temperature >= 0.0 && prose_temperature <= 2.0,
          "prose_temperature must lie in [0, 2]");
}

PipelineConfig config_from_json_text(const std::string& text, const std::string& origin) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config " + origin + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) {
        throw ValidationError("config " + origin + ": top level must be an object");
    }

    PipelineConfig c;
    try {
        c.tasknum = j.value("tasknum", c.tasknum);
        c.omega = j.value("omega", c.omega);
        c.top_k = j.value("top_k", c.top_k);
        c.n_reflect = j.value("n_reflect", c.n_reflect);
        c.n_refine = j.value("n_refine", c.n_refine);
        c.n_repair = j.value("n_repair", c.n_repair);
        if (j.contains("exec_timeout_seconds")) {
            c.exec_timeout = std::chrono::milliseconds(
                static_cast<long long>(j.at("exec_timeout_seconds").get<double>() * 1000.0));
        }
        c.interpreter_command = j.value("interpreter_command", c.interpreter_command);
        c.solver_extension = j.value("solver_extension", c.solver_extension);
        if (j.contains("latex_check_command")) {
            if (j.at("latex_check_command").is_null()) {
                c.latex_check_command.reset();
            } else {
                std::string cmd = j.at("latex_check_command").get<std::string>();
                if (cmd.empty()) {
                    c.latex_check_command.reset();
                } else {
                    c.latex_check_command = cmd;
                }
            }
        }
        c.parallel_tasks = j.value("parallel_tasks", c.parallel_tasks);
        c.price_per_input_token = j.value("price_per_input_token", c.price_per_input_token);
        c.price_per_output_token = j.value("price_per_output_token", c.price_per_output_token);
        c.transitive_resources = j.value("transitive_resources", c.transitive_resources);
        c.resource_excerpt_chars = j.value("resource_excerpt_chars", c.resource_excerpt_chars);
        c.error_tail_bytes = j.value("error_tail_bytes", c.error_tail_bytes);
        c.output_tail_bytes = j.value("output_tail_bytes", c.output_tail_bytes);
        c.chart_count = j.value("chart_count", c.chart_count);
        c.retry_budget = j.value("retry_budget", c.retry_budget);
        c.prose_temperature = j.value("prose_temperature", c.prose_temperature);
        c.decompose_principle = j.value("decompose_principle", c.decompose_principle);
        c.code_template = j.value("code_template", c.code_template);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config " + origin + ": " + e.what());
    }

    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open config file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return config_from_json_text(buf.str(), path.string());
}

double temperature_for_tag(const std::string& tag, const PipelineConfig& config) {
    static const std::set<std::string> structured = {"dag",        "structure", "meta",
                                                     "decompose",  "dependency", "chart"};
    if (structured.count(tag) || tag.rfind("judge_", 0) == 0) return 0.0;
    return config.prose_temperature;
}

std::string config_to_json_text(const PipelineConfig& c) {
    ordered_json j;
    j["tasknum"] = c.tasknum;
    j["omega"] = c.omega;
    j["top_k"] = c.top_k;
    j["n_reflect"] = c.n_reflect;
    j["n_refine"] = c.n_refine;
    j["n_repair"] = c.n_repair;
    j["exec_timeout_seconds"] = static_cast<double>(c.exec_timeout.count()) / 1000.0;
    j["interpreter_command"] = c.interpreter_command;
    j["solver_extension"] = c.solver_extension;
    if (c.latex_check_command) {
        j["latex_check_command"] = *c.latex_check_command;
    } else {
        j["latex_check_command"] = nullptr;
    }
    j["parallel_tasks"] = c.parallel_tasks;
    j["price_per_input_token"] = c.price_per_input_token;
    j["price_per_output_token"] = c.price_per_output_token;
    j["transitive_resources"] = c.transitive_resources;
    j["resource_excerpt_chars"] = c.resource_excerpt_chars;
    j["error_tail_bytes"] = c.error_tail_bytes;
    j["output_tail_bytes"] = c.output_tail_bytes;
    j["chart_count"] = c.chart_count;
    j["retry_budget"] = c.retry_budget;
    j["prose_temperature"] = c.prose_temperature;
    j["decompose_principle"] = c.decompose_principle;
    j["code_template"] = c.code_template;
    return j.dump(2) + "\n";
}

}  // namespace mmagent
