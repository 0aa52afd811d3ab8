// Command line front end: solve, retrieve, evaluate, inspect,
// validate-library.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>

#include "mmagent/config.hpp"
#include "mmagent/errors.hpp"
#include "mmagent/evaluator.hpp"
#include "mmagent/gateway.hpp"
#include "mmagent/hmml.hpp"
#include "mmagent/pipeline.hpp"
#include "mmagent/problem.hpp"
#include "mmagent/prompts.hpp"

namespace {

namespace fs = std::filesystem;
using mmagent::Error;

nlohmann::json read_json_file(const fs::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) {
        throw mmagent::ValidationError(std::string("cannot open ") + what + ": " + path.string());
    }
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        throw mmagent::ValidationError(std::string(what) + " " + path.string() +
                                       ": invalid JSON: " + e.what());
    }
}

std::string read_text_file(const fs::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw mmagent::ValidationError(std::string("cannot open ") + what + ": " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct GatewayChoice {
    std::string mock_path;
    std::string base_url;
    std::string model;
};

void add_gateway_flags(CLI::App* cmd, GatewayChoice& choice) {
    cmd->add_option("--mock", choice.mock_path,
                    "Scripted-replies file; runs fully offline");
    cmd->add_option("--base-url", choice.base_url, "Chat-completion endpoint base URL");
    cmd->add_option("--model", choice.model, "Model name for the live endpoint");
}

std::unique_ptr<mmagent::LlmGateway> make_gateway(const GatewayChoice& choice) {
    if (!choice.mock_path.empty()) {
        return std::make_unique<mmagent::MockGateway>(
            read_json_file(choice.mock_path, "mock script"));
    }
    if (!choice.base_url.empty()) {
        mmagent::HttpGateway::Options options;
        options.base_url = choice.base_url;
        options.model = choice.model.empty() ? "gpt-4o" : choice.model;
        return std::make_unique<mmagent::HttpGateway>(options);
    }
    throw mmagent::ValidationError("no gateway configured: pass --mock <script> or --base-url <url>");
}

void print_usage_totals(const nlohmann::json& usage) {
    std::cout << "usage: " << usage.value("total_calls", 0) << " calls, "
              << usage.value("total_input_tokens", 0) << " input tokens, "
              << usage.value("total_output_tokens", 0) << " output tokens, cost "
              << std::fixed << std::setprecision(6) << usage.value("cost", 0.0) << "\n";
    std::cout.unsetf(std::ios::fixed);
    std::cout << std::setprecision(6);
}

int cmd_solve(const std::string& problem_path, const std::string& config_path,
              const GatewayChoice& choice, const std::string& templates_dir,
              const std::string& library_path, const std::string& runs_dir,
              std::string run_id) {
    mmagent::PipelineConfig config;
    if (!config_path.empty()) {
        config = mmagent::load_config(config_path);
    }
    auto gateway = make_gateway(choice);
    const auto templates = mmagent::TemplateRegistry::load(templates_dir);
    mmagent::MethodLibrary library = mmagent::MethodLibrary::load(library_path);
    mmagent::Problem problem = mmagent::load_problem(problem_path);

    if (run_id.empty()) {
        run_id = mmagent::default_run_id();
    }
    mmagent::Orchestrator orchestrator(*gateway, templates, library, config, runs_dir);
    mmagent::RunResult result = orchestrator.run_pipeline(problem, problem_path, run_id);

    std::cout << "run " << result.manifest.run_id << " -> " << result.run_dir.string() << "\n";
    for (const auto& task : result.manifest.tasks) {
        std::cout << "  task " << task.id << ": " << mmagent::to_string(task.status);
        if (task.attempts > 0) {
            std::cout << " (" << task.attempts << " repair rounds)";
        }
        if (!task.failure_reason.empty()) {
            std::cout << " - " << task.failure_reason;
        }
        if (!task.blocked_on.empty()) {
            std::cout << " - blocked on";
            for (const auto& b : task.blocked_on) std::cout << " " << b;
        }
        std::cout << "\n";
    }
    std::cout << "report: " << (result.manifest.report_ok ? "ok" : "missing") << "\n";
    print_usage_totals(result.manifest.usage);
    return result.ok ? 0 : 1;
}

int cmd_retrieve(const std::string& library_path, const std::string& query, int k, double omega) {
    mmagent::MethodLibrary library = mmagent::MethodLibrary::load(library_path);
    mmagent::HashEmbedder embedder;
    mmagent::RetrievalIndex index(library, embedder);
    const auto hits = index.retrieve(query, k, omega);
    std::cout << std::fixed << std::setprecision(4);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        std::cout << (i + 1) << ". " << hits[i].node->method << "  score=" << hits[i].score
                  << "  [" << hits[i].domain->name << " / " << hits[i].subdomain->name << "]\n";
    }
    return 0;
}

int cmd_evaluate(const std::string& report_path, const std::string& problem_path,
                 const GatewayChoice& choice, const std::string& templates_dir,
                 const std::string& out_path) {
    auto gateway = make_gateway(choice);
    const auto templates = mmagent::TemplateRegistry::load(templates_dir);
    mmagent::Problem problem = mmagent::load_problem(problem_path);
    const std::string report_text = read_text_file(report_path, "report");

    mmagent::PipelineConfig config;
    mmagent::Evaluator evaluator(*gateway, templates, config);
    mmagent::EvaluationReport report = evaluator.evaluate(report_text, problem);

    nlohmann::ordered_json record;
    record["dimension_scores"] = report.dimension_scores;
    record["overall"] = report.overall;
    auto items = nlohmann::ordered_json::object();
    for (const auto& [label, scored] : report.items) {
        auto rows = nlohmann::ordered_json::array();
        for (const auto& item : scored) {
            rows.push_back({{"criterion", item.criterion},
                            {"reason", item.reason},
                            {"score", item.score}});
        }
        items[label] = rows;
    }
    record["items"] = items;
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) {
            throw mmagent::ValidationError("cannot write evaluation record: " + out_path);
        }
        out << record.dump(2) << "\n";
    }

    std::cout << std::fixed << std::setprecision(2);
    const char* order[] = {"AE", "MR", "PS", "RBA"};
    for (const char* label : order) {
        std::cout << label << "=" << report.dimension_scores.at(label) << " ";
    }
    std::cout << "Overall=" << report.overall << "\n";
    return 0;
}

int cmd_inspect(const std::string& run_id, const std::string& runs_dir) {
    const fs::path run_dir = fs::path(runs_dir) / run_id;
    const auto manifest_json = read_json_file(run_dir / "manifest.json", "run manifest");
    const auto manifest = mmagent::RunManifest::from_json(manifest_json);

    std::cout << "run " << manifest.run_id << "\n";
    std::cout << "problem: " << manifest.problem_path << "\n";
    std::cout << "report: " << (manifest.report_ok ? "ok" : "missing") << "\n";
    for (const auto& task : manifest.tasks) {
        std::cout << "  task " << task.id << ": " << mmagent::to_string(task.status);
        if (!task.failure_reason.empty()) {
            std::cout << " - " << task.failure_reason;
        }
        std::cout << "\n";
        const fs::path outputs_path = run_dir / ("task_" + task.id) / "outputs.json";
        if (fs::exists(outputs_path)) {
            const auto outputs =
                mmagent::task_outputs_from_json(read_json_file(outputs_path, "task outputs"));
            std::string answer = outputs.answer;
            if (answer.size() > 160) answer = answer.substr(0, 157) + "...";
            for (auto& c : answer) {
                if (c == '\n') c = ' ';
            }
            if (!answer.empty()) {
                std::cout << "    answer: " << answer << "\n";
            }
            for (const auto& file : outputs.produced_files) {
                std::cout << "    file: " << file.path << "\n";
            }
        }
    }
    for (const auto& [name, rel] : manifest.outputs) {
        std::cout << "  output " << name << ": " << rel << "\n";
    }
    print_usage_totals(manifest.usage);
    return 0;
}

int cmd_validate_library(const std::string& path) {
    mmagent::MethodLibrary library = mmagent::MethodLibrary::load(path);
    std::cout << "domains: " << library.domain_count() << "\n";
    std::cout << "subdomains: " << library.subdomain_count() << "\n";
    std::cout << "methods: " << library.method_count() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Agent-driven mathematical modeling pipeline"};
    app.require_subcommand(1);

    std::string problem_path, config_path, templates_dir = "templates";
    std::string library_path = "data/hmml_seed.json", runs_dir = "runs", run_id;
    GatewayChoice choice;

    auto* solve = app.add_subcommand("solve", "Run the full pipeline on a problem file");
    solve->add_option("problem", problem_path, "Problem JSON file")->required();
    solve->add_option("--config", config_path, "Pipeline config JSON");
    solve->add_option("--templates", templates_dir, "Prompt template directory");
    solve->add_option("--library", library_path, "Method library JSON");
    solve->add_option("--runs-dir", runs_dir, "Directory that holds run outputs");
    solve->add_option("--run-id", run_id, "Run id (defaults to a timestamp)");
    add_gateway_flags(solve, choice);

    std::string query;
    int top_k = 5;
    double omega = 0.7;
    auto* retrieve = app.add_subcommand("retrieve", "Query the method library");
    retrieve->add_option("library", library_path, "Method library JSON")->required();
    retrieve->add_option("query", query, "Query text")->required();
    retrieve->add_option("-k", top_k, "Number of results");
    retrieve->add_option("--omega", omega, "Node/parent similarity blend weight");

    std::string report_path, eval_out;
    auto* evaluate = app.add_subcommand("evaluate", "Score a report along the four dimensions");
    evaluate->add_option("report", report_path, "Report .tex file")->required();
    evaluate->add_option("problem", problem_path, "Problem JSON file")->required();
    evaluate->add_option("--templates", templates_dir, "Prompt template directory");
    evaluate->add_option("--out", eval_out, "Write the full evaluation record here");
    add_gateway_flags(evaluate, choice);

    auto* inspect = app.add_subcommand("inspect", "Print a run's manifest, answers, and usage");
    inspect->add_option("run_id", run_id, "Run id under the runs directory")->required();
    inspect->add_option("--runs-dir", runs_dir, "Directory that holds run outputs");

    std::string library_to_check;
    auto* validate = app.add_subcommand("validate-library", "Check a method library file");
    validate->add_option("path", library_to_check, "Method library JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) {
            return cmd_solve(problem_path, config_path, choice, templates_dir, library_path,
                             runs_dir, run_id);
        }
        if (retrieve->parsed()) {
            return cmd_retrieve(library_path, query, top_k, omega);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(report_path, problem_path, choice, templates_dir, eval_out);
        }
        if (inspect->parsed()) {
            return cmd_inspect(run_id, runs_dir);
        }
        if (validate->parsed()) {
            return cmd_validate_library(library_to_check);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
