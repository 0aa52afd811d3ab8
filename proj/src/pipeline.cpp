#include "mmagent/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "mmagent/analysis.hpp"
#include "mmagent/dag.hpp"
#include "mmagent/errors.hpp"
#include "mmagent/modeling.hpp"
#include "mmagent/report.hpp"
#include "mmagent/sandbox.hpp"

namespace mmagent {

namespace {

using ordered_json = nlohmann::ordered_json;

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write run artifact: " + path.string());
    }
    out << content;
}

double seconds_since(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

TaskStatus status_from_string(const std::string& s) {
    if (s == "completed") return TaskStatus::completed;
    if (s == "failed") return TaskStatus::failed;
    if (s == "skipped") return TaskStatus::skipped;
    throw ValidationError("unknown task status: " + s);
}

}  // namespace

const char* to_string(TaskStatus status) {
    switch (status) {
        case TaskStatus::completed: return "completed";
        case TaskStatus::failed: return "failed";
        case TaskStatus::skipped: return "skipped";
    }
    return "unknown";
}

nlohmann::json RunManifest::to_json() const {
    ordered_json j;
    j["run_id"] = run_id;
    j["problem_path"] = problem_path;
    j["config"] = config_snapshot;
    auto task_list = ordered_json::array();
    for (const auto& task : tasks) {
        ordered_json t;
        t["id"] = task.id;
        t["status"] = to_string(task.status);
        t["policy"] = task.policy;
        t["attempts"] = task.attempts;
        t["failure_reason"] = task.failure_reason;
        t["blocked_on"] = task.blocked_on;
        task_list.push_back(std::move(t));
    }
    j["tasks"] = task_list;
    j["stage_seconds"] = stage_seconds;
    j["usage"] = usage;
    j["outputs"] = outputs;
    j["report_ok"] = report_ok;
    return j;
}

RunManifest RunManifest::from_json(const nlohmann::json& j) {
    RunManifest m;
    m.run_id = j.value("run_id", "");
    m.problem_path = j.value("problem_path", "");
    m.config_snapshot = j.value("config", nlohmann::json::object());
    for (const auto& t : j.value("tasks", nlohmann::json::array())) {
        TaskRecord record;
        record.id = t.value("id", "");
        record.status = status_from_string(t.value("status", "skipped"));
        record.policy = t.value("policy", false);
        record.attempts = t.value("attempts", 0);
        record.failure_reason = t.value("failure_reason", "");
        for (const auto& b : t.value("blocked_on", nlohmann::json::array())) {
            record.blocked_on.push_back(b.get<std::string>());
        }
        m.tasks.push_back(std::move(record));
    }
    for (const auto& [stage, secs] : j.value("stage_seconds", nlohmann::json::object()).items()) {
        m.stage_seconds[stage] = secs.get<double>();
    }
    m.usage = j.value("usage", nlohmann::json::object());
    for (const auto& [name, path] : j.value("outputs", nlohmann::json::object()).items()) {
        m.outputs[name] = path.get<std::string>();
    }
    m.report_ok = j.value("report_ok", false);
    return m;
}

std::string default_run_id() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    localtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "run-%Y%m%d-%H%M%S", &tm);
    return buf;
}

Orchestrator::Orchestrator(LlmGateway& gateway, const TemplateRegistry& templates,
                           const MethodLibrary& library, PipelineConfig config,
                           std::filesystem::path runs_root)
    : gateway_(gateway),
      templates_(templates),
      library_(library),
      config_(std::move(config)),
      runs_root_(std::move(runs_root)) {
    config_.validate();
}

RunResult Orchestrator::run_pipeline(const Problem& problem_in, const std::string& problem_path,
                                     const std::string& run_id) {
    RunResult result;
    result.run_dir = runs_root_ / run_id;
    std::filesystem::create_directories(result.run_dir);

    RunManifest& manifest = result.manifest;
    manifest.run_id = run_id;
    manifest.problem_path = problem_path;
    manifest.config_snapshot = nlohmann::ordered_json::parse(config_to_json_text(config_));

    const auto transcript_path = result.run_dir / "transcript.log";
    std::filesystem::remove(transcript_path);
    gateway_.set_transcript_path(transcript_path);
    manifest.outputs["transcript"] = "transcript.log";

    auto persist = [&]() {
        manifest.usage =
            gateway_.ledger().report(config_.price_per_input_token, config_.price_per_output_token);
        write_file(result.run_dir / "ledger.json", manifest.usage.dump(2) + "\n");
        manifest.outputs["ledger"] = "ledger.json";
        write_file(result.run_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
        manifest.outputs["manifest"] = "manifest.json";
    };

    Problem problem = problem_in;
    AnalysisEngine analysis_engine(gateway_, templates_, config_);
    ModelingEngine modeling_engine(gateway_, templates_, config_);
    SolverSandbox sandbox(gateway_, templates_, config_);
    ReportBuilder report_builder(gateway_, templates_, config_);

    try {
        // Phase 1: analysis
        const auto analysis_started = std::chrono::steady_clock::now();
        if (problem.dataset_description || problem.variable_description) {
            analysis_engine.summarize_dataset(problem);
        }
        ProblemAnalysis analysis = analysis_engine.understand_problem(problem, config_.n_reflect);
        std::vector<Subtask> subtasks =
            analysis_engine.decompose(problem, analysis, config_.tasknum);
        const std::string narrative =
            analysis_engine.analyze_dependencies(problem, analysis, subtasks);
        DependencyGraph graph = analysis_engine.build_dag(problem, analysis, subtasks, narrative);

        write_file(result.run_dir / "analysis", analysis.text + "\n");
        manifest.outputs["analysis"] = "analysis";
        write_file(result.run_dir / "dependency_analysis", narrative + "\n");
        manifest.outputs["dependency_analysis"] = "dependency_analysis";
        write_file(result.run_dir / "dag.json", graph.to_json_text());
        manifest.outputs["dag"] = "dag.json";
        manifest.stage_seconds["analysis"] = seconds_since(analysis_started);

        // Phase 2+3: per-task modeling and solving in topological order
        const auto tasks_started = std::chrono::steady_clock::now();
        HashEmbedder embedder;
        RetrievalIndex index(library_, embedder);
        Memory memory;
        std::map<std::string, TaskStatus> statuses;
        const std::string data_summary = problem.dataset_summary.value_or("");

        for (const auto& id : topo_order(graph)) {
            const Subtask* subtask = nullptr;
            for (const auto& candidate : subtasks) {
                if (candidate.id == id) {
                    subtask = &candidate;
                    break;
                }
            }
            if (subtask == nullptr) {
                throw ValidationError("graph lists task " + id + " that decomposition never made");
            }

            TaskRecord record;
            record.id = id;
            record.policy = problem.is_policy;

            for (const auto& prereq : graph.prerequisites(id)) {
                auto it = statuses.find(prereq);
                if (it == statuses.end() || it->second != TaskStatus::completed) {
                    record.blocked_on.push_back(prereq);
                }
            }
            if (!record.blocked_on.empty()) {
                record.status = TaskStatus::skipped;
                statuses[id] = record.status;
                manifest.tasks.push_back(std::move(record));
                continue;
            }

            const auto task_dir = result.run_dir / ("task_" + id);
            std::filesystem::create_directories(task_dir);
            try {
                const auto hits =
                    index.retrieve(subtask->query_text(), config_.top_k, config_.omega);
                const ResourceBundle resources =
                    gather_resources(*subtask, graph, memory, config_.transitive_resources,
                                     config_.resource_excerpt_chars);
                const ModelingScheme scheme = modeling_engine.run_actor_critic(
                    *subtask, hits, resources, data_summary, config_.n_refine);

                auto trace = ordered_json::array();
                for (const auto& step : scheme.trace) {
                    trace.push_back({{"role", step.role},
                                     {"revision", step.revision},
                                     {"text", step.text}});
                }
                write_file(task_dir / "scheme_trace.json", trace.dump(2) + "\n");

                TaskOutputs outputs;
                if (problem.is_policy) {
                    outputs = sandbox.solve_policy(*subtask, scheme);
                    record.status = TaskStatus::completed;
                } else {
                    SolverSandbox::SolveResult solved =
                        sandbox.solve_full(*subtask, scheme, resources, problem, task_dir);
                    record.attempts = solved.attempts;
                    if (solved.final_status != ExecStatus::success) {
                        write_file(task_dir / "outputs.json",
                                   task_outputs_to_json(solved.outputs).dump(2) + "\n");
                        record.status = TaskStatus::failed;
                        record.failure_reason =
                            std::string("solver execution ended with status ") +
                            to_string(solved.final_status) + " after " +
                            std::to_string(solved.attempts) + " repair round(s)";
                        statuses[id] = record.status;
                        manifest.outputs["task_" + id] = "task_" + id + "/";
                        manifest.tasks.push_back(std::move(record));
                        continue;
                    }
                    outputs = std::move(solved.outputs);
                    if (outputs.code_structure) {
                        write_file(task_dir / "structure.json",
                                   outputs.code_structure->dump(2) + "\n");
                    }
                    record.status = TaskStatus::completed;
                }
                write_file(task_dir / "outputs.json",
                           task_outputs_to_json(outputs).dump(2) + "\n");
                memory.insert(id, std::move(outputs));
            } catch (const std::exception& e) {
                record.status = TaskStatus::failed;
                record.failure_reason = e.what();
            }
            statuses[id] = record.status;
            manifest.outputs["task_" + id] = "task_" + id + "/";
            manifest.tasks.push_back(std::move(record));
        }
        manifest.stage_seconds["tasks"] = seconds_since(tasks_started);

        // Phase 4: report
        const auto report_started = std::chrono::steady_clock::now();
        ReportDocument doc = report_builder.build(memory);
        report_builder.assemble_and_check(doc, result.run_dir / "report.tex");
        manifest.outputs["report"] = "report.tex";

        ordered_json meta;
        meta["title"] = doc.meta.title;
        meta["summary"] = doc.meta.summary;
        meta["keywords"] = doc.meta.keywords_raw;
        write_file(result.run_dir / "meta.json", meta.dump(2) + "\n");
        manifest.outputs["meta"] = "meta.json";

        std::string charts;
        for (std::size_t i = 0; i < doc.charts.size(); ++i) {
            charts += "## Chart " + std::to_string(i + 1) + "\n\n" + doc.charts[i] + "\n";
            if (i + 1 < doc.charts.size()) charts += "\n";
        }
        write_file(result.run_dir / "charts.md", charts);
        manifest.outputs["charts"] = "charts.md";
        if (!doc.compile_status.log.empty()) {
            write_file(result.run_dir / "report_check.log", doc.compile_status.log + "\n");
            manifest.outputs["report_check"] = "report_check.log";
        }

        manifest.stage_seconds["report"] = seconds_since(report_started);
        manifest.report_ok = true;
    } catch (...) {
        persist();
        throw;
    }

    persist();
    result.ok = manifest.report_ok;
    return result;
}

}  // namespace mmagent
