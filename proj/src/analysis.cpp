#include "mmagent/analysis.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

constexpr const char* kEmDash = "\xE2\x80\x94";

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

/// Strips a leading ```lang fence and its closing ``` when present.
std::string strip_fence(const std::string& text) {
    std::string t = trim(text);
    std::size_t open = t.find("```");
    if (open == std::string::npos) return t;
    std::size_t body_start = t.find('\n', open);
    if (body_start == std::string::npos) return t;
    std::size_t close = t.find("```", body_start);
    if (close == std::string::npos) return t;
    return trim(t.substr(body_start + 1, close - body_start - 1));
}

/// Repairs the two defects the wire-format example exhibits: single-quoted
/// strings and missing commas between adjacency entries.
std::string repair_adjacency_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        out += (c == '\'') ? '"' : c;
    }
    std::string fixed;
    fixed.reserve(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        fixed += out[i];
        if (out[i] == ']') {
            std::size_t j = i + 1;
            while (j < out.size() && std::isspace(static_cast<unsigned char>(out[j]))) ++j;
            if (j < out.size() && out[j] == '"') fixed += ',';
        }
    }
    return fixed;
}

std::map<std::string, std::vector<std::string>> adjacency_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ParseError("adjacency reply must be a JSON object");
    }
    std::map<std::string, std::vector<std::string>> adjacency;
    for (const auto& [id, deps] : j.items()) {
        if (!deps.is_array()) {
            throw ParseError("adjacency entry for \"" + id + "\" must be an array");
        }
        std::vector<std::string> list;
        for (const auto& dep : deps) {
            if (dep.is_string()) {
                list.push_back(dep.get<std::string>());
            } else if (dep.is_number_integer()) {
                list.push_back(std::to_string(dep.get<long long>()));
            } else {
                throw ParseError("adjacency entry for \"" + id +
                                 "\" holds a non-id element: " + dep.dump());
            }
        }
        adjacency.emplace(id, std::move(list));
    }
    if (adjacency.empty()) {
        throw ParseError("adjacency reply is empty");
    }
    return adjacency;
}

}  // namespace

std::string render_problem_text(const Problem& problem, const TemplateRegistry& templates) {
    std::map<std::string, std::string> slots;
    slots["problem_background"] = problem.background;
    slots["problem_requirement"] = problem.requirements;
    slots["addendum"] = problem.addendum.value_or("");
    slots["dataset_path"] = problem.dataset_path.value_or("");
    slots["data_summary"] = problem.dataset_summary.value_or("");
    return templates.render("problem", slots);
}

std::vector<std::string> split_decomposition(const std::string& reply) {
    std::vector<std::string> pieces;
    std::size_t pos = 0;
    while (pos <= reply.size()) {
        std::size_t next = reply.find(kEmDash, pos);
        std::string piece = (next == std::string::npos) ? reply.substr(pos)
                                                        : reply.substr(pos, next - pos);
        piece = trim(piece);
        if (!piece.empty()) pieces.push_back(std::move(piece));
        if (next == std::string::npos) break;
        pos = next + 3;
    }
    return pieces;
}

std::vector<std::string> split_paragraphs(const std::string& reply) {
    std::vector<std::string> paragraphs;
    std::string current;
    std::istringstream in(reply);
    std::string line;
    auto flush = [&]() {
        std::string trimmed = trim(current);
        if (!trimmed.empty()) paragraphs.push_back(std::move(trimmed));
        current.clear();
    };
    while (std::getline(in, line)) {
        if (trim(line).empty()) {
            flush();
        } else {
            if (!current.empty()) current += "\n";
            current += line;
        }
    }
    flush();
    return paragraphs;
}

std::map<std::string, std::vector<std::string>> parse_adjacency_reply(const std::string& reply) {
    const std::string body = strip_fence(reply);
    if (body.empty()) {
        throw ParseError("adjacency reply is empty");
    }
    try {
        return adjacency_from_json(nlohmann::json::parse(body));
    } catch (const nlohmann::json::parse_error&) {
        // fall through to the tolerant pass
    }
    const std::string repaired = repair_adjacency_text(body);
    try {
        return adjacency_from_json(nlohmann::json::parse(repaired));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("adjacency reply is not parseable JSON: ") + e.what());
    }
}

AnalysisEngine::AnalysisEngine(LlmGateway& gateway, const TemplateRegistry& templates,
                               const PipelineConfig& config)
    : gateway_(gateway), templates_(templates), config_(config) {}

LlmRequest AnalysisEngine::make_request(const std::string& tag,
                                        const std::map<std::string, std::string>& slots) const {
    LlmRequest request;
    request.tag = tag;
    request.user_text = templates_.render(tag, slots);
    request.temperature = temperature_for_tag(tag, config_);
    return request;
}

std::string AnalysisEngine::summarize_dataset(Problem& problem) {
    const std::string data = problem.dataset_description.value_or("");
    const std::string vars = problem.variable_description.value_or("");
    if (data.empty() && vars.empty()) {
        throw ValidationError("dataset summary needs a dataset or variable description");
    }
    auto response = gateway_.complete(make_request(
        "summarize", {{"data_description", data}, {"variable_description", vars}}));
    problem.dataset_summary = trim(response.text);
    return *problem.dataset_summary;
}

ProblemAnalysis AnalysisEngine::understand_problem(const Problem& problem, int n_reflect) {
    if (n_reflect < 0) {
        throw ValidationError("n_reflect must be >= 0");
    }
    const std::string modeling_problem = render_problem_text(problem, templates_);

    ProblemAnalysis analysis;
    analysis.initial =
        trim(gateway_.complete(make_request("understand", {{"modeling_problem", modeling_problem}}))
                 .text);
    analysis.text = analysis.initial;
    for (int round = 0; round < n_reflect; ++round) {
        ReflectionRound r;
        r.critique = trim(gateway_
                              .complete(make_request("critique",
                                                     {{"modeling_problem", modeling_problem},
                                                      {"problem_analysis", analysis.text}}))
                              .text);
        r.improved = trim(gateway_
                              .complete(make_request(
                                  "improve", {{"modeling_problem", modeling_problem},
                                              {"problem_analysis", analysis.text},
                                              {"problem_analysis_critique", r.critique}}))
                              .text);
        analysis.text = r.improved;
        analysis.rounds.push_back(std::move(r));
    }
    return analysis;
}

std::vector<Subtask> AnalysisEngine::decompose(const Problem& problem,
                                               const ProblemAnalysis& analysis, int tasknum) {
    if (tasknum < 1) {
        throw ValidationError("tasknum must be >= 1");
    }
    std::map<std::string, std::string> slots;
    slots["decomposed_principle"] = config_.decompose_principle;
    slots["modeling_problem"] = render_problem_text(problem, templates_);
    slots["problem_analysis"] = analysis.text;
    slots["modeling_solution"] = analysis.text;
    slots["tasknum"] = std::to_string(tasknum);
    const LlmRequest request = make_request("decompose", slots);

    std::vector<std::string> pieces = split_decomposition(gateway_.complete(request).text);
    if (static_cast<int>(pieces.size()) != tasknum) {
        pieces = split_decomposition(gateway_.complete(request).text);
    }
    if (static_cast<int>(pieces.size()) != tasknum) {
        throw ValidationError("decomposition count mismatch: expected " + std::to_string(tasknum) +
                              " subtasks, got " + std::to_string(pieces.size()));
    }

    std::vector<Subtask> subtasks;
    subtasks.reserve(pieces.size());
    std::string joined;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        Subtask task;
        task.id = std::to_string(i + 1);
        task.description = pieces[i];
        subtasks.push_back(std::move(task));
        if (!joined.empty()) joined += "\n\n";
        joined += "Subtask " + std::to_string(i + 1) + ": " + pieces[i];
    }

    for (auto& task : subtasks) {
        std::map<std::string, std::string> refine_slots;
        refine_slots["modeling_problem"] = slots["modeling_problem"];
        refine_slots["problem_analysis"] = analysis.text;
        refine_slots["modeling_solution"] = analysis.text;
        refine_slots["decomposed_subtasks"] = joined;
        refine_slots["task_i"] = task.id;
        task.refined_description =
            trim(gateway_.complete(make_request("task_description", refine_slots)).text);
    }
    return subtasks;
}

std::string AnalysisEngine::analyze_dependencies(const Problem& problem,
                                                 const ProblemAnalysis& analysis,
                                                 std::vector<Subtask>& subtasks) {
    if (subtasks.empty()) {
        throw ValidationError("dependency analysis needs at least one subtask");
    }
    std::string task_descriptions;
    for (const auto& task : subtasks) {
        if (!task_descriptions.empty()) task_descriptions += "\n\n";
        task_descriptions += "Task " + task.id + ": " + task.query_text();
    }
    std::map<std::string, std::string> slots;
    slots["tasknum"] = std::to_string(subtasks.size());
    slots["modeling_problem"] = render_problem_text(problem, templates_);
    slots["problem_analysis"] = analysis.text;
    slots["modeling_solution"] = analysis.text;
    slots["task_descriptions"] = task_descriptions;
    const LlmRequest request = make_request("dependency", slots);

    std::string reply = gateway_.complete(request).text;
    std::vector<std::string> paragraphs = split_paragraphs(reply);
    if (paragraphs.size() != subtasks.size()) {
        reply = gateway_.complete(request).text;
        paragraphs = split_paragraphs(reply);
    }
    if (paragraphs.size() != subtasks.size()) {
        throw ValidationError("dependency narrative count mismatch: expected " +
                              std::to_string(subtasks.size()) + " paragraphs, got " +
                              std::to_string(paragraphs.size()));
    }
    for (std::size_t i = 0; i < subtasks.size(); ++i) {
        subtasks[i].dependency_narrative = paragraphs[i];
    }
    return trim(reply);
}

DependencyGraph AnalysisEngine::build_dag(const Problem& problem, const ProblemAnalysis& analysis,
                                          const std::vector<Subtask>& subtasks,
                                          const std::string& dependency_narrative) {
    if (subtasks.empty()) {
        throw ValidationError("DAG construction needs at least one subtask");
    }
    std::string task_descriptions;
    std::vector<std::string> expected_ids;
    for (const auto& task : subtasks) {
        if (!task_descriptions.empty()) task_descriptions += "\n\n";
        task_descriptions += "Task " + task.id + ": " + task.query_text();
        expected_ids.push_back(task.id);
    }
    std::map<std::string, std::string> slots;
    slots["modeling_problem"] = render_problem_text(problem, templates_);
    slots["problem_analysis"] = analysis.text;
    slots["modeling_solution"] = analysis.text;
    slots["task_descriptions"] = task_descriptions;
    slots["task_dependency_analysis"] = dependency_narrative;
    const LlmRequest request = make_request("dag", slots);

    try {
        const auto adjacency = parse_adjacency_reply(gateway_.complete(request).text);
        return DependencyGraph::from_adjacency(adjacency, expected_ids);
    } catch (const ParseError&) {
        // one structural re-prompt, then the failure stands
    }
    const auto adjacency = parse_adjacency_reply(gateway_.complete(request).text);
    return DependencyGraph::from_adjacency(adjacency, expected_ids);
}

}  // namespace mmagent
