#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmagent/config.hpp"
#include "mmagent/dag.hpp"
#include "mmagent/gateway.hpp"
#include "mmagent/problem.hpp"
#include "mmagent/prompts.hpp"

namespace mmagent {

struct ReflectionRound {
    std::string critique;
    std::string improved;
};

/// Result of the understand step: the final analysis text plus the full
/// draft/critique/improve trace.
struct ProblemAnalysis {
    std::string text;
    std::string initial;
    std::vector<ReflectionRound> rounds;
};

/// Renders the shared problem statement block used as {modeling_problem} in
/// downstream prompts. Absent optional fields render as empty slots.
std::string render_problem_text(const Problem& problem, const TemplateRegistry& templates);

/// Splits a decomposition reply on the em-dash separator; pieces are trimmed
/// and empties dropped.
std::vector<std::string> split_decomposition(const std::string& reply);

/// Splits text into paragraphs on blank lines; pieces are trimmed and
/// empties dropped.
std::vector<std::string> split_paragraphs(const std::string& reply);

/// Parses an adjacency reply into id -> prerequisite ids. Accepts strict
/// JSON, optionally fenced, and tolerates the single-quote / missing-comma
/// shape the wire format example uses. Throws ParseError when the text is
/// not an adjacency object at all.
std::map<std::string, std::vector<std::string>> parse_adjacency_reply(const std::string& reply);

/// Runs the problem analysis phase: dataset summary, reflective
/// understanding, decomposition, dependency narrative, and DAG construction.
class AnalysisEngine {
public:
    AnalysisEngine(LlmGateway& gateway, const TemplateRegistry& templates,
                   const PipelineConfig& config);

    /// Summarizes the dataset description fields into problem.dataset_summary
    /// and returns the summary. Requires at least one description field.
    std::string summarize_dataset(Problem& problem);

    /// Initial understanding plus n_reflect critique/improve rounds.
    /// Issues exactly 1 + 2 * n_reflect gateway calls.
    ProblemAnalysis understand_problem(const Problem& problem, int n_reflect);

    /// Splits the modeling solution into exactly `tasknum` subtasks with ids
    /// "1".."tasknum", then refines each description. One structural
    /// re-prompt is allowed before giving up.
    std::vector<Subtask> decompose(const Problem& problem, const ProblemAnalysis& analysis,
                                   int tasknum);

    /// Produces one dependency paragraph per subtask and stores it on the
    /// subtask. Returns the full narrative text.
    std::string analyze_dependencies(const Problem& problem, const ProblemAnalysis& analysis,
                                     std::vector<Subtask>& subtasks);

    /// Asks for the adjacency wire format and validates it into a DAG.
    DependencyGraph build_dag(const Problem& problem, const ProblemAnalysis& analysis,
                              const std::vector<Subtask>& subtasks,
                              const std::string& dependency_narrative);

private:
    LlmGateway& gateway_;
    const TemplateRegistry& templates_;
    PipelineConfig config_;

    LlmRequest make_request(const std::string& tag, const std::map<std::string, std::string>& slots) const;
};

}  // namespace mmagent
