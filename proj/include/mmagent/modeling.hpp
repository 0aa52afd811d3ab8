#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mmagent/config.hpp"
#include "mmagent/dag.hpp"
#include "mmagent/gateway.hpp"
#include "mmagent/hmml.hpp"
#include "mmagent/memory.hpp"
#include "mmagent/problem.hpp"
#include "mmagent/prompts.hpp"

namespace mmagent {

/// Prerequisite context carried into a subtask's prompts.
struct ResourceEntry {
    std::string id;
    std::string scheme_excerpt;
    std::optional<nlohmann::json> code_structure;
    std::string result_excerpt;
    std::vector<ProducedFile> produced_files;
};

struct ResourceBundle {
    std::vector<ResourceEntry> entries;

    /// Comma-joined prerequisite ids for the {task_id} slot.
    std::string id_list() const;
    /// Per-task structure blocks for the {code_structure} slot.
    std::string structure_block() const;
    /// Per-task scheme and result excerpts for the {task_result} slot.
    std::string result_block() const;
    /// File paths, descriptions, and columns for {dependent_file_prompt}.
    std::string files_digest() const;
};

/// Collects completed prerequisite outputs for a subtask, in topological
/// order. With `transitive` set, covers all ancestors instead of only direct
/// prerequisites. Excerpts are truncated to `excerpt_chars`.
ResourceBundle gather_resources(const Subtask& subtask, const DependencyGraph& graph,
                                const Memory& memory, bool transitive,
                                std::size_t excerpt_chars);

struct SchemeRecord {
    std::string role;  // "actor", "critic", "refine", "continue"
    int revision;
    std::string text;
};

/// A modeling scheme as it moves through the actor-critic loop.
struct ModelingScheme {
    std::string formulas;
    std::string narrative;
    int revision = 0;
    std::vector<SchemeRecord> trace;
};

struct CritiqueNote {
    std::string text;
    int revision_critiqued = 0;
};

/// Actor-critic refinement over modeling schemes.
class ModelingEngine {
public:
    ModelingEngine(LlmGateway& gateway, const TemplateRegistry& templates,
                   const PipelineConfig& config);

    ModelingScheme draft_scheme(const Subtask& subtask, const std::vector<RetrievalHit>& methods,
                                const ResourceBundle& resources, const std::string& data_summary);
    CritiqueNote critique_scheme(const Subtask& subtask, const ModelingScheme& scheme,
                                 const std::string& data_summary);
    void refine_scheme(const Subtask& subtask, ModelingScheme& scheme, const CritiqueNote& critique,
                       const std::string& data_summary);

    /// Draft, then exactly n_refine critique/refine rounds, then the
    /// narrative continuation: 2 + 2 * n_refine gateway calls.
    ModelingScheme run_actor_critic(const Subtask& subtask,
                                    const std::vector<RetrievalHit>& methods,
                                    const ResourceBundle& resources,
                                    const std::string& data_summary, int n_refine);

private:
    LlmGateway& gateway_;
    const TemplateRegistry& templates_;
    PipelineConfig config_;
};

/// Renders retrieved method triples for the {modeling_methods} slot.
std::string render_methods(const std::vector<RetrievalHit>& methods);

}  // namespace mmagent
