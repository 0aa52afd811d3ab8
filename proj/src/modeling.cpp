#include "mmagent/modeling.hpp"

#include <algorithm>
#include <set>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

std::string truncate_head(const std::string& text, std::size_t budget) {
    if (text.size() <= budget) return text;
    return text.substr(0, budget) + "\n[... truncated]";
}

}  // namespace

std::string ResourceBundle::id_list() const {
    if (entries.empty()) return "none";
    std::string out;
    for (const auto& entry : entries) {
        if (!out.empty()) out += ", ";
        out += entry.id;
    }
    return out;
}

std::string ResourceBundle::structure_block() const {
    if (entries.empty()) return "none";
    std::string out;
    for (const auto& entry : entries) {
        if (!out.empty()) out += "\n\n";
        out += "Task " + entry.id + ":\n";
        if (entry.code_structure) {
            out += entry.code_structure->dump(2);
        } else {
            out += "(no code structure recorded)";
        }
    }
    return out;
}

std::string ResourceBundle::result_block() const {
    if (entries.empty()) return "none";
    std::string out;
    for (const auto& entry : entries) {
        if (!out.empty()) out += "\n\n";
        out += "Task " + entry.id + " modeling scheme:\n" + entry.scheme_excerpt;
        out += "\n\nTask " + entry.id + " result:\n" + entry.result_excerpt;
    }
    return out;
}

std::string ResourceBundle::files_digest() const {
    std::string out;
    for (const auto& entry : entries) {
        for (const auto& file : entry.produced_files) {
            out += "- " + file.path;
            if (!file.description.empty()) out += ": " + file.description;
            if (!file.columns.empty()) {
                out += " (columns: ";
                for (std::size_t i = 0; i < file.columns.size(); ++i) {
                    if (i > 0) out += ", ";
                    out += file.columns[i];
                }
                out += ")";
            }
            out += " [from task " + entry.id + "]\n";
        }
    }
    if (out.empty()) return "none";
    return out;
}

ResourceBundle gather_resources(const Subtask& subtask, const DependencyGraph& graph,
                                const Memory& memory, bool transitive,
                                std::size_t excerpt_chars) {
    std::set<std::string> wanted;
    if (transitive) {
        for (const auto& id : graph.ancestors(subtask.id)) wanted.insert(id);
    } else {
        for (const auto& id : graph.prerequisites(subtask.id)) wanted.insert(id);
    }

    ResourceBundle bundle;
    for (const auto& id : topo_order(graph)) {
        if (!wanted.count(id)) continue;
        const TaskOutputs* outputs = memory.find(id);
        if (outputs == nullptr) {
            throw ValidationError("prerequisite task " + id +
                                  " has no recorded outputs; scheduling is broken");
        }
        ResourceEntry entry;
        entry.id = id;
        entry.scheme_excerpt = truncate_head(outputs->scheme, excerpt_chars);
        entry.code_structure = outputs->code_structure;
        std::string result = outputs->interpretation;
        if (result.empty() && outputs->execution_result) result = *outputs->execution_result;
        if (!outputs->answer.empty()) {
            if (!result.empty()) result += "\n";
            result += "Answer: " + outputs->answer;
        }
        entry.result_excerpt = truncate_head(result, excerpt_chars);
        entry.produced_files = outputs->produced_files;
        bundle.entries.push_back(std::move(entry));
    }
    return bundle;
}

std::string render_methods(const std::vector<RetrievalHit>& methods) {
    std::string out;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        const RetrievalHit& hit = methods[i];
        out += std::to_string(i + 1) + ". Method: " + hit.node->method + "\n";
        out += "   Core Idea: " + hit.node->core_idea + "\n";
        out += "   Application: " + hit.node->application + "\n";
        out += "   Category: " + hit.domain->name + " / " + hit.subdomain->name + "\n";
        if (i + 1 < methods.size()) out += "\n";
    }
    return out;
}

ModelingEngine::ModelingEngine(LlmGateway& gateway, const TemplateRegistry& templates,
                               const PipelineConfig& config)
    : gateway_(gateway), templates_(templates), config_(config) {}

ModelingScheme ModelingEngine::draft_scheme(const Subtask& subtask,
                                            const std::vector<RetrievalHit>& methods,
                                            const ResourceBundle& resources,
                                            const std::string& data_summary) {
    if (methods.empty()) {
        throw ValidationError("scheme drafting needs at least one retrieved method");
    }
    std::map<std::string, std::string> slots;
    slots["modeling_methods"] = render_methods(methods);
    slots["data_summary"] = data_summary;
    slots["task_description"] = subtask.query_text();
    slots["task_analysis"] = subtask.dependency_narrative.value_or("");
    slots["task_id"] = resources.id_list();
    slots["code_structure"] = resources.structure_block();
    slots["task_result"] = resources.result_block();

    LlmRequest request;
    request.tag = "actor";
    request.user_text = templates_.render("actor", slots);
    request.temperature = temperature_for_tag("actor", config_);

    ModelingScheme scheme;
    scheme.formulas = gateway_.complete(request).text;
    scheme.revision = 0;
    scheme.trace.push_back(SchemeRecord{"actor", 0, scheme.formulas});
    return scheme;
}

CritiqueNote ModelingEngine::critique_scheme(const Subtask& subtask, const ModelingScheme& scheme,
                                             const std::string& data_summary) {
    std::map<std::string, std::string> slots;
    slots["data_summary"] = data_summary;
    slots["task_description"] = subtask.query_text();
    slots["task_analysis"] = subtask.dependency_narrative.value_or("");
    slots["modeling_formulas"] = scheme.formulas;

    LlmRequest request;
    request.tag = "critic";
    request.user_text = templates_.render("critic", slots);
    request.temperature = temperature_for_tag("critic", config_);

    CritiqueNote note;
    note.text = gateway_.complete(request).text;
    note.revision_critiqued = scheme.revision;
    return note;
}

void ModelingEngine::refine_scheme(const Subtask& subtask, ModelingScheme& scheme,
                                   const CritiqueNote& critique, const std::string& data_summary) {
    if (critique.revision_critiqued != scheme.revision) {
        throw ValidationError("critique targets revision " +
                              std::to_string(critique.revision_critiqued) +
                              " but the scheme is at revision " + std::to_string(scheme.revision));
    }
    std::map<std::string, std::string> slots;
    slots["data_summary"] = data_summary;
    slots["task_description"] = subtask.query_text();
    slots["task_analysis"] = subtask.dependency_narrative.value_or("");
    slots["modeling_formulas"] = scheme.formulas;
    slots["modeling_formulas_critique"] = critique.text;

    LlmRequest request;
    request.tag = "refine";
    request.user_text = templates_.render("refine", slots);
    request.temperature = temperature_for_tag("refine", config_);

    scheme.formulas = gateway_.complete(request).text;
    scheme.revision += 1;
    scheme.trace.push_back(SchemeRecord{"refine", scheme.revision, scheme.formulas});
}

ModelingScheme ModelingEngine::run_actor_critic(const Subtask& subtask,
                                                const std::vector<RetrievalHit>& methods,
                                                const ResourceBundle& resources,
                                                const std::string& data_summary, int n_refine) {
    if (n_refine < 0) {
        throw ValidationError("n_refine must be >= 0");
    }
    ModelingScheme scheme = draft_scheme(subtask, methods, resources, data_summary);
    for (int round = 0; round < n_refine; ++round) {
        CritiqueNote note = critique_scheme(subtask, scheme, data_summary);
        scheme.trace.push_back(SchemeRecord{"critic", note.revision_critiqued, note.text});
        refine_scheme(subtask, scheme, note, data_summary);
    }

    std::map<std::string, std::string> slots;
    slots["data_summary"] = data_summary;
    slots["task_description"] = subtask.query_text();
    slots["task_analysis"] = subtask.dependency_narrative.value_or("");
    slots["modeling_formulas"] = scheme.formulas;
    slots["task_id"] = resources.id_list();
    slots["code_structure"] = resources.structure_block();
    slots["task_result"] = resources.result_block();

    LlmRequest request;
    request.tag = "continue";
    request.user_text = templates_.render("continue", slots);
    request.temperature = temperature_for_tag("continue", config_);

    scheme.narrative = gateway_.complete(request).text;
    scheme.trace.push_back(SchemeRecord{"continue", scheme.revision, scheme.narrative});
    return scheme;
}

}  // namespace mmagent
