#pragma once

#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace mmagent {

/// A file a solver run left behind, as described by structure extraction.
struct ProducedFile {
    std::string path;
    std::string description;
    std::vector<std::string> columns;
};

/// Everything a finished subtask contributes to downstream stages.
/// Policy subtasks carry no code, no structure, and no execution result.
struct TaskOutputs {
    std::string scheme;
    std::optional<std::string> code;
    std::optional<std::string> execution_result;
    std::string interpretation;
    std::string answer;
    std::optional<nlohmann::json> code_structure;
    std::vector<ProducedFile> produced_files;
};

nlohmann::json task_outputs_to_json(const TaskOutputs& outputs);
TaskOutputs task_outputs_from_json(const nlohmann::json& j);

/// Insertion-ordered map from subtask id to its outputs. One writer per run;
/// duplicate inserts are a hard error so a task can never silently clobber
/// another's results.
class Memory {
public:
    struct Lookup {
        std::vector<std::pair<std::string, const TaskOutputs*>> found;
        std::vector<std::string> missing;
    };

    void insert(const std::string& id, TaskOutputs outputs);
    const TaskOutputs* find(const std::string& id) const;
    bool contains(const std::string& id) const { return find(id) != nullptr; }

    /// Returns outputs for the requested ids in the requested order; ids with
    /// no entry are reported in `missing` rather than erroring.
    Lookup lookup(const std::vector<std::string>& ids) const;

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    const std::vector<std::pair<std::string, TaskOutputs>>& entries() const { return entries_; }

    /// Serialized form used as the {json_context} structured draft.
    nlohmann::json to_json() const;

private:
    std::vector<std::pair<std::string, TaskOutputs>> entries_;
};

}  // namespace mmagent
