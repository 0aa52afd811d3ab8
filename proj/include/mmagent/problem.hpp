#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace mmagent {

/// A modeling problem statement as loaded from disk.
///
/// Dataset-related fields are optional; a problem with none of them is a
/// "policy" problem and is solved without generating or executing code.
struct Problem {
    std::string background;
    std::string requirements;
    std::optional<std::string> addendum;
    std::optional<std::string> dataset_path;
    std::optional<std::string> dataset_description;
    std::optional<std::string> variable_description;
    // Filled in by the dataset summarization step, not normally present in
    // the input file.
    std::optional<std::string> dataset_summary;
    bool is_policy = false;

    bool has_dataset() const {
        return dataset_path.has_value() || dataset_description.has_value() ||
               variable_description.has_value();
    }
};

Problem load_problem(const std::filesystem::path& path);
void save_problem(const Problem& problem, const std::filesystem::path& path);

std::string problem_to_json_text(const Problem& problem);
Problem problem_from_json_text(const std::string& text, const std::string& origin = "<string>");

/// One unit of work produced by problem decomposition. Ids are assigned
/// positionally ("1".."n") and never change afterwards.
struct Subtask {
    std::string id;
    std::string description;
    std::optional<std::string> refined_description;
    std::optional<std::string> dependency_narrative;

    /// Text used wherever the subtask represents itself in a prompt or a
    /// retrieval query; falls back to the raw description.
    const std::string& query_text() const {
        return refined_description ? *refined_description : description;
    }
};

}  // namespace mmagent
