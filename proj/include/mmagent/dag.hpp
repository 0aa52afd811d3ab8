#pragma once

#include <map>
#include <string>
#include <vector>

namespace mmagent {

/// Dependency DAG over subtask ids. Edges point from a task to its
/// prerequisites, mirroring the adjacency wire format
/// {"1": [], "2": ["1"], ...} where the list holds tasks the key depends on.
class DependencyGraph {
public:
    /// Validates and normalizes an adjacency mapping. Throws ValidationError
    /// on ids outside the expected set, self-loops, duplicate prerequisite
    /// entries, or cycles. Ids are normalized first: surrounding whitespace
    /// trimmed and numeric leading zeros dropped ("01" -> "1").
    static DependencyGraph from_adjacency(
        const std::map<std::string, std::vector<std::string>>& adjacency,
        const std::vector<std::string>& expected_ids);

    /// Same, but the expected id set is taken to be the keys themselves.
    static DependencyGraph from_adjacency(
        const std::map<std::string, std::vector<std::string>>& adjacency);

    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<std::string>& prerequisites(const std::string& id) const;

    /// Tasks that list `id` as a prerequisite.
    std::vector<std::string> dependents(const std::string& id) const;

    /// All transitive prerequisites of `id` (never includes `id` itself).
    std::vector<std::string> ancestors(const std::string& id) const;

    std::size_t size() const { return ids_.size(); }

    /// JSON wire form, keys ordered by ascending numeric id.
    std::string to_json_text() const;

private:
    std::vector<std::string> ids_;
    std::map<std::string, std::vector<std::string>> prereqs_;
};

std::string normalize_task_id(const std::string& raw);

/// Deterministic topological order: Kahn's algorithm, ties broken by
/// ascending numeric id.
std::vector<std::string> topo_order(const DependencyGraph& graph);

}  // namespace mmagent
