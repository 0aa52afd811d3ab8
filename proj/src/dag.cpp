#include "mmagent/dag.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <queue>
#include <set>
#include <sstream>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

bool all_digits(const std::string& s) {
    return !s.empty() &&
           std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

// Numeric ids compare by value, everything else lexicographically after them.
bool id_less(const std::string& a, const std::string& b) {
    const bool na = all_digits(a), nb = all_digits(b);
    if (na && nb) {
        if (a.size() != b.size()) return a.size() < b.size();
        return a < b;
    }
    if (na != nb) return na;
    return a < b;
}

}  // namespace

std::string normalize_task_id(const std::string& raw) {
    std::size_t begin = 0, end = raw.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(raw[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(raw[end - 1]))) --end;
    std::string id = raw.substr(begin, end - begin);
    if (all_digits(id)) {
        std::size_t nonzero = id.find_first_not_of('0');
        id = nonzero == std::string::npos ? "0" : id.substr(nonzero);
    }
    return id;
}

DependencyGraph DependencyGraph::from_adjacency(
    const std::map<std::string, std::vector<std::string>>& adjacency,
    const std::vector<std::string>& expected_ids) {
    DependencyGraph graph;

    std::set<std::string> expected;
    for (const auto& raw : expected_ids) {
        std::string id = normalize_task_id(raw);
        if (!expected.insert(id).second) {
            throw ValidationError("duplicate subtask id \"" + id + "\"");
        }
    }

    std::map<std::string, std::vector<std::string>> normalized;
    for (const auto& [raw_key, raw_values] : adjacency) {
        std::string key = normalize_task_id(raw_key);
        if (!expected.count(key)) {
            throw ValidationError("adjacency references unknown task id \"" + key + "\"");
        }
        if (normalized.count(key)) {
            throw ValidationError("adjacency lists task id \"" + key + "\" twice");
        }
        std::vector<std::string> prereqs;
        std::set<std::string> seen;
        for (const auto& raw_value : raw_values) {
            std::string value = normalize_task_id(raw_value);
            if (!expected.count(value)) {
                throw ValidationError("task \"" + key + "\" depends on unknown task id \"" + value +
                                      "\"");
            }
            if (value == key) {
                throw ValidationError("task \"" + key + "\" depends on itself");
            }
            if (!seen.insert(value).second) {
                throw ValidationError("task \"" + key + "\" lists prerequisite \"" + value +
                                      "\" twice");
            }
            prereqs.push_back(value);
        }
        std::sort(prereqs.begin(), prereqs.end(), id_less);
        normalized.emplace(std::move(key), std::move(prereqs));
    }

    for (const auto& id : expected) {
        if (!normalized.count(id)) {
            throw ValidationError("adjacency is missing an entry for task id \"" + id + "\"");
        }
    }

    graph.ids_.assign(expected.begin(), expected.end());
    std::sort(graph.ids_.begin(), graph.ids_.end(), id_less);
    graph.prereqs_ = std::move(normalized);

    // Cycle check via iterative three-color DFS.
    std::map<std::string, int> color;  // 0 white, 1 gray, 2 black
    std::function<void(const std::string&)> visit = [&](const std::string& id) {
        color[id] = 1;
        for (const auto& prereq : graph.prereqs_.at(id)) {
            int c = color[prereq];
            if (c == 1) {
                throw ValidationError("dependency cycle involving task \"" + id + "\"");
            }
            if (c == 0) visit(prereq);
        }
        color[id] = 2;
    };
    for (const auto& id : graph.ids_) {
        if (color[id] == 0) visit(id);
    }

    return graph;
}

DependencyGraph DependencyGraph::from_adjacency(
    const std::map<std::string, std::vector<std::string>>& adjacency) {
    std::vector<std::string> ids;
    ids.reserve(adjacency.size());
    for (const auto& [key, _] : adjacency) ids.push_back(key);
    return from_adjacency(adjacency, ids);
}

const std::vector<std::string>& DependencyGraph::prerequisites(const std::string& id) const {
    auto it = prereqs_.find(id);
    if (it == prereqs_.end()) {
        throw ValidationError("unknown task id \"" + id + "\"");
    }
    return it->second;
}

std::vector<std::string> DependencyGraph::dependents(const std::string& id) const {
    prerequisites(id);  // existence check
    std::vector<std::string> result;
    for (const auto& other : ids_) {
        const auto& prereqs = prereqs_.at(other);
        if (std::find(prereqs.begin(), prereqs.end(), id) != prereqs.end()) {
            result.push_back(other);
        }
    }
    return result;
}

std::vector<std::string> DependencyGraph::ancestors(const std::string& id) const {
    std::set<std::string> seen;
    std::vector<std::string> stack{id};
    while (!stack.empty()) {
        std::string current = stack.back();
        stack.pop_back();
        for (const auto& prereq : prerequisites(current)) {
            if (seen.insert(prereq).second) stack.push_back(prereq);
        }
    }
    std::vector<std::string> result(seen.begin(), seen.end());
    std::sort(result.begin(), result.end(), id_less);
    return result;
}

std::string DependencyGraph::to_json_text() const {
    std::ostringstream out;
    out << "{\n";
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        const auto& id = ids_[i];
        out << "  \"" << id << "\": [";
        const auto& prereqs = prereqs_.at(id);
        for (std::size_t k = 0; k < prereqs.size(); ++k) {
            if (k > 0) out << ", ";
            out << "\"" << prereqs[k] << "\"";
        }
        out << "]";
        if (i + 1 < ids_.size()) out << ",";
        out << "\n";
    }
    out << "}\n";
    return out.str();
}

std::vector<std::string> topo_order(const DependencyGraph& graph) {
    std::map<std::string, std::size_t> remaining;
    for (const auto& id : graph.ids()) {
        remaining[id] = graph.prerequisites(id).size();
    }

    auto greater = [](const std::string& a, const std::string& b) { return id_less(b, a); };
    std::priority_queue<std::string, std::vector<std::string>, decltype(greater)> ready(greater);
    for (const auto& id : graph.ids()) {
        if (remaining[id] == 0) ready.push(id);
    }

    std::vector<std::string> order;
    while (!ready.empty()) {
        std::string id = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto& dependent : graph.dependents(id)) {
            if (--remaining[dependent] == 0) ready.push(dependent);
        }
    }
    if (order.size() != graph.size()) {
        throw ValidationError("graph is not acyclic; topological order does not exist");
    }
    return order;
}

}  // namespace mmagent
