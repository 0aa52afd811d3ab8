#include "mmagent/problem.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string require_string(const ordered_json& j, const char* key, const std::string& origin) {
    if (!j.contains(key)) {
        throw ValidationError("problem " + origin + ": missing required field \"" + key + "\"");
    }
    if (!j.at(key).is_string()) {
        throw ValidationError("problem " + origin + ": field \"" + key + "\" must be a string");
    }
    return j.at(key).get<std::string>();
}

std::optional<std::string> optional_string(const ordered_json& j, const char* key,
                                           const std::string& origin) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    if (!j.at(key).is_string()) {
        throw ValidationError("problem " + origin + ": field \"" + key + "\" must be a string");
    }
    return j.at(key).get<std::string>();
}

}  // namespace

Problem problem_from_json_text(const std::string& text, const std::string& origin) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("problem " + origin + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) {
        throw ValidationError("problem " + origin + ": top level must be an object");
    }

    Problem p;
    p.background = require_string(j, "background", origin);
    p.requirements = require_string(j, "requirements", origin);
    p.addendum = optional_string(j, "addendum", origin);
    p.dataset_path = optional_string(j, "dataset_path", origin);
    p.dataset_description = optional_string(j, "dataset_description", origin);
    p.variable_description = optional_string(j, "variable_description", origin);
    p.dataset_summary = optional_string(j, "dataset_summary", origin);

    if (p.background.empty()) {
        throw ValidationError("problem " + origin + ": \"background\" must not be empty");
    }
    if (p.requirements.empty()) {
        throw ValidationError("problem " + origin + ": \"requirements\" must not be empty");
    }
    if (p.dataset_summary && !p.dataset_description && !p.variable_description) {
        throw ValidationError("problem " + origin +
                              ": \"dataset_summary\" present without any dataset description field");
    }

    if (j.contains("is_policy")) {
        if (!j.at("is_policy").is_boolean()) {
            throw ValidationError("problem " + origin + ": field \"is_policy\" must be a boolean");
        }
        p.is_policy = j.at("is_policy").get<bool>();
    } else {
        p.is_policy = !p.has_dataset();
    }
    return p;
}

Problem load_problem(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open problem file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return problem_from_json_text(buf.str(), path.string());
}

std::string problem_to_json_text(const Problem& problem) {
    ordered_json j;
    j["background"] = problem.background;
    j["requirements"] = problem.requirements;
    if (problem.addendum) j["addendum"] = *problem.addendum;
    if (problem.dataset_path) j["dataset_path"] = *problem.dataset_path;
    if (problem.dataset_description) j["dataset_description"] = *problem.dataset_description;
    if (problem.variable_description) j["variable_description"] = *problem.variable_description;
    if (problem.dataset_summary) j["dataset_summary"] = *problem.dataset_summary;
    j["is_policy"] = problem.is_policy;
    return j.dump(2) + "\n";
}

void save_problem(const Problem& problem, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ValidationError("cannot write problem file: " + path.string());
    }
    out << problem_to_json_text(problem);
}

}  // namespace mmagent
