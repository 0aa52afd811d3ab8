#include "mmagent/memory.hpp"

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

nlohmann::json produced_file_to_json(const ProducedFile& f) {
    return nlohmann::json{{"path", f.path}, {"description", f.description}, {"columns", f.columns}};
}

ProducedFile produced_file_from_json(const nlohmann::json& j) {
    ProducedFile f;
    f.path = j.value("path", "");
    f.description = j.value("description", "");
    if (j.contains("columns")) f.columns = j.at("columns").get<std::vector<std::string>>();
    return f;
}

}  // namespace

nlohmann::json task_outputs_to_json(const TaskOutputs& outputs) {
    nlohmann::json j;
    j["scheme"] = outputs.scheme;
    if (outputs.code) j["code"] = *outputs.code;
    if (outputs.execution_result) j["execution_result"] = *outputs.execution_result;
    j["interpretation"] = outputs.interpretation;
    j["answer"] = outputs.answer;
    if (outputs.code_structure) j["code_structure"] = *outputs.code_structure;
    auto files = nlohmann::json::array();
    for (const auto& f : outputs.produced_files) files.push_back(produced_file_to_json(f));
    j["produced_files"] = files;
    return j;
}

TaskOutputs task_outputs_from_json(const nlohmann::json& j) {
    TaskOutputs out;
    out.scheme = j.value("scheme", "");
    if (j.contains("code")) out.code = j.at("code").get<std::string>();
    if (j.contains("execution_result"))
        out.execution_result = j.at("execution_result").get<std::string>();
    out.interpretation = j.value("interpretation", "");
    out.answer = j.value("answer", "");
    if (j.contains("code_structure")) out.code_structure = j.at("code_structure");
    if (j.contains("produced_files")) {
        for (const auto& f : j.at("produced_files")) {
            out.produced_files.push_back(produced_file_from_json(f));
        }
    }
    return out;
}

void Memory::insert(const std::string& id, TaskOutputs outputs) {
    if (find(id) != nullptr) {
        throw ValidationError("memory already holds outputs for subtask " + id);
    }
    entries_.emplace_back(id, std::move(outputs));
}

const TaskOutputs* Memory::find(const std::string& id) const {
    for (const auto& [key, value] : entries_) {
        if (key == id) return &value;
    }
    return nullptr;
}

Memory::Lookup Memory::lookup(const std::vector<std::string>& ids) const {
    Lookup result;
    for (const auto& id : ids) {
        if (const TaskOutputs* found = find(id)) {
            result.found.emplace_back(id, found);
        } else {
            result.missing.push_back(id);
        }
    }
    return result;
}

nlohmann::json Memory::to_json() const {
    auto j = nlohmann::json::array();
    for (const auto& [id, outputs] : entries_) {
        nlohmann::json entry = task_outputs_to_json(outputs);
        entry["id"] = id;
        j.push_back(std::move(entry));
    }
    return j;
}

}  // namespace mmagent
