#include "mmagent/prompts.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

bool slot_name_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

/// Reads a {marker} starting at `open` (position of '{'). Returns the slot
/// name and sets `end` to the index one past '}' when the braced text looks
/// like a slot name; returns empty otherwise.
std::string read_marker(const std::string& text, std::size_t open, std::size_t* end) {
    std::size_t i = open + 1;
    while (i < text.size() && slot_name_char(text[i])) ++i;
    if (i == open + 1 || i >= text.size() || text[i] != '}') return {};
    *end = i + 1;
    return text.substr(open + 1, i - open - 1);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw TemplateError("cannot open template file: " + path.string());
    }
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TemplateRegistry TemplateRegistry::load(const std::filesystem::path& dir) {
    const auto registry_path = dir / "registry.json";
    std::ifstream in(registry_path);
    if (!in) {
        throw TemplateError("cannot open template registry: " + registry_path.string());
    }
    nlohmann::json entries;
    try {
        in >> entries;
    } catch (const nlohmann::json::parse_error& e) {
        throw TemplateError("template registry " + registry_path.string() + ": " + e.what());
    }
    if (entries.is_object() && entries.contains("templates")) {
        entries = entries.at("templates");
    }
    if (!entries.is_array()) {
        throw TemplateError("template registry must hold a JSON array of templates");
    }

    TemplateRegistry registry;
    for (const auto& entry : entries) {
        PromptTemplate tmpl;
        tmpl.name = entry.at("name").get<std::string>();
        if (registry.templates_.count(tmpl.name)) {
            throw TemplateError("duplicate template name: " + tmpl.name);
        }
        const auto file = entry.at("file").get<std::string>();
        tmpl.body = read_file(dir / file);
        for (const auto& slot : entry.value("required", nlohmann::json::array())) {
            tmpl.required.insert(slot.get<std::string>());
        }
        for (const auto& slot : entry.value("optional", nlohmann::json::array())) {
            tmpl.optional.insert(slot.get<std::string>());
        }

        // Every declared slot has to be reachable in the body text, otherwise
        // the declaration is stale and renders would silently drop values.
        std::set<std::string> present;
        for (std::size_t i = 0; i < tmpl.body.size();) {
            if (tmpl.body.compare(i, 2, "{{") == 0 || tmpl.body.compare(i, 2, "}}") == 0) {
                i += 2;
                continue;
            }
            if (tmpl.body[i] == '{') {
                std::size_t end = 0;
                std::string marker = read_marker(tmpl.body, i, &end);
                if (!marker.empty()) {
                    present.insert(marker);
                    i = end;
                    continue;
                }
            }
            ++i;
        }
        for (const auto& slot : tmpl.required) {
            if (!present.count(slot)) {
                throw TemplateError("template " + tmpl.name + " declares required slot {" + slot +
                                    "} but the body never uses it");
            }
        }
        for (const auto& slot : tmpl.optional) {
            if (!present.count(slot)) {
                throw TemplateError("template " + tmpl.name + " declares optional slot {" + slot +
                                    "} but the body never uses it");
            }
        }

        registry.all_slots_.insert(tmpl.required.begin(), tmpl.required.end());
        registry.all_slots_.insert(tmpl.optional.begin(), tmpl.optional.end());
        registry.templates_.emplace(tmpl.name, std::move(tmpl));
    }
    if (registry.templates_.empty()) {
        throw TemplateError("template registry is empty: " + registry_path.string());
    }
    return registry;
}

const PromptTemplate& TemplateRegistry::get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) {
        throw TemplateError("unknown template: " + name);
    }
    return it->second;
}

bool TemplateRegistry::has(const std::string& name) const { return templates_.count(name) > 0; }

std::vector<std::string> TemplateRegistry::names() const {
    std::vector<std::string> out;
    out.reserve(templates_.size());
    for (const auto& [name, _] : templates_) out.push_back(name);
    return out;
}

std::set<std::string> TemplateRegistry::tag_set() const {
    std::set<std::string> out;
    for (const auto& [name, _] : templates_) out.insert(name);
    return out;
}

std::string TemplateRegistry::render(const std::string& name,
                                     const std::map<std::string, std::string>& slots,
                                     std::vector<std::string>* warnings) const {
    const PromptTemplate& tmpl = get(name);

    auto declared = [&tmpl](const std::string& slot) {
        return tmpl.required.count(slot) > 0 || tmpl.optional.count(slot) > 0;
    };
    for (const auto& slot : tmpl.required) {
        if (!slots.count(slot)) {
            throw TemplateError("template " + name + " is missing required slot {" + slot + "}");
        }
    }
    if (warnings) {
        for (const auto& [key, _] : slots) {
            if (!declared(key)) {
                warnings->push_back("template " + name + " ignores undeclared slot {" + key + "}");
            }
        }
    }

    std::string out;
    out.reserve(tmpl.body.size());
    for (std::size_t i = 0; i < tmpl.body.size();) {
        if (tmpl.body.compare(i, 2, "{{") == 0) {
            out += '{';
            i += 2;
            continue;
        }
        if (tmpl.body.compare(i, 2, "}}") == 0) {
            out += '}';
            i += 2;
            continue;
        }
        if (tmpl.body[i] == '{') {
            std::size_t end = 0;
            std::string marker = read_marker(tmpl.body, i, &end);
            if (!marker.empty() && declared(marker)) {
                auto it = slots.find(marker);
                if (it != slots.end()) out += it->second;
                i = end;
                continue;
            }
        }
        out += tmpl.body[i];
        ++i;
    }
    return out;
}

std::vector<std::string> TemplateRegistry::residual_markers(const std::string& text) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < text.size();) {
        if (text.compare(i, 2, "{{") == 0 || text.compare(i, 2, "}}") == 0) {
            i += 2;
            continue;
        }
        if (text[i] == '{') {
            std::size_t end = 0;
            std::string marker = read_marker(text, i, &end);
            if (!marker.empty() && all_slots_.count(marker)) {
                out.push_back(marker);
                i = end;
                continue;
            }
        }
        ++i;
    }
    return out;
}

}  // namespace mmagent
