#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace mmagent {

struct PromptTemplate {
    std::string name;
    std::string body;
    std::set<std::string> required;
    std::set<std::string> optional;
};

/// Loads prompt bodies and their slot declarations from a template directory
/// (one text file per template plus registry.json). Rendering substitutes
/// declared {slot} markers only; {{ and }} collapse to literal braces and any
/// other braced text (LaTeX and the like) passes through untouched.
class TemplateRegistry {
public:
    static TemplateRegistry load(const std::filesystem::path& dir);

    const PromptTemplate& get(const std::string& name) const;
    bool has(const std::string& name) const;
    std::vector<std::string> names() const;
    std::set<std::string> tag_set() const;

    /// Renders `name` with the given slot values. Missing required slot:
    /// TemplateError naming the slot. Missing optional slot: empty string.
    /// Extra keys that the template does not declare are collected into
    /// `warnings` when provided, never an error.
    std::string render(const std::string& name, const std::map<std::string, std::string>& slots,
                       std::vector<std::string>* warnings = nullptr) const;

    /// Slot markers from the global declared-slot union still present in
    /// `text`. Empty for any output of a successful render().
    std::vector<std::string> residual_markers(const std::string& text) const;

private:
    std::map<std::string, PromptTemplate> templates_;
    std::set<std::string> all_slots_;
};

}  // namespace mmagent
