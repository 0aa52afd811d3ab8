#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmagent/config.hpp"
#include "mmagent/gateway.hpp"
#include "mmagent/memory.hpp"
#include "mmagent/problem.hpp"
#include "mmagent/prompts.hpp"

namespace mmagent {

struct MetaInfo {
    std::string title;
    std::string summary;
    std::vector<std::string> keywords;
    std::string keywords_raw;
};

struct CompileStatus {
    enum Kind { unchecked, checked_ok, checked_fail };
    Kind kind = unchecked;
    std::string log;
};

const char* to_string(CompileStatus::Kind kind);

struct ReportDocument {
    // Section name -> LaTeX body, notation section excluded.
    std::map<std::string, std::string> chapters;
    std::string notation;
    MetaInfo meta;
    std::vector<std::string> charts;
    std::string latex;
    CompileStatus compile_status;
};

/// In-process LaTeX sanity check: balanced braces and matched
/// \begin{...}/\end{...} environments. Returns false and fills `log` on the
/// first structural problem found.
bool structural_latex_check(const std::string& latex, std::string* log);

/// Validates one chart guideline spec: all six labeled blocks present.
bool chart_spec_complete(const std::string& spec, std::string* missing_block = nullptr);

/// Assembles the final report from the run memory: chapters, notation table,
/// meta info, chart guidelines, and the LaTeX document itself.
class ReportBuilder {
public:
    ReportBuilder(LlmGateway& gateway, const TemplateRegistry& templates,
                  const PipelineConfig& config);

    /// The fixed eight-section outline, in document order.
    static const std::vector<std::string>& outline();

    std::string draft_chapter(const std::string& section, const Memory& memory,
                              const std::string& previous_chapters);
    std::string notation_table(const std::string& chapters_text);
    MetaInfo meta_info(const std::string& chapters_text);
    std::vector<std::string> chart_guidelines(const std::string& paper_content, int count);

    /// Drafts every chapter (abstract last), the notation table, meta info,
    /// and charts.
    ReportDocument build(const Memory& memory);

    /// Writes the .tex file and runs the configured compile check. A failed
    /// check is recorded, not thrown.
    CompileStatus assemble_and_check(ReportDocument& doc, const std::filesystem::path& out_path);

private:
    LlmGateway& gateway_;
    const TemplateRegistry& templates_;
    PipelineConfig config_;

    bool uses_structured_draft(const std::string& section) const;
};

}  // namespace mmagent
