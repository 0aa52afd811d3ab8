#include "mmagent/report.hpp"

#include <array>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::string strip_fence(const std::string& text) {
    std::string t = trim(text);
    std::size_t open = t.find("```");
    if (open == std::string::npos) return t;
    std::size_t body_start = t.find('\n', open);
    if (body_start == std::string::npos) return t;
    std::size_t close = t.find("```", body_start);
    if (close == std::string::npos) return t;
    return trim(t.substr(body_start + 1, close - body_start - 1));
}

const std::array<const char*, 6> kChartBlocks = {
    "**Chart Title**",  "**Chart Type**", "**Purpose**", "**Data or Variables**",
    "**Chart Presentation Guidelines**", "**Intended Message**"};

std::string section_title(const std::string& section) {
    std::string title;
    bool word_start = true;
    for (std::size_t i = 0; i < section.size(); ++i) {
        char c = section[i];
        if (c == ' ') {
            title += c;
            word_start = true;
            continue;
        }
        if (word_start) {
            // keep connectives lowercase: "of", "and"
            if (section.compare(i, 3, "of ") == 0 || section.compare(i, 4, "and ") == 0) {
                title += c;
            } else {
                title += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            }
            word_start = false;
        } else {
            title += c;
        }
    }
    return title;
}

std::vector<std::string> split_keywords(const std::string& raw) {
    std::vector<std::string> keywords;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        std::size_t next = raw.find(';', pos);
        std::string piece = (next == std::string::npos) ? raw.substr(pos)
                                                        : raw.substr(pos, next - pos);
        piece = trim(piece);
        if (!piece.empty()) keywords.push_back(std::move(piece));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return keywords;
}

}  // namespace

const char* to_string(CompileStatus::Kind kind) {
    switch (kind) {
        case CompileStatus::unchecked: return "unchecked";
        case CompileStatus::checked_ok: return "checked_ok";
        case CompileStatus::checked_fail: return "checked_fail";
    }
    return "unknown";
}

bool structural_latex_check(const std::string& latex, std::string* log) {
    auto fail = [log](const std::string& message) {
        if (log) *log = message;
        return false;
    };
    std::vector<std::string> env_stack;
    long depth = 0;
    std::size_t i = 0;
    const std::size_t n = latex.size();
    auto read_env_name = [&](std::size_t brace_pos, std::string* name) {
        std::size_t close = latex.find('}', brace_pos);
        if (close == std::string::npos) return false;
        *name = latex.substr(brace_pos + 1, close - brace_pos - 1);
        i = close + 1;
        return true;
    };
    while (i < n) {
        char c = latex[i];
        if (c == '\\') {
            if (latex.compare(i, 7, "\\begin{") == 0) {
                std::string name;
                if (!read_env_name(i + 6, &name)) {
                    return fail("\\begin with unterminated environment name");
                }
                env_stack.push_back(name);
                continue;
            }
            if (latex.compare(i, 5, "\\end{") == 0) {
                std::string name;
                if (!read_env_name(i + 4, &name)) {
                    return fail("\\end with unterminated environment name");
                }
                if (env_stack.empty()) {
                    return fail("\\end{" + name + "} without a matching \\begin");
                }
                if (env_stack.back() != name) {
                    return fail("environment mismatch: \\begin{" + env_stack.back() +
                                "} closed by \\end{" + name + "}");
                }
                env_stack.pop_back();
                continue;
            }
            i += 2;  // escaped character, \{ and \} included
            continue;
        }
        if (c == '%') {
            std::size_t eol = latex.find('\n', i);
            i = (eol == std::string::npos) ? n : eol + 1;
            continue;
        }
        if (c == '{') {
            ++depth;
        } else if (c == '}') {
            --depth;
            if (depth < 0) {
                return fail("closing brace without a matching opening brace");
            }
        }
        ++i;
    }
    if (depth != 0) {
        return fail(std::to_string(depth) + " opening brace(s) never closed");
    }
    if (!env_stack.empty()) {
        return fail("environment \\begin{" + env_stack.back() + "} never closed");
    }
    if (log) log->clear();
    return true;
}

bool chart_spec_complete(const std::string& spec, std::string* missing_block) {
    for (const char* block : kChartBlocks) {
        if (spec.find(block) == std::string::npos) {
            if (missing_block) *missing_block = block;
            return false;
        }
    }
    return true;
}

ReportBuilder::ReportBuilder(LlmGateway& gateway, const TemplateRegistry& templates,
                             const PipelineConfig& config)
    : gateway_(gateway), templates_(templates), config_(config) {}

const std::vector<std::string>& ReportBuilder::outline() {
    static const std::vector<std::string> sections = {
        "abstract",
        "problem restatement",
        "model assumptions",
        "justification of assumptions",
        "notation and definitions",
        "problem analysis",
        "solution",
        "conclusion",
    };
    return sections;
}

bool ReportBuilder::uses_structured_draft(const std::string& section) const {
    return section == "problem analysis" || section == "solution";
}

std::string ReportBuilder::draft_chapter(const std::string& section, const Memory& memory,
                                         const std::string& previous_chapters) {
    std::map<std::string, std::string> slots;
    slots["chapter_path"] = section;
    slots["previous_chapters"] = previous_chapters;

    LlmRequest request;
    if (uses_structured_draft(section)) {
        slots["json_context"] = memory.to_json().dump(2);
        request.tag = "chapter_draft";
    } else {
        request.tag = "chapter_preceding";
    }
    request.user_text = templates_.render(request.tag, slots);
    request.temperature = temperature_for_tag(request.tag, config_);
    return strip_fence(gateway_.complete(request).text);
}

std::string ReportBuilder::notation_table(const std::string& chapters_text) {
    LlmRequest request;
    request.tag = "notation";
    request.user_text = templates_.render("notation", {{"previous_chapters", chapters_text}});
    request.temperature = temperature_for_tag("notation", config_);

    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string table = strip_fence(gateway_.complete(request).text);
        if (table.find("\\begin{table") != std::string::npos &&
            table.find("\\end{table") != std::string::npos) {
            return table;
        }
    }
    throw ParseError("notation reply lacks a table environment after one retry");
}

MetaInfo ReportBuilder::meta_info(const std::string& chapters_text) {
    LlmRequest request;
    request.tag = "meta";
    request.user_text = templates_.render("meta", {{"paper_chapters", chapters_text}});
    request.temperature = temperature_for_tag("meta", config_);

    nlohmann::json parsed;
    bool ok = false;
    for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
        const std::string reply = strip_fence(gateway_.complete(request).text);
        try {
            parsed = nlohmann::json::parse(reply);
            ok = parsed.is_object() && parsed.contains("title") &&
                 parsed.at("title").is_string() && parsed.contains("summary") &&
                 parsed.at("summary").is_string() && parsed.contains("keywords") &&
                 parsed.at("keywords").is_string();
        } catch (const nlohmann::json::parse_error&) {
            ok = false;
        }
        if (!ok && attempt == 1) {
            throw ParseError(
                "meta reply is not the expected {title, summary, keywords} object after one "
                "retry");
        }
    }

    MetaInfo meta;
    meta.title = parsed.at("title").get<std::string>();
    meta.summary = parsed.at("summary").get<std::string>();
    meta.keywords_raw = parsed.at("keywords").get<std::string>();
    meta.keywords = split_keywords(meta.keywords_raw);
    if (meta.keywords.size() < 4 || meta.keywords.size() > 6) {
        throw ValidationError("keyword count out of range: got " +
                              std::to_string(meta.keywords.size()) + ", expected 4 to 6");
    }
    return meta;
}

std::vector<std::string> ReportBuilder::chart_guidelines(const std::string& paper_content,
                                                         int count) {
    std::vector<std::string> charts;
    for (int index = 0; index < count; ++index) {
        std::string existing;
        for (std::size_t i = 0; i < charts.size(); ++i) {
            existing += "Chart " + std::to_string(i + 1) + ":\n" + charts[i];
            if (i + 1 < charts.size()) existing += "\n\n";
        }
        if (existing.empty()) existing = "none";

        LlmRequest request;
        request.tag = "chart";
        request.user_text = templates_.render(
            "chart", {{"paper_content", paper_content}, {"existing_charts", existing}});
        request.temperature = temperature_for_tag("chart", config_);

        std::string missing;
        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            std::string spec = trim(gateway_.complete(request).text);
            if (chart_spec_complete(spec, &missing)) {
                charts.push_back(std::move(spec));
                accepted = true;
            }
        }
        if (!accepted) {
            throw ParseError("chart spec is missing the " + missing + " block after one retry");
        }
    }
    return charts;
}

ReportDocument ReportBuilder::build(const Memory& memory) {
    ReportDocument doc;

    // Abstract is drafted last; it appears first in the document.
    std::vector<std::string> drafting_order;
    for (const auto& section : outline()) {
        if (section == "abstract" || section == "notation and definitions") continue;
        drafting_order.push_back(section);
    }
    drafting_order.push_back("abstract");

    std::string threaded;
    for (const auto& section : drafting_order) {
        std::string body = draft_chapter(section, memory, threaded);
        if (!threaded.empty()) threaded += "\n\n";
        threaded += "Chapter: " + section + "\n" + body;
        doc.chapters[section] = std::move(body);
    }

    doc.notation = notation_table(threaded);
    doc.meta = meta_info(threaded);
    doc.charts = chart_guidelines(threaded, config_.chart_count);
    return doc;
}

CompileStatus ReportBuilder::assemble_and_check(ReportDocument& doc,
                                                const std::filesystem::path& out_path) {
    std::string latex;
    latex += "\\documentclass{article}\n";
    latex += "\\usepackage{amsmath}\n";
    latex += "\\usepackage{amssymb}\n";
    latex += "\\usepackage{array}\n";
    latex += "\\usepackage{booktabs}\n";
    latex += "\\usepackage{float}\n";
    latex += "\\title{" + doc.meta.title + "}\n";
    latex += "\\begin{document}\n";
    latex += "\\maketitle\n";
    for (const auto& section : outline()) {
        latex += "\n\\section{" + section_title(section) + "}\n";
        if (section == "notation and definitions") {
            latex += doc.notation + "\n";
            continue;
        }
        auto it = doc.chapters.find(section);
        if (it == doc.chapters.end()) {
            throw ValidationError("report chapter missing: " + section);
        }
        latex += it->second + "\n";
    }
    latex += "\n\\end{document}\n";
    doc.latex = latex;

    {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) {
            throw ValidationError("cannot write report file: " + out_path.string());
        }
        out << latex;
    }

    CompileStatus status;
    if (!config_.latex_check_command || config_.latex_check_command->empty()) {
        status.kind = CompileStatus::unchecked;
    } else if (*config_.latex_check_command == "builtin") {
        std::string log;
        status.kind = structural_latex_check(latex, &log) ? CompileStatus::checked_ok
                                                          : CompileStatus::checked_fail;
        status.log = log;
    } else {
        const std::string command =
            *config_.latex_check_command + " '" + out_path.string() + "' 2>&1";
        std::string output;
        FILE* pipe = popen(command.c_str(), "r");
        if (pipe == nullptr) {
            status.kind = CompileStatus::checked_fail;
            status.log = "cannot run compile check command";
        } else {
            char buffer[4096];
            std::size_t got;
            while ((got = fread(buffer, 1, sizeof(buffer), pipe)) > 0) {
                output.append(buffer, got);
            }
            int rc = pclose(pipe);
            status.kind = (rc == 0) ? CompileStatus::checked_ok : CompileStatus::checked_fail;
            status.log = output;
        }
    }
    doc.compile_status = status;
    return status;
}

}  // namespace mmagent
