#include "mmagent/sandbox.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    std::size_t end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_command(const std::string& command) {
    std::vector<std::string> parts;
    std::istringstream in(command);
    std::string part;
    while (in >> part) parts.push_back(part);
    return parts;
}

std::set<std::string> snapshot_files(const std::filesystem::path& workdir) {
    std::set<std::string> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(workdir)) {
        if (!entry.is_regular_file()) continue;
        files.insert(std::filesystem::relative(entry.path(), workdir).generic_string());
    }
    return files;
}

std::string read_tail(const std::filesystem::path& path, std::size_t max_bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    const std::size_t want = std::min(size, max_bytes);
    in.seekg(static_cast<std::streamoff>(size - want));
    std::string tail(want, '\0');
    in.read(tail.data(), static_cast<std::streamsize>(want));
    return tail;
}

std::string strip_json_fence(const std::string& text) {
    std::string t = trim(text);
    std::size_t open = t.find("```");
    if (open == std::string::npos) return t;
    std::size_t body_start = t.find('\n', open);
    if (body_start == std::string::npos) return t;
    std::size_t close = t.find("```", body_start);
    if (close == std::string::npos) return t;
    return trim(t.substr(body_start + 1, close - body_start - 1));
}

std::string describe_outcome(const ExecutionOutcome& outcome) {
    std::string text = std::string("status: ") + to_string(outcome.status);
    if (outcome.status != ExecStatus::timeout && outcome.status != ExecStatus::spawn_failure) {
        text += "\nexit code: " + std::to_string(outcome.exit_code);
    }
    if (!outcome.stderr_tail.empty()) {
        text += "\nstderr (tail):\n" + outcome.stderr_tail;
    }
    if (!outcome.stdout_tail.empty()) {
        text += "\nstdout (tail):\n" + outcome.stdout_tail;
    }
    return text;
}

std::string describe_execution(const ExecutionOutcome* outcome) {
    if (outcome == nullptr) {
        return "No code was executed for this task; it calls for policy recommendations and "
               "qualitative insights only.";
    }
    std::string text = std::string("status: ") + to_string(outcome->status);
    text += "\nexit code: " + std::to_string(outcome->exit_code);
    text += "\nstdout (tail):\n" +
            (outcome->stdout_tail.empty() ? "(empty)" : outcome->stdout_tail);
    if (!outcome->stderr_tail.empty()) {
        text += "\nstderr (tail):\n" + outcome->stderr_tail;
    }
    if (outcome->files_created.empty()) {
        text += "\nfiles created: none";
    } else {
        text += "\nfiles created:";
        for (const auto& file : outcome->files_created) text += "\n- " + file;
    }
    return text;
}

}  // namespace

const char* to_string(ExecStatus status) {
    switch (status) {
        case ExecStatus::success: return "success";
        case ExecStatus::nonzero_exit: return "nonzero_exit";
        case ExecStatus::timeout: return "timeout";
        case ExecStatus::spawn_failure: return "spawn_failure";
    }
    return "unknown";
}

std::string extract_fenced_code(const std::string& reply) {
    std::size_t open = reply.find("```");
    if (open == std::string::npos) {
        throw ParseError("reply holds no fenced code block");
    }
    std::size_t body_start = reply.find('\n', open);
    if (body_start == std::string::npos) {
        throw ParseError("fenced code block has no body");
    }
    std::size_t close = reply.find("```", body_start);
    if (close == std::string::npos) {
        throw ParseError("fenced code block is unterminated");
    }
    std::string body = reply.substr(body_start + 1, close - body_start - 1);
    if (trim(body).empty()) {
        throw ParseError("fenced code block is empty");
    }
    return body;
}

SolverSandbox::SolverSandbox(LlmGateway& gateway, const TemplateRegistry& templates,
                             const PipelineConfig& config)
    : gateway_(gateway), templates_(templates), config_(config) {}

std::string SolverSandbox::request_code(const std::string& tag,
                                        const std::map<std::string, std::string>& slots) {
    LlmRequest request;
    request.tag = tag;
    request.user_text = templates_.render(tag, slots);
    request.temperature = temperature_for_tag(tag, config_);
    try {
        return extract_fenced_code(gateway_.complete(request).text);
    } catch (const ParseError&) {
        // one structural re-prompt, then the failure stands
    }
    return extract_fenced_code(gateway_.complete(request).text);
}

CodeArtifact SolverSandbox::generate_code(const Subtask& subtask, const ModelingScheme& scheme,
                                          const ResourceBundle& resources, const Problem& problem,
                                          const std::filesystem::path& workdir) {
    if (problem.is_policy) {
        throw ValidationError("policy problems do not generate code");
    }
    std::map<std::string, std::string> slots;
    slots["dataset_path"] = problem.dataset_path.value_or("none");
    slots["data_summary"] = problem.dataset_summary.value_or("");
    slots["variable_description"] = problem.variable_description.value_or("");
    slots["dependent_file_prompt"] = resources.files_digest();
    slots["task_description"] = subtask.query_text();
    slots["task_analysis"] = subtask.dependency_narrative.value_or("");
    slots["modeling_formulas"] = scheme.formulas;
    slots["modeling_process"] = scheme.narrative;
    slots["code_template"] = config_.code_template;

    CodeArtifact artifact;
    artifact.source = request_code("codegen", slots);
    artifact.save_path = "solution." + config_.solver_extension;
    artifact.attempt = 0;
    (void)workdir;
    return artifact;
}

ExecutionOutcome SolverSandbox::execute(const CodeArtifact& artifact,
                                        const std::filesystem::path& workdir) {
    if (!std::filesystem::is_directory(workdir)) {
        throw SandboxError("working directory does not exist: " + workdir.string());
    }
    {
        std::ofstream out(workdir / artifact.save_path, std::ios::binary);
        if (!out) {
            throw SandboxError("cannot write solver script: " +
                               (workdir / artifact.save_path).string());
        }
        out << artifact.source;
    }

    std::vector<std::string> argv_strings = split_command(config_.interpreter_command);
    if (argv_strings.empty()) {
        throw SandboxError("interpreter command is empty");
    }
    argv_strings.push_back(artifact.save_path.generic_string());
    std::vector<char*> argv;
    argv.reserve(argv_strings.size() + 1);
    for (auto& s : argv_strings) argv.push_back(s.data());
    argv.push_back(nullptr);

    const std::set<std::string> before = snapshot_files(workdir);

    int err_pipe[2];
    if (pipe(err_pipe) != 0) {
        throw SandboxError(std::string("pipe failed: ") + std::strerror(errno));
    }
    fcntl(err_pipe[1], F_SETFD, FD_CLOEXEC);

    const auto started = std::chrono::steady_clock::now();
    ExecutionOutcome outcome;

    pid_t pid = fork();
    if (pid < 0) {
        close(err_pipe[0]);
        close(err_pipe[1]);
        throw SandboxError(std::string("fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        close(err_pipe[0]);
        setpgid(0, 0);
        int fail = 0;
        if (chdir(workdir.c_str()) != 0) fail = errno;
        if (!fail) {
            int out_fd = open("stdout.log", O_WRONLY | O_CREAT | O_TRUNC, 0644);
            int err_fd = open("stderr.log", O_WRONLY | O_CREAT | O_TRUNC, 0644);
            if (out_fd < 0 || err_fd < 0) {
                fail = errno;
            } else {
                dup2(out_fd, STDOUT_FILENO);
                dup2(err_fd, STDERR_FILENO);
                close(out_fd);
                close(err_fd);
            }
        }
        if (!fail) {
            execvp(argv[0], argv.data());
            fail = errno;
        }
        ssize_t ignored = write(err_pipe[1], &fail, sizeof(fail));
        (void)ignored;
        _exit(127);
    }

    close(err_pipe[1]);
    int child_errno = 0;
    ssize_t got = read(err_pipe[0], &child_errno, sizeof(child_errno));
    close(err_pipe[0]);
    if (got > 0) {
        // exec (or the setup before it) failed inside the child
        int status = 0;
        waitpid(pid, &status, 0);
        outcome.status = ExecStatus::spawn_failure;
        outcome.stderr_tail = std::string("cannot start interpreter \"") + argv_strings[0] +
                              "\": " + std::strerror(child_errno);
        outcome.duration = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        return outcome;
    }

    const auto deadline = started + config_.exec_timeout;
    int status = 0;
    bool timed_out = false;
    for (;;) {
        pid_t done = waitpid(pid, &status, WNOHANG);
        if (done == pid) break;
        if (done < 0) {
            throw SandboxError(std::string("waitpid failed: ") + std::strerror(errno));
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            timed_out = true;
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            waitpid(pid, &status, 0);
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    outcome.duration = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);

    if (timed_out) {
        outcome.status = ExecStatus::timeout;
        outcome.exit_code = -1;
    } else if (WIFEXITED(status)) {
        outcome.exit_code = WEXITSTATUS(status);
        outcome.status = outcome.exit_code == 0 ? ExecStatus::success : ExecStatus::nonzero_exit;
    } else if (WIFSIGNALED(status)) {
        outcome.exit_code = 128 + WTERMSIG(status);
        outcome.status = ExecStatus::nonzero_exit;
    } else {
        outcome.exit_code = -1;
        outcome.status = ExecStatus::nonzero_exit;
    }

    outcome.stdout_tail = read_tail(workdir / "stdout.log", config_.output_tail_bytes);
    outcome.stderr_tail = read_tail(workdir / "stderr.log", config_.error_tail_bytes);

    const std::set<std::string> after = snapshot_files(workdir);
    const std::string script = artifact.save_path.generic_string();
    for (const auto& file : after) {
        if (before.count(file)) continue;
        if (file == script || file == "stdout.log" || file == "stderr.log") continue;
        outcome.files_created.push_back(file);
    }
    std::sort(outcome.files_created.begin(), outcome.files_created.end());
    return outcome;
}

SolverSandbox::RepairResult SolverSandbox::repair_loop(CodeArtifact artifact,
                                                       ExecutionOutcome outcome,
                                                       const ModelingScheme& scheme,
                                                       const std::filesystem::path& workdir) {
    RepairResult result;
    result.attempts = 0;
    for (int round = 1; round <= config_.n_repair; ++round) {
        if (outcome.status == ExecStatus::success) break;
        std::map<std::string, std::string> slots;
        slots["code_template"] = config_.code_template;
        slots["modeling_process"] = scheme.narrative;
        slots["code"] = artifact.source;
        slots["observation"] = describe_outcome(outcome);
        artifact.source = request_code("repair", slots);
        artifact.attempt = round;
        outcome = execute(artifact, workdir);
        result.attempts = round;
    }
    result.artifact = std::move(artifact);
    result.outcome = std::move(outcome);
    return result;
}

nlohmann::json SolverSandbox::extract_structure(const CodeArtifact& artifact,
                                                const std::filesystem::path& workdir,
                                                std::vector<std::string>* warnings) {
    std::map<std::string, std::string> slots;
    slots["code"] = artifact.source;
    slots["save_path"] = artifact.save_path.generic_string();

    LlmRequest request;
    request.tag = "structure";
    request.user_text = templates_.render("structure", slots);
    request.temperature = temperature_for_tag("structure", config_);

    nlohmann::json structure;
    bool parsed = false;
    for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
        const std::string reply = strip_json_fence(gateway_.complete(request).text);
        try {
            structure = nlohmann::json::parse(reply);
            parsed = structure.is_object();
        } catch (const nlohmann::json::parse_error&) {
            parsed = false;
        }
        if (!parsed && attempt == 1) {
            throw ParseError("code structure reply is not a JSON object after one retry");
        }
    }

    structure["script_path"] = artifact.save_path.generic_string();
    for (const char* key : {"class", "function", "file_outputs"}) {
        if (!structure.contains(key) || structure.at(key).is_null()) {
            structure[key] = nlohmann::json::array();
        } else if (!structure.at(key).is_array()) {
            throw ParseError(std::string("code structure field \"") + key + "\" must be a list");
        }
    }

    nlohmann::json kept = nlohmann::json::array();
    for (const auto& file : structure.at("file_outputs")) {
        const std::string path = file.value("path", "");
        if (path.empty()) {
            if (warnings) warnings->push_back("file_outputs entry without a path dropped");
            continue;
        }
        if (!std::filesystem::exists(workdir / path)) {
            if (warnings) {
                warnings->push_back("claimed output file does not exist, dropped: " + path);
            }
            continue;
        }
        kept.push_back(file);
    }
    structure["file_outputs"] = std::move(kept);
    return structure;
}

std::string SolverSandbox::interpret_results(const Subtask& subtask, const ModelingScheme& scheme,
                                             const ExecutionOutcome* outcome) {
    std::map<std::string, std::string> slots;
    slots["task_description"] = subtask.query_text();
    slots["task_analysis"] = subtask.dependency_narrative.value_or("");
    slots["task_formulas"] = scheme.formulas;
    slots["task_modeling"] = scheme.narrative;
    slots["execution_result"] = describe_execution(outcome);

    LlmRequest request;
    request.tag = "interpret";
    request.user_text = templates_.render("interpret", slots);
    request.temperature = temperature_for_tag("interpret", config_);
    return gateway_.complete(request).text;
}

std::string SolverSandbox::formulate_answer(const Subtask& subtask, const ModelingScheme& scheme,
                                            const std::string& interpretation) {
    std::map<std::string, std::string> slots;
    slots["task_description"] = subtask.query_text();
    slots["task_analysis"] = subtask.dependency_narrative.value_or("");
    slots["task_formulas"] = scheme.formulas;
    slots["task_modeling"] = scheme.narrative;
    slots["task_result"] = interpretation;

    LlmRequest request;
    request.tag = "answer";
    request.user_text = templates_.render("answer", slots);
    request.temperature = temperature_for_tag("answer", config_);
    return gateway_.complete(request).text;
}

SolverSandbox::SolveResult SolverSandbox::solve_full(const Subtask& subtask,
                                                     const ModelingScheme& scheme,
                                                     const ResourceBundle& resources,
                                                     const Problem& problem,
                                                     const std::filesystem::path& workdir) {
    SolveResult result;
    result.outputs.scheme = scheme.formulas;
    if (!scheme.narrative.empty()) {
        result.outputs.scheme += "\n\n" + scheme.narrative;
    }

    CodeArtifact artifact = generate_code(subtask, scheme, resources, problem, workdir);
    ExecutionOutcome outcome = execute(artifact, workdir);
    RepairResult repaired = repair_loop(std::move(artifact), std::move(outcome), scheme, workdir);
    result.attempts = repaired.attempts;
    result.final_status = repaired.outcome.status;
    result.outputs.code = repaired.artifact.source;
    result.outputs.execution_result = describe_execution(&repaired.outcome);

    if (repaired.outcome.status != ExecStatus::success) {
        return result;
    }

    result.outputs.code_structure = extract_structure(repaired.artifact, workdir,
                                                      &result.warnings);
    std::set<std::string> created(repaired.outcome.files_created.begin(),
                                  repaired.outcome.files_created.end());
    for (const auto& file : result.outputs.code_structure->at("file_outputs")) {
        const std::string path = file.value("path", "");
        if (!created.count(path)) {
            result.warnings.push_back("claimed output file was not created by this run: " + path);
            continue;
        }
        ProducedFile produced;
        produced.path = path;
        produced.description = file.value("file_description", "");
        if (file.contains("column_name") && file.at("column_name").is_array()) {
            for (const auto& col : file.at("column_name")) {
                if (col.is_string()) produced.columns.push_back(col.get<std::string>());
            }
        }
        result.outputs.produced_files.push_back(std::move(produced));
    }

    result.outputs.interpretation = interpret_results(subtask, scheme, &repaired.outcome);
    result.outputs.answer = formulate_answer(subtask, scheme, result.outputs.interpretation);
    return result;
}

TaskOutputs SolverSandbox::solve_policy(const Subtask& subtask, const ModelingScheme& scheme) {
    TaskOutputs outputs;
    outputs.scheme = scheme.formulas;
    if (!scheme.narrative.empty()) {
        outputs.scheme += "\n\n" + scheme.narrative;
    }
    outputs.interpretation = interpret_results(subtask, scheme, nullptr);
    outputs.answer = formulate_answer(subtask, scheme, outputs.interpretation);
    return outputs;
}

}  // namespace mmagent
