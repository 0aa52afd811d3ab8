#include "mmagent/gateway.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "mmagent/errors.hpp"

namespace mmagent {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string iso8601_utc(std::time_t t) {
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ordered_json transcript_entry_to_json(const TranscriptEntry& e) {
    ordered_json j;
    j["seq"] = e.seq;
    j["timestamp"] = e.timestamp;
    j["tag"] = e.tag;
    if (e.request.system_text) {
        j["system"] = *e.request.system_text;
    } else {
        j["system"] = nullptr;
    }
    j["user"] = e.request.user_text;
    j["temperature"] = e.request.temperature;
    j["max_output_tokens"] = e.request.max_output_tokens;
    j["response"] = e.response.text;
    j["input_tokens"] = e.response.input_tokens;
    j["output_tokens"] = e.response.output_tokens;
    j["latency_ms"] = e.response.latency.count();
    return j;
}

}  // namespace

std::int64_t count_words(const std::string& text) {
    std::int64_t count = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++count;
        }
    }
    return count;
}

void UsageLedger::record(const std::string& tag, std::int64_t input_tokens,
                         std::int64_t output_tokens, std::chrono::milliseconds latency) {
    TagUsage& usage = per_tag_[tag];
    usage.calls += 1;
    usage.input_tokens += input_tokens;
    usage.output_tokens += output_tokens;
    total_latency_ += latency;
}

void UsageLedger::record_failure(const std::string& tag) { per_tag_[tag].failures += 1; }

std::int64_t UsageLedger::total_calls() const {
    std::int64_t total = 0;
    for (const auto& [_, usage] : per_tag_) total += usage.calls;
    return total;
}

std::int64_t UsageLedger::total_input_tokens() const {
    std::int64_t total = 0;
    for (const auto& [_, usage] : per_tag_) total += usage.input_tokens;
    return total;
}

std::int64_t UsageLedger::total_output_tokens() const {
    std::int64_t total = 0;
    for (const auto& [_, usage] : per_tag_) total += usage.output_tokens;
    return total;
}

double UsageLedger::cost(double price_per_input_token, double price_per_output_token) const {
    return static_cast<double>(total_input_tokens()) * price_per_input_token +
           static_cast<double>(total_output_tokens()) * price_per_output_token;
}

nlohmann::json UsageLedger::report(double price_per_input_token,
                                   double price_per_output_token) const {
    ordered_json per_tag = ordered_json::object();
    for (const auto& [tag, usage] : per_tag_) {
        per_tag[tag] = {{"calls", usage.calls},
                        {"input_tokens", usage.input_tokens},
                        {"output_tokens", usage.output_tokens},
                        {"failures", usage.failures}};
    }
    ordered_json j;
    j["per_tag"] = per_tag;
    j["total_calls"] = total_calls();
    j["total_input_tokens"] = total_input_tokens();
    j["total_output_tokens"] = total_output_tokens();
    j["total_latency_ms"] = total_latency_.count();
    j["cost"] = cost(price_per_input_token, price_per_output_token);
    return j;
}

LlmResponse LlmGateway::complete(const LlmRequest& request) {
    if (request.tag.empty()) {
        throw GatewayError("request tag must not be empty");
    }
    {
        std::lock_guard<std::mutex> lock(mutex_);
        if (!allowed_tags_.empty() && !allowed_tags_.count(request.tag)) {
            throw GatewayError("unknown request tag \"" + request.tag + "\"");
        }
    }

    LlmResponse response;
    try {
        response = do_complete(request);
    } catch (...) {
        std::lock_guard<std::mutex> lock(mutex_);
        ledger_.record_failure(request.tag);
        throw;
    }

    std::lock_guard<std::mutex> lock(mutex_);
    TranscriptEntry entry;
    entry.seq = next_seq_++;
    entry.timestamp = now(entry.seq);
    entry.tag = request.tag;
    entry.request = request;
    entry.response = response;
    ledger_.record(request.tag, response.input_tokens, response.output_tokens, response.latency);
    if (transcript_path_) {
        std::ofstream out(*transcript_path_, std::ios::app);
        if (!out) {
            throw GatewayError("cannot append to transcript file: " + transcript_path_->string());
        }
        out << transcript_entry_to_json(entry).dump() << "\n";
    }
    transcript_.push_back(std::move(entry));
    return response;
}

void LlmGateway::set_transcript_path(const std::filesystem::path& path) {
    std::lock_guard<std::mutex> lock(mutex_);
    transcript_path_ = path;
}

std::string LlmGateway::now(std::int64_t) const { return iso8601_utc(std::time(nullptr)); }

MockGateway::MockGateway(nlohmann::json script) {
    if (!script.is_object()) {
        throw ValidationError("mock script must be a JSON object of tag -> reply list");
    }
    for (auto& [tag, replies] : script.items()) {
        if (!replies.is_array()) {
            throw ValidationError("mock script entry for tag \"" + tag + "\" must be an array");
        }
        std::vector<std::string> list;
        for (auto& reply : replies) {
            if (!reply.is_string()) {
                throw ValidationError("mock script replies for tag \"" + tag +
                                      "\" must be strings");
            }
            list.push_back(reply.get<std::string>());
        }
        script_[tag] = std::move(list);
    }
}

MockGateway MockGateway::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError("cannot open mock script: " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("mock script " + path.string() + ": invalid JSON: " + e.what());
    }
    return MockGateway(std::move(j));
}

std::int64_t MockGateway::consumed(const std::string& tag) const {
    std::lock_guard<std::mutex> lock(mock_mutex_);
    auto it = cursor_.find(tag);
    return it == cursor_.end() ? 0 : it->second;
}

LlmResponse MockGateway::do_complete(const LlmRequest& request) {
    std::string text;
    {
        std::lock_guard<std::mutex> lock(mock_mutex_);
        auto it = script_.find(request.tag);
        if (it == script_.end()) {
            throw GatewayError("mock script has no replies for tag \"" + request.tag + "\"");
        }
        std::int64_t index = cursor_[request.tag];
        if (index >= static_cast<std::int64_t>(it->second.size())) {
            throw GatewayError("mock script exhausted for tag \"" + request.tag + "\" after " +
                               std::to_string(index) + " replies");
        }
        text = it->second[static_cast<std::size_t>(index)];
        cursor_[request.tag] = index + 1;
    }

    LlmResponse response;
    response.text = std::move(text);
    std::int64_t input = count_words(request.user_text);
    if (request.system_text) input += count_words(*request.system_text);
    response.input_tokens = input;
    response.output_tokens = count_words(response.text);
    response.latency = std::chrono::milliseconds(0);
    return response;
}

std::string MockGateway::now(std::int64_t seq) const {
    // Logical clock so identical scripts replay to byte-identical transcripts.
    return iso8601_utc(static_cast<std::time_t>(seq));
}

HttpGateway::HttpGateway(Options options) : options_(std::move(options)) {
    if (options_.base_url.empty()) {
        throw GatewayError("http gateway requires a base url");
    }
    const char* key = std::getenv(options_.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
        throw GatewayError("environment variable " + options_.api_key_env +
                           " must hold the API key");
    }
    api_key_ = key;
}

LlmResponse HttpGateway::do_complete(const LlmRequest& request) {
    ordered_json payload;
    payload["model"] = options_.model;
    auto messages = ordered_json::array();
    if (request.system_text) {
        messages.push_back({{"role", "system"}, {"content", *request.system_text}});
    }
    messages.push_back({{"role", "user"}, {"content", request.user_text}});
    payload["messages"] = messages;
    payload["temperature"] = request.temperature;
    payload["max_tokens"] = request.max_output_tokens;
    const std::string body = payload.dump();

    httplib::Client client(options_.base_url);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(
        options_.request_timeout));
    client.set_read_timeout(
        std::chrono::duration_cast<std::chrono::seconds>(options_.request_timeout));
    httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};

    std::chrono::milliseconds backoff = options_.initial_backoff;
    httplib::Result result;
    auto started = std::chrono::steady_clock::now();
    for (int attempt = 0;; ++attempt) {
        started = std::chrono::steady_clock::now();
        result = client.Post(options_.path, headers, body, "application/json");
        if (result) break;
        if (attempt >= options_.max_retries) {
            throw GatewayError("transport failure after " + std::to_string(attempt + 1) +
                               " attempts: " + httplib::to_string(result.error()));
        }
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
    }
    auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);

    if (result->status != 200) {
        throw GatewayError("provider returned HTTP " + std::to_string(result->status) + ": " +
                           result->body);
    }

    nlohmann::json reply;
    try {
        reply = nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw GatewayError(std::string("provider returned invalid JSON: ") + e.what());
    }

    LlmResponse response;
    try {
        response.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw GatewayError(std::string("provider reply missing message content: ") + e.what());
    }
    if (reply.contains("usage")) {
        const auto& usage = reply.at("usage");
        response.input_tokens = usage.value("prompt_tokens", count_words(request.user_text));
        response.output_tokens = usage.value("completion_tokens", count_words(response.text));
    } else {
        response.input_tokens = count_words(request.user_text);
        if (request.system_text) response.input_tokens += count_words(*request.system_text);
        response.output_tokens = count_words(response.text);
    }
    response.latency = latency;
    return response;
}

}  // namespace mmagent
