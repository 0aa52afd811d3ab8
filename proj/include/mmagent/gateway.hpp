#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mmagent {

struct LlmRequest {
    std::optional<std::string> system_text;
    std::string user_text;
    double temperature = 0.0;
    int max_output_tokens = 4096;
    // Which prompt role produced this request ("understand", "critic", ...).
    // Must name a registered template.
    std::string tag;
};

struct LlmResponse {
    std::string text;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    std::chrono::milliseconds latency{0};
};

struct TranscriptEntry {
    std::int64_t seq = 0;
    std::string timestamp;
    std::string tag;
    LlmRequest request;
    LlmResponse response;
};

/// Aggregates call counts and token usage per tag. Thread safe through the
/// owning gateway's lock.
class UsageLedger {
public:
    struct TagUsage {
        std::int64_t calls = 0;
        std::int64_t input_tokens = 0;
        std::int64_t output_tokens = 0;
        std::int64_t failures = 0;
    };

    void record(const std::string& tag, std::int64_t input_tokens, std::int64_t output_tokens,
                std::chrono::milliseconds latency);
    void record_failure(const std::string& tag);

    std::int64_t total_calls() const;
    std::int64_t total_input_tokens() const;
    std::int64_t total_output_tokens() const;
    std::chrono::milliseconds total_latency() const { return total_latency_; }

    double cost(double price_per_input_token, double price_per_output_token) const;

    const std::map<std::string, TagUsage>& per_tag() const { return per_tag_; }

    /// Per-tag rows plus grand totals, mirroring a usage accounting table.
    nlohmann::json report(double price_per_input_token = 0.0,
                          double price_per_output_token = 0.0) const;

private:
    std::map<std::string, TagUsage> per_tag_;
    std::chrono::milliseconds total_latency_{0};
};

/// Single entry point for model calls. Subclasses provide the transport;
/// complete() wraps it with tag validation, ledger accounting, and the
/// transcript. Safe to call from several threads.
class LlmGateway {
public:
    virtual ~LlmGateway() = default;

    LlmResponse complete(const LlmRequest& request);

    const UsageLedger& ledger() const { return ledger_; }
    const std::vector<TranscriptEntry>& transcript() const { return transcript_; }

    /// When set, every transcript entry is also appended to this file as one
    /// JSON object per line.
    void set_transcript_path(const std::filesystem::path& path);

    /// Restrict accepted tags. An empty set accepts anything.
    void set_allowed_tags(std::set<std::string> tags) { allowed_tags_ = std::move(tags); }

protected:
    virtual LlmResponse do_complete(const LlmRequest& request) = 0;
    /// Timestamp recorded in the transcript; deterministic transports
    /// override this with a logical clock.
    virtual std::string now(std::int64_t seq) const;

private:
    std::mutex mutex_;
    UsageLedger ledger_;
    std::vector<TranscriptEntry> transcript_;
    std::optional<std::filesystem::path> transcript_path_;
    std::set<std::string> allowed_tags_;
    std::int64_t next_seq_ = 0;
};

/// Offline deterministic gateway: replays scripted replies keyed by
/// (tag, ordinal within tag). Token counts are whitespace word counts, so a
/// given script and request sequence always produce byte-identical
/// transcripts.
class MockGateway : public LlmGateway {
public:
    explicit MockGateway(nlohmann::json script);
    static MockGateway from_file(const std::filesystem::path& path);

    /// Calls consumed so far for one tag.
    std::int64_t consumed(const std::string& tag) const;

protected:
    LlmResponse do_complete(const LlmRequest& request) override;
    std::string now(std::int64_t seq) const override;

private:
    std::map<std::string, std::vector<std::string>> script_;
    std::map<std::string, std::int64_t> cursor_;
    mutable std::mutex mock_mutex_;
};

/// Live HTTP gateway speaking the common chat-completion wire format.
/// Reads its key from MM_AGENT_API_KEY. Transport errors are retried with
/// exponential backoff up to `max_retries` extra attempts; malformed payload
/// errors are not retried.
class HttpGateway : public LlmGateway {
public:
    struct Options {
        std::string base_url;  // e.g. "https://api.openai.com"
        std::string path = "/v1/chat/completions";
        std::string model;
        std::string api_key_env = "MM_AGENT_API_KEY";
        int max_retries = 2;
        std::chrono::milliseconds initial_backoff{250};
        std::chrono::milliseconds request_timeout{120000};
    };

    explicit HttpGateway(Options options);

protected:
    LlmResponse do_complete(const LlmRequest& request) override;

private:
    Options options_;
    std::string api_key_;
};

std::int64_t count_words(const std::string& text);

}  // namespace mmagent
