#pragma once

// Model-serving gateway: the single place where prompts are rendered,
// requests retried, attempts traced, and embeddings cached. Everything
// above this layer is deterministic given a backend; everything below is
// swappable (scripted fixtures for tests, HTTP for real serving; the HTTP
// backends live in http_backend.hpp to keep this header light).
//
// Determinism: requests carry a submission sequence number, the persisted
// trace is sorted by it and contains no timing, and scripted backends are
// pure lookups, so a fixture-driven run writes byte-identical artifacts
// every time. The in-flight bound is asserted from in-memory begin/end
// event counters that never reach disk.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "cfd/common.hpp"

namespace cfd::gateway {

using nlohmann::json;

// Retryable condition (timeouts, throttling, scripted flakiness).
struct TransientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-retryable condition (bad request, fixture miss, exhausted budget).
struct PermanentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Prompt templates: versioned text files with {{name}} placeholders.
// Leading lines starting with '#' document variables and the expected reply
// shape; they are stripped from the rendered prompt.
// ---------------------------------------------------------------------------

class TemplateStore {
public:
    static TemplateStore from_dir(const std::filesystem::path& dir) {
        if (!std::filesystem::is_directory(dir))
            throw PermanentError("template directory not found: " + dir.string());
        TemplateStore store;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.path().extension() != ".txt") continue;
            std::ifstream in(entry.path());
            std::ostringstream body;
            std::string line;
            bool in_header = true;
            bool first_body_line = true;
            while (std::getline(in, line)) {
                if (in_header && (line.rfind("#", 0) == 0 || line.empty())) continue;
                in_header = false;
                if (!first_body_line) body << '\n';
                body << line;
                first_body_line = false;
            }
            store.bodies_[entry.path().stem().string()] = body.str();
        }
        return store;
    }

    static TemplateStore in_memory(std::map<std::string, std::string> bodies) {
        TemplateStore store;
        store.bodies_ = std::move(bodies);
        return store;
    }

    bool has(const std::string& id) const { return bodies_.count(id) > 0; }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& [id, body] : bodies_) out.push_back(id);
        return out;
    }

    // Pure function of (template id, variables): no clocks, no counters.
    std::string render(const std::string& id,
                       const std::map<std::string, std::string>& vars) const {
        auto it = bodies_.find(id);
        if (it == bodies_.end()) throw PermanentError("unknown template: " + id);
        const std::string& body = it->second;
        std::string out;
        out.reserve(body.size());
        std::size_t pos = 0;
        while (pos < body.size()) {
            std::size_t open = body.find("{{", pos);
            if (open == std::string::npos) {
                out.append(body, pos, body.size() - pos);
                break;
            }
            out.append(body, pos, open - pos);
            std::size_t close = body.find("}}", open);
            if (close == std::string::npos)
                throw PermanentError("template " + id + " has an unterminated placeholder");
            std::string name = body.substr(open + 2, close - open - 2);
            auto var = vars.find(name);
            if (var == vars.end())
                throw PermanentError("template " + id + " references missing variable '" +
                                     name + "'");
            out += var->second;
            pos = close + 2;
        }
        return out;
    }

private:
    std::map<std::string, std::string> bodies_;
};

// ---------------------------------------------------------------------------
// Requests and backends
// ---------------------------------------------------------------------------

struct ChatRequest {
    std::string template_id;
    std::map<std::string, std::string> variables;
    std::string key;            // fixture lookup / trace identity
    std::size_t repetition = 0; // distinguishes independent samples
    double temperature = 0.0;
    int max_tokens = 1024;
    std::optional<std::uint64_t> seed;
};

struct ChatReply {
    std::string text;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    int attempts = 1;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatReply complete(const ChatRequest& request, const std::string& prompt) = 0;
    virtual std::string name() const = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) = 0;
    virtual std::string model_id() const = 0;
};

// ---------------------------------------------------------------------------
// Test encoder: hashed bag of words, dimension 256. Documented precisely so
// fixtures are reproducible bit for bit: lowercase alphanumeric tokens, each
// token hashed with FNV-1a 64; the vector index is hash mod dim and the
// contribution is +1 or -1 by the hash's top bit. Token order never matters.
// ---------------------------------------------------------------------------

inline std::vector<double> hashed_bow(const std::string& text, std::size_t dim = 256) {
    std::vector<double> v(dim, 0.0);
    for (const std::string& tok : word_tokens(text)) {
        std::uint64_t h = fnv1a64(tok);
        double sign = (h >> 63) ? -1.0 : 1.0;
        v[static_cast<std::size_t>(h % dim)] += sign;
    }
    return v;
}

class HashedBowBackend : public EmbeddingBackend {
public:
    explicit HashedBowBackend(std::size_t dim = 256) : dim_(dim) {}
    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const std::string& t : texts) out.push_back(hashed_bow(t, dim_));
        return out;
    }
    std::string model_id() const override { return "hashed-bow-" + std::to_string(dim_); }

private:
    std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Scripted fixtures: a total map from (template, key, repetition) to a reply,
// plus an embedding table. Entries may fail a scripted number of times first
// (for retry tests) and may sleep (for overlap tests).
// ---------------------------------------------------------------------------

struct ScriptedFixture {
    struct ChatEntry {
        std::string reply;
        int fail_times = 0;
        int delay_ms = 0;
    };

    using ChatKey = std::tuple<std::string, std::string, std::size_t>;
    std::map<ChatKey, ChatEntry> chat;
    std::map<std::string, std::vector<double>> vectors;
    bool derive_missing_embeddings = true;  // hashed bag-of-words fallback

    void add_chat(const std::string& template_id, const std::string& key,
                  std::size_t repetition, const std::string& reply, int fail_times = 0,
                  int delay_ms = 0) {
        chat[{template_id, key, repetition}] = ChatEntry{reply, fail_times, delay_ms};
    }

    static ScriptedFixture from_json(const json& j) {
        ScriptedFixture f;
        for (const json& e : j.value("chat", json::array())) {
            f.add_chat(e.at("template").get<std::string>(), e.at("key").get<std::string>(),
                       e.value("repetition", std::size_t{0}),
                       e.at("reply").get<std::string>(), e.value("fail_times", 0),
                       e.value("delay_ms", 0));
        }
        if (j.contains("embedding")) {
            const json& emb = j.at("embedding");
            std::string fallback = emb.value("fallback", std::string("hashed-bow"));
            if (fallback != "hashed-bow" && fallback != "error")
                throw PermanentError("fixture embedding fallback must be hashed-bow or error");
            f.derive_missing_embeddings = fallback == "hashed-bow";
            json table = emb.value("vectors", json::object());
            for (const auto& [text, vec] : table.items())
                f.vectors[text] = vec.get<std::vector<double>>();
        }
        return f;
    }

    static ScriptedFixture from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw PermanentError("cannot open fixture file: " + path.string());
        json j;
        try {
            in >> j;
        } catch (const json::parse_error& e) {
            throw PermanentError("fixture file " + path.string() + " is not valid JSON: " +
                                 e.what());
        }
        return from_json(j);
    }

    json to_json() const {
        json entries = json::array();
        for (const auto& [k, e] : chat) {
            json entry{{"template", std::get<0>(k)},
                       {"key", std::get<1>(k)},
                       {"repetition", std::get<2>(k)},
                       {"reply", e.reply}};
            if (e.fail_times > 0) entry["fail_times"] = e.fail_times;
            if (e.delay_ms > 0) entry["delay_ms"] = e.delay_ms;
            entries.push_back(std::move(entry));
        }
        json emb{{"fallback", derive_missing_embeddings ? "hashed-bow" : "error"}};
        if (!vectors.empty()) {
            json table = json::object();
            for (const auto& [text, vec] : vectors) table[text] = vec;
            emb["vectors"] = table;
        }
        return json{{"chat", entries}, {"embedding", emb}};
    }
};

class ScriptedChatBackend : public ChatBackend {
public:
    explicit ScriptedChatBackend(ScriptedFixture fixture) : fixture_(std::move(fixture)) {}

    ChatReply complete(const ChatRequest& request, const std::string& prompt) override {
        ScriptedFixture::ChatKey k{request.template_id, request.key, request.repetition};
        auto it = fixture_.chat.find(k);
        if (it == fixture_.chat.end())
            throw PermanentError("fixture has no reply for template '" + request.template_id +
                                 "', key '" + request.key + "', repetition " +
                                 std::to_string(request.repetition));
        {
            std::lock_guard<std::mutex> lock(mutex_);
            int& failed = failures_served_[k];
            if (failed < it->second.fail_times) {
                ++failed;
                throw TransientError("scripted transient failure for key '" + request.key +
                                     "' (" + std::to_string(failed) + " of " +
                                     std::to_string(it->second.fail_times) + ")");
            }
        }
        if (it->second.delay_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(it->second.delay_ms));
        ChatReply reply;
        reply.text = it->second.reply;
        reply.prompt_tokens = static_cast<long>(prompt.size() / 4);
        reply.completion_tokens = static_cast<long>(reply.text.size() / 4);
        return reply;
    }

    std::string name() const override { return "scripted"; }

private:
    ScriptedFixture fixture_;
    std::mutex mutex_;
    std::map<ScriptedFixture::ChatKey, int> failures_served_;
};

class ScriptedEmbeddingBackend : public EmbeddingBackend {
public:
    explicit ScriptedEmbeddingBackend(ScriptedFixture fixture, std::size_t dim = 256)
        : fixture_(std::move(fixture)), dim_(dim) {}

    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) override {
        std::vector<std::vector<double>> out;
        out.reserve(texts.size());
        for (const std::string& t : texts) {
            auto it = fixture_.vectors.find(t);
            if (it != fixture_.vectors.end()) {
                out.push_back(it->second);
            } else if (fixture_.derive_missing_embeddings) {
                out.push_back(hashed_bow(t, dim_));
            } else {
                throw PermanentError("fixture has no embedding for text: " + t.substr(0, 60));
            }
        }
        return out;
    }

    std::string model_id() const override { return "scripted-" + std::to_string(dim_); }

private:
    ScriptedFixture fixture_;
    std::size_t dim_;
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int budget = 3;  // total attempts, not retries after the first
    std::chrono::milliseconds initial_delay{1000};
    double factor = 2.0;
    bool jitter = true;
    std::uint64_t jitter_seed = 0;
};

struct AttemptRecord {
    std::uint64_t seq = 0;  // submission order, deterministic
    std::string kind;       // "chat" | "embed"
    std::string template_id;
    std::string key;
    std::size_t repetition = 0;
    int attempt = 0;  // 1-based
    std::string outcome;  // "ok" | "transient" | "error"
    std::size_t reply_chars = 0;
    // Overlap accounting (in-memory only; excluded from the persisted trace
    // because interleaving under real threads is not reproducible).
    std::uint64_t begin_event = 0, end_event = 0;
};

struct GatewayOptions {
    TemplateStore templates;
    std::size_t parallelism = 4;
    RetryPolicy retry;
    std::filesystem::path embed_cache_dir;  // empty disables the cache
};

struct GatewayUsage {
    std::size_t chat_requests = 0;
    std::size_t chat_attempts = 0;
    std::size_t embed_texts = 0;
    std::size_t embed_wire_batches = 0;
    std::size_t embed_cache_hits = 0;
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

class Gateway {
public:
    Gateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embed,
            GatewayOptions options)
        : chat_(std::move(chat)), embed_(std::move(embed)), options_(std::move(options)) {
        if (options_.parallelism < 1)
            throw std::invalid_argument("gateway parallelism must be >= 1");
        if (options_.retry.budget < 1)
            throw std::invalid_argument("retry budget must be >= 1");
        if (!options_.embed_cache_dir.empty())
            std::filesystem::create_directories(options_.embed_cache_dir);
    }

    const TemplateStore& templates() const { return options_.templates; }

    std::string render(const ChatRequest& request) const {
        return options_.templates.render(request.template_id, request.variables);
    }

    ChatReply chat(const ChatRequest& request) {
        return std::move(chat_batch({request}).front());
    }

    // Order-preserving; independent requests run on a bounded worker pool.
    std::vector<ChatReply> chat_batch(const std::vector<ChatRequest>& requests) {
        std::vector<ChatReply> replies(requests.size());
        std::vector<std::exception_ptr> errors(requests.size());
        std::uint64_t base_seq;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            base_seq = next_seq_;
            next_seq_ += requests.size();
            usage_.chat_requests += requests.size();
        }
        std::atomic<std::size_t> cursor{0};
        auto worker = [&] {
            while (true) {
                std::size_t i = cursor.fetch_add(1);
                if (i >= requests.size()) return;
                try {
                    replies[i] = run_chat(requests[i], base_seq + i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        };
        std::size_t n_workers = std::min(options_.parallelism, requests.size());
        if (n_workers <= 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
            for (std::thread& t : pool) t.join();
        }
        for (std::size_t i = 0; i < requests.size(); ++i)
            if (errors[i]) std::rethrow_exception(errors[i]);
        return replies;
    }

    // One wire batch for the cache misses; cached vectors never hit the wire.
    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) {
        std::vector<std::vector<double>> out(texts.size());
        std::vector<std::size_t> misses;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (auto hit = cache_lookup(texts[i])) {
                out[i] = std::move(*hit);
                std::lock_guard<std::mutex> lock(mutex_);
                ++usage_.embed_cache_hits;
            } else {
                misses.push_back(i);
            }
        }
        if (!misses.empty()) {
            std::vector<std::string> need;
            need.reserve(misses.size());
            for (std::size_t i : misses) need.push_back(texts[i]);
            std::vector<std::vector<double>> got = run_embed(need);
            if (got.size() != need.size())
                throw PermanentError("embedding backend returned " + std::to_string(got.size()) +
                                     " vectors for " + std::to_string(need.size()) + " texts");
            for (std::size_t k = 0; k < misses.size(); ++k) {
                cache_store(need[k], got[k]);
                out[misses[k]] = std::move(got[k]);
            }
        }
        {
            std::lock_guard<std::mutex> lock(mutex_);
            usage_.embed_texts += texts.size();
        }
        return out;
    }

    // Sorted by (seq, attempt); safe to call between batches.
    std::vector<AttemptRecord> trace() const {
        std::lock_guard<std::mutex> lock(mutex_);
        std::vector<AttemptRecord> out = trace_;
        std::sort(out.begin(), out.end(), [](const AttemptRecord& a, const AttemptRecord& b) {
            return std::tie(a.seq, a.attempt) < std::tie(b.seq, b.attempt);
        });
        return out;
    }

    // Deterministic fields only: byte-identical across fixture runs.
    void write_trace(std::ostream& os) const {
        for (const AttemptRecord& r : trace()) {
            json line{{"seq", r.seq},          {"kind", r.kind},
                      {"template", r.template_id}, {"key", r.key},
                      {"repetition", r.repetition}, {"attempt", r.attempt},
                      {"outcome", r.outcome},   {"reply_chars", r.reply_chars}};
            os << line.dump() << '\n';
        }
    }

    // Highest number of simultaneously in-flight backend calls observed.
    std::size_t max_in_flight() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return max_in_flight_;
    }

    GatewayUsage usage() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return usage_;
    }

private:
    ChatReply run_chat(const ChatRequest& request, std::uint64_t seq) {
        std::string prompt = render(request);
        const RetryPolicy& policy = options_.retry;
        for (int attempt = 1;; ++attempt) {
            AttemptRecord record;
            record.seq = seq;
            record.kind = "chat";
            record.template_id = request.template_id;
            record.key = request.key;
            record.repetition = request.repetition;
            record.attempt = attempt;
            try {
                record.begin_event = enter_flight();
                ChatReply reply = chat_->complete(request, prompt);
                record.end_event = leave_flight();
                record.outcome = "ok";
                record.reply_chars = reply.text.size();
                reply.attempts = attempt;
                {
                    std::lock_guard<std::mutex> lock(mutex_);
                    ++usage_.chat_attempts;
                    usage_.prompt_tokens += reply.prompt_tokens;
                    usage_.completion_tokens += reply.completion_tokens;
                    trace_.push_back(std::move(record));
                }
                return reply;
            } catch (const TransientError& e) {
                record.end_event = leave_flight();
                record.outcome = "transient";
                {
                    std::lock_guard<std::mutex> lock(mutex_);
                    ++usage_.chat_attempts;
                    trace_.push_back(record);
                }
                if (attempt >= policy.budget)
                    throw PermanentError("retry budget (" + std::to_string(policy.budget) +
                                         " attempts) exhausted for chat key '" + request.key +
                                         "': " + e.what());
                backoff(policy, seq, attempt);
            } catch (...) {
                record.end_event = leave_flight();
                record.outcome = "error";
                {
                    std::lock_guard<std::mutex> lock(mutex_);
                    ++usage_.chat_attempts;
                    trace_.push_back(record);
                }
                throw;
            }
        }
    }

    std::vector<std::vector<double>> run_embed(const std::vector<std::string>& texts) {
        const RetryPolicy& policy = options_.retry;
        std::uint64_t seq;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            seq = next_seq_++;
        }
        for (int attempt = 1;; ++attempt) {
            AttemptRecord record;
            record.seq = seq;
            record.kind = "embed";
            record.key = "texts:" + std::to_string(texts.size());
            record.attempt = attempt;
            try {
                record.begin_event = enter_flight();
                std::vector<std::vector<double>> got = embed_->embed_batch(texts);
                record.end_event = leave_flight();
                record.outcome = "ok";
                record.reply_chars = got.size();
                {
                    std::lock_guard<std::mutex> lock(mutex_);
                    ++usage_.embed_wire_batches;
                    trace_.push_back(std::move(record));
                }
                return got;
            } catch (const TransientError& e) {
                record.end_event = leave_flight();
                record.outcome = "transient";
                {
                    std::lock_guard<std::mutex> lock(mutex_);
                    trace_.push_back(record);
                }
                if (attempt >= policy.budget)
                    throw PermanentError("retry budget (" + std::to_string(policy.budget) +
                                         " attempts) exhausted for embedding batch: " +
                                         e.what());
                backoff(policy, seq, attempt);
            } catch (...) {
                record.end_event = leave_flight();
                record.outcome = "error";
                {
                    std::lock_guard<std::mutex> lock(mutex_);
                    trace_.push_back(record);
                }
                throw;
            }
        }
    }

    void backoff(const RetryPolicy& policy, std::uint64_t seq, int attempt) {
        if (policy.initial_delay.count() <= 0) return;
        double ms = static_cast<double>(policy.initial_delay.count());
        for (int i = 1; i < attempt; ++i) ms *= policy.factor;
        if (policy.jitter) {
            // Deterministic jitter in [0.5, 1.5): seeded by (run seed, seq,
            // attempt) so reruns sleep identically.
            Rng rng(fnv1a64(std::to_string(seq) + ":" + std::to_string(attempt),
                            policy.jitter_seed ^ 0x9e3779b97f4a7c15ull));
            ms *= 0.5 + uniform01(rng);
        }
        std::this_thread::sleep_for(
            std::chrono::milliseconds(static_cast<std::int64_t>(ms)));
    }

    std::uint64_t enter_flight() {
        std::lock_guard<std::mutex> lock(mutex_);
        ++in_flight_;
        max_in_flight_ = std::max(max_in_flight_, in_flight_);
        return event_counter_++;
    }

    std::uint64_t leave_flight() {
        std::lock_guard<std::mutex> lock(mutex_);
        --in_flight_;
        return event_counter_++;
    }

    std::filesystem::path cache_path(const std::string& text) const {
        std::uint64_t h = fnv1a64(text, fnv1a64(embed_->model_id()));
        return options_.embed_cache_dir / ("emb_" + to_hex(h) + ".json");
    }

    std::optional<std::vector<double>> cache_lookup(const std::string& text) const {
        if (options_.embed_cache_dir.empty()) return std::nullopt;
        std::ifstream in(cache_path(text));
        if (!in) return std::nullopt;
        try {
            json j;
            in >> j;
            if (j.value("model", std::string()) != embed_->model_id()) return std::nullopt;
            if (j.value("text", std::string()) != text) return std::nullopt;
            return j.at("vector").get<std::vector<double>>();
        } catch (const json::exception&) {
            return std::nullopt;  // unreadable cache entries are misses
        }
    }

    void cache_store(const std::string& text, const std::vector<double>& vec) const {
        if (options_.embed_cache_dir.empty()) return;
        json j{{"model", embed_->model_id()}, {"text", text}, {"vector", vec}};
        std::ofstream out(cache_path(text));
        out << j.dump();
    }

    std::shared_ptr<ChatBackend> chat_;
    std::shared_ptr<EmbeddingBackend> embed_;
    GatewayOptions options_;

    mutable std::mutex mutex_;
    std::vector<AttemptRecord> trace_;
    GatewayUsage usage_;
    std::uint64_t next_seq_ = 0;
    std::uint64_t event_counter_ = 0;
    std::size_t in_flight_ = 0;
    std::size_t max_in_flight_ = 0;
};

}  // namespace cfd::gateway
