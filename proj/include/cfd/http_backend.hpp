#pragma once

// OpenAI-compatible HTTP backends. Kept out of gateway.hpp so that the
// fixture-driven test and pipeline translation units never pay for httplib.
//
// Error policy: HTTP 429 and 5xx are transient (the gateway retries with
// backoff), other non-2xx statuses are permanent, and connection failures
// are transient. The API key is read from an environment variable whose
// name comes from config, never from config values themselves.

#include <cstdlib>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "cfd/gateway.hpp"

namespace cfd::gateway {

struct HttpEndpoint {
    std::string base_url;  // e.g. http://localhost:8000
    std::string model;
    std::string api_key_env;  // name of the env var holding the bearer token
    int timeout_seconds = 120;
};

namespace detail {

inline std::string bearer_from_env(const std::string& env_name) {
    if (env_name.empty()) return {};
    const char* v = std::getenv(env_name.c_str());
    return v ? std::string(v) : std::string();
}

inline httplib::Headers auth_headers(const HttpEndpoint& ep) {
    httplib::Headers headers{{"Content-Type", "application/json"}};
    std::string key = bearer_from_env(ep.api_key_env);
    if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
    return headers;
}

inline json post_json(const HttpEndpoint& ep, const std::string& path, const json& body) {
    httplib::Client client(ep.base_url);
    client.set_connection_timeout(ep.timeout_seconds);
    client.set_read_timeout(ep.timeout_seconds);
    auto res = client.Post(path, auth_headers(ep), body.dump(), "application/json");
    if (!res)
        throw TransientError("connection to " + ep.base_url + path + " failed: " +
                             httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw TransientError("HTTP " + std::to_string(res->status) + " from " + path + ": " +
                             res->body.substr(0, 200));
    if (res->status < 200 || res->status >= 300)
        throw PermanentError("HTTP " + std::to_string(res->status) + " from " + path + ": " +
                             res->body.substr(0, 200));
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw PermanentError(std::string("malformed JSON from ") + path + ": " + e.what());
    }
}

}  // namespace detail

class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

    ChatReply complete(const ChatRequest& request, const std::string& prompt) override {
        json body{{"model", endpoint_.model},
                  {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
                  {"temperature", request.temperature},
                  {"max_tokens", request.max_tokens}};
        if (request.seed) body["seed"] = *request.seed;
        json res = detail::post_json(endpoint_, "/v1/chat/completions", body);
        ChatReply reply;
        try {
            reply.text = res.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            throw PermanentError(std::string("chat response missing content: ") + e.what());
        }
        if (res.contains("usage")) {
            reply.prompt_tokens = res["usage"].value("prompt_tokens", 0L);
            reply.completion_tokens = res["usage"].value("completion_tokens", 0L);
        }
        return reply;
    }

    std::string name() const override { return "http:" + endpoint_.model; }

private:
    HttpEndpoint endpoint_;
};

class HttpEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HttpEmbeddingBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

    std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) override {
        json body{{"model", endpoint_.model}, {"input", texts}};
        json res = detail::post_json(endpoint_, "/v1/embeddings", body);
        std::vector<std::vector<double>> out(texts.size());
        try {
            for (const json& item : res.at("data")) {
                std::size_t idx = item.at("index").get<std::size_t>();
                if (idx >= out.size())
                    throw PermanentError("embedding response index out of range");
                out[idx] = item.at("embedding").get<std::vector<double>>();
            }
        } catch (const json::exception& e) {
            throw PermanentError(std::string("embedding response malformed: ") + e.what());
        }
        return out;
    }

    std::string model_id() const override { return endpoint_.model; }

private:
    HttpEndpoint endpoint_;
};

}  // namespace cfd::gateway
