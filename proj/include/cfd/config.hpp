#pragma once

// Pipeline configuration: one struct, JSON round-trip, strict validation,
// environment overrides for serving endpoints, and a content digest that
// stamps every prediction so mixed-config result files are detectable.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cfd/common.hpp"

namespace cfd::config {

using nlohmann::json;

struct PipelineConfig {
    // Sampling geometry.
    std::size_t initial_samples = 30;   // chains sampled from the factual knowledge
    std::size_t cluster_count = 5;      // reasoning clusters
    std::size_t entity_count = 5;       // entities extracted per question
    std::size_t variant_samples = 5;    // chains sampled per knowledge variant
    double similarity_threshold = 0.8;  // consistency gate on cosine similarity
    double contrastive_tau = 0.07;      // temperature of the alignment loss
    double temperature_cot = 0.7;
    double temperature_extract = 0.0;   // entity and counterfactual calls
    bool allow_fewer_entities = false;
    std::uint64_t seed = 0;

    // Serving.
    std::size_t parallelism = 4;
    int retry_budget = 3;
    int backoff_initial_ms = 1000;
    double backoff_factor = 2.0;
    std::string templates_dir = "templates";
    std::string template_version = "v1";
    std::string cache_dir;  // empty disables the embedding cache

    // Endpoints (unused by fixture-driven runs).
    std::string chat_base_url;
    std::string chat_model;
    std::string embedding_base_url;
    std::string embedding_model;
    std::string api_key_env = "CFDKIT_API_KEY";  // env var NAME, never the key

    std::filesystem::path templates_path() const {
        return std::filesystem::path(templates_dir) / template_version;
    }

    void validate() const {
        if (initial_samples < 1) throw std::invalid_argument("initial_samples must be >= 1");
        if (cluster_count < 1) throw std::invalid_argument("cluster_count must be >= 1");
        if (cluster_count > initial_samples)
            throw std::invalid_argument("cluster_count cannot exceed initial_samples");
        if (entity_count < 2) throw std::invalid_argument("entity_count must be >= 2");
        if (variant_samples < 1) throw std::invalid_argument("variant_samples must be >= 1");
        if (similarity_threshold < -1.0 || similarity_threshold > 1.0)
            throw std::invalid_argument("similarity_threshold must lie in [-1, 1]");
        if (!(contrastive_tau > 0.0))
            throw std::invalid_argument("contrastive_tau must be positive");
        if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
        if (retry_budget < 1) throw std::invalid_argument("retry_budget must be >= 1");
        if (backoff_initial_ms < 0)
            throw std::invalid_argument("backoff_initial_ms must be >= 0");
        if (!(backoff_factor >= 1.0))
            throw std::invalid_argument("backoff_factor must be >= 1");
    }

    json to_json() const {
        return json{{"initial_samples", initial_samples},
                    {"cluster_count", cluster_count},
                    {"entity_count", entity_count},
                    {"variant_samples", variant_samples},
                    {"similarity_threshold", similarity_threshold},
                    {"contrastive_tau", contrastive_tau},
                    {"temperature_cot", temperature_cot},
                    {"temperature_extract", temperature_extract},
                    {"allow_fewer_entities", allow_fewer_entities},
                    {"seed", seed},
                    {"parallelism", parallelism},
                    {"retry_budget", retry_budget},
                    {"backoff_initial_ms", backoff_initial_ms},
                    {"backoff_factor", backoff_factor},
                    {"templates_dir", templates_dir},
                    {"template_version", template_version},
                    {"cache_dir", cache_dir},
                    {"chat_base_url", chat_base_url},
                    {"chat_model", chat_model},
                    {"embedding_base_url", embedding_base_url},
                    {"embedding_model", embedding_model},
                    {"api_key_env", api_key_env}};
    }

    static PipelineConfig from_json(const json& j) {
        PipelineConfig c;
        json known = c.to_json();
        for (const auto& [key, value] : j.items())
            if (!known.contains(key))
                throw std::invalid_argument("unknown config key: " + key);
        c.initial_samples = j.value("initial_samples", c.initial_samples);
        c.cluster_count = j.value("cluster_count", c.cluster_count);
        c.entity_count = j.value("entity_count", c.entity_count);
        c.variant_samples = j.value("variant_samples", c.variant_samples);
        c.similarity_threshold = j.value("similarity_threshold", c.similarity_threshold);
        c.contrastive_tau = j.value("contrastive_tau", c.contrastive_tau);
        c.temperature_cot = j.value("temperature_cot", c.temperature_cot);
        c.temperature_extract = j.value("temperature_extract", c.temperature_extract);
        c.allow_fewer_entities = j.value("allow_fewer_entities", c.allow_fewer_entities);
        c.seed = j.value("seed", c.seed);
        c.parallelism = j.value("parallelism", c.parallelism);
        c.retry_budget = j.value("retry_budget", c.retry_budget);
        c.backoff_initial_ms = j.value("backoff_initial_ms", c.backoff_initial_ms);
        c.backoff_factor = j.value("backoff_factor", c.backoff_factor);
        c.templates_dir = j.value("templates_dir", c.templates_dir);
        c.template_version = j.value("template_version", c.template_version);
        c.cache_dir = j.value("cache_dir", c.cache_dir);
        c.chat_base_url = j.value("chat_base_url", c.chat_base_url);
        c.chat_model = j.value("chat_model", c.chat_model);
        c.embedding_base_url = j.value("embedding_base_url", c.embedding_base_url);
        c.embedding_model = j.value("embedding_model", c.embedding_model);
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        c.validate();
        return c;
    }

    static PipelineConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config file: " + path);
        json j;
        try {
            in >> j;
        } catch (const json::parse_error& e) {
            throw std::runtime_error("config file " + path + " is not valid JSON: " + e.what());
        }
        return from_json(j);
    }

    // Serving endpoints may be overridden from the environment, so configs
    // can be committed without binding to a machine.
    void apply_env_overrides() {
        if (const char* v = std::getenv("CFDKIT_CHAT_BASE_URL")) chat_base_url = v;
        if (const char* v = std::getenv("CFDKIT_CHAT_MODEL")) chat_model = v;
        if (const char* v = std::getenv("CFDKIT_EMBEDDING_BASE_URL")) embedding_base_url = v;
        if (const char* v = std::getenv("CFDKIT_EMBEDDING_MODEL")) embedding_model = v;
    }

    // Stable content digest over the canonical JSON form (keys are emitted
    // sorted), stamped into predictions and reports.
    std::string digest() const { return to_hex(fnv1a64(to_json().dump())); }
};

}  // namespace cfd::config
