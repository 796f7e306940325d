#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>

namespace cer::vlm {

/// A backend call that failed. Transient failures (rate limiting, server errors, network) may be
/// retried; fatal ones (credentials, malformed requests, configuration) must not be.
class BackendError : public std::runtime_error {
public:
    BackendError(const std::string& what, bool transient, int status = 0)
        : std::runtime_error(what), transient_(transient), status_(status) {}
    bool transient() const { return transient_; }
    int status() const { return status_; }

private:
    bool transient_;
    int status_;
};

class Backend {
public:
    virtual ~Backend() = default;
    /// Identifies the provider and model; part of the reply cache key.
    virtual std::string id() const = 0;
    /// Sends one encoded image (PNG or JPEG bytes) with a text prompt and returns the text reply.
    virtual std::string query(const std::string& image, const std::string& prompt) = 0;
};

/// Deterministic backend: replies are scripted by the SHA-256 of the image bytes.
class MockBackend final : public Backend {
public:
    explicit MockBackend(std::string id = "mock", std::string fallback = "I am not sure.");

    /// Loads {"id": .., "default": .., "replies": {"<sha256>": "<reply>" | {"1": .., "2": ..}}}.
    static std::unique_ptr<MockBackend> from_file(const std::filesystem::path& script);

    void script(const std::string& image_sha256, const std::string& reply);
    /// Reply only for one prompt variant, matched by prompt text.
    void script(const std::string& image_sha256, const std::string& prompt, const std::string& reply);
    /// The next calls fail with these HTTP-style statuses, in order, before normal replies resume.
    void fail_next(std::deque<int> statuses);

    std::string id() const override { return id_; }
    std::string query(const std::string& image, const std::string& prompt) override;
    int calls() const { return calls_; }

private:
    std::string id_, fallback_;
    std::map<std::string, std::string> replies_;
    std::map<std::pair<std::string, std::string>, std::string> prompt_replies_;
    std::deque<int> failures_;
    std::mutex mu_;
    std::atomic<int> calls_{0};
};

/// Maps an HTTP status to the error a backend should raise for it.
BackendError status_error(int status, const std::string& body);

struct HttpBackendConfig {
    std::string base_url = "https://api.anthropic.com";
    std::string path = "/v1/messages";
    std::string model;
    /// Name of the environment variable holding the API key.
    std::string api_key_env = "ANTHROPIC_API_KEY";
    std::string api_version = "2023-06-01";
    int max_tokens = 256;
    double timeout_s = 60;
};

/// Messages-style JSON API: image as base64 content block followed by the prompt text.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig cfg);
    std::string id() const override { return "http:" + cfg_.model; }
    std::string query(const std::string& image, const std::string& prompt) override;

private:
    HttpBackendConfig cfg_;
    std::string api_key_;
};

std::string image_media_type(const std::string& bytes);

}  // namespace cer::vlm
