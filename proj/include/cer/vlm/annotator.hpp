#pragma once

#include "cer/labels.hpp"
#include "cer/vlm/backend.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace cer::vlm {

namespace fs = std::filesystem;

struct FaceRef {
    std::string video_id;
    int frame_index = 0;
    std::string str() const { return video_id + ":" + std::to_string(frame_index); }
    bool operator==(const FaceRef&) const = default;
};

/// All attempts failed on transient errors.
class RetriesExhausted : public std::runtime_error {
public:
    RetriesExhausted(FaceRef ref, int attempts, const std::string& last)
        : std::runtime_error("giving up on " + ref.str() + " after " + std::to_string(attempts) + " attempts: " + last),
          ref_(std::move(ref)) {}
    const FaceRef& ref() const { return ref_; }

private:
    FaceRef ref_;
};

struct RetryPolicy {
    int max_attempts = 5;
    /// Delay before retry k (1-based) is base_delay * 2^(k-1), capped at max_delay.
    double base_delay_s = 1.0;
    double max_delay_s = 30.0;
};

/// Spaces calls at least 1/rate seconds apart across threads. Rate <= 0 disables it.
class RateLimiter {
public:
    explicit RateLimiter(double per_second = 2.0);
    void acquire();

private:
    std::chrono::steady_clock::duration interval_;
    std::chrono::steady_clock::time_point next_;
    std::mutex mu_;
};

/// One backend query with retries on transient errors. Fatal errors propagate unchanged.
std::string annotate(const std::string& image, const std::string& prompt, Backend& backend, const RetryPolicy& retry,
                     RateLimiter* limiter = nullptr, const FaceRef& ref = {}, int* retries = nullptr);

/// Reply store keyed by (image hash, prompt id, backend id); one JSON file per key.
class ReplyCache {
public:
    explicit ReplyCache(fs::path dir);
    static std::string key(const std::string& image_sha256, int prompt_id, const std::string& backend_id);
    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const std::string& reply);

private:
    fs::path path_for(const std::string& key) const;
    fs::path dir_;
    mutable std::mutex mu_;
};

struct PseudoLabel {
    FaceRef ref;
    std::string raw_reply;
    std::optional<int> label;
    bool confident = false;
    /// 1 or 2; 0 when both prompts were asked.
    int prompt_id = 1;
    std::string backend_id;
    /// Reply to the second prompt when both were asked.
    std::optional<std::string> raw_reply_2;

    nlohmann::json to_json(const LabelSpace& labels = LabelSpace::standard()) const;
    static PseudoLabel from_json(const nlohmann::json& j);
};

enum class PromptMode { First, Second, Both };
PromptMode parse_prompt_mode(const std::string& s);

struct AnnotateOptions {
    PromptMode prompt = PromptMode::First;
    /// Annotate every Nth manifest row (1 = all).
    int sample_every = 1;
    int max_in_flight = 4;
    double requests_per_second = 2.0;
    RetryPolicy retry;
};

struct AnnotationSummary {
    int confident = 0;
    int ambiguous = 0;
    int failed = 0;
    int backend_calls = 0;
    int cache_hits = 0;
    std::vector<FaceRef> failed_refs;
};

/// Labels the faces listed in a face manifest (JSON lines with video_id, frame_index and an image
/// path relative to the manifest). Writes confident and ambiguous labels to `out` in manifest order;
/// faces whose queries failed are left out and listed in the summary. Fatal backend errors abort.
AnnotationSummary pseudo_label_dataset(const fs::path& manifest, Backend& backend, ReplyCache& cache,
                                       const fs::path& out, const AnnotateOptions& opts,
                                       const LabelSpace& labels = LabelSpace::standard());

std::vector<PseudoLabel> read_pseudo_labels(const fs::path& path);

}  // namespace cer::vlm
