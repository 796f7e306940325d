#include "cer/vlm/annotator.hpp"

#include "cer/util/io.hpp"
#include "cer/vlm/prompt.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

namespace cer::vlm {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

RateLimiter::RateLimiter(double per_second)
    : interval_(per_second > 0 ? std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / per_second))
                               : Clock::duration::zero()),
      next_(Clock::now()) {}

void RateLimiter::acquire() {
    if (interval_ == Clock::duration::zero()) return;
    Clock::time_point slot;
    {
        std::lock_guard lock(mu_);
        slot = std::max(next_, Clock::now());
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

std::string annotate(const std::string& image, const std::string& prompt, Backend& backend, const RetryPolicy& retry,
                     RateLimiter* limiter, const FaceRef& ref, int* retries) {
    const int attempts = std::max(1, retry.max_attempts);
    for (int attempt = 1;; ++attempt) {
        if (limiter) limiter->acquire();
        try {
            auto reply = backend.query(image, prompt);
            if (retries) *retries = attempt - 1;
            if (attempt > 1) spdlog::info("{}: succeeded after {} retries", ref.str(), attempt - 1);
            return reply;
        } catch (const BackendError& e) {
            if (!e.transient()) throw;
            if (attempt == attempts) throw RetriesExhausted(ref, attempts, e.what());
            const double delay = std::min(retry.max_delay_s, retry.base_delay_s * std::pow(2.0, attempt - 1));
            spdlog::warn("{}: attempt {} failed ({}), retrying in {:.3f}s", ref.str(), attempt, e.what(), delay);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
    }
}

ReplyCache::ReplyCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

std::string ReplyCache::key(const std::string& image_sha256, int prompt_id, const std::string& backend_id) {
    return image_sha256 + "_p" + std::to_string(prompt_id) + "_" + util::sha256_hex(backend_id).substr(0, 16);
}

fs::path ReplyCache::path_for(const std::string& key) const { return dir_ / key.substr(0, 2) / (key + ".json"); }

std::optional<std::string> ReplyCache::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    const auto p = path_for(key);
    if (!fs::exists(p)) return std::nullopt;
    try {
        return json::parse(util::read_file(p)).at("reply").get<std::string>();
    } catch (const std::exception& e) {
        spdlog::warn("ignoring unreadable cache entry {}: {}", p.string(), e.what());
        return std::nullopt;
    }
}

void ReplyCache::put(const std::string& key, const std::string& reply) {
    std::lock_guard lock(mu_);
    util::write_file_atomic(path_for(key), json{{"key", key}, {"reply", reply}}.dump());
}

json PseudoLabel::to_json(const LabelSpace& labels) const {
    json j = {{"video_id", ref.video_id},
              {"frame_index", ref.frame_index},
              {"label", label ? json(labels.name(*label)) : json(nullptr)},
              {"label_index", label ? json(*label) : json(nullptr)},
              {"confident", confident},
              {"prompt_id", prompt_id},
              {"backend_id", backend_id},
              {"raw_reply", raw_reply}};
    if (raw_reply_2) j["raw_reply_2"] = *raw_reply_2;
    return j;
}

PseudoLabel PseudoLabel::from_json(const json& j) {
    PseudoLabel p;
    p.ref = {j.at("video_id").get<std::string>(), j.at("frame_index").get<int>()};
    p.raw_reply = j.value("raw_reply", "");
    if (!j.at("label_index").is_null()) p.label = j["label_index"].get<int>();
    p.confident = j.at("confident").get<bool>();
    p.prompt_id = j.value("prompt_id", 1);
    p.backend_id = j.value("backend_id", "");
    if (j.contains("raw_reply_2")) p.raw_reply_2 = j["raw_reply_2"].get<std::string>();
    if (!p.label && p.confident) throw std::invalid_argument("pseudo-label without a label cannot be confident");
    return p;
}

PromptMode parse_prompt_mode(const std::string& s) {
    if (s == "1") return PromptMode::First;
    if (s == "2") return PromptMode::Second;
    if (s == "both") return PromptMode::Both;
    throw std::invalid_argument("prompt must be 1, 2 or both");
}

namespace {

struct Job {
    FaceRef ref;
    fs::path image;
};

std::vector<Job> read_manifest(const fs::path& manifest, int sample_every) {
    std::ifstream in(manifest);
    if (!in) throw std::runtime_error("cannot open manifest " + manifest.string());
    std::vector<Job> jobs;
    int row = 0;
    for (std::string line; std::getline(in, line);) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (row++ % sample_every != 0) continue;
        const json j = json::parse(line);
        jobs.push_back({{j.at("video_id").get<std::string>(), j.at("frame_index").get<int>()},
                        manifest.parent_path() / j.at("image").get<std::string>()});
    }
    return jobs;
}

}  // namespace

AnnotationSummary pseudo_label_dataset(const fs::path& manifest, Backend& backend, ReplyCache& cache,
                                       const fs::path& out, const AnnotateOptions& opts, const LabelSpace& labels) {
    if (opts.sample_every < 1) throw std::invalid_argument("sample_every must be at least 1");
    const auto jobs = read_manifest(manifest, opts.sample_every);
    std::vector<int> prompt_ids;
    if (opts.prompt != PromptMode::Second) prompt_ids.push_back(1);
    if (opts.prompt != PromptMode::First) prompt_ids.push_back(2);
    const std::string backend_id = backend.id();

    RateLimiter limiter(opts.requests_per_second);
    std::vector<std::optional<PseudoLabel>> results(jobs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<int> calls{0}, hits{0};
    std::atomic<bool> abort{false};
    std::exception_ptr fatal;
    std::mutex fatal_mu;

    auto work = [&] {
        for (std::size_t i; !abort && (i = next++) < jobs.size();) {
            const auto& job = jobs[i];
            try {
                const std::string image = util::read_file(job.image);
                const std::string hash = util::sha256_hex(image);
                std::vector<std::string> replies;
                for (int pid : prompt_ids) {
                    const auto key = ReplyCache::key(hash, pid, backend_id);
                    if (auto cached = cache.get(key)) {
                        ++hits;
                        replies.push_back(*cached);
                        continue;
                    }
                    ++calls;
                    replies.push_back(annotate(image, build_prompt(pid), backend, opts.retry, &limiter, job.ref));
                    cache.put(key, replies.back());
                }
                PseudoLabel p;
                p.ref = job.ref;
                p.backend_id = backend_id;
                p.raw_reply = replies[0];
                auto first = extract_label(replies[0], labels);
                if (replies.size() == 2) {
                    p.prompt_id = 0;
                    p.raw_reply_2 = replies[1];
                    const auto second = extract_label(replies[1], labels);
                    if (!(first.confident && second.confident && first.label == second.label)) first = {};
                } else {
                    p.prompt_id = prompt_ids[0];
                }
                p.label = first.label;
                p.confident = first.confident;
                results[i] = std::move(p);
            } catch (const RetriesExhausted& e) {
                spdlog::error("{}", e.what());
            } catch (...) {
                std::lock_guard lock(fatal_mu);
                if (!fatal) fatal = std::current_exception();
                abort = true;
            }
        }
    };
    const int workers = std::clamp(opts.max_in_flight, 1, int(std::max<std::size_t>(jobs.size(), 1)));
    std::vector<std::thread> pool;
    for (int t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (fatal) std::rethrow_exception(fatal);

    AnnotationSummary summary;
    summary.backend_calls = calls;
    summary.cache_hits = hits;
    std::string body;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (!results[i]) {
            ++summary.failed;
            summary.failed_refs.push_back(jobs[i].ref);
            continue;
        }
        (results[i]->confident ? summary.confident : summary.ambiguous)++;
        body += results[i]->to_json(labels).dump() + "\n";
    }
    util::write_file_atomic(out, body);
    spdlog::info("annotated {} faces: {} confident, {} ambiguous, {} failed ({} backend calls, {} cache hits)",
                 jobs.size(), summary.confident, summary.ambiguous, summary.failed, summary.backend_calls,
                 summary.cache_hits);
    return summary;
}

std::vector<PseudoLabel> read_pseudo_labels(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pseudo-labels " + path.string());
    std::vector<PseudoLabel> out;
    for (std::string line; std::getline(in, line);)
        if (line.find_first_not_of(" \t\r") != std::string::npos) out.push_back(PseudoLabel::from_json(json::parse(line)));
    return out;
}

}  // namespace cer::vlm
