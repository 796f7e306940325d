#include "cer/vlm/backend.hpp"

#include "cer/util/io.hpp"
#include "cer/vlm/prompt.hpp"

#include <json.hpp>

namespace cer::vlm {

using nlohmann::json;

MockBackend::MockBackend(std::string id, std::string fallback) : id_(std::move(id)), fallback_(std::move(fallback)) {}

std::unique_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& script) {
    const json doc = json::parse(util::read_file(script));
    auto mock = std::make_unique<MockBackend>(doc.value("id", "mock"), doc.value("default", "I am not sure."));
    const json replies = doc.value("replies", json::object());
    for (const auto& [hash, reply] : replies.items()) {
        if (reply.is_string()) {
            mock->script(hash, reply.get<std::string>());
            continue;
        }
        for (const auto& [variant, text] : reply.items())
            mock->script(hash, build_prompt(std::stoi(variant)), text.get<std::string>());
    }
    return mock;
}

void MockBackend::script(const std::string& image_sha256, const std::string& reply) {
    std::lock_guard lock(mu_);
    replies_[image_sha256] = reply;
}

void MockBackend::script(const std::string& image_sha256, const std::string& prompt, const std::string& reply) {
    std::lock_guard lock(mu_);
    prompt_replies_[{image_sha256, prompt}] = reply;
}

void MockBackend::fail_next(std::deque<int> statuses) {
    std::lock_guard lock(mu_);
    failures_ = std::move(statuses);
}

std::string MockBackend::query(const std::string& image, const std::string& prompt) {
    ++calls_;
    const auto hash = util::sha256_hex(image);
    std::lock_guard lock(mu_);
    if (!failures_.empty()) {
        const int status = failures_.front();
        failures_.pop_front();
        throw status_error(status, "scripted failure");
    }
    if (auto it = prompt_replies_.find({hash, prompt}); it != prompt_replies_.end()) return it->second;
    if (auto it = replies_.find(hash); it != replies_.end()) return it->second;
    return fallback_;
}

BackendError status_error(int status, const std::string& body) {
    const std::string what = "backend returned HTTP " + std::to_string(status) + ": " + body.substr(0, 200);
    const bool transient = status == 0 || status == 408 || status == 429 || status == 529 || status >= 500;
    return BackendError(what, transient, status);
}

std::string image_media_type(const std::string& bytes) {
    if (bytes.size() >= 8 && bytes.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0) return "image/png";
    if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF && static_cast<unsigned char>(bytes[1]) == 0xD8)
        return "image/jpeg";
    throw std::invalid_argument("image must be PNG or JPEG");
}

}  // namespace cer::vlm
