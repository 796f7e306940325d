#include <httplib.h>

#include "cer/util/io.hpp"
#include "cer/vlm/backend.hpp"

#include <json.hpp>

#include <cstdlib>

namespace cer::vlm {

using nlohmann::json;

HttpBackend::HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.model.empty()) throw BackendError("http backend needs a model name", false);
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (!key || !*key) throw BackendError("environment variable " + cfg_.api_key_env + " is not set", false);
    api_key_ = key;
}

std::string HttpBackend::query(const std::string& image, const std::string& prompt) {
    const json body = {
        {"model", cfg_.model},
        {"max_tokens", cfg_.max_tokens},
        {"messages",
         {{{"role", "user"},
           {"content",
            {{{"type", "image"},
              {"source", {{"type", "base64"}, {"media_type", image_media_type(image)}, {"data", util::base64_encode(image)}}}},
             {{"type", "text"}, {"text", prompt}}}}}}}};

    httplib::Client client(cfg_.base_url);
    const auto secs = static_cast<time_t>(cfg_.timeout_s);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);
    client.set_write_timeout(secs, 0);
    const httplib::Headers headers{{"x-api-key", api_key_}, {"anthropic-version", cfg_.api_version}};
    auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
    if (!res) throw BackendError("request to " + cfg_.base_url + " failed: " + httplib::to_string(res.error()), true);
    if (res->status != 200) throw status_error(res->status, res->body);

    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::exception&) {
        throw BackendError("backend reply is not JSON", true, res->status);
    }
    std::string text;
    for (const auto& block : reply.value("content", json::array()))
        if (block.value("type", "") == "text") text += block.value("text", "");
    return text;
}

}  // namespace cer::vlm
