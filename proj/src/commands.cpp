#include "cer/commands.hpp"

#include "cer/ensemble.hpp"
#include "cer/face/pipeline.hpp"
#include "cer/synthetic.hpp"
#include "cer/train/trainer.hpp"
#include "cer/util/io.hpp"
#include "cer/vlm/annotator.hpp"
#include "cer/vlm/backend.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <iostream>
#include <set>
#include <sstream>

namespace cer::commands {

using nlohmann::json;

namespace {

bool is_video(const fs::path& p) {
    static const std::set<std::string> exts = {".mp4", ".avi", ".mov", ".mkv", ".webm", ".mpg", ".mpeg", ".m4v", ".wmv"};
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return exts.count(e) > 0;
}

train::TrainConfig load_config(const fs::path& path) {
    return path.empty() ? train::TrainConfig{} : train::TrainConfig::from_file(path);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
        if (!item.empty()) out.push_back(item);
    return out;
}

void print_manifest(const train::RunManifest& m) {
    for (const auto& r : m.models) {
        if (r.ok)
            std::cout << r.model << " " << m.stage << ": best macro-F1 " << r.history.best_macro_f1 << " at epoch "
                      << r.history.best_epoch << "\n";
        else
            std::cout << r.model << " " << m.stage << ": FAILED (" << r.error << ")\n";
    }
}

train::Split ground_truth_split(const fs::path& data, const std::string& layout, const train::TrainConfig& cfg) {
    train::LoadReport report;
    const auto ds = train::load_ground_truth(data, train::parse_layout(layout), cfg.label_space(), &report);
    for (const auto& [id, n] : report.dropped) spdlog::info("dropped {} records of source class {}", n, id);
    return train::stratified_split(ds, cfg.val_fraction, util::derive_seed(cfg.seed, "split"));
}

}  // namespace

int extract(const ExtractArgs& a) {
    std::vector<fs::path> videos;
    if (fs::is_directory(a.video)) {
        for (const auto& e : fs::directory_iterator(a.video))
            if (e.is_regular_file() && is_video(e.path())) videos.push_back(e.path());
        std::sort(videos.begin(), videos.end());
        if (videos.empty()) throw std::runtime_error("no video files in " + a.video.string());
    } else {
        videos.push_back(a.video);
    }
    int failures = 0;
    for (const auto& v : videos) {
        try {
            const auto frames = face::extract_frames(v, a.out);
            std::cout << v.filename().string() << ": " << frames.size() << " frames\n";
        } catch (const std::exception& e) {
            if (videos.size() == 1) throw;
            spdlog::error("{}", e.what());
            ++failures;
        }
    }
    return failures ? 1 : 0;
}

int faces(const FacesArgs& a) {
    const auto cfg = load_config(a.config);
    auto detector = face::make_detector(a.detector);
    const auto summaries = face::process_frames(a.frames, *detector, a.out, cfg.align);
    int failures = 0, total = 0;
    for (const auto& s : summaries) {
        if (!s.error.empty()) {
            std::cout << s.video_id << ": ERROR " << s.error << "\n";
            ++failures;
            continue;
        }
        total += s.frames;
        std::cout << s.video_id << ": " << s.frames << " faces (" << s.copied << " filled from neighbours, "
                  << s.landmark_aligned << " landmark-aligned, " << s.warnings << " warnings)\n";
    }
    std::cout << total << " faces written to " << (a.out / "manifest.jsonl").string() << "\n";
    return failures ? 1 : 0;
}

int annotate(const AnnotateArgs& a) {
    std::unique_ptr<vlm::Backend> backend;
    if (a.backend == "mock") {
        if (a.mock_script.empty()) throw std::invalid_argument("the mock backend needs --mock-script");
        backend = vlm::MockBackend::from_file(a.mock_script);
    } else if (a.backend == "http") {
        vlm::HttpBackendConfig hc;
        if (a.model.empty()) throw std::invalid_argument("the http backend needs --model");
        hc.model = a.model;
        if (!a.base_url.empty()) hc.base_url = a.base_url;
        hc.api_key_env = a.api_key_env;
        backend = std::make_unique<vlm::HttpBackend>(hc);
    } else {
        throw std::invalid_argument("unknown backend '" + a.backend + "' (valid: mock, http)");
    }
    vlm::AnnotateOptions opts;
    opts.prompt = vlm::parse_prompt_mode(a.prompt);
    opts.sample_every = a.sample_every;
    opts.max_in_flight = a.max_in_flight;
    opts.requests_per_second = a.requests_per_second;
    opts.retry.max_attempts = a.max_attempts;
    vlm::ReplyCache cache(a.cache.empty() ? a.out.parent_path() / "vlm_cache" : a.cache);
    const auto s = vlm::pseudo_label_dataset(a.manifest, *backend, cache, a.out, opts);
    std::cout << s.confident << " confident, " << s.ambiguous << " ambiguous, " << s.failed << " failed ("
              << s.backend_calls << " backend calls, " << s.cache_hits << " cache hits)\n";
    if (s.failed) {
        std::cout << "failed faces:";
        for (const auto& r : s.failed_refs) std::cout << " " << r.str();
        std::cout << "\n";
        return 1;
    }
    return 0;
}

int train(const TrainArgs& a) {
    auto cfg = load_config(a.config);
    if (a.models != "all") cfg.models = split_list(a.models);
    cfg.validate();
    const auto split = ground_truth_split(a.data, a.layout, cfg);
    std::cout << split.train.size() << " training / " << split.val.size() << " validation records\n";
    fs::create_directories(a.out);
    util::write_file_atomic(a.out / "data.json",
                            json{{"data", fs::absolute(a.data).lexically_normal().string()}, {"layout", a.layout}}.dump(2));
    const auto m = train::train_all(split.train, split.val, cfg, a.out);
    print_manifest(m);
    return m.all_ok() ? 0 : 1;
}

int finetune(const FinetuneArgs& a) {
    const auto cfg = load_config(a.config.empty() ? a.from / "config.json" : a.config);
    fs::path data = a.data;
    std::string layout = a.layout;
    if (data.empty() || layout.empty()) {
        const json stored = json::parse(util::read_file(a.from / "data.json"));
        if (data.empty()) data = stored.at("data").get<std::string>();
        if (layout.empty()) layout = stored.at("layout").get<std::string>();
    }
    const auto val = ground_truth_split(data, layout, cfg).val;
    const auto pseudo = train::load_pseudo(a.pseudo, a.faces, cfg.label_space());
    std::cout << pseudo.size() << " pseudo-labeled faces / " << val.size() << " validation records\n";
    const auto m = train::finetune(pseudo, val, a.from, cfg, a.out);
    print_manifest(m);
    return m.all_ok() ? 0 : 1;
}

int predict(const PredictArgs& a) {
    const auto paths = ensemble::find_checkpoints(a.models);
    if (paths.size() != std::size_t(kEnsembleSize))
        throw std::invalid_argument("ensemble requires exactly 5 models (found " + std::to_string(paths.size()) + " in " +
                                    a.models.string() + ")");
    std::vector<std::unique_ptr<ensemble::Member>> members;
    for (const auto& p : paths) members.push_back(ensemble::load_member(p));
    ensemble::PredictOptions opts;
    opts.batch_size = a.batch_size;
    opts.dump_probs = a.dump_probs;
    const auto faces_dir = a.faces.empty() ? a.manifest.parent_path() : a.faces;
    const auto preds = ensemble::predict(ensemble::read_face_manifest(a.manifest, faces_dir), members, a.out, opts);
    const auto ties = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.vote.tie_broken; });
    std::cout << preds.size() << " predictions (" << ties << " tie-broken) written to " << a.out.string() << "\n";
    return 0;
}

int evaluate(const EvaluateArgs& a) {
    const auto report = ensemble::evaluate(a.pred, a.truth);
    std::cout << report.to_text();
    if (!a.json_out.empty()) util::write_file_atomic(a.json_out, report.to_json().dump(2));
    return 0;
}

int synth(const SynthArgs& a) {
    if (a.kind == "labeled") {
        synthetic::write_labeled(a.out, a.per_class, a.size, a.seed);
        std::cout << a.per_class * kNumClasses << " images written to " << a.out.string() << "\n";
    } else if (a.kind == "videos") {
        const auto set = synthetic::write_videos(a.out, a.videos, a.frames, a.size, a.seed);
        std::cout << "frames in " << set.frames_dir.string() << ", truth in " << set.truth_csv.string() << "\n";
    } else if (a.kind == "mock-script") {
        const int n = synthetic::write_mock_script(a.manifest, a.truth, a.out);
        std::cout << n << " replies scripted in " << a.out.string() << "\n";
    } else {
        throw std::invalid_argument("unknown synth kind '" + a.kind + "' (valid: labeled, videos, mock-script)");
    }
    return 0;
}

}  // namespace cer::commands
