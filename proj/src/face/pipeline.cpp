#include "cer/face/pipeline.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/objdetect.hpp>
#include <opencv2/videoio.hpp>
#include <opencv2/videoio/registry.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <regex>
#include <set>

namespace cer::face {

using nlohmann::json;

namespace {

std::string frame_name(const std::string& video_id, int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", index);
    return video_id + "_" + buf;
}

cv::Mat load_frame(const fs::path& p) {
    cv::Mat img = cv::imread(p.string(), cv::IMREAD_COLOR);
    if (img.empty()) throw std::runtime_error("cannot read frame image: " + p.string());
    return img;
}

cv::Mat as_bgr8(const cv::Mat& m) {
    cv::Mat out;
    if (m.channels() == 1)
        cv::cvtColor(m, out, cv::COLOR_GRAY2BGR);
    else if (m.channels() == 4)
        cv::cvtColor(m, out, cv::COLOR_BGRA2BGR);
    else
        out = m;
    if (out.depth() != CV_8U) out.convertTo(out, CV_8U);
    return out;
}

void write_png(const fs::path& p, const cv::Mat& img) {
    fs::create_directories(p.parent_path());
    if (!cv::imwrite(p.string(), img)) throw std::runtime_error("cannot write image: " + p.string());
}

bool is_image_ext(std::string ext) {
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

}  // namespace

FrameFaces SidecarDetector::detect(const Frame& frame) {
    if (frame.path.empty()) throw DetectorError("sidecar detector needs the frame path");
    auto sidecar = frame.path;
    sidecar.replace_extension(".json");
    std::ifstream in(sidecar);
    if (!in) throw DetectorError("missing detection sidecar: " + sidecar.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DetectorError("malformed detection sidecar " + sidecar.string() + ": " + e.what());
    }
    FrameFaces out{frame.video_id, frame.frame_index, {}, {}};
    const auto& boxes = doc.at("boxes");
    bool any_lm = false, all_lm = true;
    for (const auto& b : boxes) {
        out.boxes.push_back({b.at("x1").get<float>(), b.at("y1").get<float>(), b.at("x2").get<float>(),
                             b.at("y2").get<float>(), b.value("score", 1.0f)});
        const bool has = b.contains("landmarks") && !b["landmarks"].is_null();
        any_lm = any_lm || has;
        all_lm = all_lm && has;
        if (!has) continue;
        const auto& pts = b["landmarks"];
        if (pts.size() != 5) throw std::invalid_argument("landmarks must have exactly 5 points per box");
        Landmarks lm;
        for (int k = 0; k < 5; ++k) {
            lm(0, k) = pts[k].at(0).get<float>();
            lm(1, k) = pts[k].at(1).get<float>();
        }
        out.landmarks.push_back(lm);
    }
    if (any_lm && !all_lm) throw std::invalid_argument("landmarks must be given for every box or none");
    return out;
}

struct YuNetDetector::Impl {
    cv::Ptr<cv::FaceDetectorYN> net;
};

YuNetDetector::YuNetDetector(fs::path model, float score_threshold) : impl_(std::make_unique<Impl>()) {
    if (!fs::exists(model)) throw std::invalid_argument("face detector model not found: " + model.string());
    impl_->net = cv::FaceDetectorYN::create(model.string(), "", cv::Size(320, 320), score_threshold);
}

YuNetDetector::~YuNetDetector() = default;

FrameFaces YuNetDetector::detect(const Frame& frame) {
    FrameFaces out{frame.video_id, frame.frame_index, {}, {}};
    cv::Mat faces;
    try {
        impl_->net->setInputSize(frame.image.size());
        impl_->net->detect(as_bgr8(frame.image), faces);
    } catch (const cv::Exception& e) {
        throw DetectorError(std::string("face detector failed: ") + e.what());
    }
    for (int r = 0; r < faces.rows; ++r) {
        const float* f = faces.ptr<float>(r);
        out.boxes.push_back({f[0], f[1], f[0] + f[2], f[1] + f[3], f[14]});
        Landmarks lm;
        for (int k = 0; k < 5; ++k) {
            lm(0, k) = f[4 + 2 * k];
            lm(1, k) = f[5 + 2 * k];
        }
        out.landmarks.push_back(lm);
    }
    return out;
}

std::unique_ptr<FaceDetector> make_detector(const std::string& name) {
    if (name == "sidecar") return std::make_unique<SidecarDetector>();
    if (name == "yunet") {
        const char* model = std::getenv("CER_YUNET_MODEL");
        if (!model || !*model) throw std::invalid_argument("yunet detector needs CER_YUNET_MODEL set to the ONNX model path");
        return std::make_unique<YuNetDetector>(model);
    }
    throw std::invalid_argument("unknown detector '" + name + "' (valid: sidecar, yunet)");
}

FrameFaces detect_faces(const Frame& frame, FaceDetector& detector) {
    FrameFaces raw = detector.detect(frame);
    if (raw.has_landmarks() && raw.landmarks.size() != raw.boxes.size())
        throw std::invalid_argument("landmarks must have exactly 5 points per box");
    FrameFaces out{frame.video_id, frame.frame_index, {}, {}};
    for (std::size_t i = 0; i < raw.boxes.size(); ++i) {
        const auto b = raw.boxes[i].clamped(frame.image.cols, frame.image.rows);
        if (!b.valid()) continue;
        out.boxes.push_back(b);
        if (raw.has_landmarks()) out.landmarks.push_back(raw.landmarks[i]);
    }
    return out;
}

json AlignConfig::to_json() const {
    json pts = json::array();
    for (int k = 0; k < 5; ++k) pts.push_back({template_fractions(0, k), template_fractions(1, k)});
    return {{"crop_size", crop_size}, {"margin", margin}, {"template", pts}};
}

namespace {

cv::Mat box_crop(const cv::Mat& frame, const BoundingBox& box, const AlignConfig& cfg) {
    const double mx = cfg.margin * box.width(), my = cfg.margin * box.height();
    const int x1 = int(std::floor(box.x1 - mx)), y1 = int(std::floor(box.y1 - my));
    const int x2 = int(std::ceil(box.x2 + mx)), y2 = int(std::ceil(box.y2 + my));
    const cv::Rect want(x1, y1, std::max(1, x2 - x1), std::max(1, y2 - y1));
    const cv::Rect inside = want & cv::Rect(0, 0, frame.cols, frame.rows);
    cv::Mat region;
    if (inside.area() == 0) {
        region = cv::Mat::zeros(want.size(), CV_8UC3);
    } else {
        cv::copyMakeBorder(frame(inside), region, inside.y - want.y, want.br().y - inside.br().y,
                           inside.x - want.x, want.br().x - inside.br().x, cv::BORDER_CONSTANT, cv::Scalar::all(0));
    }
    cv::Mat out;
    cv::resize(region, out, cv::Size(cfg.crop_size, cfg.crop_size), 0, 0, cv::INTER_LINEAR);
    return out;
}

bool degenerate(const Landmarks& lm) {
    const Eigen::Matrix<double, 2, 5> p = lm.cast<double>();
    const Eigen::Matrix<double, 2, 5> c = p.colwise() - p.rowwise().mean();
    const Eigen::Vector2d s = Eigen::JacobiSVD<Eigen::Matrix<double, 2, 5>>(c).singularValues();
    return !(s(0) > 1e-9) || s(1) / s(0) < 1e-3;
}

}  // namespace

AlignResult crop_align(const cv::Mat& frame_in, const BoundingBox& box, const Landmarks* landmarks,
                       const AlignConfig& cfg) {
    if (cfg.crop_size <= 0) throw std::invalid_argument("crop size must be positive");
    const cv::Mat frame = as_bgr8(frame_in);
    AlignResult out;
    if (landmarks) {
        if (!landmarks->allFinite() || degenerate(*landmarks)) {
            out.warning = "collinear landmarks; using box crop";
            spdlog::warn("{}", out.warning);
        } else {
            const Eigen::Matrix<double, 2, 5> src = landmarks->cast<double>();
            const Eigen::Matrix<double, 2, 5> dst = cfg.template_fractions * cfg.crop_size;
            const Eigen::Matrix3d t = Eigen::umeyama(src, dst, true);
            cv::Mat m(2, 3, CV_64F);
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 3; ++c) {
                    const double v = t(r, c);
                    m.at<double>(r, c) = std::abs(v - std::round(v)) < 1e-9 ? std::round(v) : v;
                }
            cv::warpAffine(frame, out.image, m, cv::Size(cfg.crop_size, cfg.crop_size), cv::INTER_LINEAR,
                           cv::BORDER_CONSTANT, cv::Scalar::all(0));
            out.used_landmarks = true;
            return out;
        }
    }
    out.image = box_crop(frame, box, cfg);
    return out;
}

std::vector<fs::path> extract_frames(const fs::path& video_path, const fs::path& output_dir) {
    if (!fs::is_regular_file(video_path)) throw std::runtime_error("undecodable video: " + video_path.string() + " (not found)");
    cv::VideoCapture cap;
    try {
        const bool ffmpeg = cv::videoio_registry::hasBackend(cv::CAP_FFMPEG);
        cap.open(video_path.string(), ffmpeg ? cv::CAP_FFMPEG : cv::CAP_ANY);
    } catch (const cv::Exception&) {
    }
    if (!cap.isOpened()) throw std::runtime_error("undecodable video: " + video_path.string());
    const std::string video_id = video_path.stem().string();
    fs::create_directories(output_dir);
    std::vector<fs::path> written;
    cv::Mat img;
    while (cap.read(img) && !img.empty()) {
        const auto p = output_dir / (frame_name(video_id, int(written.size())) + ".png");
        write_png(p, as_bgr8(img));
        written.push_back(p);
    }
    if (written.empty()) throw std::runtime_error("video has zero frames: " + video_path.string());
    return written;
}

std::vector<std::vector<FrameRef>> list_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("frames directory not found: " + dir.string());
    static const std::regex flat(R"((.+)_(\d+))");
    static const std::regex nested(R"((?:.*_)?(\d+))");
    std::map<std::string, std::map<int, fs::path>> videos;
    auto add = [&](const std::string& vid, int idx, const fs::path& p) {
        if (!videos[vid].emplace(idx, p).second)
            throw std::invalid_argument("duplicate frame index " + std::to_string(idx) + " in video " + vid);
    };
    std::vector<fs::directory_entry> entries(fs::directory_iterator(dir), fs::directory_iterator{});
    std::sort(entries.begin(), entries.end());
    for (const auto& e : entries) {
        std::smatch m;
        if (e.is_regular_file() && is_image_ext(e.path().extension().string())) {
            const auto stem = e.path().stem().string();
            if (std::regex_match(stem, m, flat)) add(m[1], std::stoi(m[2]), e.path());
        } else if (e.is_directory()) {
            const auto vid = e.path().filename().string();
            for (const auto& f : fs::directory_iterator(e.path())) {
                if (!f.is_regular_file() || !is_image_ext(f.path().extension().string())) continue;
                const auto stem = f.path().stem().string();
                if (std::regex_match(stem, m, nested)) add(vid, std::stoi(m[1]), f.path());
            }
        }
    }
    std::vector<std::vector<FrameRef>> out;
    for (const auto& [vid, frames] : videos) {
        auto& v = out.emplace_back();
        for (const auto& [idx, p] : frames) v.push_back({vid, idx, p});
    }
    return out;
}

fs::path face_image_relpath(const std::string& video_id, int frame_index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d.png", frame_index);
    return fs::path(video_id) / buf;
}

json manifest_row(const FaceRecord& rec) {
    return {{"video_id", rec.video_id},
            {"frame_index", rec.frame_index},
            {"source_frame", rec.source_frame},
            {"copied", rec.copied},
            {"box", {{"x1", rec.box.x1}, {"y1", rec.box.y1}, {"x2", rec.box.x2}, {"y2", rec.box.y2}, {"score", rec.box.score}}},
            {"used_landmarks", rec.used_landmarks},
            {"image", face_image_relpath(rec.video_id, rec.frame_index).generic_string()}};
}

std::vector<FaceRecord> process_video(const std::vector<FrameRef>& frames, FaceDetector& detector,
                                      const fs::path& out_dir, const AlignConfig& cfg, VideoSummary* summary) {
    if (frames.empty()) throw std::invalid_argument("video has no frames");
    const std::string vid = frames.front().video_id;
    constexpr int kAttempts = 3;

    std::vector<FrameFaces> detections;
    detections.reserve(frames.size());
    for (const auto& ref : frames) {
        const Frame frame{ref.video_id, ref.frame_index, load_frame(ref.path), ref.path};
        for (int attempt = 1;; ++attempt) {
            try {
                detections.push_back(detect_faces(frame, detector));
                break;
            } catch (const DetectorError& e) {
                if (attempt == kAttempts) throw;
                spdlog::warn("detector failed on {} frame {} (attempt {}): {}", vid, ref.frame_index, attempt, e.what());
            }
        }
    }

    const auto plan = plan_video(detections);
    std::map<int, std::size_t> position;
    for (std::size_t i = 0; i < frames.size(); ++i) position[frames[i].frame_index] = i;

    std::map<int, FaceRecord> donors;
    VideoSummary s;
    s.video_id = vid;
    s.frames = int(frames.size());
    for (const auto& p : plan) {
        if (donors.count(p.source_frame)) continue;
        const auto pos = position.at(p.source_frame);
        const auto& det = detections[pos];
        const auto& box = det.boxes[p.box_index];
        const Landmarks* lm = det.has_landmarks() ? &det.landmarks[p.box_index] : nullptr;
        auto aligned = crop_align(load_frame(frames[pos].path), box, lm, cfg);
        if (!aligned.warning.empty()) ++s.warnings;
        donors[p.source_frame] = {vid, p.source_frame, p.source_frame, false, box, aligned.used_landmarks, aligned.image};
    }

    std::vector<FaceRecord> records;
    records.reserve(plan.size());
    std::ofstream manifest;
    const auto video_dir = out_dir / vid;
    fs::create_directories(video_dir);
    manifest.open(video_dir / "manifest.jsonl", std::ios::trunc);
    for (const auto& p : plan) {
        FaceRecord rec = p.copied() ? fill_missing(p.frame_index, donors) : donors.at(p.frame_index);
        write_png(out_dir / face_image_relpath(vid, rec.frame_index), rec.image);
        manifest << manifest_row(rec).dump() << '\n';
        s.copied += rec.copied;
        s.landmark_aligned += rec.used_landmarks;
        records.push_back(std::move(rec));
    }
    if (!manifest) throw std::runtime_error("cannot write manifest in " + video_dir.string());
    if (summary) *summary = s;
    return records;
}

std::vector<VideoSummary> process_frames(const fs::path& frames_dir, FaceDetector& detector,
                                         const fs::path& out_dir, const AlignConfig& cfg) {
    const auto videos = list_frames(frames_dir);
    if (videos.empty()) throw std::runtime_error("no frame images found in " + frames_dir.string());
    std::vector<VideoSummary> summaries;
    std::vector<json> rows;
    for (const auto& frames : videos) {
        VideoSummary s;
        s.video_id = frames.front().video_id;
        s.frames = int(frames.size());
        try {
            for (const auto& rec : process_video(frames, detector, out_dir, cfg, &s)) rows.push_back(manifest_row(rec));
            spdlog::info("{}: {} frames, {} copied, {} landmark-aligned", s.video_id, s.frames, s.copied, s.landmark_aligned);
        } catch (const std::exception& e) {
            s.error = e.what();
            spdlog::error("{}: {}", s.video_id, s.error);
        }
        summaries.push_back(s);
    }
    std::ofstream all(out_dir / "manifest.jsonl", std::ios::trunc);
    for (const auto& r : rows) all << r.dump() << '\n';
    return summaries;
}

}  // namespace cer::face
