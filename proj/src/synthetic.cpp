#include "cer/synthetic.hpp"

#include "cer/labels.hpp"
#include "cer/util/io.hpp"

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace cer::synthetic {

using nlohmann::json;

namespace {

// BGR patch colours, one per class.
const cv::Vec3b kColours[kNumClasses] = {{40, 40, 220}, {40, 200, 40}, {220, 60, 40}, {40, 220, 220},
                                         {220, 40, 220}, {220, 220, 40}, {235, 235, 235}};

void save(const fs::path& p, const cv::Mat& img) {
    fs::create_directories(p.parent_path());
    if (!cv::imwrite(p.string(), img)) throw std::runtime_error("cannot write " + p.string());
}

std::string pad6(int v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%06d", v);
    return buf;
}

}  // namespace

cv::Mat make_image(int label, int size, std::mt19937_64& rng) {
    if (label < 0 || label >= kNumClasses) throw std::out_of_range("label out of range");
    std::uniform_int_distribution<int> grey(60, 120), jitter(-20, 20);
    std::normal_distribution<double> noise(0, 12);
    cv::Mat img(size, size, CV_8UC3);
    const int base = grey(rng);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) img.at<cv::Vec3b>(y, x)[c] = cv::saturate_cast<uchar>(base + noise(rng));
    std::uniform_int_distribution<int> side(size / 2, size * 3 / 4);
    const int w = side(rng), h = side(rng);
    const int x0 = std::uniform_int_distribution<int>(0, size - w)(rng);
    const int y0 = std::uniform_int_distribution<int>(0, size - h)(rng);
    cv::Vec3b colour = kColours[label];
    for (int c = 0; c < 3; ++c) colour[c] = cv::saturate_cast<uchar>(colour[c] + jitter(rng));
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x)
            for (int c = 0; c < 3; ++c) img.at<cv::Vec3b>(y, x)[c] = cv::saturate_cast<uchar>(colour[c] + noise(rng));
    return img;
}

void write_labeled(const fs::path& root, int per_class, int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    char name[16];
    for (int c = 0; c < kNumClasses; ++c)
        for (int i = 0; i < per_class; ++i) {
            std::snprintf(name, sizeof name, "%04d.png", i);
            save(root / std::to_string(c) / name, make_image(c, size, rng));
        }
}

VideoSet write_videos(const fs::path& root, int videos, int frames_per_video, int face_size, std::uint64_t seed,
                      int empty_every, int crowd_every) {
    std::mt19937_64 rng(seed);
    VideoSet set{root / "frames", root / "truth.csv"};
    fs::create_directories(set.frames_dir);
    std::ofstream truth(set.truth_csv);
    truth << "video_id,frame_index,label_index\n";
    const int frame_size = face_size * 2;
    std::uniform_int_distribution<int> offset(0, frame_size - face_size);
    for (int v = 0; v < videos; ++v) {
        const std::string vid = "video" + std::to_string(v);
        const int label = v % kNumClasses;
        for (int f = 0; f < frames_per_video; ++f) {
            cv::Mat frame(frame_size, frame_size, CV_8UC3, cv::Scalar::all(90));
            const int x = offset(rng), y = offset(rng);
            make_image(label, face_size, rng).copyTo(frame(cv::Rect(x, y, face_size, face_size)));
            json boxes = json::array();
            const bool empty = empty_every > 0 && f % empty_every == empty_every - 1;
            if (!empty) {
                boxes.push_back({{"x1", x}, {"y1", y}, {"x2", x + face_size}, {"y2", y + face_size}, {"score", 0.99}});
                if (crowd_every > 0 && f % crowd_every == 0) {
                    const int s = face_size / 3;
                    boxes.push_back({{"x1", 0}, {"y1", 0}, {"x2", s}, {"y2", s}, {"score", 0.8}});
                }
            }
            const auto stem = set.frames_dir / (vid + "_" + pad6(f));
            save(fs::path(stem.string() + ".png"), frame);
            std::ofstream(stem.string() + ".json") << json{{"boxes", boxes}}.dump();
            truth << vid << ',' << f << ',' << label << '\n';
        }
    }
    return set;
}

int write_mock_script(const fs::path& faces_manifest, const fs::path& truth_csv, const fs::path& out, int ambiguous_every) {
    std::map<std::pair<std::string, int>, int> truth;
    {
        std::ifstream in(truth_csv);
        if (!in) throw std::runtime_error("cannot open " + truth_csv.string());
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            std::stringstream ss(line);
            std::string vid, frame, label;
            std::getline(ss, vid, ',');
            std::getline(ss, frame, ',');
            std::getline(ss, label, ',');
            truth[{vid, std::stoi(frame)}] = std::stoi(label);
        }
    }
    const auto& names = LabelSpace::standard();
    json replies = json::object();
    std::ifstream in(faces_manifest);
    if (!in) throw std::runtime_error("cannot open " + faces_manifest.string());
    int n = 0;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const json row = json::parse(line);
        const int label = truth.at({row.at("video_id").get<std::string>(), row.at("frame_index").get<int>()});
        const auto hash = util::sha256_file(faces_manifest.parent_path() / row.at("image").get<std::string>());
        const bool ambiguous = ambiguous_every > 0 && n % ambiguous_every == ambiguous_every - 1;
        replies[hash] = ambiguous ? "Either " + names.name(label) + " or " + names.name((label + 1) % kNumClasses)
                                  : "The expression in the image is " + names.name(label) + ".";
        ++n;
    }
    util::write_file_atomic(out, json{{"id", "mock"}, {"default", "I cannot tell."}, {"replies", replies}}.dump(2));
    return n;
}

}  // namespace cer::synthetic
