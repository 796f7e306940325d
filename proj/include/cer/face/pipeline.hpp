#pragma once

#include "cer/face/types.hpp"

#include <json.hpp>
#include <opencv2/core.hpp>

#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cer::face {

namespace fs = std::filesystem;

/// A decoded frame together with where it came from.
struct Frame {
    std::string video_id;
    int frame_index = 0;
    cv::Mat image;
    fs::path path;
};

/// Detector backend failure. Distinct from finding no face, which is an empty result.
class DetectorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FaceDetector {
public:
    virtual ~FaceDetector() = default;
    virtual std::string name() const = 0;
    /// Raw detections; may extend past the frame. Throws DetectorError on backend failure.
    virtual FrameFaces detect(const Frame& frame) = 0;
};

/// Reads detections from a JSON file next to each frame (`<frame stem>.json`):
///   {"boxes": [{"x1":..,"y1":..,"x2":..,"y2":..,"score":..,"landmarks":[[x,y] x5]}]}
/// A missing sidecar is reported as a detector failure.
class SidecarDetector final : public FaceDetector {
public:
    std::string name() const override { return "sidecar"; }
    FrameFaces detect(const Frame& frame) override;
};

/// OpenCV's YuNet face detector (box + five landmarks) loaded from a user-supplied ONNX file.
class YuNetDetector final : public FaceDetector {
public:
    explicit YuNetDetector(fs::path model, float score_threshold = 0.6f);
    ~YuNetDetector() override;
    std::string name() const override { return "yunet"; }
    FrameFaces detect(const Frame& frame) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// "sidecar", or "yunet" (model path taken from CER_YUNET_MODEL).
std::unique_ptr<FaceDetector> make_detector(const std::string& name);

/// Runs the detector and normalizes its output: boxes clamped to the frame, degenerate boxes
/// dropped, landmark count validated.
FrameFaces detect_faces(const Frame& frame, FaceDetector& detector);

struct AlignConfig {
    int crop_size = 224;
    /// Fractional expansion per side for box crops.
    double margin = 0.15;
    /// Canonical landmark positions as fractions of the crop size (same order as Landmarks).
    Eigen::Matrix<double, 2, 5> template_fractions = default_template();

    static Eigen::Matrix<double, 2, 5> default_template() {
        Eigen::Matrix<double, 2, 5> t;
        t << 0.35, 0.65, 0.50, 0.37, 0.63,  //
            0.40, 0.40, 0.58, 0.76, 0.76;
        return t;
    }
    Landmarks template_points() const { return (template_fractions * crop_size).cast<float>(); }
    nlohmann::json to_json() const;
};

struct AlignResult {
    cv::Mat image;
    bool used_landmarks = false;
    /// Set when landmarks were supplied but could not be used.
    std::string warning;
};

/// Warps the face onto the landmark template when landmarks are usable, otherwise crops the
/// margin-expanded box. Output is crop_size x crop_size, 3-channel 8-bit.
AlignResult crop_align(const cv::Mat& frame, const BoundingBox& box, const Landmarks* landmarks,
                       const AlignConfig& cfg);

/// Decodes every frame of a video to `{output_dir}/{video_id}_{frame_index:06d}.png`,
/// video_id being the file stem. Returns the written paths in frame order.
std::vector<fs::path> extract_frames(const fs::path& video_path, const fs::path& output_dir);

/// A frame file on disk, before decoding.
struct FrameRef {
    std::string video_id;
    int frame_index = 0;
    fs::path path;
};

/// Finds frames either as `{video_id}_{frame_index:06d}.<ext>` files directly inside `dir`, or as
/// `{video_id}/{frame_index}.<ext>` one level down. Grouped by video, sorted by frame index.
std::vector<std::vector<FrameRef>> list_frames(const fs::path& dir);

/// Manifest row for one face record.
nlohmann::json manifest_row(const FaceRecord& rec);
fs::path face_image_relpath(const std::string& video_id, int frame_index);

struct VideoSummary {
    std::string video_id;
    int frames = 0;
    int copied = 0;
    int landmark_aligned = 0;
    int warnings = 0;
    /// Nonempty when the video could not be processed.
    std::string error;
};

/// Detects every frame of one video, then resolves one face per frame and writes
/// `{out}/{video_id}/{frame_index:06d}.png` and `{out}/{video_id}/manifest.jsonl`.
/// Returns the face records in frame order (images included).
std::vector<FaceRecord> process_video(const std::vector<FrameRef>& frames, FaceDetector& detector,
                                      const fs::path& out_dir, const AlignConfig& cfg,
                                      VideoSummary* summary = nullptr);

/// Runs process_video for every video under `frames_dir` and writes a combined
/// `{out}/manifest.jsonl` in (video_id, frame_index) order.
std::vector<VideoSummary> process_frames(const fs::path& frames_dir, FaceDetector& detector,
                                         const fs::path& out_dir, const AlignConfig& cfg);

}  // namespace cer::face
