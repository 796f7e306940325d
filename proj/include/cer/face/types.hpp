#pragma once

#include <Eigen/Core>
#include <opencv2/core.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cer::face {

struct BoundingBox {
    float x1 = 0, y1 = 0, x2 = 0, y2 = 0;
    float score = 1;

    float width() const { return x2 - x1; }
    float height() const { return y2 - y1; }
    double area() const { return double(x2 - x1) * double(y2 - y1); }
    bool valid() const { return x2 > x1 && y2 > y1; }

    /// Clamps to [0, frame_w] x [0, frame_h].
    BoundingBox clamped(int frame_w, int frame_h) const;

    bool operator==(const BoundingBox&) const = default;
};

/// Five facial landmarks as columns: left eye, right eye, nose, left and right mouth corners.
using Landmarks = Eigen::Matrix<float, 2, 5>;

struct FrameFaces {
    std::string video_id;
    int frame_index = 0;
    std::vector<BoundingBox> boxes;
    /// Either empty or one entry per box.
    std::vector<Landmarks> landmarks;

    bool has_landmarks() const { return !landmarks.empty(); }
};

/// One aligned face per frame. `source_frame` differs from `frame_index` only when the
/// face was borrowed from another frame of the same video.
struct FaceRecord {
    std::string video_id;
    int frame_index = 0;
    int source_frame = 0;
    bool copied = false;
    BoundingBox box;
    bool used_landmarks = false;
    cv::Mat image;
};

/// Index of the box with the largest area; equal areas go to the smallest (x1, y1).
std::optional<std::size_t> select_protagonist(const FrameFaces& faces);

/// Frame index in `track_indices` (sorted ascending, nonempty) nearest to `query`;
/// equal distances go to the earlier frame.
int nearest_frame(int query, const std::vector<int>& track_indices);

/// The record of the nearest frame with a face, re-stamped for `frame_index` and marked as copied.
/// Throws when the track is empty.
FaceRecord fill_missing(int frame_index, const std::map<int, FaceRecord>& track);

/// Per-frame decision of which detection supplies the face.
struct FacePlan {
    int frame_index = 0;
    int source_frame = 0;
    /// Index into the source frame's boxes.
    std::size_t box_index = 0;
    bool copied() const { return source_frame != frame_index; }
};

/// Resolves every frame of one video to exactly one face: its own protagonist when it has one,
/// otherwise the nearest frame's. Throws when no frame of the video has a face.
std::vector<FacePlan> plan_video(const std::vector<FrameFaces>& frames);

}  // namespace cer::face
