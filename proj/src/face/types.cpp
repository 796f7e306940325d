#include "cer/face/types.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <tuple>

namespace cer::face {

BoundingBox BoundingBox::clamped(int frame_w, int frame_h) const {
    BoundingBox b = *this;
    b.x1 = std::clamp(b.x1, 0.f, float(frame_w));
    b.x2 = std::clamp(b.x2, 0.f, float(frame_w));
    b.y1 = std::clamp(b.y1, 0.f, float(frame_h));
    b.y2 = std::clamp(b.y2, 0.f, float(frame_h));
    return b;
}

std::optional<std::size_t> select_protagonist(const FrameFaces& faces) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < faces.boxes.size(); ++i) {
        if (!best) {
            best = i;
            continue;
        }
        const auto& a = faces.boxes[i];
        const auto& b = faces.boxes[*best];
        if (a.area() > b.area() || (a.area() == b.area() && std::tie(a.x1, a.y1) < std::tie(b.x1, b.y1)))
            best = i;
    }
    return best;
}

int nearest_frame(int query, const std::vector<int>& track_indices) {
    if (track_indices.empty()) throw std::runtime_error("video has no detectable faces");
    auto it = std::lower_bound(track_indices.begin(), track_indices.end(), query);
    if (it == track_indices.end()) return track_indices.back();
    if (*it == query || it == track_indices.begin()) return *it;
    const int after = *it;
    const int before = *std::prev(it);
    return (query - before) <= (after - query) ? before : after;
}

FaceRecord fill_missing(int frame_index, const std::map<int, FaceRecord>& track) {
    if (track.empty()) throw std::runtime_error("video has no detectable faces");
    std::vector<int> indices;
    indices.reserve(track.size());
    for (const auto& [idx, rec] : track) indices.push_back(idx);
    const int donor = nearest_frame(frame_index, indices);
    FaceRecord out = track.at(donor);
    out.frame_index = frame_index;
    out.source_frame = donor;
    out.copied = donor != frame_index;
    return out;
}

std::vector<FacePlan> plan_video(const std::vector<FrameFaces>& frames) {
    std::map<int, std::size_t> own;
    std::vector<int> seen;
    for (const auto& f : frames) seen.push_back(f.frame_index);
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
        throw std::invalid_argument("duplicate frame index within a video");
    for (const auto& f : frames)
        if (auto p = select_protagonist(f)) own[f.frame_index] = *p;
    if (own.empty()) {
        const std::string id = frames.empty() ? std::string("<empty>") : frames.front().video_id;
        throw std::runtime_error("video has no detectable faces: " + id);
    }
    std::vector<int> indices;
    for (const auto& [idx, box] : own) indices.push_back(idx);

    std::vector<FacePlan> plan;
    plan.reserve(frames.size());
    for (const auto& f : frames) {
        const int src = nearest_frame(f.frame_index, indices);
        plan.push_back({f.frame_index, src, own.at(src)});
    }
    return plan;
}

}  // namespace cer::face
