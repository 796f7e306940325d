#pragma once

#include <opencv2/core.hpp>

#include <cstdint>
#include <filesystem>
#include <random>

namespace cer::synthetic {

namespace fs = std::filesystem;

/// A noisy image whose class is carried by the colour of a randomly placed patch.
cv::Mat make_image(int label, int size, std::mt19937_64& rng);

/// `{root}/{class index}/{n:04d}.png`, `per_class` images per class.
void write_labeled(const fs::path& root, int per_class, int size, std::uint64_t seed);

struct VideoSet {
    fs::path frames_dir;
    fs::path truth_csv;
};

/// Raw frames `{root}/frames/{video}_{frame:06d}.png` with detection sidecars. Each video shows one
/// class; roughly one frame in `empty_every` has no detection and one in `crowd_every` adds a
/// smaller distractor face. Writes `{root}/truth.csv` (video_id,frame_index,label_index).
VideoSet write_videos(const fs::path& root, int videos, int frames_per_video, int face_size, std::uint64_t seed,
                      int empty_every = 7, int crowd_every = 5);

/// Mock-backend script for the faces of a face manifest: the true class name for each face image,
/// except every `ambiguous_every`-th face, which names two classes. Returns the number of faces scripted.
int write_mock_script(const fs::path& faces_manifest, const fs::path& truth_csv, const fs::path& out,
                      int ambiguous_every = 10);

}  // namespace cer::synthetic
