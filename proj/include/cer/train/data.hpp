#pragma once

#include "cer/labels.hpp"
#include "cer/loss.hpp"
#include "cer/nn/tensor.hpp"

#include <opencv2/core.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <mutex>
#include <random>
#include <string>
#include <vector>

namespace cer::train {

namespace fs = std::filesystem;

struct Sample {
    /// Stable identifier: relative path for ground truth, "video_id:frame_index" for faces.
    std::string ref;
    fs::path image;
    int label = 0;
};

enum class DataSource { GroundTruth, Pseudo };

struct LabeledDataset {
    std::vector<Sample> records;
    DataSource source = DataSource::GroundTruth;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    std::vector<int> labels() const;
    /// Per-class record counts (no flooring).
    std::vector<long> histogram(int num_classes = kNumClasses) const;
    /// Counts for the balanced loss; empty classes are floored to 1 with a warning.
    ClassCountTable counts(int num_classes = kNumClasses) const;
    /// SHA-256 over refs, labels and image bytes, in record order.
    std::string hash() const;
};

enum class Layout { FolderPerClass, RafdbCompound };
Layout parse_layout(const std::string& name);

struct LoadReport {
    int kept = 0;
    /// Records whose class is outside the seven, by source class id.
    std::map<int, int> dropped;
};

/// Class ids of the RAF-DB compound annotation mapped into the standard label order; ids 1..12
/// that are not listed are valid but outside the seven classes.
const std::map<int, int>& rafdb_compound_map();

/// `folder_per_class`: one subdirectory per class, named by index (0..6) or class name.
/// `rafdb_compound`: `EmoLabel/list_patition_label.txt` lines "<image> <id>" with images under
/// `Image/aligned/<stem>_aligned.jpg`, `Image/original/<image>` or the root.
LabeledDataset load_ground_truth(const fs::path& root, Layout layout, const LabelSpace& labels = LabelSpace::standard(),
                                 LoadReport* report = nullptr);

/// Confident rows of a pseudo_labels.jsonl file, with images at `{faces_root}/{video_id}/{frame:06d}.png`.
/// Later duplicate rows replace earlier ones.
LabeledDataset load_pseudo(const fs::path& pseudo_labels, const fs::path& faces_root,
                           const LabelSpace& labels = LabelSpace::standard());

struct Split {
    LabeledDataset train, val;
};

/// Per-class shuffle with a seeded generator; each class keeps at least one training record.
Split stratified_split(const LabeledDataset& data, double val_fraction, std::uint64_t seed);

/// Image decoding, resizing and normalization shared by training and inference.
class ImageLoader {
public:
    ImageLoader(int size, std::array<float, 3> mean, std::array<float, 3> std, std::size_t cache_bytes = 512u << 20);

    /// RGB uint8 image at size x size.
    cv::Mat load(const fs::path& path);

    /// Normalized batch in channel-major layout. `flip[i]` mirrors image i horizontally.
    nn::Tensor<float> batch(const std::vector<fs::path>& paths, const std::vector<bool>& flip = {});

    int size() const { return size_; }

private:
    int size_;
    std::array<float, 3> mean_, std_;
    std::size_t cache_limit_, cache_used_ = 0;
    std::map<fs::path, cv::Mat> cache_;
    std::mutex mu_;
};

}  // namespace cer::train
