#pragma once

#include "cer/labels.hpp"
#include "cer/metrics.hpp"
#include "cer/vote.hpp"
#include "cer/vlm/annotator.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace cer::ensemble {

namespace fs = std::filesystem;
using vlm::FaceRef;

/// One ensemble member: class probabilities (rows = images) for a batch of face images.
class Member {
public:
    virtual ~Member() = default;
    virtual std::string name() const = 0;
    virtual const LabelSpace& labels() const = 0;
    virtual Eigen::MatrixXd probabilities(const std::vector<fs::path>& images) = 0;
};

/// A trained network restored from a checkpoint, with the input size and normalization it was trained with.
std::unique_ptr<Member> load_member(const fs::path& checkpoint);

/// The five member checkpoints under `dir`: either exactly the `*.ckpt` files directly inside it,
/// or `{model}/stage2/best.ckpt` (else `stage1`) for each model directory under `dir/checkpoints`
/// or `dir`. Sorted by path.
std::vector<fs::path> find_checkpoints(const fs::path& dir);

struct EnsemblePrediction {
    FaceRef ref;
    std::vector<std::string> members;
    /// One row per member.
    Eigen::MatrixXd probs;
    std::vector<int> argmaxes;
    VoteResult vote;

    nlohmann::json to_json() const;
};

struct FaceEntry {
    FaceRef ref;
    fs::path image;
};

/// Rows of a face manifest; image paths are resolved against `faces_dir`.
std::vector<FaceEntry> read_face_manifest(const fs::path& manifest, const fs::path& faces_dir);

struct PredictOptions {
    int batch_size = 32;
    /// Per-member probabilities as JSON lines; skipped when empty.
    fs::path dump_probs;
};

/// Runs every member over the faces and writes `video_id,frame_index,label_index,label_name,tie_broken`
/// rows to `out_csv` in input order. Requires exactly five members sharing one label order and every
/// face image to exist.
std::vector<EnsemblePrediction> predict(const std::vector<FaceEntry>& faces, std::vector<std::unique_ptr<Member>>& members,
                                        const fs::path& out_csv, const PredictOptions& opts = {});

struct EvaluationReport {
    LabelSpace labels;
    F1Report scores;
    std::size_t faces = 0;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

/// Scores a predictions file against a truth CSV (`video_id,frame_index,label_index`). Both must
/// cover the same faces.
EvaluationReport evaluate(const fs::path& predictions_csv, const fs::path& truth_csv,
                          const LabelSpace& labels = LabelSpace::standard());

}  // namespace cer::ensemble
