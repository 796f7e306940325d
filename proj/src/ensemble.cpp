#include "cer/ensemble.hpp"

#include "cer/loss.hpp"
#include "cer/nn/checkpoint.hpp"
#include "cer/train/config.hpp"
#include "cer/train/data.hpp"
#include "cer/util/io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace cer::ensemble {

using nlohmann::json;

namespace {

class CheckpointMember final : public Member {
public:
    CheckpointMember(const fs::path& path, nn::Network<float> net, nn::LoadedMeta meta, std::array<float, 3> mean,
                     std::array<float, 3> std)
        : name_(meta.meta.value("model", path.stem().string())),
          labels_(std::move(meta.labels)),
          net_(std::move(net)),
          loader_(net_.spec().input_size, mean, std) {}

    std::string name() const override { return name_; }
    const LabelSpace& labels() const override { return labels_; }

    Eigen::MatrixXd probabilities(const std::vector<fs::path>& images) override {
        return softmax(net_.forward(loader_.batch(images), false)).cast<double>();
    }

private:
    std::string name_;
    LabelSpace labels_;
    nn::Network<float> net_;
    train::ImageLoader loader_;
};

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

using RefKey = std::pair<std::string, int>;

/// `label_index` per face from a CSV with at least video_id, frame_index and label_index columns.
std::map<RefKey, int> read_labels_csv(const fs::path& path, int num_classes) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv(line);
    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw std::runtime_error(path.string() + ": missing column '" + name + "'");
        return std::size_t(it - header.begin());
    };
    const std::size_t c_vid = column("video_id"), c_frame = column("frame_index"), c_label = column("label_index");
    std::map<RefKey, int> out;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv(line);
        const auto where = path.string() + ":" + std::to_string(line_no);
        if (cells.size() != header.size()) throw std::runtime_error(where + ": expected " + std::to_string(header.size()) + " fields");
        int frame = 0, label = 0;
        try {
            frame = std::stoi(cells[c_frame]);
            label = std::stoi(cells[c_label]);
        } catch (const std::exception&) {
            throw std::runtime_error(where + ": malformed row");
        }
        if (label < 0 || label >= num_classes) throw std::runtime_error(where + ": label_index out of range");
        if (!out.emplace(RefKey{cells[c_vid], frame}, label).second)
            throw std::runtime_error(where + ": duplicate face " + cells[c_vid] + ":" + std::to_string(frame));
    }
    return out;
}

std::string list_refs(const std::vector<RefKey>& refs) {
    std::string s;
    for (std::size_t i = 0; i < refs.size() && i < 20; ++i) s += " " + refs[i].first + ":" + std::to_string(refs[i].second);
    if (refs.size() > 20) s += " ... (" + std::to_string(refs.size()) + " total)";
    return s;
}

}  // namespace

std::unique_ptr<Member> load_member(const fs::path& checkpoint) {
    nn::LoadedMeta meta{LabelSpace::standard(), {}};
    auto net = nn::load_checkpoint<float>(checkpoint, nullptr, &meta);
    train::TrainConfig defaults;
    auto mean = defaults.mean, std = defaults.std;
    if (meta.meta.contains("normalization")) {
        mean = meta.meta["normalization"].at("mean").get<std::array<float, 3>>();
        std = meta.meta["normalization"].at("std").get<std::array<float, 3>>();
    } else {
        spdlog::warn("{}: no normalization recorded; using ImageNet statistics", checkpoint.string());
    }
    return std::make_unique<CheckpointMember>(checkpoint, std::move(net), std::move(meta), mean, std);
}

std::vector<fs::path> find_checkpoints(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("model directory not found: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ckpt") out.push_back(e.path());
    if (out.empty()) {
        const fs::path root = fs::is_directory(dir / "checkpoints") ? dir / "checkpoints" : dir;
        for (const auto& e : fs::directory_iterator(root)) {
            if (!e.is_directory()) continue;
            for (const char* stage : {"stage2", "stage1"})
                if (fs::exists(e.path() / stage / "best.ckpt")) {
                    out.push_back(e.path() / stage / "best.ckpt");
                    break;
                }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

json EnsemblePrediction::to_json() const {
    json per_model = json::array();
    for (std::size_t m = 0; m < members.size(); ++m) {
        std::vector<double> p(std::size_t(probs.cols()));
        for (Eigen::Index c = 0; c < probs.cols(); ++c) p[std::size_t(c)] = probs(Eigen::Index(m), c);
        per_model.push_back({{"model", members[m]}, {"probs", p}, {"argmax", argmaxes[m]}});
    }
    return {{"video_id", ref.video_id},
            {"frame_index", ref.frame_index},
            {"per_model", per_model},
            {"voted_label", vote.label},
            {"vote_counts", vote.vote_counts},
            {"tie_broken", vote.tie_broken}};
}

std::vector<FaceEntry> read_face_manifest(const fs::path& manifest, const fs::path& faces_dir) {
    std::ifstream in(manifest);
    if (!in) throw std::runtime_error("cannot open " + manifest.string());
    std::vector<FaceEntry> out;
    int line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json row = json::parse(line);
            out.push_back({{row.at("video_id").get<std::string>(), row.at("frame_index").get<int>()},
                           faces_dir / row.at("image").get<std::string>()});
        } catch (const json::exception& e) {
            throw std::runtime_error(manifest.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<EnsemblePrediction> predict(const std::vector<FaceEntry>& faces, std::vector<std::unique_ptr<Member>>& members,
                                        const fs::path& out_csv, const PredictOptions& opts) {
    if (members.size() != std::size_t(kEnsembleSize)) throw std::invalid_argument("ensemble requires exactly 5 models");
    const LabelSpace& labels = members.front()->labels();
    for (const auto& m : members)
        if (!(m->labels() == labels)) throw std::runtime_error("label order mismatch between " + members.front()->name() + " and " + m->name());
    std::vector<RefKey> missing;
    for (const auto& f : faces)
        if (!fs::exists(f.image)) missing.push_back({f.ref.video_id, f.ref.frame_index});
    if (!missing.empty()) throw std::runtime_error("missing face images:" + list_refs(missing));
    if (opts.batch_size < 1) throw std::invalid_argument("batch_size must be positive");

    std::ostringstream csv, dump;
    csv << "video_id,frame_index,label_index,label_name,tie_broken\n";
    std::vector<EnsemblePrediction> out;
    out.reserve(faces.size());
    for (std::size_t start = 0; start < faces.size(); start += std::size_t(opts.batch_size)) {
        const std::size_t end = std::min(faces.size(), start + std::size_t(opts.batch_size));
        std::vector<fs::path> paths;
        for (std::size_t i = start; i < end; ++i) paths.push_back(faces[i].image);
        std::vector<Eigen::MatrixXd> member_probs;
        for (auto& m : members) {
            member_probs.push_back(m->probabilities(paths));
            if (member_probs.back().rows() != Eigen::Index(paths.size()) || member_probs.back().cols() != labels.size())
                throw std::runtime_error(m->name() + " returned probabilities of the wrong shape");
        }
        for (std::size_t i = start; i < end; ++i) {
            EnsemblePrediction p;
            p.ref = faces[i].ref;
            p.probs.resize(kEnsembleSize, labels.size());
            for (std::size_t m = 0; m < members.size(); ++m) {
                p.members.push_back(members[m]->name());
                p.probs.row(Eigen::Index(m)) = member_probs[m].row(Eigen::Index(i - start));
                int arg = 0;
                p.probs.row(Eigen::Index(m)).maxCoeff(&arg);
                p.argmaxes.push_back(arg);
            }
            p.vote = vote(p.argmaxes, p.probs);
            csv << p.ref.video_id << ',' << p.ref.frame_index << ',' << p.vote.label << ',' << labels.name(p.vote.label)
                << ',' << (p.vote.tie_broken ? 1 : 0) << '\n';
            if (!opts.dump_probs.empty()) dump << p.to_json().dump() << '\n';
            out.push_back(std::move(p));
        }
    }
    util::write_file_atomic(out_csv, csv.str());
    if (!opts.dump_probs.empty()) util::write_file_atomic(opts.dump_probs, dump.str());
    return out;
}

json EvaluationReport::to_json() const {
    json classes = json::array();
    for (int c = 0; c < labels.size(); ++c) {
        const auto& s = scores.per_class[std::size_t(c)];
        classes.push_back({{"label", labels.name(c)},
                           {"support", s.support},
                           {"precision", s.precision},
                           {"recall", s.recall},
                           {"f1", s.f1}});
    }
    json confusion = json::array();
    for (Eigen::Index r = 0; r < scores.confusion.rows(); ++r) {
        std::vector<long> row(std::size_t(scores.confusion.cols()));
        for (Eigen::Index c = 0; c < scores.confusion.cols(); ++c) row[std::size_t(c)] = scores.confusion(r, c);
        confusion.push_back(row);
    }
    return {{"faces", faces}, {"macro_f1", scores.macro_f1}, {"per_class", classes}, {"confusion", confusion}};
}

std::string EvaluationReport::to_text() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %8s %9s %7s %7s\n", "class", "support", "precision", "recall", "f1");
    os << buf;
    for (int c = 0; c < labels.size(); ++c) {
        const auto& s = scores.per_class[std::size_t(c)];
        std::snprintf(buf, sizeof buf, "%-24s %8ld %9.4f %7.4f %7.4f\n", labels.name(c).c_str(), s.support, s.precision,
                      s.recall, s.f1);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "macro-F1 %.6f over %zu faces\n", scores.macro_f1, faces);
    os << buf << "confusion (rows = truth, columns = prediction):\n";
    for (Eigen::Index r = 0; r < scores.confusion.rows(); ++r) {
        for (Eigen::Index c = 0; c < scores.confusion.cols(); ++c) os << (c ? " " : "") << scores.confusion(r, c);
        os << '\n';
    }
    return os.str();
}

EvaluationReport evaluate(const fs::path& predictions_csv, const fs::path& truth_csv, const LabelSpace& labels) {
    const auto pred = read_labels_csv(predictions_csv, labels.size());
    const auto truth = read_labels_csv(truth_csv, labels.size());
    std::vector<RefKey> only_pred, only_truth;
    for (const auto& [k, v] : pred)
        if (!truth.count(k)) only_pred.push_back(k);
    for (const auto& [k, v] : truth)
        if (!pred.count(k)) only_truth.push_back(k);
    if (!only_pred.empty() || !only_truth.empty()) {
        std::string msg = "prediction and truth files cover different faces;";
        if (!only_pred.empty()) msg += " only in predictions:" + list_refs(only_pred) + ";";
        if (!only_truth.empty()) msg += " only in truth:" + list_refs(only_truth);
        throw std::runtime_error(msg);
    }
    std::vector<int> p, t;
    for (const auto& [k, v] : truth) {
        t.push_back(v);
        p.push_back(pred.at(k));
    }
    return {labels, f1_report(p, t, labels.size()), truth.size()};
}

}  // namespace cer::ensemble
