#include "cer/train/data.hpp"

#include "cer/face/pipeline.hpp"
#include "cer/util/io.hpp"
#include "cer/vlm/annotator.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace cer::train {

std::vector<int> LabeledDataset::labels() const {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label);
    return out;
}

std::vector<long> LabeledDataset::histogram(int num_classes) const {
    std::vector<long> h(static_cast<std::size_t>(num_classes), 0);
    for (const auto& r : records) {
        if (r.label < 0 || r.label >= num_classes) throw std::out_of_range("label out of range in " + r.ref);
        ++h[std::size_t(r.label)];
    }
    return h;
}

ClassCountTable LabeledDataset::counts(int num_classes) const {
    std::vector<int> floored;
    const auto y = labels();
    auto table = ClassCountTable::from_labels(y, num_classes, &floored);
    for (int c : floored) spdlog::warn("class {} has no records; its count is floored to 1", c);
    return table;
}

std::string LabeledDataset::hash() const {
    std::string acc;
    for (const auto& r : records) acc += r.ref + '\t' + std::to_string(r.label) + '\t' + util::sha256_file(r.image) + '\n';
    return util::sha256_hex(acc);
}

Layout parse_layout(const std::string& name) {
    if (name == "folder_per_class") return Layout::FolderPerClass;
    if (name == "rafdb_compound") return Layout::RafdbCompound;
    throw std::invalid_argument("unknown layout '" + name + "' (valid: folder_per_class, rafdb_compound)");
}

const std::map<int, int>& rafdb_compound_map() {
    // 1 Happily Surprised, 3 Sadly Fearful, 4 Sadly Angry, 5 Sadly Surprised, 8 Fearfully Surprised,
    // 9 Angrily Surprised, 11 Disgustedly Surprised.
    static const std::map<int, int> m{{8, 0}, {1, 1}, {5, 2}, {11, 3}, {9, 4}, {3, 5}, {4, 6}};
    return m;
}

namespace {

bool is_image(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::optional<int> class_dir(const std::string& name, const LabelSpace& labels) {
    if (!name.empty() && std::all_of(name.begin(), name.end(), ::isdigit)) {
        const int i = std::stoi(name);
        if (i >= 0 && i < labels.size()) return i;
        return std::nullopt;
    }
    return labels.lookup(name);
}

LabeledDataset load_folders(const fs::path& root, const LabelSpace& labels, LoadReport& report) {
    LabeledDataset ds;
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    std::set<int> seen;
    for (const auto& d : dirs) {
        const auto c = class_dir(d.filename().string(), labels);
        if (!c) throw std::invalid_argument("directory '" + d.filename().string() + "' does not name a class");
        if (!seen.insert(*c).second) throw std::invalid_argument("two directories name class " + labels.name(*c));
        std::vector<fs::path> files;
        for (const auto& f : fs::recursive_directory_iterator(d))
            if (f.is_regular_file() && is_image(f.path())) files.push_back(f.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) ds.records.push_back({fs::relative(f, root).generic_string(), f, *c});
    }
    report.kept = int(ds.size());
    return ds;
}

LabeledDataset load_rafdb(const fs::path& root, LoadReport& report) {
    const auto list = root / "EmoLabel" / "list_patition_label.txt";
    std::ifstream in(list);
    if (!in) throw std::runtime_error("missing annotation file " + list.string());
    LabeledDataset ds;
    std::vector<std::string> missing;
    int line_no = 0;
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        std::istringstream ls(line);
        std::string name;
        int id = 0;
        if (!(ls >> name)) continue;
        if (!(ls >> id)) throw std::invalid_argument(list.string() + ":" + std::to_string(line_no) + ": missing class id");
        if (id < 1 || id > 12)
            throw std::invalid_argument(list.string() + ":" + std::to_string(line_no) + ": unknown class id " + std::to_string(id));
        const auto it = rafdb_compound_map().find(id);
        if (it == rafdb_compound_map().end()) {
            ++report.dropped[id];
            continue;
        }
        const fs::path stem = fs::path(name).stem();
        const fs::path candidates[] = {root / "Image" / "aligned" / (stem.string() + "_aligned.jpg"),
                                       root / "Image" / "original" / name, root / name};
        const fs::path* found = nullptr;
        for (const auto& c : candidates)
            if (fs::exists(c)) {
                found = &c;
                break;
            }
        if (!found) {
            missing.push_back(name);
            continue;
        }
        ds.records.push_back({name, *found, it->second});
    }
    if (!missing.empty()) {
        std::string msg = std::to_string(missing.size()) + " annotated images not found, e.g.";
        for (std::size_t i = 0; i < std::min<std::size_t>(5, missing.size()); ++i) msg += " " + missing[i];
        throw std::runtime_error(msg);
    }
    report.kept = int(ds.size());
    int dropped = 0;
    for (const auto& [id, n] : report.dropped) dropped += n;
    if (dropped) spdlog::info("dropped {} records from classes outside the seven", dropped);
    return ds;
}

}  // namespace

LabeledDataset load_ground_truth(const fs::path& root, Layout layout, const LabelSpace& labels, LoadReport* report) {
    if (!fs::is_directory(root)) throw std::runtime_error("dataset directory not found: " + root.string());
    LoadReport local;
    auto& r = report ? *report : local;
    r = {};
    LabeledDataset ds = layout == Layout::FolderPerClass ? load_folders(root, labels, r) : load_rafdb(root, r);
    if (ds.empty()) throw std::runtime_error("no labeled images found in " + root.string());
    const auto h = ds.histogram(labels.size());
    for (int c = 0; c < labels.size(); ++c)
        if (h[std::size_t(c)] == 0) spdlog::warn("no records for class '{}'", labels.name(c));
    return ds;
}

LabeledDataset load_pseudo(const fs::path& pseudo_labels, const fs::path& faces_root, const LabelSpace& labels) {
    const auto rows = vlm::read_pseudo_labels(pseudo_labels);
    std::map<std::pair<std::string, int>, std::size_t> position;
    LabeledDataset ds;
    ds.source = DataSource::Pseudo;
    for (const auto& row : rows) {
        if (!row.confident) continue;
        if (*row.label < 0 || *row.label >= labels.size())
            throw std::out_of_range("pseudo-label index out of range for " + row.ref.str());
        Sample s{row.ref.str(), faces_root / face::face_image_relpath(row.ref.video_id, row.ref.frame_index), *row.label};
        const auto key = std::make_pair(row.ref.video_id, row.ref.frame_index);
        if (auto it = position.find(key); it != position.end()) {
            spdlog::warn("duplicate pseudo-label for {}; keeping the later row", row.ref.str());
            ds.records[it->second] = s;
        } else {
            position[key] = ds.records.size();
            ds.records.push_back(s);
        }
    }
    if (ds.empty()) throw std::runtime_error("no confident pseudo-labels in " + pseudo_labels.string());
    std::vector<std::string> missing;
    for (const auto& r : ds.records)
        if (!fs::exists(r.image)) missing.push_back(r.ref);
    if (!missing.empty()) {
        std::string msg = "face images missing for:";
        for (const auto& m : missing) msg += " " + m;
        throw std::runtime_error(msg);
    }
    return ds;
}

Split stratified_split(const LabeledDataset& data, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction >= 0 && val_fraction < 1)) throw std::invalid_argument("val_fraction must be in [0, 1)");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.size(); ++i) by_class[data.records[i].label].push_back(i);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> train_idx, val_idx;
    for (auto& [label, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        auto n_val = static_cast<std::size_t>(std::llround(val_fraction * double(idx.size())));
        n_val = std::min(n_val, idx.size() - 1);
        val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + std::ptrdiff_t(n_val));
        train_idx.insert(train_idx.end(), idx.begin() + std::ptrdiff_t(n_val), idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
    Split s;
    s.train.source = s.val.source = data.source;
    for (auto i : train_idx) s.train.records.push_back(data.records[i]);
    for (auto i : val_idx) s.val.records.push_back(data.records[i]);
    return s;
}

ImageLoader::ImageLoader(int size, std::array<float, 3> mean, std::array<float, 3> std, std::size_t cache_bytes)
    : size_(size), mean_(mean), std_(std), cache_limit_(cache_bytes) {}

cv::Mat ImageLoader::load(const fs::path& path) {
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(path); it != cache_.end()) return it->second;
    }
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw std::runtime_error("cannot read image " + path.string());
    cv::Mat resized, rgb;
    if (bgr.cols != size_ || bgr.rows != size_)
        cv::resize(bgr, resized, cv::Size(size_, size_), 0, 0, bgr.cols > size_ ? cv::INTER_AREA : cv::INTER_LINEAR);
    else
        resized = bgr;
    cv::cvtColor(resized, rgb, cv::COLOR_BGR2RGB);
    std::lock_guard lock(mu_);
    const std::size_t bytes = rgb.total() * rgb.elemSize();
    if (cache_used_ + bytes <= cache_limit_) {
        cache_.emplace(path, rgb);
        cache_used_ += bytes;
    }
    return rgb;
}

nn::Tensor<float> ImageLoader::batch(const std::vector<fs::path>& paths, const std::vector<bool>& flip) {
    nn::Tensor<float> t(3, int(paths.size()), size_, size_);
    for (std::size_t n = 0; n < paths.size(); ++n) {
        const cv::Mat img = load(paths[n]);
        const bool mirror = !flip.empty() && flip[n];
        for (int y = 0; y < size_; ++y) {
            const auto* row = img.ptr<cv::Vec3b>(y);
            for (int x = 0; x < size_; ++x) {
                const auto& px = row[mirror ? size_ - 1 - x : x];
                const auto col = t.column(int(n), y, x);
                for (int c = 0; c < 3; ++c) t.data(c, col) = (float(px[c]) / 255.f - mean_[std::size_t(c)]) / std_[std::size_t(c)];
            }
        }
    }
    return t;
}

}  // namespace cer::train
