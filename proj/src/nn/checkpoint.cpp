#include "cer/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace cer::nn {

namespace {

constexpr char kMagic[8] = {'C', 'E', 'R', 'C', 'K', 'P', 'T', '1'};

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

class Writer {
public:
    template <typename T>
    void put(T v) {
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void bytes(const std::string& s) { buf_ += s; }
    std::string& str() { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, buf_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == end_; }

private:
    void need(std::size_t n) const {
        if (n > end_ - pos_) throw std::runtime_error("checkpoint is truncated or corrupt");
    }
    const std::string& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace

const RawTensor* CheckpointFile::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
    if (file.scalar_bytes != 4 && file.scalar_bytes != 8) throw std::invalid_argument("unsupported scalar width");
    Writer w;
    w.bytes(std::string(kMagic, sizeof(kMagic)));
    const std::string header = file.header.dump();
    w.put<std::uint64_t>(header.size());
    w.bytes(header);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(file.tensors.size()));
    for (const auto& t : file.tensors) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
        w.bytes(t.name);
        w.put<std::uint8_t>(t.trainable ? 1 : 0);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) w.put<std::int32_t>(d);
        w.put<std::uint8_t>(static_cast<std::uint8_t>(file.scalar_bytes));
        for (double v : t.values) {
            if (file.scalar_bytes == 4)
                w.put<float>(static_cast<float>(v));
            else
                w.put<double>(v);
        }
    }
    w.put<std::uint64_t>(fnv1a(w.str()));

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
        out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
        if (!out) throw std::runtime_error("failed writing checkpoint: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < sizeof(kMagic) + 8 || buf.compare(0, sizeof(kMagic), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a checkpoint file or truncated: " + path.string());
    const std::size_t body = buf.size() - 8;
    std::uint64_t stored;
    std::memcpy(&stored, buf.data() + body, 8);
    if (stored != fnv1a(buf.substr(0, body)))
        throw std::runtime_error("checkpoint is truncated or corrupt (checksum mismatch): " + path.string());

    Reader r(buf, body);
    r.bytes(sizeof(kMagic));
    CheckpointFile file;
    const auto header_len = r.get<std::uint64_t>();
    file.header = nlohmann::json::parse(r.bytes(header_len));
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        RawTensor t;
        t.name = r.bytes(r.get<std::uint32_t>());
        t.trainable = r.get<std::uint8_t>() != 0;
        const auto rank = r.get<std::uint32_t>();
        long numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            t.shape.push_back(r.get<std::int32_t>());
            numel *= t.shape.back();
        }
        file.scalar_bytes = r.get<std::uint8_t>();
        t.values.resize(static_cast<std::size_t>(numel));
        for (auto& v : t.values) v = file.scalar_bytes == 4 ? double(r.get<float>()) : r.get<double>();
        file.tensors.push_back(std::move(t));
    }
    if (!r.done()) throw std::runtime_error("trailing bytes in checkpoint: " + path.string());
    return file;
}

nlohmann::json spec_to_json(const BackboneSpec& spec) {
    return {{"name", spec.name},           {"width", spec.width},
            {"input_size", spec.input_size}, {"hidden_dim", spec.hidden_dim},
            {"num_classes", spec.num_classes}, {"reference_head", spec.reference_head}};
}

BackboneSpec spec_from_json(const nlohmann::json& j) {
    BackboneSpec s;
    s.name = j.at("name").get<std::string>();
    s.width = j.at("width").get<double>();
    s.input_size = j.at("input_size").get<int>();
    s.hidden_dim = j.at("hidden_dim").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    s.reference_head = j.at("reference_head").get<bool>();
    return s;
}

}  // namespace cer::nn
