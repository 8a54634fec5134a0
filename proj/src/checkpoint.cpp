#include "ctrl/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace ctrl {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'R', 'L', 'C', 'K', 'P', '1'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

struct ParsedFile {
    nlohmann::json manifest;
    std::string blob;
};

ParsedFile read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
        throw IoError("checkpoint: '" + path + "' is not a checkpoint file");
    }
    const std::uint64_t mlen = get_u64(reinterpret_cast<const unsigned char*>(bytes.data() + 8));
    if (16 + mlen > bytes.size()) throw IoError("checkpoint: '" + path + "' is truncated");
    ParsedFile f;
    f.manifest = nlohmann::json::parse(bytes.substr(16, mlen));
    f.blob = bytes.substr(16 + mlen);
    return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params, const nlohmann::json& meta) {
    // Canonical order: sorted by name, independent of registration order.
    std::vector<std::pair<std::string, Tensor>> sorted(params.items().begin(), params.items().end());
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::string blob;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& [name, t] : sorted) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["dtype"] = "f64";
        e["offset"] = blob.size();
        entries.push_back(std::move(e));
        for (double v : t.data()) put_f64(blob, v);
    }
    nlohmann::json manifest;
    manifest["meta"] = meta;
    manifest["params"] = std::move(entries);
    const std::string mstr = manifest.dump();

    std::string out(kMagic, 8);
    put_u64(out, mstr.size());
    out += mstr;
    out += blob;

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot write '" + path + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("checkpoint: write to '" + path + "' failed");
}

nlohmann::json load_checkpoint_meta(const std::string& path) {
    return read_file(path).manifest.at("meta");
}

void load_checkpoint(const std::string& path, ParamStore& params) {
    ParsedFile f = read_file(path);
    const auto& entries = f.manifest.at("params");
    if (entries.size() != params.size()) {
        throw ConfigError("checkpoint: '" + path + "' holds " + std::to_string(entries.size()) +
                          " parameters, model expects " + std::to_string(params.size()));
    }
    const auto* blob = reinterpret_cast<const unsigned char*>(f.blob.data());
    for (const auto& e : entries) {
        const std::string name = e.at("name").get<std::string>();
        const Tensor* t = params.find(name);
        if (!t) throw ConfigError("checkpoint: unknown parameter '" + name + "' in '" + path + "'");
        const Shape shape = e.at("shape").get<Shape>();
        if (shape != t->shape()) {
            throw ConfigError("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) +
                              ", model expects " + shape_str(t->shape()));
        }
        const std::uint64_t off = e.at("offset").get<std::uint64_t>();
        if (off + 8 * t->numel() > f.blob.size()) {
            throw IoError("checkpoint: blob too short for parameter '" + name + "'");
        }
        auto data = const_cast<Tensor*>(t)->mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_f64(blob + off + 8 * i);
    }
}

}  // namespace ctrl
