#include "semformer/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace semformer {

namespace {
constexpr char kMagic[6] = {'S', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    json meta;
    meta["stage"] = ckpt.stage;
    meta["iteration"] = ckpt.iteration;
    meta["config"] = ckpt.config.to_map();
    meta["rng_state"] = ckpt.rng_state;
    json log = json::array();
    for (const MetricEntry& e : ckpt.metric_log) {
        log.push_back({e.epoch, e.term, e.value});
    }
    meta["metric_log"] = std::move(log);
    const std::string meta_str = meta.dump();

    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("checkpoint: cannot open " + tmp.string());
        out.write(kMagic, sizeof(kMagic));
        write_pod(out, kVersion);
        write_pod(out, static_cast<std::uint64_t>(meta_str.size()));
        out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
        write_pod(out, static_cast<std::uint64_t>(ckpt.tensors.size()));
        for (const auto& [name, t] : ckpt.tensors) {
            write_pod(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_pod(out, static_cast<std::uint32_t>(t.rank()));
            for (std::size_t i = 0; i < t.rank(); ++i) write_pod(out, t.dim(i));
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(t.numel() * 8));
        }
        if (!out) throw std::runtime_error("checkpoint: write failed " + tmp.string());
    }
    fs::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, kMagic, 6) != 0) {
        throw std::runtime_error("checkpoint: bad magic in " + path);
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto meta_len = read_pod<std::uint64_t>(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw std::runtime_error("checkpoint: truncated metadata in " + path);

    Checkpoint ckpt;
    const json meta = json::parse(meta_str);
    ckpt.stage = meta.at("stage").get<std::string>();
    ckpt.iteration = meta.at("iteration").get<std::int64_t>();
    ckpt.rng_state = meta.value("rng_state", std::string{});
    for (const auto& [k, v] : meta.at("config").get<std::map<std::string, std::string>>()) {
        ckpt.config.apply(k, v);
    }
    for (const auto& row : meta.at("metric_log")) {
        ckpt.metric_log.push_back(
            {row.at(0).get<std::int64_t>(), row.at(1).get<std::string>(), row.at(2).get<double>()});
    }

    const auto count = read_pod<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rank = read_pod<std::uint32_t>(in);
        std::vector<std::int64_t> dims(rank);
        for (auto& d : dims) d = read_pod<std::int64_t>(in);
        Tensor t(dims);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * 8));
        if (!in) throw std::runtime_error("checkpoint: truncated tensor data in " + path);
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void write_metric_csv(const std::vector<MetricEntry>& log, const std::string& path) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("metric csv: cannot open " + path);
    out << "epoch,term,value\n";
    out.precision(17);
    for (const MetricEntry& e : log) {
        out << e.epoch << "," << e.term << "," << e.value << "\n";
    }
}

std::vector<MetricEntry> read_metric_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("metric csv: cannot open " + path);
    std::vector<MetricEntry> log;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.rfind("epoch,", 0) == 0) continue;
        }
        std::istringstream is(line);
        std::string epoch_s, term, value_s;
        if (!std::getline(is, epoch_s, ',') || !std::getline(is, term, ',') ||
            !std::getline(is, value_s)) {
            throw std::runtime_error("metric csv: malformed line '" + line + "'");
        }
        log.push_back({std::stoll(epoch_s), term, std::stod(value_s)});
    }
    return log;
}

std::uint64_t hash_tensors(const std::vector<std::pair<std::string, Tensor*>>& named) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (const auto& [name, t] : named) {
        mix(name.data(), name.size());
        mix(t->data(), static_cast<std::size_t>(t->numel()) * 8);
    }
    return h;
}

}  // namespace semformer
