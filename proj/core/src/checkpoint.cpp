#include "mmap/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

#include "mmap/errors.hpp"
#include "mmap/rng.hpp"

using nlohmann::json;

namespace mmap {

namespace {

void write_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

struct ArrayEntry {
    std::string name;
    std::string dtype;  // "f64" | "i64"
    std::vector<std::int64_t> shape;
    std::uint64_t offset = 0;
    std::uint64_t nbytes = 0;
};

void append_f64(std::vector<char>& data, const Mat& m) {
    // Row-major on disk regardless of Eigen's storage order.
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            double v = m(i, j);
            char buf[8];
            std::memcpy(buf, &v, 8);
            data.insert(data.end(), buf, buf + 8);
        }
    }
}

void append_i64(std::vector<char>& data, const std::vector<long long>& v) {
    for (long long x : v) {
        std::int64_t y = x;
        char buf[8];
        std::memcpy(buf, &y, 8);
        data.insert(data.end(), buf, buf + 8);
    }
}

json bank_names_meta(const Checkpoint& ckpt) {
    json names = json::array();
    for (const auto& b : ckpt.banks) names.push_back(b.slide_id);
    return names;
}

}  // namespace

std::string config_hash_hex(const std::string& canonical_json) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canonical_json)));
    return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    json manifest;
    json entries = json::array();
    std::vector<char> data;

    auto add_f64 = [&](const std::string& name, const Mat& m) {
        json e;
        e["name"] = name;
        e["dtype"] = "f64";
        e["shape"] = {m.rows(), m.cols()};
        e["offset"] = data.size();
        e["nbytes"] = static_cast<std::uint64_t>(m.size()) * 8;
        entries.push_back(e);
        append_f64(data, m);
    };
    auto add_i64 = [&](const std::string& name, const std::vector<long long>& v) {
        json e;
        e["name"] = name;
        e["dtype"] = "i64";
        e["shape"] = {v.size()};
        e["offset"] = data.size();
        e["nbytes"] = static_cast<std::uint64_t>(v.size()) * 8;
        entries.push_back(e);
        append_i64(data, v);
    };

    for (const auto& [name, m] : ckpt.arrays) add_f64(name, m);
    for (const auto& [name, v] : ckpt.int_arrays) add_i64(name, v);
    for (const auto& bank : ckpt.banks) {
        const std::string prefix = "banks/" + bank.slide_id;
        add_f64(prefix + "/centroids", bank.centroids);
        add_f64(prefix + "/centroid_centers", bank.centroid_centers);
        std::vector<long long> counts(bank.member_counts.begin(), bank.member_counts.end());
        add_i64(prefix + "/member_counts", counts);
    }

    manifest["arrays"] = entries;
    manifest["meta"] = {{"format", Checkpoint::kFormat},
                        {"stage", ckpt.stage},
                        {"seed", ckpt.seed},
                        {"epoch", ckpt.epoch},
                        {"config", ckpt.config_json},
                        {"bank_slides", bank_names_meta(ckpt)}};
    std::string mstr = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetLayoutError("cannot open checkpoint for writing: " + path.string());
    out << Checkpoint::kFormat << '\n';
    write_u64_le(out, mstr.size());
    out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetLayoutError("missing checkpoint file: " + path.string());

    std::string magic;
    std::getline(in, magic);
    if (magic != Checkpoint::kFormat) {
        throw ParseError("not a " + std::string(Checkpoint::kFormat) + " file: " + path.string());
    }
    std::uint64_t msize = read_u64_le(in);
    std::string mstr(msize, '\0');
    in.read(mstr.data(), static_cast<std::streamsize>(msize));
    if (!in) throw ParseError("truncated checkpoint manifest: " + path.string());

    json manifest;
    try {
        manifest = json::parse(mstr);
    } catch (const std::exception& e) {
        throw ParseError("bad checkpoint manifest: " + std::string(e.what()));
    }

    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Checkpoint ckpt;
    const json& meta = manifest.at("meta");
    ckpt.stage = meta.at("stage").get<std::string>();
    ckpt.seed = meta.at("seed").get<std::uint64_t>();
    ckpt.epoch = meta.at("epoch").get<int>();
    ckpt.config_json = meta.at("config").get<std::string>();

    std::map<std::string, Mat> bank_mats;
    std::map<std::string, std::vector<long long>> bank_ints;

    for (const json& e : manifest.at("arrays")) {
        std::string name = e.at("name").get<std::string>();
        std::string dtype = e.at("dtype").get<std::string>();
        std::uint64_t offset = e.at("offset").get<std::uint64_t>();
        std::uint64_t nbytes = e.at("nbytes").get<std::uint64_t>();
        if (offset + nbytes > data.size()) {
            throw ParseError("checkpoint array '" + name + "' extends past end of file");
        }
        auto shape = e.at("shape").get<std::vector<std::int64_t>>();
        bool is_bank = name.rfind("banks/", 0) == 0;
        if (dtype == "f64") {
            if (shape.size() != 2) throw ParseError("f64 array '" + name + "' needs 2-d shape");
            Mat m(shape[0], shape[1]);
            const char* src = data.data() + offset;
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                for (Eigen::Index j = 0; j < m.cols(); ++j) {
                    double v;
                    std::memcpy(&v, src, 8);
                    src += 8;
                    m(i, j) = v;
                }
            }
            (is_bank ? bank_mats : ckpt.arrays)[name] = std::move(m);
        } else if (dtype == "i64") {
            std::uint64_t n = nbytes / 8;
            std::vector<long long> v(n);
            const char* src = data.data() + offset;
            for (std::uint64_t i = 0; i < n; ++i) {
                std::int64_t x;
                std::memcpy(&x, src, 8);
                src += 8;
                v[i] = x;
            }
            (is_bank ? bank_ints : ckpt.int_arrays)[name] = std::move(v);
        } else {
            throw ParseError("unknown dtype '" + dtype + "' in checkpoint");
        }
    }

    if (meta.contains("bank_slides")) {
        for (const auto& sid_json : meta["bank_slides"]) {
            std::string sid = sid_json.get<std::string>();
            const std::string prefix = "banks/" + sid;
            PrototypeBank bank;
            bank.slide_id = sid;
            bank.centroids = bank_mats.at(prefix + "/centroids");
            bank.centroid_centers = bank_mats.at(prefix + "/centroid_centers");
            for (long long c : bank_ints.at(prefix + "/member_counts")) {
                bank.member_counts.push_back(static_cast<int>(c));
            }
            bank.K = static_cast<int>(bank.centroids.rows());
            ckpt.banks.push_back(std::move(bank));
        }
    }
    return ckpt;
}

void save_bank(const std::filesystem::path& path, const PrototypeBank& bank, std::uint64_t seed,
               const std::string& config_hash) {
    Checkpoint ckpt;
    ckpt.stage = "bank";
    ckpt.seed = seed;
    ckpt.epoch = 0;
    ckpt.config_json = json{{"config_hash", config_hash}}.dump();
    ckpt.banks.push_back(bank);
    save_checkpoint(path, ckpt);
}

PrototypeBank load_bank(const std::filesystem::path& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.banks.size() != 1) throw ParseError("bank file must contain exactly one bank");
    return ckpt.banks[0];
}

}  // namespace mmap
