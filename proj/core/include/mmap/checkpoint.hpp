#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmap/autodiff.hpp"
#include "mmap/protobank.hpp"

namespace mmap {

// Single-file container: "MMAPCKPT-1\n", a u64 little-endian manifest
// length, a JSON manifest (array names, dtypes, shapes, byte offsets, plus
// stage/seed/epoch/config metadata), then raw little-endian IEEE-754 /
// int64 array data. Reloading reproduces every array bit-identically.
struct Checkpoint {
    static constexpr const char* kFormat = "MMAPCKPT-1";

    std::string stage;  // "stage1" | "stage2" | "bank"
    std::uint64_t seed = 0;
    int epoch = 0;
    std::string config_json;  // canonical config snapshot

    std::map<std::string, Mat> arrays;                          // f64, row-major on disk
    std::map<std::string, std::vector<long long>> int_arrays;   // i64
    std::vector<PrototypeBank> banks;                           // stage2 only
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Bank persistence, one file per slide, in the same container format.
void save_bank(const std::filesystem::path& path, const PrototypeBank& bank, std::uint64_t seed,
               const std::string& config_hash);
PrototypeBank load_bank(const std::filesystem::path& path);

// FNV-1a hex digest used to fingerprint config snapshots.
std::string config_hash_hex(const std::string& canonical_json);

}  // namespace mmap
