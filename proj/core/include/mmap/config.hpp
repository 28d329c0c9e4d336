#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace mmap {

struct AugmentConfig {
    bool flip = true;       // horizontal flip with probability 0.5
    bool rotation = true;   // uniform right-angle rotation
    double jitter = 0.1;    // multiplicative per-channel amplitude, 0 disables
};

struct ModelConfig {
    int patch = 112;  // spot patch side p
    int vit_patch = 16;
    int d = 128;
    int depth = 4;
    int heads = 4;
    int mlp_ratio = 4;
    int fusion_layers = 2;
    int fusion_heads = 4;
    int glob_heads = 4;
    int pos_hidden = 16;
    bool use_lora = false;
    int lora_rank = 8;
    double lora_alpha = 16.0;
    bool mlp1_uses_e0 = false;  // sensitivity switch: feed e0 instead of e2 to MLP1
    int genes = 0;              // set from the dataset at training time
};

struct BankRetrievalConfig {
    int k_min = 32;
    int k_max = 80;
    std::string retrieval = "adaptive";  // "adaptive" | "fixed"
    int fixed_l = 16;
    std::string aggregation = "cross_attn";
};

struct TrainConfig {
    double lr_max = 1e-5;
    double lr_min = 0.0;
    int epochs = 50;
    int batch_size = 16;
    double gamma1 = 0.3;
    double gamma2 = 0.3;
    std::uint64_t seed = 0;
    AugmentConfig aug;
    ModelConfig model;
    BankRetrievalConfig bank;
};

// Flat view of a key = value file with [section] headers; keys are stored
// as "section.key". '#' and ';' start comments.
struct ConfigFile {
    std::map<std::string, std::string> values;
};

ConfigFile parse_config_file(const std::filesystem::path& path);

// Applies file values over the defaults already in cfg. Unknown keys and
// unparsable values raise ConfigError.
void apply_config_file(TrainConfig& cfg, const ConfigFile& file);

// Canonical JSON snapshot (sorted keys) used for manifests, checkpoints
// and config hashing.
std::string config_snapshot_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& snapshot);

}  // namespace mmap
