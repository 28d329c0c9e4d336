#include "mmap/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>

#include "mmap/errors.hpp"

using nlohmann::json;

namespace mmap {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

long long parse_ll(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

}  // namespace

ConfigFile parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetLayoutError("missing config file: " + path.string());
    ConfigFile file;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad section");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        }
        file.values[section.empty() ? key : section + "." + key] = value;
    }
    return file;
}

void apply_config_file(TrainConfig& cfg, const ConfigFile& file) {
    for (const auto& [key, v] : file.values) {
        if (key == "train.lr_max") cfg.lr_max = parse_double(v, key);
        else if (key == "train.lr_min") cfg.lr_min = parse_double(v, key);
        else if (key == "train.epochs") cfg.epochs = static_cast<int>(parse_ll(v, key));
        else if (key == "train.batch_size") cfg.batch_size = static_cast<int>(parse_ll(v, key));
        else if (key == "train.gamma1") cfg.gamma1 = parse_double(v, key);
        else if (key == "train.gamma2") cfg.gamma2 = parse_double(v, key);
        else if (key == "train.seed") cfg.seed = static_cast<std::uint64_t>(parse_ll(v, key));
        else if (key == "augment.flip") cfg.aug.flip = parse_bool(v, key);
        else if (key == "augment.rotation") cfg.aug.rotation = parse_bool(v, key);
        else if (key == "augment.jitter") cfg.aug.jitter = parse_double(v, key);
        else if (key == "model.patch") cfg.model.patch = static_cast<int>(parse_ll(v, key));
        else if (key == "model.vit_patch") cfg.model.vit_patch = static_cast<int>(parse_ll(v, key));
        else if (key == "model.d") cfg.model.d = static_cast<int>(parse_ll(v, key));
        else if (key == "model.depth") cfg.model.depth = static_cast<int>(parse_ll(v, key));
        else if (key == "model.heads") cfg.model.heads = static_cast<int>(parse_ll(v, key));
        else if (key == "model.mlp_ratio") cfg.model.mlp_ratio = static_cast<int>(parse_ll(v, key));
        else if (key == "model.fusion_layers") cfg.model.fusion_layers = static_cast<int>(parse_ll(v, key));
        else if (key == "model.fusion_heads") cfg.model.fusion_heads = static_cast<int>(parse_ll(v, key));
        else if (key == "model.glob_heads") cfg.model.glob_heads = static_cast<int>(parse_ll(v, key));
        else if (key == "model.pos_hidden") cfg.model.pos_hidden = static_cast<int>(parse_ll(v, key));
        else if (key == "model.use_lora") cfg.model.use_lora = parse_bool(v, key);
        else if (key == "model.lora_rank") cfg.model.lora_rank = static_cast<int>(parse_ll(v, key));
        else if (key == "model.lora_alpha") cfg.model.lora_alpha = parse_double(v, key);
        else if (key == "model.mlp1_uses_e0") cfg.model.mlp1_uses_e0 = parse_bool(v, key);
        else if (key == "bank.k_min") cfg.bank.k_min = static_cast<int>(parse_ll(v, key));
        else if (key == "bank.k_max") cfg.bank.k_max = static_cast<int>(parse_ll(v, key));
        else if (key == "bank.retrieval") {
            if (v != "adaptive" && v != "fixed") {
                throw ConfigError("bank.retrieval must be 'adaptive' or 'fixed', got '" + v + "'");
            }
            cfg.bank.retrieval = v;
        } else if (key == "bank.fixed_l") cfg.bank.fixed_l = static_cast<int>(parse_ll(v, key));
        else if (key == "bank.aggregation") {
            if (v != "cross_attn" && v != "cross_attn_pos" && v != "mean" && v != "sum") {
                throw ConfigError("bank.aggregation: unknown strategy '" + v + "'");
            }
            cfg.bank.aggregation = v;
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
}

std::string config_snapshot_json(const TrainConfig& cfg) {
    json j;
    j["train"] = {{"lr_max", cfg.lr_max},     {"lr_min", cfg.lr_min},
                  {"epochs", cfg.epochs},     {"batch_size", cfg.batch_size},
                  {"gamma1", cfg.gamma1},     {"gamma2", cfg.gamma2},
                  {"seed", cfg.seed}};
    j["augment"] = {{"flip", cfg.aug.flip}, {"rotation", cfg.aug.rotation}, {"jitter", cfg.aug.jitter}};
    j["model"] = {{"patch", cfg.model.patch},
                  {"vit_patch", cfg.model.vit_patch},
                  {"d", cfg.model.d},
                  {"depth", cfg.model.depth},
                  {"heads", cfg.model.heads},
                  {"mlp_ratio", cfg.model.mlp_ratio},
                  {"fusion_layers", cfg.model.fusion_layers},
                  {"fusion_heads", cfg.model.fusion_heads},
                  {"glob_heads", cfg.model.glob_heads},
                  {"pos_hidden", cfg.model.pos_hidden},
                  {"use_lora", cfg.model.use_lora},
                  {"lora_rank", cfg.model.lora_rank},
                  {"lora_alpha", cfg.model.lora_alpha},
                  {"mlp1_uses_e0", cfg.model.mlp1_uses_e0},
                  {"genes", cfg.model.genes}};
    j["bank"] = {{"k_min", cfg.bank.k_min},
                 {"k_max", cfg.bank.k_max},
                 {"retrieval", cfg.bank.retrieval},
                 {"fixed_l", cfg.bank.fixed_l},
                 {"aggregation", cfg.bank.aggregation}};
    return j.dump();
}

TrainConfig train_config_from_json(const std::string& snapshot) {
    json j;
    try {
        j = json::parse(snapshot);
    } catch (const std::exception& e) {
        throw ParseError("bad config snapshot: " + std::string(e.what()));
    }
    TrainConfig cfg;
    const json& t = j.at("train");
    cfg.lr_max = t.at("lr_max").get<double>();
    cfg.lr_min = t.at("lr_min").get<double>();
    cfg.epochs = t.at("epochs").get<int>();
    cfg.batch_size = t.at("batch_size").get<int>();
    cfg.gamma1 = t.at("gamma1").get<double>();
    cfg.gamma2 = t.at("gamma2").get<double>();
    cfg.seed = t.at("seed").get<std::uint64_t>();
    const json& a = j.at("augment");
    cfg.aug.flip = a.at("flip").get<bool>();
    cfg.aug.rotation = a.at("rotation").get<bool>();
    cfg.aug.jitter = a.at("jitter").get<double>();
    const json& m = j.at("model");
    cfg.model.patch = m.at("patch").get<int>();
    cfg.model.vit_patch = m.at("vit_patch").get<int>();
    cfg.model.d = m.at("d").get<int>();
    cfg.model.depth = m.at("depth").get<int>();
    cfg.model.heads = m.at("heads").get<int>();
    cfg.model.mlp_ratio = m.at("mlp_ratio").get<int>();
    cfg.model.fusion_layers = m.at("fusion_layers").get<int>();
    cfg.model.fusion_heads = m.at("fusion_heads").get<int>();
    cfg.model.glob_heads = m.at("glob_heads").get<int>();
    cfg.model.pos_hidden = m.at("pos_hidden").get<int>();
    cfg.model.use_lora = m.at("use_lora").get<bool>();
    cfg.model.lora_rank = m.at("lora_rank").get<int>();
    cfg.model.lora_alpha = m.at("lora_alpha").get<double>();
    cfg.model.mlp1_uses_e0 = m.at("mlp1_uses_e0").get<bool>();
    cfg.model.genes = m.at("genes").get<int>();
    const json& b = j.at("bank");
    cfg.bank.k_min = b.at("k_min").get<int>();
    cfg.bank.k_max = b.at("k_max").get<int>();
    cfg.bank.retrieval = b.at("retrieval").get<std::string>();
    cfg.bank.fixed_l = b.at("fixed_l").get<int>();
    cfg.bank.aggregation = b.at("aggregation").get<std::string>();
    return cfg;
}

}  // namespace mmap
