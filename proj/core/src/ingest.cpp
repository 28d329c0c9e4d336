#include "mmap/ingest.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "mmap/errors.hpp"
#include "mmap/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mmap {

int DatasetBundle::spot_count() const {
    int n = 0;
    for (const auto& s : slides) n += static_cast<int>(s.spots.size());
    return n;
}

int DatasetBundle::count_split(Split s) const {
    int n = 0;
    for (const auto& sl : slides) {
        if (sl.split == s) ++n;
    }
    return n;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') {
        out.back().pop_back();
    }
    return out;
}

double parse_number(const std::string& s, const std::string& context) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError("non-numeric value '" + s + "' in " + context);
    }
    return v;
}

long parse_int(const std::string& s, const std::string& context) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ParseError("non-integer value '" + s + "' in " + context);
    }
    return v;
}

std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetLayoutError("missing file: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

struct CountsTable {
    std::vector<std::string> gene_names;
    std::vector<std::string> spot_ids;
    Mat values;  // spots x genes
};

CountsTable read_counts_tsv(const fs::path& path) {
    auto lines = read_lines(path);
    if (lines.empty()) throw ParseError("empty counts file: " + path.string());
    CountsTable t;
    auto header = split_tabs(lines[0]);
    if (header.size() < 2) throw ParseError("counts header needs spot_id plus genes: " + path.string());
    t.gene_names.assign(header.begin() + 1, header.end());
    const std::size_t g = t.gene_names.size();
    t.values.resize(static_cast<Eigen::Index>(lines.size()) - 1, static_cast<Eigen::Index>(g));
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto cells = split_tabs(lines[r]);
        if (cells.size() != g + 1) {
            throw ParseError("counts row " + std::to_string(r) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(g + 1) + " in " + path.string());
        }
        t.spot_ids.push_back(cells[0]);
        for (std::size_t c = 0; c < g; ++c) {
            double v = parse_number(cells[c + 1], path.string() + " row " + std::to_string(r));
            if (v < 0) throw DomainError("negative count in " + path.string());
            t.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) = v;
        }
    }
    return t;
}

struct SpotCoord {
    std::string spot_id;
    int x, y;
};

std::vector<SpotCoord> read_spots_tsv(const fs::path& path) {
    auto lines = read_lines(path);
    if (lines.empty()) throw ParseError("empty spots file: " + path.string());
    std::vector<SpotCoord> out;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto cells = split_tabs(lines[r]);
        if (cells.size() != 3) {
            throw ParseError("spots row " + std::to_string(r) + " needs 3 columns in " +
                             path.string());
        }
        SpotCoord c;
        c.spot_id = cells[0];
        c.x = static_cast<int>(parse_int(cells[1], path.string()));
        c.y = static_cast<int>(parse_int(cells[2], path.string()));
        out.push_back(std::move(c));
    }
    return out;
}

bool window_inside(int x, int y, int p, int h, int w) {
    int half = p / 2;
    return y - half >= 0 && y + half <= h && x - half >= 0 && x + half <= w;
}

std::string format_count(double v) {
    double r = std::round(v);
    if (std::abs(v - r) < 1e-9 && std::abs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(r));
        return buf;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::pair<std::vector<int>, GeneFilterLog> select_genes(const Mat& counts,
                                                        const std::vector<std::string>& gene_names,
                                                        int n_hvg, int min_spots) {
    const int g = static_cast<int>(counts.cols());
    if (static_cast<int>(gene_names.size()) != g) {
        throw ShapeError("select_genes: gene_names length does not match counts columns");
    }
    if (n_hvg < 1) throw ConfigError("select_genes: n_hvg must be >= 1");
    if (n_hvg > g) {
        throw ConfigError("select_genes: n_hvg " + std::to_string(n_hvg) + " exceeds gene count " +
                          std::to_string(g));
    }
    if (min_spots < 0) throw ConfigError("select_genes: min_spots must be >= 0");
    if (counts.size() > 0 && counts.minCoeff() < 0) {
        throw DomainError("select_genes: counts must be non-negative");
    }

    const Eigen::Index s = counts.rows();
    std::vector<double> variance(g, 0.0);
    for (int j = 0; j < g && s > 0; ++j) {
        Eigen::ArrayXd lg = (counts.col(j).array() + 1.0).log();
        double mu = lg.mean();
        variance[j] = (lg - mu).square().mean();
    }

    std::vector<int> order(g);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (variance[a] != variance[b]) return variance[a] > variance[b];
        return a < b;
    });
    order.resize(n_hvg);

    GeneFilterLog log;
    log.genes_total = g;
    log.genes_after_hvg = n_hvg;

    std::vector<int> kept;
    kept.reserve(order.size());
    for (int j : order) {
        int expressed = 0;
        for (Eigen::Index i = 0; i < s; ++i) {
            if (counts(i, j) > 0) ++expressed;
        }
        if (expressed >= min_spots) kept.push_back(j);
    }
    log.genes_after_min_spots = static_cast<int>(kept.size());
    return {kept, log};
}

Mat normalize_expression(const Mat& counts) {
    if (counts.size() > 0 && !(counts.array() >= 0.0).all()) {
        throw DomainError("normalize_expression: negative entry");
    }
    return (counts.array() + 1.0).log().matrix();
}

ImageU8 extract_patch(const SlideRecord& slide, std::pair<int, int> center_xy, int p) {
    if (p <= 0 || p % 2 != 0) throw ConfigError("extract_patch: p must be positive and even");
    const int half = p / 2;
    const int x = center_xy.first;
    const int y = center_xy.second;
    if (!window_inside(x, y, p, slide.image.height, slide.image.width)) {
        throw BoundaryError("extract_patch: window at (" + std::to_string(x) + ", " +
                            std::to_string(y) + ") with p=" + std::to_string(p) +
                            " exceeds image bounds of slide " + slide.slide_id);
    }
    return crop(slide.image, y - half, x - half, p, p);
}

DatasetBundle split_by_slide(DatasetBundle bundle, const std::set<std::string>& test_slide_ids) {
    std::unordered_set<std::string> known;
    for (const auto& s : bundle.slides) known.insert(s.slide_id);
    for (const auto& id : test_slide_ids) {
        if (!known.count(id)) throw ConfigError("split_by_slide: unknown slide id '" + id + "'");
    }
    for (auto& s : bundle.slides) {
        s.split = test_slide_ids.count(s.slide_id) ? Split::test : Split::train;
    }
    return bundle;
}

DatasetBundle load_dataset(const fs::path& root, const IngestConfig& cfg) {
    if (cfg.patch <= 0 || cfg.patch % 2 != 0) {
        throw ConfigError("load_dataset: patch size must be positive and even");
    }
    const fs::path meta_path = root / "meta.json";
    if (!fs::exists(meta_path)) throw DatasetLayoutError("missing file: " + meta_path.string());
    json meta;
    try {
        std::ifstream in(meta_path);
        in >> meta;
    } catch (const std::exception& e) {
        throw ParseError("bad meta.json: " + std::string(e.what()));
    }
    if (!meta.contains("patients") || !meta["patients"].is_object()) {
        throw ParseError("meta.json: missing 'patients' object");
    }

    std::vector<std::string> slide_ids;
    for (auto& [sid, _] : meta["patients"].items()) slide_ids.push_back(sid);
    std::sort(slide_ids.begin(), slide_ids.end());
    if (slide_ids.empty()) throw DatasetLayoutError("meta.json lists no slides");

    DatasetBundle bundle;
    std::vector<Mat> per_slide_counts;
    int skipped_boundary = 0;

    for (const std::string& sid : slide_ids) {
        SlideRecord slide;
        slide.slide_id = sid;
        slide.patient_id = meta["patients"][sid].get<std::string>();
        slide.image = read_png(root / "slides" / (sid + ".png"));

        auto coords = read_spots_tsv(root / "spots" / (sid + ".tsv"));
        auto counts = read_counts_tsv(root / "counts" / (sid + ".tsv"));

        if (bundle.gene_names.empty()) {
            bundle.gene_names = counts.gene_names;
        } else if (bundle.gene_names != counts.gene_names) {
            throw AlignmentError("gene names in counts/" + sid + ".tsv differ from other slides");
        }

        std::unordered_map<std::string, Eigen::Index> row_of;
        for (std::size_t i = 0; i < counts.spot_ids.size(); ++i) {
            row_of[counts.spot_ids[i]] = static_cast<Eigen::Index>(i);
        }
        std::unordered_set<std::string> coord_ids;
        for (const auto& c : coords) coord_ids.insert(c.spot_id);
        for (const auto& cid : counts.spot_ids) {
            if (!coord_ids.count(cid)) {
                throw AlignmentError("spot '" + cid + "' has counts but no coordinates in slide " +
                                     sid);
            }
        }

        Mat slide_counts(static_cast<Eigen::Index>(coords.size()), counts.values.cols());
        Eigen::Index kept_rows = 0;
        for (const auto& c : coords) {
            auto it = row_of.find(c.spot_id);
            if (it == row_of.end()) {
                throw AlignmentError("spot '" + c.spot_id +
                                     "' present in coordinates but missing from counts in slide " +
                                     sid);
            }
            if (!window_inside(c.x, c.y, cfg.patch, slide.image.height, slide.image.width)) {
                ++skipped_boundary;
                continue;
            }
            SpotRecord rec;
            rec.spot_id = c.spot_id;
            rec.x = c.x;
            rec.y = c.y;
            slide.spots.push_back(std::move(rec));
            slide_counts.row(kept_rows++) = counts.values.row(it->second);
        }
        per_slide_counts.push_back(slide_counts.topRows(kept_rows));
        bundle.slides.push_back(std::move(slide));
    }

    Eigen::Index total_spots = 0;
    for (const auto& m : per_slide_counts) total_spots += m.rows();
    Mat all_counts(total_spots, static_cast<Eigen::Index>(bundle.gene_names.size()));
    Eigen::Index r = 0;
    for (const auto& m : per_slide_counts) {
        all_counts.middleRows(r, m.rows()) = m;
        r += m.rows();
    }

    int n_hvg = cfg.n_hvg > 0 ? cfg.n_hvg : static_cast<int>(bundle.gene_names.size());
    auto [kept, gene_log] = select_genes(all_counts, bundle.gene_names, n_hvg, cfg.min_spots);
    // Apply the selection as a set: the bundle keeps genes in their
    // original file order so identity configurations round-trip exactly.
    std::vector<int> kept_sorted = kept;
    std::sort(kept_sorted.begin(), kept_sorted.end());

    Mat selected(all_counts.rows(), static_cast<Eigen::Index>(kept_sorted.size()));
    std::vector<std::string> kept_names;
    kept_names.reserve(kept_sorted.size());
    for (std::size_t j = 0; j < kept_sorted.size(); ++j) {
        selected.col(static_cast<Eigen::Index>(j)) = all_counts.col(kept_sorted[j]);
        kept_names.push_back(bundle.gene_names[kept_sorted[j]]);
    }
    Mat expression = normalize_expression(selected);

    bundle.gene_names = kept_names;
    r = 0;
    for (auto& slide : bundle.slides) {
        for (auto& spot : slide.spots) {
            spot.expression = expression.row(r++).transpose();
        }
    }

    std::set<std::string> test_ids;
    if (meta.contains("test_slides")) {
        for (const auto& id : meta["test_slides"]) test_ids.insert(id.get<std::string>());
    }
    bundle = split_by_slide(std::move(bundle), test_ids);

    bundle.preprocessing_log.genes_total = gene_log.genes_total;
    bundle.preprocessing_log.genes_after_hvg = gene_log.genes_after_hvg;
    bundle.preprocessing_log.genes_after_min_spots = gene_log.genes_after_min_spots;
    bundle.preprocessing_log.spots_total = bundle.spot_count();
    bundle.preprocessing_log.spots_skipped_boundary = skipped_boundary;
    return bundle;
}

void write_dataset(const fs::path& root, const DatasetBundle& bundle) {
    fs::create_directories(root / "slides");
    fs::create_directories(root / "counts");
    fs::create_directories(root / "spots");

    json patients = json::object();
    json test_slides = json::array();
    for (const auto& slide : bundle.slides) {
        patients[slide.slide_id] = slide.patient_id;
        if (slide.split == Split::test) test_slides.push_back(slide.slide_id);

        write_png(root / "slides" / (slide.slide_id + ".png"), slide.image);

        std::ofstream spots(root / "spots" / (slide.slide_id + ".tsv"));
        spots << "spot_id\tx_pixel\ty_pixel\n";
        for (const auto& s : slide.spots) {
            spots << s.spot_id << '\t' << s.x << '\t' << s.y << '\n';
        }

        std::ofstream counts(root / "counts" / (slide.slide_id + ".tsv"));
        counts << "spot_id";
        for (const auto& g : bundle.gene_names) counts << '\t' << g;
        counts << '\n';
        for (const auto& s : slide.spots) {
            counts << s.spot_id;
            for (Eigen::Index j = 0; j < s.expression.size(); ++j) {
                counts << '\t' << format_count(std::expm1(s.expression(j)));
            }
            counts << '\n';
        }
    }

    json meta;
    meta["patients"] = patients;
    meta["test_slides"] = test_slides;
    std::ofstream out(root / "meta.json");
    out << meta.dump(2) << '\n';
}

namespace {

// Smooth random color field: a coarse random grid upsampled bilinearly.
ImageU8 random_field_image(int h, int w, Rng& rng) {
    const int grid = 8;
    ImageF64 coarse(grid, grid);
    for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
            for (int c = 0; c < 3; ++c) coarse.at(i, j, c) = rng.uniform(20.0, 235.0);
        }
    }
    ImageF64 fine = resize_bilinear(coarse, h, w);
    ImageU8 out(h, w);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(fine.data[i], 0.0, 255.0)));
    }
    return out;
}

// Two laterally separated regions with distinct base colors plus a mild
// smooth modulation; spots split evenly between the halves.
ImageU8 blob_image(int h, int w, Rng& rng, double base[2][3]) {
    for (int b = 0; b < 2; ++b) {
        for (int c = 0; c < 3; ++c) base[b][c] = rng.uniform(40.0, 215.0);
    }
    ImageU8 out(h, w);
    const int grid = 8;
    ImageF64 coarse(grid, grid);
    for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
            for (int c = 0; c < 3; ++c) coarse.at(i, j, c) = rng.uniform(-20.0, 20.0);
        }
    }
    ImageF64 mod = resize_bilinear(coarse, h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int region = x < w / 2 ? 0 : 1;
            for (int c = 0; c < 3; ++c) {
                double v = base[region][c] + mod.at(y, x, c);
                out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return out;
}

Eigen::Vector3d mean_rgb(const ImageU8& patch) {
    Eigen::Vector3d s = Eigen::Vector3d::Zero();
    const int n = patch.height * patch.width;
    for (int y = 0; y < patch.height; ++y) {
        for (int x = 0; x < patch.width; ++x) {
            for (int c = 0; c < 3; ++c) s(c) += patch.at(y, x, c);
        }
    }
    return s / (255.0 * n);
}

std::string zero_pad(int v, int width) {
    std::string s = std::to_string(v);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace

DatasetBundle generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.n_slides <= 0 || cfg.spots_per_slide <= 0 || cfg.n_genes <= 0 || cfg.patch <= 0 ||
        cfg.image_h <= 0 || cfg.image_w <= 0) {
        throw ConfigError("generate_synthetic: non-positive dimension");
    }
    if (cfg.patch % 2 != 0) throw ConfigError("generate_synthetic: patch must be even");
    if (cfg.image_h < cfg.patch || cfg.image_w < cfg.patch) {
        throw ConfigError("generate_synthetic: image too small for the patch size");
    }
    if (cfg.pattern == SynthPattern::blobs && cfg.image_w < 2 * cfg.patch + 2) {
        throw ConfigError("generate_synthetic: blobs pattern needs image_w >= 2*patch + 2");
    }
    if (cfg.n_test_slides < 0 || cfg.n_test_slides > cfg.n_slides) {
        throw ConfigError("generate_synthetic: n_test_slides out of range");
    }

    Rng map_rng(derive_seed(seed, fnv1a64("synth-map")));
    Mat W(cfg.n_genes, 3);
    Vec b(cfg.n_genes);
    for (int i = 0; i < cfg.n_genes; ++i) {
        for (int j = 0; j < 3; ++j) W(i, j) = map_rng.uniform(0.5, 2.0);
        b(i) = map_rng.uniform(0.5, 1.5);
    }

    DatasetBundle bundle;
    for (int j = 0; j < cfg.n_genes; ++j) bundle.gene_names.push_back("G" + zero_pad(j, 3));

    const int half = cfg.patch / 2;
    for (int si = 0; si < cfg.n_slides; ++si) {
        Rng rng(derive_seed(seed, fnv1a64("synth-slide"), static_cast<std::uint64_t>(si)));
        SlideRecord slide;
        slide.slide_id = "SYN" + zero_pad(si, 2);
        slide.patient_id = "P" + zero_pad(si, 2);

        double base[2][3] = {};
        if (cfg.pattern == SynthPattern::blobs) {
            slide.image = blob_image(cfg.image_h, cfg.image_w, rng, base);
        } else {
            slide.image = random_field_image(cfg.image_h, cfg.image_w, rng);
        }

        for (int sj = 0; sj < cfg.spots_per_slide; ++sj) {
            SpotRecord spot;
            spot.spot_id = "S" + zero_pad(sj, 4);
            if (cfg.pattern == SynthPattern::blobs) {
                bool left = sj < cfg.spots_per_slide / 2;
                int x_lo = left ? half : cfg.image_w / 2 + half;
                int x_hi = left ? cfg.image_w / 2 - half : cfg.image_w - half;
                if (x_hi < x_lo) throw ConfigError("generate_synthetic: blobs need wider image");
                spot.x = static_cast<int>(rng.uniform_int(x_lo, x_hi));
            } else {
                spot.x = static_cast<int>(rng.uniform_int(half, cfg.image_w - half));
            }
            spot.y = static_cast<int>(rng.uniform_int(half, cfg.image_h - half));
            slide.spots.push_back(std::move(spot));
        }

        for (auto& spot : slide.spots) {
            ImageU8 patch = extract_patch(slide, {spot.x, spot.y}, cfg.patch);
            Eigen::Vector3d stats = mean_rgb(patch);
            Vec expr = W * stats + b;
            if (cfg.sigma > 0) {
                for (int j = 0; j < cfg.n_genes; ++j) expr(j) += rng.normal(0.0, cfg.sigma);
            }
            spot.expression = expr.cwiseMax(0.0);
        }

        slide.split = si >= cfg.n_slides - cfg.n_test_slides ? Split::test : Split::train;
        bundle.slides.push_back(std::move(slide));
    }

    bundle.preprocessing_log.synthetic = true;
    bundle.preprocessing_log.gen_weight = W;
    bundle.preprocessing_log.gen_bias = b;
    bundle.preprocessing_log.gen_sigma = cfg.sigma;
    bundle.preprocessing_log.genes_total = cfg.n_genes;
    bundle.preprocessing_log.genes_after_hvg = cfg.n_genes;
    bundle.preprocessing_log.genes_after_min_spots = cfg.n_genes;
    bundle.preprocessing_log.spots_total = bundle.spot_count();
    return bundle;
}

}  // namespace mmap
