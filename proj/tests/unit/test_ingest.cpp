#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mmap/errors.hpp"
#include "mmap/ingest.hpp"
#include "oracles.hpp"

using namespace mmap;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

SynthConfig small_synth() {
    SynthConfig cfg;
    cfg.n_slides = 2;
    cfg.spots_per_slide = 50;
    cfg.n_genes = 8;
    cfg.patch = 16;
    cfg.image_h = 128;
    cfg.image_w = 128;
    cfg.sigma = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("select_genes ranks by log1p variance with index tie-break") {
    // Three genes with per-gene log1p variances (0, v, v): gene 0 constant,
    // genes 1 and 2 identical columns (exact variance tie).
    Mat counts(4, 3);
    counts << 5, 0, 0,
              5, 3, 3,
              5, 9, 9,
              5, 1, 1;
    auto [kept, log] = select_genes(counts, {"a", "b", "c"}, 2, 0);
    CHECK(kept == std::vector<int>{1, 2});
    CHECK(log.genes_total == 3);
    CHECK(log.genes_after_min_spots == 2);
}

TEST_CASE("select_genes identity case keeps everything") {
    Mat counts(3, 4);
    counts << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12;
    auto [kept, log] = select_genes(counts, {"a", "b", "c", "d"}, 4, 0);
    std::vector<int> sorted = kept;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("select_genes min_spots drops rarely expressed genes") {
    Mat counts(4, 2);
    counts << 9, 1,
              7, 0,
              5, 0,
              3, 0;
    // gene 1 expressed in one spot only
    auto [kept, log] = select_genes(counts, {"a", "b"}, 2, 2);
    CHECK(kept == std::vector<int>{0});
    // invariant: every kept gene expressed in >= min_spots spots
    for (int j : kept) {
        int expressed = 0;
        for (int i = 0; i < 4; ++i) {
            if (counts(i, j) > 0) ++expressed;
        }
        CHECK(expressed >= 2);
    }
}

TEST_CASE("select_genes rejects bad configs") {
    Mat counts(2, 2);
    counts << 1, 2, 3, 4;
    CHECK_THROWS_AS(select_genes(counts, {"a", "b"}, 3, 0), ConfigError);
    CHECK_THROWS_AS(select_genes(counts, {"a", "b"}, 0, 0), ConfigError);
}

TEST_CASE("normalize_expression applies element-wise log1p") {
    Mat counts(2, 2);
    counts << 0.0, std::exp(1.0) - 1.0,
              std::exp(2.0) - 1.0, 0.0;
    Mat out = normalize_expression(counts);
    CHECK(out(0, 0) == doctest::Approx(0.0));
    CHECK(out(0, 1) == doctest::Approx(1.0));
    CHECK(out(1, 0) == doctest::Approx(2.0));
    CHECK(out(1, 1) == doctest::Approx(0.0));

    Mat bad(1, 1);
    bad << -0.5;
    CHECK_THROWS_AS(normalize_expression(bad), DomainError);
}

TEST_CASE("normalize_expression inverts through expm1 to 1e-9 relative") {
    Rng rng(8);
    Mat counts(20, 5);
    for (int i = 0; i < counts.size(); ++i) counts.data()[i] = rng.uniform(0.0, 5000.0);
    Mat back = normalize_expression(counts).array().exp() - 1.0;
    for (int i = 0; i < counts.size(); ++i) {
        CHECK(back.data()[i] ==
              doctest::Approx(counts.data()[i]).epsilon(1e-9));
    }
}

TEST_CASE("extract_patch returns the exact window") {
    SlideRecord slide;
    slide.slide_id = "s";
    slide.image = ImageU8(200, 200);
    Rng rng(2);
    for (auto& v : slide.image.data) v = static_cast<std::uint8_t>(rng.uniform_index(256));

    ImageU8 patch = extract_patch(slide, {100, 100}, 112);
    CHECK(patch.height == 112);
    CHECK(patch.width == 112);
    // rows/cols 44..155 inclusive
    for (int y = 0; y < 112; ++y) {
        for (int x = 0; x < 112; ++x) {
            for (int c = 0; c < 3; ++c) {
                CHECK(patch.at(y, x, c) == slide.image.at(44 + y, 44 + x, c));
            }
        }
    }

    CHECK_THROWS_AS(extract_patch(slide, {10, 10}, 112), BoundaryError);
    CHECK_THROWS_AS(extract_patch(slide, {100, 100}, 111), ConfigError);

    // constant image -> constant patch
    std::fill(slide.image.data.begin(), slide.image.data.end(), std::uint8_t{42});
    ImageU8 cpatch = extract_patch(slide, {57, 63}, 16);
    for (auto v : cpatch.data) CHECK(v == 42);
}

TEST_CASE("split_by_slide assigns splits and validates ids") {
    DatasetBundle bundle = generate_synthetic(small_synth(), 1);
    bundle = split_by_slide(std::move(bundle), {"SYN01"});
    CHECK(bundle.count_split(Split::train) == 1);
    CHECK(bundle.count_split(Split::test) == 1);
    CHECK(bundle.slides[1].split == Split::test);

    bundle = split_by_slide(std::move(bundle), {});
    CHECK(bundle.count_split(Split::train) == 2);
    CHECK(bundle.count_split(Split::test) == 0);

    bundle = split_by_slide(std::move(bundle), {"SYN00", "SYN01"});
    CHECK(bundle.count_split(Split::train) == 0);

    CHECK_THROWS_AS(split_by_slide(std::move(bundle), {"nope"}), ConfigError);
}

TEST_CASE("generate_synthetic is deterministic and shape-correct") {
    SynthConfig cfg = small_synth();
    DatasetBundle a = generate_synthetic(cfg, 123);
    DatasetBundle b = generate_synthetic(cfg, 123);

    REQUIRE(a.slides.size() == 2);
    CHECK(a.spot_count() == 100);
    for (const auto& slide : a.slides) {
        for (const auto& spot : slide.spots) CHECK(spot.expression.size() == 8);
    }
    // bit-identical across runs with the same seed
    for (std::size_t s = 0; s < a.slides.size(); ++s) {
        CHECK(a.slides[s].image == b.slides[s].image);
        for (std::size_t i = 0; i < a.slides[s].spots.size(); ++i) {
            CHECK(a.slides[s].spots[i].x == b.slides[s].spots[i].x);
            CHECK(a.slides[s].spots[i].expression == b.slides[s].spots[i].expression);
        }
    }

    // different seed: same shapes/metadata, different images
    DatasetBundle c = generate_synthetic(cfg, 124);
    CHECK(c.slides.size() == a.slides.size());
    CHECK(c.gene_names == a.gene_names);
    CHECK(c.slides[0].slide_id == a.slides[0].slide_id);
    CHECK(c.slides[0].image.data != a.slides[0].image.data);

    CHECK_THROWS_AS(generate_synthetic(SynthConfig{.n_slides = 0}, 1), ConfigError);
}

TEST_CASE("synthetic expression is a learnable linear map of mean patch RGB") {
    SynthConfig cfg = small_synth();
    DatasetBundle bundle = generate_synthetic(cfg, 77);

    // Gather mean patch RGB and expression for every spot.
    Mat X(bundle.spot_count(), 3), Y(bundle.spot_count(), cfg.n_genes);
    int r = 0;
    for (const auto& slide : bundle.slides) {
        for (const auto& spot : slide.spots) {
            ImageU8 patch = extract_patch(slide, {spot.x, spot.y}, cfg.patch);
            Eigen::Vector3d s = Eigen::Vector3d::Zero();
            for (int y = 0; y < patch.height; ++y) {
                for (int x = 0; x < patch.width; ++x) {
                    for (int c = 0; c < 3; ++c) s(c) += patch.at(y, x, c);
                }
            }
            X.row(r) = (s / (255.0 * patch.height * patch.width)).transpose();
            Y.row(r) = spot.expression.transpose();
            ++r;
        }
    }
    // sigma = 0: OLS from mean RGB recovers the expression almost exactly.
    for (double r2 : oracle::ols_r2(X, Y)) CHECK(r2 >= 0.99);
}

TEST_CASE("written dataset reloads field-for-field") {
    TempDir dir("mmap_roundtrip");
    SynthConfig cfg = small_synth();
    cfg.n_test_slides = 1;
    DatasetBundle original = generate_synthetic(cfg, 9);
    write_dataset(dir.path, original);

    IngestConfig ic;
    ic.n_hvg = 0;  // keep all genes
    ic.min_spots = 0;
    ic.patch = cfg.patch;
    DatasetBundle re = load_dataset(dir.path, ic);

    REQUIRE(re.slides.size() == original.slides.size());
    CHECK(re.gene_names == original.gene_names);
    for (std::size_t s = 0; s < re.slides.size(); ++s) {
        const auto& sa = original.slides[s];
        const auto& sb = re.slides[s];
        CHECK(sa.slide_id == sb.slide_id);
        CHECK(sa.patient_id == sb.patient_id);
        CHECK(sa.split == sb.split);
        CHECK(sa.image == sb.image);
        REQUIRE(sa.spots.size() == sb.spots.size());
        for (std::size_t i = 0; i < sa.spots.size(); ++i) {
            CHECK(sa.spots[i].spot_id == sb.spots[i].spot_id);
            CHECK(sa.spots[i].x == sb.spots[i].x);
            CHECK(sa.spots[i].y == sb.spots[i].y);
            for (Eigen::Index j = 0; j < sa.spots[i].expression.size(); ++j) {
                CHECK(sb.spots[i].expression(j) ==
                      doctest::Approx(sa.spots[i].expression(j)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("load_dataset reports layout and alignment errors") {
    TempDir dir("mmap_ingest_errors");
    SynthConfig cfg = small_synth();
    cfg.spots_per_slide = 5;
    DatasetBundle bundle = generate_synthetic(cfg, 3);
    write_dataset(dir.path, bundle);

    IngestConfig ic;
    ic.n_hvg = 0;
    ic.min_spots = 0;
    ic.patch = cfg.patch;

    SUBCASE("missing counts file") {
        fs::remove(dir.path / "counts" / "SYN00.tsv");
        CHECK_THROWS_AS(load_dataset(dir.path, ic), DatasetLayoutError);
    }
    SUBCASE("missing meta.json") {
        fs::remove(dir.path / "meta.json");
        CHECK_THROWS_AS(load_dataset(dir.path, ic), DatasetLayoutError);
    }
    SUBCASE("counts missing one spot present in coordinates") {
        // Drop the row for spot S0002 from the counts table.
        fs::path counts = dir.path / "counts" / "SYN00.tsv";
        std::ifstream in(counts);
        std::string line, keep;
        while (std::getline(in, line)) {
            if (line.rfind("S0002\t", 0) != 0) keep += line + "\n";
        }
        in.close();
        std::ofstream(counts) << keep;
        try {
            load_dataset(dir.path, ic);
            FAIL("expected AlignmentError");
        } catch (const AlignmentError& e) {
            CHECK(std::string(e.what()).find("S0002") != std::string::npos);
        }
    }
    SUBCASE("non-numeric count value") {
        fs::path counts = dir.path / "counts" / "SYN01.tsv";
        std::ifstream in(counts);
        std::string all((std::istreambuf_iterator<char>(in)), {});
        in.close();
        std::size_t tab = all.find('\t', all.find('\n') + 1);
        all.replace(tab + 1, 3, "oop");
        std::ofstream(counts) << all;
        CHECK_THROWS_AS(load_dataset(dir.path, ic), ParseError);
    }
    SUBCASE("boundary spots are skipped and counted") {
        IngestConfig big = ic;
        big.patch = 120;  // image is 128; many windows fall outside
        DatasetBundle re = load_dataset(dir.path, big);
        CHECK(re.spot_count() + re.preprocessing_log.spots_skipped_boundary ==
              bundle.spot_count());
        CHECK(re.preprocessing_log.spots_skipped_boundary > 0);
    }
}
