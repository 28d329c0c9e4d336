#pragma once

#include <array>
#include <utility>

#include "mmap/autodiff.hpp"
#include "mmap/image.hpp"
#include "mmap/nn.hpp"
#include "mmap/rng.hpp"

namespace mmap {

enum class Magnification { x5, x10, x20 };

// Three views of one patch: the original (x5) plus p/2 and p/4 crops
// (x10, x20), all resized back to p x p. Values stay on the [0, 255]
// scale until normalize_view.
struct MultiMagViews {
    ImageF64 view0, view1, view2;
    std::array<std::pair<int, int>, 2> crop_offsets;  // (y, x) origins of the two sub-patches
};

enum class CropMode { random, center };

// p must be divisible by 4. Center mode is deterministic; random mode
// draws crop origins uniformly over valid positions from rng.
MultiMagViews make_multimag_views(const ImageU8& patch, CropMode mode, Rng& rng);

// Maps a [0, 255] view to encoder input range: x/255 then per-channel
// ImageNet mean/std normalization.
ImageF64 normalize_view(const ImageF64& view);

inline constexpr double kImagenetMean[3] = {0.485, 0.456, 0.406};
inline constexpr double kImagenetStd[3] = {0.229, 0.224, 0.225};

struct TokenSequence {
    Mat tokens;  // (tau+1) x d, row 0 = [CLS]
    Magnification magnification = Magnification::x5;

    Vec cls() const { return tokens.row(0).transpose(); }
};

// Flattens a normalized view into the tau x (3*vp^2) patch matrix the
// encoder consumes (patches in row-major grid order, pixels row-major,
// channels interleaved).
Mat patchify(const ImageF64& view, int vit_patch);

// Runs the encoder over one normalized view. Deterministic given params.
TokenSequence encode_tokens(const ImageF64& normalized_view, const VitEncoder& params,
                            Magnification magnification);

}  // namespace mmap
