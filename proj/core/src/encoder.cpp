#include "mmap/encoder.hpp"

#include "mmap/errors.hpp"

namespace mmap {

MultiMagViews make_multimag_views(const ImageU8& patch, CropMode mode, Rng& rng) {
    if (patch.height != patch.width) throw ConfigError("make_multimag_views: patch must be square");
    const int p = patch.height;
    if (p % 4 != 0) throw ConfigError("make_multimag_views: p must be divisible by 4");

    MultiMagViews out;
    ImageF64 full = to_f64(patch);
    out.view0 = resize_bilinear(full, p, p);

    const int sizes[2] = {p / 2, p / 4};
    for (int k = 0; k < 2; ++k) {
        const int s = sizes[k];
        int oy, ox;
        if (mode == CropMode::center) {
            oy = (p - s) / 2;
            ox = (p - s) / 2;
        } else {
            oy = static_cast<int>(rng.uniform_int(0, p - s));
            ox = static_cast<int>(rng.uniform_int(0, p - s));
        }
        out.crop_offsets[k] = {oy, ox};
        ImageF64 sub = crop(full, oy, ox, s, s);
        (k == 0 ? out.view1 : out.view2) = resize_bilinear(sub, p, p);
    }
    return out;
}

ImageF64 normalize_view(const ImageF64& view) {
    ImageF64 out(view.height, view.width);
    for (int y = 0; y < view.height; ++y) {
        for (int x = 0; x < view.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) = (view.at(y, x, c) / 255.0 - kImagenetMean[c]) / kImagenetStd[c];
            }
        }
    }
    return out;
}

Mat patchify(const ImageF64& view, int vit_patch) {
    if (view.height != view.width) throw ShapeError("patchify: view must be square");
    const int p = view.height;
    if (vit_patch <= 0 || p % vit_patch != 0) {
        throw ShapeError("patchify: view side must be a multiple of vit_patch");
    }
    const int n = p / vit_patch;
    const int tau = n * n;
    Mat out(tau, 3 * vit_patch * vit_patch);
    for (int py = 0; py < n; ++py) {
        for (int px = 0; px < n; ++px) {
            Eigen::Index row = static_cast<Eigen::Index>(py) * n + px;
            Eigen::Index col = 0;
            for (int y = 0; y < vit_patch; ++y) {
                for (int x = 0; x < vit_patch; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        out(row, col++) = view.at(py * vit_patch + y, px * vit_patch + x, c);
                    }
                }
            }
        }
    }
    return out;
}

TokenSequence encode_tokens(const ImageF64& normalized_view, const VitEncoder& params,
                            Magnification magnification) {
    if (normalized_view.height != params.cfg.image_px ||
        normalized_view.width != params.cfg.image_px) {
        throw ShapeError("encode_tokens: view is " + std::to_string(normalized_view.height) + "x" +
                         std::to_string(normalized_view.width) + " but encoder expects " +
                         std::to_string(params.cfg.image_px));
    }
    Graph g(/*grad_enabled=*/false);
    Var tokens = params.forward(g, patchify(normalized_view, params.cfg.vit_patch));
    TokenSequence seq;
    seq.tokens = g.value(tokens);
    seq.magnification = magnification;
    return seq;
}

}  // namespace mmap
