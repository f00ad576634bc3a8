#pragma once

#include <cstdint>
#include <vector>

#include "tact/tensor.hpp"

namespace tact {

// One snapshot of the world: H x W x C, row-major (i, j, c).
// Channel roles: 0 = pressure-like, 1 = wind-like, the rest auxiliary state.
struct GridField {
    std::int64_t t = 0;
    Tensor values; // shape {H, W, C}

    GridField() = default;
    GridField(std::int64_t time, std::size_t h, std::size_t w, std::size_t c)
        : t(time), values({h, w, c}) {}

    std::size_t height() const { return values.shape[0]; }
    std::size_t width() const { return values.shape[1]; }
    std::size_t channels() const { return values.shape[2]; }

    float& at(std::size_t i, std::size_t j, std::size_t c) {
        return values.data[(i * width() + j) * channels() + c];
    }
    float at(std::size_t i, std::size_t j, std::size_t c) const {
        return values.data[(i * width() + j) * channels() + c];
    }
};

// Injection log of the extreme-event generator; the synthetic best-track
// archive. One record per (timestep, active event).
struct EventRecord {
    std::uint32_t t = 0;
    std::uint16_t i = 0;
    std::uint16_t j = 0;
    float intensity = 0.0f;
};
using EventTrack = std::vector<EventRecord>;

// Non-overlapping p x p patch decomposition of an H x W grid.
struct PatchLayout {
    std::size_t height = 0, width = 0, patch = 0;

    PatchLayout() = default;
    PatchLayout(std::size_t h, std::size_t w, std::size_t p) : height(h), width(w), patch(p) {
        check(p > 0 && h % p == 0 && w % p == 0, "PatchLayout: patch size must divide grid extents");
    }

    std::size_t patch_rows() const { return height / patch; }
    std::size_t patch_cols() const { return width / patch; }
    std::size_t positions() const { return patch_rows() * patch_cols(); }
    std::size_t position_of_cell(std::size_t i, std::size_t j) const {
        return (i / patch) * patch_cols() + (j / patch);
    }
};

// Flattens a field into (positions x patch*patch*C); feature order within a
// patch is (di, dj, c). unpatchify is the exact inverse.
inline Tensor patchify(const GridField& field, std::size_t p) {
    const std::size_t h = field.height(), w = field.width(), c = field.channels();
    check(p > 0 && h % p == 0 && w % p == 0, "patchify: patch size must divide grid extents");
    const PatchLayout layout(h, w, p);
    Tensor out({layout.positions(), p * p * c});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t pos = layout.position_of_cell(i, j);
            const std::size_t di = i % p, dj = j % p;
            for (std::size_t ch = 0; ch < c; ++ch)
                out.at(pos, (di * p + dj) * c + ch) = field.at(i, j, ch);
        }
    return out;
}

inline GridField unpatchify(const Tensor& patches, const PatchLayout& layout, std::size_t channels,
                            std::int64_t t = 0) {
    const std::size_t p = layout.patch;
    check(patches.rank() == 2 && patches.rows() == layout.positions() &&
              patches.cols() == p * p * channels,
          "unpatchify: shape mismatch");
    GridField field(t, layout.height, layout.width, channels);
    for (std::size_t i = 0; i < layout.height; ++i)
        for (std::size_t j = 0; j < layout.width; ++j) {
            const std::size_t pos = layout.position_of_cell(i, j);
            const std::size_t di = i % p, dj = j % p;
            for (std::size_t ch = 0; ch < channels; ++ch)
                field.at(i, j, ch) = patches.at(pos, (di * p + dj) * channels + ch);
        }
    return field;
}

// Per-timestep event/non-event partition of patch positions. A patch is an
// event patch iff some track record maps into it at that timestep.
inline std::vector<std::vector<char>> label_patches(const EventTrack& track, const PatchLayout& layout,
                                                    std::size_t total_timesteps) {
    std::vector<std::vector<char>> mask(total_timesteps, std::vector<char>(layout.positions(), 0));
    for (const auto& rec : track) {
        check(rec.i < layout.height && rec.j < layout.width, "label_patches: track coordinates out of bounds");
        if (rec.t < total_timesteps) mask[rec.t][layout.position_of_cell(rec.i, rec.j)] = 1;
    }
    return mask;
}

} // namespace tact
