#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "tact/gridfield.hpp"
#include "tact/rng.hpp"
#include "tact/tensor.hpp"

namespace tact {

// Configuration of the synthetic world. Generation is a pure function of
// these values; two runs with equal params are bit-identical.
struct WorldParams {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t channels = 4;
    std::size_t patch = 4;
    std::size_t timesteps = 2000;

    // smooth background: superposed traveling waves
    std::size_t wave_count = 6;
    double wave_amplitude = 0.75;
    std::size_t wave_max_wavenumber = 3;
    double advect_vx = 0.35; // cells per step, along columns
    double advect_vy = 0.20; // cells per step, along rows
    double diffusion = 0.01;

    // rare extreme events
    // rarity caps the fraction of event-bearing (timestep, patch) slots over
    // the whole sequence; duty is the targeted fraction of timesteps with an
    // active event. With one event at a time: duty / positions <= rarity.
    double event_rarity = 0.008;
    double event_duty = 0.30;
    double event_radius = 3.0; // cells; imprint sigma is radius / 2
    double event_depth = 6.0;
    double event_drift_gain = 0.4;
    std::size_t event_life_min = 8;
    std::size_t event_life_max = 14;

    std::uint64_t seed = 1979;

    void validate() const {
        check(height > 0 && width > 0 && channels >= 2, "WorldParams: need a grid with at least 2 channels");
        check(patch > 0 && height % patch == 0 && width % patch == 0,
              "WorldParams: patch size must divide grid extents");
        check(event_rarity >= 0.0 && event_rarity < 1.0, "WorldParams: rarity must lie in [0, 1)");
        check(event_radius < double(std::min(height, width)) / 4.0,
              "WorldParams: event radius too large for the grid");
        check(event_life_min >= 1 && event_life_max >= event_life_min, "WorldParams: bad event lifetime range");
        if (event_rarity > 0.0) {
            const PatchLayout layout(height, width, patch);
            check(event_duty / double(layout.positions()) <= event_rarity + 1e-12,
                  "WorldParams: duty cycle exceeds the configured rarity budget");
        }
    }
};

namespace detail {

// Periodic interpolation kernel for a fractional circular shift on an even
// number of samples: D(x) = sin(pi x) / (N tan(pi x / N)). Exact (modulus‑1)
// transport for every mode below Nyquist, so traveling waves do not decay.
inline std::vector<double> shift_kernel(std::size_t n, double s) {
    std::vector<double> w(n, 0.0);
    const double frac = s - std::floor(s);
    const long ishift = long(std::floor(s));
    if (frac == 0.0) {
        w[std::size_t(((ishift % long(n)) + long(n)) % long(n))] = 1.0;
        return w;
    }
    const double pi = 3.14159265358979323846;
    double total = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
        const double x = double(d) - s;
        const double t = std::tan(pi * x / double(n));
        w[d] = std::sin(pi * x) / (double(n) * t);
        total += w[d];
    }
    // unit DC gain in exact arithmetic; renormalize away rounding residue
    for (auto& v : w) v /= total;
    return w;
}

// out[j*stride] = sum_d w[d] * in[(j - d) mod n]; in is a dense lane copy,
// out writes back through the original strided layout. Double accumulation.
inline void circular_convolve(const std::vector<double>& w, const float* in, float* out, std::size_t n,
                              std::size_t out_stride) {
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < n; ++d) s += w[d] * double(in[(j + n - d) % n]);
        out[j * out_stride] = float(s);
    }
}

} // namespace detail

// One deterministic advection-diffusion step with periodic boundaries:
// fractional circular shift by (vy, vx) per channel, then an explicit
// five-point diffusion stencil. Both parts conserve the spatial mean.
inline GridField step_dynamics(const GridField& field, const WorldParams& params) {
    const std::size_t h = field.height(), w = field.width(), c = field.channels();
    GridField out = field;
    out.t = field.t + 1;

    const bool shift_x = params.advect_vx != 0.0;
    const bool shift_y = params.advect_vy != 0.0;
    const auto kx = shift_x ? detail::shift_kernel(w, params.advect_vx) : std::vector<double>{};
    const auto ky = shift_y ? detail::shift_kernel(h, params.advect_vy) : std::vector<double>{};

    std::vector<float> lane(std::max(h, w));
    for (std::size_t ch = 0; ch < c; ++ch) {
        if (shift_x) {
            for (std::size_t i = 0; i < h; ++i) {
                float* row = &out.at(i, 0, ch);
                for (std::size_t j = 0; j < w; ++j) lane[j] = row[j * c];
                detail::circular_convolve(kx, lane.data(), row, w, c);
            }
        }
        if (shift_y) {
            for (std::size_t j = 0; j < w; ++j) {
                float* col = &out.at(0, j, ch);
                for (std::size_t i = 0; i < h; ++i) lane[i] = col[i * w * c];
                detail::circular_convolve(ky, lane.data(), col, h, w * c);
            }
        }
    }

    if (params.diffusion != 0.0) {
        const float kappa = float(params.diffusion);
        GridField diffused = out;
        for (std::size_t i = 0; i < h; ++i) {
            const std::size_t in = (i + 1) % h, ip = (i + h - 1) % h;
            for (std::size_t j = 0; j < w; ++j) {
                const std::size_t jn = (j + 1) % w, jp = (j + w - 1) % w;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const float lap = out.at(in, j, ch) + out.at(ip, j, ch) + out.at(i, jn, ch) +
                                      out.at(i, jp, ch) - 4.0f * out.at(i, j, ch);
                    diffused.at(i, j, ch) = out.at(i, j, ch) + kappa * lap;
                }
            }
        }
        out = std::move(diffused);
    }
    return out;
}

// Smooth background: per channel, a seeded superposition of traveling
// sinusoidal waves at t=0, advected forward by step_dynamics.
inline std::vector<GridField> generate_background(const WorldParams& params, std::size_t total_steps) {
    params.validate();
    check(total_steps >= 2, "generate_background: need at least two timesteps");
    Rng rng = Rng(params.seed).split(0x6267); // background stream

    GridField first(0, params.height, params.width, params.channels);
    const double amp = params.wave_amplitude / std::sqrt(double(std::max<std::size_t>(params.wave_count, 1)));
    for (std::size_t ch = 0; ch < params.channels; ++ch) {
        for (std::size_t m = 0; m < params.wave_count; ++m) {
            const double kx = double(1 + rng.below(params.wave_max_wavenumber));
            const double ky = double(rng.below(params.wave_max_wavenumber + 1));
            const double sx = rng.below(2) ? 1.0 : -1.0;
            const double phase = rng.uniform(0.0, 6.283185307179586);
            const double a = amp * rng.uniform(0.6, 1.4);
            for (std::size_t i = 0; i < params.height; ++i)
                for (std::size_t j = 0; j < params.width; ++j) {
                    const double arg = 6.283185307179586 * (sx * kx * double(j) / double(params.width) +
                                                            ky * double(i) / double(params.height)) +
                                       phase;
                    first.at(i, j, ch) += float(a * std::sin(arg));
                }
        }
    }

    std::vector<GridField> fields;
    fields.reserve(total_steps);
    fields.push_back(std::move(first));
    for (std::size_t t = 1; t < total_steps; ++t) fields.push_back(step_dynamics(fields.back(), params));
    return fields;
}

namespace detail {

// toroidal displacement of a from b in one axis, in (-n/2, n/2]
inline double wrap_delta(double a, double b, std::size_t n) {
    double d = a - b;
    const double half = double(n) / 2.0;
    while (d > half) d -= double(n);
    while (d < -half) d += double(n);
    return d;
}

struct ActiveEvent {
    double ci = 0.0, cj = 0.0; // real-valued center
    std::size_t age = 0;
    std::size_t lifetime = 0;
    double depth = 0.0;
};

// lifetime intensity profile: smooth spin-up and decay, never below half depth
inline double intensity_at(const ActiveEvent& e) {
    const double x = (double(e.age) + 0.5) / double(e.lifetime);
    return e.depth * (0.5 + 0.5 * std::sin(3.14159265358979323846 * x));
}

inline void imprint_event(GridField& field, const ActiveEvent& e, double sigma) {
    const std::size_t h = field.height(), w = field.width();
    const double reach = 3.5 * sigma;
    const double inten = intensity_at(e);
    for (std::size_t i = 0; i < h; ++i) {
        const double dy = wrap_delta(double(i), e.ci, h);
        if (std::fabs(dy) > reach) continue;
        for (std::size_t j = 0; j < w; ++j) {
            const double dx = wrap_delta(double(j), e.cj, w);
            if (std::fabs(dx) > reach) continue;
            const double r2 = dx * dx + dy * dy;
            const double g = std::exp(-r2 / (2.0 * sigma * sigma));
            // pressure-like depression and a rotational wind-magnitude ring
            field.at(i, std::size_t(j), 0) -= float(inten * g);
            const double r = std::sqrt(r2);
            field.at(i, std::size_t(j), 1) += float(0.8 * inten * (r / sigma) * g);
        }
    }
}

} // namespace detail

// Composes rare extreme events onto a background sequence. Events spawn at
// seeded random locations, persist for a seeded lifetime while drifting with
// the local background wind, and every injection is logged in the track.
// rarity == 0 leaves the fields untouched and the track empty.
inline std::pair<std::vector<GridField>, EventTrack> inject_events(std::vector<GridField> fields,
                                                                   const WorldParams& params) {
    params.validate();
    EventTrack track;
    if (params.event_rarity <= 0.0 || fields.empty()) return {std::move(fields), std::move(track)};

    Rng rng = Rng(params.seed).split(0x6576); // event stream
    const std::size_t total = fields.size();
    const double sigma = params.event_radius / 2.0;
    const double mean_life = 0.5 * double(params.event_life_min + params.event_life_max);
    const double mean_gap = std::max(1.0, mean_life * (1.0 - params.event_duty) / std::max(params.event_duty, 1e-9));
    const std::size_t gap_lo = std::size_t(std::max(1.0, std::floor(mean_gap * 0.75)));
    const std::size_t gap_hi = std::size_t(std::ceil(mean_gap * 1.25));

    const PatchLayout layout(params.height, params.width, params.patch);
    const std::size_t slot_budget = std::size_t(params.event_rarity * double(total * layout.positions()));

    std::size_t used_slots = 0;
    std::size_t t = gap_lo + rng.below(gap_hi - gap_lo + 1);
    while (t < total) {
        detail::ActiveEvent e;
        e.lifetime = params.event_life_min + rng.below(params.event_life_max - params.event_life_min + 1);
        e.ci = rng.uniform(0.0, double(params.height));
        e.cj = rng.uniform(0.0, double(params.width));
        e.depth = params.event_depth * rng.uniform(0.85, 1.15);
        if (used_slots + e.lifetime > slot_budget) break;

        for (; e.age < e.lifetime && t < total; ++e.age, ++t) {
            const std::size_t ri = std::size_t(std::llround(e.ci) % long(params.height) + params.height) %
                                   params.height;
            const std::size_t rj = std::size_t(std::llround(e.cj) % long(params.width) + params.width) %
                                   params.width;
            // drift with the local background wind channel
            const double wlocal = std::tanh(double(fields[t].at(ri, rj, 1)));
            const double scale = 1.0 + params.event_drift_gain * wlocal;
            detail::imprint_event(fields[t], e, sigma);
            track.push_back({std::uint32_t(t), std::uint16_t(ri), std::uint16_t(rj),
                             float(detail::intensity_at(e))});
            ++used_slots;
            e.ci += params.advect_vy * scale;
            e.cj += params.advect_vx * scale;
            if (e.ci < 0) e.ci += double(params.height);
            if (e.ci >= double(params.height)) e.ci -= double(params.height);
            if (e.cj < 0) e.cj += double(params.width);
            if (e.cj >= double(params.width)) e.cj -= double(params.width);
        }
        t += gap_lo + rng.below(gap_hi - gap_lo + 1);
    }
    return {std::move(fields), std::move(track)};
}

// ---------------------------------------------------------------------------
// Dataset with disjoint time splits, serialized as:
//   magic "TACS" | u16 version | u64 H W C T patch train_end calib_end
//   | T field tensors (numerics format) | u32 record count | track records
// Track records are (u32 t, u16 i, u16 j, f32 intensity), little-endian.
// ---------------------------------------------------------------------------

struct Dataset {
    WorldParams params;
    std::vector<GridField> fields;
    EventTrack track;
    std::size_t train_end = 0;
    std::size_t calib_end = 0;

    std::size_t total() const { return fields.size(); }

    // distinct event-bearing timesteps within [lo, hi)
    std::size_t event_timesteps(std::size_t lo, std::size_t hi) const {
        std::vector<char> seen(fields.size(), 0);
        for (const auto& r : track)
            if (r.t >= lo && r.t < hi) seen[r.t] = 1;
        std::size_t n = 0;
        for (std::size_t i = lo; i < hi && i < seen.size(); ++i) n += seen[i];
        return n;
    }
};

inline Dataset generate_dataset(const WorldParams& params, double train_frac = 0.70,
                                double calib_frac = 0.15) {
    params.validate();
    check(train_frac > 0.0 && calib_frac > 0.0 && train_frac + calib_frac < 1.0,
          "generate_dataset: split fractions must leave room for a test range");
    Dataset ds;
    ds.params = params;
    auto [fields, track] = inject_events(generate_background(params, params.timesteps), params);
    ds.fields = std::move(fields);
    ds.track = std::move(track);
    ds.train_end = std::size_t(double(params.timesteps) * train_frac);
    ds.calib_end = ds.train_end + std::size_t(double(params.timesteps) * calib_frac);
    check(ds.calib_end < params.timesteps, "generate_dataset: empty test split");
    return ds;
}

constexpr std::uint16_t kDatasetFormatVersion = 1;

inline void export_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    check(bool(os), "export_dataset: cannot open " + path);
    io::write_raw(os, "TACS", 4);
    io::write_pod<std::uint16_t>(os, kDatasetFormatVersion);
    for (std::uint64_t v : {std::uint64_t(ds.params.height), std::uint64_t(ds.params.width),
                            std::uint64_t(ds.params.channels), std::uint64_t(ds.fields.size()),
                            std::uint64_t(ds.params.patch), std::uint64_t(ds.train_end),
                            std::uint64_t(ds.calib_end)})
        io::write_pod<std::uint64_t>(os, v);
    for (const auto& f : ds.fields) io::write_tensor(os, f.values);
    io::write_pod<std::uint32_t>(os, std::uint32_t(ds.track.size()));
    for (const auto& r : ds.track) {
        io::write_pod<std::uint32_t>(os, r.t);
        io::write_pod<std::uint16_t>(os, r.i);
        io::write_pod<std::uint16_t>(os, r.j);
        io::write_pod<float>(os, r.intensity);
    }
}

inline Dataset import_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    check(bool(is), "import_dataset: cannot open " + path);
    char magic[4];
    io::read_raw(is, magic, 4);
    check(std::memcmp(magic, "TACS", 4) == 0, "import_dataset: bad magic");
    check(io::read_pod<std::uint16_t>(is) == kDatasetFormatVersion, "import_dataset: unsupported version");
    Dataset ds;
    ds.params.height = std::size_t(io::read_pod<std::uint64_t>(is));
    ds.params.width = std::size_t(io::read_pod<std::uint64_t>(is));
    ds.params.channels = std::size_t(io::read_pod<std::uint64_t>(is));
    const auto total = std::size_t(io::read_pod<std::uint64_t>(is));
    ds.params.patch = std::size_t(io::read_pod<std::uint64_t>(is));
    ds.params.timesteps = total;
    ds.train_end = std::size_t(io::read_pod<std::uint64_t>(is));
    ds.calib_end = std::size_t(io::read_pod<std::uint64_t>(is));
    check(ds.train_end < ds.calib_end && ds.calib_end < total, "import_dataset: corrupt split boundaries");
    ds.fields.reserve(total);
    for (std::size_t t = 0; t < total; ++t) {
        GridField f;
        f.t = std::int64_t(t);
        f.values = io::read_tensor(is);
        check(f.values.shape ==
                  std::vector<std::size_t>{ds.params.height, ds.params.width, ds.params.channels},
              "import_dataset: field shape mismatch");
        ds.fields.push_back(std::move(f));
    }
    const auto nrec = io::read_pod<std::uint32_t>(is);
    ds.track.reserve(nrec);
    for (std::uint32_t r = 0; r < nrec; ++r) {
        EventRecord rec;
        rec.t = io::read_pod<std::uint32_t>(is);
        rec.i = io::read_pod<std::uint16_t>(is);
        rec.j = io::read_pod<std::uint16_t>(is);
        rec.intensity = io::read_pod<float>(is);
        ds.track.push_back(rec);
    }
    return ds;
}

} // namespace tact
