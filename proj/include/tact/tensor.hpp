#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "tact/common.hpp"
#include "tact/rng.hpp"

namespace tact {

// Dense row-major float32 tensor. Rank is dynamic but almost everything in
// this codebase is rank 1, 2 or 3.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(count(shape), 0.0f);
    }
    Tensor(std::vector<std::size_t> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
        check(data.size() == count(shape), "Tensor: shape/data size mismatch");
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return n;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, float v) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = v;
        return t;
    }

    static Tensor randn(std::vector<std::size_t> s, Rng& rng, float stddev = 1.0f) {
        Tensor t(std::move(s));
        for (auto& x : t.data) x = rng.normal_f() * stddev;
        return t;
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0f;
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // 2D accessors; rows()/cols() are the leading/trailing extents
    std::size_t rows() const {
        check(rank() == 2, "Tensor::rows: rank != 2");
        return shape[0];
    }
    std::size_t cols() const {
        check(rank() == 2, "Tensor::cols: rank != 2");
        return shape[1];
    }
    float& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    float at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::uint64_t content_hash() const {
        std::uint64_t h = fnv1a(shape.data(), shape.size() * sizeof(std::size_t));
        return fnv1a(data.data(), data.size() * sizeof(float), h);
    }
};

// ---------------------------------------------------------------------------
// Binary tensor format, shared by checkpoints, activation dumps and datasets:
//   magic "TACT" | u16 version | u16 rank | u64 extents[rank] | f32 payload
// Everything little-endian, payload row-major.
// ---------------------------------------------------------------------------

namespace io {

constexpr std::uint16_t kTensorFormatVersion = 1;

inline void write_raw(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    check(bool(os), "tensor io: write failed");
}

inline void read_raw(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    check(is.gcount() == static_cast<std::streamsize>(n), "tensor io: truncated payload");
}

template <class T>
void write_pod(std::ostream& os, T v) {
    write_raw(os, &v, sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
    T v{};
    read_raw(is, &v, sizeof(T));
    return v;
}

inline void write_tensor(std::ostream& os, const Tensor& t) {
    write_raw(os, "TACT", 4);
    write_pod<std::uint16_t>(os, kTensorFormatVersion);
    write_pod<std::uint16_t>(os, static_cast<std::uint16_t>(t.rank()));
    for (auto e : t.shape) write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(e));
    write_raw(os, t.data.data(), t.data.size() * sizeof(float));
}

inline Tensor read_tensor(std::istream& is) {
    char magic[4];
    read_raw(is, magic, 4);
    check(std::memcmp(magic, "TACT", 4) == 0, "tensor io: bad magic");
    const auto version = read_pod<std::uint16_t>(is);
    check(version == kTensorFormatVersion, "tensor io: unsupported format version");
    const auto rank = read_pod<std::uint16_t>(is);
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(read_pod<std::uint64_t>(is));
    Tensor t(shape);
    read_raw(is, t.data.data(), t.data.size() * sizeof(float));
    return t;
}

} // namespace io
} // namespace tact
