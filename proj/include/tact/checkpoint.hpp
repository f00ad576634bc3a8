#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tact/tensor.hpp"

namespace tact {

// Named-tensor container: string metadata plus an ordered list of tensors,
// each stored in the shared binary tensor format. Used for model, SAE and
// adapter checkpoints and for activation dumps' headers.
//
//   magic "TACK" | u16 version | u32 nmeta | nmeta x (u16 klen, key, u32 vlen, value)
//   | u32 ntensors | ntensors x (u16 nlen, name, tensor)
struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    static constexpr std::uint16_t kVersion = 1;

    const Tensor& tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return t;
        fail("checkpoint: missing tensor '" + name + "'");
    }

    bool has_tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return true;
        return false;
    }

    const std::string& meta_at(const std::string& key) const {
        const auto it = meta.find(key);
        check(it != meta.end(), "checkpoint: missing metadata '" + key + "'");
        return it->second;
    }

    double meta_num(const std::string& key) const { return std::stod(meta_at(key)); }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        check(bool(os), "checkpoint: cannot open " + path + " for writing");
        io::write_raw(os, "TACK", 4);
        io::write_pod<std::uint16_t>(os, kVersion);
        io::write_pod<std::uint32_t>(os, std::uint32_t(meta.size()));
        for (const auto& [k, v] : meta) {
            io::write_pod<std::uint16_t>(os, std::uint16_t(k.size()));
            io::write_raw(os, k.data(), k.size());
            io::write_pod<std::uint32_t>(os, std::uint32_t(v.size()));
            io::write_raw(os, v.data(), v.size());
        }
        io::write_pod<std::uint32_t>(os, std::uint32_t(tensors.size()));
        for (const auto& [name, t] : tensors) {
            io::write_pod<std::uint16_t>(os, std::uint16_t(name.size()));
            io::write_raw(os, name.data(), name.size());
            io::write_tensor(os, t);
        }
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        check(bool(is), "checkpoint: cannot open " + path);
        char magic[4];
        io::read_raw(is, magic, 4);
        check(std::memcmp(magic, "TACK", 4) == 0, "checkpoint: bad magic in " + path);
        check(io::read_pod<std::uint16_t>(is) == kVersion, "checkpoint: unsupported version in " + path);
        Checkpoint ck;
        const auto nmeta = io::read_pod<std::uint32_t>(is);
        for (std::uint32_t i = 0; i < nmeta; ++i) {
            std::string k(io::read_pod<std::uint16_t>(is), '\0');
            io::read_raw(is, k.data(), k.size());
            std::string v(io::read_pod<std::uint32_t>(is), '\0');
            io::read_raw(is, v.data(), v.size());
            ck.meta.emplace(std::move(k), std::move(v));
        }
        const auto ntensors = io::read_pod<std::uint32_t>(is);
        for (std::uint32_t i = 0; i < ntensors; ++i) {
            std::string name(io::read_pod<std::uint16_t>(is), '\0');
            io::read_raw(is, name.data(), name.size());
            ck.tensors.emplace_back(std::move(name), io::read_tensor(is));
        }
        return ck;
    }

    // content hash over every tensor payload; frozen-parameter integrity checks
    std::uint64_t params_hash() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& [name, t] : tensors) {
            h = fnv1a(name.data(), name.size(), h);
            h = fnv1a(t.data.data(), t.data.size() * sizeof(float), h);
        }
        return h;
    }
};

} // namespace tact
