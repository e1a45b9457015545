// Copyright Contributors to the PointField Project
// SPDX-License-Identifier: Apache-2.0

#include "pointfield/params.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>

namespace pointfield::ad {

namespace {

// Checkpoint layout, all integers little-endian:
//   "PFCK" | u32 version | u32 meta count | (u32 len, bytes) key/value pairs
//   | u64 tensor count | per tensor: u32 name len, name bytes, u32 rank,
//     u64 dims[rank], f64 data[product(dims)]
constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    // the build targets are little-endian; the memcpy is the layout contract
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <class T>
T read_le(std::istream& is, const std::string& path) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) {
        throw ParseError(cat("truncated checkpoint: ", path));
    }
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is, const std::string& path) {
    const auto len = read_le<std::uint32_t>(is, path);
    if (len > (1u << 20)) {
        throw ParseError(cat("checkpoint string length ", len, " implausible: ", path));
    }
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) {
        throw ParseError(cat("truncated checkpoint: ", path));
    }
    return s;
}

}  // namespace

Tensor& ParamSet::add(std::string name, Tensor init) {
    require(!name.empty(), "parameter name must be non-empty");
    require(index_.count(name) == 0, "duplicate parameter name: ", name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(init));
    return entries_.back().second;
}

Tensor& ParamSet::add_linear(const std::string& name, std::size_t fan_in, std::size_t fan_out,
                             Rng& rng) {
    require(fan_in > 0 && fan_out > 0, "add_linear: zero dimension for ", name);
    Tensor w({fan_in, fan_out});
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = rng.normal(0.0, stddev);
    }
    return add(name, std::move(w));
}

Tensor& ParamSet::add_bias(const std::string& name, std::size_t n) {
    require(n > 0, "add_bias: zero dimension for ", name);
    return add(name, Tensor({std::size_t{1}, n}));
}

Tensor& ParamSet::get(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter: ", name);
    return entries_[it->second].second;
}

const Tensor& ParamSet::get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter: ", name);
    return entries_[it->second].second;
}

std::size_t ParamSet::total_values() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) {
        n += t.size();
    }
    return n;
}

void ParamSet::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) {
        throw IoError(cat("cannot open checkpoint for writing: ", path));
    }
    os.write(kMagic, 4);
    write_le<std::uint32_t>(os, kVersion);
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(meta_.size()));
    for (const auto& [k, v] : meta_) {
        write_string(os, k);
        write_string(os, v);
    }
    write_le<std::uint64_t>(os, static_cast<std::uint64_t>(entries_.size()));
    for (const auto& [name, t] : entries_) {
        write_string(os, name);
        write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d = 0; d < t.rank(); ++d) {
            write_le<std::uint64_t>(os, static_cast<std::uint64_t>(t.dim(d)));
        }
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) {
        throw IoError(cat("failed writing checkpoint: ", path));
    }
}

ParamSet ParamSet::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError(cat("cannot open checkpoint: ", path));
    }
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw ParseError(cat("not a checkpoint file: ", path));
    }
    const auto version = read_le<std::uint32_t>(is, path);
    if (version != kVersion) {
        throw ParseError(cat("unsupported checkpoint version ", version, ": ", path));
    }
    ParamSet out;
    const auto meta_count = read_le<std::uint32_t>(is, path);
    for (std::uint32_t i = 0; i < meta_count; ++i) {
        std::string k = read_string(is, path);
        std::string v = read_string(is, path);
        out.meta_.emplace(std::move(k), std::move(v));
    }
    const auto tensor_count = read_le<std::uint64_t>(is, path);
    for (std::uint64_t i = 0; i < tensor_count; ++i) {
        std::string name = read_string(is, path);
        const auto rank = read_le<std::uint32_t>(is, path);
        if (rank > 2) {
            throw ParseError(cat("checkpoint tensor '", name, "' has rank ", rank, ": ", path));
        }
        std::vector<std::size_t> shape;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<std::size_t>(read_le<std::uint64_t>(is, path)));
        }
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) {
            throw ParseError(cat("truncated checkpoint: ", path));
        }
        out.add(std::move(name), std::move(t));
    }
    return out;
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params) {
    for (std::size_t i = 0; i < params.count(); ++i) {
        vars_.emplace(params.name_at(i), tape.input(params.tensor_at(i)));
    }
}

double ParamSet::meta_number(const std::string& key) const {
    const auto it = meta_.find(key);
    if (it == meta_.end()) {
        throw ParseError(cat("checkpoint metadata is missing '", key, "'"));
    }
    char* end = nullptr;
    const double value = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0') {
        throw ParseError(cat("checkpoint metadata '", key, "' is not numeric: ",
                             it->second));
    }
    return value;
}

Var BoundParams::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    require(it != vars_.end(), "parameter not bound on this tape: ", name);
    return it->second;
}

std::vector<Tensor> BoundParams::grads(const ParamSet& params) const {
    std::vector<Tensor> out;
    out.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
        out.push_back((*this)[params.name_at(i)].grad());
    }
    return out;
}

}  // namespace pointfield::ad
