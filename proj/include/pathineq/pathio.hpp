#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "pathcore.hpp"

namespace pathineq {

// Binary bundle layout (little-endian host order):
//   char[8] magic "PIBUNDLE", u32 version, f64 T, i64 steps, i32 d, u64 n,
//   u64 seed, u32 tag kind, u32 label length, label bytes,
//   then n * (steps+1) * d f64 values, path-major then row-major.
namespace detail {
constexpr char kMagic[8] = {'P', 'I', 'B', 'U', 'N', 'D', 'L', 'E'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("bundle file truncated");
    return v;
}
}  // namespace detail

inline void write_bundle_binary(const PathBundle& b, std::ostream& os) {
    using namespace detail;
    os.write(kMagic, 8);
    put(os, kVersion);
    put(os, b.grid.horizon);
    put(os, static_cast<std::int64_t>(b.grid.steps));
    put(os, static_cast<std::int32_t>(b.dim));
    put(os, static_cast<std::uint64_t>(b.paths.size()));
    put(os, b.seed);
    put(os, static_cast<std::uint32_t>(b.tag.kind));
    put(os, static_cast<std::uint32_t>(b.tag.label.size()));
    os.write(b.tag.label.data(), static_cast<std::streamsize>(b.tag.label.size()));
    for (const auto& p : b.paths)
        os.write(reinterpret_cast<const char*>(p.values().data()),
                 static_cast<std::streamsize>(p.values().size() * sizeof(double)));
    if (!os) throw std::runtime_error("write_bundle_binary: stream error");
}

inline PathBundle read_bundle_binary(std::istream& is) {
    using namespace detail;
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("not a path bundle file");
    auto version = get<std::uint32_t>(is);
    if (version != kVersion) throw std::runtime_error("unsupported bundle version " + std::to_string(version));
    PathBundle b;
    double T = get<double>(is);
    auto steps = get<std::int64_t>(is);
    b.grid = make_grid(T, steps);
    b.dim = get<std::int32_t>(is);
    auto n = get<std::uint64_t>(is);
    b.seed = get<std::uint64_t>(is);
    auto kind = get<std::uint32_t>(is);
    if (kind > 2) throw std::runtime_error("bad measure tag");
    b.tag.kind = static_cast<MeasureKind>(kind);
    auto len = get<std::uint32_t>(is);
    b.tag.label.resize(len);
    is.read(b.tag.label.data(), len);
    const std::size_t per = b.grid.size() * static_cast<std::size_t>(b.dim);
    b.paths.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::vector<double> v(per);
        is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(per * sizeof(double)));
        if (!is) throw std::runtime_error("bundle file truncated");
        b.paths.emplace_back(b.grid, b.dim, std::move(v));
    }
    return b;
}

inline void save_bundle(const PathBundle& b, const std::string& file) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + file);
    write_bundle_binary(b, os);
}

inline PathBundle load_bundle(const std::string& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + file);
    return read_bundle_binary(is);
}

// CSV layout: one header line
//   # T=<T> steps=<steps> d=<d> n=<n> seed=<seed> tag=<kind>:<label>
// then a column line and rows path,step,time,x0,...,x{d-1}.
inline void write_bundle_csv(const PathBundle& b, std::ostream& os) {
    os << std::setprecision(17);
    os << "# T=" << b.grid.horizon << " steps=" << b.grid.steps << " d=" << b.dim << " n=" << b.paths.size()
       << " seed=" << b.seed << " tag=" << to_string(b.tag.kind) << ":" << b.tag.label << "\n";
    os << "path,step,time";
    for (int j = 0; j < b.dim; ++j) os << ",x" << j;
    os << "\n";
    for (std::size_t i = 0; i < b.paths.size(); ++i)
        for (std::size_t k = 0; k < b.grid.size(); ++k) {
            os << i << "," << k << "," << b.grid.time(static_cast<std::int64_t>(k));
            for (double v : b.paths[i].row(k)) os << "," << v;
            os << "\n";
        }
}

inline PathBundle read_bundle_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw std::runtime_error("bundle csv: missing header");
    double T = 0;
    std::int64_t steps = 0;
    int d = 0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::string tag;
    {
        std::istringstream hs(line.substr(2));
        std::string tok;
        while (hs >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) continue;
            auto key = tok.substr(0, eq), val = tok.substr(eq + 1);
            if (key == "T") T = std::stod(val);
            else if (key == "steps") steps = std::stoll(val);
            else if (key == "d") d = std::stoi(val);
            else if (key == "n") n = std::stoull(val);
            else if (key == "seed") seed = std::stoull(val);
            else if (key == "tag") tag = val;
        }
    }
    PathBundle b;
    b.grid = make_grid(T, steps);
    b.dim = d;
    b.seed = seed;
    auto colon = tag.find(':');
    b.tag.kind = measure_kind_from(tag.substr(0, colon));
    if (colon != std::string::npos) b.tag.label = tag.substr(colon + 1);
    std::getline(is, line);  // column names
    b.paths.assign(n, Path(b.grid, d));
    std::size_t rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        std::size_t i = std::stoull(cell);
        std::getline(ls, cell, ',');
        std::size_t k = std::stoull(cell);
        std::getline(ls, cell, ',');
        if (i >= n || k >= b.grid.size()) throw std::runtime_error("bundle csv: index out of range");
        for (int j = 0; j < d; ++j) {
            if (!std::getline(ls, cell, ',')) throw std::runtime_error("bundle csv: short row");
            b.paths[i](k, j) = std::stod(cell);
        }
        ++rows;
    }
    if (rows != n * b.grid.size()) throw std::runtime_error("bundle csv: row count mismatch");
    return b;
}

}  // namespace pathineq
