#pragma once

// Basis archive: a versioned binary container for a multiscale_space.
//
//   bytes 0..7    magic "MSFLOWB\0"
//   uint64        format version
//   uint64        header length n
//   n bytes       JSON header (grid, rows, cols, nnz, stage_counts, metadata, training text)
//   cols x uint64 owner edge per column
//   cols x uint64 stage per column
//   nnz  x uint64 row index, nnz x uint64 column index, nnz x float64 value
//
// All integers and floats are little-endian.

#include "msflow/grid.hpp"
#include "msflow/mssolver.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace msflow {

inline constexpr char archive_magic[8] = {'M', 'S', 'F', 'L', 'O', 'W', 'B', '\0'};
inline constexpr std::uint64_t archive_version = 1;

struct basis_archive
{
    multiscale_space space;
    std::array<index_t, 2> fine{0, 0};
    std::array<index_t, 2> coarse{0, 0};
    std::array<double, 2> extent{1.0, 1.0};
    std::string training; ///< canonical training key text
};

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template<typename T>
inline void
put_le(std::ostream& out, T value)
{
    static_assert(sizeof(T) == 8);
    std::uint64_t bits;
    std::memcpy(&bits, &value, 8);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k)
        b[k] = static_cast<unsigned char>(bits >> (8 * k));
    out.write(reinterpret_cast<const char*>(b), 8);
}

template<typename T>
inline T
get_le(std::istream& in, const std::string& path)
{
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw config_error("archive: '" + path + "' is truncated");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k)
        bits |= std::uint64_t(b[k]) << (8 * k);
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
}

} // namespace detail

inline void
write_archive(const std::string& path, const basis_archive& a)
{
    const sparse_t& U = a.space.U;
    nlohmann::json h;
    h["grid"] = {{"extent", a.extent}, {"fine", a.fine}, {"coarse", a.coarse}};
    h["rows"] = U.rows();
    h["cols"] = U.cols();
    h["nnz"] = U.nonZeros();
    h["stage_counts"] = a.space.stage_counts;
    h["metadata"] = a.space.metadata;
    h["training"] = a.training;
    const std::string header = h.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw config_error("archive: cannot write '" + path + "'");
    out.write(archive_magic, 8);
    detail::put_le(out, archive_version);
    detail::put_le(out, std::uint64_t(header.size()));
    out.write(header.data(), std::streamsize(header.size()));
    for (index_t o : a.space.owner)
        detail::put_le(out, std::uint64_t(o));
    for (basis_stage s : a.space.stage)
        detail::put_le(out, std::uint64_t(s));
    std::vector<std::uint64_t> rows, cols;
    std::vector<double> vals;
    rows.reserve(std::size_t(U.nonZeros()));
    for (index_t k = 0; k < U.outerSize(); ++k)
        for (sparse_t::InnerIterator it(U, k); it; ++it) {
            rows.push_back(std::uint64_t(it.row()));
            cols.push_back(std::uint64_t(it.col()));
            vals.push_back(it.value());
        }
    for (auto r : rows)
        detail::put_le(out, r);
    for (auto c : cols)
        detail::put_le(out, c);
    for (double v : vals)
        detail::put_le(out, v);
    if (!out)
        throw config_error("archive: write to '" + path + "' failed");
}

inline basis_archive
read_archive(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw config_error("archive: cannot open '" + path + "'");
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, archive_magic, 8) != 0)
        throw config_error("archive: '" + path + "' is not a basis archive");
    const auto version = detail::get_le<std::uint64_t>(in, path);
    if (version != archive_version)
        throw config_error("archive: '" + path + "' has unsupported version " + std::to_string(version));
    const auto hlen = detail::get_le<std::uint64_t>(in, path);
    if (hlen > (std::uint64_t(1) << 30))
        throw config_error("archive: '" + path + "' has an implausible header length");
    std::string header(hlen, '\0');
    if (!in.read(header.data(), std::streamsize(hlen)))
        throw config_error("archive: '" + path + "' is truncated");

    basis_archive a;
    std::uint64_t rows = 0, cols = 0, nnz = 0;
    try {
        const auto h = nlohmann::json::parse(header);
        a.extent = h.at("grid").at("extent").get<std::array<double, 2>>();
        a.fine = h.at("grid").at("fine").get<std::array<index_t, 2>>();
        a.coarse = h.at("grid").at("coarse").get<std::array<index_t, 2>>();
        rows = h.at("rows").get<std::uint64_t>();
        cols = h.at("cols").get<std::uint64_t>();
        nnz = h.at("nnz").get<std::uint64_t>();
        a.space.stage_counts = h.at("stage_counts").get<std::array<index_t, 2>>();
        a.space.metadata = h.at("metadata").get<std::map<std::string, std::string>>();
        a.training = h.at("training").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error("archive: '" + path + "' has a malformed header: " + e.what());
    }
    if (rows != std::uint64_t(a.fine[0] * (a.fine[1] + 1) + (a.fine[0] + 1) * a.fine[1]))
        throw config_error("archive: '" + path + "' row count does not match its grid");

    for (std::uint64_t k = 0; k < cols; ++k)
        a.space.owner.push_back(index_t(detail::get_le<std::uint64_t>(in, path)));
    for (std::uint64_t k = 0; k < cols; ++k) {
        const auto s = detail::get_le<std::uint64_t>(in, path);
        if (s != std::uint64_t(basis_stage::offline) && s != std::uint64_t(basis_stage::residual))
            throw config_error("archive: '" + path + "' has an invalid stage tag");
        a.space.stage.push_back(basis_stage(s));
    }
    std::vector<std::uint64_t> r(nnz), c(nnz);
    for (auto& x : r)
        x = detail::get_le<std::uint64_t>(in, path);
    for (auto& x : c)
        x = detail::get_le<std::uint64_t>(in, path);
    std::vector<triplet_t> t;
    t.reserve(nnz);
    for (std::uint64_t k = 0; k < nnz; ++k) {
        const double v = detail::get_le<double>(in, path);
        if (r[k] >= rows || c[k] >= cols)
            throw config_error("archive: '" + path + "' has an entry outside the matrix");
        t.emplace_back(index_t(r[k]), index_t(c[k]), v);
    }
    a.space.U.resize(index_t(rows), index_t(cols));
    a.space.U.setFromTriplets(t.begin(), t.end());
    return a;
}

} // namespace msflow
