#include "msflow/archive.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace msflow;

namespace {

std::string
temp_path(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / "msflow_archive_test";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

basis_archive
sample_archive()
{
    const grid_hierarchy g({2, 1}, {8, 4}, {2, 2});
    vector_t k(32);
    for (index_t c = 0; c < 32; ++c)
        k[c] = 1.0 + double(c % 5);
    const auto stage = compute_offline_stage(g, std::span<const double>(k.data(), 32));
    basis_archive a;
    a.space = build_offline_space(g, stage.snapshots, stage.spectra, 2);
    a.space.stage.back() = basis_stage::residual;
    a.space.metadata["note"] = "x y";
    a.fine = {8, 4};
    a.coarse = {2, 2};
    a.extent = {2, 1};
    a.training = "basis.A = 2\n";
    return a;
}

std::string
slurp(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void
dump(const std::string& path, const std::string& bytes)
{
    std::ofstream(path, std::ios::binary) << bytes;
}

} // namespace

TEST(Archive, RoundTripIsExact)
{
    const auto a = sample_archive();
    const auto path = temp_path("round.msb");
    write_archive(path, a);
    const auto b = read_archive(path);
    EXPECT_EQ(b.fine, a.fine);
    EXPECT_EQ(b.coarse, a.coarse);
    EXPECT_EQ(b.extent, a.extent);
    EXPECT_EQ(b.training, a.training);
    EXPECT_EQ(b.space.owner, a.space.owner);
    EXPECT_EQ(b.space.stage, a.space.stage);
    EXPECT_EQ(b.space.stage_counts, a.space.stage_counts);
    EXPECT_EQ(b.space.metadata, a.space.metadata);
    ASSERT_EQ(b.space.U.rows(), a.space.U.rows());
    ASSERT_EQ(b.space.U.cols(), a.space.U.cols());
    EXPECT_EQ(matrix_t(b.space.U), matrix_t(a.space.U));
    // writing again gives identical bytes
    const auto path2 = temp_path("round2.msb");
    write_archive(path2, b);
    EXPECT_EQ(slurp(path), slurp(path2));
}

TEST(Archive, LittleEndianHeader)
{
    const auto path = temp_path("header.msb");
    write_archive(path, sample_archive());
    const auto bytes = slurp(path);
    ASSERT_GT(bytes.size(), 24u);
    EXPECT_EQ(bytes.substr(0, 8), std::string("MSFLOWB\0", 8));
    EXPECT_EQ(bytes[8], '\x01');
    for (int k = 9; k < 16; ++k)
        EXPECT_EQ(bytes[std::size_t(k)], '\0');
    EXPECT_EQ(bytes[24], '{');
}

TEST(Archive, RejectsCorruptFiles)
{
    const auto path = temp_path("good.msb");
    write_archive(path, sample_archive());
    const auto bytes = slurp(path);

    const auto bad = temp_path("bad.msb");
    std::string m = bytes;
    m[0] = 'X';
    dump(bad, m);
    EXPECT_THROW(read_archive(bad), config_error);

    std::string v = bytes;
    v[8] = '\x02';
    dump(bad, v);
    EXPECT_THROW(read_archive(bad), config_error);

    for (std::size_t cut : {std::size_t(4), std::size_t(20), std::size_t(40), bytes.size() - 1}) {
        dump(bad, bytes.substr(0, cut));
        EXPECT_THROW(read_archive(bad), config_error) << cut;
    }
    EXPECT_THROW(read_archive(temp_path("missing.msb")), config_error);
}
