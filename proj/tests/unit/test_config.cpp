#include "msflow/config.hpp"

#include <gtest/gtest.h>

using namespace msflow;

namespace {

const std::string minimal = "grid.fine = 16 16\n"
                            "grid.coarse = 4 4\n"
                            "field.kind = synthetic\n"
                            "source.kind = two_point\n";

run_config
parse(const std::string& text)
{
    return parse_config(config_file::from_string(text, "t.cfg"));
}

std::string
error_of(const std::string& text)
{
    try {
        parse(text);
    } catch (const config_error& e) {
        return e.what();
    }
    return "";
}

bool
contains(const std::string& s, const std::string& part)
{
    return s.find(part) != std::string::npos;
}

} // namespace

TEST(Config, Defaults)
{
    const auto r = parse(minimal);
    EXPECT_EQ(r.basis.A, 2);
    EXPECT_EQ(r.basis.B, 1);
    EXPECT_EQ(r.basis.tau, 1e-3);
    EXPECT_EQ(r.basis.layers, 1);
    EXPECT_EQ(r.basis.strategy, partition_strategy::alternating);
    EXPECT_EQ(r.grid.extent, (std::array<double, 2>{1, 1}));
    EXPECT_EQ(r.grid.fine, (std::array<index_t, 2>{16, 16}));
    EXPECT_EQ(r.source.kind, source_kind::two_point);
    EXPECT_TRUE(r.wants("csv"));
    EXPECT_TRUE(r.wants("vtk"));
}

TEST(Config, OfflineOnlyBasis)
{
    const auto r = parse(minimal + "basis.A = 3\nbasis.B = 0\n");
    EXPECT_EQ(r.basis.A, 3);
    EXPECT_EQ(r.basis.B, 0);
}

TEST(Config, CommentsAndSingleValues)
{
    const auto r = parse("# header\n\ngrid.fine = 8   # square\ngrid.coarse = 2\nfield.kind = kl\n"
                         "field.eta = 0.25\nsource.kind = five_point\noutput.formats = csv\n");
    EXPECT_EQ(r.grid.fine, (std::array<index_t, 2>{8, 8}));
    EXPECT_EQ(r.field.eta1, 0.25);
    EXPECT_EQ(r.field.eta2, 0.25);
    EXPECT_FALSE(r.wants("vtk"));
}

TEST(Config, DuplicateKeyNamesBothLines)
{
    const auto e = error_of(minimal + "basis.A = 2\nbasis.A = 3\n");
    EXPECT_TRUE(contains(e, "t.cfg:6:")) << e;
    EXPECT_TRUE(contains(e, "duplicate key 'basis.A'")) << e;
    EXPECT_TRUE(contains(e, "line 5")) << e;
}

TEST(Config, UnknownKeyNamesLine)
{
    const auto e = error_of(minimal + "basis.Q = 1\n");
    EXPECT_TRUE(contains(e, "t.cfg:5:")) << e;
    EXPECT_TRUE(contains(e, "unknown key 'basis.Q'")) << e;
}

TEST(Config, TypeMismatchNamesLine)
{
    const auto e = error_of(minimal + "basis.tau = small\n");
    EXPECT_TRUE(contains(e, "t.cfg:5:")) << e;
    EXPECT_TRUE(contains(e, "basis.tau")) << e;
    const auto e2 = error_of(minimal + "basis.A = 2.5\n");
    EXPECT_TRUE(contains(e2, "t.cfg:5:")) << e2;
}

TEST(Config, MissingRequiredKey)
{
    const auto e = error_of("grid.fine = 16\ngrid.coarse = 4\nsource.kind = two_point\n");
    EXPECT_TRUE(contains(e, "missing required key 'field.kind'")) << e;
}

TEST(Config, Validation)
{
    EXPECT_TRUE(contains(error_of("grid.fine = 10\ngrid.coarse = 4\nfield.kind = kl\nsource.kind = two_point\n"),
                         "grid"));
    EXPECT_FALSE(error_of(minimal + "basis.A = 9\n").empty());
    EXPECT_FALSE(error_of(minimal + "basis.B = -1\n").empty());
    EXPECT_FALSE(error_of(minimal + "basis.layers = 0\n").empty());
    EXPECT_FALSE(error_of(minimal + "twophase.cfl = 2\n").empty());
    EXPECT_FALSE(error_of(minimal + "source.test = nowhere\n").empty());
    EXPECT_FALSE(error_of(minimal + "output.formats = csv png\n").empty());
    EXPECT_FALSE(error_of("grid.fine = 16\nbad line\n").empty());
}

TEST(Config, CustomSource)
{
    const std::string text = "grid.fine = 8\ngrid.coarse = 2\nfield.kind = synthetic\nsource.kind = custom\n"
                             "source.custom = 0 0 1.5  7 7 -1.5\n";
    const auto r = parse(text);
    ASSERT_EQ(r.source.custom.size(), 2u);
    EXPECT_EQ(r.source.custom[0], (std::pair<index_t, double>{0, 1.5}));
    EXPECT_EQ(r.source.custom[1], (std::pair<index_t, double>{63, -1.5}));
    EXPECT_FALSE(error_of("grid.fine = 8\ngrid.coarse = 2\nfield.kind = synthetic\nsource.kind = custom\n"
                          "source.custom = 8 0 1\n")
                     .empty());
}

TEST(Config, TrainingKeyTracksBasisInputsOnly)
{
    const auto a = parse(minimal);
    const auto b = parse(minimal + "sweep.n_samples = 3\noutput.directory = elsewhere\n");
    const auto c = parse(minimal + "basis.tau = 1e-6\n");
    EXPECT_EQ(training_key(a), training_key(b));
    EXPECT_NE(training_key(a), training_key(c));
    // the effective config parses back to the same run
    const auto round = parse(effective_config(c));
    EXPECT_EQ(training_key(round), training_key(c));
}
