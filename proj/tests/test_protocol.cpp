#include "fleetsim/protocol.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

using namespace fleetsim;
using namespace fleetsim::protocol;

TEST(Protocol, GoldenCorpusRoundTrips) {
    const auto lines = testsupport::read_lines(testsupport::golden_dir() / "messages.jsonl");
    EXPECT_GE(lines.size(), 20u);
    EXPECT_TRUE(testsupport::golden_mismatches().empty());
    std::set<Kind> kinds;
    for (const auto& l : lines) kinds.insert(decode(l).kind);
    EXPECT_EQ(kinds.size(), 6u);
}

TEST(Protocol, EncodeIsCanonical) {
    EXPECT_EQ(encode(make_reset("canonical", 3)), R"({"kind":"reset","scenario":"canonical","seed":3})");
    EXPECT_EQ(encode(make_reset("tiny")), R"({"kind":"reset","scenario":"tiny"})");
    EXPECT_EQ(encode(make_step({0.0, 1.5})), R"({"kind":"step","action":[0.0,1.5]})");
    EXPECT_EQ(encode(make_error(code::kBadShape)), R"({"kind":"error","code":"BAD_SHAPE"})");
    EXPECT_EQ(encode(make_close()), R"({"kind":"close"})");
    Message ok;
    ok.kind = Kind::step_ok;
    ok.V = {1, 2};
    ok.R = {0, 3};
    ok.t_norm = 0.25;
    ok.reward = -4.0;
    EXPECT_EQ(encode(ok), R"({"kind":"step_ok","V":[1,2],"R":[0,3],"t_norm":0.25,"reward":-4.0,"done":false})");
}

TEST(Protocol, DecodeAcceptsReorderedAndSpacedInput) {
    const auto m = decode(R"( { "seed" : 5 , "scenario":"tiny", "kind":"reset" } )");
    EXPECT_EQ(m, make_reset("tiny", 5));
    EXPECT_EQ(decode("{\"kind\":\"close\"}\r"), make_close());
    EXPECT_EQ(decode(R"({"kind":"step","action":[1,2]})").action, (std::vector<double>{1.0, 2.0}));
}

TEST(Protocol, DecodeRejects) {
    EXPECT_THROW(decode(R"({"kind":"reset","scen)"), ParseError);
    EXPECT_THROW(decode(""), ParseError);
    EXPECT_THROW(decode(R"({"kind":"step_ok","V":[1,-1],"R":[],"t_norm":0,"reward":0,"done":false})"), ParseError);
    EXPECT_THROW(decode(R"({"kind":"step_ok","V":[1.5],"R":[],"t_norm":0,"reward":0,"done":false})"), ParseError);
    EXPECT_THROW(decode(R"({"kind":"step_ok","V":[],"R":[],"t_norm":0,"reward":0,"done":1})"), ParseError);
    EXPECT_THROW(decode(R"({"kind":"step_ok","V":[],"R":[],"t_norm":0,"reward":0})"), ParseError);
    EXPECT_THROW(decode(R"({"kind":"error"})"), ParseError);
    EXPECT_THROW(decode(R"({"kind":"close","x":1})"), ParseError);
}

TEST(Protocol, MalformedFixturesYieldTheirCodes) {
    const auto cases = testsupport::malformed_cases();
    EXPECT_GE(cases.size(), 20u);
    for (const auto& c : cases) EXPECT_EQ(testsupport::run_malformed(c), c.code) << c.name;
}

// Labeled free vehicles on a 2x3 grid: the V vector must put the count of
// cell (m, n) at offset (m - 1) * 3 + (n - 1).
TEST(Protocol, RowMajorOnAsymmetricGrid) {
    ScenarioCatalog catalog;
    auto cfg = canonical_config();
    cfg.name = "asym";
    cfg.lattice_rows = 6;
    cfg.lattice_cols = 4;
    cfg.grid_nx = 2;
    cfg.grid_ny = 3;
    cfg.demand.origins = {};
    cfg.demand.destinations = {};
    cfg.fleet_size = 30;
    catalog.add("asym", cfg);
    EnvSession session(std::make_shared<const ScenarioCatalog>(catalog));
    const auto reply = session.handle(make_reset("asym", 1));
    ASSERT_EQ(reply->kind, Kind::reset_ok);
    ASSERT_EQ(reply->V.size(), 6u);

    const auto* sim = session.simulation();
    const auto& grid = sim->scenario().grid;
    ASSERT_EQ(grid.n_x, 2);
    ASSERT_EQ(grid.n_y, 3);
    std::vector<std::int64_t> expect(6, 0);
    for (const auto& v : sim->vehicles()) {
        if (!v.is_free()) continue;
        const auto& node = sim->scenario().network->node(v.position_node);
        const auto c = cell_of(grid, node.x, node.y);
        ++expect[static_cast<std::size_t>((c.m - 1) * 3 + (c.n - 1))];
    }
    EXPECT_EQ(reply->V, expect);
    std::set<std::int64_t> distinct(expect.begin(), expect.end());
    EXPECT_GT(distinct.size(), 1u);

    const auto m = CountMatrix::from_flat(2, 3, {11, 12, 13, 21, 22, 23});
    EXPECT_EQ(m.at(1, 3), 13);
    EXPECT_EQ(m.at(2, 1), 21);
}
