#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "ctrl/synth.hpp"
#include "test_util.hpp"

using namespace ctrl;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

SynthConfig small_config() {
    SynthConfig c;
    c.member_types = {{"author", 40, 4}, {"venue", 8, 0}};
    c.slots = {{"author", 2, "writes"}, {"venue", 1, "published_in"}};
    c.num_events = 200;
    c.events_per_anchor = 2;
    c.time_span = 100000;
    c.communities = 4;
    c.noise = 0.1;
    c.seed = 77;
    return c;
}

}  // namespace

TEST_CASE("generator output passes ingestion and matches declared counts") {
    testutil::TempDir dir("synth_ok");
    auto cfg = small_config();
    const auto meta = generate(cfg, dir.file("nodes.jsonl"), dir.file("edges.jsonl"),
                               dir.file("events.jsonl"));
    auto [g, events] = ingest_files(dir.file("nodes.jsonl"), dir.file("edges.jsonl"),
                                    dir.file("events.jsonl"));
    CHECK(g.node_count() == meta.node_count);
    CHECK(meta.node_count == 40 + 8 + meta.anchor_count);
    CHECK(meta.anchor_count == 100);
    CHECK(events.size() == 200);
    CHECK(g.node_type_count() == 3);
    CHECK(g.edge_type_count() == 2);

    // events non-decreasing in file order
    for (std::size_t i = 1; i < events.size(); ++i) CHECK(events[i - 1].time <= events[i].time);

    // structural round trip: every event edge is anchored and present
    for (const auto& ev : events) {
        for (const auto& e : ev.edges) {
            CHECK(e.src == ev.anchor);
            bool found = false;
            for (const auto& adj : g.adjacency(e.src)) {
                if (adj.neighbor == e.dst && adj.time == ev.time && adj.etype == e.etype) {
                    found = true;
                    break;
                }
            }
            CHECK(found);
        }
    }
}

TEST_CASE("same seed gives byte-identical files") {
    testutil::TempDir a("synth_det_a"), b("synth_det_b");
    const auto cfg = small_config();
    generate(cfg, a.file("n.jsonl"), a.file("e.jsonl"), a.file("ev.jsonl"));
    generate(cfg, b.file("n.jsonl"), b.file("e.jsonl"), b.file("ev.jsonl"));
    CHECK(slurp(a.file("n.jsonl")) == slurp(b.file("n.jsonl")));
    CHECK(slurp(a.file("e.jsonl")) == slurp(b.file("e.jsonl")));
    CHECK(slurp(a.file("ev.jsonl")) == slurp(b.file("ev.jsonl")));

    auto other = cfg;
    other.seed = 78;
    generate(other, b.file("n.jsonl"), b.file("e.jsonl"), b.file("ev.jsonl"));
    CHECK(slurp(a.file("ev.jsonl")) != slurp(b.file("ev.jsonl")));
}

TEST_CASE("noise dial: eta=0 pins members to the community, eta=1 is uniform") {
    testutil::TempDir dir("synth_eta");
    auto cfg = small_config();
    cfg.noise = 0.0;
    auto meta = generate(cfg, dir.file("n.jsonl"), dir.file("e.jsonl"), dir.file("ev.jsonl"));
    CHECK(meta.total_draws > 0);
    CHECK(meta.within_community_draws == meta.total_draws);

    cfg.noise = 1.0;
    cfg.num_events = 2000;
    meta = generate(cfg, dir.file("n.jsonl"), dir.file("e.jsonl"), dir.file("ev.jsonl"));
    const double frac = double(meta.within_community_draws) / double(meta.total_draws);
    const double expected = 1.0 / cfg.communities;
    const double se = std::sqrt(expected * (1 - expected) / double(meta.total_draws));
    CHECK(std::abs(frac - expected) <= 3.0 * se);
}

TEST_CASE("generator validation") {
    auto cfg = small_config();
    cfg.member_types[0].count = 1;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("at least 2"), GenerationError);

    cfg = small_config();
    cfg.noise = 1.5;
    CHECK_THROWS_AS(cfg.validate(), GenerationError);

    cfg = small_config();
    cfg.slots.push_back({"editor", 1, "edits"});
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("editor"), GenerationError);

    cfg = small_config();
    cfg.slots.clear();
    CHECK_THROWS_AS(cfg.validate(), GenerationError);
}

TEST_CASE("citation-style anchor slots draw only from debuted anchors") {
    testutil::TempDir dir("synth_cite");
    auto cfg = small_config();
    cfg.slots.push_back({"paper", 2, "cites"});
    const auto meta = generate(cfg, dir.file("n.jsonl"), dir.file("e.jsonl"), dir.file("ev.jsonl"));
    auto [g, events] = ingest_files(dir.file("n.jsonl"), dir.file("e.jsonl"), dir.file("ev.jsonl"));
    CHECK(meta.event_count == events.size());
    const TypeId paper = g.node_type_id("paper");
    const TypeId cites = g.edge_type_id("cites");
    bool saw_citation = false;
    for (const auto& ev : events) {
        for (const auto& e : ev.edges) {
            if (e.etype != cites) continue;
            saw_citation = true;
            CHECK(g.node_type(e.dst) == paper);
            // the cited anchor debuted strictly earlier
            const auto birth = g.first_edge_time(e.dst);
            REQUIRE(birth.has_value());
            CHECK(*birth < ev.time);
        }
    }
    CHECK(saw_citation);
}
