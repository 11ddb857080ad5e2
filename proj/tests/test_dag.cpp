#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace narwhal;
using testing_support::DagBuilder;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + needle.size())) ++n;
    return n;
}

}  // namespace

TEST(Dag, GenesisSeeded) {
    DagState dag(Committee::uniform(4));
    EXPECT_EQ(dag.size(), 4u);
    EXPECT_EQ(dag.round(0)->size(), 4u);
    EXPECT_EQ(dag.highest_round(), 0u);
}

TEST(Dag, InsertOutcomes) {
    DagBuilder b;
    DagState dag(b.committee);
    const auto c11 = b.add(1, 1);
    b.add(2, 1);
    b.add(3, 1);
    const auto c12 = b.add(1, 2, {1, 2, 3});  // parents not inserted yet
    EXPECT_EQ(dag.insert(c12), InsertResult::missing_parents);
    EXPECT_EQ(dag.missing_parents(c12).size(), 3u);
    EXPECT_EQ(dag.insert(c11), InsertResult::stored);
    EXPECT_EQ(dag.insert(c11), InsertResult::duplicate);

    // a second, different certificate for (v1, round 1)
    Header other(ValidatorId{1}, 1, 0, {}, {b.at(0, 1).digest(), b.at(0, 2).digest(), b.at(0, 3).digest()}, {}, 5);
    EXPECT_EQ(dag.insert(harness::certify(b.committee, b.keys, other)), InsertResult::conflict);
    EXPECT_EQ(dag.get(1, ValidatorId{1})->digest(), c11.digest());
}

TEST(Dag, RoundsAreNotCreatedByFailedInserts) {
    DagBuilder b;
    DagState dag(b.committee);
    b.add(1, 1);
    EXPECT_EQ(dag.insert(b.add(1, 2)), InsertResult::missing_parents);
    EXPECT_EQ(dag.rounds_retained(), 1u);
    EXPECT_EQ(dag.round(2), nullptr);
}

TEST(Dag, LinkedFollowsStrongAndWeakEdges) {
    DagBuilder b;
    DagState dag(b.committee);
    b.full_rounds(1);
    b.add(1, 2, {1, 2, 3});
    b.add(2, 2, {1, 2, 3});
    b.add(3, 2, {1, 2, 3});
    // round 3 references only round-2 certs, none of which reach 4@1 ...
    b.add(1, 3, {1, 2, 3});
    // ... except through this weak link
    b.add(2, 3, {1, 2, 3}, {CertRef{1, b.at(1, 4).digest()}});
    for (const auto& c : b.all()) ASSERT_EQ(dag.insert(c), InsertResult::stored);
    EXPECT_FALSE(dag.linked(b.at(3, 1), b.at(1, 4)));
    EXPECT_TRUE(dag.linked(b.at(3, 2), b.at(1, 4)));
    EXPECT_TRUE(dag.linked(b.at(3, 1), b.at(1, 1)));
    EXPECT_TRUE(dag.linked(b.at(1, 1), b.at(1, 1)));
    EXPECT_FALSE(dag.linked(b.at(1, 1), b.at(3, 1)));
}

TEST(Dag, CausalHistoryRespectsPredicate) {
    DagBuilder b;
    DagState dag(b.committee);
    b.full_rounds(3);
    for (const auto& c : b.all()) dag.insert(c);
    const auto all = dag.causal_history(b.at(3, 1), [](const Certificate&) { return true; });
    EXPECT_EQ(all.size(), 1u + 4 + 4 + 4);
    const auto above = dag.causal_history(b.at(3, 1), [](const Certificate& c) { return c.round() >= 2; });
    EXPECT_EQ(above.size(), 1u + 4);
}

TEST(Dag, GarbageCollectMovesGcRound) {
    DagBuilder b;
    DagState dag(b.committee);
    b.full_rounds(12);
    for (const auto& c : b.all()) dag.insert(c);

    EXPECT_EQ(dag.garbage_collect(10, 50), (std::pair<Round, Round>{0, 0}));
    EXPECT_EQ(dag.gc_round(), 0u);
    EXPECT_EQ(dag.garbage_collect(60, 50), (std::pair<Round, Round>{0, 10}));
    EXPECT_EQ(dag.gc_round(), 10u);
    EXPECT_EQ(dag.round(9), nullptr);
    EXPECT_NE(dag.round(10), nullptr);
    EXPECT_FALSE(dag.contains(b.at(9, 1).digest()));
    // never moves backwards
    dag.garbage_collect(20, 50);
    EXPECT_EQ(dag.gc_round(), 10u);
    EXPECT_THROW(dag.garbage_collect(60, 0), ProtocolError);
}

TEST(Dag, ArrivalBelowGcIsDropped) {
    DagBuilder b;
    DagState dag(b.committee);
    b.full_rounds(12);
    for (const auto& c : b.all())
        if (c.round() != 5 || c.author() != ValidatorId{4}) dag.insert(c);
    dag.garbage_collect(60, 50);
    EXPECT_EQ(dag.insert(b.at(5, 4)), InsertResult::below_gc);
    EXPECT_FALSE(dag.contains(b.at(5, 4).digest()));
}

TEST(Dag, ParentsBelowGcDoNotBlockInsertion) {
    DagBuilder b;
    DagState dag(b.committee);
    b.full_rounds(12);
    for (const auto& c : b.all())
        if (c.round() <= 9) dag.insert(c);
    dag.garbage_collect(60, 50);  // gc_round 10, rounds < 10 purged
    EXPECT_EQ(dag.insert(b.at(10, 1)), InsertResult::stored);
}

TEST(Dag, RangeIsOrderedAndLimited) {
    DagBuilder b;
    DagState dag(b.committee);
    b.full_rounds(4);
    for (const auto& c : b.all()) dag.insert(c);
    const auto r = dag.range(2, 3, 100);
    ASSERT_EQ(r.size(), 8u);
    EXPECT_EQ(r.front().round(), 2u);
    EXPECT_EQ(r.front().author(), ValidatorId{1});
    EXPECT_EQ(r.back().round(), 3u);
    EXPECT_EQ(dag.range(1, 4, 5).size(), 5u);
}

TEST(Dag, DotExportHasOneNodePerCertificate) {
    DagBuilder b;
    DagState dag(b.committee);
    b.full_rounds(4);
    for (const auto& c : b.all()) dag.insert(c);
    std::ostringstream os;
    DotStyle style;
    style.anchors.insert(b.at(1, 2).digest());
    style.committed.insert(b.at(1, 2).digest());
    emit_dag_dot(dag, os, style);
    const std::string dot = os.str();
    EXPECT_EQ(count(dot, "[label="), 16u + 4u);  // 4x4 plus genesis
    EXPECT_EQ(count(dot, " -> "), 16u * 4u);
    EXPECT_EQ(count(dot, "color=red"), 1u);
    EXPECT_EQ(count(dot, "fillcolor=lightgrey"), 1u);
    EXPECT_NE(dot.find("label=\"2@1\""), std::string::npos);
}
