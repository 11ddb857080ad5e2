#include <gtest/gtest.h>

#include "narwhal/primary.hpp"
#include "support.hpp"

using namespace narwhal;
using testing_support::DagBuilder;

namespace {

const ValidatorId V1{1}, V2{2}, V3{3}, V4{4};

template <typename T>
std::vector<const T*> sent(const Outbox& out) {
    std::vector<const T*> r;
    for (const auto& o : out.messages)
        if (const T* m = std::get_if<T>(&o.message)) r.push_back(m);
    return r;
}

Digest batch_digest(int i) { return digest_of(std::string_view("batch-" + std::to_string(i))); }

void stage(Primary& p, int from, int to) {
    for (int i = from; i < to; ++i) p.stage_digest(batch_digest(i), 0);
}

std::set<Digest> genesis_parents(const DagBuilder& b, std::vector<std::uint32_t> authors = {1, 2, 3, 4}) {
    std::set<Digest> out;
    for (auto a : authors) out.insert(b.at(0, a).digest());
    return out;
}

struct Fixture {
    DagBuilder b;
    PrimaryConfig cfg;
    std::unique_ptr<Primary> p;
    Outbox out;

    explicit Fixture(ByzantineBehavior beh = {}, std::map<Round, ValidatorId> leaders = {}) {
        cfg.max_header_delay = 1000;
        p = std::make_unique<Primary>(V1, b.committee, &b.keys, LeaderSchedule(b.committee, 0, std::move(leaders)), cfg,
                                      beh);
    }

    void deliver(const Certificate& c) {
        ASSERT_TRUE(std::holds_alternative<CertStored>(p->process_incoming_certificate(c, c.author(), 0, out)));
    }
};

}  // namespace

TEST(Primary, StartsAtRoundOne) {
    Fixture f;
    EXPECT_EQ(f.p->current_round(), 1u);
}

TEST(Primary, HeaderOnceEnoughDigestsAndQuorumOfParents) {
    Fixture f;
    stage(*f.p, 0, 32);
    auto h1 = f.p->try_make_header(10, f.out);
    ASSERT_TRUE(h1);
    EXPECT_EQ(h1->round(), 1u);
    EXPECT_EQ(h1->payload().size(), 32u);
    EXPECT_EQ(h1->parents(), genesis_parents(f.b));
    EXPECT_EQ(sent<HeaderMsg>(f.out).size(), 3u);

    stage(*f.p, 100, 132);
    EXPECT_FALSE(f.p->try_make_header(20, f.out));  // round 1 already proposed
    f.deliver(f.b.add(2, 1));
    f.deliver(f.b.add(3, 1));
    f.deliver(f.b.add(4, 1));
    EXPECT_EQ(f.p->current_round(), 2u);
    // advancing with 32 staged proposes right away
    ASSERT_EQ(f.p->proposed_headers().size(), 2u);
    const Header* h2 = &f.p->proposed_headers().back();
    EXPECT_EQ(h2->round(), 2u);
    EXPECT_EQ(h2->parents().size(), 3u);
    EXPECT_EQ(h2->payload().size(), 32u);
}

TEST(Primary, HeaderOnDelayWithFewDigests) {
    Fixture f;
    stage(*f.p, 0, 5);
    EXPECT_FALSE(f.p->try_make_header(500, f.out));
    auto h = f.p->try_make_header(1000, f.out);
    ASSERT_TRUE(h);
    EXPECT_EQ(h->payload().size(), 5u);
}

TEST(Primary, NoHeaderWithoutParentQuorum) {
    Fixture f;
    stage(*f.p, 0, 32);
    ASSERT_TRUE(f.p->try_make_header(0, f.out));
    f.deliver(f.b.add(2, 1));
    stage(*f.p, 100, 140);
    EXPECT_EQ(f.p->current_round(), 1u);  // own cert missing, 2 of 4 is not a quorum
    EXPECT_FALSE(f.p->try_make_header(5000, f.out));
}

TEST(Primary, NoEmptyHeaderWhenNothingToCarry) {
    Fixture f;
    EXPECT_FALSE(f.p->try_make_header(5000, f.out));
}

TEST(Primary, VotesForValidHeaderOnce) {
    Fixture f;
    const Header h(V2, 1, 0, {}, genesis_parents(f.b), {}, 3);
    auto d = f.p->verify_and_vote(h, V2, f.out);
    ASSERT_TRUE(std::holds_alternative<Vote>(d));
    EXPECT_EQ(std::get<Vote>(d).voter, V1);
    EXPECT_EQ(sent<VoteMsg>(f.out).size(), 1u);
    // the same header again is fine, a different one for (V2, 1) is not
    EXPECT_TRUE(std::holds_alternative<Vote>(f.p->verify_and_vote(h, V2, f.out)));
    const Header twin(V2, 1, 0, {}, genesis_parents(f.b), {}, 4);
    auto e = f.p->verify_and_vote(twin, V2, f.out);
    ASSERT_TRUE(std::holds_alternative<VoteRejection>(e));
    EXPECT_EQ(std::get<VoteRejection>(e), VoteRejection::equivocation);
}

TEST(Primary, RejectsMalformedHeaders) {
    Fixture f;
    const Header h(V2, 1, 0, {}, genesis_parents(f.b), {}, 3);
    EXPECT_EQ(std::get<VoteRejection>(f.p->verify_and_vote(h, V3, f.out)), VoteRejection::bad_author);
    const Header thin(V2, 1, 0, {}, genesis_parents(f.b, {1, 2}), {}, 3);
    EXPECT_EQ(std::get<VoteRejection>(f.p->verify_and_vote(thin, V2, f.out)), VoteRejection::bad_parents);
    const Header epoch(V2, 1, 7, {}, genesis_parents(f.b), {}, 3);
    EXPECT_EQ(std::get<VoteRejection>(f.p->verify_and_vote(epoch, V2, f.out)), VoteRejection::wrong_epoch);
}

TEST(Primary, DefersUntilBatchesAreAvailable) {
    Fixture f;
    const Digest batch = batch_digest(7);
    const Header h(V2, 1, 0, {{batch, 0}}, genesis_parents(f.b), {}, 3);
    auto d = f.p->verify_and_vote(h, V2, f.out);
    ASSERT_TRUE(std::holds_alternative<Deferred>(d));
    EXPECT_EQ(std::get<Deferred>(d).why, Deferred::Why::missing_batches);
    auto syncs = sent<Synchronize>(f.out);
    ASSERT_EQ(syncs.size(), 1u);
    EXPECT_EQ(syncs[0]->digests, std::vector<Digest>{batch});
    EXPECT_TRUE(sent<VoteMsg>(f.out).empty());

    Outbox out2;
    f.p->on_message(NodeAddr::worker(V1, 0), ReportOthersBatch{batch, 0}, 50, out2);
    EXPECT_EQ(sent<VoteMsg>(out2).size(), 1u);
}

TEST(Primary, DefersUntilParentsArrive) {
    Fixture f;
    const auto& c21 = f.b.add(2, 1);
    f.b.add(3, 1);
    f.b.add(4, 1);
    const Header h(V2, 2, 0, {}, {f.b.at(1, 2).digest(), f.b.at(1, 3).digest(), f.b.at(1, 4).digest()}, {}, 3);
    auto d = f.p->verify_and_vote(h, V2, f.out);
    ASSERT_TRUE(std::holds_alternative<Deferred>(d));
    EXPECT_EQ(std::get<Deferred>(d).why, Deferred::Why::missing_parents);
    ASSERT_EQ(sent<FetchCertificates>(f.out).size(), 1u);
    EXPECT_EQ(sent<FetchCertificates>(f.out)[0]->digests.size(), 3u);

    Outbox out2;
    f.p->process_incoming_certificate(c21, V2, 0, out2);
    f.p->process_incoming_certificate(f.b.at(1, 3), V3, 0, out2);
    EXPECT_TRUE(sent<VoteMsg>(out2).empty());
    f.p->process_incoming_certificate(f.b.at(1, 4), V4, 0, out2);
    EXPECT_EQ(sent<VoteMsg>(out2).size(), 1u);
}

TEST(Primary, AggregatesQuorumIntoCertificate) {
    Fixture f;
    stage(*f.p, 0, 32);
    const Header h = *f.p->try_make_header(0, f.out);
    const KeyRing& keys = f.b.keys;
    EXPECT_FALSE(f.p->aggregate_vote(Vote::make(h, Signer(&keys, V2)), 10, f.out));
    // a vote signed with the wrong key does not count
    const KeyRing other(999);
    EXPECT_FALSE(f.p->aggregate_vote(Vote::make(h, Signer(&other, V3)), 10, f.out));
    f.out.clear();
    auto cert = f.p->aggregate_vote(Vote::make(h, Signer(&keys, V3)), 20, f.out);
    ASSERT_TRUE(cert);
    EXPECT_TRUE(cert->verify(f.b.committee, keys));
    EXPECT_EQ(cert->digest(), h.digest());
    EXPECT_EQ(sent<CertificateMsg>(f.out).size(), 3u);
    EXPECT_TRUE(f.p->dag().contains(h.digest()));
    EXPECT_FALSE(f.p->aggregate_vote(Vote::make(h, Signer(&keys, V4)), 30, f.out));  // already certified
    EXPECT_EQ(f.p->take_newly_stored().size(), 1u);
}

TEST(Primary, ProcessIncomingCertificateOutcomes) {
    Fixture f;
    const auto& c21 = f.b.add(2, 1);
    const auto& c31 = f.b.add(3, 1);
    const auto& c41 = f.b.add(4, 1);
    const auto& c22 = f.b.add(2, 2, {2, 3, 4});

    auto early = f.p->process_incoming_certificate(c22, V2, 0, f.out);
    ASSERT_TRUE(std::holds_alternative<Deferred>(early));
    EXPECT_EQ(sent<FetchCertificates>(f.out).size(), 1u);
    EXPECT_EQ(f.p->deferred_count(), 1u);

    EXPECT_TRUE(std::holds_alternative<CertStored>(f.p->process_incoming_certificate(c21, V2, 0, f.out)));
    EXPECT_TRUE(std::holds_alternative<CertStored>(f.p->process_incoming_certificate(c31, V3, 0, f.out)));
    EXPECT_TRUE(std::holds_alternative<CertStored>(f.p->process_incoming_certificate(c41, V4, 0, f.out)));
    EXPECT_TRUE(f.p->dag().contains(c22.digest()));  // released once its parents arrived
    EXPECT_EQ(f.p->deferred_count(), 0u);
    EXPECT_EQ(f.p->take_newly_stored().size(), 4u);
    EXPECT_TRUE(std::holds_alternative<std::monostate>(f.p->process_incoming_certificate(c21, V2, 0, f.out)));

    const Header h(V1, 1, 0, {}, genesis_parents(f.b), {}, 1);
    const auto forged = Certificate::unchecked(h, {Vote::make(h, Signer(&f.b.keys, V1)), Vote::make(h, Signer(&f.b.keys, V2))});
    auto r = f.p->process_incoming_certificate(forged, V2, 0, f.out);
    ASSERT_TRUE(std::holds_alternative<CertRejection>(r));
    EXPECT_EQ(std::get<CertRejection>(r), CertRejection::bad_quorum);
    EXPECT_FALSE(f.p->dag().contains(h.digest()));

    const Header twin(V2, 1, 0, {}, genesis_parents(f.b), {}, 99);
    auto c = f.p->process_incoming_certificate(harness::certify(f.b.committee, f.b.keys, twin), V2, 0, f.out);
    EXPECT_EQ(std::get<CertRejection>(c), CertRejection::conflict);
    EXPECT_EQ(f.p->conflicts_observed(), 1u);
}

TEST(Primary, AdvancesRoundOnQuorumOnly) {
    Fixture f;
    f.deliver(f.b.add(2, 1));
    f.deliver(f.b.add(3, 1));
    EXPECT_EQ(f.p->current_round(), 1u);
    f.deliver(f.b.add(4, 1));
    EXPECT_EQ(f.p->current_round(), 2u);
    f.deliver(f.b.add(1, 1));
    EXPECT_EQ(f.p->current_round(), 2u);  // 4/4 does not skip ahead
    for (std::uint32_t a = 1; a <= 4; ++a) f.deliver(f.b.add(a, 2));
    EXPECT_EQ(f.p->current_round(), 3u);
}

TEST(Primary, ServesFetchByDigestAndRange) {
    Fixture f;
    f.b.full_rounds(3);
    for (const auto& c : f.b.all()) f.deliver(c);
    const auto by_digest = f.p->handle_fetch_certificates({{f.b.at(2, 3).digest(), f.b.at(0, 1).digest()}, 1, 0});
    ASSERT_EQ(by_digest.certificates.size(), 1u);  // genesis is never shipped
    EXPECT_EQ(by_digest.certificates[0].digest(), f.b.at(2, 3).digest());
    const auto range = f.p->handle_fetch_certificates({{f.b.at(2, 3).digest()}, 2, 3});
    ASSERT_EQ(range.certificates.size(), 8u);
    EXPECT_EQ(range.certificates.front().round(), 2u);
    EXPECT_EQ(range.certificates.back().round(), 3u);
}

TEST(Primary, VoteWithholderSkipsLeader) {
    Fixture f(ByzantineBehavior{ByzantineBehavior::Kind::vote_withholder, 1}, {{1, V2}});
    const Header leader(V2, 1, 0, {}, genesis_parents(f.b), {}, 3);
    EXPECT_EQ(std::get<VoteRejection>(f.p->verify_and_vote(leader, V2, f.out)), VoteRejection::withheld);
    const Header other(V3, 1, 0, {}, genesis_parents(f.b), {}, 3);
    EXPECT_TRUE(std::holds_alternative<Vote>(f.p->verify_and_vote(other, V3, f.out)));

    // its round-2 header leaves out the round-1 anchor when a quorum remains
    for (std::uint32_t a = 1; a <= 4; ++a) f.deliver(f.b.add(a, 1));
    stage(*f.p, 0, 32);
    auto h = f.p->try_make_header(0, f.out);
    ASSERT_TRUE(h);
    EXPECT_EQ(h->parents().size(), 3u);
    EXPECT_FALSE(h->parents().contains(f.b.at(1, 2).digest()));
}

TEST(Primary, EquivocatorSendsDifferentHeadersToPeers) {
    Fixture f(ByzantineBehavior{ByzantineBehavior::Kind::equivocator, 1});
    stage(*f.p, 0, 32);
    ASSERT_TRUE(f.p->try_make_header(0, f.out));
    ASSERT_EQ(f.p->proposed_headers().size(), 2u);
    std::set<Digest> seen;
    for (const auto* m : sent<HeaderMsg>(f.out)) seen.insert(m->header.digest());
    EXPECT_EQ(seen.size(), 2u);
}
