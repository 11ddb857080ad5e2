#include <random>
#include <unordered_set>

#include <gtest/gtest.h>

#include "narwhal/tx_payload.hpp"

using namespace narwhal;

namespace {

std::set<ValidatorId> ids(std::initializer_list<std::uint32_t> xs) {
    std::set<ValidatorId> out;
    for (auto x : xs) out.insert(ValidatorId{x});
    return out;
}

Header header(ValidatorId author, Round round, std::set<Digest> parents = {}, std::vector<PayloadRef> payload = {}) {
    return Header(author, round, 0, std::move(payload), std::move(parents), {}, 0);
}

}  // namespace

TEST(Committee, ThresholdsForFourUnitStakes) {
    const auto c = Committee::uniform(4);
    EXPECT_EQ(c.total_stake(), 4u);
    EXPECT_EQ(c.max_faulty(), 1u);
    EXPECT_EQ(c.quorum_threshold(), 3u);
    EXPECT_EQ(c.validity_threshold(), 2u);
}

TEST(Committee, QuorumAndValidity) {
    const auto c = Committee::uniform(4);
    EXPECT_TRUE(quorum_reached(c, ids({1, 2, 3})));
    EXPECT_FALSE(quorum_reached(c, ids({1, 2})));
    EXPECT_TRUE(validity_reached(c, ids({1, 2})));
    EXPECT_FALSE(validity_reached(c, ids({1})));
    EXPECT_THROW(quorum_reached(c, ids({1, 2, 9})), ProtocolError);
}

TEST(Committee, StakeWeighted) {
    const Committee c({{ValidatorId{1}, 1}, {ValidatorId{2}, 1}, {ValidatorId{3}, 1}, {ValidatorId{4}, 4}});
    EXPECT_EQ(c.max_faulty(), 2u);
    EXPECT_EQ(c.quorum_threshold(), 5u);
    EXPECT_TRUE(quorum_reached(c, ids({4, 1})));
    EXPECT_FALSE(quorum_reached(c, ids({1, 2, 3})));
    EXPECT_TRUE(validity_reached(c, ids({1, 2, 3})));
}

TEST(Committee, RejectsBadMembership) {
    EXPECT_THROW(Committee(std::vector<Committee::Member>{}), ProtocolError);
    EXPECT_THROW(Committee({{ValidatorId{1}, 0}}), ProtocolError);
    EXPECT_THROW(Committee({{ValidatorId{1}, 1}, {ValidatorId{1}, 2}}), ProtocolError);
}

TEST(Digest, NoCollisionsOverRandomInputs) {
    std::mt19937_64 rng(99);
    std::unordered_set<Digest> seen;
    for (int i = 0; i < 100'000; ++i) {
        Bytes b(1 + rng() % 64);
        for (auto& x : b) x = static_cast<std::uint8_t>(rng());
        b.push_back(static_cast<std::uint8_t>(i));  // keep inputs distinct
        Encoder e;
        e.u32(static_cast<std::uint32_t>(i)).bytes(b);
        seen.insert(digest_of(e.data()));
    }
    EXPECT_EQ(seen.size(), 100'000u);
}

TEST(Digest, KnownSha256Vector) {
    EXPECT_EQ(digest_of(std::string_view("abc")).hex(),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Transaction, DigestDependsOnContent) {
    Transaction a{make_payload({1}, false), 5, 1};
    Transaction b = a;
    EXPECT_EQ(a.digest(), b.digest());
    b.gas_fee = 6;
    EXPECT_NE(a.digest(), b.digest());
}

TEST(Batch, EmptyBatchHasNoDigest) {
    Batch b;
    EXPECT_THROW(b.digest(), ProtocolError);
}

TEST(Header, RejectsDuplicatePayloadAndGenesisParents) {
    const Digest d = digest_of(std::string_view("batch"));
    EXPECT_THROW(header(ValidatorId{1}, 1, {}, {{d, 0}, {d, 0}}), ProtocolError);
    EXPECT_THROW(header(ValidatorId{1}, 0, {d}), ProtocolError);
}

TEST(Header, WeakLinksMustPointTwoRoundsBack) {
    const Digest d = digest_of(std::string_view("old"));
    EXPECT_THROW(Header(ValidatorId{1}, 3, 0, {}, {}, {CertRef{2, d}}, 0), ProtocolError);
    EXPECT_NO_THROW(Header(ValidatorId{1}, 3, 0, {}, {}, {CertRef{1, d}}, 0));
}

TEST(Header, DigestCoversEveryField) {
    const Digest p = digest_of(std::string_view("p"));
    const Header base(ValidatorId{1}, 2, 0, {}, {p}, {}, 10);
    EXPECT_EQ(base.digest(), base.compute_digest());
    EXPECT_NE(base.digest(), Header(ValidatorId{2}, 2, 0, {}, {p}, {}, 10).digest());
    EXPECT_NE(base.digest(), Header(ValidatorId{1}, 3, 0, {}, {p}, {}, 10).digest());
    EXPECT_NE(base.digest(), Header(ValidatorId{1}, 2, 1, {}, {p}, {}, 10).digest());
    EXPECT_NE(base.digest(), Header(ValidatorId{1}, 2, 0, {}, {p}, {}, 11).digest());
    EXPECT_NE(base.digest(), Header(ValidatorId{1}, 2, 0, {{p, 0}}, {p}, {}, 10).digest());
}

TEST(Certificate, NeedsQuorumOfDistinctValidVotes) {
    const auto c = Committee::uniform(4);
    const KeyRing keys(1);
    const Header h = header(ValidatorId{1}, 1);
    auto vote = [&](std::uint32_t v) { return Vote::make(h, Signer(&keys, ValidatorId{v})); };

    const auto cert = Certificate::make(c, keys, h, {vote(3), vote(1), vote(2)});
    EXPECT_TRUE(cert.verify(c, keys));
    EXPECT_EQ(cert.votes().front().voter, ValidatorId{1});
    EXPECT_EQ(cert.digest(), h.digest());

    EXPECT_THROW(Certificate::make(c, keys, h, {vote(1), vote(2)}), InvalidCertificate);
    EXPECT_THROW(Certificate::make(c, keys, h, {vote(1), vote(2), vote(2)}), InvalidCertificate);
    Vote forged = vote(3);
    forged.signature = keys.sign(ValidatorId{4}, h.digest());
    EXPECT_THROW(Certificate::make(c, keys, h, {vote(1), vote(2), forged}), InvalidCertificate);
    const KeyRing other(2);
    EXPECT_THROW(Certificate::make(c, keys, h, {vote(1), vote(2), Vote::make(h, Signer(&other, ValidatorId{3}))}),
                 InvalidCertificate);
}

TEST(Certificate, ForgedTwoVoteCertificateFailsVerification) {
    const auto c = Committee::uniform(4);
    const KeyRing keys(1);
    const Header h = header(ValidatorId{1}, 1);
    const auto forged = Certificate::unchecked(
        h, {Vote::make(h, Signer(&keys, ValidatorId{1})), Vote::make(h, Signer(&keys, ValidatorId{2}))});
    EXPECT_FALSE(forged.verify(c, keys));
}

TEST(Certificate, SerializationIsDeterministic) {
    const auto c = Committee::uniform(4);
    const KeyRing keys(1);
    const Header h = header(ValidatorId{2}, 1);
    std::vector<Vote> votes;
    for (std::uint32_t v : {2u, 3u, 4u}) votes.push_back(Vote::make(h, Signer(&keys, ValidatorId{v})));
    auto a = Certificate::make(c, keys, h, votes);
    std::reverse(votes.begin(), votes.end());
    auto b = Certificate::make(c, keys, h, votes);
    EXPECT_EQ(a.serialize(), b.serialize());
}

TEST(TxPayload, RoundTrip) {
    const Bytes value{7, 8, 9};
    const auto p = make_payload({5, 3}, true, value);
    const auto intent = parse_payload(p);
    ASSERT_TRUE(intent);
    EXPECT_TRUE(intent->create);
    EXPECT_EQ(intent->value, value);
    std::vector<ObjectId> expected{object_id_for_key(5), object_id_for_key(3)};
    std::sort(expected.begin(), expected.end());
    EXPECT_EQ(intent->objects, expected);
}

TEST(TxPayload, MinimalPayloadIsNineBytes) {
    EXPECT_EQ(make_payload({1}, false).size(), kMinTransactionSize);
}

TEST(TxPayload, RejectsMalformed) {
    EXPECT_FALSE(parse_payload(Bytes{}));
    EXPECT_FALSE(parse_payload(Bytes{0x00, 1, 2, 3, 4, 5, 6, 7, 8}));
    EXPECT_FALSE(parse_payload(Bytes{0x02, 0, 0, 0, 0, 0, 0, 0, 1}));
    EXPECT_FALSE(parse_payload(make_payload({4, 4}, false)));
}
