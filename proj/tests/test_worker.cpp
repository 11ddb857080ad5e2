#include <gtest/gtest.h>

#include "narwhal/worker.hpp"

using namespace narwhal;

namespace {

const ValidatorId V1{1}, V2{2}, V3{3}, V4{4};

Transaction tx(std::uint64_t key, std::size_t extra = 0) {
    Bytes value(extra, 0xab);
    return Transaction{make_payload({key}, false, value), 1, key};
}

template <typename T>
std::vector<const T*> sent(const Outbox& out, std::optional<NodeAddr> to = std::nullopt) {
    std::vector<const T*> r;
    for (const auto& o : out.messages)
        if (const T* m = std::get_if<T>(&o.message); m && (!to || o.to == *to)) r.push_back(m);
    return r;
}

Batch sealed_batch(Worker& w, std::size_t n, Outbox& out) {
    for (std::size_t i = 0; i < n; ++i) EXPECT_FALSE(w.validate_tx(tx(i), 0, out));
    auto b = w.seal_batch(1000);
    EXPECT_TRUE(b);
    return *b;
}

}  // namespace

TEST(Worker, ValidateTxSizeLimits) {
    Worker w(V1, 0, Committee::uniform(4));
    Outbox out;
    EXPECT_FALSE(w.validate_tx(tx(1), 0, out));  // exactly 9 bytes
    Transaction small{Bytes(8, 1), 1, 0};
    EXPECT_EQ(w.validate_tx(small, 0, out), TxRejection::too_small);
    EXPECT_FALSE(w.validate_tx(tx(1), 0, out));  // duplicates are accepted; execution dedups
    Transaction bad{Bytes{0x00, 0, 0, 0, 0, 0, 0, 0, 0}, 1, 0};
    EXPECT_EQ(w.validate_tx(bad, 0, out), TxRejection::malformed);
}

TEST(Worker, SealOnSizeLimit) {
    WorkerConfig cfg;
    cfg.batch_size_limit = 3;
    Worker w(V1, 0, Committee::uniform(4), cfg);
    Outbox out;
    w.validate_tx(tx(1), 0, out);
    w.validate_tx(tx(2), 0, out);
    EXPECT_TRUE(sent<ReportBatch>(out).empty());
    w.validate_tx(tx(3), 0, out);
    auto reports = sent<ReportBatch>(out);
    ASSERT_EQ(reports.size(), 3u);
    EXPECT_EQ(reports[0]->batch.transactions.size(), 3u);
}

TEST(Worker, SealOnTimeoutAndNotWhenEmpty) {
    WorkerConfig cfg;
    cfg.batch_size_limit = 10;
    cfg.batch_timeout = 100;
    Worker w(V1, 0, Committee::uniform(4), cfg);
    Outbox out;
    EXPECT_FALSE(w.seal_batch(500));  // empty buffer
    w.validate_tx(tx(1), 0, out);
    w.validate_tx(tx(2), 10, out);
    EXPECT_FALSE(w.seal_batch(50));
    auto b = w.seal_batch(100);
    ASSERT_TRUE(b);
    EXPECT_EQ(b->transactions.size(), 2u);
    EXPECT_EQ(w.seal_times().at(b->digest()), 100);
}

TEST(Worker, BroadcastReachesEveryPeer) {
    Worker w(V1, 0, Committee::uniform(4));
    Outbox out;
    const Batch b = sealed_batch(w, 2, out);
    out.clear();
    EXPECT_EQ(w.broadcast_batch(b, out).size(), 3u);
    EXPECT_EQ(sent<ReportBatch>(out).size(), 3u);

    Worker solo(V1, 0, Committee::uniform(1));
    Outbox out1;
    const Batch b1 = sealed_batch(solo, 1, out1);
    out1.clear();
    EXPECT_TRUE(solo.broadcast_batch(b1, out1).empty());
    EXPECT_TRUE(sent<ReportBatch>(out1).empty());
    EXPECT_EQ(sent<ReportOwnBatch>(out1).size(), 1u);  // own stake is a quorum
}

TEST(Worker, QuorumWaitAck) {
    Worker w(V1, 0, Committee::uniform(4));
    Outbox out;
    const Batch b = sealed_batch(w, 2, out);
    out.clear();
    w.broadcast_batch(b, out);
    const Digest d = b.digest();
    EXPECT_EQ(w.quorum_wait_ack(d, V2, out), AckProgress::still_waiting);  // own + 1
    EXPECT_EQ(w.quorum_wait_ack(d, V2, out), AckProgress::still_waiting);  // duplicate
    EXPECT_TRUE(sent<ReportOwnBatch>(out).empty());
    EXPECT_EQ(w.quorum_wait_ack(d, V3, out), AckProgress::quorum_complete);  // own + 2
    EXPECT_EQ(sent<ReportOwnBatch>(out, NodeAddr::primary(V1)).size(), 1u);
    EXPECT_EQ(w.quorum_wait_ack(d, V4, out), AckProgress::still_waiting);
    EXPECT_EQ(sent<ReportOwnBatch>(out).size(), 1u);  // forwarded once
    EXPECT_EQ(w.quorum_wait_ack(digest_of(std::string_view("x")), V2, out), AckProgress::ignored);
}

TEST(Worker, ReportBatchStoresAcksAndRejectsTampering) {
    Worker author(V2, 0, Committee::uniform(4));
    Outbox scratch;
    const Batch b = sealed_batch(author, 3, scratch);

    Worker w(V1, 0, Committee::uniform(4));
    Outbox out;
    EXPECT_TRUE(w.handle_report_batch(b, b.digest(), V2, out));
    EXPECT_EQ(sent<BatchAck>(out, NodeAddr::worker(V2, 0)).size(), 1u);
    EXPECT_EQ(sent<ReportOthersBatch>(out, NodeAddr::primary(V1)).size(), 1u);

    Batch tampered = b;
    tampered.transactions[0].gas_fee += 1;
    Outbox out2;
    EXPECT_FALSE(w.handle_report_batch(tampered, b.digest(), V2, out2));
    EXPECT_TRUE(out2.messages.empty());

    Outbox out3;
    EXPECT_TRUE(w.handle_report_batch(b, b.digest(), V2, out3));  // redelivery is re-ACKed
    EXPECT_EQ(sent<BatchAck>(out3).size(), 1u);
    EXPECT_TRUE(sent<ReportOthersBatch>(out3).empty());
}

TEST(Worker, RequestBatchesReturnsWhatIsStored) {
    Worker w(V1, 0, Committee::uniform(4));
    Outbox out;
    const Batch a = sealed_batch(w, 1, out);
    for (int i = 10; i < 12; ++i) w.validate_tx(tx(static_cast<std::uint64_t>(i)), 2000, out);
    const Batch b = *w.seal_batch(5000);
    const Digest unknown = digest_of(std::string_view("unknown"));
    EXPECT_EQ(w.handle_request_batches({a.digest(), b.digest()}).size(), 2u);
    EXPECT_EQ(w.handle_request_batches({a.digest(), unknown}).size(), 1u);
    EXPECT_TRUE(w.handle_request_batches({unknown}).empty());
}

TEST(Worker, SynchronizeFetchesFromHintThenAcceptsOnlyRequested) {
    Worker holder(V2, 0, Committee::uniform(4));
    Outbox scratch;
    const Batch b = sealed_batch(holder, 2, scratch);
    const Batch other = [&] {
        holder.validate_tx(tx(77), 3000, scratch);
        return *holder.seal_batch(9000);
    }();

    Worker w(V1, 0, Committee::uniform(4));
    Outbox out;
    auto missing = w.handle_synchronize({b.digest()}, V2, out);
    ASSERT_EQ(missing.size(), 1u);
    EXPECT_EQ(sent<RequestBatches>(out, NodeAddr::worker(V2, 0)).size(), 1u);
    EXPECT_TRUE(w.handle_synchronize({b.digest()}, V2, out).empty());  // already syncing

    Outbox out2;
    w.handle_batch_list({b, other}, out2);
    EXPECT_TRUE(w.find_batch(b.digest()));
    EXPECT_FALSE(w.find_batch(other.digest()));  // unsolicited
    EXPECT_EQ(w.syncing_count(), 0u);
    EXPECT_TRUE(w.handle_synchronize({b.digest()}, V2, out2).empty());  // now stored
}

TEST(Worker, RetransmitsUntilQuorum) {
    WorkerConfig cfg;
    cfg.retransmit_interval = 100;
    Worker w(V1, 0, Committee::uniform(4), cfg);
    Outbox out;
    const Batch b = sealed_batch(w, 1, out);
    out.clear();
    w.broadcast_batch(b, out);
    ASSERT_EQ(out.timers.size(), 1u);
    const Timer t = out.timers[0].timer;
    w.quorum_wait_ack(b.digest(), V2, out);
    out.clear();
    w.on_timer(t, 100, out);
    EXPECT_EQ(sent<ReportBatch>(out).size(), 2u);  // V3 and V4 still owe ACKs
    w.quorum_wait_ack(b.digest(), V3, out);
    out.clear();
    w.on_timer(t, 200, out);
    EXPECT_TRUE(sent<ReportBatch>(out).empty());
    EXPECT_TRUE(out.timers.empty());
}
