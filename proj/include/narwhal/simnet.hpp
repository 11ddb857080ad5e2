// Seeded discrete-event network with a partial-synchrony delay model and
// Byzantine message adapters.
//
// Before GST a message between validators takes a delay drawn from
// [pre_gst_min, pre_gst_max] (or is dropped, when enabled), but it is never
// delivered later than GST + delta. After GST every delay is in [1, delta].
// Messages between the nodes of one validator take local_delay.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>

#include "narwhal/messages.hpp"
#include "narwhal/primary.hpp"

namespace narwhal {

struct Partition {
    SimTime start = 0;
    SimTime end = 0;
    std::set<ValidatorId> group;  // cut off from everyone outside the group
};

struct NetworkConfig {
    SimTime gst = 0;
    SimTime delta = 50;
    SimTime pre_gst_min = 1;
    SimTime pre_gst_max = 500;
    bool drop_before_gst = false;
    std::uint32_t drop_permille = 100;
    std::vector<Partition> partitions;
    SimTime local_delay = 1;
    std::uint64_t seed = 1;
};

inline const NodeAddr kClientAddr{ValidatorId{0}, -2};

class SimNode {
public:
    virtual ~SimNode() = default;
    virtual void on_message(const NodeAddr& from, const Message& m, SimTime now, Outbox& out) = 0;
    virtual void on_timer(const Timer& t, SimTime now, Outbox& out) = 0;
};

struct SimEvent {
    SimTime deliver_at = 0;
    std::uint64_t seq = 0;
    NodeAddr dest;
    NodeAddr from;
    std::variant<Message, Timer> payload;
};

struct RunResult {
    enum class Stop { condition, quiescent, max_time } stop = Stop::quiescent;
    SimTime end_time = 0;
    std::uint64_t events = 0;
};

inline const char* to_string(RunResult::Stop s) {
    switch (s) {
    case RunResult::Stop::condition: return "condition";
    case RunResult::Stop::quiescent: return "quiescent";
    case RunResult::Stop::max_time: return "max_time";
    }
    return "?";
}

/// silent drops everything leaving the validator; the protocol-level
/// adversaries (equivocator, vote_withholder) act inside their primary and
/// pass through here unchanged. delayed(k) is applied at scheduling time.
inline std::vector<Outgoing> apply_behavior(const ByzantineBehavior& behavior, ValidatorId node,
                                            std::vector<Outgoing> outgoing) {
    if (behavior.kind != ByzantineBehavior::Kind::silent) return outgoing;
    std::erase_if(outgoing, [&](const Outgoing& o) { return o.to.validator != node; });
    return outgoing;
}

class Network {
public:
    explicit Network(NetworkConfig config) : config_(std::move(config)), rng_(config_.seed) {}

    void add_node(NodeAddr addr, SimNode* node) { nodes_[addr] = node; }

    void set_behavior(ValidatorId v, ByzantineBehavior b) { behaviors_[v] = b; }
    /// Honest but slow: outgoing inter-validator delays multiplied by factor.
    void set_slowness(ValidatorId v, std::uint32_t factor) { slowness_[v] = factor; }

    SimTime now() const { return now_; }
    const NetworkConfig& config() const { return config_; }

    void enable_trace(bool keep_lines) {
        tracing_ = true;
        keep_trace_lines_ = keep_lines;
    }
    const std::vector<std::string>& trace_lines() const { return trace_lines_; }
    std::uint64_t trace_hash() const { return trace_hash_; }
    std::uint64_t messages_sent() const { return sent_; }
    std::uint64_t messages_dropped() const { return dropped_; }
    /// Post-GST honest-to-honest messages delivered later than delta; must stay 0.
    std::uint64_t delta_violations() const { return delta_violations_; }

    /// Schedules delivery; returns the delivery time or nullopt when dropped.
    std::optional<SimTime> send(const NodeAddr& from, const NodeAddr& to, Message m) {
        ++sent_;
        const auto delay = draw_delay(from.validator, to.validator);
        if (!delay) {
            ++dropped_;
            return std::nullopt;
        }
        push(SimEvent{now_ + *delay, 0, to, from, std::move(m)});
        return now_ + *delay;
    }

    /// External input (clients) at an absolute time.
    void inject(SimTime at, const NodeAddr& to, Message m) { push(SimEvent{at, 0, to, kClientAddr, std::move(m)}); }

    void set_timer(const NodeAddr& node, SimTime delay, Timer t) {
        push(SimEvent{now_ + std::max<SimTime>(delay, 0), 0, node, node, t});
    }

    /// Delivers the outbox of `from`, after the Byzantine adapter.
    void flush(const NodeAddr& from, Outbox& out) {
        auto it = behaviors_.find(from.validator);
        auto msgs = it == behaviors_.end() ? std::move(out.messages)
                                           : apply_behavior(it->second, from.validator, std::move(out.messages));
        for (auto& o : msgs) send(from, o.to, std::move(o.message));
        for (const auto& t : out.timers) set_timer(from, t.delay, t.timer);
        out.clear();
    }

    bool empty() const { return queue_.empty(); }
    std::size_t pending_events() const { return queue_.size(); }

    RunResult run_until(const std::function<bool()>& condition, SimTime max_time,
                        const std::function<void(SimTime)>& after_event = {}) {
        RunResult r;
        Outbox out;
        while (true) {
            if (condition && condition()) {
                r.stop = RunResult::Stop::condition;
                break;
            }
            if (queue_.empty()) {
                r.stop = RunResult::Stop::quiescent;
                break;
            }
            if (queue_.top().deliver_at > max_time) {
                r.stop = RunResult::Stop::max_time;
                now_ = max_time;
                break;
            }
            SimEvent ev = queue_.top();
            queue_.pop();
            now_ = ev.deliver_at;
            ++r.events;
            auto nit = nodes_.find(ev.dest);
            if (nit == nodes_.end()) continue;
            if (auto* m = std::get_if<Message>(&ev.payload)) {
                record(ev, *m);
                nit->second->on_message(ev.from, *m, now_, out);
            } else {
                nit->second->on_timer(std::get<Timer>(ev.payload), now_, out);
            }
            flush(ev.dest, out);
            if (after_event) after_event(now_);
        }
        r.end_time = now_;
        return r;
    }

private:
    struct Later {
        bool operator()(const SimEvent& a, const SimEvent& b) const {
            return std::pair{a.deliver_at, a.seq} > std::pair{b.deliver_at, b.seq};
        }
    };

    void push(SimEvent ev) {
        ev.seq = next_seq_++;
        queue_.push(std::move(ev));
    }

    std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi) { return lo + rng_() % (hi - lo + 1); }

    std::optional<SimTime> draw_delay(ValidatorId from, ValidatorId to) {
        if (from == to || from == ValidatorId{0}) return config_.local_delay;
        SimTime delay;
        if (now_ < config_.gst) {
            if (config_.drop_before_gst && uniform(0, 999) < config_.drop_permille) return std::nullopt;
            delay = static_cast<SimTime>(uniform(static_cast<std::uint64_t>(config_.pre_gst_min),
                                                 static_cast<std::uint64_t>(config_.pre_gst_max)));
            for (const auto& p : config_.partitions)
                if (now_ >= p.start && now_ < p.end && p.group.contains(from) != p.group.contains(to))
                    delay = std::max(delay, p.end - now_ + static_cast<SimTime>(uniform(1, config_.delta)));
            delay = std::min(delay, config_.gst + config_.delta - now_);
        } else {
            delay = static_cast<SimTime>(uniform(1, static_cast<std::uint64_t>(config_.delta)));
        }
        std::uint32_t factor = 1;
        if (auto it = behaviors_.find(from); it != behaviors_.end() && it->second.kind == ByzantineBehavior::Kind::delayed)
            factor = it->second.factor;
        if (auto it = slowness_.find(from); it != slowness_.end()) factor = std::max(factor, it->second);
        delay *= factor;
        const bool honest_pair = !behaviors_.contains(from) && !behaviors_.contains(to) && !slowness_.contains(from);
        if (honest_pair && now_ >= config_.gst && delay > config_.delta) ++delta_violations_;
        return std::max<SimTime>(delay, 1);
    }

    void record(const SimEvent& ev, const Message& m) {
        if (!tracing_) return;
        std::string line = std::to_string(ev.deliver_at) + ' ' + to_string(ev.from) + ' ' + to_string(ev.dest) + ' ' +
                           kind_name(m) + ' ' + key_digest(m).short_hex();
        for (char c : line) trace_hash_ = (trace_hash_ ^ static_cast<std::uint8_t>(c)) * 0x100000001b3ULL;
        trace_hash_ = (trace_hash_ ^ '\n') * 0x100000001b3ULL;
        if (keep_trace_lines_) trace_lines_.push_back(std::move(line));
    }

    NetworkConfig config_;
    std::mt19937_64 rng_;
    std::map<NodeAddr, SimNode*> nodes_;
    std::map<ValidatorId, ByzantineBehavior> behaviors_;
    std::map<ValidatorId, std::uint32_t> slowness_;
    std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
    std::uint64_t next_seq_ = 0;
    SimTime now_ = 0;

    bool tracing_ = false;
    bool keep_trace_lines_ = false;
    std::vector<std::string> trace_lines_;
    std::uint64_t trace_hash_ = 0xcbf29ce484222325ULL;
    std::uint64_t sent_ = 0;
    std::uint64_t dropped_ = 0;
    std::uint64_t delta_violations_ = 0;
};

}  // namespace narwhal
