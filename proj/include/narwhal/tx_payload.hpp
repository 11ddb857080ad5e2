// Object-transfer transaction payloads.
//
// Layout: [head u8][k x u64 object keys][value bytes...]
//   head & 0x7f  number of objects touched (k >= 1)
//   head & 0x80  create missing objects instead of waiting for them
// A single-object payload with no value is exactly 9 bytes, the minimum
// accepted transaction size.

#pragma once

#include <optional>

#include "narwhal/core_types.hpp"

namespace narwhal {

inline constexpr std::uint8_t kCreateFlag = 0x80;

struct ObjectId {
    Digest id;
    auto operator<=>(const ObjectId&) const = default;
};

inline ObjectId object_id_for_key(std::uint64_t key) {
    Encoder e;
    e.str("object").u64(key);
    return ObjectId{digest_of(e.data())};
}

struct TxIntent {
    std::vector<ObjectId> objects;  // sorted, unique
    bool create = false;
    Bytes value;
};

inline std::optional<TxIntent> parse_payload(std::span<const std::uint8_t> payload) {
    if (payload.empty()) return std::nullopt;
    const std::size_t k = payload[0] & 0x7f;
    if (k == 0 || payload.size() < 1 + 8 * k) return std::nullopt;
    TxIntent out;
    out.create = (payload[0] & kCreateFlag) != 0;
    for (std::size_t i = 0; i < k; ++i) {
        std::uint64_t key = 0;
        for (std::size_t b = 0; b < 8; ++b) key = (key << 8) | payload[1 + 8 * i + b];
        out.objects.push_back(object_id_for_key(key));
    }
    std::sort(out.objects.begin(), out.objects.end());
    if (std::adjacent_find(out.objects.begin(), out.objects.end()) != out.objects.end()) return std::nullopt;
    out.value.assign(payload.begin() + static_cast<std::ptrdiff_t>(1 + 8 * k), payload.end());
    return out;
}

inline Bytes make_payload(const std::vector<std::uint64_t>& keys, bool create, std::span<const std::uint8_t> value = {}) {
    if (keys.empty() || keys.size() > 0x7f) throw ProtocolError("payload must touch 1..127 objects");
    Encoder e;
    e.u8(static_cast<std::uint8_t>(keys.size() | (create ? kCreateFlag : 0)));
    for (auto k : keys) e.u64(k);
    Bytes out = e.take();
    out.insert(out.end(), value.begin(), value.end());
    return out;
}

}  // namespace narwhal
