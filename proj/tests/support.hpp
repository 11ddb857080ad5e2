// Helpers for building certificates by hand in tests.

#pragma once

#include "narwhal/harness/crafted.hpp"

namespace testing_support {

using namespace narwhal;

struct DagBuilder {
    Committee committee;
    KeyRing keys;
    std::map<std::pair<Round, std::uint32_t>, Certificate> certs;

    explicit DagBuilder(std::uint32_t n = 4, std::uint64_t seed = 1) : committee(Committee::uniform(n)), keys(seed) {
        for (const auto& m : committee.members()) certs[{0, m.id.value}] = Certificate::genesis(committee, m.id);
    }

    const Certificate& at(Round r, std::uint32_t author) const { return certs.at({r, author}); }

    /// Certificate by `author` at `round` whose strong parents are the given
    /// authors' certificates one round back (all of them when empty).
    const Certificate& add(std::uint32_t author, Round round, std::vector<std::uint32_t> parent_authors = {},
                           std::set<CertRef> weak = {}, std::vector<PayloadRef> payload = {}) {
        std::set<Digest> parents;
        if (parent_authors.empty()) {
            for (const auto& [key, c] : certs)
                if (key.first == round - 1) parents.insert(c.digest());
        } else {
            for (auto a : parent_authors) parents.insert(at(round - 1, a).digest());
        }
        Header h(ValidatorId{author}, round, 0, std::move(payload), std::move(parents), std::move(weak), 0);
        auto [it, _] = certs.insert_or_assign({round, author}, harness::certify(committee, keys, h));
        return it->second;
    }

    /// Every author in `authors` adds a certificate at each round in [1, rounds]
    /// referencing all certificates of the previous round.
    void full_rounds(Round rounds, std::vector<std::uint32_t> authors = {1, 2, 3, 4}) {
        for (Round r = 1; r <= rounds; ++r)
            for (auto a : authors) add(a, r);
    }

    std::vector<Certificate> all(bool with_genesis = false) const {
        std::vector<Certificate> out;
        for (const auto& [key, c] : certs)
            if (with_genesis || key.first > 0) out.push_back(c);
        return out;
    }
};

}  // namespace testing_support
