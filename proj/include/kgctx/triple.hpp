#pragma once
#include <string>
#include <string_view>

namespace kgctx {

// One (head, relation, tail) fact. Fields are stored trimmed and must be
// non-empty; construction via make_triple enforces that.
struct Triple {
    std::string head;
    std::string relation;
    std::string tail;

    bool operator==(const Triple&) const = default;
    auto operator<=>(const Triple&) const = default;
};

// Validates and trims the three fields; throws Error on an empty field.
Triple make_triple(std::string_view head, std::string_view relation, std::string_view tail);

// Renders "(head, relation, tail)" — one space after each comma.
std::string serialize_triple(const Triple& t);

// Inverse of serialize_triple. The relation is taken between the first and
// last ", " inside the parentheses, so the round trip is exact whenever the
// head and tail contain no ", " sequence. Throws Error on malformed input.
Triple parse_triple(std::string_view s);

// Identity key for dedup: all three fields under entity normalization.
std::string triple_dedup_key(const Triple& t);

} // namespace kgctx
