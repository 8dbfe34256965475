#pragma once
#include <cstdint>
#include <string>
#include <string_view>

namespace kgctx {

// Strip leading/trailing ASCII whitespace.
std::string trim(std::string_view s);

// Lowercase ASCII letters; bytes >= 0x80 (UTF-8 continuations etc.) pass through.
std::string lower_ascii(std::string_view s);

// Replace every run of ASCII whitespace with a single space.
std::string collapse_ws(std::string_view s);

// Canonical form used for entity identity and index keys:
// trim, lowercase, collapse whitespace runs, then drop spaces that
// immediately follow a period so "R. Madhavan" == "R.Madhavan".
// Idempotent by construction.
std::string normalize_entity(std::string_view raw);

inline constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
inline constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

// FNV-1a over bytes; `seed` lets callers derive independent hash families.
uint64_t fnv1a64(std::string_view bytes, uint64_t seed = kFnvOffset);

// 16-digit lowercase hex.
std::string hex64(uint64_t v);

} // namespace kgctx
