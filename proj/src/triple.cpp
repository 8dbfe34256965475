#include "kgctx/triple.hpp"

#include "kgctx/error.hpp"
#include "kgctx/text.hpp"

namespace kgctx {

Triple make_triple(std::string_view head, std::string_view relation, std::string_view tail) {
    Triple t{trim(head), trim(relation), trim(tail)};
    if (t.head.empty()) throw Error("triple has empty head");
    if (t.relation.empty()) throw Error("triple has empty relation");
    if (t.tail.empty()) throw Error("triple has empty tail");
    return t;
}

std::string serialize_triple(const Triple& t) {
    std::string out;
    out.reserve(t.head.size() + t.relation.size() + t.tail.size() + 6);
    out.push_back('(');
    out += t.head;
    out += ", ";
    out += t.relation;
    out += ", ";
    out += t.tail;
    out.push_back(')');
    return out;
}

Triple parse_triple(std::string_view s) {
    if (s.size() < 2 || s.front() != '(' || s.back() != ')')
        throw Error("malformed triple text: " + std::string(s));
    std::string_view body = s.substr(1, s.size() - 2);
    size_t first = body.find(", ");
    size_t last = body.rfind(", ");
    if (first == std::string_view::npos || last == first)
        throw Error("malformed triple text: " + std::string(s));
    return make_triple(body.substr(0, first),
                       body.substr(first + 2, last - first - 2),
                       body.substr(last + 2));
}

std::string triple_dedup_key(const Triple& t) {
    // '\t' cannot appear in a normalized field (whitespace collapses to ' ').
    return normalize_entity(t.head) + '\t' + normalize_entity(t.relation) + '\t' +
           normalize_entity(t.tail);
}

} // namespace kgctx
