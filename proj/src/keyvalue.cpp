#include "multimed/keyvalue.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "multimed/error.hpp"

namespace multimed {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

const KvEntry* KvSection::find(std::string_view key) const {
    for (const auto& e : entries)
        if (e.key == key) return &e;
    return nullptr;
}

KvDocument KvDocument::parse(std::string_view text, const std::set<std::string>& raw_sections) {
    KvDocument doc;
    doc.sections_.push_back({"", 0, {}, {}});
    std::size_t pos = 0, line_no = 0;
    while (pos <= text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        std::string_view t = trim(line);
        KvSection& cur = doc.sections_.back();
        bool raw = raw_sections.count(cur.name) > 0;
        if (!t.empty() && t.front() == '[') {
            if (t.back() != ']') throw InputError("line " + std::to_string(line_no) + ": unterminated section header");
            std::string name(trim(t.substr(1, t.size() - 2)));
            if (name.empty()) throw InputError("line " + std::to_string(line_no) + ": empty section name");
            if (doc.find(name)) throw InputError("line " + std::to_string(line_no) + ": duplicate section [" + name + "]");
            doc.sections_.push_back({name, line_no, {}, {}});
            continue;
        }
        if (raw) {
            cur.raw.append(line);
            cur.raw.push_back('\n');
            continue;
        }
        if (t.empty() || t.front() == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw InputError("line " + std::to_string(line_no) + ": expected 'key = value'");
        std::string key(trim(t.substr(0, eq)));
        if (key.empty()) throw InputError("line " + std::to_string(line_no) + ": empty key");
        if (cur.find(key))
            throw InputError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        cur.entries.push_back({key, std::string(trim(t.substr(eq + 1))), line_no});
    }
    return doc;
}

const KvSection* KvDocument::find(std::string_view name) const {
    for (const auto& s : sections_)
        if (s.name == name) return &s;
    return nullptr;
}

std::vector<const KvSection*> KvDocument::with_prefix(std::string_view prefix) const {
    std::vector<const KvSection*> out;
    for (const auto& s : sections_)
        if (!s.name.empty() && std::string_view(s.name).starts_with(prefix))
            out.push_back(&s);
    return out;
}

std::vector<std::string> split_list(std::string_view value, char sep) {
    std::vector<std::string> out;
    if (trim(value).empty()) return out;
    std::size_t pos = 0;
    while (true) {
        std::size_t end = value.find(sep, pos);
        std::string_view item = trim(value.substr(pos, end == std::string_view::npos ? end : end - pos));
        out.emplace_back(item);
        if (end == std::string_view::npos) break;
        pos = end + 1;
    }
    return out;
}

double parse_real(std::string_view value, std::string_view what) {
    value = trim(value);
    double v = 0.0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (value.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
        throw InputError(std::string(what) + ": not a finite number: '" + std::string(value) + "'");
    return v;
}

long long parse_integer(std::string_view value, std::string_view what) {
    value = trim(value);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size())
        throw InputError(std::string(what) + ": not an integer: '" + std::string(value) + "'");
    return v;
}

bool parse_bool(std::string_view value, std::string_view what) {
    value = trim(value);
    if (value == "true" || value == "yes" || value == "1") return true;
    if (value == "false" || value == "no" || value == "0") return false;
    throw InputError(std::string(what) + ": not a boolean: '" + std::string(value) + "'");
}

}  // namespace multimed
