#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace multimed {

/// Line-oriented `key = value` documents with `[section]` headers and `#`
/// comments. Shared by analysis configs and archived SCM specs.
struct KvEntry {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

struct KvSection {
    std::string name;
    std::size_t line = 0;
    std::vector<KvEntry> entries;
    /// Verbatim body lines for sections parsed in raw mode.
    std::string raw;

    const KvEntry* find(std::string_view key) const;
};

class KvDocument {
public:
    /// Sections named in `raw_sections` keep their body verbatim instead of
    /// being split into entries. Throws InputError on malformed lines.
    static KvDocument parse(std::string_view text, const std::set<std::string>& raw_sections = {});

    const std::vector<KvSection>& sections() const noexcept { return sections_; }
    const KvSection* find(std::string_view name) const;
    /// All sections whose name starts with `prefix`, in document order.
    std::vector<const KvSection*> with_prefix(std::string_view prefix) const;

private:
    std::vector<KvSection> sections_;
};

std::vector<std::string> split_list(std::string_view value, char sep = ',');
double parse_real(std::string_view value, std::string_view what);
long long parse_integer(std::string_view value, std::string_view what);
bool parse_bool(std::string_view value, std::string_view what);

}  // namespace multimed
