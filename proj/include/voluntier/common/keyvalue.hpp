#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace voluntier {

/// key = value lines, '#' comments. Each getter marks its key as used;
/// finish() rejects whatever was never asked for.
class KeyValues {
public:
    // Throws ConfigError on a malformed or repeated line.
    static KeyValues parse(std::string_view text);

    bool has(const std::string& key) const { return values_.contains(key); }
    std::optional<std::string> text(const std::string& key);
    std::optional<double> number(const std::string& key);
    std::optional<std::uint64_t> integer(const std::string& key);
    std::optional<bool> flag(const std::string& key);
    // Keys starting with `prefix`, with the prefix removed.
    std::map<std::string, std::string> with_prefix(const std::string& prefix);
    void finish() const;

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, std::size_t> lines_;
    std::set<std::string> used_;
};

} // namespace voluntier
