#include "voluntier/common/keyvalue.hpp"

#include <charconv>

#include "voluntier/errors.hpp"

namespace voluntier {

namespace {

std::string_view trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

} // namespace

KeyValues KeyValues::parse(std::string_view text)
{
    KeyValues kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
        std::string key(trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (kv.values_.contains(key)) throw ConfigError("line " + std::to_string(line_no) + ": repeated key " + key);
        kv.values_[key] = std::string(trim(line.substr(eq + 1)));
        kv.lines_[key] = line_no;
    }
    return kv;
}

std::optional<std::string> KeyValues::text(const std::string& key)
{
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
}

std::optional<double> KeyValues::number(const std::string& key)
{
    const auto v = text(key);
    if (!v) return std::nullopt;
    double d = 0;
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), d);
    if (ec != std::errc{} || p != v->data() + v->size()) {
        throw ConfigError("line " + std::to_string(lines_.at(key)) + ": " + key + " is not a number");
    }
    return d;
}

std::optional<std::uint64_t> KeyValues::integer(const std::string& key)
{
    const auto v = text(key);
    if (!v) return std::nullopt;
    std::uint64_t n = 0;
    const auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), n);
    if (ec != std::errc{} || p != v->data() + v->size()) {
        throw ConfigError("line " + std::to_string(lines_.at(key)) + ": " + key + " is not a non-negative integer");
    }
    return n;
}

std::optional<bool> KeyValues::flag(const std::string& key)
{
    const auto v = text(key);
    if (!v) return std::nullopt;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError("line " + std::to_string(lines_.at(key)) + ": " + key + " must be true or false");
}

std::map<std::string, std::string> KeyValues::with_prefix(const std::string& prefix)
{
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : values_) {
        if (k.size() > prefix.size() && k.starts_with(prefix)) {
            out[k.substr(prefix.size())] = v;
            used_.insert(k);
        }
    }
    return out;
}

void KeyValues::finish() const
{
    for (const auto& [k, line] : lines_) {
        if (!used_.contains(k)) throw ConfigError("line " + std::to_string(line) + ": unknown key " + k);
    }
}

} // namespace voluntier
