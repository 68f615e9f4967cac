#include "voluntier/gp/primitive_set.hpp"

#include <charconv>
#include <set>

#include "voluntier/errors.hpp"

namespace voluntier::gp {

std::string ProblemId::to_string() const
{
    if (kind == ProblemKind::SantaFe) {
        return "santafe";
    }
    return "multiplexer:" + std::to_string(k);
}

ProblemId ProblemId::parse(std::string_view text)
{
    if (text == "santafe") {
        return {ProblemKind::SantaFe, 0};
    }
    constexpr std::string_view prefix = "multiplexer:";
    if (text.starts_with(prefix)) {
        const auto digits = text.substr(prefix.size());
        int k = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
        if (ec == std::errc{} && ptr == digits.data() + digits.size() && k >= 1) {
            return {ProblemKind::Multiplexer, k};
        }
    }
    throw ConfigError("unknown problem '" + std::string(text) + "' (expected santafe or multiplexer:<k>)");
}

PrimitiveSet::PrimitiveSet(ProblemId problem, std::vector<FunctionSpec> functions, std::vector<std::string> terminals)
    : problem_(problem), function_count_(functions.size())
{
    if (terminals.empty()) {
        throw ConfigError("primitive set has no terminals");
    }
    if (functions.size() + terminals.size() > 0xFFFF) {
        throw ConfigError("primitive set too large");
    }
    std::set<std::string, std::less<>> seen;
    for (auto& f : functions) {
        if (f.arity < 1) {
            throw ConfigError("function '" + f.name + "' must have arity >= 1");
        }
        if (!seen.insert(f.name).second) {
            throw ConfigError("duplicate primitive name '" + f.name + "'");
        }
        names_.push_back(std::move(f.name));
        arities_.push_back(f.arity);
    }
    for (auto& t : terminals) {
        if (!seen.insert(t).second) {
            throw ConfigError("duplicate primitive name '" + t + "'");
        }
        names_.push_back(std::move(t));
        arities_.push_back(0);
    }
}

PrimitiveSet PrimitiveSet::santa_fe()
{
    return PrimitiveSet({ProblemKind::SantaFe, 0}, {{"IF-FOOD-AHEAD", 2}, {"PROGN2", 2}, {"PROGN3", 3}},
                        {"MOVE", "LEFT", "RIGHT"});
}

PrimitiveSet PrimitiveSet::multiplexer(int k)
{
    if (k < 1 || k > 8) {
        throw ConfigError("multiplexer address width must be in [1, 8]");
    }
    std::vector<std::string> terminals;
    for (int i = 0; i < k; ++i) {
        terminals.push_back("a" + std::to_string(i));
    }
    for (int j = 0; j < (1 << k); ++j) {
        terminals.push_back("d" + std::to_string(j));
    }
    return PrimitiveSet({ProblemKind::Multiplexer, k}, {{"AND", 2}, {"OR", 2}, {"NOT", 1}, {"IF", 3}},
                        std::move(terminals));
}

PrimitiveSet PrimitiveSet::for_problem(ProblemId problem)
{
    return problem.kind == ProblemKind::SantaFe ? santa_fe() : multiplexer(problem.k);
}

std::optional<PrimitiveId> PrimitiveSet::find(std::string_view name) const
{
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) {
            return static_cast<PrimitiveId>(i);
        }
    }
    return std::nullopt;
}

} // namespace voluntier::gp
