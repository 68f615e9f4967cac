#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace voluntier::gp {

using PrimitiveId = std::uint16_t;

enum class ProblemKind { SantaFe, Multiplexer };

struct ProblemId {
    ProblemKind kind = ProblemKind::Multiplexer;
    int k = 0; // address bits, Multiplexer only

    // "santafe" or "multiplexer:<k>"
    std::string to_string() const;
    static ProblemId parse(std::string_view text);

    friend bool operator==(const ProblemId&, const ProblemId&) = default;
};

struct FunctionSpec {
    std::string name;
    int arity = 0;
};

/// Functions occupy ids [0, function_count()), terminals follow.
class PrimitiveSet {
public:
    PrimitiveSet(ProblemId problem, std::vector<FunctionSpec> functions, std::vector<std::string> terminals);

    static PrimitiveSet santa_fe();
    /// AND/2 OR/2 NOT/1 IF/3 over a0..a(k-1), d0..d(2^k - 1).
    static PrimitiveSet multiplexer(int k);
    static PrimitiveSet for_problem(ProblemId problem);

    ProblemId problem() const noexcept { return problem_; }
    std::size_t size() const noexcept { return names_.size(); }
    std::size_t function_count() const noexcept { return function_count_; }
    std::size_t terminal_count() const noexcept { return names_.size() - function_count_; }

    int arity(PrimitiveId id) const { return arities_[id]; }
    const std::string& name(PrimitiveId id) const { return names_[id]; }
    bool is_terminal(PrimitiveId id) const noexcept { return id >= function_count_; }
    std::optional<PrimitiveId> find(std::string_view name) const;

    PrimitiveId function_id(std::size_t i) const noexcept { return static_cast<PrimitiveId>(i); }
    PrimitiveId terminal_id(std::size_t i) const noexcept { return static_cast<PrimitiveId>(function_count_ + i); }

private:
    ProblemId problem_;
    std::size_t function_count_ = 0;
    std::vector<std::string> names_;
    std::vector<int> arities_;
};

} // namespace voluntier::gp
