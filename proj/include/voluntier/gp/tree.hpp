#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voluntier/gp/primitive_set.hpp"

namespace voluntier::gp {

/// A GP individual stored as a prefix-order sequence of primitive ids. Every
/// subtree occupies a contiguous range, which keeps crossover a splice.
struct ProgramTree {
    std::vector<PrimitiveId> nodes;

    std::size_t size() const noexcept { return nodes.size(); }
    bool empty() const noexcept { return nodes.empty(); }

    friend bool operator==(const ProgramTree&, const ProgramTree&) = default;
};

// One past the last node of the subtree rooted at `pos`.
std::size_t subtree_end(const PrimitiveSet& pset, std::span<const PrimitiveId> nodes, std::size_t pos);

// Depth with a lone terminal at depth 0.
int tree_depth(const PrimitiveSet& pset, const ProgramTree& tree);

// Arity, id-range and completeness check. Does not check depth.
bool is_well_formed(const PrimitiveSet& pset, const ProgramTree& tree);

std::string to_sexpr(const PrimitiveSet& pset, const ProgramTree& tree);

// Inverse of to_sexpr; throws ConfigError on unknown names or bad arity.
ProgramTree parse_sexpr(const PrimitiveSet& pset, std::string_view text);

} // namespace voluntier::gp
