#include "voluntier/gp/tree.hpp"

#include <algorithm>
#include <cctype>

#include "voluntier/errors.hpp"

namespace voluntier::gp {

std::size_t subtree_end(const PrimitiveSet& pset, std::span<const PrimitiveId> nodes, std::size_t pos)
{
    std::size_t need = 1;
    while (need > 0) {
        need += static_cast<std::size_t>(pset.arity(nodes[pos])) - 1;
        ++pos;
    }
    return pos;
}

int tree_depth(const PrimitiveSet& pset, const ProgramTree& tree)
{
    // Depths of nodes not yet visited; siblings share a depth so order is irrelevant.
    std::vector<int> pending{0};
    int depth = 0;
    for (PrimitiveId id : tree.nodes) {
        if (pending.empty()) {
            break;
        }
        const int d = pending.back();
        pending.pop_back();
        depth = std::max(depth, d);
        pending.insert(pending.end(), static_cast<std::size_t>(pset.arity(id)), d + 1);
    }
    return depth;
}

bool is_well_formed(const PrimitiveSet& pset, const ProgramTree& tree)
{
    if (tree.nodes.empty()) {
        return false;
    }
    std::size_t need = 1;
    for (PrimitiveId id : tree.nodes) {
        if (need == 0 || id >= pset.size()) {
            return false;
        }
        need += static_cast<std::size_t>(pset.arity(id)) - 1;
    }
    return need == 0;
}

namespace {

void append_sexpr(const PrimitiveSet& pset, const ProgramTree& tree, std::size_t& pos, std::string& out)
{
    const PrimitiveId id = tree.nodes[pos++];
    const int arity = pset.arity(id);
    if (arity == 0) {
        out += pset.name(id);
        return;
    }
    out += '(';
    out += pset.name(id);
    for (int i = 0; i < arity; ++i) {
        out += ' ';
        append_sexpr(pset, tree, pos, out);
    }
    out += ')';
}

class SexprParser {
public:
    SexprParser(const PrimitiveSet& pset, std::string_view text) : pset_(pset), text_(text) {}

    ProgramTree parse()
    {
        ProgramTree tree;
        node(tree);
        skip_space();
        if (pos_ != text_.size()) {
            fail("trailing characters");
        }
        return tree;
    }

private:
    void node(ProgramTree& tree)
    {
        skip_space();
        if (pos_ >= text_.size()) {
            fail("unexpected end of input");
        }
        const bool list = text_[pos_] == '(';
        if (list) {
            ++pos_;
        }
        const std::string_view name = token();
        const auto id = pset_.find(name);
        if (!id) {
            fail("unknown primitive '" + std::string(name) + "'");
        }
        const int arity = pset_.arity(*id);
        if (list != (arity > 0)) {
            fail("primitive '" + std::string(name) + "' used with wrong arity");
        }
        tree.nodes.push_back(*id);
        for (int i = 0; i < arity; ++i) {
            node(tree);
        }
        if (list) {
            skip_space();
            if (pos_ >= text_.size() || text_[pos_] != ')') {
                fail("expected ')' after arguments of '" + std::string(name) + "'");
            }
            ++pos_;
        }
    }

    std::string_view token()
    {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) && text_[pos_] != '(' &&
               text_[pos_] != ')') {
            ++pos_;
        }
        if (start == pos_) {
            fail("expected a primitive name");
        }
        return text_.substr(start, pos_ - start);
    }

    void skip_space()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    [[noreturn]] void fail(const std::string& what) const
    {
        throw ConfigError("s-expression: " + what + " at offset " + std::to_string(pos_));
    }

    const PrimitiveSet& pset_;
    std::string_view text_;
    std::size_t pos_ = 0;
};

} // namespace

std::string to_sexpr(const PrimitiveSet& pset, const ProgramTree& tree)
{
    std::string out;
    std::size_t pos = 0;
    if (!tree.nodes.empty()) {
        append_sexpr(pset, tree, pos, out);
    }
    return out;
}

ProgramTree parse_sexpr(const PrimitiveSet& pset, std::string_view text) { return SexprParser(pset, text).parse(); }

} // namespace voluntier::gp
