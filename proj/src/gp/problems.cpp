#include "voluntier/gp/problems.hpp"

#include <bit>
#include <bitset>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "voluntier/errors.hpp"

namespace voluntier::gp {

EvalReport EvalReport::from_hits(std::uint64_t hits, std::uint64_t total_cases)
{
    EvalReport r;
    r.hits = hits;
    r.total_cases = total_cases;
    r.raw = static_cast<double>(total_cases - hits);
    r.adjusted = 1.0 / (1.0 + r.raw);
    return r;
}

std::string format_fitness(double value)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", value);
    return buf;
}

// ---------------------------------------------------------------------------
// Multiplexer

MultiplexerProblem::MultiplexerProblem(int k) : k_(k), pset_(PrimitiveSet::multiplexer(k))
{
    const int inputs = k + (1 << k);
    if (inputs >= 64 || (std::uint64_t{1} << inputs) > kMaxCases) {
        throw UnsupportedError("multiplexer k=" + std::to_string(k) + " has more than 2^24 fitness cases");
    }
    cases_ = std::uint64_t{1} << inputs;
    words_ = static_cast<std::size_t>((cases_ + 63) / 64);
    tail_mask_ = cases_ % 64 == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << (cases_ % 64)) - 1;

    ops_.resize(pset_.size(), Op::Input);
    ops_[*pset_.find("AND")] = Op::And;
    ops_[*pset_.find("OR")] = Op::Or;
    ops_[*pset_.find("NOT")] = Op::Not;
    ops_[*pset_.find("IF")] = Op::If;

    const int data_bits = 1 << k;
    // Terminal i (0-based among terminals) is a_i for i < k, else d_(i-k).
    auto input_bit = [&](std::size_t terminal) -> int {
        return terminal < static_cast<std::size_t>(k) ? data_bits + static_cast<int>(terminal)
                                                       : static_cast<int>(terminal) - k;
    };
    inputs_.assign(pset_.terminal_count() * words_, 0);
    target_.assign(words_, 0);
    for (std::uint64_t c = 0; c < cases_; ++c) {
        const std::size_t w = static_cast<std::size_t>(c / 64);
        const std::uint64_t bit = std::uint64_t{1} << (c % 64);
        for (std::size_t t = 0; t < pset_.terminal_count(); ++t) {
            if ((c >> input_bit(t)) & 1U) {
                inputs_[t * words_ + w] |= bit;
            }
        }
        const std::uint64_t address = c >> data_bits;
        if ((c >> address) & 1U) {
            target_[w] |= bit;
        }
    }
}

EvalReport MultiplexerProblem::evaluate(const ProgramTree& tree, std::uint64_t& ops) const
{
    thread_local std::vector<std::uint64_t> buffer;
    thread_local std::vector<const std::uint64_t*> stack;
    const std::size_t n = tree.nodes.size();
    if (buffer.size() < n * words_) {
        buffer.resize(n * words_);
    }
    stack.clear();

    const std::size_t fc = pset_.function_count();
    for (std::size_t i = n; i-- > 0;) {
        const PrimitiveId id = tree.nodes[i];
        const Op op = ops_[id];
        if (op == Op::Input) {
            stack.push_back(&inputs_[(id - fc) * words_]);
            continue;
        }
        const std::size_t arity = static_cast<std::size_t>(pset_.arity(id));
        const std::size_t level = stack.size() - arity;
        std::uint64_t* out = &buffer[level * words_];
        const std::uint64_t* x = stack[stack.size() - 1];
        switch (op) {
        case Op::Not:
            for (std::size_t w = 0; w < words_; ++w) out[w] = ~x[w];
            break;
        case Op::And: {
            const std::uint64_t* y = stack[stack.size() - 2];
            for (std::size_t w = 0; w < words_; ++w) out[w] = x[w] & y[w];
            break;
        }
        case Op::Or: {
            const std::uint64_t* y = stack[stack.size() - 2];
            for (std::size_t w = 0; w < words_; ++w) out[w] = x[w] | y[w];
            break;
        }
        case Op::If: {
            const std::uint64_t* y = stack[stack.size() - 2];
            const std::uint64_t* z = stack[stack.size() - 3];
            for (std::size_t w = 0; w < words_; ++w) out[w] = (x[w] & y[w]) | (~x[w] & z[w]);
            break;
        }
        case Op::Input:
            break;
        }
        stack.resize(level + 1);
        stack[level] = out;
    }
    ops += static_cast<std::uint64_t>(n) * cases_;

    const std::uint64_t* result = stack.back();
    std::uint64_t hits = 0;
    for (std::size_t w = 0; w < words_; ++w) {
        std::uint64_t agree = ~(result[w] ^ target_[w]);
        if (w + 1 == words_) {
            agree &= tail_mask_;
        }
        hits += static_cast<std::uint64_t>(std::popcount(agree));
    }
    return EvalReport::from_hits(hits, cases_);
}

// ---------------------------------------------------------------------------
// Santa Fe trail

namespace {

constexpr std::string_view kCanonicalTrail =
    "S###............................\n"
    "...#............................\n"
    "...#.....................###....\n"
    "...#....................#....#..\n"
    "...#....................#....#..\n"
    "...####.#####........##.........\n"
    "............#................#..\n"
    "............#.......#...........\n"
    "............#.......#........#..\n"
    "............#.......#...........\n"
    "....................#...........\n"
    "............#................#..\n"
    "............#...................\n"
    "............#.......#.....###...\n"
    "............#.......#..#........\n"
    ".................#..............\n"
    "................................\n"
    "............#...........#.......\n"
    "............#...#..........#....\n"
    "............#...#...............\n"
    "............#...#...............\n"
    "............#...#.........#.....\n"
    "............#..........#........\n"
    "............#...................\n"
    "...##..#####....#...............\n"
    ".#..............#...............\n"
    ".#..............#...............\n"
    ".#......#######.................\n"
    ".#.....#........................\n"
    ".......#........................\n"
    "..####..........................\n"
    "................................\n";

} // namespace

std::string_view canonical_trail_text() { return kCanonicalTrail; }

Trail Trail::parse(std::string_view text)
{
    Trail t;
    t.food.assign(kSize * kSize, false);
    int row = 0;
    bool start_seen = false;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.empty() && text.empty()) {
            break;
        }
        if (row >= kSize) {
            throw ConfigError("trail has more than 32 lines");
        }
        if (line.size() != static_cast<std::size_t>(kSize)) {
            throw ConfigError("trail line " + std::to_string(row + 1) + " is not 32 characters");
        }
        for (int col = 0; col < kSize; ++col) {
            switch (line[static_cast<std::size_t>(col)]) {
            case '.':
                break;
            case '#':
                t.food[static_cast<std::size_t>(row * kSize + col)] = true;
                ++t.food_count;
                break;
            case 'S':
                if (start_seen) {
                    throw ConfigError("trail has more than one start cell");
                }
                start_seen = true;
                t.start_row = row;
                t.start_col = col;
                break;
            default:
                throw ConfigError("trail line " + std::to_string(row + 1) + " has an invalid character");
            }
        }
        ++row;
    }
    if (row != kSize) {
        throw ConfigError("trail must have 32 lines");
    }
    if (!start_seen) {
        throw ConfigError("trail has no start cell");
    }
    return t;
}

Trail Trail::load(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open trail file '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const Trail& Trail::canonical()
{
    static const Trail trail = parse(kCanonicalTrail);
    return trail;
}

SantaFeProblem::SantaFeProblem(Trail trail, std::uint32_t steps_limit)
    : trail_(std::move(trail)), steps_limit_(steps_limit), pset_(PrimitiveSet::santa_fe())
{
    ops_.resize(pset_.size());
    ops_[*pset_.find("IF-FOOD-AHEAD")] = Op::IfFoodAhead;
    ops_[*pset_.find("PROGN2")] = Op::Progn;
    ops_[*pset_.find("PROGN3")] = Op::Progn;
    ops_[*pset_.find("MOVE")] = Op::Move;
    ops_[*pset_.find("LEFT")] = Op::Left;
    ops_[*pset_.find("RIGHT")] = Op::Right;
}

namespace {

struct Ant {
    static constexpr int N = Trail::kSize;
    std::bitset<N * N> food;
    int row = 0;
    int col = 0;
    int drow = 0;
    int dcol = 1; // east
    std::uint64_t eaten = 0;
    std::uint32_t steps = 0;

    int ahead() const { return ((row + drow + N) % N) * N + (col + dcol + N) % N; }
};

} // namespace

EvalReport SantaFeProblem::evaluate(const ProgramTree& tree, std::uint64_t& ops) const
{
    const std::size_t n = tree.nodes.size();
    std::vector<std::size_t> ends(n);
    for (std::size_t i = n; i-- > 0;) {
        // Prefix order: a node's subtree ends where its last child's subtree ends.
        const int arity = pset_.arity(tree.nodes[i]);
        std::size_t end = i + 1;
        for (int c = 0; c < arity; ++c) {
            end = ends[end];
        }
        ends[i] = end;
    }

    Ant ant;
    for (std::size_t i = 0; i < trail_.food.size(); ++i) {
        ant.food[i] = trail_.food[i];
    }
    ant.row = trail_.start_row;
    ant.col = trail_.start_col;

    const auto total = static_cast<std::uint64_t>(trail_.food_count);
    auto exec = [&](auto& self, std::size_t pos) -> void {
        if (ant.steps >= steps_limit_) {
            return;
        }
        ++ops;
        const PrimitiveId id = tree.nodes[pos];
        switch (ops_[id]) {
        case Op::Move: {
            ++ant.steps;
            const int cell = ant.ahead();
            ant.row = cell / Ant::N;
            ant.col = cell % Ant::N;
            if (ant.food[static_cast<std::size_t>(cell)]) {
                ant.food[static_cast<std::size_t>(cell)] = false;
                ++ant.eaten;
            }
            break;
        }
        case Op::Left: {
            ++ant.steps;
            const int d = ant.drow;
            ant.drow = -ant.dcol;
            ant.dcol = d;
            break;
        }
        case Op::Right: {
            ++ant.steps;
            const int d = ant.drow;
            ant.drow = ant.dcol;
            ant.dcol = -d;
            break;
        }
        case Op::IfFoodAhead:
            if (ant.food[static_cast<std::size_t>(ant.ahead())]) {
                self(self, pos + 1);
            } else {
                self(self, ends[pos + 1]);
            }
            break;
        case Op::Progn: {
            std::size_t child = pos + 1;
            for (int c = 0; c < pset_.arity(id); ++c) {
                self(self, child);
                child = ends[child];
            }
            break;
        }
        }
    };
    // Every leaf costs a step, so each pass over the program makes progress.
    while (ant.steps < steps_limit_ && ant.eaten < total) {
        exec(exec, 0);
    }
    return EvalReport::from_hits(ant.eaten, total);
}

std::unique_ptr<Problem> make_problem(const GpParams& params)
{
    if (params.problem.kind == ProblemKind::SantaFe) {
        Trail trail = params.trail_file.empty() ? Trail::canonical() : Trail::load(params.trail_file);
        return std::make_unique<SantaFeProblem>(std::move(trail), params.steps_limit);
    }
    return std::make_unique<MultiplexerProblem>(params.problem.k);
}

} // namespace voluntier::gp
