#include <doctest.h>

#include <set>

#include "voluntier/common/digest.hpp"
#include "voluntier/errors.hpp"
#include "voluntier/proto/messages.hpp"

using namespace voluntier;
using namespace voluntier::proto;

namespace {

SweepSpec mux_sweep(std::uint32_t replicates)
{
    SweepSpec s;
    s.name = "mux";
    s.base_params.problem = gp::ProblemId{gp::ProblemKind::Multiplexer, 3};
    s.replicates = replicates;
    return s;
}

std::vector<Message> samples()
{
    AssignWork assign;
    assign.result_id = 17;
    assign.work_unit = expand_sweep(mux_sweep(1)).work_units.front();
    assign.payloads.push_back(sign("params", "problem=multiplexer:3\n", generate_keypair()));
    JobDescriptor job;
    job.program = "run.sh";
    job.outputs = {"out.txt"};
    job.checkpoint_file = "state.ckpt";
    assign.job = job;

    SubmitResult submit;
    submit.host_id = "h3";
    submit.result_id = 9;
    submit.output = std::string("\0\x01\xffraw", 6);
    submit.cpu_time = 1.25;
    submit.flops_estimate = 3e9;

    SubmitResult failed = submit;
    failed.outcome = Outcome::Error;
    failed.output.clear();
    failed.error_message = "signature rejected";

    return {Register{Platform::MacosAarch64, 8, 2.5e9, 0.8, 0.6, ""},
            RegisterAck{"h1"},
            RequestWork{"h1"},
            assign,
            NoWork{},
            Heartbeat{"h1", 4, 0.5},
            HeartbeatAck{false, "unknown result"},
            submit,
            failed,
            SubmitAck{true, ""},
            SubmitSweep{mux_sweep(3)},
            SubmitSweepAck{{"a", "b"}},
            ErrorReply{"nope"}};
}

} // namespace

TEST_CASE("every message kind round-trips")
{
    for (const auto& m : samples()) {
        CAPTURE(kind_of(m));
        const auto bytes = encode(m);
        CHECK(decode(bytes) == m);
        CHECK(encode(decode(bytes)) == bytes);
    }
}

TEST_CASE("RequestWork round-trips")
{
    const Message m = RequestWork{"h42"};
    CHECK(std::get<RequestWork>(decode(encode(m))).host_id == "h42");
}

TEST_CASE("frame layout is big-endian length then body")
{
    const auto f = frame("abc");
    REQUIRE(f.size() == 7);
    CHECK(f.substr(0, 4) == std::string("\0\0\0\x03", 4));
    CHECK(f.substr(4) == "abc");
}

TEST_CASE("truncated frames raise protocol errors")
{
    const auto bytes = encode(Heartbeat{"h1", 2, 0.25});
    for (std::size_t n = 0; n < bytes.size(); ++n) {
        CAPTURE(n);
        CHECK_FALSE(unframe(std::string_view(bytes).substr(0, n)).has_value());
        try {
            decode(std::string_view(bytes).substr(0, n));
            FAIL("decoded a truncated frame");
        } catch (const ProtocolError& e) {
            CHECK(e.offset() == n);
        }
    }
}

TEST_CASE("malformed bodies report an offset")
{
    CHECK_THROWS_AS(decode(frame("{\"kind\": \"NoWork\"")), ProtocolError);
    try {
        decode(frame("{\"kind\" 1}"));
        FAIL("parsed bad json");
    } catch (const ProtocolError& e) {
        CHECK(e.offset() == kFrameHeader + 8);
    }
    CHECK_THROWS_AS(decode(frame("{\"kind\": \"Bogus\"}")), ProtocolError);
    CHECK_THROWS_AS(decode(frame("{\"kind\": \"Heartbeat\", \"host_id\": \"h\"}")), ProtocolError);
    CHECK_THROWS_AS(decode(frame("{\"kind\": \"RequestWork\", \"host_id\": 5}")), ProtocolError);
    CHECK_THROWS_AS(decode(frame("[]")), ProtocolError);
    CHECK_THROWS_AS(decode(encode(NoWork{}) + "x"), ProtocolError);
}

TEST_CASE("oversized length prefix is refused")
{
    std::string header("\x7f\xff\xff\xff", 4);
    CHECK_THROWS_AS(unframe(header), ProtocolError);
}

TEST_CASE("unknown fields are dropped")
{
    const auto m = decode(frame(R"({"kind":"RequestWork","host_id":"h7","colour":"blue","n":[1,2]})"));
    CHECK(m == Message{RequestWork{"h7"}});
    CHECK(to_json(m).dump() == R"({"host_id":"h7","kind":"RequestWork"})");
}

TEST_CASE("encoding is byte-deterministic")
{
    for (const auto& m : samples()) {
        const Message copy = m;
        CHECK(encode(copy) == encode(m));
    }
}

TEST_CASE("sweep expansion counts")
{
    SweepSpec grid = mux_sweep(25);
    grid.dimensions = {{"population_size", {"1000", "2000"}}, {"generations", {"1000", "2000"}}};
    const auto ex = expand_sweep(grid);
    CHECK(ex.work_units.size() == 100);
    CHECK(ex.payloads.size() == 4);

    CHECK(expand_sweep(mux_sweep(828)).work_units.size() == 828);

    auto one = mux_sweep(1);
    one.seed_base = 77;
    const auto single = expand_sweep(one).work_units;
    REQUIRE(single.size() == 1);
    CHECK(single[0].command_args == std::vector<std::string>{"--seed", "77"});
    CHECK(single[0].wu_id == "mux_rep0");
    CHECK(single[0].state == WuState::Unsent);
}

TEST_CASE("sweep expansion properties")
{
    SweepSpec s = mux_sweep(3);
    s.dimensions = {{"population_size", {"10", "20", "30"}}, {"tournament_size", {"2", "7"}}};
    s.seed_base = 1000;
    const auto ex = expand_sweep(s);
    REQUIRE(ex.work_units.size() == 18);

    std::set<std::string> ids, seeds;
    for (std::size_t i = 0; i < ex.work_units.size(); ++i) {
        const auto& wu = ex.work_units[i];
        ids.insert(wu.wu_id);
        seeds.insert(wu.command_args.at(1));
        CHECK(wu.command_args.at(1) == std::to_string(1000 + i));
        REQUIRE(wu.input_refs.size() == 1);
        const auto& payload = ex.payloads.at(wu.input_refs[0].digest);
        CHECK(sha256_hex(payload.bytes) == wu.input_refs[0].digest);
        const auto params = embedded_params(payload.bytes, wu.command_args);
        CHECK(params.seed == 1000 + i);
    }
    CHECK(ids.size() == 18);
    CHECK(seeds.size() == 18);
    CHECK(ex.work_units[0].wu_id == "mux_population_size10_tournament_size2_rep0");
    CHECK(ex.work_units[3].wu_id == "mux_population_size10_tournament_size7_rep0");

    const auto p3 = gp::parse_params(ex.payloads.at(ex.work_units[3].input_refs[0].digest).bytes);
    CHECK(p3.population_size == 10);
    CHECK(p3.tournament_size == 7);

    const auto again = expand_sweep(s);
    CHECK(again.work_units == ex.work_units);
}

TEST_CASE("sweep validation")
{
    auto s = mux_sweep(0);
    CHECK_THROWS_AS(expand_sweep(s), ConfigError);
    s.replicates = 2;
    s.dimensions = {{"population_size", {}}};
    CHECK_THROWS_AS(expand_sweep(s), ConfigError);
    s.dimensions = {{"population_size", {"ten"}}};
    CHECK_THROWS_AS(expand_sweep(s), ConfigError);
    s.dimensions.clear();
    s.min_quorum = 2;
    CHECK_THROWS_AS(expand_sweep(s), ConfigError);

    SweepSpec w;
    w.name = "wrapped";
    w.app_id = AppId::Wrapped;
    CHECK_THROWS_AS(expand_sweep(w), ConfigError);
    JobDescriptor job;
    job.program = "run.sh";
    job.inputs = {"data.txt"};
    job.outputs = {"out"};
    w.job = job;
    w.files = {{"run.sh", "#!/bin/sh\n"}};
    CHECK_THROWS_AS(expand_sweep(w), ConfigError);
    w.files["data.txt"] = "1 2 3";
    w.job->solution_file = "data.txt";
    CHECK_THROWS_AS(expand_sweep(w), ConfigError);
    w.job->solution_file = "done";
    w.dimensions = {{"alpha", {"1", "2"}}};
    const auto ex = expand_sweep(w);
    REQUIRE(ex.work_units.size() == 2);
    CHECK(ex.work_units[1].command_args == std::vector<std::string>{"--seed", "2", "--alpha=2"});
    CHECK(ex.work_units[1].input_refs.size() == 2);
    CHECK(ex.payloads.size() == 2);
}

TEST_CASE("sweep spec json round-trip")
{
    SweepSpec s = mux_sweep(5);
    s.dimensions = {{"generations", {"3", "4"}}};
    s.target_replicas = 2;
    s.min_quorum = 2;
    CHECK(sweep_from_json(to_json(s)) == s);
}

TEST_CASE("sign and verify")
{
    const auto keys = generate_keypair();
    const auto p = sign("prog", "payload bytes", keys);
    CHECK(p.digest == sha256_hex("payload bytes"));
    CHECK(p.key_id == key_id(keys.public_key));
    CHECK(verify(p, keys.public_key));

    for (std::size_t i = 0; i < p.bytes.size(); ++i) {
        auto bad = p;
        bad.bytes[i] ^= 0x01;
        CHECK_FALSE(verify(bad, keys.public_key));
    }
    auto bad_sig = p;
    bad_sig.signature[5] ^= 0x80;
    CHECK_FALSE(verify(bad_sig, keys.public_key));

    const auto other = generate_keypair();
    CHECK_FALSE(verify(p, other.public_key));

    auto unknown = p;
    unknown.key_id = "0123456789abcdef";
    CHECK_FALSE(verify(unknown, keys.public_key));
    CHECK_FALSE(verify(p, "short"));

    CHECK(decode_key(encode_key(keys.secret_key), 64) == keys.secret_key);
    CHECK_THROWS(decode_key("abcd", 32));
}
