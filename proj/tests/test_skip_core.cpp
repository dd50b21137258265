#include <doctest.h>

#include <cmath>
#include <limits>

#include "gmskip/error.hpp"
#include "gmskip/skip_core.hpp"

using namespace gmskip;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected gmskip::Error");
    return ErrorCode::InvalidArgument;
}

SkipConfig sample() {
    SkipConfig c;
    c.model_id = "toy:seed=42";
    c.total_blocks = 4;
    c.skipped = {3, 1};
    c.lambda = 0.9;
    c.max_remove = 3;
    c.metric = "top1";
    c.full_score = 0.8;
    c.final_score = 0.75;
    c.trace = {
        {1, {{0, 0.5}, {1, 0.1}, {2, 0.2}, {3, 0.0}}, 3, 0.8, true},
        {2, {{0, 0.3}, {1, 0.05}, {2, 0.1}}, 1, 0.75, true},
        {3, {{0, 0.4}, {2, 0.2}}, 2, 0.55, false},
    };
    return c;
}

}  // namespace

TEST_CASE("block sets are canonical") {
    BlockSet s(6, {4, 0, 2});
    CHECK(s.retained() == std::vector<int>{0, 2, 4});
    CHECK(s.skipped() == std::vector<int>{1, 3, 5});
    CHECK(s.key() == "0,2,4");
    CHECK(s == BlockSet::from_skipped(6, std::vector<int>{5, 1, 3}));
    CHECK(BlockSet::full(3).key() == "0,1,2");
    CHECK(BlockSet(3, {}).key().empty());
    CHECK(s.without(2).key() == "0,4");
    CHECK(code_of([&] { s.without(1); }) == ErrorCode::BlockNotRetained);
}

TEST_CASE("block index validation") {
    CHECK(code_of([] { BlockSet(4, {1, 1}); }) == ErrorCode::DuplicateIndex);
    CHECK(code_of([] { BlockSet(4, {4}); }) == ErrorCode::IndexOutOfRange);
    CHECK(code_of([] { BlockSet(4, {-1}); }) == ErrorCode::IndexOutOfRange);
    CHECK(code_of([] { BlockSet::full(0); }) == ErrorCode::EmptyModel);
}

TEST_CASE("sparsity and fixed formatting") {
    SkipConfig c;
    c.total_blocks = 32;
    c.skipped = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    CHECK(sparsity(c) == doctest::Approx(11.0 / 32.0));
    CHECK(format_fixed(sparsity_pct(11, 32), 2) == "34.38");
    CHECK(format_fixed(sparsity_pct(9, 32), 2) == "28.13");
    CHECK(format_fixed(sparsity_pct(3, 32), 2) == "9.38");
    CHECK(format_fixed(sparsity_pct(7, 32), 2) == "21.88");
    CHECK(format_fixed(sparsity_pct(0, 32), 2) == "0.00");
    CHECK(format_fixed(-0.0001, 2) == "0.00");
    CHECK(format_fixed(0.328, 4) == "0.3280");
}

TEST_CASE("format_real round-trips") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, 0.68359375, -2.5}) {
        const std::string s = format_real(v);
        CHECK(std::stod(s) == v);
    }
    CHECK(format_real(1.0) == "1");
}

TEST_CASE("serialize and deserialize are inverse") {
    const SkipConfig c = sample();
    const std::string text = serialize(c);
    CHECK(deserialize(text) == c);
    CHECK(serialize(deserialize(text)) == text);
    // fixed key order
    CHECK(text.find("\"model_id\"") < text.find("\"total_blocks\""));
    CHECK(text.find("\"final_score\"") < text.find("\"trace\""));
}

TEST_CASE("empty skip config is valid") {
    SkipConfig c;
    c.total_blocks = 8;
    c.metric = "top1";
    c.full_score = c.final_score = 1.0;
    CHECK_NOTHROW(validate(c));
    CHECK(deserialize(serialize(c)) == c);
}

TEST_CASE("validation rejects broken configs") {
    auto with = [](auto edit) {
        SkipConfig c = sample();
        edit(c);
        return code_of([&] { validate(c); });
    };
    CHECK(with([](SkipConfig& c) { c.skipped = {3, 3}; }) == ErrorCode::DuplicateIndex);
    CHECK(with([](SkipConfig& c) { c.skipped = {3, 9}; }) == ErrorCode::IndexOutOfRange);
    CHECK(with([](SkipConfig& c) { c.lambda = 1.5; }) == ErrorCode::LambdaOutOfRange);
    CHECK(with([](SkipConfig& c) { c.lambda = std::nan(""); }) == ErrorCode::LambdaOutOfRange);
    CHECK(with([](SkipConfig& c) { c.max_remove = 1; }) == ErrorCode::BudgetExceeded);
    CHECK(with([](SkipConfig& c) { c.final_score = 0.5; }) == ErrorCode::FloorViolated);
    CHECK(with([](SkipConfig& c) { c.full_score = std::numeric_limits<double>::infinity(); }) ==
          ErrorCode::NonFiniteScore);
    CHECK(with([](SkipConfig& c) { c.trace[1].iteration = 5; }) == ErrorCode::TraceMismatch);
    CHECK(with([](SkipConfig& c) { c.trace[0].chosen = 7; }) == ErrorCode::TraceMismatch);
    CHECK(with([](SkipConfig& c) { c.skipped = {1, 3}; }) == ErrorCode::TraceMismatch);
    CHECK(with([](SkipConfig& c) { c.trace[0].accepted = false; }) == ErrorCode::TraceMismatch);
    CHECK(with([](SkipConfig& c) { c.trace[1].score_after = 0.7; }) == ErrorCode::FloorViolated);
}

TEST_CASE("deserialize errors carry position or field") {
    try {
        deserialize("{\n  \"model_id\": \"x\",\n  oops\n}");
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    std::string text = serialize(sample());
    std::string missing = text;
    missing.replace(missing.find("\"metric\""), 8, "\"metrik\"");
    try {
        deserialize(missing);
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SchemaError);
        CHECK(std::string(e.what()).find("metric") != std::string::npos);
    }
    std::string typed = text;
    typed.replace(typed.find("\"total_blocks\": 4"), 17, "\"total_blocks\": \"4\"");
    CHECK(code_of([&] { deserialize(typed); }) == ErrorCode::SchemaError);
}
