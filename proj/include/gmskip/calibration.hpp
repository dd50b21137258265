#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "gmskip/metrics.hpp"

namespace gmskip {

using TokenId = int;
using TokenSequence = std::vector<TokenId>;

struct Example {
    std::string id;
    TokenSequence tokens;
    // Exactly one of these is meaningful, selected by CalibrationSet::kind.
    Label label;
    LabelSet labels;
    ReferenceSet references;

    friend bool operator==(const Example&, const Example&) = default;
};

struct CalibrationSet {
    GoldKind kind = GoldKind::label;
    std::vector<Example> examples;

    std::size_t size() const noexcept { return examples.size(); }
    Golds golds() const;

    friend bool operator==(const CalibrationSet&, const CalibrationSet&) = default;
};

/// One JSON object per line:
///   {"id": str, "tokens": [int], "label": str}
///   {"id": str, "tokens": [int], "labels": [str]}
///   {"id": str, "tokens": [int], "references": [[str]]}
/// with the same gold field on every line. Blank lines are ignored.
/// Throws ParseError (with line number) or SchemaError.
CalibrationSet read_jsonl(std::istream& in);
CalibrationSet read_jsonl_file(const std::string& path);
void write_jsonl(std::ostream& out, const CalibrationSet& data);

}  // namespace gmskip
