#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gmskip {

using BlockIndex = int;

/// Canonical set of retained (executed) block indices of an L-block model.
/// Indices are 0-based and kept strictly ascending.
class BlockSet {
public:
    /// Throws EmptyModel, DuplicateIndex or IndexOutOfRange.
    BlockSet(int total_blocks, std::vector<BlockIndex> retained);

    static BlockSet full(int total_blocks);
    static BlockSet from_skipped(int total_blocks, std::span<const BlockIndex> skipped);

    int total_blocks() const noexcept { return total_blocks_; }
    const std::vector<BlockIndex>& retained() const noexcept { return retained_; }
    std::vector<BlockIndex> skipped() const;
    std::size_t size() const noexcept { return retained_.size(); }
    bool empty() const noexcept { return retained_.empty(); }
    bool contains(BlockIndex b) const;

    /// Copy with `b` removed; throws BlockNotRetained.
    BlockSet without(BlockIndex b) const;

    /// Sorted indices joined by commas ("" for the empty set).
    std::string key() const;

    friend bool operator==(const BlockSet&, const BlockSet&) = default;

private:
    int total_blocks_;
    std::vector<BlockIndex> retained_;
};

struct MetricScore {
    double value = 0.0;
    std::string metric;
    int n_examples = 1;

    friend bool operator==(const MetricScore&, const MetricScore&) = default;
};

struct IterationRecord {
    int iteration = 1;
    std::map<BlockIndex, double> candidate_deltas;
    BlockIndex chosen = 0;
    double score_after = 0.0;
    bool accepted = false;

    friend bool operator==(const IterationRecord&, const IterationRecord&) = default;
};

struct SkipConfig {
    std::string model_id;
    int total_blocks = 0;
    std::vector<BlockIndex> skipped;  // removal order
    double lambda = 1.0;
    int max_remove = 0;
    std::string metric;
    double full_score = 0.0;
    double final_score = 0.0;
    std::vector<IterationRecord> trace;

    BlockSet retained() const { return BlockSet::from_skipped(total_blocks, skipped); }

    friend bool operator==(const SkipConfig&, const SkipConfig&) = default;
};

/// len(skipped) / total_blocks.
double sparsity(const SkipConfig& config);
/// 100 * skipped / total, computed without an intermediate ratio.
double sparsity_pct(std::size_t skipped, int total_blocks);

/// Fixed-point rendering with ties rounded away from zero ("34.375" -> "34.38").
std::string format_fixed(double value, int decimals);
/// Shortest decimal that parses back to the same double.
std::string format_real(double value);

void validate_block_indices(int total_blocks, std::span<const BlockIndex> indices);
/// Checks every SkipConfig invariant; throws gmskip::Error on the first violation.
void validate(const SkipConfig& config);

/// JSON text with fixed key order and shortest round-trip reals.
std::string serialize(const SkipConfig& config);
/// Throws ParseError (with line/column), SchemaError, or a validation error.
SkipConfig deserialize(const std::string& text);

}  // namespace gmskip
