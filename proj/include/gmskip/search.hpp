#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gmskip/error.hpp"
#include "gmskip/evaluator.hpp"
#include "gmskip/skip_core.hpp"

namespace gmskip {

struct SearchParams {
    int max_remove = 0;          // K
    double lambda = 1.0;         // floor as a fraction of the full-model score
    double tie_tolerance = 0.0;  // deltas within this of the minimum count as tied
    int jobs = 1;                // concurrent candidate evaluations per iteration
};

/// Search stopped by an evaluator failure. code() is the evaluator's error code;
/// partial() holds everything decided before the failure.
class SearchAborted : public Error {
public:
    SearchAborted(ErrorCode code, const std::string& message, SkipConfig partial)
        : Error(code, message), partial_(std::move(partial)) {}

    const SkipConfig& partial() const noexcept { return partial_; }

private:
    SkipConfig partial_;
};

/// M(S) - M(S \ {b}). Throws BlockNotRetained.
double delta(Evaluator& evaluator, const BlockSet& current, BlockIndex b);

/// Index with the smallest delta; among all deltas within `tie_tolerance` of
/// the minimum the largest index wins. Throws EmptyCandidates.
BlockIndex select_block(const std::map<BlockIndex, double>& deltas, double tie_tolerance = 0.0);

/// Re-derives each record's choice from its stored deltas.
bool verify_trace(const SkipConfig& config, double tie_tolerance = 0.0);

/// Greedy metric-guided removal from the full set.
///
/// Each iteration scores S \ {b} for every retained b, picks b* by
/// select_block, and accepts it iff M(S \ {b*}) >= lambda * M(full).
/// The first rejection ends the search; at most max_remove blocks go.
/// Deltas are taken against the current set while the floor is always
/// relative to the full model.
SkipConfig greedy_search(Evaluator& evaluator, const SearchParams& params, std::string model_id = {});

struct OracleEntry {
    BlockSet retained;
    double score;
};

/// Best retained set for every cardinality 0..L over all 2^L subsets. Ties go
/// to the lexicographically largest ascending skipped list. Throws TooManyBlocks.
std::map<int, OracleEntry> brute_force_oracle(Evaluator& evaluator, int max_blocks_for_exhaustive = 12);

struct BaselineStrategy {
    enum class Kind { fixed_interval, forward, reverse, random_uneven };

    Kind kind = Kind::fixed_interval;
    int param = 2;  // interval n, or block count k
    std::uint64_t seed = 0;

    /// "fixed-interval:4", "forward:8", "reverse:8", "random:8,seed=7".
    static BaselineStrategy parse(std::string_view text);
    std::string to_string() const;

    /// Skipped indices for an L-block model. Throws InvalidStrategy.
    std::vector<BlockIndex> skipped(int total_blocks) const;
};

/// Scores the strategy's fixed skip set; no feedback and no floor, so the
/// returned config carries lambda = 0 and max_remove = len(skipped).
SkipConfig baseline_search(Evaluator& evaluator, const BaselineStrategy& strategy, std::string model_id = {});

enum class DeletionOrder { forward, reverse };

DeletionOrder parse_deletion_order(std::string_view text);
std::string_view to_string(DeletionOrder order);

struct CurvePoint {
    int k;
    double score;
};

/// Scores forward(k) or reverse(k) removal for k = 0..L.
std::vector<CurvePoint> deletion_curve(Evaluator& evaluator, DeletionOrder order);

/// "iteration,block,delta" rows.
void write_trace_deltas_csv(std::ostream& out, const SkipConfig& config);
/// "iteration,chosen,score_after,accepted" rows.
void write_trace_steps_csv(std::ostream& out, const SkipConfig& config);
/// "order,k,sparsity_pct,score" rows.
void write_curve_csv(std::ostream& out, DeletionOrder order, int total_blocks, const std::vector<CurvePoint>& curve,
                     bool header = true);

}  // namespace gmskip
