#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gmskip/skip_core.hpp"

namespace gmskip {

using Label = std::string;
using LabelSet = std::vector<Label>;    // treated as a set after normalization

struct Caption {
    std::vector<std::string> tokens;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }
    friend bool operator==(const Caption&, const Caption&) = default;
};

using ReferenceSet = std::vector<Caption>;

/// Case-folds and trims surrounding whitespace.
std::string normalize_label(std::string_view label);

/// Lowercases, strips the characters .,!?;:" and splits on whitespace.
Caption tokenize(std::string_view text);
/// Re-tokenizes every element of an already split caption with the same rule.
Caption normalize_caption(const Caption& tokens);

MetricScore top1_accuracy(const std::vector<Label>& predictions, const std::vector<Label>& golds);
MetricScore set_precision(const std::vector<LabelSet>& predictions, const std::vector<LabelSet>& golds);
MetricScore cider(const std::vector<Caption>& candidates, const std::vector<ReferenceSet>& refs);

/// CIDEr with the reference side (document frequencies and reference TF-IDF
/// vectors) precomputed once, so a fixed calibration corpus can be scored
/// against many candidate sets.
///
/// Per n-gram order n in 1..4 and example i with m references:
///   g(x)[w] = tf(w, x) * idf(w),  tf = count / (number of order-n n-grams in x)
///   idf(w)  = ln((1 + |I|) / (1 + df(w))) + 1
///   CIDEr_n = (1/m) sum_j cos(g(c), g(s_j))   (cosine with a zero vector is 0)
///   score_i = 10 * (1/4) sum_n CIDEr_n
class CiderScorer {
public:
    static constexpr int kMaxOrder = 4;

    explicit CiderScorer(const std::vector<ReferenceSet>& refs);

    std::size_t size() const noexcept { return refs_.size(); }
    double idf(const std::string& ngram) const;

    std::vector<double> score_each(const std::vector<Caption>& candidates) const;
    MetricScore score(const std::vector<Caption>& candidates) const;

private:
    using Vec = std::map<std::string, double>;
    struct Weighted {
        Vec vec;
        double norm = 0.0;
    };

    std::array<Weighted, kMaxOrder> weigh(const Caption& tokens) const;

    std::size_t corpus_size_ = 0;
    std::map<std::string, int> doc_freq_;
    std::vector<std::vector<std::array<Weighted, kMaxOrder>>> refs_;
};

/// Gold annotation kind a metric consumes.
enum class GoldKind { label, label_set, references };

std::string_view to_string(GoldKind kind);

using Outputs = std::variant<std::vector<Label>, std::vector<LabelSet>, std::vector<Caption>>;
using Golds = std::variant<std::vector<Label>, std::vector<LabelSet>, std::vector<ReferenceSet>>;

struct Metric {
    std::string name;
    GoldKind kind;
    std::function<MetricScore(const Outputs&, const Golds&)> fn;

    MetricScore operator()(const Outputs& outputs, const Golds& golds) const { return fn(outputs, golds); }
};

class MetricRegistry {
public:
    /// Registry preloaded with "top1", "set_precision" and "cider".
    static MetricRegistry& builtin();

    void add(Metric metric);
    /// Case-insensitive; throws UnknownMetric listing the available names.
    const Metric& lookup(std::string_view name) const;
    std::vector<std::string> names() const;

private:
    std::map<std::string, Metric> metrics_;
};

}  // namespace gmskip
