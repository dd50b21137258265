#include "gmskip/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "gmskip/error.hpp"

namespace gmskip {

std::string normalize_label(std::string_view label) {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    std::size_t b = 0, e = label.size();
    while (b < e && is_space(label[b])) ++b;
    while (e > b && is_space(label[e - 1])) --e;
    std::string out(label.substr(b, e - b));
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

Caption tokenize(std::string_view text) {
    static constexpr std::string_view kStrip = ".,!?;:\"";
    Caption out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.tokens.push_back(std::move(cur));
            cur.clear();
        } else if (kStrip.find(c) == std::string_view::npos) {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    if (!cur.empty()) out.tokens.push_back(std::move(cur));
    return out;
}

Caption normalize_caption(const Caption& tokens) {
    Caption out;
    for (const std::string& t : tokens.tokens) {
        Caption part = tokenize(t);
        out.tokens.insert(out.tokens.end(), part.tokens.begin(), part.tokens.end());
    }
    return out;
}

MetricScore top1_accuracy(const std::vector<Label>& predictions, const std::vector<Label>& golds) {
    if (predictions.size() != golds.size())
        fail(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " predictions vs " +
                                            std::to_string(golds.size()) + " golds");
    if (golds.empty()) fail(ErrorCode::EmptyDataset, "top1 needs at least one example");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < golds.size(); ++i)
        if (normalize_label(predictions[i]) == normalize_label(golds[i])) ++hits;
    return {static_cast<double>(hits) / static_cast<double>(golds.size()), "top1", static_cast<int>(golds.size())};
}

namespace {

std::set<std::string> normalized_set(const LabelSet& labels) {
    std::set<std::string> out;
    for (const Label& l : labels) out.insert(normalize_label(l));
    return out;
}

}  // namespace

MetricScore set_precision(const std::vector<LabelSet>& predictions, const std::vector<LabelSet>& golds) {
    if (predictions.size() != golds.size())
        fail(ErrorCode::LengthMismatch, std::to_string(predictions.size()) + " predictions vs " +
                                            std::to_string(golds.size()) + " golds");
    if (golds.empty()) fail(ErrorCode::EmptyDataset, "set_precision needs at least one example");
    double total = 0.0;
    for (std::size_t i = 0; i < golds.size(); ++i) {
        const std::set<std::string> gold = normalized_set(golds[i]);
        if (gold.empty()) fail(ErrorCode::EmptyGoldSet, "gold set " + std::to_string(i) + " is empty");
        const std::set<std::string> pred = normalized_set(predictions[i]);
        std::size_t common = 0;
        for (const std::string& g : gold) common += pred.count(g);
        total += static_cast<double>(common) / static_cast<double>(gold.size());
    }
    return {total / static_cast<double>(golds.size()), "set_precision", static_cast<int>(golds.size())};
}

// ---------------------------------------------------------------------------
// CIDEr

namespace {

using Counts = std::map<std::string, int>;

Counts ngram_counts(const Caption& caption, int order) {
    const std::vector<std::string>& tokens = caption.tokens;
    Counts out;
    if (tokens.size() < static_cast<std::size_t>(order)) return out;
    for (std::size_t i = 0; i + static_cast<std::size_t>(order) <= tokens.size(); ++i) {
        std::string g = tokens[i];
        for (int k = 1; k < order; ++k) {
            g += ' ';
            g += tokens[i + static_cast<std::size_t>(k)];
        }
        ++out[g];
    }
    return out;
}

}  // namespace

CiderScorer::CiderScorer(const std::vector<ReferenceSet>& refs) {
    if (refs.empty()) fail(ErrorCode::EmptyCorpus, "cider needs at least one example");
    corpus_size_ = refs.size();
    std::vector<std::vector<Caption>> normalized;
    normalized.reserve(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (refs[i].empty()) fail(ErrorCode::EmptyReferenceSet, "example " + std::to_string(i) + " has no references");
        std::vector<Caption> norm;
        for (const Caption& r : refs[i]) norm.push_back(normalize_caption(r));
        std::set<std::string> seen;
        for (const Caption& r : norm)
            for (int n = 1; n <= kMaxOrder; ++n)
                for (const auto& [g, cnt] : ngram_counts(r, n)) seen.insert(g);
        for (const std::string& g : seen) ++doc_freq_[g];
        normalized.push_back(std::move(norm));
    }
    refs_.reserve(normalized.size());
    for (const auto& example : normalized) {
        std::vector<std::array<Weighted, kMaxOrder>> weighted;
        for (const Caption& r : example) weighted.push_back(weigh(r));
        refs_.push_back(std::move(weighted));
    }
}

double CiderScorer::idf(const std::string& ngram) const {
    auto it = doc_freq_.find(ngram);
    const double df = it == doc_freq_.end() ? 0.0 : static_cast<double>(it->second);
    const double corpus = static_cast<double>(corpus_size_);
    return std::log((1.0 + corpus) / (1.0 + df)) + 1.0;
}

std::array<CiderScorer::Weighted, CiderScorer::kMaxOrder> CiderScorer::weigh(const Caption& tokens) const {
    std::array<Weighted, kMaxOrder> out;
    for (int n = 1; n <= kMaxOrder; ++n) {
        Counts counts = ngram_counts(tokens, n);
        if (counts.empty()) continue;
        const double total = static_cast<double>(tokens.size() - static_cast<std::size_t>(n) + 1);
        Weighted& w = out[static_cast<std::size_t>(n - 1)];
        double sq = 0.0;
        for (const auto& [g, cnt] : counts) {
            const double v = (static_cast<double>(cnt) / total) * idf(g);
            w.vec.emplace(g, v);
            sq += v * v;
        }
        w.norm = std::sqrt(sq);
    }
    return out;
}

std::vector<double> CiderScorer::score_each(const std::vector<Caption>& candidates) const {
    if (candidates.size() != refs_.size())
        fail(ErrorCode::LengthMismatch, std::to_string(candidates.size()) + " candidates vs " +
                                            std::to_string(refs_.size()) + " reference sets");
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto cand = weigh(normalize_caption(candidates[i]));
        double sum_orders = 0.0;
        for (std::size_t n = 0; n < kMaxOrder; ++n) {
            double sum_refs = 0.0;
            for (const auto& ref : refs_[i]) {
                const Weighted& a = cand[n];
                const Weighted& b = ref[n];
                if (a.norm == 0.0 || b.norm == 0.0) continue;
                double dot = 0.0;
                for (const auto& [g, v] : a.vec) {
                    auto it = b.vec.find(g);
                    if (it != b.vec.end()) dot += v * it->second;
                }
                sum_refs += dot / (a.norm * b.norm);
            }
            sum_orders += sum_refs / static_cast<double>(refs_[i].size());
        }
        scores.push_back(10.0 * sum_orders / kMaxOrder);
    }
    return scores;
}

MetricScore CiderScorer::score(const std::vector<Caption>& candidates) const {
    const std::vector<double> each = score_each(candidates);
    double total = 0.0;
    for (double s : each) total += s;
    return {total / static_cast<double>(each.size()), "cider", static_cast<int>(each.size())};
}

MetricScore cider(const std::vector<Caption>& candidates, const std::vector<ReferenceSet>& refs) {
    if (candidates.size() != refs.size())
        fail(ErrorCode::LengthMismatch, std::to_string(candidates.size()) + " candidates vs " +
                                            std::to_string(refs.size()) + " reference sets");
    return CiderScorer(refs).score(candidates);
}

// ---------------------------------------------------------------------------
// registry

std::string_view to_string(GoldKind kind) {
    switch (kind) {
        case GoldKind::label: return "label";
        case GoldKind::label_set: return "labels";
        case GoldKind::references: return "references";
    }
    return "unknown";
}

namespace {

template <class Out, class Gold, class F>
Metric make_metric(std::string name, GoldKind kind, F f) {
    return Metric{name, kind, [name, f](const Outputs& outputs, const Golds& golds) {
                      const Out* o = std::get_if<Out>(&outputs);
                      const Gold* g = std::get_if<Gold>(&golds);
                      if (!o || !g)
                          fail(ErrorCode::TaskMetricMismatch, "metric " + name + " got mismatched outputs/golds");
                      return f(*o, *g);
                  }};
}

}  // namespace

MetricRegistry& MetricRegistry::builtin() {
    static MetricRegistry reg = [] {
        MetricRegistry r;
        r.add(make_metric<std::vector<Label>, std::vector<Label>>("top1", GoldKind::label, top1_accuracy));
        r.add(make_metric<std::vector<LabelSet>, std::vector<LabelSet>>("set_precision", GoldKind::label_set,
                                                                        set_precision));
        r.add(make_metric<std::vector<Caption>, std::vector<ReferenceSet>>("cider", GoldKind::references, cider));
        return r;
    }();
    return reg;
}

void MetricRegistry::add(Metric metric) {
    std::string key = normalize_label(metric.name);
    metric.name = key;
    metrics_[key] = std::move(metric);
}

const Metric& MetricRegistry::lookup(std::string_view name) const {
    auto it = metrics_.find(normalize_label(name));
    if (it == metrics_.end()) {
        std::string avail;
        for (const std::string& n : names()) avail += (avail.empty() ? "" : ", ") + n;
        fail(ErrorCode::UnknownMetric, "unknown metric \"" + std::string(name) + "\"; available: " + avail);
    }
    return it->second;
}

std::vector<std::string> MetricRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : metrics_) out.push_back(k);
    return out;
}

}  // namespace gmskip
