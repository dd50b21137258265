#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmskip/calibration.hpp"
#include "gmskip/metrics.hpp"
#include "gmskip/skip_core.hpp"

namespace gmskip {

struct ToyModelSpec {
    std::uint64_t seed = 0;
    int n_blocks = 8;
    int dim = 32;
    int n_heads = 4;
    int vocab = 64;
    int max_len = 32;
    std::vector<BlockIndex> redundant_blocks;

    /// Throws InvalidSpec.
    void validate() const;

    /// "toy:seed=42,L=8,d=32,heads=4,vocab=64,max_len=32,redundant=5;6".
    std::string to_string() const;
    /// Accepts any subset of the keys above after a "toy:" prefix; missing
    /// keys keep their defaults. Throws InvalidSpec.
    static ToyModelSpec parse(std::string_view text);
};

/// Row-major dense matrix.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    const double* row(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }
    double* row(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct ForwardOutput {
    Matrix logits;        // seq_len x vocab
    Matrix hidden_final;  // seq_len x dim, after the final norm
};

/// Multiply-accumulate tally for one or more forward passes.
struct OpCounter {
    std::uint64_t macs = 0;
};

/// Token id to caption/label string: id -> "t<id>".
std::string token_label(TokenId id);

/// Indices of the k largest scores in rank order; equal scores keep index order.
/// Throws KOutOfRange.
std::vector<int> rank_top_k(std::span<const double> scores, int k);

/// Class vocabulary as the token ids whose logits are compared.
using ClassVocab = std::vector<TokenId>;

/// Knobs shared by calibration generation and the toy evaluator.
struct TaskOptions {
    int n_classes = 10;        // classes are token ids 1..n_classes
    int set_k = 3;             // predict_set size for the multi task
    int caption_max_new = 8;   // generate_greedy budget for the caption task
    int min_len = 4;           // random input length range, inclusive
    int max_input_len = 12;

    ClassVocab class_vocab() const;
};

/// Decoder-only pre-norm transformer with deterministic weights and whole-block
/// skipping. Weight draw order (each matrix row-major, every entry
/// next_signed_unit() / sqrt(dim)):
///   token embedding [vocab x dim], position embedding [max_len x dim],
///   per block in index order: Wq, Wk, Wv, Wo [dim x dim], W1 [dim x 4dim], W2 [4dim x dim],
///   unembedding [dim x vocab].
/// Norm gains are 1 and all biases 0. Redundant blocks draw their weights like any
/// other block, then have Wo and W2 set to exactly zero.
class ToyModel {
public:
    struct Block {
        Matrix wq, wk, wv, wo, w1, w2;
    };

    explicit ToyModel(ToyModelSpec spec);

    const ToyModelSpec& spec() const noexcept { return spec_; }
    int n_blocks() const noexcept { return spec_.n_blocks; }
    const Block& block(BlockIndex b) const { return blocks_.at(static_cast<std::size_t>(b)); }
    const Matrix& token_embedding() const noexcept { return tok_emb_; }
    const Matrix& unembedding() const noexcept { return unembed_; }

    /// Throws BlockCountMismatch, SequenceTooLong, InvalidArgument.
    ForwardOutput forward(const TokenSequence& input, const BlockSet& retained, OpCounter* ops = nullptr) const;

    /// Residual-branch outputs of one block for an input stream x (seq_len x dim).
    Matrix attention_branch(BlockIndex b, const Matrix& x, OpCounter* ops = nullptr) const;
    Matrix mlp_branch(BlockIndex b, const Matrix& x, OpCounter* ops = nullptr) const;

    /// Argmax of class logits at the final position; ties go to the lowest class index.
    Label classify(const TokenSequence& input, const BlockSet& retained, const ClassVocab& classes,
                   OpCounter* ops = nullptr) const;
    /// Top-k classes in rank order (ties by class index). Throws KOutOfRange.
    LabelSet predict_set(const TokenSequence& input, const BlockSet& retained, const ClassVocab& classes, int k,
                         OpCounter* ops = nullptr) const;
    /// Greedy argmax decoding; stops after max_new tokens or at end token 0.
    Caption generate_greedy(const TokenSequence& prompt, const BlockSet& retained, int max_new,
                            OpCounter* ops = nullptr) const;

    /// MACs of one forward over seq_len tokens with n_retained blocks:
    /// n_retained * (12 T d^2 + d T (T + 1)) + T d vocab.
    static std::uint64_t forward_macs(const ToyModelSpec& spec, int seq_len, int n_retained);

private:
    void check_input(const TokenSequence& input) const;
    Matrix embed(const TokenSequence& input) const;

    ToyModelSpec spec_;
    Matrix tok_emb_;
    Matrix pos_emb_;
    std::vector<Block> blocks_;
    Matrix unembed_;
};

enum class Task { single, multi, caption };

/// "single" | "multi" | "caption"; throws InvalidTask.
Task parse_task(std::string_view name);
std::string_view to_string(Task task);
GoldKind gold_kind(Task task);

/// Random inputs labeled by the full model itself: classify for single,
/// predict_set(k = set_k) for multi, generate_greedy for caption (one reference).
CalibrationSet gen_calibration(const ToyModel& model, Task task, int n, std::uint64_t seed,
                               const TaskOptions& options = {});

}  // namespace gmskip
