#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "figphm/corpus.hpp"
#include "figphm/embeddings.hpp"
#include "figphm/figurative.hpp"
#include "figphm/neuralnet.hpp"

namespace figphm {

// How the dropout tuple maps onto the convolution stages.
enum class DropoutLayout {
  positional,  // parallel branches, one per kernel width, concatenated
  stacked,     // stages applied in sequence, last one feeds the head
};

DropoutLayout parse_dropout_layout(std::string_view s);
std::string_view to_string(DropoutLayout layout);

struct CnnConfig {
  std::size_t max_sequence_length = kDefaultMaxSequenceLength;
  std::size_t filters = 100;
  std::vector<std::size_t> kernel_widths{3, 4, 5};
  std::vector<double> dropout_rates{0.2, 0.3, 0.5};
  std::size_t pool = 2;
  DropoutLayout layout = DropoutLayout::positional;
  bool trainable_embedding = true;
  double init_range = 0.05;
  // Figurative-feature branch (FeatAug only).
  std::size_t aux_kernel_width = 2;
  std::size_t aux_filters = 100;
  std::size_t aux_pool = 2;
};

CnnConfig phmd_config();
// Text-branch dropout (0.3, 0.1, 0.3).
CnnConfig feataug_config();

enum class ModelKind { phmd, feataug };

std::string_view to_string(ModelKind kind);

struct TrainingExample {
  PaddedSequence sequence;
  PhmLabel label = PhmLabel::non_phm;
  // Figurative feature vector; required for FeatAug, ignored for PHMD.
  std::vector<double> figurative_features;
};

struct ParamBlock {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Sentence CNN over a trainable embedding layer: convolution stages with
// ReLU, max pooling and dropout, an optional convolutional branch over the
// figurative feature vector, and a single sigmoid output unit. All
// parameters live in one flat vector in declaration order.
class TextCnn {
 public:
  TextCnn(ModelKind kind, const EmbeddingTable& table, CnnConfig config, std::size_t aux_length,
          std::uint64_t seed);

  ModelKind kind() const { return kind_; }
  const CnnConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  std::size_t embedding_dim() const { return dim_; }
  std::size_t aux_length() const { return aux_length_; }
  std::size_t head_width() const { return head_left_ + head_right_; }
  std::size_t head_left_width() const { return head_left_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<const double> grads() const { return grads_; }
  std::size_t parameter_count() const { return params_.size(); }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  // Throws std::out_of_range for unknown names.
  std::span<double> block(std::string_view name);
  std::span<const double> block(std::string_view name) const;
  // Parameters updated by the optimizer (everything when the embedding is
  // trainable, otherwise everything after it).
  std::size_t trainable_offset() const { return trainable_offset_; }

  // Eval-mode forward pass. Counts as one evaluation.
  double probability(const PaddedSequence& seq, std::span<const double> aux = {}) const;
  std::uint64_t evaluation_count() const { return evaluations_.count.load(); }

  void zero_grad();
  // Forward + backward for one example; gradients are scaled by `scale` and
  // added to grads(). Returns the unscaled loss.
  double accumulate_gradient(const TrainingExample& example, nn::Mode mode, std::uint64_t dropout_seed,
                             double scale = 1.0);
  // Eval-mode loss at the current parameters.
  double loss(const TrainingExample& example) const;
  // False if a ReLU pre-activation lies within `margin` of zero, a pooling
  // window has a positive near-tie, or the output is at the probability clamp.
  bool is_safe_point(const TrainingExample& example, double margin) const;

  nlohmann::json manifest() const;
  static TextCnn from_checkpoint(const nn::Checkpoint& checkpoint);

 private:
  // Copyable wrapper so models keep value semantics.
  struct EvalCounter {
    std::atomic<std::uint64_t> count{0};
    EvalCounter() = default;
    EvalCounter(const EvalCounter& o) : count(o.count.load()) {}
    EvalCounter& operator=(const EvalCounter& o) {
      count = o.count.load();
      return *this;
    }
  };
  struct Stage {
    std::size_t kernel_block;
    std::size_t bias_block;
    std::size_t width;
    std::size_t in_channels;
    std::size_t filters;
    std::size_t pool;
    double dropout;
  };
  struct StageCache {
    nn::Tensor input;
    nn::Tensor pre;
    nn::PoolResult pooled;
    nn::DropoutResult dropped;
  };
  struct Cache {
    std::vector<StageCache> stages;
    std::optional<StageCache> aux;
    std::vector<double> head_input;
    double logit = 0;
    double probability = 0;
  };

  std::size_t add_block(std::string name, std::vector<std::size_t> shape);
  nn::Tensor tensor(std::size_t block) const;
  nn::Tensor embed(const PaddedSequence& seq) const;
  void check_example(const PaddedSequence& seq, std::span<const double> aux) const;
  StageCache run_stage(const Stage& stage, nn::Tensor input, nn::Mode mode, std::uint64_t seed) const;
  Cache forward(const PaddedSequence& seq, std::span<const double> aux, nn::Mode mode,
                std::uint64_t seed) const;
  nn::Tensor backward_stage(const Stage& stage, const StageCache& cache, std::span<const double> grad_out,
                            bool need_input_grad);

  ModelKind kind_;
  CnnConfig config_;
  Vocabulary vocab_;
  std::size_t dim_;
  std::size_t aux_length_;
  std::uint64_t seed_;
  std::vector<ParamBlock> blocks_;
  std::vector<double> params_;
  std::vector<double> grads_;
  std::vector<Stage> stages_;
  std::optional<Stage> aux_stage_;
  std::size_t embedding_block_ = 0;
  std::size_t head_weight_block_ = 0;
  std::size_t head_bias_block_ = 0;
  std::size_t head_left_ = 0;
  std::size_t head_right_ = 0;
  std::size_t trainable_offset_ = 0;
  mutable EvalCounter evaluations_;
};

// Throws std::invalid_argument when the sequence length cannot fit the
// largest kernel followed by one pooling window.
TextCnn build_phmd(const EmbeddingTable& table, const CnnConfig& config, std::uint64_t seed);
TextCnn build_feataug(const EmbeddingTable& table, const CnnConfig& config, std::size_t feature_length,
                      std::uint64_t seed);

struct TrainOptions {
  std::size_t epochs = 35;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct TrainResult {
  // Mean training loss per epoch.
  std::vector<double> epoch_loss;
};

// Mini-batch Adam on mean binary cross-entropy. Examples are put into a
// canonical order before the seeded per-epoch shuffle, so the result does not
// depend on how the corpus is stored.
TrainResult train(TextCnn& model, std::span<const TrainingExample> corpus, const TrainOptions& options);

double training_accuracy(const TextCnn& model, std::span<const TrainingExample> corpus);

struct Prediction {
  std::string doc_id;
  double probability = 0;
  PhmLabel label = PhmLabel::non_phm;
  std::optional<UsageLabel> figurative_label;
};

inline constexpr double kDecisionThreshold = 0.5;

PhmLabel label_for(double probability);

Prediction predict_phmd(const TextCnn& model, std::string_view doc_id, const PaddedSequence& seq);

// A figurative verdict short-circuits to NonPHM without evaluating the model.
Prediction pipeline_predict(const FigurativeVerdict& verdict, const TextCnn& model, std::string_view doc_id,
                            const PaddedSequence& seq);

Prediction feataug_predict(const TextCnn& model, std::string_view doc_id, const PaddedSequence& seq,
                           const FigurativeVerdict& verdict, bool include_raw_score = true);

// [figurative bit, linguistic features..., (raw literal score)].
std::vector<double> figurative_feature_vector(const FigurativeVerdict& verdict, bool include_raw_score = true);
std::size_t figurative_feature_length(bool include_raw_score = true);

// doc_id TAB probability TAB label TAB figurative_label ("-" when absent).
void write_predictions(std::ostream& out, std::span<const Prediction> predictions);

}  // namespace figphm
