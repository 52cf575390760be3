#include "figphm/phm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "figphm/error.hpp"
#include "figphm/rng.hpp"

namespace figphm {

using nn::Mode;
using nn::Tensor;

DropoutLayout parse_dropout_layout(std::string_view s) {
  if (s == "positional") return DropoutLayout::positional;
  if (s == "stacked") return DropoutLayout::stacked;
  throw ConfigError("unknown dropout layout '" + std::string(s) + "'");
}

std::string_view to_string(DropoutLayout layout) {
  return layout == DropoutLayout::positional ? "positional" : "stacked";
}

std::string_view to_string(ModelKind kind) { return kind == ModelKind::phmd ? "phmd" : "feataug"; }

CnnConfig phmd_config() { return CnnConfig{}; }

CnnConfig feataug_config() {
  CnnConfig c;
  c.dropout_rates = {0.3, 0.1, 0.3};
  return c;
}

namespace {

std::size_t pooled_length(std::size_t length, std::size_t width, std::size_t pool, std::string_view what) {
  if (length < width || length - width + 1 < pool) {
    throw std::invalid_argument(std::string(what) + " of length " + std::to_string(length) +
                                " cannot fit kernel width " + std::to_string(width) + " followed by pool " +
                                std::to_string(pool));
  }
  return (length - width + 1) / pool;
}

}  // namespace

TextCnn::TextCnn(ModelKind kind, const EmbeddingTable& table, CnnConfig config, std::size_t aux_length,
                 std::uint64_t seed)
    : kind_(kind),
      config_(std::move(config)),
      vocab_(table.vocab()),
      dim_(table.dim()),
      aux_length_(kind == ModelKind::feataug ? aux_length : 0),
      seed_(seed) {
  const auto& c = config_;
  if (c.kernel_widths.empty()) throw std::invalid_argument("at least one kernel width is required");
  if (c.dropout_rates.size() != c.kernel_widths.size()) {
    throw std::invalid_argument("one dropout rate per kernel width is required");
  }
  if (c.filters == 0 || c.pool == 0 || c.aux_filters == 0 || c.aux_pool == 0) {
    throw std::invalid_argument("filter counts and pool sizes must be positive");
  }
  for (double r : c.dropout_rates) {
    if (!(r >= 0.0 && r < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  }
  if (!(c.init_range > 0)) throw std::invalid_argument("init_range must be positive");

  embedding_block_ = add_block("embedding", {vocab_.size(), dim_});
  std::size_t length = c.max_sequence_length;
  std::size_t channels = dim_;
  for (std::size_t i = 0; i < c.kernel_widths.size(); ++i) {
    const std::size_t w = c.kernel_widths[i];
    const std::size_t in_len = c.layout == DropoutLayout::positional ? c.max_sequence_length : length;
    const std::size_t out_len = pooled_length(in_len, w, c.pool, "sequence");
    const std::string prefix = "conv" + std::to_string(i);
    Stage s{};
    s.kernel_block = add_block(prefix + ".kernel", {c.filters, w, channels});
    s.bias_block = add_block(prefix + ".bias", {c.filters});
    s.width = w;
    s.in_channels = channels;
    s.filters = c.filters;
    s.pool = c.pool;
    s.dropout = c.dropout_rates[i];
    stages_.push_back(s);
    if (c.layout == DropoutLayout::positional) {
      head_left_ += out_len * c.filters;
    } else {
      length = out_len;
      channels = c.filters;
      head_left_ = out_len * c.filters;
    }
  }
  if (kind_ == ModelKind::feataug) {
    head_right_ = pooled_length(aux_length_, c.aux_kernel_width, c.aux_pool, "figurative feature vector") *
                  c.aux_filters;
  }
  head_weight_block_ = add_block("head.weight", {1, head_left_ + head_right_});
  head_bias_block_ = add_block("head.bias", {1});
  if (kind_ == ModelKind::feataug) {
    Stage s{};
    s.kernel_block = add_block("aux.kernel", {c.aux_filters, c.aux_kernel_width, 1});
    s.bias_block = add_block("aux.bias", {c.aux_filters});
    s.width = c.aux_kernel_width;
    s.in_channels = 1;
    s.filters = c.aux_filters;
    s.pool = c.aux_pool;
    s.dropout = 0.0;
    aux_stage_ = s;
  }

  params_.assign(blocks_.empty() ? 0 : blocks_.back().offset + blocks_.back().size, 0.0);
  grads_.assign(params_.size(), 0.0);
  std::copy(table.values().begin(), table.values().end(), params_.begin());
  std::fill_n(params_.begin(), dim_, 0.0);  // PAD row

  Rng rng(seed);
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    if (b == embedding_block_ || blocks_[b].name.ends_with(".bias")) continue;
    const auto& blk = blocks_[b];
    for (std::size_t i = 0; i < blk.size; ++i) {
      params_[blk.offset + i] = rng.uniform(-c.init_range, c.init_range);
    }
  }
  trainable_offset_ = c.trainable_embedding ? 0 : blocks_[embedding_block_].size;
}

std::size_t TextCnn::add_block(std::string name, std::vector<std::size_t> shape) {
  ParamBlock b;
  b.name = std::move(name);
  b.size = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  b.shape = std::move(shape);
  b.offset = blocks_.empty() ? 0 : blocks_.back().offset + blocks_.back().size;
  blocks_.push_back(std::move(b));
  return blocks_.size() - 1;
}

std::span<double> TextCnn::block(std::string_view name) {
  for (const auto& b : blocks_) {
    if (b.name == name) return std::span<double>(params_).subspan(b.offset, b.size);
  }
  throw std::out_of_range("no parameter block named " + std::string(name));
}

std::span<const double> TextCnn::block(std::string_view name) const {
  return const_cast<TextCnn*>(this)->block(name);
}

Tensor TextCnn::tensor(std::size_t block) const {
  const auto& b = blocks_[block];
  return Tensor(b.shape, std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                             params_.begin() + static_cast<std::ptrdiff_t>(b.offset + b.size)));
}

void TextCnn::check_example(const PaddedSequence& seq, std::span<const double> aux) const {
  if (seq.token_ids.size() != config_.max_sequence_length) {
    throw std::invalid_argument("sequence length " + std::to_string(seq.token_ids.size()) +
                                " does not match max_sequence_length " +
                                std::to_string(config_.max_sequence_length));
  }
  for (std::size_t id : seq.token_ids) {
    if (id >= vocab_.size()) throw std::invalid_argument("token id outside the model vocabulary");
  }
  if (kind_ == ModelKind::feataug && aux.size() != aux_length_) {
    throw std::invalid_argument("figurative feature vector has length " + std::to_string(aux.size()) +
                                ", model expects " + std::to_string(aux_length_));
  }
}

Tensor TextCnn::embed(const PaddedSequence& seq) const {
  Tensor x({config_.max_sequence_length, dim_});
  const std::size_t base = blocks_[embedding_block_].offset;
  for (std::size_t t = 0; t < seq.token_ids.size(); ++t) {
    const auto src = params_.begin() + static_cast<std::ptrdiff_t>(base + seq.token_ids[t] * dim_);
    std::copy(src, src + static_cast<std::ptrdiff_t>(dim_), x.values().begin() + static_cast<std::ptrdiff_t>(t * dim_));
  }
  return x;
}

TextCnn::StageCache TextCnn::run_stage(const Stage& stage, Tensor input, Mode mode, std::uint64_t seed) const {
  StageCache c;
  c.input = std::move(input);
  c.pre = nn::conv1d(c.input, tensor(stage.kernel_block), tensor(stage.bias_block));
  c.pooled = nn::maxpool1d(nn::relu(c.pre), stage.pool);
  c.dropped = nn::dropout(c.pooled.output, stage.dropout, mode, seed);
  return c;
}

TextCnn::Cache TextCnn::forward(const PaddedSequence& seq, std::span<const double> aux, Mode mode,
                                std::uint64_t seed) const {
  check_example(seq, aux);
  Cache cache;
  Tensor x = embed(seq);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::uint64_t stage_seed = splitmix64(seed + i);
    if (config_.layout == DropoutLayout::positional) {
      cache.stages.push_back(run_stage(stages_[i], x, mode, stage_seed));
      const auto out = cache.stages.back().dropped.output.values();
      cache.head_input.insert(cache.head_input.end(), out.begin(), out.end());
    } else {
      Tensor in = i == 0 ? x : cache.stages.back().dropped.output;
      cache.stages.push_back(run_stage(stages_[i], std::move(in), mode, stage_seed));
    }
  }
  if (config_.layout == DropoutLayout::stacked) {
    const auto out = cache.stages.back().dropped.output.values();
    cache.head_input.assign(out.begin(), out.end());
  }
  if (aux_stage_) {
    Tensor in({aux_length_, 1}, std::vector<double>(aux.begin(), aux.end()));
    cache.aux = run_stage(*aux_stage_, std::move(in), mode, 0);
    const auto out = cache.aux->dropped.output.values();
    cache.head_input.insert(cache.head_input.end(), out.begin(), out.end());
  }
  const double* w = params_.data() + blocks_[head_weight_block_].offset;
  double z = 0;
  for (std::size_t j = 0; j < cache.head_input.size(); ++j) z += w[j] * cache.head_input[j];
  z += params_[blocks_[head_bias_block_].offset];
  cache.logit = z;
  cache.probability = nn::sigmoid(z);
  if (!std::isfinite(cache.probability)) throw std::runtime_error("non-finite model output");
  return cache;
}

Tensor TextCnn::backward_stage(const Stage& stage, const StageCache& cache, std::span<const double> grad_out,
                               bool need_input_grad) {
  Tensor g_drop(cache.dropped.output.shape(), std::vector<double>(grad_out.begin(), grad_out.end()));
  Tensor g_pool = nn::dropout_backward(g_drop, cache.dropped.mask);
  Tensor g_act = nn::maxpool1d_backward(g_pool, cache.pooled.argmax, cache.pre.shape());
  Tensor g_pre = nn::relu_backward(cache.pre, g_act);
  const auto& kb = blocks_[stage.kernel_block];
  const auto& bb = blocks_[stage.bias_block];
  Tensor g_kernel(kb.shape);
  Tensor g_bias(bb.shape);
  Tensor g_input;
  if (need_input_grad) g_input = Tensor(cache.input.shape());
  nn::conv1d_backward(cache.input, tensor(stage.kernel_block), g_pre, need_input_grad ? &g_input : nullptr,
                      g_kernel, g_bias);
  for (std::size_t i = 0; i < kb.size; ++i) grads_[kb.offset + i] += g_kernel[i];
  for (std::size_t i = 0; i < bb.size; ++i) grads_[bb.offset + i] += g_bias[i];
  return g_input;
}

void TextCnn::zero_grad() { std::fill(grads_.begin(), grads_.end(), 0.0); }

double TextCnn::accumulate_gradient(const TrainingExample& example, Mode mode, std::uint64_t dropout_seed,
                                    double scale) {
  const Cache cache = forward(example.sequence, example.figurative_features, mode, dropout_seed);
  const double y = example.label == PhmLabel::phm ? 1.0 : 0.0;
  const double loss = nn::bce_loss_logit(cache.logit, y);
  const double dz = (cache.probability - y) * scale;

  const auto& hw = blocks_[head_weight_block_];
  std::vector<double> dh(cache.head_input.size());
  for (std::size_t j = 0; j < dh.size(); ++j) {
    grads_[hw.offset + j] += dz * cache.head_input[j];
    dh[j] = dz * params_[hw.offset + j];
  }
  grads_[blocks_[head_bias_block_].offset] += dz;

  const std::span<const double> dh_all(dh);
  if (aux_stage_) backward_stage(*aux_stage_, *cache.aux, dh_all.subspan(head_left_, head_right_), false);

  const bool train_embedding = config_.trainable_embedding;
  Tensor g_x;
  if (config_.layout == DropoutLayout::positional) {
    if (train_embedding) g_x = Tensor({config_.max_sequence_length, dim_});
    std::size_t offset = 0;
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      const std::size_t len = cache.stages[i].dropped.output.size();
      Tensor g = backward_stage(stages_[i], cache.stages[i], dh_all.subspan(offset, len), train_embedding);
      offset += len;
      if (train_embedding) {
        for (std::size_t k = 0; k < g.size(); ++k) g_x[k] += g[k];
      }
    }
  } else {
    std::vector<double> g(dh.begin(), dh.begin() + static_cast<std::ptrdiff_t>(head_left_));
    for (std::size_t i = stages_.size(); i-- > 0;) {
      const bool need_input = i > 0 || train_embedding;
      Tensor gi = backward_stage(stages_[i], cache.stages[i], g, need_input);
      if (!need_input) break;
      if (i == 0) {
        g_x = std::move(gi);
      } else {
        const auto v = gi.values();
        g.assign(v.begin(), v.end());
      }
    }
  }
  if (train_embedding) {
    const std::size_t base = blocks_[embedding_block_].offset;
    for (std::size_t t = 0; t < example.sequence.token_ids.size(); ++t) {
      const std::size_t id = example.sequence.token_ids[t];
      if (id == Vocabulary::kPad) continue;
      for (std::size_t d = 0; d < dim_; ++d) grads_[base + id * dim_ + d] += g_x.at(t, d);
    }
  }
  return loss;
}

double TextCnn::loss(const TrainingExample& example) const {
  const Cache cache = forward(example.sequence, example.figurative_features, Mode::eval, 0);
  return nn::bce_loss_logit(cache.logit, example.label == PhmLabel::phm ? 1.0 : 0.0);
}

double TextCnn::probability(const PaddedSequence& seq, std::span<const double> aux) const {
  evaluations_.count.fetch_add(1);
  return forward(seq, aux, Mode::eval, 0).probability;
}

bool TextCnn::is_safe_point(const TrainingExample& example, double margin) const {
  const Cache cache = forward(example.sequence, example.figurative_features, Mode::eval, 0);
  auto stage_ok = [margin](const StageCache& c) {
    for (double v : c.pre.values()) {
      if (std::abs(v) < margin) return false;
    }
    const std::size_t features = c.pre.extent(1);
    const std::size_t windows = c.pooled.output.extent(0);
    const std::size_t pool = c.pre.extent(0) / std::max<std::size_t>(windows, 1);
    for (std::size_t o = 0; o < windows; ++o) {
      for (std::size_t f = 0; f < features; ++f) {
        double top = -1, second = -1;
        for (std::size_t i = 0; i < pool; ++i) {
          const double v = std::max(0.0, c.pre.at(o * pool + i, f));
          if (v > top) {
            second = top;
            top = v;
          } else if (v > second) {
            second = v;
          }
        }
        if (top > 0 && pool > 1 && top - second < margin) return false;
      }
    }
    return true;
  };
  for (const auto& c : cache.stages) {
    if (!stage_ok(c)) return false;
  }
  if (cache.aux && !stage_ok(*cache.aux)) return false;
  return cache.probability > 1e-6 && cache.probability < 1.0 - 1e-6;
}

nlohmann::json TextCnn::manifest() const {
  nlohmann::json m;
  m["kind"] = std::string(to_string(kind_));
  m["seed"] = seed_;
  m["embedding_dim"] = dim_;
  m["aux_length"] = aux_length_;
  m["architecture"] = {
      {"max_sequence_length", config_.max_sequence_length},
      {"filters", config_.filters},
      {"kernel_widths", config_.kernel_widths},
      {"dropout_rates", config_.dropout_rates},
      {"pool", config_.pool},
      {"layout", std::string(to_string(config_.layout))},
      {"trainable_embedding", config_.trainable_embedding},
      {"init_range", config_.init_range},
      {"aux_kernel_width", config_.aux_kernel_width},
      {"aux_filters", config_.aux_filters},
      {"aux_pool", config_.aux_pool},
  };
  nlohmann::json graph = nlohmann::json::array();
  graph.push_back("embedding");
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    graph.push_back("conv" + std::to_string(i) + ">relu>maxpool>dropout");
  }
  if (aux_stage_) graph.push_back("aux:conv>relu>maxpool");
  graph.push_back("concat>dense>sigmoid");
  m["graph"] = graph;
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : blocks_) blocks.push_back({{"name", b.name}, {"shape", b.shape}});
  m["blocks"] = blocks;
  m["vocab"] = vocab_.words();
  return m;
}

TextCnn TextCnn::from_checkpoint(const nn::Checkpoint& checkpoint) {
  const auto& m = checkpoint.manifest;
  try {
    const auto& a = m.at("architecture");
    CnnConfig c;
    c.max_sequence_length = a.at("max_sequence_length").get<std::size_t>();
    c.filters = a.at("filters").get<std::size_t>();
    c.kernel_widths = a.at("kernel_widths").get<std::vector<std::size_t>>();
    c.dropout_rates = a.at("dropout_rates").get<std::vector<double>>();
    c.pool = a.at("pool").get<std::size_t>();
    c.layout = parse_dropout_layout(a.at("layout").get<std::string>());
    c.trainable_embedding = a.at("trainable_embedding").get<bool>();
    c.init_range = a.at("init_range").get<double>();
    c.aux_kernel_width = a.at("aux_kernel_width").get<std::size_t>();
    c.aux_filters = a.at("aux_filters").get<std::size_t>();
    c.aux_pool = a.at("aux_pool").get<std::size_t>();
    const auto words = m.at("vocab").get<std::vector<std::string>>();
    Vocabulary vocab;
    for (const auto& w : words) vocab.add(w);
    if (vocab.size() != words.size()) throw DataError("checkpoint vocabulary is inconsistent");
    const EmbeddingTable table(std::move(vocab), m.at("embedding_dim").get<std::size_t>());
    const ModelKind kind = m.at("kind").get<std::string>() == "feataug" ? ModelKind::feataug : ModelKind::phmd;
    TextCnn model(kind, table, c, m.at("aux_length").get<std::size_t>(), m.at("seed").get<std::uint64_t>());
    if (model.params_.size() != checkpoint.params.size()) {
      throw DataError("checkpoint parameter count does not match its architecture");
    }
    model.params_ = checkpoint.params;
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint manifest: ") + e.what());
  }
}

TextCnn build_phmd(const EmbeddingTable& table, const CnnConfig& config, std::uint64_t seed) {
  return TextCnn(ModelKind::phmd, table, config, 0, seed);
}

TextCnn build_feataug(const EmbeddingTable& table, const CnnConfig& config, std::size_t feature_length,
                      std::uint64_t seed) {
  return TextCnn(ModelKind::feataug, table, config, feature_length, seed);
}

TrainResult train(TextCnn& model, std::span<const TrainingExample> corpus, const TrainOptions& options) {
  if (corpus.empty()) throw std::invalid_argument("training corpus is empty");
  if (options.epochs == 0 || options.batch_size == 0) {
    throw std::invalid_argument("epochs and batch size must be positive");
  }
  if (model.kind() == ModelKind::feataug) {
    for (const auto& ex : corpus) {
      if (ex.figurative_features.size() != model.aux_length()) {
        throw std::invalid_argument("FeatAug training needs a figurative feature vector for every example");
      }
    }
  }
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = corpus[a];
    const auto& y = corpus[b];
    if (x.sequence != y.sequence) return x.sequence < y.sequence;
    if (x.label != y.label) return x.label < y.label;
    return x.figurative_features < y.figurative_features;
  });

  Rng rng(options.seed);
  nn::AdamState adam;
  adam.lr = options.learning_rate;
  const std::size_t offset = model.trainable_offset();
  TrainResult result;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double total = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      model.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        total += model.accumulate_gradient(corpus[order[i]], Mode::train, rng.next_u64(), scale);
      }
      nn::adam_step(model.params().subspan(offset), model.grads().subspan(offset), adam);
    }
    const double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean)) throw std::runtime_error("training loss became non-finite");
    result.epoch_loss.push_back(mean);
  }
  return result;
}

double training_accuracy(const TextCnn& model, std::span<const TrainingExample> corpus) {
  if (corpus.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : corpus) {
    correct += label_for(model.probability(ex.sequence, ex.figurative_features)) == ex.label;
  }
  return static_cast<double>(correct) / static_cast<double>(corpus.size());
}

PhmLabel label_for(double probability) {
  return probability >= kDecisionThreshold ? PhmLabel::phm : PhmLabel::non_phm;
}

Prediction predict_phmd(const TextCnn& model, std::string_view doc_id, const PaddedSequence& seq) {
  Prediction p;
  p.doc_id = doc_id;
  p.probability = model.probability(seq);
  p.label = label_for(p.probability);
  return p;
}

Prediction pipeline_predict(const FigurativeVerdict& verdict, const TextCnn& model, std::string_view doc_id,
                            const PaddedSequence& seq) {
  if (verdict.label == UsageLabel::figurative) {
    return Prediction{std::string(doc_id), 0.0, PhmLabel::non_phm, UsageLabel::figurative};
  }
  Prediction p = predict_phmd(model, doc_id, seq);
  p.figurative_label = verdict.label;
  return p;
}

std::size_t figurative_feature_length(bool include_raw_score) {
  return 1 + LinguisticFeatures::kSize + (include_raw_score ? 1 : 0);
}

std::vector<double> figurative_feature_vector(const FigurativeVerdict& verdict, bool include_raw_score) {
  std::vector<double> v;
  v.reserve(figurative_feature_length(include_raw_score));
  v.push_back(verdict.label == UsageLabel::figurative ? 1.0 : 0.0);
  const auto f = verdict.features.to_vector();
  v.insert(v.end(), f.begin(), f.end());
  if (include_raw_score) v.push_back(verdict.literal_score);
  return v;
}

Prediction feataug_predict(const TextCnn& model, std::string_view doc_id, const PaddedSequence& seq,
                           const FigurativeVerdict& verdict, bool include_raw_score) {
  if (model.kind() != ModelKind::feataug) throw std::invalid_argument("feataug_predict needs a FeatAug model");
  const auto features = figurative_feature_vector(verdict, include_raw_score);
  Prediction p;
  p.doc_id = doc_id;
  p.probability = model.probability(seq, features);
  p.label = label_for(p.probability);
  p.figurative_label = verdict.label;
  return p;
}

void write_predictions(std::ostream& out, std::span<const Prediction> predictions) {
  char buf[32];
  for (const auto& p : predictions) {
    std::snprintf(buf, sizeof buf, "%.6f", p.probability);
    out << p.doc_id << '\t' << buf << '\t' << to_string(p.label) << '\t'
        << (p.figurative_label ? to_string(*p.figurative_label) : std::string_view("-")) << '\n';
  }
}

}  // namespace figphm
