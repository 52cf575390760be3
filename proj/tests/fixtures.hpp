#pragma once

#include <string>
#include <vector>

#include "figphm/corpus.hpp"
#include "figphm/embeddings.hpp"
#include "figphm/neuralnet.hpp"
#include "figphm/phm.hpp"
#include "figphm/rng.hpp"

namespace figphm::testing {

// Same graph as the paper-sized models (kernels 3/4/5, pool 2, three dropout
// stages) with narrow layers so finite differences stay cheap.
inline CnnConfig small_config(ModelKind kind = ModelKind::phmd) {
  CnnConfig c = kind == ModelKind::phmd ? phmd_config() : feataug_config();
  c.max_sequence_length = 10;
  c.filters = 4;
  c.aux_filters = 4;
  c.init_range = 0.3;
  return c;
}

inline std::vector<std::string> numbered_words(std::size_t n, const std::string& prefix = "w") {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline EmbeddingTable word_table(std::size_t n, std::size_t dim, std::uint64_t seed) {
  return random_table(numbered_words(n), dim, seed);
}

// Token ids drawn from the non-reserved rows; `length` real tokens then PAD.
inline PaddedSequence random_sequence(Rng& rng, std::size_t vocab_size, std::size_t max_len, std::size_t length) {
  PaddedSequence s;
  s.token_ids.assign(max_len, Vocabulary::kPad);
  s.true_length = length;
  for (std::size_t i = 0; i < length; ++i) s.token_ids[i] = 2 + rng.below(vocab_size - 2);
  return s;
}

inline std::vector<double> random_features(Rng& rng, std::size_t n) {
  std::vector<double> f(n);
  for (double& v : f) v = rng.uniform();
  return f;
}

inline TrainingExample random_example(Rng& rng, const TextCnn& model) {
  const std::size_t T = model.config().max_sequence_length;
  TrainingExample ex;
  ex.sequence = random_sequence(rng, model.vocab().size(), T, T);
  ex.label = rng.bernoulli(0.5) ? PhmLabel::phm : PhmLabel::non_phm;
  if (model.kind() == ModelKind::feataug) ex.figurative_features = random_features(rng, model.aux_length());
  return ex;
}

// Max relative error between backprop and central differences over every
// parameter, evaluated with dropout off.
inline double model_gradient_error(TextCnn model, const TrainingExample& ex, double eps = 1e-4) {
  model.zero_grad();
  model.accumulate_gradient(ex, nn::Mode::eval, 0, 1.0);
  const std::vector<double> analytic(model.grads().begin(), model.grads().end());
  const std::vector<double> point(model.params().begin(), model.params().end());
  auto loss = [&](std::span<const double> p) {
    std::copy(p.begin(), p.end(), model.params().begin());
    return model.loss(ex);
  };
  return nn::gradient_check(loss, point, analytic, eps);
}

// Document i has tokens drawn from a shared pool; PHM documents also carry
// the marker token at a random position.
inline std::vector<TrainingExample> marker_corpus(std::size_t n, std::size_t max_len, const Vocabulary& vocab,
                                                  std::size_t marker, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrainingExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    TrainingExample ex;
    const bool positive = i % 2 == 0;
    const std::size_t len = 6 + rng.below(max_len - 5);
    ex.sequence.token_ids.assign(max_len, Vocabulary::kPad);
    ex.sequence.true_length = len;
    for (std::size_t t = 0; t < len; ++t) {
      std::size_t id;
      do {
        id = 2 + rng.below(vocab.size() - 2);
      } while (id == marker);
      ex.sequence.token_ids[t] = id;
    }
    if (positive) ex.sequence.token_ids[rng.below(len)] = marker;
    ex.label = positive ? PhmLabel::phm : PhmLabel::non_phm;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace figphm::testing
