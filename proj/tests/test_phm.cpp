#include <cmath>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "figphm/error.hpp"
#include "figphm/phm.hpp"
#include "fixtures.hpp"

using namespace figphm;
using namespace figphm::testing;

TEST_CASE("architecture shapes and parameter count") {
  const auto table = word_table(20, 50, 1);
  const TextCnn m = build_phmd(table, phmd_config(), 3);
  const std::size_t V = table.rows();
  const std::size_t expected = V * 50 + (3 + 4 + 5) * 50 * 100 + 300 + (48 / 2 + 47 / 2 + 46 / 2) * 100 + 1;
  CHECK(m.parameter_count() == expected);
  CHECK(m.head_width() == 7000);

  CnnConfig short_cfg = phmd_config();
  short_cfg.max_sequence_length = 4;
  CHECK_THROWS_AS(build_phmd(table, short_cfg, 3), std::invalid_argument);
  short_cfg.max_sequence_length = 6;
  CHECK_NOTHROW(build_phmd(table, short_cfg, 3));

  const TextCnn f = build_feataug(table, feataug_config(), figurative_feature_length(), 3);
  CHECK(f.aux_length() == 29);
  CHECK(f.head_width() == 7000 + (28 / 2) * 100);
  CHECK_THROWS_AS(build_feataug(table, feataug_config(), 1, 3), std::invalid_argument);
  CHECK(feataug_config().dropout_rates == std::vector<double>{0.3, 0.1, 0.3});
  CHECK(phmd_config().dropout_rates == std::vector<double>{0.2, 0.3, 0.5});
}

TEST_CASE("initialisation") {
  const auto table = word_table(15, 6, 2);
  const auto cfg = small_config();
  const TextCnn a = build_phmd(table, cfg, 9);
  const TextCnn b = build_phmd(table, cfg, 9);
  const TextCnn c = build_phmd(table, cfg, 10);
  CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  CHECK_FALSE(std::equal(a.params().begin(), a.params().end(), c.params().begin()));
  const auto emb = a.block("embedding");
  for (std::size_t i = 0; i < 6; ++i) CHECK(emb[i] == 0.0);
  for (std::size_t i = 6; i < emb.size(); ++i) CHECK(emb[i] == table.values()[i]);
  for (const auto& blk : a.blocks()) {
    const auto v = a.block(blk.name);
    if (blk.name.ends_with(".bias")) {
      for (double x : v) CHECK(x == 0.0);
    } else if (blk.name != "embedding") {
      for (double x : v) CHECK(std::abs(x) <= cfg.init_range);
    }
  }
  CHECK_THROWS_AS(a.block("nope"), std::out_of_range);
}

TEST_CASE("prediction basics") {
  Rng rng(3);
  const auto table = word_table(15, 6, 2);
  const TextCnn m = build_phmd(table, small_config(), 4);
  const auto seq = random_sequence(rng, m.vocab().size(), 10, 7);
  const auto p1 = predict_phmd(m, "d", seq);
  const auto p2 = predict_phmd(m, "d", seq);
  CHECK(p1.probability == p2.probability);
  CHECK(p1.probability > 0);
  CHECK(p1.probability < 1);
  CHECK(std::abs(p1.probability - 0.5) < 0.45);
  CHECK(label_for(0.49) == PhmLabel::non_phm);
  CHECK(label_for(0.5) == PhmLabel::phm);

  PaddedSequence wrong = seq;
  wrong.token_ids.pop_back();
  CHECK_THROWS_AS(m.probability(wrong), std::invalid_argument);
}

TEST_CASE("backprop matches finite differences") {
  Rng rng(17);
  const auto table = word_table(12, 4, 5);
  for (ModelKind kind : {ModelKind::phmd, ModelKind::feataug}) {
    for (DropoutLayout layout : {DropoutLayout::positional, DropoutLayout::stacked}) {
      CnnConfig cfg = small_config(kind);
      cfg.layout = layout;
      if (layout == DropoutLayout::stacked) cfg.max_sequence_length = 32;
      int checked = 0;
      for (int attempt = 0; attempt < 200 && checked < 3; ++attempt) {
        const TextCnn m = kind == ModelKind::phmd
                              ? build_phmd(table, cfg, rng.next_u64())
                              : build_feataug(table, cfg, figurative_feature_length(), rng.next_u64());
        const auto ex = random_example(rng, m);
        if (!m.is_safe_point(ex, 1e-4)) continue;
        CHECK(model_gradient_error(m, ex) < 1e-5);
        ++checked;
      }
      CHECK(checked == 3);
    }
  }
}

TEST_CASE("padding rows receive no gradient") {
  Rng rng(2);
  const auto table = word_table(12, 4, 5);
  TextCnn m = build_phmd(table, small_config(), 1);
  TrainingExample ex;
  ex.sequence = random_sequence(rng, m.vocab().size(), 10, 6);
  ex.label = PhmLabel::phm;
  m.zero_grad();
  m.accumulate_gradient(ex, nn::Mode::train, 5);
  for (std::size_t i = 0; i < 4; ++i) CHECK(m.grads()[i] == 0.0);
}

TEST_CASE("feataug reduces to phmd when the right branch is silenced") {
  Rng rng(8);
  const auto table = word_table(14, 5, 3);
  const CnnConfig cfg = small_config(ModelKind::feataug);
  for (int trial = 0; trial < 10; ++trial) {
    const std::uint64_t seed = rng.next_u64();
    const TextCnn phmd = build_phmd(table, cfg, seed);
    TextCnn aug = build_feataug(table, cfg, figurative_feature_length(), seed);
    // Copy the left parameters explicitly as well; equality of seeds alone is
    // not the property under test.
    for (const auto& blk : phmd.blocks()) {
      const auto src = phmd.block(blk.name);
      auto dst = aug.block(blk.name);
      std::copy(src.begin(), src.end(), dst.begin());
    }
    auto head = aug.block("head.weight");
    for (std::size_t j = phmd.head_width(); j < head.size(); ++j) head[j] = 0;
    for (auto name : {"aux.kernel", "aux.bias"}) {
      for (double& v : aug.block(name)) v = 0;
    }
    for (int k = 0; k < 5; ++k) {
      const auto seq = random_sequence(rng, phmd.vocab().size(), 10, 3 + rng.below(8));
      const auto feats = random_features(rng, aug.aux_length());
      CHECK(std::abs(aug.probability(seq, feats) - phmd.probability(seq)) <= 1e-12);
    }
  }
}

TEST_CASE("feataug prediction needs matching features") {
  Rng rng(1);
  const auto table = word_table(14, 5, 3);
  const TextCnn aug = build_feataug(table, small_config(ModelKind::feataug), figurative_feature_length(), 2);
  const auto seq = random_sequence(rng, aug.vocab().size(), 10, 5);
  FigurativeVerdict v;
  v.literal_score = 0.1;
  v.label = UsageLabel::figurative;
  const auto p = feataug_predict(aug, "x", seq, v);
  CHECK(p.figurative_label == UsageLabel::figurative);
  CHECK(p.probability == feataug_predict(aug, "x", seq, v).probability);
  CHECK_THROWS_AS(feataug_predict(aug, "x", seq, v, false), std::invalid_argument);
  const auto fv = figurative_feature_vector(v);
  CHECK(fv.size() == 29);
  CHECK(fv.front() == 1.0);
  CHECK(fv.back() == 0.1);
  CHECK(figurative_feature_vector(v, false).size() == 28);
}

TEST_CASE("pipeline bypass") {
  Rng rng(4);
  const auto table = word_table(14, 5, 3);
  const TextCnn m = build_phmd(table, small_config(), 2);
  const auto seq = random_sequence(rng, m.vocab().size(), 10, 5);
  FigurativeVerdict fig;
  fig.literal_score = 0.05;
  fig.label = UsageLabel::figurative;
  const auto before = m.evaluation_count();
  const auto p = pipeline_predict(fig, m, "d", seq);
  CHECK(m.evaluation_count() == before);
  CHECK(p.label == PhmLabel::non_phm);
  CHECK(p.probability == 0.0);
  CHECK(p.figurative_label == UsageLabel::figurative);

  FigurativeVerdict lit;
  lit.literal_score = 0.7;
  const auto q = pipeline_predict(lit, m, "d", seq);
  CHECK(m.evaluation_count() == before + 1);
  CHECK(q.probability == predict_phmd(m, "d", seq).probability);

  // Force the head so delegation decides on a known probability.
  for (double target : {0.9, 0.1}) {
    TextCnn forced = m;
    for (double& w : forced.block("head.weight")) w = 0;
    forced.block("head.bias")[0] = std::log(target / (1 - target));
    const auto r = pipeline_predict(lit, forced, "d", seq);
    CHECK(r.probability == doctest::Approx(target));
    CHECK(r.label == (target > 0.5 ? PhmLabel::phm : PhmLabel::non_phm));
  }
}

TEST_CASE("training") {
  const auto table = word_table(30, 8, 6);
  CnnConfig cfg = small_config();
  cfg.init_range = 0.05;
  const std::size_t marker = table.vocab().lookup("w7");
  auto corpus = marker_corpus(60, cfg.max_sequence_length, table.vocab(), marker, 3);
  TrainOptions opts;
  opts.epochs = 4;
  opts.batch_size = 16;
  opts.seed = 12;

  TextCnn a = build_phmd(table, cfg, 5);
  const auto ra = train(a, corpus, opts);
  CHECK(ra.epoch_loss.size() == 4);
  for (double l : ra.epoch_loss) CHECK(std::isfinite(l));

  TextCnn b = build_phmd(table, cfg, 5);
  CHECK(train(b, corpus, opts).epoch_loss == ra.epoch_loss);

  Rng rng(99);
  auto shuffled = corpus;
  rng.shuffle(shuffled.begin(), shuffled.end());
  TextCnn c = build_phmd(table, cfg, 5);
  CHECK(train(c, shuffled, opts).epoch_loss == ra.epoch_loss);
  CHECK(std::equal(a.params().begin(), a.params().end(), c.params().begin()));

  for (const auto& ex : corpus) {
    const double p = a.probability(ex.sequence);
    CHECK(p > 0);
    CHECK(p < 1);
  }

  CHECK_THROWS(train(a, std::vector<TrainingExample>{}, opts));
  TextCnn aug = build_feataug(table, small_config(ModelKind::feataug), figurative_feature_length(), 1);
  CHECK_THROWS_AS(train(aug, corpus, opts), std::invalid_argument);

  CnnConfig frozen = cfg;
  frozen.trainable_embedding = false;
  TextCnn f = build_phmd(table, frozen, 5);
  train(f, corpus, opts);
  const auto emb = f.block("embedding");
  CHECK(std::equal(emb.begin(), emb.end(), build_phmd(table, frozen, 5).block("embedding").begin()));
}

TEST_CASE("a small step lowers the loss of its example") {
  Rng rng(31);
  const auto table = word_table(12, 4, 5);
  CnnConfig cfg = small_config();
  cfg.dropout_rates = {0, 0, 0};
  for (int trial = 0; trial < 20; ++trial) {
    TextCnn m = build_phmd(table, cfg, rng.next_u64());
    const auto ex = random_example(rng, m);
    const double before = m.loss(ex);
    TrainOptions opts;
    opts.epochs = 1;
    opts.batch_size = 1;
    opts.learning_rate = 1e-4;
    train(m, std::vector<TrainingExample>{ex}, opts);
    CHECK(m.loss(ex) < before);
  }
}

TEST_CASE("checkpoint round trip through the model") {
  Rng rng(5);
  const auto table = word_table(14, 5, 3);
  CnnConfig cfg = small_config(ModelKind::feataug);
  cfg.layout = DropoutLayout::stacked;
  cfg.max_sequence_length = 32;
  const TextCnn m = build_feataug(table, cfg, figurative_feature_length(), 7);
  const auto path = std::filesystem::temp_directory_path() / "figphm_phm_test.ckpt";
  nn::write_checkpoint(path, m.manifest(), m.params());
  const TextCnn back = TextCnn::from_checkpoint(nn::read_checkpoint(path));
  std::filesystem::remove(path);
  CHECK(back.kind() == ModelKind::feataug);
  CHECK(back.config().layout == DropoutLayout::stacked);
  CHECK(std::equal(m.params().begin(), m.params().end(), back.params().begin(), back.params().end()));
  const auto seq = random_sequence(rng, m.vocab().size(), 32, 9);
  const auto feats = random_features(rng, 29);
  CHECK(back.probability(seq, feats) == m.probability(seq, feats));
}

TEST_CASE("prediction dump") {
  std::vector<Prediction> preds{{"a", 0.75, PhmLabel::phm, std::nullopt},
                                {"b", 0.0, PhmLabel::non_phm, UsageLabel::figurative}};
  std::ostringstream out;
  write_predictions(out, preds);
  CHECK(out.str() == "a\t0.750000\tPHM\t-\nb\t0.000000\tNonPHM\tfigurative\n");
}
