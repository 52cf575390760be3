#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "figphm/corpus.hpp"
#include "figphm/error.hpp"
#include "figphm/rng.hpp"

using namespace figphm;
using Tokens = std::vector<std::string>;

namespace {

std::vector<AnnotationPair> pairs_of(const std::vector<UsageLabel>& a, const std::vector<UsageLabel>& b) {
  std::vector<AnnotationPair> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back({"i" + std::to_string(i), a[i], b[i]});
  return out;
}

constexpr auto L = UsageLabel::literal;
constexpr auto F = UsageLabel::figurative;

// Independent kappa: marginals counted directly.
double kappa_oracle(const std::vector<UsageLabel>& a, const std::vector<UsageLabel>& b) {
  const double n = static_cast<double>(a.size());
  double agree = 0, a_lit = 0, b_lit = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    agree += a[i] == b[i];
    a_lit += a[i] == L;
    b_lit += b[i] == L;
  }
  const double po = agree / n;
  const double pe = (a_lit / n) * (b_lit / n) + (1 - a_lit / n) * (1 - b_lit / n);
  return (po - pe) / (1 - pe);
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("I have a cough!") == Tokens{"i", "have", "a", "cough", "!"});
  CHECK(tokenize("@bob see https://x.y") == Tokens{"<user>", "see", "<url>"});
  CHECK(tokenize("#flu season") == Tokens{"flu", "season"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t ").empty());
  CHECK(tokenize("www.who.int, now") == Tokens{"<url>", "now"});
  CHECK(tokenize("Heart-attack...") == Tokens{"heart", "-", "attack", ".", ".", "."});
  CHECK(tokenize("so tired\xE2\x80\xA6") == Tokens{"so", "tired", "\xE2\x80\xA6"});
}

TEST_CASE("tokenize is idempotent on its own output") {
  Rng rng(7);
  const char* pieces[] = {"Flu", "#sick", "@nurse_1", "ok?", "don't", "x.y", "(cough)", "http://a.b/c", "42",
                          "\xE2\x80\x9Cquoted\xE2\x80\x9D", "\xF0\x9F\x98\xB7", "<url>"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    const auto n = rng.below(8) + 1;
    for (std::uint64_t i = 0; i < n; ++i) text += std::string(pieces[rng.below(std::size(pieces))]) + " ";
    const auto once = tokenize(text);
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    CHECK(tokenize(joined) == once);
  }
}

TEST_CASE("dataset parsing") {
  std::istringstream in("t1\tcancer\tI was diagnosed today\tPHM\n\nt2\tstroke\tstroke of genius\tNonPHM\n");
  const auto docs = parse_dataset(in);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].id == "t1");
  CHECK(docs[0].disease == Disease::cancer);
  CHECK(docs[0].label == PhmLabel::phm);
  CHECK(docs[0].tokens == Tokens{"i", "was", "diagnosed", "today"});
  CHECK(docs[1].label == PhmLabel::non_phm);

  std::istringstream empty("");
  CHECK(parse_dataset(empty).empty());

  std::istringstream three("t1\tcancer\ttext\n");
  CHECK_THROWS_WITH_AS(parse_dataset(three), "line 1: expected 4 fields", DataError);
  std::istringstream bad_label("t1\tcancer\ttext\tphm\n");
  CHECK_THROWS_AS(parse_dataset(bad_label), DataError);
  std::istringstream bad_disease("t1\tflu\ttext\tPHM\n");
  CHECK_THROWS_AS(parse_dataset(bad_disease), DataError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/file.tsv"), DataError);
}

TEST_CASE("dataset round trip") {
  Rng rng(11);
  const char* words[] = {"i", "have", "a", "cough", "heart", "attack", "!", "my", "mom", "stroke"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Document> docs;
    const auto n = rng.below(6);
    for (std::uint64_t i = 0; i < n; ++i) {
      Document d;
      d.id = "d" + std::to_string(i);
      d.disease = kAllDiseases[rng.below(std::size(kAllDiseases))];
      d.label = rng.bernoulli(0.5) ? PhmLabel::phm : PhmLabel::non_phm;
      const auto len = rng.below(6) + 1;
      for (std::uint64_t j = 0; j < len; ++j) d.raw_text += (j ? " " : "") + std::string(words[rng.below(10)]);
      d.tokens = tokenize(d.raw_text);
      docs.push_back(d);
    }
    std::stringstream buf;
    write_dataset(buf, docs);
    const auto back = parse_dataset(buf);
    REQUIRE(back.size() == docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i) {
      CHECK(back[i].id == docs[i].id);
      CHECK(back[i].disease == docs[i].disease);
      CHECK(back[i].raw_text == docs[i].raw_text);
      CHECK(back[i].tokens == docs[i].tokens);
      CHECK(back[i].label == docs[i].label);
    }
  }
}

TEST_CASE("garbled documents are dropped") {
  std::istringstream in("a\tother\t   \tPHM\nb\tother\tok\tPHM\n");
  const auto docs = drop_garbled(parse_dataset(in));
  REQUIRE(docs.size() == 1);
  CHECK(docs[0].id == "b");
}

TEST_CASE("vocabulary and padding") {
  Vocabulary v;
  CHECK(v.lookup("<pad>") == Vocabulary::kPad);
  CHECK(v.lookup("<unk>") == Vocabulary::kUnk);
  const auto a = v.add("a");
  const auto b = v.add("b");
  const auto c = v.add("c");
  CHECK(v.add("a") == a);

  const auto p = pad(Tokens{"a", "b", "c"}, v, 5);
  CHECK(p.token_ids == std::vector<std::size_t>{a, b, c, 0, 0});
  CHECK(p.true_length == 3);

  const auto t = pad(Tokens{"a", "b", "c", "a", "b", "c", "a"}, v, 5);
  CHECK(t.token_ids == std::vector<std::size_t>{a, b, c, a, b});
  CHECK(t.true_length == 5);

  const auto u = pad(Tokens{"a", "zzz"}, v, 3);
  CHECK(u.token_ids[1] == Vocabulary::kUnk);

  CHECK_THROWS(pad(Tokens{"a"}, v, 0));
}

TEST_CASE("padding never leaves the vocabulary") {
  Rng rng(3);
  Vocabulary v;
  for (int i = 0; i < 20; ++i) v.add("w" + std::to_string(i));
  for (int trial = 0; trial < 200; ++trial) {
    Tokens toks;
    const auto n = rng.below(12) + 1;
    for (std::uint64_t i = 0; i < n; ++i) toks.push_back("w" + std::to_string(rng.below(30)));
    const std::size_t max_len = rng.below(10) + 1;
    const auto p = pad(toks, v, max_len);
    CHECK(p.token_ids.size() == max_len);
    CHECK(p.true_length == std::min<std::size_t>(n, max_len));
    CHECK(p.true_length >= 1);
    for (std::size_t i = 0; i < max_len; ++i) {
      CHECK(p.token_ids[i] < v.size());
      if (i >= p.true_length) CHECK(p.token_ids[i] == Vocabulary::kPad);
    }
  }
}

TEST_CASE("cohen kappa") {
  CHECK(cohen_kappa(pairs_of({L, F, L}, {L, F, L})) == 1.0);
  CHECK(cohen_kappa(pairs_of({L, L, F, F}, {L, F, F, F})) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(observed_agreement(pairs_of({L, L, F, F}, {L, F, F, F})) == doctest::Approx(0.75));
  CHECK(cohen_kappa(pairs_of({L, F}, {F, L})) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(cohen_kappa(pairs_of({L, L}, {L, L})) == 1.0);
  CHECK_THROWS_AS(cohen_kappa({}), std::invalid_argument);
}

TEST_CASE("cohen kappa properties") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto n = rng.below(20) + 2;
    std::vector<UsageLabel> a, b;
    for (std::uint64_t i = 0; i < n; ++i) {
      a.push_back(rng.bernoulli(0.5) ? L : F);
      b.push_back(rng.bernoulli(0.5) ? L : F);
    }
    auto pairs = pairs_of(a, b);
    double k;
    try {
      k = cohen_kappa(pairs);
    } catch (const DataError&) {
      continue;
    }
    CHECK(k <= 1.0);
    if (std::equal(a.begin(), a.end(), b.begin())) {
      CHECK(k == 1.0);
    } else {
      CHECK(k == doctest::Approx(kappa_oracle(a, b)).epsilon(1e-12));
    }
    CHECK(cohen_kappa(pairs_of(b, a)) == doctest::Approx(k).epsilon(1e-12));
    rng.shuffle(pairs.begin(), pairs.end());
    CHECK(cohen_kappa(pairs) == doctest::Approx(k).epsilon(1e-12));
  }
}

TEST_CASE("annotation parsing") {
  std::istringstream in("x\tliteral\tfigurative\ny\tliteral\tliteral\n");
  const auto pairs = parse_annotations(in);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].label_b == F);
  std::istringstream bad("x\tliteral\n");
  CHECK_THROWS_AS(parse_annotations(bad), DataError);
}

TEST_CASE("symptom marking") {
  Document d;
  d.tokens = {"my", "cough", "and", "cough"};
  mark_symptoms(d, {"cough"});
  CHECK(d.symptom_indices == std::vector<std::size_t>{1, 3});
}
