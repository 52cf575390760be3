#include "figphm/figurative.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "figphm/error.hpp"
#include "figphm/rng.hpp"

namespace figphm {

LiteralRepresentation build_literal_representation(const EmbeddingTable& table, std::string_view keyword,
                                                   std::size_t k) {
  if (k == 0) throw std::invalid_argument("literal representation needs k >= 1");
  if (!table.contains(keyword) || table.vocab().lookup(keyword) <= Vocabulary::kUnk) {
    throw std::invalid_argument("keyword not in embedding table: " + std::string(keyword));
  }
  LiteralRepresentation rep{std::string(keyword), {}};
  for (auto& n : nearest_neighbors(table, keyword, k)) rep.related_words.push_back(std::move(n.word));
  return rep;
}

double literal_usage_score(std::span<const std::string> tokens, const LiteralRepresentation& rep,
                           const EmbeddingTable& table, const ScoreOptions& options) {
  if (rep.related_words.empty()) throw std::invalid_argument("empty literal representation");
  std::vector<std::span<const double>> rep_vectors;
  for (const auto& r : rep.related_words) {
    if (table.contains(r)) rep_vectors.push_back(table.vector(r));
  }
  double total = 0;
  std::size_t pairs = 0;
  for (const auto& t : tokens) {
    if (options.exclude_keyword && t == rep.keyword) continue;
    if (is_sentinel(t) || t == Vocabulary::kPadToken || t == Vocabulary::kUnkToken) continue;
    if (!table.contains(t)) continue;
    const auto w = table.vector(t);
    for (const auto& r : rep_vectors) {
      total += std::max(0.0, cosine(w, r));
      ++pairs;
    }
  }
  if (pairs == 0) return kUninformativeScore;
  return std::clamp(total / static_cast<double>(pairs), 0.0, 1.0);
}

std::string_view to_string(Tag t) {
  static constexpr std::string_view kNames[] = {"NOUN", "VERB", "ADJ", "ADV", "PRON",  "DET",
                                                "ADP",  "NUM",  "CONJ", "PRT", "PUNCT", "X"};
  return kNames[static_cast<std::size_t>(t)];
}

RuleTagger::RuleTagger() {
  auto add = [this](Tag tag, std::initializer_list<const char*> words) {
    for (const char* w : words) lexicon_.emplace(w, tag);
  };
  add(Tag::PRON, {"i", "me", "my", "mine", "myself", "you", "your", "yours", "yourself", "he", "him",
                  "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself", "we", "us",
                  "our", "ours", "they", "them", "their", "theirs", "who", "whom", "whose", "what",
                  "someone", "somebody", "everyone", "everybody", "anyone", "nobody", "something",
                  "nothing", "everything", "anything", "u", "ur", "ya"});
  add(Tag::DET, {"a", "an", "the", "this", "that", "these", "those", "some", "any", "every", "each",
                 "no", "all", "both", "another", "either", "neither", "which"});
  add(Tag::ADP, {"in", "on", "at", "by", "for", "with", "about", "from", "of", "into", "onto", "over",
                 "under", "after", "before", "through", "during", "without", "between", "against",
                 "since", "like", "near", "across", "around", "behind", "until", "upon", "within",
                 "as"});
  add(Tag::CONJ, {"and", "or", "but", "nor", "yet", "because", "although", "though", "while", "if",
                  "unless", "whereas", "&"});
  add(Tag::PRT, {"to", "not", "t", "s", "up", "out", "off", "'s", "n't"});
  add(Tag::NUM, {"one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
                 "hundred", "thousand", "million", "first", "second", "third"});
  add(Tag::VERB, {"be", "am", "is", "are", "was", "were", "been", "being", "m", "re", "ve", "ll", "d",
                  "have", "has", "had", "do", "does", "did", "get", "gets", "got", "gotten", "feel",
                  "feels", "felt", "go", "goes", "went", "gone", "make", "makes", "made", "can",
                  "could", "will", "would", "should", "shall", "may", "might", "must", "think",
                  "thinks", "thought", "know", "knows", "knew", "see", "sees", "saw", "seen", "say",
                  "says", "said", "want", "wants", "need", "needs", "take", "takes", "took", "taken",
                  "catch", "catches", "caught", "sneeze", "sneezes", "hurt", "hurts", "die", "dies",
                  "let", "keep", "kept", "come", "came", "give", "gave", "tell", "told", "hope",
                  "pray", "suffer", "suffers", "diagnosed", "killed", "won", "win", "lose", "lost",
                  "stop", "help", "love", "hate", "miss", "wish", "look", "looks", "seem", "seems"});
  add(Tag::ADV, {"very", "so", "too", "really", "just", "now", "still", "already", "always", "never",
                 "again", "also", "here", "there", "today", "tonight", "yesterday", "tomorrow",
                 "soon", "ever", "even", "only", "almost", "maybe", "then", "how", "why", "when",
                 "where", "well", "back", "away", "literally"});
  add(Tag::ADJ, {"sick", "ill", "bad", "good", "great", "better", "worse", "worst", "best", "new",
                 "old", "high", "low", "whole", "entire", "little", "big", "own", "same", "sore",
                 "tired", "sad", "happy", "real", "major", "minor", "severe", "mild", "chronic",
                 "mental", "heavy", "long", "short", "hard", "healthy", "weak"});
  add(Tag::NOUN, {"cough", "fever", "cold", "flu", "stroke", "cancer", "depression", "heart", "attack",
                  "alzheimer", "alzheimers", "alzheimer's", "parkinson", "parkinsons", "headache",
                  "pain", "breath", "doctor", "doctors", "hospital", "day", "days", "week", "weeks",
                  "morning", "night", "time", "people", "man", "woman", "mom", "dad", "mother",
                  "father", "friend", "friends", "family", "life", "world", "market", "economy",
                  "lungs", "chest", "throat", "head", "body", "disease", "symptoms", "symptom",
                  "treatment", "medicine", "nurse", "patient", "patients", "brain", "blood", "virus",
                  "infection", "dementia", "memory", "tumor", "chemo", "therapy", "anxiety", "home",
                  "work", "year", "years", "month", "grandma", "grandpa", "wife", "husband", "son",
                  "daughter", "team", "game", "news", "city", "country", "money", "government",
                  "thing", "things", "way", "breakfast"});
}

Tag RuleTagger::tag_word(std::string_view word) const {
  if (word.empty()) return Tag::X;
  if (auto it = lexicon_.find(std::string(word)); it != lexicon_.end()) return it->second;
  if (is_sentinel(word)) return Tag::X;
  const bool all_punct = std::all_of(word.begin(), word.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && (u > 0x20 && u < 0x7F) && !(std::isalnum(u));
  });
  if (all_punct) return Tag::PUNCT;
  // Non-ASCII single code points that the tokenizer split off.
  if (static_cast<unsigned char>(word[0]) >= 0x80 && word.size() <= 4) {
    const auto lead = static_cast<unsigned char>(word[0]);
    const std::size_t len = lead >= 0xF0 ? 4 : lead >= 0xE0 ? 3 : lead >= 0xC0 ? 2 : 1;
    if (len == word.size() && lead >= 0xE2) return Tag::PUNCT;
  }
  const bool numeric = std::all_of(word.begin(), word.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c)) != 0;
  });
  if (numeric) return Tag::NUM;

  auto ends = [&](std::string_view suffix) {
    return word.size() >= suffix.size() + 3 && word.ends_with(suffix);
  };
  if (ends("ly")) return Tag::ADV;
  for (auto s : {"ing", "ed", "ize", "ise"}) {
    if (ends(s)) return Tag::VERB;
  }
  for (auto s : {"tion", "sion", "ness", "ment", "ity", "ism", "ist", "itis", "osis", "emia"}) {
    if (ends(s)) return Tag::NOUN;
  }
  for (auto s : {"ous", "ful", "less", "able", "ible", "ive", "ical", "ish"}) {
    if (ends(s)) return Tag::ADJ;
  }
  return Tag::X;
}

std::vector<Tag> RuleTagger::tag(std::span<const std::string> tokens) const {
  std::vector<Tag> tags;
  tags.reserve(tokens.size());
  for (const auto& t : tokens) tags.push_back(tag_word(t));
  return tags;
}

const std::vector<std::string>& subordinators() {
  static const std::vector<std::string> kList = {
      "because", "although", "since", "while", "if",     "that",   "which",  "who",     "whom", "whose",
      "when",    "where",    "unless", "until", "though", "whereas", "after", "before", "as"};
  return kList;
}

std::vector<double> LinguisticFeatures::to_vector() const {
  std::vector<double> v;
  v.reserve(kSize);
  v.push_back(has_subordinate_clause);
  v.insert(v.end(), left_pos.begin(), left_pos.end());
  v.insert(v.end(), right_pos.begin(), right_pos.end());
  v.push_back(health_word_presence);
  v.push_back(health_word_count_norm);
  return v;
}

namespace {

double subordinate_flag(std::span<const std::string> tokens) {
  const auto& subs = subordinators();
  for (const auto& t : tokens) {
    if (std::find(subs.begin(), subs.end(), t) != subs.end()) return 1.0;
  }
  return 0.0;
}

void fill_health(LinguisticFeatures& f, std::span<const std::string> tokens,
                 std::optional<std::size_t> target, const WordSet& health) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (target && *target == i) continue;
    count += health.contains(tokens[i]);
  }
  f.health_word_presence = count > 0 ? 1.0 : 0.0;
  f.health_word_count_norm = tokens.empty() ? 0.0 : static_cast<double>(count) / static_cast<double>(tokens.size());
}

}  // namespace

LinguisticFeatures extract_features(std::span<const std::string> tokens, std::size_t target_index,
                                    std::span<const Tag> tags, const WordSet& health_lexicon) {
  if (target_index >= tokens.size()) throw std::out_of_range("target index out of range");
  if (tags.size() != tokens.size()) throw std::invalid_argument("tag count differs from token count");
  LinguisticFeatures f;
  f.has_subordinate_clause = subordinate_flag(tokens);
  if (target_index > 0) f.left_pos[static_cast<std::size_t>(tags[target_index - 1])] = 1.0;
  if (target_index + 1 < tokens.size()) f.right_pos[static_cast<std::size_t>(tags[target_index + 1])] = 1.0;
  fill_health(f, tokens, target_index, health_lexicon);
  return f;
}

LinguisticFeatures extract_untargeted_features(std::span<const std::string> tokens,
                                               const WordSet& health_lexicon) {
  LinguisticFeatures f;
  f.has_subordinate_clause = subordinate_flag(tokens);
  fill_health(f, tokens, std::nullopt, health_lexicon);
  return f;
}

std::vector<std::string> parse_word_list(std::istream& in) {
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    std::string word = line.substr(first, last - first + 1);
    for (char& c : word) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    words.push_back(std::move(word));
  }
  return words;
}

std::vector<std::string> load_word_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_word_list(in);
}

UsageLabel classify(double score, double threshold) {
  if (!(score >= 0.0 && score <= 1.0)) throw std::invalid_argument("literal score outside [0, 1]");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold outside (0, 1)");
  return score < threshold ? UsageLabel::figurative : UsageLabel::literal;
}

LdaEstimate lda_estimate(const std::vector<std::vector<std::string>>& documents,
                         std::span<const double> seed_scores, std::size_t iterations, std::uint64_t seed,
                         const LdaOptions& options) {
  if (documents.empty()) throw std::invalid_argument("lda_estimate: empty corpus");
  if (seed_scores.size() != documents.size()) throw std::invalid_argument("lda_estimate: one seed score per document");
  if (iterations == 0) throw std::invalid_argument("lda_estimate: iterations must be at least 1");
  for (double s : seed_scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("lda_estimate: seed score outside [0, 1]");
  }

  std::unordered_map<std::string, std::size_t> word_index;
  std::vector<std::string> words;
  std::vector<std::vector<std::size_t>> docs(documents.size());
  for (std::size_t d = 0; d < documents.size(); ++d) {
    for (const auto& w : documents[d]) {
      auto [it, inserted] = word_index.emplace(w, words.size());
      if (inserted) words.push_back(w);
      docs[d].push_back(it->second);
    }
  }
  const std::size_t vocab = words.size();
  const double alpha = options.alpha;
  const double beta = options.beta;
  const double vbeta = beta * static_cast<double>(vocab);

  Rng rng(seed);
  std::vector<std::vector<int>> topic(docs.size());
  std::vector<std::array<std::int64_t, 2>> doc_topic(docs.size(), {0, 0});
  std::vector<std::array<std::int64_t, 2>> word_topic(vocab, {0, 0});
  std::array<std::int64_t, 2> topic_total{0, 0};
  for (std::size_t d = 0; d < docs.size(); ++d) {
    topic[d].resize(docs[d].size());
    for (std::size_t n = 0; n < docs[d].size(); ++n) {
      const int k = rng.bernoulli(seed_scores[d]) ? 0 : 1;
      topic[d][n] = k;
      ++doc_topic[d][k];
      ++word_topic[docs[d][n]][k];
      ++topic_total[k];
    }
  }

  LdaEstimate est;
  est.doc_dist.assign(docs.size(), {0.0, 0.0});
  std::vector<std::array<double, 2>> word_acc(vocab, {0.0, 0.0});
  const std::size_t burn_in = iterations / 2;

  for (std::size_t sweep = 0; sweep < iterations; ++sweep) {
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (std::size_t n = 0; n < docs[d].size(); ++n) {
        const std::size_t w = docs[d][n];
        const int old = topic[d][n];
        --doc_topic[d][old];
        --word_topic[w][old];
        --topic_total[old];
        double p[2];
        for (int k = 0; k < 2; ++k) {
          p[k] = (static_cast<double>(doc_topic[d][k]) + alpha) *
                 (static_cast<double>(word_topic[w][k]) + beta) /
                 (static_cast<double>(topic_total[k]) + vbeta);
        }
        const int k = rng.uniform() * (p[0] + p[1]) < p[0] ? 0 : 1;
        topic[d][n] = k;
        ++doc_topic[d][k];
        ++word_topic[w][k];
        ++topic_total[k];
      }
    }
    for (const auto& c : doc_topic) est.min_count = std::min({est.min_count, c[0], c[1]});
    for (const auto& c : word_topic) est.min_count = std::min({est.min_count, c[0], c[1]});
    est.min_count = std::min({est.min_count, topic_total[0], topic_total[1]});

    if (sweep < burn_in) continue;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      const double denom = static_cast<double>(docs[d].size()) + 2 * alpha;
      est.doc_dist[d][0] += (static_cast<double>(doc_topic[d][0]) + alpha) / denom;
      est.doc_dist[d][1] += (static_cast<double>(doc_topic[d][1]) + alpha) / denom;
    }
    for (std::size_t w = 0; w < vocab; ++w) {
      const double l = static_cast<double>(word_topic[w][0]) + beta;
      const double f = static_cast<double>(word_topic[w][1]) + beta;
      word_acc[w][0] += l / (l + f);
      word_acc[w][1] += f / (l + f);
    }
  }

  const auto normalize = [](std::array<double, 2>& p) {
    const double s = p[0] + p[1];
    p[0] /= s;
    p[1] = 1.0 - p[0];
  };
  for (auto& p : est.doc_dist) normalize(p);
  for (std::size_t w = 0; w < vocab; ++w) {
    normalize(word_acc[w]);
    est.word_dist.emplace(words[w], word_acc[w]);
  }
  return est;
}

FigurativeDetector::FigurativeDetector(std::shared_ptr<const EmbeddingTable> table,
                                       std::vector<std::string> keywords, WordSet health_lexicon,
                                       DetectorOptions options, std::shared_ptr<const PosTagger> tagger)
    : table_(std::move(table)),
      keywords_(std::move(keywords)),
      health_(std::move(health_lexicon)),
      options_(options),
      tagger_(tagger ? std::move(tagger) : std::make_shared<RuleTagger>()) {
  if (!table_) throw std::invalid_argument("figurative detector needs a similarity table");
  classify(0.0, options_.threshold);
  for (const auto& k : keywords_) {
    if (reps_.contains(k)) continue;
    if (!table_->contains(k) || table_->vocab().lookup(k) <= Vocabulary::kUnk) continue;
    auto rep = build_literal_representation(*table_, k, options_.related_words);
    if (rep.related_words.empty()) continue;
    reps_.emplace(k, std::move(rep));
    active_.push_back(k);
  }
}

const LiteralRepresentation* FigurativeDetector::representation(std::string_view keyword) const {
  auto it = reps_.find(std::string(keyword));
  return it == reps_.end() ? nullptr : &it->second;
}

FigurativeVerdict FigurativeDetector::verdict(std::span<const std::string> tokens) const {
  FigurativeVerdict v;
  std::optional<std::size_t> best;
  double best_score = 0;
  std::unordered_map<std::string, double> cache;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto it = reps_.find(tokens[i]);
    if (it == reps_.end()) continue;
    auto [c, fresh] = cache.try_emplace(tokens[i], 0.0);
    if (fresh) c->second = literal_usage_score(tokens, it->second, *table_, options_.score);
    if (!best || c->second > best_score) {
      best = i;
      best_score = c->second;
    }
  }
  if (best) {
    const auto tags = tagger_->tag(tokens);
    v.literal_score = best_score;
    v.features = extract_features(tokens, *best, tags, health_);
    v.target_index = best;
  } else {
    v.literal_score = kUninformativeScore;
    v.features = extract_untargeted_features(tokens, health_);
  }
  v.label = classify(v.literal_score, options_.threshold);
  return v;
}

void write_verdicts(std::ostream& out, std::span<const std::string> doc_ids,
                    std::span<const FigurativeVerdict> verdicts) {
  if (doc_ids.size() != verdicts.size()) throw std::invalid_argument("one verdict per document id");
  char buf[32];
  for (std::size_t i = 0; i < verdicts.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", verdicts[i].literal_score);
    out << doc_ids[i] << '\t' << buf << '\t' << to_string(verdicts[i].label) << '\n';
  }
}

}  // namespace figphm
