#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "figphm/corpus.hpp"
#include "figphm/embeddings.hpp"

namespace figphm {

// Set of words related to a symptom keyword in embedding space.
struct LiteralRepresentation {
  std::string keyword;
  std::vector<std::string> related_words;
};

inline constexpr std::size_t kDefaultRelatedWords = 10;
inline constexpr double kDefaultFigurativeThreshold = 0.2;
// Score assigned when no content word survives filtering.
inline constexpr double kUninformativeScore = 0.5;

// Throws std::invalid_argument naming the keyword when it is not in the table.
LiteralRepresentation build_literal_representation(const EmbeddingTable& table, std::string_view keyword,
                                                   std::size_t k = kDefaultRelatedWords);

struct ScoreOptions {
  bool exclude_keyword = true;
};

// Mean over (content word, related word) pairs of max(0, cosine).
double literal_usage_score(std::span<const std::string> tokens, const LiteralRepresentation& rep,
                           const EmbeddingTable& table, const ScoreOptions& options = {});

// Universal part-of-speech tagset.
enum class Tag { NOUN, VERB, ADJ, ADV, PRON, DET, ADP, NUM, CONJ, PRT, PUNCT, X };
inline constexpr std::size_t kTagCount = 12;

std::string_view to_string(Tag t);

class PosTagger {
 public:
  virtual ~PosTagger() = default;
  virtual std::vector<Tag> tag(std::span<const std::string> tokens) const = 0;
};

// Closed-class lexicon, a small open-class lexicon and suffix rules; unknown
// words fall back to X.
class RuleTagger final : public PosTagger {
 public:
  RuleTagger();
  std::vector<Tag> tag(std::span<const std::string> tokens) const override;
  Tag tag_word(std::string_view word) const;

 private:
  std::unordered_map<std::string, Tag> lexicon_;
};

const std::vector<std::string>& subordinators();

struct LinguisticFeatures {
  double has_subordinate_clause = 0;
  std::array<double, kTagCount> left_pos{};
  std::array<double, kTagCount> right_pos{};
  double health_word_presence = 0;
  double health_word_count_norm = 0;

  static constexpr std::size_t kSize = 3 + 2 * kTagCount;
  std::vector<double> to_vector() const;
};

using WordSet = std::unordered_set<std::string>;

// Throws std::out_of_range for a bad target index and std::invalid_argument if
// tags and tokens differ in length.
LinguisticFeatures extract_features(std::span<const std::string> tokens, std::size_t target_index,
                                    std::span<const Tag> tags, const WordSet& health_lexicon);

// Features of a text with no symptom occurrence: neighbor blocks are zero and
// every token counts toward the health-word fields.
LinguisticFeatures extract_untargeted_features(std::span<const std::string> tokens,
                                               const WordSet& health_lexicon);

// One term per line, '#' starts a comment, blank lines ignored, lowercased.
std::vector<std::string> load_word_list(const std::filesystem::path& path);
std::vector<std::string> parse_word_list(std::istream& in);

UsageLabel classify(double score, double threshold = kDefaultFigurativeThreshold);

struct FigurativeVerdict {
  double literal_score = kUninformativeScore;
  UsageLabel label = UsageLabel::literal;
  LinguisticFeatures features;
  // Token position of the scored symptom occurrence, if any.
  std::optional<std::size_t> target_index;
};

struct LdaOptions {
  double alpha = 0.5;
  double beta = 0.1;
};

// Topic 0 is literal, topic 1 figurative.
struct LdaEstimate {
  std::unordered_map<std::string, std::array<double, 2>> word_dist;
  std::vector<std::array<double, 2>> doc_dist;
  // Smallest Gibbs count observed after any sweep; negative means corruption.
  std::int64_t min_count = std::numeric_limits<std::int64_t>::max();
};

// Two-topic collapsed Gibbs sampler. Token topics start literal with
// probability seed_scores[d]; the first half of the sweeps is burn-in and the
// rest are averaged.
LdaEstimate lda_estimate(const std::vector<std::vector<std::string>>& documents,
                         std::span<const double> seed_scores, std::size_t iterations, std::uint64_t seed,
                         const LdaOptions& options = {});

struct DetectorOptions {
  std::size_t related_words = kDefaultRelatedWords;
  double threshold = kDefaultFigurativeThreshold;
  ScoreOptions score;
};

// Scores symptom occurrences against per-keyword literal representations.
// Keywords missing from the similarity table are skipped.
class FigurativeDetector {
 public:
  FigurativeDetector(std::shared_ptr<const EmbeddingTable> table, std::vector<std::string> keywords,
                     WordSet health_lexicon, DetectorOptions options = {},
                     std::shared_ptr<const PosTagger> tagger = nullptr);

  // Every occurrence is scored and the most literal one decides the verdict
  // (ties go to the first occurrence). Texts without an occurrence get the
  // uninformative score.
  FigurativeVerdict verdict(std::span<const std::string> tokens) const;

  const std::vector<std::string>& keywords() const { return keywords_; }
  const std::vector<std::string>& active_keywords() const { return active_; }
  const DetectorOptions& options() const { return options_; }
  const LiteralRepresentation* representation(std::string_view keyword) const;

 private:
  std::shared_ptr<const EmbeddingTable> table_;
  std::vector<std::string> keywords_;
  std::vector<std::string> active_;
  std::unordered_map<std::string, LiteralRepresentation> reps_;
  WordSet health_;
  DetectorOptions options_;
  std::shared_ptr<const PosTagger> tagger_;
};

// doc_id TAB literal_score TAB label
void write_verdicts(std::ostream& out, std::span<const std::string> doc_ids,
                    std::span<const FigurativeVerdict> verdicts);

}  // namespace figphm
