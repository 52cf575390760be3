#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace figphm {

enum class Disease { alzheimers, heart_attack, parkinsons, cancer, depression, stroke, other };

enum class PhmLabel { phm, non_phm };

enum class UsageLabel { figurative, literal };

inline constexpr Disease kAllDiseases[] = {Disease::alzheimers, Disease::heart_attack,
                                           Disease::parkinsons, Disease::cancer,
                                           Disease::depression, Disease::stroke,
                                           Disease::other};

std::string_view to_string(Disease d);
std::string_view to_string(PhmLabel l);
std::string_view to_string(UsageLabel l);

// Strict parsers; throw DataError on unknown tokens.
Disease parse_disease(std::string_view s);
PhmLabel parse_phm_label(std::string_view s);
UsageLabel parse_usage_label(std::string_view s);

struct Document {
  std::string id;
  Disease disease = Disease::other;
  std::string raw_text;
  std::vector<std::string> tokens;
  PhmLabel label = PhmLabel::non_phm;
  std::vector<std::size_t> symptom_indices;
};

struct AnnotationPair {
  std::string item_id;
  UsageLabel label_a = UsageLabel::literal;
  UsageLabel label_b = UsageLabel::literal;
};

inline constexpr std::string_view kUrlToken = "<url>";
inline constexpr std::string_view kUserToken = "<user>";

bool is_sentinel(std::string_view token);

// Lowercases, replaces URLs and @-mentions with sentinels, strips '#' from
// hashtags and splits punctuation into separate tokens. Non-ASCII letters are
// kept byte-for-byte; Unicode punctuation from the Latin-1, General
// Punctuation and CJK Symbols blocks is split like ASCII punctuation.
std::vector<std::string> tokenize(std::string_view raw_text);

// Dataset TSV: id TAB disease TAB text TAB label, no header. Documents are
// tokenized on load; symptom_indices are left empty.
std::vector<Document> load_dataset(const std::filesystem::path& path);
std::vector<Document> parse_dataset(std::istream& in);
void write_dataset(std::ostream& out, std::span<const Document> docs);

// Drops documents whose token list is empty (garbled text).
std::vector<Document> drop_garbled(std::vector<Document> docs);

// Fills symptom_indices with positions of tokens found in `keywords`.
void mark_symptoms(Document& doc, const std::vector<std::string>& keywords);

// Vocabulary with PAD = 0 and UNK = 1 reserved.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  // Returns the index of `word`, inserting it if new.
  std::size_t add(std::string_view word);
  // Index of `word`, or kUnk.
  std::size_t lookup(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& word(std::size_t index) const { return words_.at(index); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  static Vocabulary from_documents(std::span<const Document> docs);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct PaddedSequence {
  std::vector<std::size_t> token_ids;
  std::size_t true_length = 0;

  friend bool operator==(const PaddedSequence&, const PaddedSequence&) = default;
  friend auto operator<=>(const PaddedSequence&, const PaddedSequence&) = default;
};

inline constexpr std::size_t kDefaultMaxSequenceLength = 50;

// Truncates to max_len, maps OOV to UNK and fills the tail with PAD.
// Throws std::invalid_argument for max_len == 0 or an empty token list.
PaddedSequence pad(std::span<const std::string> tokens, const Vocabulary& vocab,
                   std::size_t max_len);

// Annotation TSV: item_id TAB label_a TAB label_b.
std::vector<AnnotationPair> load_annotations(const std::filesystem::path& path);
std::vector<AnnotationPair> parse_annotations(std::istream& in);

double observed_agreement(std::span<const AnnotationPair> pairs);

// Cohen's kappa. Throws std::invalid_argument on empty input and DataError on
// degenerate marginals (chance agreement 1 without perfect agreement).
double cohen_kappa(std::span<const AnnotationPair> pairs);

// Splits a TSV line on single tabs.
std::vector<std::string> split_tabs(std::string_view line);

}  // namespace figphm
