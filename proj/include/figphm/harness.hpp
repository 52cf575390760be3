#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "figphm/corpus.hpp"
#include "figphm/embeddings.hpp"
#include "figphm/figurative.hpp"
#include "figphm/phm.hpp"

namespace figphm {

// `key = value` lines grouped under `[section]` headers. Keys before the first
// header belong to the "" section. '#' and ';' start comments.
class ConfigFile {
 public:
  using Section = std::map<std::string, std::string>;

  static ConfigFile parse(std::istream& in);
  static ConfigFile load(const std::filesystem::path& path);

  bool has_section(const std::string& name) const { return sections_.contains(name); }
  const Section& section(const std::string& name) const;
  // Sections in file order.
  const std::vector<std::string>& section_names() const { return order_; }

 private:
  std::map<std::string, Section> sections_;
  std::vector<std::string> order_;
};

struct EmbeddingSpec {
  enum class Source { random, file, retrofit };
  std::string name;
  Source source = Source::random;
  std::size_t dim = 50;  // random only
  std::filesystem::path file;
  TableFormat format = TableFormat::glove_text;
  std::string prefix_filter;
  std::filesystem::path ontology;  // retrofit only
  RetrofitOptions retrofit;
};

struct FigurativeSettings {
  std::filesystem::path similarity;  // embedding table used for literal representations
  TableFormat similarity_format = TableFormat::glove_text;
  std::string similarity_prefix_filter;
  std::filesystem::path keywords;
  std::filesystem::path health_lexicon;
  std::size_t related_words = kDefaultRelatedWords;
  double threshold = kDefaultFigurativeThreshold;
  bool exclude_keyword = true;
  bool use_lda = false;
  std::size_t lda_iterations = 200;
  // Documents whose posterior literal mass falls below this are figurative.
  double lda_threshold = 0.5;
  // Probability of flipping each verdict's label bit before it reaches the
  // classifiers. The raw score is left untouched.
  double verdict_noise = 0.0;
  bool include_raw_score = true;
};

struct ExperimentConfig {
  std::filesystem::path dataset;
  std::vector<EmbeddingSpec> embeddings;
  FigurativeSettings figurative;
  CnnConfig phmd = phmd_config();
  CnnConfig feataug = feataug_config();
  TrainOptions train;
  std::size_t folds = 10;
  std::uint64_t seed = 1;
  // Embedding whose per-disease rows fill the disease table; first spec if empty.
  std::string disease_table_embedding;
};

// Relative paths are resolved against base_dir. Throws ConfigError.
ExperimentConfig parse_experiment_config(const ConfigFile& file, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Checks ranges and that every referenced file exists. Throws ConfigError.
void validate(const ExperimentConfig& config);

struct Metrics {
  double precision = 0;
  double recall = 0;
  double f_score = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  // Set when a denominator was zero and the value fell back to 0.
  bool precision_undefined = false;
  bool recall_undefined = false;

  std::size_t total() const { return tp + fp + fn + tn; }
};

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);
// Throws std::invalid_argument on empty input or a length mismatch.
Metrics compute_metrics(std::span<const PhmLabel> predictions, std::span<const PhmLabel> golds,
                        PhmLabel positive = PhmLabel::phm);
Metrics compute_metrics(std::span<const UsageLabel> predictions, std::span<const UsageLabel> golds,
                        UsageLabel positive = UsageLabel::figurative);

// Indices into `corpus`, each fold sorted ascending. Strata are
// (disease, label) pairs; within a stratum fold sizes differ by at most one.
std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const Document> corpus, std::size_t k,
                                                       std::uint64_t seed);

enum class Approach { phmd, pipeline, feataug };

std::string_view to_string(Approach a);
std::string_view display_name(Approach a);
Approach parse_approach(std::string_view s);

struct ReportRecord {
  std::string approach;
  std::string embedding;
  std::string scope;  // "all", "fold:N", "disease:NAME"
  Metrics metrics;
  bool mean = false;  // P/R/F are arithmetic means over embeddings, counts are sums
};

struct ExperimentReport {
  std::vector<std::string> embeddings;
  std::vector<Approach> approaches;
  std::vector<ReportRecord> records;
  std::vector<std::string> doc_ids;
  std::vector<FigurativeVerdict> verdicts;
  // (embedding, approach) -> one prediction per document, corpus order.
  std::map<std::pair<std::string, Approach>, std::vector<Prediction>> predictions;
  std::string disease_table_embedding;
};

// Everything run_experiment needs once files are loaded.
struct ExperimentData {
  std::vector<Document> documents;
  // Tables share the vocabulary built from `documents`.
  std::vector<std::pair<std::string, EmbeddingTable>> embeddings;
  std::vector<FigurativeVerdict> verdicts;
};

std::vector<FigurativeVerdict> apply_verdict_noise(std::vector<FigurativeVerdict> verdicts, double rate,
                                                   std::uint64_t seed);

FigurativeDetector make_detector(const FigurativeSettings& settings);
// Score-only verdicts, relabelled by the LDA posterior when use_lda is set.
std::vector<FigurativeVerdict> figurative_verdicts(std::span<const Document> docs,
                                                   const FigurativeDetector& detector,
                                                   const FigurativeSettings& settings, std::uint64_t seed);
// Loads and tokenizes the dataset, builds every embedding table and the
// (noised) verdicts.
ExperimentData prepare_experiment(const ExperimentConfig& config);

struct RunOptions {
  std::size_t jobs = 1;
  std::vector<Approach> approaches{Approach::phmd, Approach::pipeline, Approach::feataug};
};

ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                const RunOptions& options = {});
ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

const ReportRecord* find_record(std::span<const ReportRecord> records, std::string_view approach,
                                std::string_view embedding, std::string_view scope);

// One record per line; see write_report_records for the column order.
void write_report_records(std::ostream& out, std::span<const ReportRecord> records);
std::vector<ReportRecord> parse_report_records(std::istream& in);
// Aligned text tables: per-embedding P/R/F, averages with delta F, per disease.
std::string render_tables(std::span<const ReportRecord> records, std::string_view disease_embedding = {});
// report.tsv, report.txt, verdicts.tsv and predictions/<embedding>.<approach>.tsv.
void write_report(const std::filesystem::path& dir, const ExperimentReport& report);

struct FigurativeEvaluation {
  Metrics score_only;
  std::optional<Metrics> with_lda;
};

// Gold file: doc_id TAB figurative|literal.
std::vector<std::pair<std::string, UsageLabel>> load_figurative_gold(const std::filesystem::path& path);

FigurativeEvaluation evaluate_figurative(std::span<const std::pair<Document, UsageLabel>> labeled,
                                         const FigurativeDetector& detector, const FigurativeSettings& settings,
                                         std::uint64_t seed);
std::string render_figurative_evaluation(const FigurativeEvaluation& evaluation);

}  // namespace figphm
