#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "figphm/corpus.hpp"

namespace figphm {

enum class TableFormat { word2vec_text, glove_text };

TableFormat parse_table_format(std::string_view s);

// Dense row-major |V| x dim table keyed by a Vocabulary. Row kPad is all
// zeros; row kUnk is whatever the constructor put there (zeros for loaded
// tables, random for random_table).
class EmbeddingTable {
 public:
  EmbeddingTable(Vocabulary vocab, std::size_t dim);

  const Vocabulary& vocab() const { return vocab_; }
  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return vocab_.size(); }

  std::span<const double> row(std::size_t index) const {
    return {values_.data() + index * dim_, dim_};
  }
  std::span<double> row(std::size_t index) { return {values_.data() + index * dim_, dim_}; }

  bool contains(std::string_view word) const { return vocab_.contains(word); }
  // Throws std::out_of_range for unknown words.
  std::span<const double> vector(std::string_view word) const;

  // Appends a row; returns false (and leaves the table unchanged) if the word
  // is already present.
  bool append(std::string_view word, std::span<const double> values);

  const std::vector<double>& values() const { return values_; }

 private:
  Vocabulary vocab_;
  std::size_t dim_;
  std::vector<double> values_;
};

struct LoadOptions {
  // When non-empty, only words starting with this prefix are kept and the
  // prefix is removed (e.g. "/c/en/" for Numberbatch).
  std::string prefix_filter;
};

struct LoadStats {
  std::size_t duplicates = 0;
  std::size_t filtered = 0;
};

EmbeddingTable load_table(const std::filesystem::path& path, TableFormat format,
                          const LoadOptions& options = {}, LoadStats* stats = nullptr);
EmbeddingTable parse_table(std::istream& in, TableFormat format, const LoadOptions& options = {},
                           LoadStats* stats = nullptr);

// glove_text with 6 decimals; reserved PAD/UNK rows are not written.
void write_table(std::ostream& out, const EmbeddingTable& table);

inline constexpr double kRandomInitRange = 0.25;

// Entries uniform on [-0.25, 0.25]; PAD row zero.
EmbeddingTable random_table(std::span<const std::string> words, std::size_t dim, std::uint64_t seed);

// Table over `vocab` with rows copied from `source` where present and drawn
// uniformly on [-0.25, 0.25] otherwise. PAD row zero.
EmbeddingTable project_table(const EmbeddingTable& source, const Vocabulary& vocab, std::uint64_t seed);

// u.v / (|u||v|); 0 when either vector is all-zero. Throws
// std::invalid_argument on a dimension mismatch.
double cosine(std::span<const double> u, std::span<const double> v);

struct Neighbor {
  std::string word;
  double similarity;
};

// The k most cosine-similar words to `word`, excluding the word itself and the
// reserved rows. Ties are broken by ascending word. Throws std::out_of_range if
// `word` is not in the table.
std::vector<Neighbor> nearest_neighbors(const EmbeddingTable& table, std::string_view word, std::size_t k);

// Undirected word graph without self-loops.
class OntologyGraph {
 public:
  void add_node(const std::string& word);
  void add_edge(const std::string& a, const std::string& b);

  const std::set<std::string>& neighbors(const std::string& word) const;
  bool contains(const std::string& word) const { return adjacency_.contains(word); }
  std::size_t node_count() const { return adjacency_.size(); }
  std::size_t edge_count() const;
  const std::map<std::string, std::set<std::string>>& adjacency() const { return adjacency_; }

 private:
  std::map<std::string, std::set<std::string>> adjacency_;
};

// Lexicon format: `head neighbor1 neighbor2 ...` per line.
OntologyGraph load_ontology(const std::filesystem::path& path);
OntologyGraph parse_ontology(std::istream& in);

enum class BetaMode {
  inverse_degree,  // beta_ij = 1 / |N(i)|
  uniform,         // beta_ij = 1
};

BetaMode parse_beta_mode(std::string_view s);

struct RetrofitOptions {
  std::size_t iterations = 10;
  double alpha = 1.0;
  BetaMode beta_mode = BetaMode::inverse_degree;
};

// Fixed-point retrofitting toward ontology neighbors. Only in-vocabulary
// neighbors count; words without any keep their vectors. Sweeps update rows in
// ascending index order, reading already-updated rows.
EmbeddingTable retrofit(const EmbeddingTable& table, const OntologyGraph& graph,
                        const RetrofitOptions& options = {});

// Per-row in-vocabulary neighbor lists used by retrofit (sorted, unique).
std::vector<std::vector<std::size_t>> retrofit_neighbors(const EmbeddingTable& table,
                                                         const OntologyGraph& graph);

// Energy that every retrofit sweep does not increase:
//   sum_i c_i * alpha * |q_i - q^_i|^2 + sum_{undirected i~j} w_ij |q_i - q_j|^2
// uniform: c_i = 1, w_ij = 1. inverse_degree: c_i = |N(i)|, w_ij = 1, which is
// |N(i)| times the per-node update objective with beta_ij = 1/|N(i)|.
double retrofit_objective(const EmbeddingTable& original, const EmbeddingTable& current,
                          const OntologyGraph& graph, const RetrofitOptions& options);

}  // namespace figphm
