#include "figphm/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "figphm/error.hpp"
#include "figphm/rng.hpp"

namespace figphm {

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw DataError("line " + std::to_string(line_no) + ": non-numeric value '" + std::string(s) + "'");
  }
  return v;
}

std::size_t parse_count(std::string_view s, std::size_t line_no) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("line " + std::to_string(line_no) + ": malformed header");
  }
  return v;
}

}  // namespace

TableFormat parse_table_format(std::string_view s) {
  if (s == "word2vec_text") return TableFormat::word2vec_text;
  if (s == "glove_text") return TableFormat::glove_text;
  throw ConfigError("unknown embedding format '" + std::string(s) + "'");
}

EmbeddingTable::EmbeddingTable(Vocabulary vocab, std::size_t dim)
    : vocab_(std::move(vocab)), dim_(dim), values_(vocab_.size() * dim, 0.0) {
  if (dim == 0) throw std::invalid_argument("embedding dimension must be at least 1");
}

std::span<const double> EmbeddingTable::vector(std::string_view word) const {
  if (!vocab_.contains(word)) throw std::out_of_range("word not in table: " + std::string(word));
  return row(vocab_.lookup(word));
}

bool EmbeddingTable::append(std::string_view word, std::span<const double> values) {
  if (values.size() != dim_) throw std::invalid_argument("row dimension mismatch");
  if (vocab_.contains(word)) return false;
  vocab_.add(word);
  values_.insert(values_.end(), values.begin(), values.end());
  return true;
}

EmbeddingTable parse_table(std::istream& in, TableFormat format, const LoadOptions& options,
                           LoadStats* stats) {
  LoadStats local;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  if (format == TableFormat::word2vec_text) {
    if (!std::getline(in, line)) return EmbeddingTable(Vocabulary{}, 1);
    ++line_no;
    const auto header = split_spaces(line);
    if (header.size() != 2) throw DataError("line 1: expected '<count> <dim>' header");
    parse_count(header[0], line_no);
    dim = parse_count(header[1], line_no);
    if (dim == 0) throw DataError("line 1: dimension must be at least 1");
  }

  std::optional<EmbeddingTable> table;
  if (dim > 0) table.emplace(Vocabulary{}, dim);
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_spaces(line);
    if (fields.empty()) continue;
    if (!table) {
      if (fields.size() < 2) throw DataError("line " + std::to_string(line_no) + ": no vector values");
      dim = fields.size() - 1;
      table.emplace(Vocabulary{}, dim);
    }
    if (fields.size() - 1 != dim) {
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) + " dims");
    }
    std::string_view word = fields[0];
    if (!options.prefix_filter.empty()) {
      if (!word.starts_with(options.prefix_filter)) {
        ++local.filtered;
        continue;
      }
      word.remove_prefix(options.prefix_filter.size());
    }
    row.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) row[j] = parse_double(fields[j + 1], line_no);
    if (!table->append(word, row)) ++local.duplicates;
  }
  if (stats) *stats = local;
  if (!table) return EmbeddingTable(Vocabulary{}, 1);
  return std::move(*table);
}

EmbeddingTable load_table(const std::filesystem::path& path, TableFormat format,
                          const LoadOptions& options, LoadStats* stats) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return parse_table(in, format, options, stats);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_table(std::ostream& out, const EmbeddingTable& table) {
  char buf[64];
  for (std::size_t i = Vocabulary::kUnk + 1; i < table.rows(); ++i) {
    out << table.vocab().word(i);
    for (double v : table.row(i)) {
      std::snprintf(buf, sizeof buf, " %.6f", v);
      out << buf;
    }
    out << '\n';
  }
}

EmbeddingTable random_table(std::span<const std::string> words, std::size_t dim, std::uint64_t seed) {
  if (words.empty()) throw std::invalid_argument("random_table needs a non-empty vocabulary");
  if (dim == 0) throw std::invalid_argument("embedding dimension must be at least 1");
  Vocabulary vocab;
  for (const auto& w : words) vocab.add(w);
  EmbeddingTable table(std::move(vocab), dim);
  Rng rng(seed);
  for (std::size_t i = Vocabulary::kUnk; i < table.rows(); ++i) {
    for (double& v : table.row(i)) v = rng.uniform(-kRandomInitRange, kRandomInitRange);
  }
  return table;
}

EmbeddingTable project_table(const EmbeddingTable& source, const Vocabulary& vocab, std::uint64_t seed) {
  EmbeddingTable table(vocab, source.dim());
  Rng rng(seed);
  for (std::size_t i = Vocabulary::kUnk; i < table.rows(); ++i) {
    auto dst = table.row(i);
    const auto& word = vocab.word(i);
    // Draw unconditionally so the random stream does not depend on coverage.
    for (double& v : dst) v = rng.uniform(-kRandomInitRange, kRandomInitRange);
    if (i > Vocabulary::kUnk && source.contains(word)) {
      const auto src = source.vector(word);
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  return table;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine: dimension mismatch");
  double dot = 0, nu = 0, nv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0 || nv == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

std::vector<Neighbor> nearest_neighbors(const EmbeddingTable& table, std::string_view word, std::size_t k) {
  const auto query = table.vector(word);
  const std::size_t qi = table.vocab().lookup(word);
  std::vector<Neighbor> all;
  for (std::size_t i = Vocabulary::kUnk + 1; i < table.rows(); ++i) {
    if (i == qi) continue;
    all.push_back({table.vocab().word(i), cosine(query, table.row(i))});
  }
  const std::size_t n = std::min(k, all.size());
  auto by_rank = [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.word < b.word;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), by_rank);
  all.resize(n);
  return all;
}

void OntologyGraph::add_node(const std::string& word) { adjacency_[word]; }

void OntologyGraph::add_edge(const std::string& a, const std::string& b) {
  add_node(a);
  add_node(b);
  if (a == b) return;
  adjacency_[a].insert(b);
  adjacency_[b].insert(a);
}

const std::set<std::string>& OntologyGraph::neighbors(const std::string& word) const {
  static const std::set<std::string> kEmpty;
  auto it = adjacency_.find(word);
  return it == adjacency_.end() ? kEmpty : it->second;
}

std::size_t OntologyGraph::edge_count() const {
  std::size_t n = 0;
  for (const auto& [w, nbrs] : adjacency_) n += nbrs.size();
  return n / 2;
}

OntologyGraph parse_ontology(std::istream& in) {
  OntologyGraph graph;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_spaces(line);
    if (fields.empty()) continue;
    const std::string head(fields[0]);
    graph.add_node(head);
    for (std::size_t i = 1; i < fields.size(); ++i) graph.add_edge(head, std::string(fields[i]));
  }
  return graph;
}

OntologyGraph load_ontology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_ontology(in);
}

BetaMode parse_beta_mode(std::string_view s) {
  if (s == "inverse_degree") return BetaMode::inverse_degree;
  if (s == "uniform") return BetaMode::uniform;
  throw ConfigError("unknown beta mode '" + std::string(s) + "'");
}

std::vector<std::vector<std::size_t>> retrofit_neighbors(const EmbeddingTable& table,
                                                         const OntologyGraph& graph) {
  std::vector<std::vector<std::size_t>> nbrs(table.rows());
  const auto& vocab = table.vocab();
  for (std::size_t i = Vocabulary::kUnk + 1; i < table.rows(); ++i) {
    for (const auto& n : graph.neighbors(vocab.word(i))) {
      if (vocab.contains(n)) {
        const std::size_t j = vocab.lookup(n);
        if (j > Vocabulary::kUnk) nbrs[i].push_back(j);
      }
    }
    std::sort(nbrs[i].begin(), nbrs[i].end());
  }
  return nbrs;
}

EmbeddingTable retrofit(const EmbeddingTable& table, const OntologyGraph& graph,
                        const RetrofitOptions& options) {
  if (!(options.alpha > 0)) throw std::invalid_argument("retrofit: alpha must be positive");
  EmbeddingTable out = table;
  const auto nbrs = retrofit_neighbors(table, graph);
  const std::size_t dim = table.dim();
  std::vector<double> acc(dim);
  for (std::size_t it = 0; it < options.iterations; ++it) {
    for (std::size_t i = 0; i < out.rows(); ++i) {
      if (nbrs[i].empty()) continue;
      const double beta =
          options.beta_mode == BetaMode::inverse_degree ? 1.0 / static_cast<double>(nbrs[i].size()) : 1.0;
      const auto original = table.row(i);
      for (std::size_t d = 0; d < dim; ++d) acc[d] = options.alpha * original[d];
      for (std::size_t j : nbrs[i]) {
        const auto q = out.row(j);
        for (std::size_t d = 0; d < dim; ++d) acc[d] += beta * q[d];
      }
      const double norm = options.alpha + beta * static_cast<double>(nbrs[i].size());
      auto dst = out.row(i);
      for (std::size_t d = 0; d < dim; ++d) dst[d] = acc[d] / norm;
    }
  }
  return out;
}

double retrofit_objective(const EmbeddingTable& original, const EmbeddingTable& current,
                          const OntologyGraph& graph, const RetrofitOptions& options) {
  const auto nbrs = retrofit_neighbors(original, graph);
  double total = 0;
  for (std::size_t i = 0; i < original.rows(); ++i) {
    if (nbrs[i].empty()) continue;
    const double weight =
        options.beta_mode == BetaMode::inverse_degree ? static_cast<double>(nbrs[i].size()) : 1.0;
    const auto q = current.row(i);
    const auto q0 = original.row(i);
    double self = 0;
    for (std::size_t d = 0; d < q.size(); ++d) self += (q[d] - q0[d]) * (q[d] - q0[d]);
    total += weight * options.alpha * self;
    for (std::size_t j : nbrs[i]) {
      if (j <= i) continue;
      const auto r = current.row(j);
      for (std::size_t d = 0; d < q.size(); ++d) total += (q[d] - r[d]) * (q[d] - r[d]);
    }
  }
  return total;
}

}  // namespace figphm
