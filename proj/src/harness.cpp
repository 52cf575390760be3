#include "figphm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "figphm/error.hpp"
#include "figphm/rng.hpp"

namespace figphm {

namespace fs = std::filesystem;

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

double parse_double(std::string_view s, std::string_view what) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(std::string(what) + ": expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

std::uint64_t parse_uint(std::string_view s, std::string_view what) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(std::string(what) + ": expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

bool parse_bool(std::string_view s, std::string_view what) {
  if (s == "true" || s == "yes" || s == "1") return true;
  if (s == "false" || s == "no" || s == "0") return false;
  throw ConfigError(std::string(what) + ": expected true or false, got '" + std::string(s) + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(std::string_view s, F parse_one) {
  std::vector<T> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    out.push_back(parse_one(trim(s.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

// Reads keys out of one section and complains about whatever is left over.
class SectionReader {
 public:
  SectionReader(const ConfigFile::Section& section, std::string name)
      : section_(section), name_(std::move(name)) {}

  const std::string* get(const std::string& key) {
    seen_.insert(key);
    const auto it = section_.find(key);
    return it == section_.end() ? nullptr : &it->second;
  }
  std::string where(const std::string& key) const {
    return name_.empty() ? key : "[" + name_ + "] " + key;
  }
  void finish() const {
    for (const auto& [key, value] : section_) {
      if (!seen_.contains(key)) throw ConfigError("unknown key " + where(key));
    }
  }

  void read(const std::string& key, std::size_t& out) {
    if (auto v = get(key)) out = parse_uint(*v, where(key));
  }
  void read(const std::string& key, double& out) {
    if (auto v = get(key)) out = parse_double(*v, where(key));
  }
  void read(const std::string& key, bool& out) {
    if (auto v = get(key)) out = parse_bool(*v, where(key));
  }
  void read(const std::string& key, std::string& out) {
    if (auto v = get(key)) out = *v;
  }
  void read_path(const std::string& key, fs::path& out, const fs::path& base) {
    if (auto v = get(key)) out = v->empty() ? fs::path() : base / *v;
  }

 private:
  const ConfigFile::Section& section_;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in) {
  ConfigFile cfg;
  cfg.sections_[""];
  cfg.order_.push_back("");
  std::string current;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find_first_of("#;"); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      current = std::string(trim(s.substr(1, s.size() - 2)));
      if (current.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      if (cfg.sections_.contains(current)) {
        throw ConfigError("line " + std::to_string(lineno) + ": duplicate section [" + current + "]");
      }
      cfg.sections_[current];
      cfg.order_.push_back(current);
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(trim(s.substr(0, eq)));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    auto& sec = cfg.sections_[current];
    if (sec.contains(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
    sec[key] = std::string(trim(s.substr(eq + 1)));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return parse(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

const ConfigFile::Section& ConfigFile::section(const std::string& name) const {
  static const Section empty;
  const auto it = sections_.find(name);
  return it == sections_.end() ? empty : it->second;
}

namespace {

void read_dropout(SectionReader& r, const std::string& key, CnnConfig& c) {
  if (auto v = r.get(key)) {
    c.dropout_rates = parse_list<double>(*v, [&](std::string_view x) { return parse_double(x, r.where(key)); });
  }
}

EmbeddingSpec parse_embedding(const ConfigFile::Section& section, const std::string& header,
                              const std::string& name, const fs::path& base) {
  SectionReader r(section, header);
  EmbeddingSpec spec;
  spec.name = name;
  const std::string* source = r.get("source");
  if (!source) throw ConfigError("[" + header + "] needs a source");
  if (*source == "random") {
    spec.source = EmbeddingSpec::Source::random;
  } else if (*source == "file") {
    spec.source = EmbeddingSpec::Source::file;
  } else if (*source == "retrofit") {
    spec.source = EmbeddingSpec::Source::retrofit;
  } else {
    throw ConfigError(r.where("source") + ": expected random, file or retrofit");
  }
  r.read("dim", spec.dim);
  r.read_path("file", spec.file, base);
  if (auto v = r.get("format")) spec.format = parse_table_format(*v);
  r.read("prefix_filter", spec.prefix_filter);
  r.read_path("ontology", spec.ontology, base);
  r.read("iterations", spec.retrofit.iterations);
  r.read("alpha", spec.retrofit.alpha);
  if (auto v = r.get("beta")) spec.retrofit.beta_mode = parse_beta_mode(*v);
  r.finish();
  return spec;
}

}  // namespace

ExperimentConfig parse_experiment_config(const ConfigFile& file, const fs::path& base) {
  ExperimentConfig c;
  {
    SectionReader r(file.section(""), "");
    r.read_path("dataset", c.dataset, base);
    r.read("folds", c.folds);
    std::size_t seed = c.seed;
    r.read("seed", seed);
    c.seed = seed;
    r.read("disease_table_embedding", c.disease_table_embedding);
    r.finish();
  }
  if (file.has_section("figurative")) {
    SectionReader r(file.section("figurative"), "figurative");
    auto& f = c.figurative;
    r.read_path("similarity", f.similarity, base);
    if (auto v = r.get("similarity_format")) f.similarity_format = parse_table_format(*v);
    r.read("similarity_prefix_filter", f.similarity_prefix_filter);
    r.read_path("keywords", f.keywords, base);
    r.read_path("health_lexicon", f.health_lexicon, base);
    r.read("k", f.related_words);
    r.read("threshold", f.threshold);
    r.read("exclude_keyword", f.exclude_keyword);
    r.read("use_lda", f.use_lda);
    r.read("lda_iterations", f.lda_iterations);
    r.read("lda_threshold", f.lda_threshold);
    r.read("verdict_noise", f.verdict_noise);
    r.read("include_raw_score", f.include_raw_score);
    r.finish();
  }
  if (file.has_section("model")) {
    SectionReader r(file.section("model"), "model");
    CnnConfig shared;
    r.read("max_sequence_length", shared.max_sequence_length);
    r.read("filters", shared.filters);
    if (auto v = r.get("kernels")) {
      shared.kernel_widths =
          parse_list<std::size_t>(*v, [&](std::string_view x) { return parse_uint(x, r.where("kernels")); });
    }
    r.read("pool", shared.pool);
    if (auto v = r.get("layout")) {
      try {
        shared.layout = parse_dropout_layout(*v);
      } catch (const ConfigError& e) {
        throw ConfigError(r.where("layout") + ": " + e.what());
      }
    }
    r.read("trainable_embedding", shared.trainable_embedding);
    r.read("init_range", shared.init_range);
    r.read("aux_kernel", shared.aux_kernel_width);
    r.read("aux_filters", shared.aux_filters);
    r.read("aux_pool", shared.aux_pool);
    CnnConfig phmd = shared;
    phmd.dropout_rates = phmd_config().dropout_rates;
    CnnConfig feataug = shared;
    feataug.dropout_rates = feataug_config().dropout_rates;
    read_dropout(r, "phmd_dropout", phmd);
    read_dropout(r, "feataug_dropout", feataug);
    c.phmd = phmd;
    c.feataug = feataug;
    r.read("epochs", c.train.epochs);
    r.read("batch_size", c.train.batch_size);
    r.read("learning_rate", c.train.learning_rate);
    r.finish();
  }
  std::set<std::string> names;
  for (const auto& header : file.section_names()) {
    if (header.empty() || header == "figurative" || header == "model") continue;
    constexpr std::string_view kPrefix = "embedding ";
    if (!header.starts_with(kPrefix)) throw ConfigError("unknown section [" + header + "]");
    const std::string name(trim(std::string_view(header).substr(kPrefix.size())));
    if (name.empty() || name.find_first_of(" \t/.") != std::string::npos) {
      throw ConfigError("[" + header + "]: embedding names must be non-empty without spaces, dots or slashes");
    }
    if (!names.insert(name).second) throw ConfigError("duplicate embedding " + name);
    c.embeddings.push_back(parse_embedding(file.section(header), header, name, base));
  }
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  const ConfigFile file = ConfigFile::load(path);
  try {
    return parse_experiment_config(file, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void validate(const ExperimentConfig& c) {
  auto need_file = [](const fs::path& p, const std::string& what) {
    if (p.empty()) throw ConfigError(what + " is not set");
    if (!fs::is_regular_file(p)) throw ConfigError(what + " does not exist: " + p.string());
  };
  need_file(c.dataset, "dataset");
  if (c.folds < 2) throw ConfigError("folds must be at least 2");
  if (c.embeddings.empty()) throw ConfigError("at least one [embedding NAME] section is required");
  const auto& f = c.figurative;
  if (!(f.threshold > 0 && f.threshold < 1)) throw ConfigError("[figurative] threshold must lie in (0, 1)");
  if (!(f.lda_threshold > 0 && f.lda_threshold < 1)) throw ConfigError("[figurative] lda_threshold must lie in (0, 1)");
  if (!(f.verdict_noise >= 0 && f.verdict_noise <= 1)) throw ConfigError("[figurative] verdict_noise must lie in [0, 1]");
  if (f.related_words == 0) throw ConfigError("[figurative] k must be at least 1");
  if (f.use_lda && f.lda_iterations == 0) throw ConfigError("[figurative] lda_iterations must be at least 1");
  need_file(f.similarity, "[figurative] similarity");
  need_file(f.keywords, "[figurative] keywords");
  need_file(f.health_lexicon, "[figurative] health_lexicon");
  for (const CnnConfig* m : {&c.phmd, &c.feataug}) {
    if (m->kernel_widths.empty() || m->filters == 0 || m->pool == 0) {
      throw ConfigError("[model] kernels, filters and pool must be non-empty and positive");
    }
    if (m->dropout_rates.size() != m->kernel_widths.size()) {
      throw ConfigError("[model] each dropout list needs one rate per kernel");
    }
    for (double r : m->dropout_rates) {
      if (!(r >= 0 && r < 1)) throw ConfigError("[model] dropout rates must lie in [0, 1)");
    }
    const std::size_t widest = *std::max_element(m->kernel_widths.begin(), m->kernel_widths.end());
    if (m->layout == DropoutLayout::positional && m->max_sequence_length < widest + m->pool - 1) {
      throw ConfigError("[model] max_sequence_length " + std::to_string(m->max_sequence_length) +
                        " is too short for kernel " + std::to_string(widest) + " and pool " +
                        std::to_string(m->pool));
    }
    if (!(m->init_range > 0)) throw ConfigError("[model] init_range must be positive");
  }
  if (c.train.epochs == 0 || c.train.batch_size == 0) throw ConfigError("[model] epochs and batch_size must be positive");
  if (!(c.train.learning_rate > 0)) throw ConfigError("[model] learning_rate must be positive");
  for (const auto& e : c.embeddings) {
    const std::string where = "[embedding " + e.name + "]";
    switch (e.source) {
      case EmbeddingSpec::Source::random:
        if (e.dim == 0) throw ConfigError(where + " dim must be at least 1");
        break;
      case EmbeddingSpec::Source::retrofit:
        need_file(e.ontology, where + " ontology");
        if (!(e.retrofit.alpha > 0)) throw ConfigError(where + " alpha must be positive");
        [[fallthrough]];
      case EmbeddingSpec::Source::file:
        need_file(e.file, where + " file");
        break;
    }
  }
  if (!c.disease_table_embedding.empty() &&
      std::none_of(c.embeddings.begin(), c.embeddings.end(),
                   [&](const auto& e) { return e.name == c.disease_table_embedding; })) {
    throw ConfigError("disease_table_embedding names an unknown embedding: " + c.disease_table_embedding);
  }
}

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.precision_undefined = tp + fp == 0;
  m.recall_undefined = tp + fn == 0;
  m.precision = m.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = m.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f_score = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

namespace {

template <typename L>
Metrics compute_metrics_impl(std::span<const L> predictions, std::span<const L> golds, L positive) {
  if (predictions.size() != golds.size()) {
    throw std::invalid_argument("predictions and golds differ in length (" + std::to_string(predictions.size()) +
                                " vs " + std::to_string(golds.size()) + ")");
  }
  if (predictions.empty()) throw std::invalid_argument("cannot compute metrics on an empty set");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool p = predictions[i] == positive;
    const bool g = golds[i] == positive;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
    tn += !p && !g;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

}  // namespace

Metrics compute_metrics(std::span<const PhmLabel> predictions, std::span<const PhmLabel> golds, PhmLabel positive) {
  return compute_metrics_impl(predictions, golds, positive);
}

Metrics compute_metrics(std::span<const UsageLabel> predictions, std::span<const UsageLabel> golds,
                        UsageLabel positive) {
  return compute_metrics_impl(predictions, golds, positive);
}

std::vector<std::vector<std::size_t>> stratified_kfold(std::span<const Document> corpus, std::size_t k,
                                                       std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k must be at least 2");
  if (k > corpus.size()) {
    throw std::invalid_argument("k = " + std::to_string(k) + " exceeds corpus size " + std::to_string(corpus.size()));
  }
  std::map<std::pair<Disease, PhmLabel>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < corpus.size(); ++i) strata[{corpus[i].disease, corpus[i].label}].push_back(i);

  std::vector<std::vector<std::size_t>> folds(k);
  // Rotating the starting fold across strata keeps overall fold sizes within
  // one of each other as well.
  std::size_t next = 0;
  for (auto& [key, members] : strata) {
    const std::string tag = std::string(to_string(key.first)) + "/" + std::string(to_string(key.second));
    Rng rng(derive_seed(seed, tag, 0));
    rng.shuffle(members.begin(), members.end());
    for (std::size_t idx : members) {
      folds[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::string_view to_string(Approach a) {
  switch (a) {
    case Approach::phmd: return "phmd";
    case Approach::pipeline: return "pipeline";
    case Approach::feataug: return "feataug";
  }
  return "?";
}

std::string_view display_name(Approach a) {
  switch (a) {
    case Approach::phmd: return "PHMD";
    case Approach::pipeline: return "+Pipeline";
    case Approach::feataug: return "+FeatAug";
  }
  return "?";
}

Approach parse_approach(std::string_view s) {
  if (s == "phmd") return Approach::phmd;
  if (s == "pipeline") return Approach::pipeline;
  if (s == "feataug") return Approach::feataug;
  throw ConfigError("unknown approach '" + std::string(s) + "'");
}

std::vector<FigurativeVerdict> apply_verdict_noise(std::vector<FigurativeVerdict> verdicts, double rate,
                                                   std::uint64_t seed) {
  if (rate <= 0) return verdicts;
  Rng rng(derive_seed(seed, "verdict-noise", 0));
  for (auto& v : verdicts) {
    if (rng.bernoulli(rate)) {
      v.label = v.label == UsageLabel::figurative ? UsageLabel::literal : UsageLabel::figurative;
    }
  }
  return verdicts;
}

FigurativeDetector make_detector(const FigurativeSettings& s) {
  LoadOptions opts;
  opts.prefix_filter = s.similarity_prefix_filter;
  auto table = std::make_shared<const EmbeddingTable>(load_table(s.similarity, s.similarity_format, opts));
  const auto lexicon = load_word_list(s.health_lexicon);
  DetectorOptions d;
  d.related_words = s.related_words;
  d.threshold = s.threshold;
  d.score.exclude_keyword = s.exclude_keyword;
  return FigurativeDetector(std::move(table), load_word_list(s.keywords), WordSet(lexicon.begin(), lexicon.end()), d);
}

std::vector<FigurativeVerdict> figurative_verdicts(std::span<const Document> docs, const FigurativeDetector& detector,
                                                   const FigurativeSettings& settings, std::uint64_t seed) {
  std::vector<FigurativeVerdict> verdicts;
  verdicts.reserve(docs.size());
  for (const auto& d : docs) verdicts.push_back(detector.verdict(d.tokens));
  if (settings.use_lda && !docs.empty()) {
    std::vector<std::vector<std::string>> tokens;
    std::vector<double> seeds;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      tokens.push_back(docs[i].tokens);
      seeds.push_back(verdicts[i].literal_score);
    }
    const auto lda = lda_estimate(tokens, seeds, settings.lda_iterations, derive_seed(seed, "lda", 0));
    for (std::size_t i = 0; i < docs.size(); ++i) {
      verdicts[i].literal_score = lda.doc_dist[i][0];
      verdicts[i].label = lda.doc_dist[i][0] < settings.lda_threshold ? UsageLabel::figurative : UsageLabel::literal;
    }
  }
  return verdicts;
}

namespace {

EmbeddingTable build_table(const EmbeddingSpec& spec, const Vocabulary& vocab, std::uint64_t seed) {
  const std::uint64_t s = derive_seed(seed, spec.name, 0);
  if (spec.source == EmbeddingSpec::Source::random) return random_table(vocab.words(), spec.dim, s);
  LoadOptions opts;
  opts.prefix_filter = spec.prefix_filter;
  EmbeddingTable source = load_table(spec.file, spec.format, opts);
  if (spec.source == EmbeddingSpec::Source::retrofit) {
    source = retrofit(source, load_ontology(spec.ontology), spec.retrofit);
  }
  return project_table(source, vocab, s);
}

}  // namespace

ExperimentData prepare_experiment(const ExperimentConfig& config) {
  validate(config);
  ExperimentData data;
  data.documents = drop_garbled(load_dataset(config.dataset));
  if (data.documents.size() < config.folds) {
    throw DataError(config.dataset.string() + ": " + std::to_string(data.documents.size()) +
                    " usable documents cannot fill " + std::to_string(config.folds) + " folds");
  }
  const auto keywords = load_word_list(config.figurative.keywords);
  for (auto& d : data.documents) mark_symptoms(d, keywords);
  const Vocabulary vocab = Vocabulary::from_documents(data.documents);
  for (const auto& spec : config.embeddings) {
    data.embeddings.emplace_back(spec.name, build_table(spec, vocab, config.seed));
  }
  const FigurativeDetector detector = make_detector(config.figurative);
  data.verdicts = apply_verdict_noise(figurative_verdicts(data.documents, detector, config.figurative, config.seed),
                                      config.figurative.verdict_noise, config.seed);
  return data;
}

namespace {

struct CellOutput {
  // approach -> (doc index, prediction) for the held-out fold
  std::map<Approach, std::vector<std::pair<std::size_t, Prediction>>> predictions;
};

bool wants(const RunOptions& o, Approach a) {
  return std::find(o.approaches.begin(), o.approaches.end(), a) != o.approaches.end();
}

CellOutput run_cell(const ExperimentConfig& config, const ExperimentData& data, const EmbeddingTable& table,
                    std::string_view name, std::size_t fold, const std::vector<std::vector<std::size_t>>& folds,
                    const RunOptions& options) {
  const auto& docs = data.documents;
  const auto& test = folds[fold];
  std::vector<bool> is_test(docs.size(), false);
  for (std::size_t i : test) is_test[i] = true;

  const std::uint64_t cell_seed = derive_seed(config.seed, name, fold);
  const std::uint64_t model_seed = splitmix64(cell_seed ^ 1);
  CellOutput out;

  const bool need_phmd = wants(options, Approach::phmd) || wants(options, Approach::pipeline);
  if (need_phmd) {
    std::vector<TrainingExample> train_set;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (is_test[i]) continue;
      train_set.push_back({pad(docs[i].tokens, table.vocab(), config.phmd.max_sequence_length), docs[i].label, {}});
    }
    TextCnn model = build_phmd(table, config.phmd, model_seed);
    TrainOptions t = config.train;
    t.seed = splitmix64(cell_seed ^ 2);
    train(model, train_set, t);
    for (std::size_t i : test) {
      const auto seq = pad(docs[i].tokens, table.vocab(), config.phmd.max_sequence_length);
      if (wants(options, Approach::phmd)) {
        out.predictions[Approach::phmd].emplace_back(i, predict_phmd(model, docs[i].id, seq));
      }
      if (wants(options, Approach::pipeline)) {
        out.predictions[Approach::pipeline].emplace_back(i, pipeline_predict(data.verdicts[i], model, docs[i].id, seq));
      }
    }
  }
  if (wants(options, Approach::feataug)) {
    const bool raw = config.figurative.include_raw_score;
    std::vector<TrainingExample> train_set;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (is_test[i]) continue;
      train_set.push_back({pad(docs[i].tokens, table.vocab(), config.feataug.max_sequence_length), docs[i].label,
                           figurative_feature_vector(data.verdicts[i], raw)});
    }
    TextCnn model = build_feataug(table, config.feataug, figurative_feature_length(raw), model_seed);
    TrainOptions t = config.train;
    t.seed = splitmix64(cell_seed ^ 3);
    train(model, train_set, t);
    for (std::size_t i : test) {
      const auto seq = pad(docs[i].tokens, table.vocab(), config.feataug.max_sequence_length);
      out.predictions[Approach::feataug].emplace_back(i, feataug_predict(model, docs[i].id, seq, data.verdicts[i], raw));
    }
  }
  return out;
}

[[noreturn]] void rethrow_with(const std::exception_ptr& error, const std::string& where) {
  try {
    std::rethrow_exception(error);
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
}

Metrics count_metrics(std::span<const std::pair<std::size_t, Prediction>> preds, std::span<const Document> docs) {
  std::vector<PhmLabel> p, g;
  for (const auto& [i, pred] : preds) {
    p.push_back(pred.label);
    g.push_back(docs[i].label);
  }
  if (p.empty()) return metrics_from_counts(0, 0, 0, 0);
  return compute_metrics(p, g);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentData& data,
                                const RunOptions& options) {
  if (options.approaches.empty()) throw ConfigError("no approach selected");
  if (data.embeddings.empty()) throw ConfigError("no embedding tables");
  if (data.verdicts.size() != data.documents.size()) throw std::invalid_argument("one verdict per document is required");
  const auto folds = stratified_kfold(data.documents, config.folds, derive_seed(config.seed, "folds", 0));

  const std::size_t n_cells = data.embeddings.size() * folds.size();
  std::vector<CellOutput> cells(n_cells);
  std::vector<std::exception_ptr> errors(n_cells);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t c = next++; c < n_cells; c = next++) {
      const std::size_t e = c / folds.size();
      const std::size_t f = c % folds.size();
      try {
        cells[c] = run_cell(config, data, data.embeddings[e].second, data.embeddings[e].first, f, folds, options);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, n_cells);
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t c = 0; c < n_cells; ++c) {
    if (errors[c]) {
      rethrow_with(errors[c], "embedding " + data.embeddings[c / folds.size()].first + ", fold " +
                                  std::to_string(c % folds.size()));
    }
  }

  ExperimentReport report;
  for (const auto& d : data.documents) report.doc_ids.push_back(d.id);
  report.verdicts = data.verdicts;
  for (const auto& [name, table] : data.embeddings) report.embeddings.push_back(name);
  for (Approach a : {Approach::phmd, Approach::pipeline, Approach::feataug}) {
    if (wants(options, a)) report.approaches.push_back(a);
  }
  report.disease_table_embedding =
      config.disease_table_embedding.empty() ? report.embeddings.front() : config.disease_table_embedding;

  std::set<Disease> diseases;
  for (const auto& d : data.documents) diseases.insert(d.disease);

  for (std::size_t e = 0; e < report.embeddings.size(); ++e) {
    const std::string& name = report.embeddings[e];
    for (Approach a : report.approaches) {
      std::vector<std::pair<std::size_t, Prediction>> all;
      std::vector<Metrics> per_fold;
      for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto& preds = cells[e * folds.size() + f].predictions[a];
        per_fold.push_back(count_metrics(preds, data.documents));
        all.insert(all.end(), preds.begin(), preds.end());
      }
      std::sort(all.begin(), all.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
      const std::string approach(to_string(a));
      report.records.push_back({approach, name, "all", count_metrics(all, data.documents), false});
      for (std::size_t f = 0; f < folds.size(); ++f) {
        report.records.push_back({approach, name, "fold:" + std::to_string(f), per_fold[f], false});
      }
      for (Disease d : diseases) {
        std::vector<std::pair<std::size_t, Prediction>> subset;
        for (const auto& p : all) {
          if (data.documents[p.first].disease == d) subset.push_back(p);
        }
        report.records.push_back({approach, name, "disease:" + std::string(to_string(d)),
                                  count_metrics(subset, data.documents), false});
      }
      auto& dump = report.predictions[{name, a}];
      for (auto& p : all) dump.push_back(std::move(p.second));
    }
  }
  for (Approach a : report.approaches) {
    const std::string approach(to_string(a));
    ReportRecord mean{approach, "average", "all", {}, true};
    double p = 0, r = 0, f = 0;
    for (const auto& name : report.embeddings) {
      const auto* rec = find_record(report.records, approach, name, "all");
      p += rec->metrics.precision;
      r += rec->metrics.recall;
      f += rec->metrics.f_score;
      mean.metrics.tp += rec->metrics.tp;
      mean.metrics.fp += rec->metrics.fp;
      mean.metrics.fn += rec->metrics.fn;
      mean.metrics.tn += rec->metrics.tn;
      mean.metrics.precision_undefined |= rec->metrics.precision_undefined;
      mean.metrics.recall_undefined |= rec->metrics.recall_undefined;
    }
    const double n = static_cast<double>(report.embeddings.size());
    mean.metrics.precision = p / n;
    mean.metrics.recall = r / n;
    mean.metrics.f_score = f / n;
    report.records.push_back(mean);
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  return run_experiment(config, prepare_experiment(config), options);
}

const ReportRecord* find_record(std::span<const ReportRecord> records, std::string_view approach,
                                std::string_view embedding, std::string_view scope) {
  for (const auto& r : records) {
    if (r.approach == approach && r.embedding == embedding && r.scope == scope) return &r;
  }
  return nullptr;
}

namespace {

std::string flags_of(const ReportRecord& r) {
  std::vector<std::string> flags;
  if (r.mean) flags.push_back("mean");
  if (r.metrics.precision_undefined) flags.push_back("p_undefined");
  if (r.metrics.recall_undefined) flags.push_back("r_undefined");
  if (flags.empty()) return "-";
  std::string out = flags[0];
  for (std::size_t i = 1; i < flags.size(); ++i) out += "," + flags[i];
  return out;
}

// Reported values are the %.6f strings; tables and deltas are derived from
// those so they can be recomputed from the file.
double reported(double x) { return std::strtod(fmt6(x).c_str(), nullptr); }

std::string pct(double fraction, bool flagged = false) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%s", reported(fraction) * 100, flagged ? "*" : "");
  return buf;
}

std::string pad_right(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

}  // namespace

void write_report_records(std::ostream& out, std::span<const ReportRecord> records) {
  out << "# approach\tembedding\tscope\tP\tR\tF\tTP\tFP\tFN\tTN\tflags\n";
  for (const auto& r : records) {
    const auto& m = r.metrics;
    out << r.approach << '\t' << r.embedding << '\t' << r.scope << '\t' << fmt6(m.precision) << '\t'
        << fmt6(m.recall) << '\t' << fmt6(m.f_score) << '\t' << m.tp << '\t' << m.fp << '\t' << m.fn << '\t'
        << m.tn << '\t' << flags_of(r) << '\n';
  }
}

std::vector<ReportRecord> parse_report_records(std::istream& in) {
  std::vector<ReportRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_tabs(line);
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (f.size() != 11) throw DataError(where + "expected 11 fields");
    ReportRecord r;
    r.approach = f[0];
    r.embedding = f[1];
    r.scope = f[2];
    try {
      r.metrics.precision = parse_double(f[3], "P");
      r.metrics.recall = parse_double(f[4], "R");
      r.metrics.f_score = parse_double(f[5], "F");
      r.metrics.tp = parse_uint(f[6], "TP");
      r.metrics.fp = parse_uint(f[7], "FP");
      r.metrics.fn = parse_uint(f[8], "FN");
      r.metrics.tn = parse_uint(f[9], "TN");
    } catch (const ConfigError& e) {
      throw DataError(where + e.what());
    }
    for (std::string_view flag : parse_list<std::string>(f[10], [](std::string_view x) { return std::string(x); })) {
      if (flag == "mean") r.mean = true;
      else if (flag == "p_undefined") r.metrics.precision_undefined = true;
      else if (flag == "r_undefined") r.metrics.recall_undefined = true;
      else if (flag != "-") throw DataError(where + "unknown flag " + std::string(flag));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::string render_tables(std::span<const ReportRecord> records, std::string_view disease_embedding) {
  std::vector<std::string> embeddings;
  std::vector<std::string> approaches;
  for (const auto& r : records) {
    if (r.scope != "all" || r.mean) continue;
    if (std::find(embeddings.begin(), embeddings.end(), r.embedding) == embeddings.end()) embeddings.push_back(r.embedding);
    if (std::find(approaches.begin(), approaches.end(), r.approach) == approaches.end()) approaches.push_back(r.approach);
  }
  auto label = [](const std::string& a) {
    try {
      return std::string(display_name(parse_approach(a)));
    } catch (const ConfigError&) {
      return a;
    }
  };
  bool any_flagged = false;
  auto cell = [&](const ReportRecord* r, int which) -> std::string {
    if (!r) return "-";
    const auto& m = r->metrics;
    const bool flag = (which == 0 && m.precision_undefined) || (which == 1 && m.recall_undefined) ||
                      (which == 2 && (m.precision_undefined || m.recall_undefined));
    any_flagged |= flag;
    return pct(which == 0 ? m.precision : which == 1 ? m.recall : m.f_score, flag);
  };

  std::ostringstream out;
  constexpr std::size_t kName = 11;
  constexpr std::size_t kCol = 8;
  constexpr std::size_t kPerTable = 4;
  for (std::size_t start = 0; start < embeddings.size(); start += kPerTable) {
    const std::size_t end = std::min(embeddings.size(), start + kPerTable);
    out << "Performance by embedding initialisation (%)\n";
    std::string h1 = pad_right("", kName), h2 = pad_right("Approach", kName);
    for (std::size_t e = start; e < end; ++e) {
      std::string name = embeddings[e];
      if (name.size() > 3 * kCol - 1) name.resize(3 * kCol - 1);
      h1 += " | " + pad_right(name, 3 * kCol);
      h2 += " | " + pad_left("P", kCol) + pad_left("R", kCol) + pad_left("F", kCol);
    }
    out << h1 << '\n' << h2 << '\n' << std::string(h2.size(), '-') << '\n';
    for (const auto& a : approaches) {
      std::string row = pad_right(label(a), kName);
      for (std::size_t e = start; e < end; ++e) {
        const auto* r = find_record(records, a, embeddings[e], "all");
        row += " | " + pad_left(cell(r, 0), kCol) + pad_left(cell(r, 1), kCol) + pad_left(cell(r, 2), kCol);
      }
      out << row << '\n';
    }
    out << '\n';
  }

  out << "Average across " << embeddings.size() << " embedding initialisation" << (embeddings.size() == 1 ? "" : "s")
      << " (%)\n";
  const std::string head = pad_right("Approach", kName) + pad_left("P", kCol) + pad_left("R", kCol) +
                           pad_left("F", kCol) + pad_left("dF", kCol + 2);
  out << head << '\n' << std::string(head.size(), '-') << '\n';
  const auto* base = find_record(records, "phmd", "average", "all");
  for (const auto& a : approaches) {
    const auto* r = find_record(records, a, "average", "all");
    std::string row = pad_right(label(a), kName) + pad_left(cell(r, 0), kCol) + pad_left(cell(r, 1), kCol) +
                      pad_left(cell(r, 2), kCol);
    if (r && base && a != "phmd") {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%+.2f", (reported(r->metrics.f_score) - reported(base->metrics.f_score)) * 100);
      row += pad_left(buf, kCol + 2);
    }
    out << row << '\n';
  }
  out << '\n';

  std::string disease_emb(disease_embedding);
  if (disease_emb.empty() && !embeddings.empty()) disease_emb = embeddings.front();
  std::vector<std::string> scopes;
  for (const auto& r : records) {
    if (r.embedding == disease_emb && r.scope.starts_with("disease:") &&
        std::find(scopes.begin(), scopes.end(), r.scope) == scopes.end()) {
      scopes.push_back(r.scope);
    }
  }
  if (!scopes.empty()) {
    out << "F by disease, " << disease_emb << " initialisation (%)\n";
    std::string h = pad_right("Disease", 14);
    for (const auto& a : approaches) {
      if (a != "pipeline") h += pad_left(label(a), 11);
    }
    out << h << '\n' << std::string(h.size(), '-') << '\n';
    for (const auto& s : scopes) {
      std::string row = pad_right(s.substr(8), 14);
      for (const auto& a : approaches) {
        if (a != "pipeline") row += pad_left(cell(find_record(records, a, disease_emb, s), 2), 11);
      }
      out << row << '\n';
    }
    out << '\n';
  }
  if (any_flagged) out << "* precision or recall undefined (no positive predictions or golds); counted as 0\n";
  return out.str();
}

void write_report(const fs::path& dir, const ExperimentReport& report) {
  fs::create_directories(dir / "predictions");
  auto open = [](const fs::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
  };
  {
    auto f = open(dir / "report.tsv");
    write_report_records(f, report.records);
  }
  {
    auto f = open(dir / "report.txt");
    f << render_tables(report.records, report.disease_table_embedding);
  }
  {
    auto f = open(dir / "verdicts.tsv");
    write_verdicts(f, report.doc_ids, report.verdicts);
  }
  for (const auto& [key, preds] : report.predictions) {
    auto f = open(dir / "predictions" / (key.first + "." + std::string(to_string(key.second)) + ".tsv"));
    write_predictions(f, preds);
  }
}

std::vector<std::pair<std::string, UsageLabel>> load_figurative_gold(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::pair<std::string, UsageLabel>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 2) throw DataError(path.string() + ": line " + std::to_string(lineno) + ": expected 2 fields");
    try {
      out.emplace_back(f[0], parse_usage_label(f[1]));
    } catch (const DataError& e) {
      throw DataError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

FigurativeEvaluation evaluate_figurative(std::span<const std::pair<Document, UsageLabel>> labeled,
                                         const FigurativeDetector& detector, const FigurativeSettings& settings,
                                         std::uint64_t seed) {
  if (labeled.empty()) throw std::invalid_argument("no labelled documents to evaluate");
  std::vector<Document> docs;
  std::vector<UsageLabel> gold;
  for (const auto& [d, g] : labeled) {
    docs.push_back(d);
    gold.push_back(g);
  }
  auto labels_of = [](const std::vector<FigurativeVerdict>& v) {
    std::vector<UsageLabel> out;
    for (const auto& x : v) out.push_back(x.label);
    return out;
  };
  FigurativeSettings score_only = settings;
  score_only.use_lda = false;
  FigurativeEvaluation result;
  result.score_only = compute_metrics(labels_of(figurative_verdicts(docs, detector, score_only, seed)), gold);
  if (settings.use_lda) {
    result.with_lda = compute_metrics(labels_of(figurative_verdicts(docs, detector, settings, seed)), gold);
  }
  return result;
}

std::string render_figurative_evaluation(const FigurativeEvaluation& evaluation) {
  std::ostringstream out;
  out << "mode\tP\tR\tF\tTP\tFP\tFN\tTN\tflags\n";
  auto row = [&](std::string_view mode, const Metrics& m) {
    ReportRecord r{"", "", "", m, false};
    out << mode << '\t' << fmt6(m.precision) << '\t' << fmt6(m.recall) << '\t' << fmt6(m.f_score) << '\t' << m.tp
        << '\t' << m.fp << '\t' << m.fn << '\t' << m.tn << '\t' << flags_of(r) << '\n';
  };
  row("score", evaluation.score_only);
  if (evaluation.with_lda) row("score+lda", *evaluation.with_lda);
  return out.str();
}

}  // namespace figphm
