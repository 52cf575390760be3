#include <fstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "figphm/corpus.hpp"
#include "figphm/embeddings.hpp"
#include "figphm/error.hpp"
#include "figphm/figurative.hpp"
#include "figphm/harness.hpp"

namespace py = pybind11;
using namespace figphm;

namespace {

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f_score"] = m.f_score;
  d["tp"] = m.tp;
  d["fp"] = m.fp;
  d["fn"] = m.fn;
  d["tn"] = m.tn;
  d["precision_undefined"] = m.precision_undefined;
  d["recall_undefined"] = m.recall_undefined;
  return d;
}

std::vector<AnnotationPair> to_pairs(const std::vector<std::pair<std::string, std::string>>& labels) {
  std::vector<AnnotationPair> out;
  for (const auto& [a, b] : labels) {
    out.push_back({std::to_string(out.size()), parse_usage_label(a), parse_usage_label(b)});
  }
  return out;
}

EmbeddingTable table_from(const std::map<std::string, std::vector<double>>& vectors) {
  if (vectors.empty()) throw std::invalid_argument("no vectors given");
  Vocabulary vocab;
  for (const auto& [w, v] : vectors) vocab.add(w);
  EmbeddingTable table(vocab, vectors.begin()->second.size());
  for (const auto& [w, v] : vectors) {
    if (v.size() != table.dim()) throw std::invalid_argument("vectors differ in length: " + w);
    auto row = table.row(table.vocab().lookup(w));
    std::copy(v.begin(), v.end(), row.begin());
  }
  return table;
}

std::vector<py::dict> records_list(std::span<const ReportRecord> records) {
  std::vector<py::dict> out;
  for (const auto& r : records) {
    py::dict d = metrics_dict(r.metrics);
    d["approach"] = r.approach;
    d["embedding"] = r.embedding;
    d["scope"] = r.scope;
    d["mean"] = r.mean;
    out.push_back(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Figurative-aware personal health mention classification";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def("tokenize", &tokenize, py::arg("text"));

  m.def(
      "cohen_kappa", [](const std::vector<std::pair<std::string, std::string>>& labels) {
        return cohen_kappa(to_pairs(labels));
      },
      py::arg("labels"), "Kappa over (rater_a, rater_b) pairs of 'figurative'/'literal'.");

  m.def(
      "cosine", [](const std::vector<double>& u, const std::vector<double>& v) { return cosine(u, v); },
      py::arg("u"), py::arg("v"));

  m.def(
      "retrofit",
      [](const std::map<std::string, std::vector<double>>& vectors,
         const std::map<std::string, std::vector<std::string>>& lexicon, std::size_t iterations, double alpha,
         const std::string& beta) {
        OntologyGraph graph;
        for (const auto& [head, nbrs] : lexicon) {
          graph.add_node(head);
          for (const auto& n : nbrs) graph.add_edge(head, n);
        }
        RetrofitOptions opts{iterations, alpha, parse_beta_mode(beta)};
        const EmbeddingTable out = retrofit(table_from(vectors), graph, opts);
        std::map<std::string, std::vector<double>> result;
        for (const auto& [w, v] : vectors) {
          const auto row = out.vector(w);
          result[w] = {row.begin(), row.end()};
        }
        return result;
      },
      py::arg("vectors"), py::arg("lexicon"), py::arg("iterations") = 10, py::arg("alpha") = 1.0,
      py::arg("beta") = "inverse_degree");

  m.def(
      "literal_usage_score",
      [](const std::vector<std::string>& tokens, const std::string& keyword,
         const std::map<std::string, std::vector<double>>& vectors, std::size_t k, bool exclude_keyword) {
        const EmbeddingTable table = table_from(vectors);
        const auto rep = build_literal_representation(table, keyword, k);
        return literal_usage_score(tokens, rep, table, ScoreOptions{exclude_keyword});
      },
      py::arg("tokens"), py::arg("keyword"), py::arg("vectors"), py::arg("k") = kDefaultRelatedWords,
      py::arg("exclude_keyword") = true);

  m.def(
      "classify", [](double score, double threshold) { return std::string(to_string(classify(score, threshold))); },
      py::arg("score"), py::arg("threshold") = kDefaultFigurativeThreshold);

  m.def(
      "compute_metrics",
      [](const std::vector<std::string>& predictions, const std::vector<std::string>& golds) {
        std::vector<PhmLabel> p, g;
        for (const auto& s : predictions) p.push_back(parse_phm_label(s));
        for (const auto& s : golds) g.push_back(parse_phm_label(s));
        return metrics_dict(compute_metrics(p, g));
      },
      py::arg("predictions"), py::arg("golds"), "Metrics with PHM as the positive class.");

  m.def(
      "stratified_kfold",
      [](const std::vector<std::pair<std::string, std::string>>& strata, std::size_t k, std::uint64_t seed) {
        std::vector<Document> docs;
        for (const auto& [disease, label] : strata) {
          Document d;
          d.id = std::to_string(docs.size());
          d.disease = parse_disease(disease);
          d.label = parse_phm_label(label);
          docs.push_back(std::move(d));
        }
        return stratified_kfold(docs, k, seed);
      },
      py::arg("strata"), py::arg("k"), py::arg("seed"), "Folds of indices from (disease, label) pairs.");

  m.def(
      "figurative_verdicts",
      [](const std::filesystem::path& config_path) {
        const auto config = load_experiment_config(config_path);
        std::vector<std::tuple<std::string, double, std::string>> out;
        const auto data = prepare_experiment(config);
        for (std::size_t i = 0; i < data.documents.size(); ++i) {
          out.emplace_back(data.documents[i].id, data.verdicts[i].literal_score,
                           std::string(to_string(data.verdicts[i].label)));
        }
        return out;
      },
      py::arg("config"), "(doc_id, literal_score, label) per dataset document.");

  m.def(
      "run_experiment",
      [](const std::filesystem::path& config_path, std::optional<std::filesystem::path> out_dir, std::size_t jobs,
         std::optional<std::vector<std::string>> approaches) {
        const auto config = load_experiment_config(config_path);
        RunOptions opts;
        opts.jobs = jobs;
        if (approaches) {
          opts.approaches.clear();
          for (const auto& a : *approaches) opts.approaches.push_back(parse_approach(a));
        }
        ExperimentReport report;
        {
          py::gil_scoped_release release;
          report = run_experiment(config, opts);
          if (out_dir) write_report(*out_dir, report);
        }
        return records_list(report.records);
      },
      py::arg("config"), py::arg("out_dir") = py::none(), py::arg("jobs") = 1, py::arg("approaches") = py::none(),
      "Runs the cross-validated comparison and returns one dict per report record.");

  m.def(
      "render_report",
      [](const std::filesystem::path& report_tsv, const std::string& disease_embedding) {
        std::ifstream in(report_tsv);
        if (!in) throw DataError("cannot open " + report_tsv.string());
        return render_tables(parse_report_records(in), disease_embedding);
      },
      py::arg("report_tsv"), py::arg("disease_embedding") = "");
}
