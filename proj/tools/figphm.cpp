// figphm command-line front end.
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "figphm/corpus.hpp"
#include "figphm/embeddings.hpp"
#include "figphm/error.hpp"
#include "figphm/figurative.hpp"
#include "figphm/harness.hpp"
#include "figphm/neuralnet.hpp"
#include "figphm/phm.hpp"
#include "figphm/rng.hpp"

namespace fs = std::filesystem;
using namespace figphm;

namespace {

enum Exit { kOk = 0, kConfig = 1, kData = 2, kRuntime = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg = load_experiment_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::vector<Approach> approaches_for(const std::string& s) {
  if (s == "all") return {Approach::phmd, Approach::pipeline, Approach::feataug};
  return {parse_approach(s)};
}

// Writes to `path`, or stdout when it is empty or "-".
template <typename F>
void with_output(const std::string& path, F write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write(out);
}

const EmbeddingTable& pick_embedding(const ExperimentData& data, const std::string& name) {
  if (name.empty()) return data.embeddings.front().second;
  for (const auto& [n, t] : data.embeddings) {
    if (n == name) return t;
  }
  throw ConfigError("no embedding named " + name);
}

void print_metrics(std::ostream& out, std::string_view label, const Metrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s\tP=%.6f\tR=%.6f\tF=%.6f\tTP=%zu\tFP=%zu\tFN=%zu\tTN=%zu%s\n",
                std::string(label).c_str(), m.precision, m.recall, m.f_score, m.tp, m.fp, m.fn, m.tn,
                (m.precision_undefined || m.recall_undefined) ? "\t(undefined P/R counted as 0)" : "");
  out << buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personal health mention detection with figurative usage features"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config, "Experiment config file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", common.seed, "Override the config seed");
  };

  auto* kappa = app.add_subcommand("kappa", "Cohen's kappa over an annotation TSV");
  std::string annotations;
  kappa->add_option("annotations", annotations, "item_id TAB label_a TAB label_b")->required();

  auto* retro = app.add_subcommand("retrofit", "Retrofit an embedding table to an ontology");
  std::string table_path, table_format = "glove_text", prefix_filter, ontology_path, retro_out, beta = "inverse_degree";
  RetrofitOptions retro_opts;
  retro->add_option("--table", table_path)->required();
  retro->add_option("--format", table_format);
  retro->add_option("--prefix-filter", prefix_filter);
  retro->add_option("--ontology", ontology_path)->required();
  retro->add_option("--iterations", retro_opts.iterations);
  retro->add_option("--alpha", retro_opts.alpha);
  retro->add_option("--beta", beta);
  retro->add_option("--out", retro_out, "Output table (glove_text); stdout if omitted");

  auto* fig_score = app.add_subcommand("fig-score", "Figurative verdicts for every document in the dataset");
  std::string verdict_out;
  add_common(fig_score);
  fig_score->add_option("--out", verdict_out, "Verdict TSV; stdout if omitted");

  auto* fig_eval = app.add_subcommand("fig-eval", "Evaluate the figurative detector against gold labels");
  std::string gold_path;
  add_common(fig_eval);
  fig_eval->add_option("--gold", gold_path, "doc_id TAB figurative|literal")->required();

  auto* train_cmd = app.add_subcommand("train", "Train one model on the whole dataset and save a checkpoint");
  std::string train_approach = "phmd", embedding_name, ckpt_out;
  add_common(train_cmd);
  train_cmd->add_option("--approach", train_approach)->check(CLI::IsMember({"phmd", "feataug"}));
  train_cmd->add_option("--embedding", embedding_name, "Embedding spec name (first spec by default)");
  train_cmd->add_option("--out", ckpt_out, "Checkpoint path")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "Score the dataset with a saved checkpoint");
  std::string ckpt_in, eval_approach, pred_out;
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", ckpt_in)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--approach", eval_approach, "phmd, pipeline or feataug (defaults to the checkpoint's model)")
      ->check(CLI::IsMember({"phmd", "pipeline", "feataug"}));
  eval_cmd->add_option("--out", pred_out, "Prediction TSV");

  auto* exp_cmd = app.add_subcommand("experiment", "Cross-validated sweep over every embedding spec");
  std::string out_dir, approach = "all";
  std::size_t jobs = 1;
  add_common(exp_cmd);
  exp_cmd->add_option("--out", out_dir, "Report directory")->required();
  exp_cmd->add_option("--jobs", jobs, "Parallel (embedding, fold) cells")->check(CLI::PositiveNumber);
  exp_cmd->add_option("--approach", approach)->check(CLI::IsMember({"phmd", "pipeline", "feataug", "all"}));

  auto* report_cmd = app.add_subcommand("report", "Render text tables from a report.tsv");
  std::string report_in, disease_emb;
  report_cmd->add_option("input", report_in, "report.tsv or the directory holding it")->required();
  report_cmd->add_option("--disease-embedding", disease_emb);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (kappa->parsed()) {
      const auto pairs = load_annotations(annotations);
      std::printf("items\t%zu\nobserved_agreement\t%.6f\nkappa\t%.6f\n", pairs.size(), observed_agreement(pairs),
                  cohen_kappa(pairs));
    } else if (retro->parsed()) {
      LoadOptions lo;
      lo.prefix_filter = prefix_filter;
      LoadStats stats;
      const auto table = load_table(table_path, parse_table_format(table_format), lo, &stats);
      retro_opts.beta_mode = parse_beta_mode(beta);
      const auto graph = load_ontology(ontology_path);
      const auto result = retrofit(table, graph, retro_opts);
      with_output(retro_out, [&](std::ostream& o) { write_table(o, result); });
      std::fprintf(stderr, "retrofit: %zu words, %zu graph nodes, %zu duplicates skipped\n", table.rows() - 2,
                   graph.node_count(), stats.duplicates);
    } else if (fig_score->parsed()) {
      const auto cfg = load_config(common);
      validate(cfg);
      auto docs = drop_garbled(load_dataset(cfg.dataset));
      const auto detector = make_detector(cfg.figurative);
      const auto verdicts = figurative_verdicts(docs, detector, cfg.figurative, cfg.seed);
      std::vector<std::string> ids;
      for (const auto& d : docs) ids.push_back(d.id);
      with_output(verdict_out, [&](std::ostream& o) { write_verdicts(o, ids, verdicts); });
    } else if (fig_eval->parsed()) {
      const auto cfg = load_config(common);
      validate(cfg);
      const auto docs = load_dataset(cfg.dataset);
      const auto gold = load_figurative_gold(gold_path);
      std::vector<std::pair<Document, UsageLabel>> labeled;
      for (const auto& [id, label] : gold) {
        auto it = std::find_if(docs.begin(), docs.end(), [&](const Document& d) { return d.id == id; });
        if (it == docs.end()) throw DataError(gold_path + ": unknown document id " + id);
        labeled.emplace_back(*it, label);
      }
      const auto detector = make_detector(cfg.figurative);
      std::cout << render_figurative_evaluation(evaluate_figurative(labeled, detector, cfg.figurative, cfg.seed));
    } else if (train_cmd->parsed()) {
      const auto cfg = load_config(common);
      const auto data = prepare_experiment(cfg);
      const auto& table = pick_embedding(data, embedding_name);
      const bool feataug = train_approach == "feataug";
      const CnnConfig& arch = feataug ? cfg.feataug : cfg.phmd;
      const bool raw = cfg.figurative.include_raw_score;
      std::vector<TrainingExample> examples;
      for (std::size_t i = 0; i < data.documents.size(); ++i) {
        const auto& d = data.documents[i];
        examples.push_back({pad(d.tokens, table.vocab(), arch.max_sequence_length), d.label,
                            feataug ? figurative_feature_vector(data.verdicts[i], raw) : std::vector<double>{}});
      }
      TextCnn model = feataug ? build_feataug(table, arch, figurative_feature_length(raw), cfg.seed)
                              : build_phmd(table, arch, cfg.seed);
      TrainOptions t = cfg.train;
      t.seed = splitmix64(cfg.seed ^ 2);
      const auto result = train(model, examples, t);
      nlohmann::json manifest = model.manifest();
      manifest["train"] = {{"epochs", t.epochs}, {"batch_size", t.batch_size}, {"learning_rate", t.learning_rate},
                           {"seed", t.seed}, {"epoch_loss", result.epoch_loss}};
      manifest["include_raw_score"] = raw;
      nn::write_checkpoint(ckpt_out, manifest, model.params());
      std::fprintf(stderr, "trained %s: final loss %.6f, training accuracy %.4f\n", train_approach.c_str(),
                   result.epoch_loss.back(), training_accuracy(model, examples));
    } else if (eval_cmd->parsed()) {
      const auto cfg = load_config(common);
      validate(cfg);
      const auto ckpt = nn::read_checkpoint(ckpt_in);
      const TextCnn model = TextCnn::from_checkpoint(ckpt);
      std::string mode = eval_approach.empty() ? std::string(to_string(model.kind())) : eval_approach;
      if ((mode == "feataug") != (model.kind() == ModelKind::feataug)) {
        throw ConfigError("approach " + mode + " does not match a " + std::string(to_string(model.kind())) +
                          " checkpoint");
      }
      auto docs = drop_garbled(load_dataset(cfg.dataset));
      std::vector<FigurativeVerdict> verdicts;
      if (mode != "phmd") {
        const auto detector = make_detector(cfg.figurative);
        verdicts = apply_verdict_noise(figurative_verdicts(docs, detector, cfg.figurative, cfg.seed),
                                       cfg.figurative.verdict_noise, cfg.seed);
      }
      const bool raw = ckpt.manifest.value("include_raw_score", true);
      std::vector<Prediction> preds;
      std::vector<PhmLabel> predicted, gold;
      for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto seq = pad(docs[i].tokens, model.vocab(), model.config().max_sequence_length);
        if (mode == "phmd") {
          preds.push_back(predict_phmd(model, docs[i].id, seq));
        } else if (mode == "pipeline") {
          preds.push_back(pipeline_predict(verdicts[i], model, docs[i].id, seq));
        } else {
          preds.push_back(feataug_predict(model, docs[i].id, seq, verdicts[i], raw));
        }
        predicted.push_back(preds.back().label);
        gold.push_back(docs[i].label);
      }
      if (!pred_out.empty()) with_output(pred_out, [&](std::ostream& o) { write_predictions(o, preds); });
      print_metrics(std::cout, mode, compute_metrics(predicted, gold));
    } else if (exp_cmd->parsed()) {
      const auto cfg = load_config(common);
      RunOptions opts;
      opts.jobs = jobs;
      opts.approaches = approaches_for(approach);
      if (approach != "all" && approach != "phmd") opts.approaches.insert(opts.approaches.begin(), Approach::phmd);
      const auto report = run_experiment(cfg, opts);
      write_report(out_dir, report);
      std::cout << render_tables(report.records, report.disease_table_embedding);
    } else if (report_cmd->parsed()) {
      fs::path p = report_in;
      if (fs::is_directory(p)) p /= "report.tsv";
      std::ifstream in(p);
      if (!in) throw DataError("cannot open " + p.string());
      const auto records = parse_report_records(in);
      std::cout << render_tables(records, disease_emb);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kOk;
}
