// Command-line front end: dataset generation, training, inference, metrics,
// ROC reporting and the numeric self-check.
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "symx/metrics.hpp"
#include "symx/model.hpp"
#include "symx/netlist.hpp"
#include "symx/postprocess.hpp"
#include "symx/synth.hpp"
#include "symx/trainer.hpp"

namespace {

using namespace symx;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

nlohmann::json metrics_json(const Confusion& c) {
  Metrics m = compute_metrics(c);
  return {{"confusion", {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}},
          {"tpr", optional_json(m.tpr)}, {"fpr", optional_json(m.fpr)},
          {"ppv", optional_json(m.ppv)}, {"acc", optional_json(m.acc)},
          {"f1", optional_json(m.f1)}};
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "undef";
  std::ostringstream os;
  os.precision(4);
  os << std::fixed << *v;
  return os.str();
}

void print_metrics(std::ostream& os, const Confusion& c, const std::string& head) {
  Metrics m = compute_metrics(c);
  os << head << "  tp=" << c.tp << " fp=" << c.fp << " tn=" << c.tn << " fn=" << c.fn
     << "  tpr=" << fmt_opt(m.tpr) << " fpr=" << fmt_opt(m.fpr) << " ppv=" << fmt_opt(m.ppv)
     << " acc=" << fmt_opt(m.acc) << " f1=" << fmt_opt(m.f1) << "\n";
}

// Predictions are exchanged between subcommands as one JSON object per file.
std::vector<PairOutcome> load_outcomes(const std::vector<std::string>& files) {
  std::vector<PairOutcome> out;
  for (const std::string& f : files) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(slurp(f));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("predictions '" + f + "': " + e.what());
    }
    if (!j.contains("pairs") || !j["pairs"].is_array())
      throw std::runtime_error("predictions '" + f + "' have no pairs array");
    for (const auto& p : j["pairs"]) {
      if (!p.contains("label") || p["label"].is_null())
        throw std::runtime_error("predictions '" + f +
                                 "' lack labels; produce them with infer --labels");
      out.push_back({p.at("similarity").get<double>(), p.at("predicted").get<bool>(),
                     p.at("label").get<int>()});
    }
  }
  return out;
}

RuleFlags parse_rules(const std::string& spec, bool relaxed) {
  RuleFlags flags;
  flags.position = flags.size = flags.dummy = false;
  flags.relaxed_size = relaxed;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "position")
      flags.position = true;
    else if (tok == "size")
      flags.size = true;
    else if (tok == "dummy")
      flags.dummy = true;
    else if (!tok.empty())
      throw std::runtime_error("unknown rule '" + tok + "' (expected position, size, dummy)");
  }
  return flags;
}

std::pair<int, int> parse_layer_spec(const std::string& spec) {
  auto dots = spec.find("..");
  auto to_int = [&](const std::string& s) {
    size_t pos = 0;
    int v = 0;
    try {
      v = std::stoi(s, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (pos != s.size() || v < 1)
      throw std::runtime_error("bad layer count '" + s + "' in --layers");
    return v;
  };
  if (dots == std::string::npos) {
    int v = to_int(spec);
    return {v, v};
  }
  int lo = to_int(spec.substr(0, dots));
  int hi = to_int(spec.substr(dots + 2));
  if (lo > hi) throw std::runtime_error("--layers range must be low..high");
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// gen-dataset

struct GenOpts {
  std::uint64_t seed = 1;
  int circuits = 40;
  std::string out;
  std::string profile = "mixed";
};

void run_gen(const GenOpts& o) {
  SynthConfig cfg{o.seed, o.circuits, o.profile};
  std::vector<CircuitSample> samples = synth_dataset(cfg);
  DatasetStats st = dataset_stats(samples);
  write_dataset(samples, o.out, &st);
  std::cout << "wrote " << st.circuits << " circuits to " << o.out << " (" << st.devices
            << " devices, " << st.valid_pairs << " valid pairs, " << st.matched_pairs
            << " matched)\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string manifest, out_checkpoint;
  std::string layers = "3";
  int heads = 5;
  int epochs = 500;
  int batch = 256;
  double lr = 0.002;
  double split = 0.75;
  double threshold = 0.6;
  bool no_gate_feature = false;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;
  std::string loss_log, split_out, metrics_out;
  bool verbose = false;
};

Confusion merged_confusion(const std::vector<CircuitSample>& samples, const std::vector<int>& idx,
                           const ModelParams& params, bool postprocess) {
  std::vector<PairOutcome> all;
  for (int i : idx) {
    EvalOptions opt;
    opt.postprocess = postprocess;
    std::vector<PairOutcome> one = evaluate_circuit(samples[i], params, opt);
    all.insert(all.end(), one.begin(), one.end());
  }
  return confusion(all);
}

void run_train(const TrainOpts& o) {
  std::vector<CircuitSample> samples = read_manifest(o.manifest);
  SplitIndices split = split_dataset(static_cast<int>(samples.size()), o.split, o.seed);
  auto [lo, hi] = parse_layer_spec(o.layers);

  nlohmann::json runs = nlohmann::json::array();
  std::ostringstream loss_csv;
  loss_csv << "layers,epoch,loss\n";

  std::optional<TrainResult> best;
  double best_f1 = -1.0;
  int best_layers = 0;

  for (int depth = lo; depth <= hi; ++depth) {
    ModelConfig mcfg;
    mcfg.layers = depth;
    mcfg.heads = o.heads;
    mcfg.similarity_threshold = o.threshold;
    mcfg.use_gate_feature = !o.no_gate_feature;
    mcfg.seed = o.seed;

    TrainConfig tcfg;
    tcfg.epochs = o.epochs;
    tcfg.batch_size = o.batch;
    tcfg.learning_rate = o.lr;
    tcfg.split_ratio = o.split;
    tcfg.seed = o.seed;
    tcfg.verbose = o.verbose;
    if (lo == hi) {
      tcfg.checkpoint_every = o.checkpoint_every;
      tcfg.checkpoint_path = o.out_checkpoint;
    }

    auto t0 = std::chrono::steady_clock::now();
    TrainResult res = train_model(samples, split.train, mcfg, tcfg);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    Confusion with_pp = merged_confusion(samples, split.test, res.params, true);
    Confusion without_pp = merged_confusion(samples, split.test, res.params, false);
    double f1 = compute_metrics(with_pp).f1.value_or(-1.0);

    std::cout << "layers=" << depth << "  train " << secs << " s, final loss "
              << res.epoch_loss.back() << "\n";
    print_metrics(std::cout, with_pp, "  test (rules on) ");
    print_metrics(std::cout, without_pp, "  test (rules off)");

    for (size_t e = 0; e < res.epoch_loss.size(); ++e)
      loss_csv << depth << ',' << (e + 1) << ',' << res.epoch_loss[e] << '\n';
    runs.push_back({{"layers", depth},
                    {"train_seconds", secs},
                    {"final_loss", res.epoch_loss.back()},
                    {"test_with_rules", metrics_json(with_pp)},
                    {"test_without_rules", metrics_json(without_pp)}});

    if (f1 > best_f1) {
      best_f1 = f1;
      best_layers = depth;
      best = std::move(res);
    }
  }

  save_checkpoint(best->params, o.out_checkpoint);
  if (lo != hi) {
    std::optional<double> shown;
    if (best_f1 >= 0) shown = best_f1;
    std::cout << "best depth " << best_layers << " (f1 " << fmt_opt(shown) << ")\n";
  }
  std::cout << "checkpoint written to " << o.out_checkpoint << "\n";

  if (!o.loss_log.empty()) spit(o.loss_log, loss_csv.str());
  if (!o.split_out.empty() || !o.metrics_out.empty()) {
    nlohmann::json sj;
    sj["train"] = nlohmann::json::array();
    sj["test"] = nlohmann::json::array();
    for (int i : split.train) sj["train"].push_back(samples[i].name);
    for (int i : split.test) sj["test"].push_back(samples[i].name);
    if (!o.split_out.empty()) spit(o.split_out, sj.dump(2) + "\n");
    if (!o.metrics_out.empty()) {
      nlohmann::json mj = {{"runs", runs}, {"best_layers", best_layers}, {"split", sj}};
      spit(o.metrics_out, mj.dump(2) + "\n");
    }
  }
}

// ---------------------------------------------------------------------------
// infer

struct InferOpts {
  std::string checkpoint, netlist, labels;
  std::string out, removal_log, dump_graph;
  std::string rules = "position,size,dummy";
  bool no_postprocess = false;
  bool relaxed_size = false;
};

void run_infer(const InferOpts& o) {
  ModelParams params = load_checkpoint(o.checkpoint);
  Netlist nl = parse_netlist(slurp(o.netlist));
  SymmetryGroups groups;
  if (!o.labels.empty()) groups = groups_from_json(slurp(o.labels));

  CircuitGraph g = build_graph(nl, params.norm, params.config.use_gate_feature);
  std::vector<PairSample> pairs =
      enumerate_valid_pairs(g, o.labels.empty() ? nullptr : &groups);
  std::vector<Prediction> preds = infer_pairs(g, params, pairs);

  std::set<std::pair<int, int>> kept;
  std::vector<Removal> removals;
  if (!o.no_postprocess) {
    std::vector<PairSample> positive;
    for (const Prediction& p : preds)
      if (p.predicted) positive.push_back(p.pair);
    FilterResult fr =
        apply_rules(positive, g, nl, device_positions(g), parse_rules(o.rules, o.relaxed_size));
    for (const PairSample& p : fr.kept) kept.insert({p.a, p.b});
    removals = std::move(fr.removed);
  }

  nlohmann::json pj = nlohmann::json::array();
  int predicted_count = 0;
  std::vector<PairOutcome> outcomes;
  for (const Prediction& p : preds) {
    bool final_pred = o.no_postprocess ? p.predicted : kept.count({p.pair.a, p.pair.b}) > 0;
    predicted_count += final_pred;
    nlohmann::json rec = {{"a", g.nodes[p.pair.a].id},
                          {"b", g.nodes[p.pair.b].id},
                          {"similarity", p.similarity},
                          {"predicted", final_pred}};
    if (!o.labels.empty()) rec["label"] = p.pair.label;
    pj.push_back(std::move(rec));
    outcomes.push_back({p.similarity, final_pred, p.pair.label});
  }

  std::cout << nl.name << ": " << preds.size() << " candidate pairs, " << predicted_count
            << " predicted symmetric";
  if (!o.no_postprocess) std::cout << ", " << removals.size() << " removed by rules";
  std::cout << "\n";
  for (const Prediction& p : preds) {
    bool final_pred = o.no_postprocess ? p.predicted : kept.count({p.pair.a, p.pair.b}) > 0;
    if (final_pred)
      std::cout << "  " << g.nodes[p.pair.a].id << " ~ " << g.nodes[p.pair.b].id
                << "  sim=" << p.similarity << "\n";
  }
  if (!o.labels.empty() && !outcomes.empty()) print_metrics(std::cout, confusion(outcomes), "vs labels:");

  if (!o.out.empty()) {
    nlohmann::json j = {{"circuit", nl.name},
                        {"threshold", params.config.similarity_threshold},
                        {"postprocess", !o.no_postprocess},
                        {"pairs", pj}};
    spit(o.out, j.dump(2) + "\n");
  }
  if (!o.removal_log.empty()) spit(o.removal_log, removals_to_jsonl(removals));
  if (!o.dump_graph.empty()) spit(o.dump_graph, graph_to_json(g));
}

// ---------------------------------------------------------------------------
// eval / roc

struct EvalCmdOpts {
  std::vector<std::string> predictions;
  std::string out;
};

void run_eval(const EvalCmdOpts& o) {
  std::vector<PairOutcome> outcomes = load_outcomes(o.predictions);
  if (outcomes.empty()) throw std::runtime_error("no pairs in predictions");
  Confusion c = confusion(outcomes);
  print_metrics(std::cout, c, "overall:");
  if (!o.out.empty()) spit(o.out, metrics_json(c).dump(2) + "\n");
}

struct RocOpts {
  std::vector<std::string> predictions;
  std::string csv;
};

void run_roc(const RocOpts& o) {
  std::vector<PairOutcome> outcomes = load_outcomes(o.predictions);
  RocCurve roc = roc_auc(outcomes);
  int pos = 0, neg = 0;
  for (const PairOutcome& p : outcomes) (p.label > 0 ? pos : neg)++;
  std::cout << "auc " << roc.auc << "  (" << pos << " positive / " << neg << " negative pairs, "
            << roc.points.size() << " roc points)\n";
  if (!o.csv.empty()) {
    std::ostringstream os;
    os << "threshold,fpr,tpr\n";
    for (const RocPoint& p : roc.points) os << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
    spit(o.csv, os.str());
  }
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradOpts {
  std::uint64_t seed = 1;
  int graphs = 5;
  int min_nodes = 4;
  int max_nodes = 8;
  double tolerance = 1e-4;
  bool inject_error = false;
};

void run_gradcheck(const GradOpts& o) {
  ModelConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.node_dim = 16;
  cfg.edge_dim = 16;
  cfg.seed = o.seed;
  ModelParams params = init_params(cfg, NormStats{});

  double worst = 0.0;
  for (int i = 0; i < o.graphs; ++i) {
    CircuitGraph g = fuzz_graph(o.seed + 7919 * static_cast<std::uint64_t>(i), o.min_nodes,
                                o.max_nodes);
    std::vector<PairSample> pairs;
    for (int a = 2; a < static_cast<int>(g.nodes.size()) && pairs.size() < 4; ++a)
      for (int b = a + 1; b < static_cast<int>(g.nodes.size()) && pairs.size() < 4; ++b)
        pairs.push_back({a, b, (a + b) % 2 == 0 ? 1 : -1});

    GradCheckOptions gopt;
    gopt.max_entries_per_tensor = 4;
    gopt.sample_seed = o.seed + i;
    gopt.corrupt_one_adjoint = o.inject_error;
    double err = grad_check(
        [&](Tape& t, const std::vector<Tape::Var>& vars) {
          TraceParts parts = forward_on(t, vars, params, g);
          Tape::Var sims = pair_similarity_on(t, parts.final_nodes, pairs);
          return pair_loss_on(t, sims, pairs);
        },
        params.tensors, gopt);
    worst = std::max(worst, err);
    std::cout << "graph " << i << " (" << g.nodes.size() << " nodes): max rel err " << err << "\n";
  }
  std::cout << "worst " << worst << " vs tolerance " << o.tolerance << "\n";
  if (!(worst < o.tolerance)) throw std::runtime_error("gradient check failed");
  std::cout << "gradient check passed\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-attention symmetry detection for flat analog netlists"};
  app.require_subcommand(1);
  app.set_config("--config");

  GenOpts gen;
  CLI::App* cgen = app.add_subcommand("gen-dataset", "Generate a labeled synthetic dataset");
  cgen->add_option("--seed", gen.seed, "Dataset seed");
  cgen->add_option("--circuits", gen.circuits, "Number of circuits")->check(CLI::PositiveNumber);
  cgen->add_option("--out", gen.out, "Output directory")->required();
  cgen->add_option("--profile", gen.profile,
                   "ota, comparator, mirror_bank, bjt_reference or mixed");

  TrainOpts tr;
  CLI::App* ctrain = app.add_subcommand("train", "Train a model on a dataset manifest");
  ctrain->add_option("--manifest", tr.manifest, "Path to manifest.json")->required();
  ctrain->add_option("--out-checkpoint", tr.out_checkpoint, "Checkpoint output path")->required();
  ctrain->add_option("--layers", tr.layers, "Layer count, or a low..high sweep");
  ctrain->add_option("--heads", tr.heads, "Attention heads")->check(CLI::PositiveNumber);
  ctrain->add_option("--epochs", tr.epochs, "Training epochs")->check(CLI::PositiveNumber);
  ctrain->add_option("--batch", tr.batch, "Pairs per optimizer step")->check(CLI::PositiveNumber);
  ctrain->add_option("--lr", tr.lr, "Learning rate");
  ctrain->add_option("--split", tr.split, "Training fraction of circuits");
  ctrain->add_option("--threshold", tr.threshold, "Similarity decision threshold");
  ctrain->add_flag("--no-gate-feature", tr.no_gate_feature, "Zero the gate-connection features");
  ctrain->add_option("--seed", tr.seed, "Split/shuffle/init seed");
  ctrain->add_option("--checkpoint-every", tr.checkpoint_every, "Snapshot period in epochs");
  ctrain->add_option("--loss-log", tr.loss_log, "Write per-epoch loss CSV here");
  ctrain->add_option("--split-out", tr.split_out, "Write the circuit split JSON here");
  ctrain->add_option("--metrics-out", tr.metrics_out, "Write held-out metrics JSON here");
  ctrain->add_flag("--verbose", tr.verbose, "Progress on stderr");

  InferOpts inf;
  CLI::App* cinfer = app.add_subcommand("infer", "Predict symmetric pairs for one netlist");
  cinfer->add_option("--checkpoint", inf.checkpoint, "Trained checkpoint")->required();
  cinfer->add_option("--netlist", inf.netlist, "Netlist file")->required();
  cinfer->add_option("--labels", inf.labels, "Symmetry groups JSON for scoring");
  cinfer->add_option("--out", inf.out, "Write predictions JSON here");
  cinfer->add_option("--removal-log", inf.removal_log, "Write rule-removal JSONL here");
  cinfer->add_option("--dump-graph", inf.dump_graph, "Write the graph encoding JSON here");
  cinfer->add_option("--rules", inf.rules, "Comma list of rules to apply");
  cinfer->add_flag("--no-postprocess", inf.no_postprocess, "Skip the rule filter");
  cinfer->add_flag("--relaxed-size", inf.relaxed_size, "Relative 1e-6 size comparison");

  EvalCmdOpts ev;
  CLI::App* ceval = app.add_subcommand("eval", "Aggregate metrics over prediction files");
  ceval->add_option("--predictions", ev.predictions, "Prediction JSON files")
      ->required()
      ->expected(-1);
  ceval->add_option("--out", ev.out, "Write metrics JSON here");

  RocOpts roc;
  CLI::App* croc = app.add_subcommand("roc", "ROC curve and AUC over prediction files");
  croc->add_option("--predictions", roc.predictions, "Prediction JSON files")
      ->required()
      ->expected(-1);
  croc->add_option("--csv", roc.csv, "Write threshold,fpr,tpr CSV here");

  GradOpts gc;
  CLI::App* cgrad = app.add_subcommand("gradcheck", "Finite-difference check of the backward pass");
  cgrad->add_option("--seed", gc.seed, "Seed for graphs and entry sampling");
  cgrad->add_option("--graphs", gc.graphs, "Number of random graphs")->check(CLI::PositiveNumber);
  cgrad->add_option("--min-nodes", gc.min_nodes, "Smallest graph size");
  cgrad->add_option("--max-nodes", gc.max_nodes, "Largest graph size");
  cgrad->add_option("--tolerance", gc.tolerance, "Max relative error allowed");
  cgrad->add_flag("--inject-error", gc.inject_error,
                  "Corrupt one adjoint; the check must then fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (cgen->parsed()) run_gen(gen);
    if (ctrain->parsed()) run_train(tr);
    if (cinfer->parsed()) run_infer(inf);
    if (ceval->parsed()) run_eval(ev);
    if (croc->parsed()) run_roc(roc);
    if (cgrad->parsed()) run_gradcheck(gc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
