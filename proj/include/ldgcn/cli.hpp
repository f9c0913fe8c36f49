#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ldgcn/bench.hpp"
#include "ldgcn/checkpoint.hpp"
#include "ldgcn/config.hpp"
#include "ldgcn/data.hpp"
#include "ldgcn/pipeline.hpp"
#include "ldgcn/pruning.hpp"
#include "ldgcn/train.hpp"

namespace ldgcn {
namespace cli {

// Fold parallelism cap; every other stage is single-threaded by design.
inline size_t effective_threads() {
  const char* env = std::getenv("LDGCN_THREADS");
  if (!env || !*env) return 1;
  uint64_t v = detail::parse_u64("LDGCN_THREADS", env);
  if (v < 1) throw std::invalid_argument("LDGCN_THREADS must be >= 1");
  return static_cast<size_t>(v);
}

// --format flag wins, then the file extension, then the configured default.
inline DataFormat resolve_format(const std::string& path, const std::string& flag,
                                 const RunConfig& rc) {
  if (!flag.empty()) {
    if (flag == "eegd") return DataFormat::eegd;
    if (flag == "csv") return DataFormat::csv;
    throw std::invalid_argument("format must be eegd or csv");
  }
  auto ends_with = [&](const std::string& suffix) {
    return path.size() >= suffix.size() &&
           path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".csv")) return DataFormat::csv;
  if (ends_with(".eegd")) return DataFormat::eegd;
  return rc.data_format();
}

inline Dataset load_input(const std::string& path, const std::string& format_flag,
                          const std::string& channel, const RunConfig& rc) {
  if (path.empty()) throw std::invalid_argument("no dataset given (use -d or the dataset key)");
  Dataset ds = load_dataset(path, resolve_format(path, format_flag, rc));
  if (ds.n_channels() > 1) ds = select_channel(ds, channel);
  return ds;
}

inline void check_window_len(const Dataset& ds, const ModelConfig& mcfg) {
  if (ds.window_len != mcfg.input_len)
    throw std::invalid_argument("config input_len (" + std::to_string(mcfg.input_len) +
                                ") does not match dataset window length (" +
                                std::to_string(ds.window_len) + ")");
}

struct FoldOutcome {
  uint16_t subject = 0;
  TrainResult result;
  std::vector<int> predicted, actual;  // held-out windows, dataset order
  PerformanceMetrics metrics;
};

inline FoldOutcome run_fold(const Dataset& ds, const LosoFold& fold, const RunConfig& rc) {
  PipelineConfig pcfg = rc.pipeline_config();
  ModelConfig mcfg = rc.model_config();
  FoldOutcome out;
  out.subject = fold.subject;
  out.result = train(build_items(ds, pcfg, fold.train_indices), mcfg, rc.train_config(),
                     rc.seed_model);
  BatchCache cache;
  std::vector<const Input*> one(1);
  for (size_t idx : fold.test_indices) {
    const EegWindow& w = ds.windows[idx];
    if (w.label == Label::Unlabeled)
      throw std::invalid_argument("window " + std::to_string(idx) + " is unlabeled");
    Input in = prepare_input(w, pcfg, idx);
    one[0] = &in;
    forward_batch(out.result.params, mcfg, one, false, cache);
    out.predicted.push_back(cache.logp[1] > cache.logp[0] ? 1 : 0);
    out.actual.push_back(w.label == Label::Drowsiness ? 1 : 0);
  }
  out.metrics = compute_metrics(out.predicted, out.actual);
  return out;
}

// One leave-one-subject-out pass. Folds are independent, so LDGCN_THREADS of
// them may run at once; results land in fold order either way.
inline std::vector<FoldOutcome> run_loso(const Dataset& ds, const RunConfig& rc) {
  std::vector<LosoFold> folds = loso_splits(ds);
  std::vector<FoldOutcome> out(folds.size());
  size_t threads = std::min(effective_threads(), folds.size());
  if (threads <= 1) {
    for (size_t i = 0; i < folds.size(); ++i) out[i] = run_fold(ds, folds[i], rc);
    return out;
  }
  std::atomic<size_t> next{0};
  std::mutex mtx;
  std::exception_ptr err;
  auto worker = [&] {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= folds.size()) return;
      try {
        out[i] = run_fold(ds, folds[i], rc);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mtx);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (std::thread& th : pool) th.join();
  if (err) std::rethrow_exception(err);
  return out;
}

inline nlohmann::json metrics_json(const PerformanceMetrics& m) {
  return {{"accuracy", m.accuracy},       {"precision", m.precision}, {"recall", m.recall},
          {"specificity", m.specificity}, {"f1", m.f1},               {"degenerate", m.degenerate}};
}

inline nlohmann::json seeds_json(const RunConfig& rc) {
  return {{"model", rc.seed_model}, {"train", rc.seed_train}, {"augment", rc.seed_augment}};
}

inline std::string fold_checkpoint_name(uint16_t subject) {
  return "fold-" + std::to_string(subject) + ".ldgc";
}

inline std::string history_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,mean_loss,accuracy\n";
  char buf[96];
  for (size_t e = 0; e < history.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", e + 1, history[e].mean_loss,
                  history[e].accuracy);
    out += buf;
  }
  return out;
}

// Deterministic stand-in inputs for latency timing when no dataset is handy.
inline std::vector<Input> synthetic_inputs(const ModelConfig& cfg, size_t count) {
  Rng rng(0);
  std::vector<Input> inputs(count);
  for (Input& in : inputs) {
    in.assign(cfg.in_channels, std::vector<double>(cfg.input_len));
    for (auto& ch : in)
      for (double& v : ch) v = rng.next_normal();
  }
  return inputs;
}

inline int cmd_preprocess(const RunConfig& rc, const std::string& dataset,
                          const std::string& format_flag, const std::string& channel) {
  Dataset ds = load_input(dataset, format_flag, channel, rc);
  PipelineConfig pcfg = rc.pipeline_config();
  pcfg.validate();
  char name[32];
  for (size_t i = 0; i < ds.windows.size(); ++i) {
    FreqSignal freq = to_frequency(ds.windows[i], pcfg.wavelet);
    BandSet bands = decompose_bands(freq, ds.windows[i].sample_rate);
    AdjGraph graph = build_bdsag(freq, compute_bdst(bands), pcfg.band_k);
    std::snprintf(name, sizeof(name), "window-%05zu.bdsg", i);
    save_graph(rc.out_dir + "/" + name, graph);
  }
  std::cout << "wrote " << ds.windows.size() << " graph files to " << rc.out_dir << "\n";
  return 0;
}

inline int cmd_graph(const RunConfig& rc, const std::string& dataset,
                     const std::string& format_flag, const std::string& channel, size_t index,
                     const std::string& out_path) {
  Dataset ds = load_input(dataset, format_flag, channel, rc);
  if (index >= ds.windows.size()) throw std::out_of_range("window index out of range");
  PipelineConfig pcfg = rc.pipeline_config();
  pcfg.validate();
  FreqSignal freq = to_frequency(ds.windows[index], pcfg.wavelet);
  BandSet bands = decompose_bands(freq, ds.windows[index].sample_rate);
  AdjGraph graph = build_bdsag(freq, compute_bdst(bands), pcfg.band_k);
  save_graph(out_path, graph);
  std::cout << "wrote graph (" << graph.n << " nodes, K=" << graph.band_k << ") to " << out_path
            << "\n";
  return 0;
}

inline int cmd_train(const RunConfig& rc, const std::string& dataset,
                     const std::string& format_flag, const std::string& channel) {
  rc.validate();
  Dataset ds = load_input(dataset, format_flag, channel, rc);
  ModelConfig mcfg = rc.model_config();
  check_window_len(ds, mcfg);
  std::vector<FoldOutcome> outcomes = run_loso(ds, rc);

  nlohmann::json folds = nlohmann::json::array();
  double mean_acc = 0.0;
  for (const FoldOutcome& fo : outcomes) {
    save_checkpoint(rc.out_dir + "/" + fold_checkpoint_name(fo.subject), mcfg, fo.result.params);
    write_file_atomic(rc.out_dir + "/fold-" + std::to_string(fo.subject) + "-history.csv",
                      history_csv(fo.result.history));
    const EpochStats& last = fo.result.history.back();
    folds.push_back({{"subject", fo.subject},
                     {"final_train_loss", last.mean_loss},
                     {"final_train_accuracy", last.accuracy},
                     {"test_accuracy", fo.metrics.accuracy}});
    mean_acc += fo.metrics.accuracy;
  }
  mean_acc /= static_cast<double>(outcomes.size());
  nlohmann::json summary = {{"config_hash", config_hash(rc)},
                            {"protocol", "LOSO"},
                            {"seed", seeds_json(rc)},
                            {"folds", folds},
                            {"mean_test_accuracy", mean_acc}};
  write_file_atomic(rc.out_dir + "/train-summary.json", summary.dump(2) + "\n");
  std::cout << "trained " << outcomes.size() << " folds; mean held-out accuracy " << mean_acc
            << "\n";
  return 0;
}

inline int cmd_prune(const RunConfig& rc, const std::string& in_path, const std::string& out_path,
                     const std::string& report_path, size_t latency_reps) {
  Checkpoint ck = load_checkpoint(in_path);
  std::vector<size_t> channels = select_prune_channels(ck.params, ck.config, rc.prune_channels);
  std::vector<size_t> neurons = select_prune_neurons(ck.params, ck.config, rc.prune_neurons);
  auto [pruned, report] = apply_pruning(ck.params, ck.config, channels, neurons);

  size_t band_k = static_cast<size_t>(rc.band_k);
  double mflops_before =
      count_mflops(ck.config, ck.params.channel_mask, ck.params.neuron_mask, band_k);
  double mflops_after = count_mflops(ck.config, pruned.channel_mask, pruned.neuron_mask, band_k);
  bool latency_measured = latency_reps > 0;
  if (latency_measured) {
    std::vector<Input> inputs = synthetic_inputs(ck.config, 8);
    report.latency_before_ms =
        measure_model_latency(ck.params, ck.config, inputs, latency_reps).median_ms;
    report.latency_after_ms =
        measure_model_latency(pruned, ck.config, inputs, latency_reps).median_ms;
  }
  save_checkpoint(out_path, ck.config, pruned);

  if (!report_path.empty()) {
    nlohmann::json j = {{"pruned_channel_indices", report.pruned_channel_indices},
                        {"pruned_neuron_indices", report.pruned_neuron_indices},
                        {"pruned_param_count", report.pruned_param_count},
                        {"mflops_before", mflops_before},
                        {"mflops_after", mflops_after},
                        {"footprint_before_bytes", footprint_bytes(in_path)},
                        {"footprint_after_bytes", footprint_bytes(out_path)},
                        {"latency_measured", latency_measured},
                        {"latency_before_ms", report.latency_before_ms},
                        {"latency_after_ms", report.latency_after_ms}};
    write_file_atomic(report_path, j.dump(2) + "\n");
  }
  std::cout << "pruned " << report.pruned_channel_indices.size() << " channels, "
            << report.pruned_neuron_indices.size() << " neurons (" << report.pruned_param_count
            << " weights) -> " << out_path << "\n";
  return 0;
}

inline int cmd_infer(const RunConfig& rc, const std::string& model_path,
                     const std::string& window_path, const std::string& format_flag,
                     const std::string& channel, size_t index) {
  Checkpoint ck = load_checkpoint(model_path);
  Dataset ds = load_input(window_path, format_flag, channel, rc);
  if (index >= ds.windows.size()) throw std::out_of_range("window index out of range");
  check_window_len(ds, ck.config);
  Prediction pred = predict(ck.params, ck.config, ds.windows[index], rc.pipeline_config());
  nlohmann::json j = {{"label", label_to_string(pred.label)}, {"p", {pred.p[0], pred.p[1]}}};
  std::cout << j.dump() << "\n";
  return 0;
}

inline int cmd_bench(const RunConfig& rc, const std::string& dataset,
                     const std::string& format_flag, const std::string& channel, bool ablation,
                     size_t latency_reps) {
  rc.validate();
  Dataset ds = load_input(dataset, format_flag, channel, rc);
  ModelConfig mcfg = rc.model_config();
  check_window_len(ds, mcfg);
  std::vector<FoldOutcome> outcomes = run_loso(ds, rc);

  std::vector<int> predicted, actual;
  double mean_acc = 0.0;
  std::string fold_rows = "ID,Acc,Pre,Spe\n";
  char buf[128];
  for (const FoldOutcome& fo : outcomes) {
    predicted.insert(predicted.end(), fo.predicted.begin(), fo.predicted.end());
    actual.insert(actual.end(), fo.actual.begin(), fo.actual.end());
    mean_acc += fo.metrics.accuracy;
    std::snprintf(buf, sizeof(buf), "%u,%.6f,%.6f,%.6f\n", fo.subject, fo.metrics.accuracy,
                  fo.metrics.precision, fo.metrics.specificity);
    fold_rows += buf;
  }
  mean_acc /= static_cast<double>(outcomes.size());
  PerformanceMetrics pooled = compute_metrics(predicted, actual);
  std::snprintf(buf, sizeof(buf), "mean,%.6f,,\n", mean_acc);
  fold_rows += buf;
  write_file_atomic(rc.out_dir + "/bench-folds.csv", fold_rows);

  // Resource numbers describe the first fold's trained model, persisted so
  // the footprint is the real deployment artifact.
  const FoldOutcome& first = outcomes.front();
  std::string model_path = rc.out_dir + "/bench-model.ldgc";
  save_checkpoint(model_path, mcfg, first.result.params);
  std::vector<Input> inputs;
  PipelineConfig pcfg = rc.pipeline_config();
  std::vector<LosoFold> folds = loso_splits(ds);
  for (size_t idx : folds.front().test_indices) {
    inputs.push_back(prepare_input(ds.windows[idx], pcfg, idx));
    if (inputs.size() >= 16) break;
  }
  LatencyStats lat =
      measure_model_latency(first.result.params, mcfg, inputs, latency_reps);
  nlohmann::json resource = {
      {"footprint_bytes", footprint_bytes(model_path)},
      {"mflops", count_mflops(mcfg, first.result.params.channel_mask,
                              first.result.params.neuron_mask, static_cast<size_t>(rc.band_k))},
      {"latency_median_ms", lat.median_ms},
      {"latency_p95_ms", lat.p95_ms},
      {"latency_reps", lat.reps},
      {"power_w", "unsupported"},
      {"energy_mj", "unsupported"}};

  nlohmann::json performance = metrics_json(pooled);
  performance["mean_fold_accuracy"] = mean_acc;
  nlohmann::json report = {{"config_hash", config_hash(rc)},
                           {"protocol", "LOSO"},
                           {"seed", seeds_json(rc)},
                           {"performance", performance},
                           {"resource", resource}};

  if (ablation) {
    static const char* kVariants[] = {"standard",     "single_branch", "single_fc",
                                      "no_pointwise", "no_depthwise",  "no_partialconv"};
    nlohmann::json rows = nlohmann::json::array();
    std::string ab_rows = "Variant,Acc,Pre,Spe,MFLOPs\n";
    for (const char* v : kVariants) {
      RunConfig rcv = rc;
      rcv.variant = v;
      FoldOutcome fo = run_fold(ds, folds.front(), rcv);
      double mflops =
          count_mflops(rcv.model_config(), fo.result.params.channel_mask,
                       fo.result.params.neuron_mask, static_cast<size_t>(rcv.band_k));
      rows.push_back({{"variant", v},
                      {"accuracy", fo.metrics.accuracy},
                      {"precision", fo.metrics.precision},
                      {"specificity", fo.metrics.specificity},
                      {"mflops", mflops}});
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", v, fo.metrics.accuracy,
                    fo.metrics.precision, fo.metrics.specificity, mflops);
      ab_rows += buf;
    }
    report["ablation"] = rows;
    write_file_atomic(rc.out_dir + "/bench-ablation.csv", ab_rows);
  }
  write_file_atomic(rc.out_dir + "/bench-report.json", report.dump(2) + "\n");
  std::cout << "benchmark report written to " << rc.out_dir << "/bench-report.json"
            << " (mean fold accuracy " << mean_acc << ")\n";
  return 0;
}

inline int cmd_synth(const SynthConfig& scfg, const std::string& out_path,
                     const std::string& format_flag, const RunConfig& rc) {
  Dataset ds = synth_generate(scfg);
  save_dataset(out_path, ds, resolve_format(out_path, format_flag, rc));
  std::cout << "wrote " << ds.windows.size() << " windows to " << out_path << "\n";
  return 0;
}

}  // namespace cli

// The whole command surface, callable in-process. argv excludes the program
// name; returns the process exit code.
inline int run_command(const std::vector<std::string>& argv) {
  CLI::App app{"drowsiness-graph EEG pipeline"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string dataset, format_flag, channel = "Oz", out_flag;

  auto add_common = [&](CLI::App* sub, bool with_dataset, bool with_outdir) {
    sub->add_option("-c,--config", config_path, "key=value config file");
    sub->add_option("--set", overrides, "override one config key (key=value)");
    if (with_dataset) {
      sub->add_option("-d,--dataset", dataset, "dataset file");
      sub->add_option("--format", format_flag, "dataset format: eegd or csv");
      sub->add_option("--channel", channel, "channel to keep from multi-channel data");
    }
    if (with_outdir) sub->add_option("-o,--out", out_flag, "output directory");
  };

  // Assemble the effective config after parsing: flags > file > defaults.
  auto effective = [&]() {
    if (!config_path.empty()) apply_config_file(rc, config_path);
    for (const std::string& kv : overrides) {
      size_t eq = kv.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      rc.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!dataset.empty()) rc.dataset = dataset;
    if (!out_flag.empty()) rc.out_dir = out_flag;
    return rc;
  };

  int rc_exit = 0;

  CLI::App* pre = app.add_subcommand("preprocess", "turn every window into a graph file");
  add_common(pre, true, true);
  pre->callback([&] {
    RunConfig c = effective();
    rc_exit = cli::cmd_preprocess(c, c.dataset, format_flag, channel);
  });

  CLI::App* gr = app.add_subcommand("graph", "serialize one window's graph");
  add_common(gr, true, false);
  size_t graph_index = 0;
  std::string graph_out = "graph.bdsg";
  gr->add_option("-i,--index", graph_index, "window index");
  gr->add_option("-o,--out", graph_out, "output graph file");
  gr->callback([&] {
    RunConfig c = effective();
    rc_exit = cli::cmd_graph(c, c.dataset, format_flag, channel, graph_index, graph_out);
  });

  CLI::App* tr = app.add_subcommand("train", "leave-one-subject-out training");
  add_common(tr, true, true);
  tr->callback([&] {
    RunConfig c = effective();
    rc_exit = cli::cmd_train(c, c.dataset, format_flag, channel);
  });

  CLI::App* pr = app.add_subcommand("prune", "prune a trained checkpoint");
  add_common(pr, false, false);
  std::string prune_in, prune_out = "model-pruned.ldgc", prune_report;
  double pr_channel = -1.0, pr_neuron = -1.0;
  size_t prune_latency_reps = 0;
  pr->add_option("--in", prune_in, "input checkpoint")->required();
  pr->add_option("--out", prune_out, "pruned checkpoint");
  pr->add_option("--report", prune_report, "JSON report path");
  pr->add_option("--pr-channel", pr_channel, "channel pruning ratio");
  pr->add_option("--pr-neuron", pr_neuron, "neuron pruning ratio");
  pr->add_option("--latency-reps", prune_latency_reps, "also time both models (0 = skip)");
  pr->callback([&] {
    RunConfig c = effective();
    if (pr_channel >= 0.0) c.prune_channels = pr_channel;
    if (pr_neuron >= 0.0) c.prune_neurons = pr_neuron;
    rc_exit = cli::cmd_prune(c, prune_in, prune_out, prune_report, prune_latency_reps);
  });

  CLI::App* in = app.add_subcommand("infer", "classify one window");
  add_common(in, false, false);
  std::string infer_model, infer_window;
  size_t infer_index = 0;
  in->add_option("-m,--model", infer_model, "checkpoint file")->required();
  in->add_option("-w,--window", infer_window, "window file (dataset format)")->required();
  in->add_option("--format", format_flag, "window file format: eegd or csv");
  in->add_option("--channel", channel, "channel to keep from multi-channel data");
  in->add_option("-i,--index", infer_index, "window index");
  in->callback([&] {
    RunConfig c = effective();
    rc_exit = cli::cmd_infer(c, infer_model, infer_window, format_flag, channel, infer_index);
  });

  CLI::App* be = app.add_subcommand("bench", "full performance and resource report");
  add_common(be, true, true);
  bool ablation = false;
  size_t bench_latency_reps = 1000;
  be->add_flag("--ablation", ablation, "also train and report every architecture variant");
  be->add_option("--latency-reps", bench_latency_reps, "timed inference repetitions");
  be->callback([&] {
    RunConfig c = effective();
    rc_exit = cli::cmd_bench(c, c.dataset, format_flag, channel, ablation, bench_latency_reps);
  });

  CLI::App* sy = app.add_subcommand("synth", "emit a synthetic labeled dataset");
  add_common(sy, false, false);
  SynthConfig scfg;
  std::string synth_out = "synth.eegd";
  sy->add_option("--seed", scfg.seed, "generator seed");
  sy->add_option("--per-class", scfg.n_per_class, "windows per class");
  sy->add_option("--subjects", scfg.n_subjects, "pseudo-subject count");
  sy->add_option("--gain", scfg.drowsy_band_gain, "drowsy-band amplitude gain");
  sy->add_option("--noise", scfg.noise_std, "white-noise standard deviation");
  sy->add_option("--window-len", scfg.window_len, "samples per window");
  sy->add_option("--rate", scfg.sample_rate, "sample rate in Hz");
  sy->add_option("--format", format_flag, "output format: eegd or csv");
  sy->add_option("-o,--out", synth_out, "output dataset path");
  sy->callback([&] {
    RunConfig c = effective();
    rc_exit = cli::cmd_synth(scfg, synth_out, format_flag, c);
  });

  std::vector<const char*> args;
  args.reserve(argv.size() + 1);
  args.push_back("ldgcn");
  for (const std::string& a : argv) args.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc_exit;
}

}  // namespace ldgcn
