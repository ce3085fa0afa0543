#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "motionseg/motionseg.hpp"

namespace fs = std::filesystem;
using namespace motionseg;

namespace {

enum Exit { kOk = 0, kConfigError = 2, kDataError = 3, kNumericalError = 4 };

struct Common {
  std::string config;
  std::vector<std::string> sets;
  int jobs = 0;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "configuration file (section.key = value)");
    app->add_option("--set", sets, "override a key, e.g. --set train.epochs=5")->take_all();
    app->add_option("--jobs", jobs, "worker threads for frame-level stages");
  }

  RunConfig load() const {
    auto all = sets;
    if (jobs > 0) all.push_back("run.jobs=" + std::to_string(jobs));
    return load_run_config(config, all);
  }
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto f = io::open_write(path);
  std::fwrite(text.data(), 1, text.size(), f.get());
}

void write_label_dir(const fs::path& dir, const std::vector<std::vector<ScoredBox>>& labels) {
  fs::create_directories(dir);
  for (std::size_t t = 0; t < labels.size(); ++t) write_labels(label_path(dir, t), labels[t]);
}

int run_gen(const Common& c, std::uint64_t seed, int count, const fs::path& out) {
  const RunConfig cfg = c.load();
  if (count <= 0) {
    write_sequence(generate_sequence(cfg.scene, seed), out);
    std::printf("wrote %s\n", out.string().c_str());
    return kOk;
  }
  std::vector<std::size_t> idx(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  parallel_for(idx.size(), cfg.run.jobs, [&](std::size_t i) {
    write_sequence(generate_sequence(cfg.scene, sequence_seed(seed, i)), out / sequence_name(i));
  });
  std::printf("wrote %d sequences under %s\n", count, out.string().c_str());
  return kOk;
}

int run_split(const Common& c, const fs::path& data, const fs::path& out, std::optional<std::uint64_t> seed) {
  const RunConfig cfg = c.load();
  const auto dirs = dataset_sequences(data);
  std::vector<std::string> names;
  for (const auto& d : dirs) names.push_back(d.filename().string());
  const auto splits = split_dataset(dirs.size(), cfg.split, seed.value_or(cfg.run.seed));
  write_split_manifest(out.empty() ? data / "splits" : out, names, splits);
  std::size_t counts[5] = {0, 0, 0, 0, 0};
  for (auto s : splits) ++counts[static_cast<int>(s)];
  std::printf("train_pseudo %zu  train_det %zu  val_pseudo %zu  val_det %zu  unused %zu\n", counts[0], counts[1],
              counts[2], counts[3], counts[4]);
  return kOk;
}

int run_preprocess(const Common& c, const fs::path& in, const fs::path& out, bool report) {
  const RunConfig cfg = c.load();
  const Sequence seq = read_sequence(in);
  const auto frames = preprocess_sequence(seq, cfg.preprocess, cfg.run.jobs);
  write_filtered_sequence(frames, seq, out);
  if (report) {
    const auto rep = filtering_report(seq, frames);
    std::printf("static removal precision %.4f recall %.4f\n", rep.precision(), rep.recall());
    std::printf("x_f  static_orig  static_filt  moving_orig  moving_filt\n");
    for (const auto& r : rep.interior) {
      std::printf("%-3d  %11.1f  %11.1f  %11.1f  %11.1f\n", r.x_f, r.static_original, r.static_filtered,
                  r.moving_original, r.moving_filtered);
    }
  }
  return kOk;
}

int run_train(const Common& c, const fs::path& data, const fs::path& val, const fs::path& out) {
  const RunConfig cfg = c.load();
  std::vector<FilteredFrame> frames;
  for (const auto& dir : dataset_sequences(data, Split::train_pseudo)) {
    auto f = load_frames(dir, cfg.preprocess, cfg.run.jobs);
    for (std::size_t t = 0; t < f.size(); t += static_cast<std::size_t>(cfg.experiment.train_stride)) {
      frames.push_back(std::move(f[t]));
    }
  }
  std::vector<MotionGraph> val_graphs;
  if (!val.empty()) {
    for (const auto& dir : dataset_sequences(val, Split::val_pseudo)) {
      const auto f = load_frames(dir, cfg.preprocess, cfg.run.jobs);
      auto g = build_graphs(f, cfg.graph, cfg.run.jobs);
      val_graphs.insert(val_graphs.end(), std::make_move_iterator(g.begin()), std::make_move_iterator(g.end()));
    }
  }
  auto graphs = build_graphs(frames, cfg.graph, cfg.run.jobs);
  std::erase_if(graphs, [](const MotionGraph& g) { return g.num_nodes() == 0; });
  if (graphs.empty()) throw ConfigError("train: no non-empty training frames under " + data.string());
  MpnModel m = init_model(cfg.mpn, cfg.graph.node_dim(), cfg.graph.edge_dim(), cfg.train.seed);
  fit_standardization(m, graphs);
  std::printf("training on %zu graphs, %zu parameters\n", graphs.size(), m.num_parameters());
  train(m, graphs, cfg.train, val_graphs, [](const EpochLog& e) {
    std::printf("epoch %3d  lr %.6f  loss %.6f  acc %.4f", e.epoch, e.lr, e.train_loss, e.train_accuracy);
    if (e.val) std::printf("  val_loss %.6f  val_acc %.4f", e.val->loss, e.val->accuracy);
    std::printf("\n");
    std::fflush(stdout);
  });
  save_model(m, out);
  std::printf("wrote %s\n", out.string().c_str());
  return kOk;
}

int run_label(const Common& c, const fs::path& model_path, const fs::path& in, const fs::path& out,
              const std::string& profile) {
  RunConfig cfg = c.load();
  if (!profile.empty()) {
    cfg.boxes.profile = profile;
    cfg.boxes.validate();
  }
  const MpnModel m = load_model(model_path);
  const auto frames = load_frames(in, cfg.preprocess, cfg.run.jobs);
  std::vector<std::vector<ScoredBox>> labels(frames.size());
  parallel_for(frames.size(), cfg.run.jobs, [&](std::size_t t) {
    try {
      labels[t] = mpn_labels(frames[t], m, cfg.graph, cfg.cluster.mode, cfg.boxes);
    } catch (const ShapeError& e) {
      throw ShapeError("frame " + std::to_string(t) + ": " + e.what());
    }
  });
  write_label_dir(out, labels);
  std::printf("labeled %zu frames into %s\n", frames.size(), out.string().c_str());
  return kOk;
}

int run_baseline(const Common& c, const std::string& variant, bool size_filter, const fs::path& in, const fs::path& out) {
  RunConfig cfg = c.load();
  if (!variant.empty()) cfg.dbscan.variant = parse_enum<DbscanVariant>(variant);
  if (size_filter) cfg.dbscan.size_filter = true;
  const auto frames = load_frames(in, cfg.preprocess, cfg.run.jobs);
  std::vector<std::vector<ScoredBox>> labels(frames.size());
  parallel_for(frames.size(), cfg.run.jobs,
               [&](std::size_t t) { labels[t] = baseline_labels(frames[t], cfg.dbscan, cfg.boxes); });
  write_label_dir(out, labels);
  std::printf("labeled %zu frames into %s\n", frames.size(), out.string().c_str());
  return kOk;
}

int run_eval(const Common& c, const fs::path& pred, const fs::path& gt, const std::string& iou, const std::string& mode,
             const fs::path& report) {
  RunConfig cfg = c.load();
  if (!iou.empty()) cfg.eval.iou = parse_enum<IouKind>(iou);
  if (!mode.empty()) cfg.eval.mode = parse_enum<EvalMode>(mode);
  const auto frames = load_frames(gt, cfg.preprocess, cfg.run.jobs);
  std::vector<std::vector<ScoredBox>> labels;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto path = label_path(pred, t);
    if (!fs::exists(path)) throw ParseError("missing label file " + path.string());
    labels.push_back(read_labels(path));
  }
  const auto rep = evaluate_labels(frames, labels, cfg.eval);
  const std::string csv = metrics_csv(rep);
  if (!report.empty()) write_text(report, csv);
  std::fputs(csv.c_str(), stdout);
  return kOk;
}

int run_experiment(const Common& c, const std::string& name, const fs::path& out, bool gnuplot, bool quiet) {
  const RunConfig cfg = c.load();
  ExperimentRunner runner(cfg, [quiet](const std::string& s) {
    if (!quiet) std::fprintf(stderr, "%s\n", s.c_str());
  });
  const Table t = runner.run(name);
  write_table(t, out, gnuplot);
  std::fputs(t.text().c_str(), stdout);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"Motion-cue instance segmentation and pseudo-labeling for Lidar sequences"};
  app.require_subcommand(0, 1);
  bool dump_flag = false;
  app.add_flag("--dump-config", dump_flag, "print the effective configuration and exit");
  Common top;
  top.attach(&app);

  Common gen_c, split_c, pre_c, train_c, label_c, base_c, eval_c, exp_c, dump_c;
  std::uint64_t gen_seed = 1;
  int gen_count = 0;
  fs::path gen_out;
  auto* gen = app.add_subcommand("gen", "generate synthetic sequences");
  gen_c.attach(gen);
  gen->add_option("--seed", gen_seed, "sequence seed")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "generate a dataset of this many sequences (seq_NNN subdirectories)");

  fs::path split_data, split_out;
  std::optional<std::uint64_t> split_seed;
  auto* split = app.add_subcommand("split", "assign whole sequences to splits");
  split_c.attach(split);
  split->add_option("--data", split_data, "dataset root")->required();
  split->add_option("--out", split_out, "manifest path (default <data>/splits)");
  split->add_option("--seed", split_seed, "shuffle seed (default run.seed)");

  fs::path pre_in, pre_out;
  bool pre_report = false;
  auto* pre = app.add_subcommand("preprocess", "filter ground, range and static points; attach trajectories");
  pre_c.attach(pre);
  pre->add_option("--in", pre_in, "sequence directory")->required();
  pre->add_option("--out", pre_out, "output directory")->required();
  pre->add_flag("--report", pre_report, "print filtering quality and interior-point statistics");

  fs::path train_data, train_val, train_out;
  auto* tr = app.add_subcommand("train", "train the edge classifier");
  train_c.attach(tr);
  tr->add_option("--data", train_data, "dataset root or sequence directory")->required();
  tr->add_option("--val", train_val, "validation dataset root or sequence directory");
  tr->add_option("--out", train_out, "model file")->required();

  fs::path label_model, label_in, label_out;
  std::string label_profile;
  auto* label = app.add_subcommand("label", "write pseudo-labels for a sequence");
  label_c.attach(label);
  label->add_option("--model", label_model, "model file")->required();
  label->add_option("--in", label_in, "sequence directory (raw or filtered)")->required();
  label->add_option("--out", label_out, "label directory")->required();
  label->add_option("--profile", label_profile, "inflation profile: waymo, av2, none or l,w,h");

  fs::path base_in, base_out;
  std::string base_variant;
  bool base_filter = false;
  auto* base = app.add_subcommand("baseline", "density-clustering pseudo-labels");
  base_c.attach(base);
  base->add_option("--variant", base_variant, "vanilla, plus or plus-long");
  base->add_flag("--size-filter", base_filter, "drop boxes outside the size bounds");
  base->add_option("--in", base_in, "sequence directory (raw or filtered)")->required();
  base->add_option("--out", base_out, "label directory")->required();

  fs::path eval_pred, eval_gt, eval_report;
  std::string eval_iou, eval_mode;
  auto* ev = app.add_subcommand("eval", "score label files against ground truth");
  eval_c.attach(ev);
  ev->add_option("--pred", eval_pred, "label directory")->required();
  ev->add_option("--gt", eval_gt, "sequence directory (raw or filtered)")->required();
  ev->add_option("--iou", eval_iou, "seg or box3d");
  ev->add_option("--mode", eval_mode, "moving or all");
  ev->add_option("--report", eval_report, "CSV output path");

  std::string exp_name;
  fs::path exp_out = "reports";
  bool exp_gnuplot = false, exp_quiet = false;
  auto* ex = app.add_subcommand("experiment", "run a table sweep on generated data");
  exp_c.attach(ex);
  ex->add_option("table", exp_name, "t1, t2, t3, t3_scaling or t8")->required();
  ex->add_option("--out", exp_out, "report directory");
  ex->add_flag("--gnuplot", exp_gnuplot, "also write a gnuplot script");
  ex->add_flag("--quiet", exp_quiet, "no progress messages");

  auto* dump = app.add_subcommand("dump-config", "print the effective configuration");
  dump_c.attach(dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (dump_flag) {
      std::fputs(dump_config(top.load()).c_str(), stdout);
      return kOk;
    }
    if (*gen) return run_gen(gen_c, gen_seed, gen_count, gen_out);
    if (*split) return run_split(split_c, split_data, split_out, split_seed);
    if (*pre) return run_preprocess(pre_c, pre_in, pre_out, pre_report);
    if (*tr) return run_train(train_c, train_data, train_val, train_out);
    if (*label) return run_label(label_c, label_model, label_in, label_out, label_profile);
    if (*base) return run_baseline(base_c, base_variant, base_filter, base_in, base_out);
    if (*ev) return run_eval(eval_c, eval_pred, eval_gt, eval_iou, eval_mode, eval_report);
    if (*ex) return run_experiment(exp_c, exp_name, exp_out, exp_gnuplot, exp_quiet);
    if (*dump) {
      std::fputs(dump_config(dump_c.load()).c_str(), stdout);
      return kOk;
    }
    std::fputs(app.help().c_str(), stdout);
    return kOk;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumericalError;
  } catch (const Error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataError;
  }
}
