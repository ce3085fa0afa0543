#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "motionseg/baselines.hpp"
#include "motionseg/boxes.hpp"
#include "motionseg/cluster.hpp"
#include "motionseg/config.hpp"
#include "motionseg/eval.hpp"
#include "motionseg/graph.hpp"
#include "motionseg/mpn.hpp"
#include "motionseg/preprocess.hpp"
#include "motionseg/scene.hpp"
#include "motionseg/sequence_io.hpp"

namespace motionseg {

/// Runs f(i) for i in [0, n) on up to `jobs` threads. Each index must write only its own output slot.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// dataset and splits

enum class Split { train_pseudo, train_det, val_pseudo, val_det, unused };

template <>
struct EnumNames<Split> {
  static constexpr std::array<std::pair<Split, std::string_view>, 5> values{{
      {Split::train_pseudo, "train_pseudo"},
      {Split::train_det, "train_det"},
      {Split::val_pseudo, "val_pseudo"},
      {Split::val_det, "val_det"},
      {Split::unused, "unused"},
  }};
};

inline std::uint64_t sequence_seed(std::uint64_t seed, std::size_t index) { return mix_seed(seed, index); }

inline std::string sequence_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%03zu", index);
  return buf;
}

/// Whole sequences to splits: a seeded shuffle, then consecutive blocks of floor(fraction * n).
inline std::vector<Split> split_dataset(std::size_t n, const SplitConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(seed, 0x5b117ULL));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
  std::vector<Split> out(n, Split::unused);
  const auto fr = cfg.fractions();
  std::size_t next = 0;
  for (std::size_t s = 0; s < fr.size(); ++s) {
    const auto count = static_cast<std::size_t>(std::floor(fr[s] * static_cast<double>(n) + 1e-9));
    if (fr[s] > 0.0 && count == 0) {
      throw ConfigError("split " + std::string(enum_name(static_cast<Split>(s))) + " gets no sequence out of " +
                        std::to_string(n));
    }
    for (std::size_t k = 0; k < count; ++k) out[order[next++]] = static_cast<Split>(s);
  }
  return out;
}

inline void write_split_manifest(const std::filesystem::path& path, const std::vector<std::string>& names,
                                 const std::vector<Split>& splits) {
  if (names.size() != splits.size()) throw ShapeError("split manifest: name and split counts differ");
  auto f = io::open_write(path);
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::fprintf(f.get(), "%s %s\n", names[i].c_str(), std::string(enum_name(splits[i])).c_str());
  }
}

inline std::vector<std::pair<std::string, Split>> read_split_manifest(const std::filesystem::path& path) {
  io::LineReader r(io::read_file(path), path.string());
  std::vector<std::pair<std::string, Split>> out;
  while (!r.at_end()) {
    auto t = r.next("split");
    if (t.size() != 2) r.fail("split", "expected '<sequence> <split>'");
    try {
      out.emplace_back(std::string(t[0]), parse_enum<Split>(t[1]));
    } catch (const ConfigError& e) {
      r.fail("split", e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// per-frame stages

inline std::vector<std::size_t> strided_frames(std::size_t n_frames, int stride) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < n_frames; t += static_cast<std::size_t>(std::max(stride, 1))) out.push_back(t);
  return out;
}

inline std::vector<FilteredFrame> preprocess_frames(const Sequence& seq, const PreprocessConfig& cfg,
                                                    const std::vector<std::size_t>& frames, int jobs = 1) {
  std::vector<FilteredFrame> out(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t i) { out[i] = preprocess_frame(seq, frames[i], cfg); });
  return out;
}

inline std::vector<FilteredFrame> preprocess_sequence(const Sequence& seq, const PreprocessConfig& cfg, int jobs = 1) {
  return preprocess_frames(seq, cfg, strided_frames(seq.frames.size(), 1), jobs);
}

/// Mean symmetrized edge score inside each cluster.
inline std::vector<double> cluster_scores(const SegmentationResult& seg, std::span<const WeightedEdge> sym, std::size_t n) {
  std::vector<int> owner(n, -1);
  for (std::size_t c = 0; c < seg.clusters.size(); ++c) {
    for (int i : seg.clusters[c]) owner[i] = static_cast<int>(c);
  }
  std::vector<double> sum(seg.clusters.size(), 0.0);
  std::vector<int> count(seg.clusters.size(), 0);
  for (const auto& e : sym) {
    if (owner[e.i] >= 0 && owner[e.i] == owner[e.j]) {
      sum[owner[e.i]] += e.score;
      ++count[owner[e.i]];
    }
  }
  std::vector<double> out(seg.clusters.size(), 0.0);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = count[c] > 0 ? sum[c] / count[c] : 0.0;
  return out;
}

/// Clusters from per-edge scores, then boxes; `inflate_boxes` applies the configured profile.
inline std::vector<ScoredBox> boxes_from_scores(const FilteredFrame& frame, std::span<const Edge> edges,
                                                std::span<const double> scores, ClusterMode mode, const BoxConfig& boxes,
                                                bool inflate_boxes = true, SegmentationResult* seg_out = nullptr) {
  const auto sym = symmetrize(edges, scores);
  const auto seg = finalize(correlation_cluster(static_cast<int>(frame.size()), sym, mode));
  const auto score = cluster_scores(seg, sym, frame.size());
  auto out = cluster_boxes(frame, seg, boxes.center, boxes.min_dim, score);
  if (inflate_boxes) {
    const Vec3 minima = inflation_minima(boxes.profile);
    for (auto& b : out) b.box = inflate(b.box, minima);
  }
  if (seg_out != nullptr) *seg_out = seg;
  return out;
}

/// Pseudo-labels of the learned pipeline for one frame.
inline std::vector<ScoredBox> mpn_labels(const FilteredFrame& frame, const MpnModel& model, const FeatureConfig& features,
                                         ClusterMode mode, const BoxConfig& boxes, bool inflate_boxes = true) {
  if (frame.size() == 0) return {};
  const MotionGraph g = build_graph(frame, features, {});
  const auto scores = forward(model, g).final_scores();
  return boxes_from_scores(frame, g.edges, scores, mode, boxes, inflate_boxes);
}

/// Same clustering driven by ground-truth edge labels: the ceiling of a given graph construction.
inline std::vector<ScoredBox> graph_oracle_labels(const FilteredFrame& frame, const FeatureConfig& features,
                                                  ClusterMode mode, const BoxConfig& boxes, bool inflate_boxes = true) {
  if (frame.size() == 0) return {};
  const MotionGraph g = build_graph(frame, features);
  std::vector<double> scores(g.edges.size());
  for (std::size_t e = 0; e < scores.size(); ++e) scores[e] = g.edge_labels[e] ? 1.0 : 0.0;
  return boxes_from_scores(frame, g.edges, scores, mode, boxes, inflate_boxes);
}

inline std::vector<MotionGraph> build_graphs(std::span<const FilteredFrame> frames, const FeatureConfig& features,
                                             int jobs = 1) {
  std::vector<MotionGraph> out(frames.size());
  parallel_for(frames.size(), jobs, [&](std::size_t i) { out[i] = build_graph(frames[i], features); });
  return out;
}

/// Initializes, standardizes and trains a model on the given frames.
inline MpnModel train_model(std::span<const FilteredFrame> frames, const FeatureConfig& features, const MpnConfig& hyper,
                            const TrainConfig& train_cfg, int jobs = 1, std::vector<EpochLog>* log = nullptr,
                            const std::function<void(const EpochLog&)>& on_epoch = {}) {
  auto graphs = build_graphs(frames, features, jobs);
  std::erase_if(graphs, [](const MotionGraph& g) { return g.num_nodes() == 0; });
  if (graphs.empty()) throw ConfigError("train: no non-empty training frames");
  MpnModel m = init_model(hyper, features.node_dim(), features.edge_dim(), train_cfg.seed);
  fit_standardization(m, graphs);
  auto l = train(m, graphs, train_cfg, {}, on_epoch);
  if (log != nullptr) *log = std::move(l);
  return m;
}

inline MetricsReport evaluate_labels(std::span<const FilteredFrame> frames, const std::vector<std::vector<ScoredBox>>& labels,
                                     const EvalConfig& cfg) {
  if (frames.size() != labels.size()) throw ShapeError("evaluate: frame and label counts differ");
  std::vector<MetricsReport> per(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) per[i] = evaluate_frame(labels[i], frames[i].boxes, frames[i].points, cfg);
  return aggregate(per, cfg);
}

/// Frames of a sequence directory: filtered directories load as-is, raw ones are preprocessed.
inline std::vector<FilteredFrame> load_frames(const std::filesystem::path& dir, const PreprocessConfig& cfg, int jobs = 1) {
  const auto m = io::read_manifest(dir);
  if (m.kind == "motionseg-filtered") return read_filtered_sequence(dir).frames;
  return preprocess_sequence(read_sequence(dir), cfg, jobs);
}

/// Sequence directories under a dataset root. A directory holding a manifest is itself one sequence;
/// with a `splits` manifest only sequences of `split` are returned.
inline std::vector<std::filesystem::path> dataset_sequences(const std::filesystem::path& root,
                                                            std::optional<Split> split = std::nullopt) {
  namespace fs = std::filesystem;
  if (fs::exists(root / "manifest")) return {root};
  if (!fs::is_directory(root)) throw ParseError(root.string() + ": not a directory");
  std::vector<fs::path> out;
  if (split && fs::exists(root / "splits")) {
    for (const auto& [name, s] : read_split_manifest(root / "splits")) {
      if (s == *split) out.push_back(root / name);
    }
    return out;
  }
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ParseError(root.string() + ": no sequence directories found");
  return out;
}

// ---------------------------------------------------------------------------
// report tables

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const {
    std::string s;
    for (std::size_t c = 0; c < columns.size(); ++c) s += (c ? "," : "") + columns[c];
    s += '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) s += (c ? "," : "") + r[c];
      s += '\n';
    }
    return s;
  }

  std::string text() const {
    std::vector<std::size_t> width(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) width[c] = columns[c].size();
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
      std::string s;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        if (c) s += "  ";
        s += cells[c] + std::string(width[c] - cells[c].size(), ' ');
      }
      while (!s.empty() && s.back() == ' ') s.pop_back();
      return s + '\n';
    };
    std::string s = line(columns);
    std::size_t total = 0;
    for (auto w : width) total += w;
    s += std::string(total + 2 * (columns.size() - 1), '-') + '\n';
    for (const auto& r : rows) s += line(r);
    return s;
  }

  /// Column value of the first row whose leading cells equal `key`.
  std::string get(const std::vector<std::string>& key, const std::string& column) const {
    const auto col = std::find(columns.begin(), columns.end(), column);
    if (col == columns.end()) throw ConfigError(name + ": no column " + column);
    for (const auto& r : rows) {
      if (std::equal(key.begin(), key.end(), r.begin())) return r[static_cast<std::size_t>(col - columns.begin())];
    }
    throw ConfigError(name + ": no row matching the requested key");
  }
  double value(const std::vector<std::string>& key, const std::string& column) const {
    double v = 0.0;
    field_from_string(get(key, column), v);
    return v;
  }
};

inline std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline const std::vector<std::string>& metric_columns() {
  static const std::vector<std::string> cols{"iou",       "threshold", "precision", "recall",
                                             "f1",        "tp",        "fp",        "fn",
                                             "ufp",       "recall_vehicle", "recall_pedestrian", "recall_cyclist"};
  return cols;
}

/// One table row per threshold, prefixed by `key`.
inline void add_metric_rows(Table& t, const std::vector<std::string>& key, IouKind iou, const MetricsReport& r) {
  for (const auto& row : r.rows) {
    std::vector<std::string> cells = key;
    char thr[16];
    std::snprintf(thr, sizeof thr, "%.2f", row.threshold);
    cells.insert(cells.end(), {std::string(enum_name(iou)), thr, fixed6(row.precision()), fixed6(row.recall()),
                               fixed6(row.f1()), std::to_string(row.tp), std::to_string(row.fp), std::to_string(row.fn),
                               fixed6(r.ufp())});
    for (const auto c : kEvalClasses) cells.push_back(fixed6(row.class_recall(c)));
    t.rows.push_back(std::move(cells));
  }
}

inline std::string gnuplot_script(const Table& t) {
  std::string s = "# bar chart of f1 per row\nset datafile separator ','\nset style data histograms\n";
  s += "set style fill solid 0.6\nset yrange [0:1]\nset ylabel 'F1'\nset xtics rotate by -40\n";
  s += "set terminal pngcairo size 1000,500\nset output '" + t.name + ".png'\n";
  const auto f1 = std::find(t.columns.begin(), t.columns.end(), "f1");
  if (f1 != t.columns.end()) {
    const auto col = static_cast<long>(f1 - t.columns.begin()) + 1;
    s += "plot '" + t.name + ".csv' using " + std::to_string(col) + ":xtic(stringcolumn(1).' '.stringcolumn(2)) title 'f1'\n";
  }
  return s;
}

inline void write_table(const Table& t, const std::filesystem::path& dir, bool gnuplot = false) {
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    auto f = io::open_write(p);
    std::fwrite(text.data(), 1, text.size(), f.get());
  };
  write(dir / (t.name + ".csv"), t.csv());
  write(dir / (t.name + ".txt"), t.text());
  if (gnuplot) write(dir / (t.name + ".gp"), gnuplot_script(t));
}

// ---------------------------------------------------------------------------
// experiments

/// Generates the synthetic dataset on demand and caches preprocessed frames and trained models,
/// so that experiments sharing a setting reuse the same work.
class ExperimentRunner {
 public:
  explicit ExperimentRunner(RunConfig cfg, std::function<void(const std::string&)> log = {})
      : cfg_(std::move(cfg)), log_(std::move(log)) {
    cfg_.validate();
    splits_ = split_dataset(static_cast<std::size_t>(cfg_.experiment.sequences), cfg_.split, cfg_.run.seed);
  }

  const RunConfig& config() const { return cfg_; }
  const std::vector<Split>& splits() const { return splits_; }

  std::vector<std::size_t> sequences_in(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits_.size(); ++i) {
      if (splits_[i] == s) out.push_back(i);
    }
    return out;
  }

  /// Training pool: train_pseudo then train_det; fractions take nested prefixes.
  std::vector<std::size_t> training_sequences(double fraction) const {
    auto pool = sequences_in(Split::train_pseudo);
    const auto det = sequences_in(Split::train_det);
    pool.insert(pool.end(), det.begin(), det.end());
    if (pool.empty()) throw ConfigError("experiment: the training pool is empty");
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * pool.size() + 1e-9)));
    pool.resize(std::min(n, pool.size()));
    return pool;
  }

  const Sequence& sequence(std::size_t index) {
    auto it = sequences_.find(index);
    if (it == sequences_.end()) {
      it = sequences_.emplace(index, generate_sequence(cfg_.scene, sequence_seed(cfg_.run.seed, index))).first;
    }
    return it->second;
  }

  PreprocessConfig preprocess_for(TrajectorySource source) const {
    PreprocessConfig p = cfg_.preprocess;
    p.trajectory_source = source;
    return p;
  }

  std::vector<FilteredFrame> frames(const std::vector<std::size_t>& seqs, TrajectorySource source, int stride) {
    std::vector<FilteredFrame> out;
    for (std::size_t s : seqs) {
      const std::string key = std::to_string(s) + "/" + std::string(enum_name(source)) + "/" + std::to_string(stride);
      auto it = frames_.find(key);
      if (it == frames_.end()) {
        const auto& seq = sequence(s);
        it = frames_.emplace(key, preprocess_frames(seq, preprocess_for(source), strided_frames(seq.frames.size(), stride),
                                                    cfg_.run.jobs))
                 .first;
      }
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
  }

  std::vector<FilteredFrame> eval_frames(TrajectorySource source) {
    const auto seqs = sequences_in(Split::val_pseudo);
    if (seqs.empty()) throw ConfigError("experiment: the val_pseudo split is empty");
    return frames(seqs, source, cfg_.experiment.eval_stride);
  }

  const MpnModel& model(TrajectorySource source, double fraction, const FeatureConfig& features) {
    const auto seqs = training_sequences(fraction);
    std::string key = std::string(enum_name(source)) + "/" + std::to_string(seqs.size());
    for (const auto& [k, v] : to_fields(features)) key += "/" + v;
    auto it = models_.find(key);
    if (it != models_.end()) return it->second;
    const auto train_frames = frames(seqs, source, cfg_.experiment.train_stride);
    note("training " + key + " on " + std::to_string(train_frames.size()) + " frames");
    auto m = train_model(train_frames, features, cfg_.mpn, cfg_.train, cfg_.run.jobs);
    return models_.emplace(key, std::move(m)).first->second;
  }

  template <typename LabelFn>
  std::vector<std::vector<ScoredBox>> label_frames(const std::vector<FilteredFrame>& frames, LabelFn&& fn) {
    std::vector<std::vector<ScoredBox>> out(frames.size());
    parallel_for(frames.size(), cfg_.run.jobs, [&](std::size_t i) { out[i] = fn(frames[i]); });
    return out;
  }

  MetricsReport score(const std::vector<FilteredFrame>& frames, const std::vector<std::vector<ScoredBox>>& labels,
                      IouKind iou) const {
    EvalConfig e = cfg_.eval;
    e.iou = iou;
    return evaluate_labels(frames, labels, e);
  }

  /// Graph-construction and feature ablation, scored with SegIoU.
  Table t1() {
    Table t{"t1_graph_ablation", {"labels", "knn_space", "node_variant", "edge_variant"}, {}};
    t.columns.insert(t.columns.end(), metric_columns().begin(), metric_columns().end());
    const auto source = TrajectorySource::noisy_oracle;
    const auto frames = eval_frames(source);
    auto add = [&](const std::string& kind, const FeatureConfig& f, const std::vector<std::vector<ScoredBox>>& labels) {
      add_metric_rows(t,
                      {kind, std::string(enum_name(f.knn_space)), std::string(enum_name(f.node_variant)),
                       std::string(enum_name(f.edge_variant))},
                      IouKind::seg, score(frames, labels, IouKind::seg));
    };
    for (const auto space : {KnnSpace::velocity, KnnSpace::position}) {
      FeatureConfig f = cfg_.graph;
      f.knn_space = space;
      add("oracle", f, label_frames(frames, [&](const FilteredFrame& fr) {
            return graph_oracle_labels(fr, f, cfg_.cluster.mode, cfg_.boxes);
          }));
    }
    std::vector<FeatureConfig> variants;
    for (const auto space : {KnnSpace::velocity, KnnSpace::position}) {
      FeatureConfig f = cfg_.graph;
      f.knn_space = space;
      variants.push_back(f);
    }
    for (const auto nv : {FeatureVariant::velocity, FeatureVariant::position, FeatureVariant::both}) {
      FeatureConfig f = cfg_.graph;
      f.node_variant = nv;
      variants.push_back(f);
    }
    for (const auto ev : {FeatureVariant::velocity, FeatureVariant::position, FeatureVariant::both}) {
      FeatureConfig f = cfg_.graph;
      f.edge_variant = ev;
      variants.push_back(f);
    }
    std::vector<std::string> seen;
    for (const auto& f : variants) {
      std::string key;
      for (const auto& [k, v] : to_fields(f)) key += v + "/";
      if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
      seen.push_back(key);
      const auto& m = model(source, cfg_.experiment.ablation_fraction, f);
      add("trained", f, label_frames(frames, [&](const FilteredFrame& fr) {
            return mpn_labels(fr, m, f, cfg_.cluster.mode, cfg_.boxes);
          }));
    }
    return t;
  }

  /// Inflation on and off on a pedestrian-heavy fixture.
  Table t2() {
    Table t{"t2_inflation", {"inflation"}, {}};
    t.columns.insert(t.columns.end(), metric_columns().begin(), metric_columns().end());
    const auto source = TrajectorySource::noisy_oracle;
    const auto& m = model(source, cfg_.experiment.train_fraction, cfg_.graph);
    const auto frames = fixture_frames(source);
    for (const bool on : {false, true}) {
      BoxConfig b = cfg_.boxes;
      if (!on) b.profile = "none";
      const auto labels = label_frames(frames, [&](const FilteredFrame& fr) {
        return mpn_labels(fr, m, cfg_.graph, cfg_.cluster.mode, b);
      });
      for (const auto iou : {IouKind::seg, IouKind::box3d}) {
        add_metric_rows(t, {on ? b.profile : "none"}, iou, score(frames, labels, iou));
      }
    }
    return t;
  }

  /// Learned pipeline against the density baselines, with oracle and noisy trajectories.
  Table t3() {
    Table t{"t3_pseudo_quality", {"trajectories", "method"}, {}};
    t.columns.insert(t.columns.end(), metric_columns().begin(), metric_columns().end());
    for (const auto source : {TrajectorySource::oracle, TrajectorySource::noisy_oracle}) {
      const std::string traj = source == TrajectorySource::oracle ? "oracle" : "noisy";
      const auto frames = eval_frames(source);
      const auto& m = model(source, cfg_.experiment.train_fraction, cfg_.graph);
      std::vector<std::pair<std::string, std::vector<std::vector<ScoredBox>>>> methods;
      methods.emplace_back("mpn", label_frames(frames, [&](const FilteredFrame& fr) {
                             return mpn_labels(fr, m, cfg_.graph, cfg_.cluster.mode, cfg_.boxes);
                           }));
      for (const auto& [name, variant, filter] : baseline_variants()) {
        DbscanConfig d = cfg_.dbscan;
        d.variant = variant;
        d.size_filter = filter;
        methods.emplace_back(name, label_frames(frames, [&](const FilteredFrame& fr) {
                               return baseline_labels(fr, d, cfg_.boxes);
                             }));
      }
      for (const auto iou : {IouKind::seg, IouKind::box3d}) {
        for (const auto& [name, labels] : methods) add_metric_rows(t, {traj, name}, iou, score(frames, labels, iou));
      }
    }
    return t;
  }

  /// Held-out quality against the amount of training data (nested prefixes of the pool).
  Table t3_scaling() {
    Table t{"t3_scaling", {"fraction", "train_sequences"}, {}};
    t.columns.insert(t.columns.end(), metric_columns().begin(), metric_columns().end());
    const auto source = TrajectorySource::noisy_oracle;
    const auto frames = eval_frames(source);
    for (const double f : cfg_.experiment.fraction_list()) {
      const auto& m = model(source, f, cfg_.graph);
      const auto labels = label_frames(frames, [&](const FilteredFrame& fr) {
        return mpn_labels(fr, m, cfg_.graph, cfg_.cluster.mode, cfg_.boxes);
      });
      char buf[16];
      std::snprintf(buf, sizeof buf, "%.2f", f);
      for (const auto iou : {IouKind::seg, IouKind::box3d}) {
        add_metric_rows(t, {buf, std::to_string(training_sequences(f).size())}, iou, score(frames, labels, iou));
      }
    }
    return t;
  }

  /// Modal boxes from ground-truth identities, keeping only clusters of at least x_f filtered points.
  Table t8() {
    Table t{"t8_oracle", {"x_f"}, {}};
    t.columns.insert(t.columns.end(), metric_columns().begin(), metric_columns().end());
    const auto frames = eval_frames(TrajectorySource::oracle);
    for (const int xf : cfg_.experiment.xf_list()) {
      const auto labels = label_frames(frames, [&](const FilteredFrame& fr) {
        return oracle_extract(fr, fr.trajectories, xf, cfg_.boxes.center, cfg_.boxes.min_dim);
      });
      for (const auto iou : {IouKind::seg, IouKind::box3d}) {
        add_metric_rows(t, {std::to_string(xf)}, iou, score(frames, labels, iou));
      }
    }
    return t;
  }

  Table run(const std::string& name) {
    if (name == "t1" || name == "t1_graph_ablation") return t1();
    if (name == "t2" || name == "t2_inflation") return t2();
    if (name == "t3" || name == "t3_pseudo_quality") return t3();
    if (name == "t3_scaling" || name == "scaling") return t3_scaling();
    if (name == "t8" || name == "t8_oracle") return t8();
    throw ConfigError("unknown experiment '" + name + "', expected t1|t2|t3|t3_scaling|t8");
  }

  static std::vector<std::tuple<std::string, DbscanVariant, bool>> baseline_variants() {
    return {{"dbscan", DbscanVariant::vanilla, false},
            {"dbscan-sf", DbscanVariant::vanilla, true},
            {"dbscan++", DbscanVariant::plus, false},
            {"dbscan++-sf", DbscanVariant::plus, true},
            {"dbscan++-sf-long", DbscanVariant::plus_long, true}};
  }

 private:
  std::vector<FilteredFrame> fixture_frames(TrajectorySource source) {
    SceneConfig scene = cfg_.scene;
    scene.vehicles = cfg_.experiment.fixture_vehicles;
    scene.pedestrians = cfg_.experiment.fixture_pedestrians;
    scene.cyclists = cfg_.experiment.fixture_cyclists;
    std::vector<FilteredFrame> out;
    for (int i = 0; i < cfg_.experiment.fixture_sequences; ++i) {
      const auto seq = generate_sequence(scene, mix_seed(cfg_.run.seed ^ 0xf1c7ULL, static_cast<std::uint64_t>(i)));
      auto fr = preprocess_frames(seq, preprocess_for(source), strided_frames(seq.frames.size(), cfg_.experiment.eval_stride),
                                  cfg_.run.jobs);
      out.insert(out.end(), std::make_move_iterator(fr.begin()), std::make_move_iterator(fr.end()));
    }
    return out;
  }

  void note(const std::string& s) const {
    if (log_) log_(s);
  }

  RunConfig cfg_;
  std::function<void(const std::string&)> log_;
  std::vector<Split> splits_;
  std::map<std::size_t, Sequence> sequences_;
  std::map<std::string, std::vector<FilteredFrame>> frames_;
  std::map<std::string, MpnModel> models_;
};

}  // namespace motionseg
