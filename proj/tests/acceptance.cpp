// Acceptance gate: runs the eight criteria and prints one PASS/FAIL line each.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace motionseg;
using namespace testing_support;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back((ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

/// Rows of t whose named columns equal the given values, in table order.
std::vector<const std::vector<std::string>*> rows_where(const Table& t,
                                                        const std::vector<std::pair<std::string, std::string>>& eq) {
  std::vector<const std::vector<std::string>*> out;
  for (const auto& r : t.rows) {
    bool ok = true;
    for (const auto& [col, val] : eq) {
      const auto it = std::find(t.columns.begin(), t.columns.end(), col);
      ok = ok && it != t.columns.end() && r[static_cast<std::size_t>(it - t.columns.begin())] == val;
    }
    if (ok) out.push_back(&r);
  }
  return out;
}

double cell(const Table& t, const std::vector<std::string>& row, const std::string& col) {
  const auto it = std::find(t.columns.begin(), t.columns.end(), col);
  double v = 0.0;
  field_from_string(row.at(static_cast<std::size_t>(it - t.columns.begin())), v);
  return v;
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

void save(const Table& t, const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / (name + ".csv"), std::ios::binary) << t.csv();
  std::ofstream(dir / (name + ".txt"), std::ios::binary) << t.text();
}

Outcome gradient_oracle() {
  Outcome o;
  const RunConfig defaults;
  int graphs = 0;
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  const FeatureVariant variants[] = {FeatureVariant::velocity, FeatureVariant::position, FeatureVariant::both};
  for (int rep = 0; rep < 3; ++rep) {
    for (auto nv : variants) {
      for (auto ev : variants) {
        const std::uint64_t seed = 5000 + 100 * rep + 10 * static_cast<int>(nv) + static_cast<int>(ev);
        const auto g = random_graph(seed, 12, nv, ev);
        const auto m = random_model(g, 4, seed, defaults.mpn.hidden_node, defaults.mpn.hidden_edge);
        const auto r = check_gradients(m, g, 1e-4);
        worst = std::max(worst, r.max_rel);
        checked += r.checked;
        skipped += r.skipped;
        ++graphs;
      }
    }
  }
  o.check(graphs >= 20, std::to_string(graphs) + " graphs of 12 nodes, L=4, all 3x3 feature variants");
  o.check(worst <= 1e-4, "max per-tensor relative error " + fmt("%.3e", worst) + " <= 1e-4");
  o.check(checked > 0, std::to_string(checked) + " entries compared, " + std::to_string(skipped) +
                           " skipped at ReLU kinks");
  return o;
}

Outcome overfit() {
  Outcome o;
  const std::vector<FilteredFrame> frames{object_frame({{1, {0, 0, 1}, {5, 0, 0}, 20}, {2, {3, 0, 1}, {0, 5, 0}, 20}}, 1, 10)};
  const RunConfig defaults;
  MpnConfig h = defaults.mpn;
  h.dropout = 0.0;
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_graphs = 1;
  tc.lr = 0.01;
  tc.step_size = 1000;
  std::vector<EpochLog> log;
  const auto m = train_model(frames, defaults.graph, h, tc, 1, &log);
  const auto g = build_graph(frames[0], defaults.graph);
  const double acc = evaluate_edges(m, std::vector<MotionGraph>{g}).accuracy;
  const auto labels = mpn_labels(frames[0], m, defaults.graph, defaults.cluster.mode, defaults.boxes);
  const double f1 = evaluate_labels(frames, {labels}, defaults.eval).f1(0.4);
  o.check(log.size() == 200, std::to_string(log.size()) + " Adam steps");
  o.check(acc == 1.0, "edge accuracy " + fmt("%.6f", acc));
  o.check(f1 == 1.0, "SegIoU F1@0.4 " + fmt("%.6f", f1));
  return o;
}

Outcome geometry_suite() {
  Outcome o;
  {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> c(-1.0, 1.0), d(0.5, 3.0), yaw(-std::numbers::pi, std::numbers::pi);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const Box3D a{{c(rng), c(rng), 0.3 * c(rng)}, {d(rng), d(rng), d(rng)}, yaw(rng)};
      const Box3D b{{c(rng), c(rng), 0.3 * c(rng)}, {d(rng), d(rng), d(rng)}, yaw(rng)};
      worst = std::max(worst, std::abs(box3d_iou(a, b) - monte_carlo_iou(a, b, 1000000, rng)));
    }
    o.check(worst <= 0.01, "box3d_iou vs 1e6-sample Monte Carlo on 1000 rotated pairs, max |diff| " + fmt("%.4f", worst));
  }
  {
    bool exact = true;
    int cases = 0;
    std::mt19937_64 rng(31);
    for (int m : {1, 2, 3, 10, 50, 100, 250, 500}) {
      for (double half : {2.0, 20.0}) {
        std::uniform_real_distribution<double> u(-half, half);
        std::vector<Vec3> pts(static_cast<std::size_t>(m));
        for (auto& p : pts) p = {u(rng), u(rng), 0.2 * u(rng)};
        exact = exact && knn_edges(pts, 16) == brute_knn_edges(pts, 16);
        std::vector<double> flat(static_cast<std::size_t>(m) * 9);
        for (auto& v : flat) v = u(rng);
        const VoxelGrid grid(flat, 9, 1.0);
        for (int q = 0; q < m; ++q) exact = exact && grid.knn(grid.point(q), 16, q) == brute_knn(flat, 9, q, 16);
        cases += 2;
      }
    }
    o.check(exact, "kNN equals brute force on " + std::to_string(cases) + " clouds up to M=500 (3-D and 9-D)");
  }
  {
    int same = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const int dim = trial % 3 == 0 ? 9 : 3;
      const int n = 100 + 20 * (trial % 6);
      const auto d = blob_cloud(n, dim, 9000 + trial);
      const double eps = 0.4 + 0.1 * (trial % 5);
      const int ms = 3 + trial % 8;
      same += dbscan(d, dim, eps, ms) == reference_dbscan(d, dim, eps, ms) ? 1 : 0;
    }
    o.check(same == 50, "DBSCAN equals the O(M^2) reference on " + std::to_string(same) + "/50 clouds");
  }
  {
    std::mt19937_64 rng(4242);
    int same = 0, total = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int n = 1 + trial % 8;
      const auto edges = sign_consistent_graph(n, rng);
      const auto labels = correlation_cluster(n, edges);
      same += std::abs(correlation_objective(labels, edges) - best_objective(n, edges)) <= 1e-9 ? 1 : 0;
      ++total;
    }
    o.check(same == total, "greedy clustering reaches the exhaustive optimum on " + std::to_string(same) + "/" +
                               std::to_string(total) + " sign-consistent graphs of 1-8 nodes");
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"acceptance criteria"};
  std::string out_dir = "acceptance_reports";
  std::vector<std::string> known;
  std::vector<std::string> only;
  app.add_option("--out", out_dir, "directory for the experiment reports");
  app.add_option("--known-failure", known, "criterion ids (e.g. C3) whose failure does not fail the exit status");
  app.add_option("--only", only, "run just these criterion ids");
  CLI11_PARSE(app, argc, argv);

  const std::set<std::string> known_set(known.begin(), known.end());
  const std::set<std::string> only_set(only.begin(), only.end());
  auto wanted = [&](const std::string& id) { return only_set.empty() || only_set.contains(id); };
  std::vector<std::pair<std::string, bool>> results;
  auto report = [&](const std::string& id, const std::string& title, const Outcome& o, double seconds) {
    for (const auto& n : o.notes) std::cout << "    " << n << "\n";
    std::cout << (o.pass ? "PASS " : "FAIL ") << id << " " << title << " (" << fmt("%.1f", seconds) << " s)\n"
              << std::flush;
    results.emplace_back(id, o.pass);
  };
  using clock = std::chrono::steady_clock;
  auto elapsed = [](clock::time_point t0) { return std::chrono::duration<double>(clock::now() - t0).count(); };

  if (wanted("C1")) {
    const auto t0 = clock::now();
    auto o = gradient_oracle();
    const double s = elapsed(t0);
    o.check(s < 60.0, "runtime " + fmt("%.1f", s) + " s < 60 s");
    report("C1", "gradient oracle", o, s);
  }
  if (wanted("C2")) {
    const auto t0 = clock::now();
    auto o = overfit();
    const double s = elapsed(t0);
    o.check(s < 30.0, "runtime " + fmt("%.1f", s) + " s < 30 s");
    report("C2", "overfit sanity", o, s);
  }

  const std::filesystem::path out(out_dir);
  const bool need_runner = wanted("C3") || wanted("C4") || wanted("C5") || wanted("C7") || wanted("C8");
  const RunConfig cfg;
  ExperimentRunner runner(cfg, [](const std::string& s) { std::cerr << "  " << s << "\n"; });
  Table t3;
  if (need_runner && (wanted("C3") || wanted("C8"))) {
    const auto t0 = clock::now();
    const double c0 = cpu_seconds();
    t3 = runner.run("t3");
    const double cpu = cpu_seconds() - c0;
    save(t3, out, t3.name);
    if (wanted("C3")) {
      Outcome o;
      auto f1 = [&](const char* traj, const char* method, const char* iou) {
        return t3.value({traj, method, iou, "0.40"}, "f1");
      };
      const double seg = f1("noisy", "mpn", "seg");
      o.check(seg >= 0.85, "noisy: mpn SegIoU F1@0.4 " + fmt("%.4f", seg) + " >= 0.85");
      const double gap = f1("noisy", "mpn", "box3d") - f1("noisy", "dbscan++-sf", "box3d");
      o.check(gap >= 0.10, "noisy: mpn 3DIoU F1@0.4 " + fmt("%.4f", f1("noisy", "mpn", "box3d")) +
                               " minus DBSCAN++ (size-filtered) " + fmt("%.4f", f1("noisy", "dbscan++-sf", "box3d")) +
                               " = " + fmt("%.4f", gap) + " >= 0.10");
      const double om = f1("oracle", "mpn", "seg"), od = f1("oracle", "dbscan++-sf", "seg");
      o.check(om > 0.90, "oracle: mpn SegIoU F1@0.4 " + fmt("%.4f", om) + " > 0.90");
      o.check(od > 0.90, "oracle: DBSCAN++ (size-filtered) SegIoU F1@0.4 " + fmt("%.4f", od) + " > 0.90");
      o.check(cpu < 600.0, "CPU time " + fmt("%.1f", cpu) + " s < 600 s");
      report("C3", "end-to-end synthetic benchmark", o, elapsed(t0));
    }
  }
  if (need_runner && wanted("C4")) {
    const auto t0 = clock::now();
    const auto t = runner.run("t2");
    save(t, out, t.name);
    Outcome o;
    const double box_gain = t.value({"waymo", "box3d", "0.40"}, "f1") - t.value({"none", "box3d", "0.40"}, "f1");
    const double seg_delta = t.value({"waymo", "seg", "0.40"}, "f1") - t.value({"none", "seg", "0.40"}, "f1");
    o.check(box_gain >= 0.15, "3DIoU F1@0.4 gain " + fmt("%.4f", box_gain) + " >= 0.15");
    o.check(std::abs(seg_delta) <= 0.05, "|SegIoU F1@0.4 change| " + fmt("%.4f", std::abs(seg_delta)) + " <= 0.05");
    report("C4", "inflation effect", o, elapsed(t0));
  }
  if (need_runner && wanted("C5")) {
    const auto t0 = clock::now();
    const auto t = runner.run("t3_scaling");
    save(t, out, t.name);
    Outcome o;
    const auto rows = rows_where(t, {{"iou", "seg"}, {"threshold", "0.40"}});
    double prev = -1.0;
    std::string trend;
    for (const auto* r : rows) {
      const double f = cell(t, *r, "f1");
      if (prev >= 0.0) o.check(f >= prev - 0.02, (*r)[0] + ": " + fmt("%.4f", f) + " >= " + fmt("%.4f", prev) + " - 0.02");
      trend += (trend.empty() ? "" : " -> ") + (*r)[0] + ":" + fmt("%.4f", f);
      prev = f;
    }
    o.check(rows.size() >= 3, "SegIoU F1@0.4 " + trend);
    report("C5", "data-scaling trend", o, elapsed(t0));
  }
  if (wanted("C6")) {
    const auto t0 = clock::now();
    const auto o = geometry_suite();
    report("C6", "oracle geometry suite", o, elapsed(t0));
  }
  if (need_runner && wanted("C7")) {
    const auto t0 = clock::now();
    const auto t = runner.run("t8");
    save(t, out, t.name);
    Outcome o;
    for (const char* iou : {"seg", "box3d"}) {
      const auto rows = rows_where(t, {{"iou", iou}, {"threshold", "0.40"}});
      for (std::size_t k = 1; k < rows.size(); ++k) {
        const double r0 = cell(t, *rows[k - 1], "recall"), r1 = cell(t, *rows[k], "recall");
        const double p0 = cell(t, *rows[k - 1], "precision"), p1 = cell(t, *rows[k], "precision");
        const std::string step = std::string(iou) + " x_f " + (*rows[k - 1])[0] + "->" + (*rows[k])[0];
        o.check(r1 <= r0, step + ": recall " + fmt("%.4f", r0) + " -> " + fmt("%.4f", r1) + " non-increasing");
        o.check(p1 >= p0, step + ": precision " + fmt("%.4f", p0) + " -> " + fmt("%.4f", p1) + " non-decreasing");
      }
    }
    report("C7", "x_f monotonicity", o, elapsed(t0));
  }
  if (need_runner && wanted("C8")) {
    const auto t0 = clock::now();
    ExperimentRunner again(cfg, [](const std::string& s) { std::cerr << "  " << s << "\n"; });
    const auto second = again.run("t3");
    save(second, out / "rerun", second.name);
    const auto read = [](const std::filesystem::path& p) { return io::read_file(p); };
    Outcome o;
    const auto a = read(out / (t3.name + ".csv")), b = read(out / "rerun" / (second.name + ".csv"));
    o.check(!a.empty() && a == b, "t3 csv reports byte-identical across two runs (" + std::to_string(a.size()) + " bytes)");
    report("C8", "determinism", o, elapsed(t0));
  }

  int failed = 0, tolerated = 0;
  for (const auto& [id, pass] : results) {
    if (pass) continue;
    if (known_set.contains(id)) {
      ++tolerated;
    } else {
      ++failed;
    }
  }
  std::cout << results.size() - static_cast<std::size_t>(failed + tolerated) << "/" << results.size() << " criteria pass";
  if (tolerated > 0) std::cout << ", " << tolerated << " documented known failure(s)";
  std::cout << "\n";
  return failed == 0 ? 0 : 1;
}
