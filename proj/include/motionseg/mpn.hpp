#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "motionseg/common.hpp"
#include "motionseg/config_fields.hpp"
#include "motionseg/graph.hpp"
#include "motionseg/sequence_io.hpp"

namespace motionseg {

enum class Activation { relu, identity };

template <>
struct EnumNames<Activation> {
  static constexpr std::array<std::pair<Activation, std::string_view>, 2> values{{
      {Activation::relu, "relu"},
      {Activation::identity, "identity"},
  }};
};

struct MpnConfig {
  int hidden_node = 32;
  int hidden_edge = 64;
  int layers = 4;
  double dropout = 0.1;
  Activation activation = Activation::relu;

  template <typename V>
  void visit(V& v) {
    v("hidden_node", hidden_node);
    v("hidden_edge", hidden_edge);
    v("layers", layers);
    v("dropout", dropout);
    v("activation", activation);
  }

  void validate() const {
    if (hidden_node < 1 || hidden_edge < 1) throw ConfigError("mpn hidden widths must be >= 1");
    if (layers < 1) throw ConfigError("mpn.layers must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("mpn.dropout must be in [0, 1)");
  }
};

struct TrainConfig {
  int epochs = 30;
  int batch_graphs = 4;
  double lr = 0.003;
  int step_size = 15;
  double gamma = 0.7;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;

  template <typename V>
  void visit(V& v) {
    v("epochs", epochs);
    v("batch_graphs", batch_graphs);
    v("lr", lr);
    v("step_size", step_size);
    v("gamma", gamma);
    v("focal_alpha", focal_alpha);
    v("focal_gamma", focal_gamma);
    v("beta1", beta1);
    v("beta2", beta2);
    v("adam_eps", adam_eps);
    v("seed", seed);
  }

  void validate() const {
    if (epochs < 1 || batch_graphs < 1 || step_size < 1) throw ConfigError("train: epochs, batch_graphs, step_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train.gamma must be in (0, 1]");
    if (!(focal_alpha > 0.0 && focal_alpha < 1.0)) throw ConfigError("train.focal_alpha must be in (0, 1)");
    if (!(focal_gamma >= 0.0)) throw ConfigError("train.focal_gamma must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
      throw ConfigError("train: invalid Adam parameters");
    }
  }

  /// Learning rate for a 1-based epoch under the step schedule.
  double lr_at(int epoch) const { return lr * std::pow(gamma, (epoch - 1) / step_size); }
};

/// Parameter tensors, in file order.
enum Param : int {
  kNodeEncW,
  kNodeEncB,
  kEdgeEncW,
  kEdgeEncB,
  kEdgeUpdW,
  kEdgeUpdB,
  kEdgeUpdScale,
  kEdgeUpdShift,
  kNodeUpdW,
  kNodeUpdB,
  kNodeUpdScale,
  kNodeUpdShift,
  kClsW,
  kClsB,
  kNumParams
};

inline constexpr std::array<std::string_view, kNumParams> kParamNames{
    "node_encoder.weight", "node_encoder.bias", "edge_encoder.weight",  "edge_encoder.bias",
    "edge_update.weight",  "edge_update.bias",  "edge_update.norm_scale", "edge_update.norm_shift",
    "node_update.weight",  "node_update.bias",  "node_update.norm_scale", "node_update.norm_shift",
    "classifier.weight",   "classifier.bias"};

/// Weights are stored input-major (rows = fan-in), so a layer computes X * W + b.
/// Update weights stack the input blocks in concatenation order:
/// edge update [h_ij; h_i; h_j], node update [h_ij; h_j; h_i].
struct MpnModel {
  MpnConfig hyper;
  int node_dim = 0;
  int edge_dim = 0;
  /// Fixed input standardization fitted on training data (not learned).
  RowVector node_mean, node_std, edge_mean, edge_std;
  std::vector<Matrix> params;

  Matrix& p(Param k) { return params[k]; }
  const Matrix& p(Param k) const { return params[k]; }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& m : params) n += static_cast<std::size_t>(m.size());
    return n;
  }
};

inline std::vector<std::pair<Eigen::Index, Eigen::Index>> param_shapes(const MpnConfig& h, int node_dim, int edge_dim) {
  const Eigen::Index hn = h.hidden_node, he = h.hidden_edge, cat = he + 2 * hn;
  return {{node_dim, hn}, {1, hn}, {edge_dim, he}, {1, he}, {cat, he}, {1, he}, {1, he}, {1, he},
          {cat, hn},      {1, hn}, {1, hn},        {1, hn}, {he, 1},  {1, 1}};
}

inline MpnModel init_model(const MpnConfig& hyper, int node_dim, int edge_dim, std::uint64_t seed) {
  hyper.validate();
  if (node_dim < 1 || edge_dim < 1) throw ShapeError("init_model: feature dimensions must be >= 1");
  MpnModel m;
  m.hyper = hyper;
  m.node_dim = node_dim;
  m.edge_dim = edge_dim;
  m.node_mean = RowVector::Zero(node_dim);
  m.node_std = RowVector::Ones(node_dim);
  m.edge_mean = RowVector::Zero(edge_dim);
  m.edge_std = RowVector::Ones(edge_dim);
  std::mt19937_64 rng(seed);
  const auto shapes = param_shapes(hyper, node_dim, edge_dim);
  m.params.resize(kNumParams);
  for (int k = 0; k < kNumParams; ++k) {
    const auto [r, c] = shapes[k];
    Matrix t = Matrix::Zero(r, c);
    const bool weight = k == kNodeEncW || k == kEdgeEncW || k == kEdgeUpdW || k == kNodeUpdW || k == kClsW;
    if (weight) {
      const double bound = std::sqrt(6.0 / static_cast<double>(r));
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = (2.0 * detail::uniform01(rng) - 1.0) * bound;
    } else if (k == kEdgeUpdScale || k == kNodeUpdScale) {
      t.setOnes();
    }
    m.params[k] = std::move(t);
  }
  return m;
}

/// Per-feature mean/std over all nodes and edges of the training graphs.
inline void fit_standardization(MpnModel& m, std::span<const MotionGraph> graphs) {
  auto fit = [](auto get, Eigen::Index dim, RowVector& mean, RowVector& stdev, std::span<const MotionGraph> gs) {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim), sq = Eigen::VectorXd::Zero(dim);
    double n = 0.0;
    for (const auto& g : gs) {
      const Matrix& x = get(g);
      if (x.cols() != dim) throw ShapeError("fit_standardization: feature dimension mismatch");
      sum += x.colwise().sum().transpose();
      n += static_cast<double>(x.rows());
    }
    mean = RowVector::Zero(dim);
    stdev = RowVector::Ones(dim);
    if (n < 1.0) return;
    mean = (sum / n).transpose();
    for (const auto& g : gs) {
      const Matrix& x = get(g);
      sq += (x.rowwise() - mean).array().square().matrix().colwise().sum().transpose();
    }
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double s = std::sqrt(sq(d) / n);
      stdev(d) = s > 1e-9 ? s : 1.0;
    }
  };
  fit([](const MotionGraph& g) -> const Matrix& { return g.node_feats; }, m.node_dim, m.node_mean, m.node_std, graphs);
  fit([](const MotionGraph& g) -> const Matrix& { return g.edge_feats; }, m.edge_dim, m.edge_mean, m.edge_std, graphs);
}

inline void check_compatible(const MpnModel& m, const MotionGraph& g) {
  if (g.num_nodes() > 0 && g.node_feats.cols() != m.node_dim) {
    throw ShapeError("node feature dimension: model expects " + std::to_string(m.node_dim) + ", graph has " +
                     std::to_string(g.node_feats.cols()));
  }
  if (g.num_edges() > 0 && g.edge_feats.cols() != m.edge_dim) {
    throw ShapeError("edge feature dimension: model expects " + std::to_string(m.edge_dim) + ", graph has " +
                     std::to_string(g.edge_feats.cols()));
  }
  if (static_cast<Eigen::Index>(g.edges.size()) != g.edge_feats.rows() && g.num_edges() > 0) {
    throw ShapeError("graph: edge list and edge features differ in length");
  }
  for (const auto& [i, j] : g.edges) {
    if (i < 0 || j < 0 || i >= g.num_nodes() || j >= g.num_nodes()) throw ShapeError("graph: edge endpoint out of range");
  }
}

/// Disjoint union of graphs; node indices of later graphs are offset.
inline MotionGraph merge_graphs(std::span<const MotionGraph* const> parts) {
  MotionGraph out;
  Eigen::Index nodes = 0, edges = 0, nd = 0, ed = 0;
  for (const auto* g : parts) {
    nodes += g->num_nodes();
    edges += g->num_edges();
    if (g->num_nodes() > 0) nd = g->node_feats.cols();
    if (g->num_edges() > 0) ed = g->edge_feats.cols();
  }
  out.node_feats.resize(nodes, nd);
  out.edge_feats.resize(edges, ed);
  out.edges.reserve(static_cast<std::size_t>(edges));
  Eigen::Index no = 0, eo = 0;
  for (const auto* g : parts) {
    if (g->num_nodes() > 0) out.node_feats.middleRows(no, g->num_nodes()) = g->node_feats;
    if (g->num_edges() > 0) out.edge_feats.middleRows(eo, g->num_edges()) = g->edge_feats;
    for (const auto& [i, j] : g->edges) out.edges.push_back({i + static_cast<int>(no), j + static_cast<int>(no)});
    out.edge_labels.insert(out.edge_labels.end(), g->edge_labels.begin(), g->edge_labels.end());
    out.node_positions.insert(out.node_positions.end(), g->node_positions.begin(), g->node_positions.end());
    out.node_gt_ids.insert(out.node_gt_ids.end(), g->node_gt_ids.begin(), g->node_gt_ids.end());
    no += g->num_nodes();
    eo += g->num_edges();
  }
  return out;
}

struct EdgeScores {
  /// logits[l](e): classifier output of layer l+1 for edge e.
  std::vector<Eigen::VectorXd> logits;

  int layers() const { return static_cast<int>(logits.size()); }
  std::vector<double> layer_scores(int l) const {
    std::vector<double> s(static_cast<std::size_t>(logits[l].size()));
    for (std::size_t e = 0; e < s.size(); ++e) s[e] = sigmoid(logits[l](static_cast<Eigen::Index>(e)));
    return s;
  }
  std::vector<double> final_scores() const { return logits.empty() ? std::vector<double>{} : layer_scores(layers() - 1); }
};

struct LayerCache {
  Matrix h_prev;  // node embeddings entering the layer
  Matrix e_pre, e_norm, e_mask;
  Eigen::VectorXd e_inv_std;
  Matrix edge_out;  // h_ij of this layer
  Matrix m_pre, m_norm, m_mask;
  Eigen::VectorXd m_inv_std;
};

struct ForwardCache {
  Matrix node_in, edge_in;  // standardized inputs
  Matrix edge_h0;
  std::vector<LayerCache> layers;
  std::vector<int> src, dst;
  std::vector<int> out_degree;
};

namespace detail {

inline constexpr double kLayerNormEps = 1e-5;

inline void check_finite(const Matrix& m, int layer, const char* what) {
  if (!m.allFinite()) {
    throw NumericalError("non-finite activation in layer " + std::to_string(layer) + " (" + what + ")");
  }
}

/// Row-wise layer norm of x in place; returns normalized values and inverse std.
/// Act -> LayerNorm(scale, shift) -> Dropout, recording what backward needs.
inline Matrix act_norm_drop(Matrix pre, Activation act, const Matrix& scale, const Matrix& shift, double drop,
                            SplitMix64* rng, Matrix& norm, Eigen::VectorXd& inv_std, Matrix& mask) {
  const Eigen::Index n = pre.rows(), d = pre.cols();
  const bool dropping = rng != nullptr && drop > 0.0;
  norm.resize(n, d);
  inv_std.resize(n);
  Matrix out(n, d);
  if (dropping) {
    mask.resize(n, d);
  } else {
    mask.resize(0, 0);
  }
  const double keep = 1.0 / (1.0 - drop);
  const double inv_d = 1.0 / static_cast<double>(d);
  const double* sc = scale.data();
  const double* sh = shift.data();
  for (Eigen::Index r = 0; r < n; ++r) {
    const double* x = pre.data() + r * d;
    double* y = norm.data() + r * d;
    double* o = out.data() + r * d;
    double mu = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      y[c] = act == Activation::relu ? std::max(x[c], 0.0) : x[c];
      mu += y[c];
    }
    mu *= inv_d;
    double var = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      y[c] -= mu;
      var += y[c] * y[c];
    }
    const double is = 1.0 / std::sqrt(var * inv_d + kLayerNormEps);
    inv_std(r) = is;
    for (Eigen::Index c = 0; c < d; ++c) {
      y[c] *= is;
      o[c] = y[c] * sc[c] + sh[c];
    }
    if (dropping) {
      double* mk = mask.data() + r * d;
      for (Eigen::Index c = 0; c < d; ++c) {
        mk[c] = uniform01(*rng) < drop ? 0.0 : keep;
        o[c] *= mk[c];
      }
    }
  }
  return out;
}

/// Backward of act_norm_drop: returns dLoss/dpre and accumulates scale/shift gradients.
inline Matrix act_norm_drop_backward(const Matrix& dout, const Matrix& pre, Activation act, const Matrix& scale,
                                     const Matrix& norm, const Eigen::VectorXd& inv_std, const Matrix& mask, Matrix& dscale,
                                     Matrix& dshift) {
  const Eigen::Index n = dout.rows(), d = dout.cols();
  const bool masked = mask.size() > 0;
  const double inv_d = 1.0 / static_cast<double>(d);
  Matrix dx(n, d);
  std::vector<double> dy(static_cast<std::size_t>(d));
  double* gs = dscale.data();
  double* gh = dshift.data();
  const double* sc = scale.data();
  for (Eigen::Index r = 0; r < n; ++r) {
    const double* g = dout.data() + r * d;
    const double* y = norm.data() + r * d;
    const double* mk = masked ? mask.data() + r * d : nullptr;
    double mean_dy = 0.0, mean_dyy = 0.0;
    for (Eigen::Index c = 0; c < d; ++c) {
      const double go = masked ? g[c] * mk[c] : g[c];
      gs[c] += go * y[c];
      gh[c] += go;
      dy[c] = go * sc[c];
      mean_dy += dy[c];
      mean_dyy += dy[c] * y[c];
    }
    mean_dy *= inv_d;
    mean_dyy *= inv_d;
    const double is = inv_std(r);
    const double* x = pre.data() + r * d;
    double* o = dx.data() + r * d;
    for (Eigen::Index c = 0; c < d; ++c) {
      const double v = (dy[c] - mean_dy - y[c] * mean_dyy) * is;
      o[c] = act == Activation::relu && !(x[c] > 0.0) ? 0.0 : v;
    }
  }
  return dx;
}

/// out.row(e) += a.row(ia[e]) + b.row(ib[e])
inline void add_gathered(Matrix& out, const Matrix& a, const std::vector<int>& ia, const Matrix& b,
                         const std::vector<int>& ib) {
  const Eigen::Index d = out.cols();
  for (std::size_t e = 0; e < ia.size(); ++e) {
    double* o = out.data() + static_cast<Eigen::Index>(e) * d;
    const double* x = a.data() + ia[e] * d;
    const double* y = b.data() + ib[e] * d;
    for (Eigen::Index c = 0; c < d; ++c) o[c] += x[c] + y[c];
  }
}

inline Matrix scatter_rows(const Matrix& m, const std::vector<int>& idx, Eigen::Index n) {
  Matrix out = Matrix::Zero(n, m.cols());
  const Eigen::Index d = m.cols();
  for (std::size_t e = 0; e < idx.size(); ++e) {
    double* o = out.data() + idx[e] * d;
    const double* x = m.data() + static_cast<Eigen::Index>(e) * d;
    for (Eigen::Index c = 0; c < d; ++c) o[c] += x[c];
  }
  return out;
}

}  // namespace detail

/// Forward pass. With `rng` set, runs in train mode (dropout active) and
/// `cache` receives what backward needs; with rng == nullptr dropout is off.
inline EdgeScores forward(const MpnModel& m, const MotionGraph& g, SplitMix64* rng = nullptr,
                          ForwardCache* cache = nullptr) {
  check_compatible(m, g);
  EdgeScores out;
  const int L = m.hyper.layers;
  const Eigen::Index n = g.num_nodes(), ne = g.num_edges();
  const Eigen::Index hn = m.hyper.hidden_node, he = m.hyper.hidden_edge;
  out.logits.assign(static_cast<std::size_t>(L), Eigen::VectorXd());
  if (n == 0) {
    for (auto& l : out.logits) l.resize(0);
    return out;
  }
  std::vector<int> src(static_cast<std::size_t>(ne)), dst(static_cast<std::size_t>(ne));
  std::vector<int> deg(static_cast<std::size_t>(n), 0);
  for (Eigen::Index e = 0; e < ne; ++e) {
    src[e] = g.edges[e][0];
    dst[e] = g.edges[e][1];
    ++deg[src[e]];
  }
  Matrix xn = (g.node_feats.rowwise() - m.node_mean).array().rowwise() / m.node_std.array();
  Matrix xe = ne > 0 ? Matrix((g.edge_feats.rowwise() - m.edge_mean).array().rowwise() / m.edge_std.array())
                     : Matrix(0, m.edge_dim);
  Matrix h = (xn * m.p(kNodeEncW)).rowwise() + m.p(kNodeEncB).row(0);
  Matrix eh = (xe * m.p(kEdgeEncW)).rowwise() + m.p(kEdgeEncB).row(0);
  detail::check_finite(h, 0, "node encoder");
  detail::check_finite(eh, 0, "edge encoder");

  const Matrix& we = m.p(kEdgeUpdW);
  const Matrix& wn = m.p(kNodeUpdW);
  const auto we_e = we.topRows(he), we_i = we.middleRows(he, hn), we_j = we.bottomRows(hn);
  const auto wn_e = wn.topRows(he), wn_j = wn.middleRows(he, hn), wn_i = wn.bottomRows(hn);
  const double drop = m.hyper.dropout;

  if (cache != nullptr) {
    cache->node_in = xn;
    cache->edge_in = xe;
    cache->edge_h0 = eh;
    cache->layers.assign(static_cast<std::size_t>(L), LayerCache{});
    cache->src = src;
    cache->dst = dst;
    cache->out_degree = deg;
  }
  LayerCache scratch;
  for (int l = 0; l < L; ++l) {
    LayerCache& c = cache != nullptr ? cache->layers[l] : scratch;
    // edge update from [h_ij; h_i; h_j]
    const Matrix hi_e = h * we_i;
    const Matrix hj_e = h * we_j;
    Matrix pre = (eh * we_e).rowwise() + m.p(kEdgeUpdB).row(0);
    detail::add_gathered(pre, hi_e, src, hj_e, dst);
    Matrix eh_new = detail::act_norm_drop(pre, m.hyper.activation, m.p(kEdgeUpdScale), m.p(kEdgeUpdShift), drop, rng,
                                          c.e_norm, c.e_inv_std, c.e_mask);
    if (cache != nullptr) c.e_pre = std::move(pre);
    detail::check_finite(eh_new, l + 1, "edge update");

    // messages from [h_ij^{(l)}; h_j; h_i], mean over outgoing kNN edges
    const Matrix hj_n = h * wn_j;
    const Matrix hi_n = h * wn_i;
    Matrix mpre = (eh_new * wn_e).rowwise() + m.p(kNodeUpdB).row(0);
    detail::add_gathered(mpre, hj_n, dst, hi_n, src);
    Matrix msg = detail::act_norm_drop(mpre, m.hyper.activation, m.p(kNodeUpdScale), m.p(kNodeUpdShift), drop, rng,
                                       c.m_norm, c.m_inv_std, c.m_mask);
    if (cache != nullptr) c.m_pre = std::move(mpre);
    Matrix h_new = detail::scatter_rows(msg, src, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (deg[i] > 0) {
        h_new.row(i) /= static_cast<double>(deg[i]);
      } else {
        h_new.row(i) = h.row(i);
      }
    }
    detail::check_finite(h_new, l + 1, "node update");

    out.logits[l] = (eh_new * m.p(kClsW)).col(0).array() + m.p(kClsB)(0, 0);
    if (cache != nullptr) {
      c.h_prev = std::move(h);
      c.edge_out = eh_new;
    }
    h = std::move(h_new);
    eh = std::move(eh_new);
  }
  return out;
}

/// Reverse pass. `dlogits[l]` is dLoss/dlogit for layer l's classifier output.
inline std::vector<Matrix> backward(const MpnModel& m, const ForwardCache& c, const std::vector<Eigen::VectorXd>& dlogits) {
  const int L = m.hyper.layers;
  if (static_cast<int>(dlogits.size()) != L || static_cast<int>(c.layers.size()) != L) {
    throw ShapeError("backward: expected per-layer gradients for " + std::to_string(L) + " layers");
  }
  std::vector<Matrix> grads(kNumParams);
  for (int k = 0; k < kNumParams; ++k) grads[k] = Matrix::Zero(m.params[k].rows(), m.params[k].cols());
  const Eigen::Index n = c.node_in.rows(), ne = static_cast<Eigen::Index>(c.src.size());
  const Eigen::Index hn = m.hyper.hidden_node, he = m.hyper.hidden_edge;
  for (const auto& d : dlogits) {
    if (d.size() != ne) throw ShapeError("backward: gradient length does not match edge count");
  }
  if (n == 0) return grads;
  const Matrix& we = m.p(kEdgeUpdW);
  const Matrix& wn = m.p(kNodeUpdW);
  const auto we_e = we.topRows(he), we_i = we.middleRows(he, hn), we_j = we.bottomRows(hn);
  const auto wn_e = wn.topRows(he), wn_j = wn.middleRows(he, hn), wn_i = wn.bottomRows(hn);
  const Eigen::VectorXd wcls = m.p(kClsW).col(0);

  Matrix dh = Matrix::Zero(n, hn);   // dLoss/dh^{(l)}
  Matrix deh = Matrix::Zero(ne, he); // dLoss/dh_ij^{(l)}
  for (int l = L - 1; l >= 0; --l) {
    const LayerCache& lc = c.layers[l];
    // classifier head on this layer
    grads[kClsW].col(0) += lc.edge_out.transpose() * dlogits[l];
    grads[kClsB](0, 0) += dlogits[l].sum();
    deh += dlogits[l] * wcls.transpose();

    // mean aggregation (with passthrough for nodes without edges)
    Matrix dh_prev = Matrix::Zero(n, hn);
    Matrix dmsg(ne, hn);
    for (Eigen::Index e = 0; e < ne; ++e) {
      const double* g = dh.data() + c.src[e] * hn;
      const double inv = 1.0 / static_cast<double>(c.out_degree[c.src[e]]);
      double* o = dmsg.data() + e * hn;
      for (Eigen::Index k = 0; k < hn; ++k) o[k] = g[k] * inv;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (c.out_degree[i] == 0) dh_prev.row(i) += dh.row(i);
    }
    const Matrix dmpre = detail::act_norm_drop_backward(dmsg, lc.m_pre, m.hyper.activation, m.p(kNodeUpdScale), lc.m_norm,
                                                        lc.m_inv_std, lc.m_mask, grads[kNodeUpdScale], grads[kNodeUpdShift]);
    grads[kNodeUpdB].row(0) += dmpre.colwise().sum();
    grads[kNodeUpdW].topRows(he) += lc.edge_out.transpose() * dmpre;
    const Matrix s_dst = detail::scatter_rows(dmpre, c.dst, n);
    const Matrix s_src = detail::scatter_rows(dmpre, c.src, n);
    grads[kNodeUpdW].middleRows(he, hn) += lc.h_prev.transpose() * s_dst;
    grads[kNodeUpdW].bottomRows(hn) += lc.h_prev.transpose() * s_src;
    dh_prev += s_dst * wn_j.transpose() + s_src * wn_i.transpose();
    deh += dmpre * wn_e.transpose();

    // edge update
    const Matrix depre = detail::act_norm_drop_backward(deh, lc.e_pre, m.hyper.activation, m.p(kEdgeUpdScale), lc.e_norm,
                                                        lc.e_inv_std, lc.e_mask, grads[kEdgeUpdScale], grads[kEdgeUpdShift]);
    const Matrix& eh_prev = l > 0 ? c.layers[l - 1].edge_out : c.edge_h0;
    grads[kEdgeUpdB].row(0) += depre.colwise().sum();
    grads[kEdgeUpdW].topRows(he) += eh_prev.transpose() * depre;
    const Matrix e_src = detail::scatter_rows(depre, c.src, n);
    const Matrix e_dst = detail::scatter_rows(depre, c.dst, n);
    grads[kEdgeUpdW].middleRows(he, hn) += lc.h_prev.transpose() * e_src;
    grads[kEdgeUpdW].bottomRows(hn) += lc.h_prev.transpose() * e_dst;
    dh_prev += e_src * we_i.transpose() + e_dst * we_j.transpose();
    deh = depre * we_e.transpose();
    dh = std::move(dh_prev);
  }
  grads[kNodeEncW] += c.node_in.transpose() * dh;
  grads[kNodeEncB].row(0) += dh.colwise().sum();
  if (ne > 0) {
    grads[kEdgeEncW] += c.edge_in.transpose() * deh;
    grads[kEdgeEncB].row(0) += deh.colwise().sum();
  }
  return grads;
}

inline constexpr double kFocalClamp = 1e-7;

/// Focal loss of one edge from its logit; optionally its derivative w.r.t. the logit.
inline double focal_term(double logit, bool positive, double alpha, double gamma, double* dlogit = nullptr) {
  const double s = positive ? 1.0 : -1.0;
  const double at = positive ? alpha : 1.0 - alpha;
  double q = sigmoid(s * logit);
  bool clamped = false;
  if (q < kFocalClamp) {
    q = kFocalClamp;
    clamped = true;
  } else if (q > 1.0 - kFocalClamp) {
    q = 1.0 - kFocalClamp;
    clamped = true;
  }
  const double lq = std::log(q);
  const double w = gamma == 0.0 ? 1.0 : std::pow(1.0 - q, gamma);
  if (dlogit != nullptr) *dlogit = clamped ? 0.0 : s * at * w * (gamma * q * lq - (1.0 - q));
  return -at * w * lq;
}

/// Mean focal loss over edges given probabilities.
inline double focal_loss(std::span<const double> scores, std::span<const char> labels, double alpha, double gamma) {
  if (scores.size() != labels.size()) throw ShapeError("focal_loss: scores and labels differ in length");
  if (scores.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t e = 0; e < scores.size(); ++e) {
    const bool pos = labels[e] != 0;
    double pt = pos ? scores[e] : 1.0 - scores[e];
    pt = std::clamp(pt, kFocalClamp, 1.0 - kFocalClamp);
    const double at = pos ? alpha : 1.0 - alpha;
    total += -at * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  return total / static_cast<double>(scores.size());
}

/// Dense supervision: mean focal loss of every layer's logits, summed over layers.
inline double dense_focal_loss(const EdgeScores& s, std::span<const char> labels, double alpha, double gamma,
                               std::vector<Eigen::VectorXd>* dlogits = nullptr) {
  double total = 0.0;
  if (dlogits != nullptr) dlogits->assign(s.logits.size(), Eigen::VectorXd());
  for (std::size_t l = 0; l < s.logits.size(); ++l) {
    const Eigen::Index ne = s.logits[l].size();
    if (static_cast<std::size_t>(ne) != labels.size()) throw ShapeError("dense_focal_loss: label count mismatch");
    if (dlogits != nullptr) (*dlogits)[l] = Eigen::VectorXd::Zero(ne);
    if (ne == 0) continue;
    const double inv = 1.0 / static_cast<double>(ne);
    double sum = 0.0;
    for (Eigen::Index e = 0; e < ne; ++e) {
      double d = 0.0;
      sum += focal_term(s.logits[l](e), labels[e] != 0, alpha, gamma, dlogits != nullptr ? &d : nullptr);
      if (dlogits != nullptr) (*dlogits)[l](e) = d * inv;
    }
    total += sum * inv;
  }
  return total;
}

struct LossAndGrad {
  double loss = 0.0;
  EdgeScores scores;
  std::vector<Matrix> grads;
};

/// Loss and exact parameter gradients for one graph; rng == nullptr disables dropout.
inline LossAndGrad loss_and_gradients(const MpnModel& m, const MotionGraph& g, double alpha, double gamma,
                                      SplitMix64* rng = nullptr) {
  ForwardCache cache;
  LossAndGrad out;
  out.scores = forward(m, g, rng, &cache);
  std::vector<Eigen::VectorXd> dl;
  out.loss = dense_focal_loss(out.scores, g.edge_labels, alpha, gamma, &dl);
  out.grads = backward(m, cache, dl);
  return out;
}

class Adam {
 public:
  Adam(const MpnModel& m, double beta1, double beta2, double eps) : b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : m.params) {
      m_.push_back(Matrix::Zero(p.rows(), p.cols()));
      v_.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }

  void step(MpnModel& m, const std::vector<Matrix>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < m.params.size(); ++k) {
      m_[k] = b1_ * m_[k] + (1.0 - b1_) * grads[k];
      v_[k] = b2_ * v_[k] + (1.0 - b2_) * grads[k].cwiseProduct(grads[k]);
      m.params[k].array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + eps_);
    }
  }

 private:
  double b1_, b2_, eps_;
  long long t_ = 0;
  std::vector<Matrix> m_, v_;
};

struct EdgeMetrics {
  double loss = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t edges = 0;
};

/// Eval-mode loss and final-layer classification metrics at score 0.5.
inline EdgeMetrics evaluate_edges(const MpnModel& m, std::span<const MotionGraph> graphs, double alpha = 0.25,
                                  double gamma = 2.0) {
  EdgeMetrics r;
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  double loss = 0.0;
  for (const auto& g : graphs) {
    const auto s = forward(m, g);
    loss += dense_focal_loss(s, g.edge_labels, alpha, gamma) * static_cast<double>(g.num_edges());
    if (s.logits.empty()) continue;
    const auto& last = s.logits.back();
    for (Eigen::Index e = 0; e < last.size(); ++e) {
      const bool pred = last(e) > 0.0;
      const bool pos = g.edge_labels[e] != 0;
      correct += pred == pos ? 1 : 0;
      tp += pred && pos ? 1 : 0;
      fp += pred && !pos ? 1 : 0;
      fn += !pred && pos ? 1 : 0;
    }
    r.edges += static_cast<std::size_t>(last.size());
  }
  if (r.edges > 0) {
    r.loss = loss / static_cast<double>(r.edges);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.edges);
  }
  r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 1.0;
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
  return r;
}

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<EdgeMetrics> val;
};

/// Trains in place. The caller initializes the model (and standardization).
inline std::vector<EpochLog> train(MpnModel& m, std::span<const MotionGraph> data, const TrainConfig& cfg,
                                   std::span<const MotionGraph> val = {},
                                   const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train: empty dataset");
  for (const auto& g : data) check_compatible(m, g);
  Adam opt(m, cfg.beta1, cfg.beta2, cfg.adam_eps);
  std::vector<EpochLog> log;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = cfg.lr_at(epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0, correct = 0, edges = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_graphs)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_graphs));
      std::vector<const MotionGraph*> parts;
      for (std::size_t k = start; k < end; ++k) parts.push_back(&data[order[k]]);
      const MotionGraph batch = merge_graphs(parts);
      SplitMix64 drop_rng(mix_seed(mix_seed(cfg.seed ^ 0xd5f0ULL, static_cast<std::uint64_t>(epoch)), batches));
      LossAndGrad lg;
      try {
        lg = loss_and_gradients(m, batch, cfg.focal_alpha, cfg.focal_gamma, &drop_rng);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches) +
                             ": " + e.what());
      }
      if (!std::isfinite(lg.loss)) {
        throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches) +
                             ": loss is not finite");
      }
      opt.step(m, lg.grads, entry.lr);
      loss_sum += lg.loss;
      ++batches;
      if (!lg.scores.logits.empty()) {
        const auto& last = lg.scores.logits.back();
        for (Eigen::Index e = 0; e < last.size(); ++e) correct += (last(e) > 0.0) == (batch.edge_labels[e] != 0) ? 1 : 0;
        edges += static_cast<std::size_t>(last.size());
      }
    }
    entry.train_loss = loss_sum / static_cast<double>(batches);
    entry.train_accuracy = edges > 0 ? static_cast<double>(correct) / static_cast<double>(edges) : 0.0;
    if (!val.empty()) entry.val = evaluate_edges(m, val, cfg.focal_alpha, cfg.focal_gamma);
    if (on_epoch) on_epoch(entry);
    log.push_back(entry);
  }
  return log;
}

inline void save_model(const MpnModel& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto f = io::open_write(path);
  std::fprintf(f.get(), "motionseg-mpn 1\n");
  std::fprintf(f.get(), "node_dim=%d\nedge_dim=%d\n", m.node_dim, m.edge_dim);
  for (const auto& [k, v] : to_fields(m.hyper)) std::fprintf(f.get(), "%s=%s\n", k.c_str(), v.c_str());
  auto tensor = [&](std::string_view name, const auto& t) {
    std::fprintf(f.get(), "TENSOR %.*s %ld %ld\n", static_cast<int>(name.size()), name.data(), static_cast<long>(t.rows()),
                 static_cast<long>(t.cols()));
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) std::fprintf(f.get(), c == 0 ? "%.17g" : " %.17g", t(r, c));
      std::fputc('\n', f.get());
    }
  };
  tensor("input.node_mean", m.node_mean);
  tensor("input.node_std", m.node_std);
  tensor("input.edge_mean", m.edge_mean);
  tensor("input.edge_std", m.edge_std);
  for (int k = 0; k < kNumParams; ++k) tensor(kParamNames[k], m.params[k]);
}

inline MpnModel load_model(const std::filesystem::path& path) {
  io::LineReader r(io::read_file(path), path.string());
  auto head = r.next("header");
  if (head.size() != 2 || head[0] != "motionseg-mpn") r.fail("header", "not a model file");
  std::map<std::string, std::string> kv;
  std::vector<std::string_view> t;
  while (true) {
    t = r.next("hyperparameters");
    if (!t.empty() && t[0] == "TENSOR") break;
    if (t.size() != 1) r.fail("hyperparameters", "expected key=value");
    const auto eq = t[0].find('=');
    if (eq == std::string_view::npos) r.fail("hyperparameters", "expected key=value");
    kv[std::string(t[0].substr(0, eq))] = std::string(t[0].substr(eq + 1));
  }
  MpnModel m;
  std::map<std::string, bool> used;
  try {
    FieldReader fr(kv, "", &used);
    m.hyper.visit(fr);
    if (!kv.contains("node_dim") || !kv.contains("edge_dim")) throw ConfigError("missing node_dim/edge_dim");
    field_from_string(kv["node_dim"], m.node_dim);
    field_from_string(kv["edge_dim"], m.edge_dim);
    m.hyper.validate();
  } catch (const ConfigError& e) {
    r.fail("hyperparameters", e.what());
  }
  if (m.node_dim < 1 || m.edge_dim < 1) r.fail("hyperparameters", "feature dimensions must be >= 1");
  auto read_tensor = [&](std::string_view name, Eigen::Index rows, Eigen::Index cols, bool first) {
    if (!first) t = r.next(name);
    if (t.size() != 4 || t[0] != "TENSOR") r.fail(name, "expected 'TENSOR <name> <rows> <cols>'");
    if (t[1] != name) r.fail(name, "expected tensor '" + std::string(name) + "', found '" + std::string(t[1]) + "'");
    const auto fr = static_cast<Eigen::Index>(r.count(t[2], name));
    const auto fc = static_cast<Eigen::Index>(r.count(t[3], name));
    if (fr != rows || fc != cols) {
      throw ShapeError(path.string() + ": tensor " + std::string(name) + " has shape " + std::to_string(fr) + "x" +
                       std::to_string(fc) + ", hyperparameters imply " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      auto row = r.next(name);
      if (static_cast<Eigen::Index>(row.size()) != cols) r.fail(name, "row " + std::to_string(i) + " has wrong length");
      for (Eigen::Index c = 0; c < cols; ++c) out(i, c) = r.number(row[c], name);
    }
    if (!out.allFinite()) r.fail(name, "non-finite value");
    return out;
  };
  m.node_mean = read_tensor("input.node_mean", 1, m.node_dim, true);
  m.node_std = read_tensor("input.node_std", 1, m.node_dim, false);
  m.edge_mean = read_tensor("input.edge_mean", 1, m.edge_dim, false);
  m.edge_std = read_tensor("input.edge_std", 1, m.edge_dim, false);
  const auto shapes = param_shapes(m.hyper, m.node_dim, m.edge_dim);
  m.params.resize(kNumParams);
  for (int k = 0; k < kNumParams; ++k) m.params[k] = read_tensor(kParamNames[k], shapes[k].first, shapes[k].second, false);
  if (!r.at_end()) r.fail("TENSOR", "trailing content after last tensor");
  return m;
}

}  // namespace motionseg
