#include "stzero/trainer.hpp"

#include <cmath>
#include <cstdio>

namespace stzero {

// ---------------------------------------------------------------------------
// Optimizer

AdamW::AdamW(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(const std::vector<std::pair<std::string, Tensor>>& params) {
  if (m_.empty()) {
    for (const auto& [name, p] : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw ContractError("AdamW::step: parameter list changed size");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& [name, p] = params[pi];
    auto& values = const_cast<Tensor&>(p).values();
    const auto& grad = p.grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      double value = values[i];
      value -= lr_ * (m_hat / (std::sqrt(v_hat) + eps_) + weight_decay_ * value);
      values[i] = static_cast<double>(static_cast<float>(value));
    }
  }
}

// ---------------------------------------------------------------------------
// Shared forward paths

namespace {

// Ground-truth columns for the chosen genes; copies only those columns, so
// the rest of the expression matrix (e.g. unseen genes) is never read.
Tensor select_expression_columns(const SlideWindows& slide,
                                 const std::vector<std::size_t>& gene_cols) {
  const std::size_t n = slide.n(), g_all = slide.expression.cols();
  Tensor out = Tensor::zeros(n, gene_cols.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < gene_cols.size(); ++c) {
      if (gene_cols[c] >= g_all)
        throw ContractError("select_expression_columns: column out of range");
      out.values()[i * gene_cols.size() + c] =
          slide.expression.values()[i * g_all + gene_cols[c]];
    }
  return out;
}

Tensor embed_gene_rows(Tape& tape, const Dataset& ds,
                       const std::vector<std::size_t>& gene_cols,
                       const EmbedderParams& embedder) {
  std::vector<Tensor> rows;
  rows.reserve(gene_cols.size());
  for (std::size_t idx : gene_cols) rows.push_back(embed_gene(tape, ds.genes[idx], embedder));
  return rows.size() == 1 ? rows.front() : tape.concat_rows(rows);
}

std::vector<SlideGraph> build_all_graphs(const Dataset& ds, int k_pos, int k_fea,
                                         Metric metric) {
  std::vector<SlideGraph> graphs;
  graphs.reserve(ds.slides.size());
  for (const SlideWindows& slide : ds.slides)
    graphs.push_back(build_slide_graph(slide.positions, slide.features, k_pos, k_fea, metric));
  return graphs;
}

std::vector<std::string> gene_names_at(const Dataset& ds,
                                       const std::vector<std::size_t>& gene_cols) {
  std::vector<std::string> names;
  names.reserve(gene_cols.size());
  for (std::size_t idx : gene_cols) names.push_back(ds.genes[idx].gene);
  return names;
}

EvalReport evaluate_with_graphs(const Dataset& ds, const std::vector<SlideGraph>& graphs,
                                const ModelParams& params,
                                const std::vector<std::size_t>& gene_cols) {
  if (gene_cols.empty()) throw ContractError("evaluate: no genes in the selected split");
  const std::vector<std::string> names = gene_names_at(ds, gene_cols);
  std::vector<EvalReport> per_slide;
  per_slide.reserve(ds.slides.size());
  for (std::size_t si = 0; si < ds.slides.size(); ++si) {
    const SlideWindows& slide = ds.slides[si];
    Tape tape;
    Tensor z = sage_forward(tape, slide.features, graphs[si], params.sage);
    Tensor v = embed_gene_rows(tape, ds, gene_cols, params.embedder);
    Tensor y_hat = predict(tape, z, v);
    Tensor y = select_expression_columns(slide, gene_cols);
    per_slide.push_back(evaluate(y_hat, y, names));
  }
  return aggregate_reports(per_slide);
}

}  // namespace

// ---------------------------------------------------------------------------
// Training

TrainOutcome train_model(const Dataset& ds, const TrainConfig& cfg, std::ostream* log_stream) {
  cfg.validate();
  if (ds.seen.empty()) throw DataError("train: the seen gene split is empty");
  if (ds.slides.empty()) throw DataError("train: dataset has no slides");

  TrainOutcome outcome;
  outcome.params = init_model(cfg, dims_of(ds), cfg.seed);
  const auto named = outcome.params.named();

  const Metric metric = metric_from_string(cfg.fea_metric);
  const std::vector<SlideGraph> graphs = build_all_graphs(ds, cfg.k_pos, cfg.k_fea, metric);
  const std::vector<std::size_t> seen_cols = ds.gene_indices(SplitSel::Seen);

  AdamW optimizer(cfg.lr, cfg.weight_decay);
  Rng shuffle_rng(Rng::derive(cfg.seed, 1));
  Rng sample_rng(Rng::derive(cfg.seed, 2));
  const int genes_per_step =
      std::min<int>(cfg.genes_per_step, static_cast<int>(seen_cols.size()));

  std::vector<std::size_t> slide_order(ds.slides.size());
  for (std::size_t i = 0; i < slide_order.size(); ++i) slide_order[i] = i;

  long step_index = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(slide_order);
    double loss_sum = 0.0;
    for (std::size_t si : slide_order) {
      const SlideWindows& slide = ds.slides[si];
      const std::vector<int> picks = sample_rng.sample_without_replacement(
          static_cast<int>(seen_cols.size()), genes_per_step);
      std::vector<std::size_t> gene_cols;
      gene_cols.reserve(picks.size());
      for (int p : picks) gene_cols.push_back(seen_cols[static_cast<std::size_t>(p)]);

      outcome.params.zero_grad();
      Tape tape;
      Tensor z = sage_forward(tape, slide.features, graphs[si], outcome.params.sage);
      Tensor v = embed_gene_rows(tape, ds, gene_cols, outcome.params.embedder);
      Tensor y_hat = predict(tape, z, v);
      Tensor y = select_expression_columns(slide, gene_cols);
      Tensor loss = loss_total(tape, y_hat, y);
      const double loss_value = loss.values()[0];
      if (!std::isfinite(loss_value))
        throw NumericError("train: non-finite loss at step " + std::to_string(step_index));
      tape.backward(loss);
      optimizer.step(named);
      loss_sum += loss_value;
      ++step_index;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mean_loss = loss_sum / static_cast<double>(ds.slides.size());
    EvalReport seen_report =
        evaluate_with_graphs(ds, graphs, outcome.params, seen_cols);
    entry.seen_mse = seen_report.mse;
    entry.seen_pcc_m = seen_report.pcc_m;
    outcome.log.push_back(entry);
    if (log_stream) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "epoch %4d  loss %.6f  seen_mse %.6f  seen_pcc_m %s",
                    epoch, entry.mean_loss, entry.seen_mse,
                    entry.seen_pcc_m ? std::to_string(*entry.seen_pcc_m).c_str() : "n/a");
      (*log_stream) << buf << "\n";
    }
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Evaluation and prediction

EvalReport evaluate_split(const Dataset& ds, const ModelParams& params, const TrainConfig& cfg,
                          SplitSel split, int k_pos_override, int k_fea_override) {
  const int k_pos = k_pos_override >= 0 ? k_pos_override : cfg.k_pos;
  const int k_fea = k_fea_override >= 0 ? k_fea_override : cfg.k_fea;
  const Metric metric = metric_from_string(cfg.fea_metric);
  const std::vector<SlideGraph> graphs = build_all_graphs(ds, k_pos, k_fea, metric);
  return evaluate_with_graphs(ds, graphs, params, ds.gene_indices(split));
}

std::vector<PredictionRow> predict_gene(const Dataset& ds, const ModelParams& params,
                                        const TrainConfig& cfg, const std::string& slide_id,
                                        const std::string& gene) {
  const SlideWindows& slide = ds.slide(slide_id);
  const std::size_t gene_col = ds.gene_index(gene);
  const Metric metric = metric_from_string(cfg.fea_metric);
  SlideGraph graph =
      build_slide_graph(slide.positions, slide.features, cfg.k_pos, cfg.k_fea, metric);
  Tape tape;
  Tensor z = sage_forward(tape, slide.features, graph, params.sage);
  Tensor v = embed_gene(tape, ds.genes[gene_col], params.embedder);
  Tensor y_hat = predict(tape, z, v);
  std::vector<PredictionRow> rows;
  rows.reserve(slide.n());
  for (std::size_t i = 0; i < slide.n(); ++i) {
    rows.push_back({i, slide.positions.values()[i * 2], slide.positions.values()[i * 2 + 1],
                    y_hat.values()[i]});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// End-to-end gradient check

GradCheckReport micro_grad_check(const MicroCheckConfig& mc) {
  TrainConfig cfg;
  cfg.k_pos = mc.k_pos;
  cfg.k_fea = mc.k_fea;
  cfg.sage_layers = mc.sage_layers;
  cfg.hidden = mc.hidden;
  cfg.proj_dim = mc.proj_dim;
  cfg.emb_blocks = mc.emb_blocks;
  cfg.emb_dim = mc.emb_dim;
  cfg.heads = mc.heads;
  cfg.seed = mc.seed;
  cfg.validate();

  Rng rng(Rng::derive(mc.seed, 3));
  const auto n = static_cast<std::size_t>(mc.windows);
  const auto g = static_cast<std::size_t>(mc.genes);

  Tensor positions = Tensor::zeros(n, 2);
  for (double& v : positions.values()) v = rng.uniform();
  Tensor features = Tensor::zeros(n, static_cast<std::size_t>(mc.d_e));
  for (double& v : features.values()) v = rng.normal();
  Tensor expression = Tensor::zeros(n, g);
  for (double& v : expression.values()) v = rng.normal();

  Dataset ds;
  ds.d_e = static_cast<std::size_t>(mc.d_e);
  ds.d_t = static_cast<std::size_t>(mc.d_t);
  ds.l_max = static_cast<std::size_t>(mc.desc_len);
  for (std::size_t c = 0; c < g; ++c) {
    GeneDescription desc;
    desc.gene = "g" + std::to_string(c);
    desc.split = GeneSplit::Seen;
    desc.tokens =
        Tensor::zeros(static_cast<std::size_t>(mc.desc_len), static_cast<std::size_t>(mc.d_t));
    for (double& v : desc.tokens.values()) v = rng.normal();
    ds.genes.push_back(std::move(desc));
    ds.seen.push_back("g" + std::to_string(c));
  }

  ModelParams params = init_model(cfg, dims_of(ds), mc.seed);
  SlideGraph graph = build_slide_graph(positions, features, mc.k_pos, mc.k_fea,
                                       metric_from_string(cfg.fea_metric));
  std::vector<std::size_t> gene_cols(g);
  for (std::size_t c = 0; c < g; ++c) gene_cols[c] = c;

  auto build_loss = [&](Tape& tape) {
    Tensor z = sage_forward(tape, features, graph, params.sage);
    Tensor v = embed_gene_rows(tape, ds, gene_cols, params.embedder);
    Tensor y_hat = predict(tape, z, v);
    return loss_total(tape, y_hat, expression);
  };
  return grad_check(build_loss, params.named(), mc.step, mc.tol);
}

}  // namespace stzero
