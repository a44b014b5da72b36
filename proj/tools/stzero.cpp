#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "stzero/data_io.hpp"
#include "stzero/graph.hpp"
#include "stzero/trainer.hpp"

namespace {

using namespace stzero;

void add_train_config_flags(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--k-pos", cfg.k_pos, "positional neighbors per window");
  cmd->add_option("--k-fea", cfg.k_fea, "feature-similarity neighbors per window");
  cmd->add_option("--fea-metric", cfg.fea_metric, "feature metric: euclidean or cosine");
  cmd->add_option("--sage-layers", cfg.sage_layers, "refiner layer count");
  cmd->add_option("--hidden", cfg.hidden, "refiner hidden width");
  cmd->add_option("--proj-dim", cfg.proj_dim, "shared projection width D");
  cmd->add_option("--emb-blocks", cfg.emb_blocks, "transformer block count");
  cmd->add_option("--emb-dim", cfg.emb_dim, "transformer width D_E");
  cmd->add_option("--heads", cfg.heads, "attention heads");
  cmd->add_option("--lr", cfg.lr, "learning rate");
  cmd->add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay");
  cmd->add_option("--epochs", cfg.epochs, "training epochs");
  cmd->add_option("--genes-per-step", cfg.genes_per_step, "seen genes sampled per step");
  cmd->add_option("--seed", cfg.seed, "random seed (STZERO_SEED overrides)");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << text;
}

int run(int argc, char** argv) {
  CLI::App app{"Zero-shot gene expression prediction from slide window features"};
  app.require_subcommand(1);

  // synth
  SynthConfig synth_cfg;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a planted-model synthetic dataset");
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--n-slides", synth_cfg.n_slides, "slide count");
  synth->add_option("--windows-per-slide", synth_cfg.windows_per_slide, "windows per slide");
  synth->add_option("--n-genes", synth_cfg.n_genes, "total gene count");
  synth->add_option("--n-seen", synth_cfg.n_seen, "seen gene count");
  synth->add_option("--d-e", synth_cfg.d_e, "window feature width");
  synth->add_option("--d-t", synth_cfg.d_t, "description token width");
  synth->add_option("--desc-len", synth_cfg.desc_len, "description token count per gene");
  synth->add_option("--d-latent", synth_cfg.d_latent, "planted latent width");
  synth->add_option("--noise-sigma", synth_cfg.noise_sigma, "observation noise level");
  synth->add_option("--seed", synth_cfg.seed, "random seed (STZERO_SEED overrides)");

  // train
  TrainConfig train_cfg;
  std::string train_data, train_out;
  auto* train = app.add_subcommand("train", "train a model on a dataset");
  train->add_option("--data", train_data, "dataset directory")->required();
  train->add_option("--out", train_out, "checkpoint output path")->required();
  add_train_config_flags(train, train_cfg);

  // eval
  std::string eval_data, eval_ckpt, eval_split = "unseen", eval_report;
  int eval_k_pos = -1, eval_k_fea = -1;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a gene split");
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint path")->required();
  eval_cmd->add_option("--split", eval_split, "gene split: seen, unseen, or all");
  eval_cmd->add_option("--report", eval_report, "write the JSON report here instead of stdout");
  eval_cmd->add_option("--k-pos", eval_k_pos, "override positional neighbor count");
  eval_cmd->add_option("--k-fea", eval_k_fea, "override feature neighbor count");

  // predict
  std::string pred_data, pred_ckpt, pred_slide, pred_gene, pred_out;
  auto* predict_cmd = app.add_subcommand("predict", "per-window predictions for one gene");
  predict_cmd->add_option("--data", pred_data, "dataset directory")->required();
  predict_cmd->add_option("--ckpt", pred_ckpt, "checkpoint path")->required();
  predict_cmd->add_option("--slide", pred_slide, "slide id")->required();
  predict_cmd->add_option("--gene", pred_gene, "gene name (seen or unseen)")->required();
  predict_cmd->add_option("--out", pred_out, "write CSV here instead of stdout");

  // graph-stats
  std::string gs_data, gs_metric = "cosine";
  int gs_k_pos = 5, gs_k_fea = 5;
  auto* graph_stats_cmd =
      app.add_subcommand("graph-stats", "neighbor-graph statistics per slide (JSON lines)");
  graph_stats_cmd->add_option("--data", gs_data, "dataset directory")->required();
  graph_stats_cmd->add_option("--k-pos", gs_k_pos, "positional neighbor count");
  graph_stats_cmd->add_option("--k-fea", gs_k_fea, "feature neighbor count");
  graph_stats_cmd->add_option("--fea-metric", gs_metric, "feature metric");

  // grad-check
  MicroCheckConfig mc;
  auto* grad_check_cmd =
      app.add_subcommand("grad-check", "verify model gradients against finite differences");
  grad_check_cmd->add_option("--windows", mc.windows, "window count");
  grad_check_cmd->add_option("--d-e", mc.d_e, "feature width");
  grad_check_cmd->add_option("--hidden", mc.hidden, "refiner hidden width");
  grad_check_cmd->add_option("--proj-dim", mc.proj_dim, "projection width");
  grad_check_cmd->add_option("--emb-blocks", mc.emb_blocks, "transformer blocks");
  grad_check_cmd->add_option("--emb-dim", mc.emb_dim, "transformer width");
  grad_check_cmd->add_option("--d-t", mc.d_t, "token width");
  grad_check_cmd->add_option("--desc-len", mc.desc_len, "description length");
  grad_check_cmd->add_option("--heads", mc.heads, "attention heads");
  grad_check_cmd->add_option("--sage-layers", mc.sage_layers, "refiner layers");
  grad_check_cmd->add_option("--genes", mc.genes, "gene count");
  grad_check_cmd->add_option("--step", mc.step, "finite-difference step");
  grad_check_cmd->add_option("--tol", mc.tol, "relative-error tolerance");
  grad_check_cmd->add_option("--seed", mc.seed, "random seed (STZERO_SEED overrides)");

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) {
    synth_cfg.seed = resolve_seed(synth_cfg.seed);
    Dataset ds = synth_dataset(synth_cfg);
    save_dataset(ds, synth_out);
    std::cout << "wrote dataset: " << synth_out << " (" << ds.slides.size() << " slides, "
              << ds.genes.size() << " genes, " << ds.seen.size() << " seen)\n";
    return 0;
  }

  if (train->parsed()) {
    train_cfg.seed = resolve_seed(train_cfg.seed);
    train_cfg.validate();
    Dataset ds = load_dataset(train_data);
    TrainOutcome outcome = train_model(ds, train_cfg, &std::cout);
    save_checkpoint(make_checkpoint(outcome.params, train_cfg, train_cfg.seed), train_out);
    std::cout << "wrote checkpoint: " << train_out << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    Dataset ds = load_dataset(eval_data);
    Checkpoint ckpt = load_checkpoint(eval_ckpt);
    ModelParams params = model_from_checkpoint(ckpt, dims_of(ds));
    TrainConfig cfg = train_config_from_json(ckpt.config);
    EvalReport report = evaluate_split(ds, params, cfg, split_from_string(eval_split),
                                       eval_k_pos, eval_k_fea);
    write_text(eval_report, report_to_json(report, 2) + "\n");
    return 0;
  }

  if (predict_cmd->parsed()) {
    Dataset ds = load_dataset(pred_data);
    Checkpoint ckpt = load_checkpoint(pred_ckpt);
    ModelParams params = model_from_checkpoint(ckpt, dims_of(ds));
    TrainConfig cfg = train_config_from_json(ckpt.config);
    std::vector<PredictionRow> rows = predict_gene(ds, params, cfg, pred_slide, pred_gene);
    std::string csv = "window_index,x,y,predicted\n";
    char buf[160];
    for (const PredictionRow& r : rows) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", r.window_index, r.x, r.y,
                    r.predicted);
      csv += buf;
    }
    write_text(pred_out, csv);
    return 0;
  }

  if (graph_stats_cmd->parsed()) {
    Dataset ds = load_dataset(gs_data);
    const Metric metric = metric_from_string(gs_metric);
    for (const SlideWindows& slide : ds.slides) {
      SlideGraph g =
          build_slide_graph(slide.positions, slide.features, gs_k_pos, gs_k_fea, metric);
      GraphStats stats = graph_stats(g);
      nlohmann::json j = nlohmann::json::parse(graph_stats_json(stats));
      j["slide"] = slide.slide_id;
      std::cout << j.dump() << "\n";
    }
    return 0;
  }

  if (grad_check_cmd->parsed()) {
    mc.seed = resolve_seed(mc.seed);
    const auto start = std::chrono::steady_clock::now();
    GradCheckReport report = micro_grad_check(mc);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const GradCheckItem& item : report.items) {
      std::printf("%-26s max_rel_err %.3e  %s\n", item.name.c_str(), item.max_rel_err,
                  item.pass ? "ok" : "FAIL");
    }
    std::printf("%zu tensors checked in %.2fs at step %g, tol %g: %s\n", report.items.size(),
                secs, report.step, report.tol, report.all_pass ? "all ok" : "FAILURES");
    return report.all_pass ? 0 : 1;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
