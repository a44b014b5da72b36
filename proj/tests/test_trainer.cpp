#include <chrono>
#include <cmath>
#include <cstdlib>

#include "doctest.h"
#include "stzero/trainer.hpp"
#include "test_util.hpp"

using namespace stzero;
using testutil::read_file_bytes;
using testutil::TempDir;

namespace {

SynthConfig micro_data_cfg(double noise = 0.05) {
  SynthConfig cfg;
  cfg.n_slides = 2;
  cfg.windows_per_slide = 60;
  cfg.n_genes = 10;
  cfg.n_seen = 8;
  cfg.d_e = 8;
  cfg.d_t = 6;
  cfg.desc_len = 4;
  cfg.d_latent = 3;
  cfg.noise_sigma = noise;
  cfg.seed = 5;
  return cfg;
}

TrainConfig micro_train_cfg(int epochs) {
  TrainConfig cfg;
  cfg.k_pos = 3;
  cfg.k_fea = 3;
  cfg.sage_layers = 2;
  cfg.hidden = 16;
  cfg.proj_dim = 8;
  cfg.emb_blocks = 1;
  cfg.emb_dim = 16;
  cfg.heads = 4;
  cfg.epochs = epochs;
  cfg.genes_per_step = 6;
  cfg.seed = 21;
  return cfg;
}

std::vector<char> checkpoint_bytes(const ModelParams& params, const TrainConfig& cfg,
                                   const TempDir& dir, const std::string& name) {
  const auto path = dir.path() / name;
  save_checkpoint(make_checkpoint(params, cfg, cfg.seed), path);
  return read_file_bytes(path);
}

}  // namespace

TEST_CASE("zero epochs returns the initialization exactly") {
  Dataset ds = synth_dataset(micro_data_cfg());
  TrainConfig cfg = micro_train_cfg(0);
  TrainOutcome outcome = train_model(ds, cfg);
  ModelParams init = init_model(cfg, dims_of(ds), cfg.seed);
  const auto a = outcome.params.named();
  const auto b = init.named();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(testutil::bitwise_equal(a[i].second.values(), b[i].second.values()));
  CHECK(outcome.log.empty());
}

TEST_CASE("training loss decreases over the first epochs on clean planted data") {
  Dataset ds = synth_dataset(micro_data_cfg(0.0));
  TrainConfig cfg = micro_train_cfg(5);
  TrainOutcome outcome = train_model(ds, cfg);
  REQUIRE(outcome.log.size() == 5);
  for (std::size_t e = 1; e < outcome.log.size(); ++e)
    CHECK(outcome.log[e].mean_loss < outcome.log[e - 1].mean_loss);
}

TEST_CASE("identical seeds give bit-identical checkpoints, different seeds differ") {
  Dataset ds = synth_dataset(micro_data_cfg());
  TrainConfig cfg = micro_train_cfg(3);
  TempDir dir("det");
  TrainOutcome first = train_model(ds, cfg);
  TrainOutcome second = train_model(ds, cfg);
  const auto bytes_a = checkpoint_bytes(first.params, cfg, dir, "a.ckpt");
  const auto bytes_b = checkpoint_bytes(second.params, cfg, dir, "b.ckpt");
  CHECK(bytes_a == bytes_b);

  TrainConfig other = cfg;
  other.seed = 22;
  TrainOutcome third = train_model(ds, other);
  CHECK(checkpoint_bytes(third.params, other, dir, "c.ckpt") != bytes_a);
}

TEST_CASE("training never reads unseen expression columns") {
  Dataset ds = synth_dataset(micro_data_cfg());
  TrainConfig cfg = micro_train_cfg(3);
  TempDir dir("tripwire");
  TrainOutcome clean = train_model(ds, cfg);

  Dataset poisoned = ds;
  for (SlideWindows& slide : poisoned.slides) {
    for (std::size_t idx : poisoned.gene_indices(SplitSel::Unseen))
      for (std::size_t i = 0; i < slide.n(); ++i)
        slide.expression.at(i, idx) = std::nan("");
  }
  TrainOutcome poisoned_run = train_model(poisoned, cfg);
  CHECK(checkpoint_bytes(clean.params, cfg, dir, "clean.ckpt") ==
        checkpoint_bytes(poisoned_run.params, cfg, dir, "poisoned.ckpt"));
}

TEST_CASE("training rejects empty seen splits and non-finite losses name the step") {
  Dataset ds = synth_dataset(micro_data_cfg());
  TrainConfig cfg = micro_train_cfg(1);
  Dataset no_seen = ds;
  for (GeneDescription& g : no_seen.genes) g.split = GeneSplit::Unseen;
  no_seen.unseen.insert(no_seen.unseen.end(), no_seen.seen.begin(), no_seen.seen.end());
  no_seen.seen.clear();
  CHECK_THROWS_AS(train_model(no_seen, cfg), DataError);

  Dataset poisoned_seen = ds;
  poisoned_seen.slides[0].expression.at(0, 0) = std::nan("");
  CHECK_THROWS_WITH_AS(train_model(poisoned_seen, cfg), doctest::Contains("step"),
                       NumericError);
}

TEST_CASE("a zero-initialized projection head scores near-zero correlation") {
  SynthConfig data_cfg = micro_data_cfg();
  data_cfg.n_slides = 4;
  data_cfg.windows_per_slide = 260;  // > 1000 windows total
  Dataset ds = synth_dataset(data_cfg);
  TrainConfig cfg = micro_train_cfg(0);
  ModelParams params = init_model(cfg, dims_of(ds), cfg.seed);
  for (double& v : params.embedder.out_proj.values()) v = 0.0;
  for (SplitSel split : {SplitSel::Seen, SplitSel::Unseen}) {
    EvalReport report = evaluate_split(ds, params, cfg, split);
    REQUIRE(report.pcc_m.has_value());
    CHECK(std::abs(*report.pcc_m) < 0.1);
  }
}

TEST_CASE("evaluate_split seen equals all on an all-seen dataset") {
  Dataset ds = synth_dataset(micro_data_cfg());
  for (GeneDescription& g : ds.genes) g.split = GeneSplit::Seen;
  ds.seen.insert(ds.seen.end(), ds.unseen.begin(), ds.unseen.end());
  ds.unseen.clear();
  TrainConfig cfg = micro_train_cfg(1);
  TrainOutcome outcome = train_model(ds, cfg);
  EvalReport seen = evaluate_split(ds, outcome.params, cfg, SplitSel::Seen);
  EvalReport all = evaluate_split(ds, outcome.params, cfg, SplitSel::All);
  CHECK(report_to_json(seen) == report_to_json(all));
}

TEST_CASE("neighbor-count overrides rebuild the graphs") {
  Dataset ds = synth_dataset(micro_data_cfg());
  TrainConfig cfg = micro_train_cfg(1);
  TrainOutcome outcome = train_model(ds, cfg);
  EvalReport base = evaluate_split(ds, outcome.params, cfg, SplitSel::Seen);
  EvalReport rewired = evaluate_split(ds, outcome.params, cfg, SplitSel::Seen, -1, 1);
  CHECK(base.mse != rewired.mse);
  EvalReport same = evaluate_split(ds, outcome.params, cfg, SplitSel::Seen, cfg.k_pos,
                                   cfg.k_fea);
  CHECK(report_to_json(base) == report_to_json(same));
}

TEST_CASE("predict_gene matches the evaluation path bitwise and accepts unseen genes") {
  Dataset ds = synth_dataset(micro_data_cfg());
  TrainConfig cfg = micro_train_cfg(2);
  TrainOutcome outcome = train_model(ds, cfg);

  const std::string unseen_gene = ds.unseen.front();
  std::vector<PredictionRow> rows =
      predict_gene(ds, outcome.params, cfg, "slide0", unseen_gene);
  CHECK(rows.size() == ds.slides[0].n());

  // Same forward path as evaluation: refine, embed, dot.
  const Metric metric = metric_from_string(cfg.fea_metric);
  SlideGraph g = build_slide_graph(ds.slides[0].positions, ds.slides[0].features, cfg.k_pos,
                                   cfg.k_fea, metric);
  Tape tape;
  Tensor z = sage_forward(tape, ds.slides[0].features, g, outcome.params.sage);
  Tensor v = embed_gene(tape, ds.genes[ds.gene_index(unseen_gene)], outcome.params.embedder);
  Tensor y_hat = predict(tape, z, v);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].window_index == i);
    CHECK(rows[i].predicted == y_hat.values()[i]);
  }

  CHECK_THROWS_AS(predict_gene(ds, outcome.params, cfg, "slideX", unseen_gene), LookupError);
  CHECK_THROWS_AS(predict_gene(ds, outcome.params, cfg, "slide0", "missing"), LookupError);
}

TEST_CASE("checkpointed parameters restore bit-identical predictions") {
  Dataset ds = synth_dataset(micro_data_cfg());
  TrainConfig cfg = micro_train_cfg(2);
  TrainOutcome outcome = train_model(ds, cfg);
  TempDir dir("restore");
  const auto path = dir.path() / "model.ckpt";
  save_checkpoint(make_checkpoint(outcome.params, cfg, cfg.seed), path);
  ModelParams restored = model_from_checkpoint(load_checkpoint(path), dims_of(ds));

  auto rows_a = predict_gene(ds, outcome.params, cfg, "slide0", ds.seen.front());
  auto rows_b = predict_gene(ds, restored, cfg, "slide0", ds.seen.front());
  REQUIRE(rows_a.size() == rows_b.size());
  for (std::size_t i = 0; i < rows_a.size(); ++i)
    CHECK(rows_a[i].predicted == rows_b[i].predicted);
}

TEST_CASE("checkpoints from one config are rejected against another shape") {
  Dataset ds = synth_dataset(micro_data_cfg());
  TrainConfig cfg = micro_train_cfg(0);
  TrainOutcome outcome = train_model(ds, cfg);
  Checkpoint ckpt = make_checkpoint(outcome.params, cfg, cfg.seed);
  DatasetDims wrong = dims_of(ds);
  wrong.d_e += 1;
  CHECK_THROWS_AS(model_from_checkpoint(ckpt, wrong), ConfigError);
}

TEST_CASE("micro model gradients pass finite differences end to end") {
  MicroCheckConfig mc;
  const auto start = std::chrono::steady_clock::now();
  GradCheckReport report = micro_grad_check(mc);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(report.all_pass);
  CHECK(secs < 10.0);
  // Every model tensor is covered: 4 refiner layers + 3 embedder tensors +
  // 12 block tensors + the output projection.
  CHECK(report.items.size() == 20);
}

TEST_CASE("STZERO_SEED overrides the command-line seed") {
  unsetenv("STZERO_SEED");
  CHECK(resolve_seed(7) == 7);
  setenv("STZERO_SEED", "123", 1);
  CHECK(resolve_seed(7) == 123);
  setenv("STZERO_SEED", "not-a-number", 1);
  CHECK_THROWS_AS(resolve_seed(7), ConfigError);
  unsetenv("STZERO_SEED");
}
