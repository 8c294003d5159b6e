#include <CLI11.hpp>

#include <iostream>

#include "stgan/app.hpp"

namespace {

using namespace stgan;

void add_common(CLI::App& cmd, app::CommonOptions& common) {
  cmd.add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd.add_option("--seed", common.seed, "master seed (overrides train.seed and ablation.seeds)");
  cmd.add_flag("--deterministic", common.deterministic, "bit-reproducible run; wall_time_s is 0");
  cmd.add_option("--out", common.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Shape-transfer GAN: phantom benchmark, training, inference and evaluation"};
  cli.require_subcommand(1);
  cli.footer("Config keys can be overridden with STX_<SECTION>_<KEY>, e.g. STX_TRAIN_LR_GAN=2e-4.");

  app::CommonOptions common;
  add_common(cli, common);

  auto* phantom = cli.add_subcommand("phantom", "synthetic two-domain heart slices");
  auto* generate = phantom->add_subcommand("generate", "write images, masks and manifest.json");
  phantom->require_subcommand(1);
  add_common(*generate, common);
  app::PhantomArgs pargs;
  std::string domain = "source";
  bool no_masks = false;
  generate->add_option("--patients", pargs.patients, "number of patients")->check(CLI::PositiveNumber);
  generate->add_option("--slices", pargs.slices, "slices per patient")->check(CLI::PositiveNumber);
  generate->add_option("--domain", domain, "source or target")->check(CLI::IsMember({"source", "target"}));
  generate->add_flag("--no-masks", no_masks, "omit mask files");
  generate->add_flag("--overwrite", pargs.overwrite, "replace an existing manifest");

  auto* train = cli.add_subcommand("train", "pretrain S, then train the selected method");
  add_common(*train, common);
  std::string mode = "shapetransfer";
  app::TrainArgs targs;
  train->add_option("--mode", mode, "unet, noshape or shapetransfer")
      ->check(CLI::IsMember({"unet", "noshape", "shapetransfer"}));
  train->add_option("--resume", targs.resume, "continue from a checkpoint")->check(CLI::ExistingFile);

  auto* segment = cli.add_subcommand("segment", "predict masks for a manifest of images");
  add_common(*segment, common);
  app::SegmentArgs sargs;
  segment->add_option("--checkpoint", sargs.checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
  segment->add_option("--input", sargs.input_manifest, "input manifest.json")->required()->check(CLI::ExistingFile);

  auto* evaluate = cli.add_subcommand("evaluate", "score predictions against ground truth");
  add_common(*evaluate, common);
  app::EvaluateArgs eargs;
  std::vector<double> spacing;
  bool per_slice = false;
  evaluate->add_option("--pred", eargs.predicted_manifest, "predicted manifest.json")->required();
  evaluate->add_option("--gt", eargs.truth_manifest, "ground-truth manifest.json")->required();
  evaluate->add_option("--spacing", spacing, "pixel spacing x y z (mm)")->expected(3);
  evaluate->add_flag("--per-slice", per_slice, "average 2-D distances per slice instead of stacking");

  auto* ablate = cli.add_subcommand("ablate", "unet vs noshape vs shapetransfer on the phantom benchmark");
  add_common(*ablate, common);

  CLI11_PARSE(cli, argc, argv);

  if (generate->parsed()) {
    pargs.domain = parse_domain(domain);
    pargs.write_masks = !no_masks;
    return app::cmd_phantom(common, pargs, std::cout, std::cerr);
  }
  if (train->parsed()) {
    targs.mode = app::parse_mode(mode);
    return app::cmd_train(common, targs, std::cout, std::cerr);
  }
  if (segment->parsed()) return app::cmd_segment(common, sargs, std::cout, std::cerr);
  if (evaluate->parsed()) {
    if (!spacing.empty()) eargs.spacing = {spacing[0], spacing[1], spacing[2]};
    if (per_slice) eargs.distance_mode = metrics::DistanceMode::kPerSliceMean;
    return app::cmd_evaluate(common, eargs, std::cout, std::cerr);
  }
  return app::cmd_ablate(common, std::cout, std::cerr);
}
