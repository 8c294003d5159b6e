#include "stgan/app.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

#include "stgan/image_io.hpp"
#include "stgan/phantom.hpp"
#include "stgan/plot.hpp"

namespace stgan::app {
namespace {

namespace fs = std::filesystem;

constexpr std::array<const char*, 3> kStructureNames{"LV", "RV", "Myo"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot write");
  return out;
}

// Seed of one of the three benchmark sets drawn for a master seed.
std::uint64_t dataset_seed(std::uint64_t master, std::uint64_t which) {
  return master * 1000 + which;
}

fs::path manifest_in(const fs::path& dir) { return dir / kManifestName; }

fs::path ensure_set(const RunConfig& cfg, const GenerateOptions& opts, const fs::path& dir) {
  const fs::path manifest = manifest_in(dir);
  if (!fs::exists(manifest)) generate_dataset(cfg.phantom, opts, dir);
  return manifest;
}

void write_pretrain_log(const std::vector<double>& dice, const fs::path& path) {
  auto out = open_out(path);
  out << "epoch,source_myo_dice\n";
  for (std::size_t i = 0; i < dice.size(); ++i) out << i + 1 << ',' << fmt(dice[i]) << '\n';
}

void write_loss_plot(const std::vector<LogRow>& log, const fs::path& path, const std::string& title) {
  plot::Series gan{"l_gan", {}, {}}, cyc{"l_cyc", {}, {}}, shape{"l_shape", {}, {}},
      total{"l_total", {}, {}};
  for (const auto& r : log) {
    const double x = double(r.step);
    for (auto* s : {&gan, &cyc, &shape, &total}) s->x.push_back(x);
    gan.y.push_back(r.report.l_gan);
    cyc.y.push_back(r.report.l_cyc);
    shape.y.push_back(r.report.l_shape);
    total.y.push_back(r.report.l_total);
  }
  plot::line_chart(path, title, "step", {gan, cyc, shape, total});
}

void write_masks_manifest(const Dataset& inputs, const std::vector<LabelMask>& masks,
                          const fs::path& out_dir) {
  DatasetManifest m;
  m.image_size = inputs.image_size();
  const fs::path src_dir = inputs.manifest_path.parent_path();
  const DatasetManifest src = read_manifest(inputs.manifest_path);
  std::error_code ec;
  fs::create_directories(out_dir / "masks", ec);
  if (ec) throw IoError((out_dir / "masks").string(), "cannot create directory: " + ec.message());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const DataSample& s = inputs.sample(i);
    char stem[32];
    std::snprintf(stem, sizeof stem, "p%03d_s%02d.png", s.patient_id, s.slice_index);
    const fs::path mask_rel = fs::path("masks") / stem;
    io::write_label_png(out_dir / mask_rel, masks[i]);
    ManifestEntry e = src.entries.at(i);
    e.image_path = fs::relative(fs::absolute(src_dir / e.image_path), fs::absolute(out_dir)).generic_string();
    e.mask_path = mask_rel.generic_string();
    m.entries.push_back(e);
  }
  write_manifest(m, manifest_in(out_dir));
}

// Groups slice indices by patient, each group sorted by slice index.
std::map<int, std::vector<std::size_t>> by_patient(const Dataset& ds) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < ds.size(); ++i) out[ds.sample(i).patient_id].push_back(i);
  for (auto& [p, idx] : out) {
    std::sort(idx.begin(), idx.end(), [&ds](std::size_t a, std::size_t b) {
      return ds.sample(a).slice_index < ds.sample(b).slice_index;
    });
  }
  return out;
}

void write_metrics(const std::vector<metrics::PatientMetrics>& per_patient, const fs::path& dir) {
  auto csv = open_out(dir / "metrics.csv");
  csv << "patient_id,metric,structure,value\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("NA"); };
  for (const auto& p : per_patient) {
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string s = metrics::name(metrics::kStructures[i]);
      csv << p.patient_id << ",Dice," << s << ',' << fmt(p.dice[i]) << '\n';
      csv << p.patient_id << ",Jaccard," << s << ',' << fmt(p.jaccard[i]) << '\n';
    }
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string b = metrics::name(metrics::kBoundaries[i]);
      csv << p.patient_id << ",ASD," << b << ',' << opt(p.asd[i]) << '\n';
      csv << p.patient_id << ",HD," << b << ',' << opt(p.hd[i]) << '\n';
    }
  }
  const auto rows = metrics::aggregate_cohort(per_patient);
  auto summary = open_out(dir / "summary.csv");
  summary << "metric,structure,mean,std,n\n";
  for (const auto& r : rows) {
    summary << r.metric << ',' << r.structure << ',' << fmt(r.mean) << ',' << fmt(r.std) << ','
            << r.n << '\n';
  }
  auto table = open_out(dir / "summary.txt");
  table << "# mean +- sample std (n-1; 0 when n = 1) over patients\n"
        << "# both-empty regions score 1.0; distances undefined for empty boundaries are skipped\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-8s %-8s %10s %10s %4s\n", "metric", "struct", "mean", "std", "n");
  table << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-8s %-8s %10.4f %10.4f %4d\n", r.metric.c_str(),
                  r.structure.c_str(), r.mean, r.std, r.n);
    table << line;
  }
}

// Rows of an existing training log that belong to epochs <= `last_epoch`.
std::vector<std::string> log_lines_before(const fs::path& path, int last_epoch) {
  std::vector<std::string> out;
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (!line.empty() && std::stoi(line.substr(0, line.find(','))) <= last_epoch) out.push_back(line);
  }
  return out;
}

int fail(std::ostream& err, const std::string& what) {
  err << "error: " << what << '\n';
  return 1;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const IoError& e) {
    return fail(err, e.what());
  } catch (const std::exception& e) {
    return fail(err, e.what());
  }
}

fs::path require_out(const CommonOptions& common, const RunConfig& cfg) {
  return common.out ? *common.out : fs::path(cfg.out_dir);
}

}  // namespace

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kUnet: return "unet";
    case Mode::kNoShape: return "noshape";
    case Mode::kShapeTransfer: return "shapetransfer";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  for (Mode m : kModes) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown mode '" + std::string(s) + "' (expected unet, noshape or shapetransfer)");
}

BenchmarkPaths prepare_benchmark(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  const DataConfig& d = cfg.data;
  BenchmarkPaths p;
  if (!d.source_manifest.empty()) {
    p.source = d.source_manifest;
  } else {
    p.source = ensure_set(cfg, {d.source_patients, d.slices_per_patient, Domain::kSource,
                                dataset_seed(seed, 1), false, true},
                          dir / "source");
  }
  if (!d.target_manifest.empty()) {
    p.target = d.target_manifest;
  } else {
    p.target = ensure_set(cfg, {d.target_patients, d.slices_per_patient, Domain::kTarget,
                                dataset_seed(seed, 2), false, false},
                          dir / "target");
  }
  if (!d.eval_manifest.empty()) {
    p.eval = d.eval_manifest;
  } else {
    p.eval = ensure_set(cfg, {d.eval_patients, d.slices_per_patient, Domain::kTarget,
                              dataset_seed(seed, 3), false, true},
                        dir / "eval");
  }
  return p;
}

TrainingData load_training_data(const BenchmarkPaths& paths, int image_size) {
  TrainingData d;
  d.source = load_dataset(paths.source, {true, image_size, false});
  d.target = load_dataset(paths.target, {false, image_size, true});
  return d;
}

ModeRun run_mode(Mode mode, const TrainingData& data, const ModelBundle& pretrained,
                 const TrainConfig& cfg, const TrainOptions& opts) {
  ModeRun run;
  run.mode = mode;
  if (mode == Mode::kUnet) {
    run.bundle = pretrained;
    return run;
  }
  TrainConfig c = cfg;
  if (mode == Mode::kNoShape) c.weights.lambda_shape = 0.0;
  GanResult r = train_shape_transfer_gan(data.source, data.target, pretrained, c, opts);
  run.bundle = std::move(r.bundle);
  run.log = std::move(r.log);
  run.optimizer = std::move(r.optimizer);
  run.epochs_completed = r.epochs_completed;
  if (mode == Mode::kNoShape && !c.segmentor_joint && run.epochs_completed == c.epochs) {
    run.bundle = train_segmentor_on_translated(data.source, std::move(run.bundle), c);
  }
  return run;
}

std::vector<metrics::PatientMetrics> evaluate_bundle(const ModelBundle& bundle, const Dataset& eval,
                                                     metrics::Spacing spacing,
                                                     metrics::DistanceMode mode) {
  const auto pred = segment_dataset(bundle, eval);
  std::vector<metrics::PatientMetrics> out;
  for (const auto& [patient, idx] : by_patient(eval)) {
    std::vector<LabelMask> seg, gt;
    for (std::size_t i : idx) {
      seg.push_back(pred[i]);
      gt.push_back(eval.mask(i));
    }
    auto m = metrics::evaluate_volume(seg, gt, spacing, mode);
    m.patient_id = patient;
    out.push_back(m);
  }
  return out;
}

std::array<double, 3> mean_dice(const std::vector<metrics::PatientMetrics>& per_patient) {
  std::array<double, 3> out{};
  for (const auto& p : per_patient) {
    for (std::size_t i = 0; i < 3; ++i) out[i] += p.dice[i];
  }
  for (double& v : out) v /= double(std::max<std::size_t>(per_patient.size(), 1));
  return out;
}

std::vector<double> epoch_cycle_means(const std::vector<LogRow>& log) {
  std::map<int, std::pair<double, int>> acc;
  for (const auto& r : log) {
    acc[r.epoch].first += r.report.l_cyc;
    acc[r.epoch].second += 1;
  }
  std::vector<double> out;
  for (const auto& [e, v] : acc) out.push_back(v.first / v.second);
  return out;
}

AblationResult run_ablation(const RunConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  if (const auto errors = config_errors(cfg); !errors.empty()) {
    throw ValidationError("ablation config: " + errors.front());
  }
  save_config(cfg, out_dir / "config.json");
  AblationResult result;
  auto detail = open_out(out_dir / "ablation_seeds.csv");
  detail << "seed,method,LV,RV,Myo\n";

  for (std::uint64_t seed : cfg.ablation.seeds) {
    const fs::path dir = out_dir / ("seed_" + std::to_string(seed));
    AblationSeedResult sr;
    sr.seed = seed;
    const BenchmarkPaths paths = prepare_benchmark(cfg, seed, dir / "data");
    TrainConfig tc = cfg.train;
    tc.seed = seed;

    const std::int64_t reads_before = MaskReadCounter::reads(Domain::kTarget);
    const TrainingData data = load_training_data(paths, cfg.arch.image_size);
    log << "[seed " << seed << "] pretraining segmentor\n";
    PretrainResult pre = pretrain_segmentor(data.source, cfg.arch, tc);
    sr.pretrain_dice = pre.epoch_myo_dice;
    write_pretrain_log(pre.epoch_myo_dice, dir / "pretrain_log.csv");
    std::array<ModeRun, 3> runs;
    for (std::size_t k = 0; k < kModes.size(); ++k) {
      log << "[seed " << seed << "] training " << to_string(kModes[k]) << '\n';
      TrainOptions opts;
      opts.deterministic = cfg.deterministic;
      opts.on_epoch_end = [&log, k](int epoch, const ModelBundle&) {
        log << "  " << to_string(kModes[k]) << " epoch " << epoch << '\n';
      };
      runs[k] = run_mode(kModes[k], data, pre.bundle, tc, opts);
      if (!runs[k].log.empty()) {
        write_log_csv(runs[k].log, dir / std::string(to_string(kModes[k])) / "train_log.csv");
      }
    }
    sr.target_mask_reads_in_training = MaskReadCounter::reads(Domain::kTarget) - reads_before;
    sr.cycle_epoch_means = epoch_cycle_means(runs[2].log);

    const Dataset eval = load_dataset(paths.eval, {true, cfg.arch.image_size, false});

    for (std::size_t k = 0; k < kModes.size(); ++k) {
      const auto per_patient = evaluate_bundle(runs[k].bundle, eval);
      write_metrics(per_patient, dir / std::string(to_string(kModes[k])));
      sr.dice[k] = mean_dice(per_patient);
      detail << seed << ',' << to_string(kModes[k]);
      for (double v : sr.dice[k]) detail << ',' << fmt(v);
      detail << '\n' << std::flush;
      log << "[seed " << seed << "] " << to_string(kModes[k]) << " Myo Dice " << fmt(sr.dice[k][2])
          << '\n';
    }
    result.target_mask_reads_in_training += sr.target_mask_reads_in_training;
    result.seeds.push_back(std::move(sr));
  }

  for (const auto& sr : result.seeds) {
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t s = 0; s < 3; ++s) result.mean_dice[k][s] += sr.dice[k][s];
    }
  }
  for (auto& row : result.mean_dice) {
    for (double& v : row) v /= double(result.seeds.size());
  }
  auto csv = open_out(out_dir / "ablation.csv");
  csv << "method,LV,RV,Myo\n";
  std::vector<std::string> groups;
  std::vector<std::vector<double>> values;
  for (std::size_t k = 0; k < 3; ++k) {
    csv << to_string(kModes[k]);
    for (double v : result.mean_dice[k]) csv << ',' << fmt(v);
    csv << '\n';
    groups.emplace_back(to_string(kModes[k]));
    values.emplace_back(result.mean_dice[k].begin(), result.mean_dice[k].end());
  }
  plot::bar_chart(out_dir / "ablation.svg", "Target Dice by method", groups,
                  {kStructureNames.begin(), kStructureNames.end()}, values);
  return result;
}

RunConfig resolve_config(const CommonOptions& opts) {
  json doc = json::object();
  if (opts.config) {
    std::ifstream in(*opts.config);
    if (!in) throw IoError(*opts.config, "cannot open config");
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ValidationError("config " + opts.config->string() + ": " + e.what());
    }
  }
  apply_env_overrides(doc, stx_environment());
  RunConfig cfg = parse_config(doc);
  if (opts.seed) {
    cfg.train.seed = *opts.seed;
    const std::size_t n = cfg.ablation.seeds.size();
    cfg.ablation.seeds.clear();
    for (std::size_t i = 0; i < n; ++i) cfg.ablation.seeds.push_back(*opts.seed + i);
  }
  if (opts.deterministic) cfg.deterministic = true;
  if (opts.out) cfg.out_dir = opts.out->string();
  return cfg;
}

int cmd_phantom(const CommonOptions& common, const PhantomArgs& args, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = require_out(common, cfg);
    GenerateOptions g{args.patients, args.slices, args.domain, cfg.train.seed, args.overwrite,
                      args.write_masks};
    const DatasetManifest m = generate_dataset(cfg.phantom, g, dir);
    save_config(cfg, dir / "config.json");
    out << "wrote " << m.entries.size() << " samples to " << m.path.string() << '\n';
    return 0;
  });
}

int cmd_train(const CommonOptions& common, const TrainArgs& args, std::ostream& out,
              std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = require_out(common, cfg);
    save_config(cfg, dir / "config.json");
    const BenchmarkPaths paths = prepare_benchmark(cfg, cfg.train.seed, dir / "data");
    const std::int64_t reads_before = MaskReadCounter::reads(Domain::kTarget);
    const TrainingData data = load_training_data(paths, cfg.arch.image_size);
    ModelBundle start;
    std::optional<Checkpoint> resume;
    if (args.resume) {
      resume = checkpoint_load(*args.resume);
      start = resume->bundle;
    } else {
      PretrainResult pre = pretrain_segmentor(
          data.source, cfg.arch, cfg.train,
          [&out](int epoch, double dice) { out << "pretrain epoch " << epoch << " source Myo Dice " << fmt(dice) << '\n'; });
      write_pretrain_log(pre.epoch_myo_dice, dir / "pretrain_log.csv");
      checkpoint_save(Checkpoint{pre.bundle, pre.optimizer, cfg.train, 0}, dir / "pretrain.ckpt");
      start = std::move(pre.bundle);
    }

    TrainOptions opts;
    opts.deterministic = cfg.deterministic;
    opts.checkpoint_dir = dir / "checkpoints";
    if (resume) opts.resume = &*resume;
    opts.on_epoch_end = [&out](int epoch, const ModelBundle&) { out << "epoch " << epoch << " done\n"; };
    ModeRun run = run_mode(args.mode, data, start, cfg.train, opts);

    if (MaskReadCounter::reads(Domain::kTarget) != reads_before) {
      throw std::logic_error("target-domain masks were read during training");
    }
    const int epoch = args.mode == Mode::kUnet ? 0 : run.epochs_completed;
    checkpoint_save(Checkpoint{run.bundle, run.optimizer, cfg.train, epoch}, dir / "final.ckpt");
    if (args.mode != Mode::kUnet) {
      const fs::path log_path = dir / "train_log.csv";
      std::vector<std::string> earlier;
      if (resume) earlier = log_lines_before(log_path, resume->epoch);
      auto csv = open_out(log_path);
      csv << log_csv_header() << '\n';
      for (const auto& line : earlier) csv << line << '\n';
      for (const auto& r : run.log) csv << log_csv_row(r) << '\n';
      write_loss_plot(run.log, dir / "loss_curve.svg",
                      "Training losses (" + std::string(to_string(args.mode)) + ")");
    }
    out << "wrote " << (dir / "final.ckpt").string() << '\n';
    return 0;
  });
}

int cmd_segment(const CommonOptions& common, const SegmentArgs& args, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = require_out(common, cfg);
    const Checkpoint ckpt = checkpoint_load(args.checkpoint);
    const DatasetManifest input = read_manifest(args.input_manifest);
    if (input.image_size != ckpt.bundle.arch.image_size) {
      throw ValidationError("input image size " + std::to_string(input.image_size) +
                            " does not match checkpoint architecture image_size " +
                            std::to_string(ckpt.bundle.arch.image_size));
    }
    const Dataset ds = load_dataset(args.input_manifest, {false, ckpt.bundle.arch.image_size, true});
    const auto masks = segment_dataset(ckpt.bundle, ds);
    write_masks_manifest(ds, masks, dir);
    save_config(cfg, dir / "config.json");
    out << "wrote " << masks.size() << " masks to " << dir.string() << '\n';
    return 0;
  });
}

int cmd_evaluate(const CommonOptions& common, const EvaluateArgs& args, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = require_out(common, cfg);
    const Dataset truth = load_dataset(args.truth_manifest, {true, 0, false});
    const Dataset pred = load_dataset(args.predicted_manifest, {true, truth.image_size(), false});
    std::map<std::pair<int, int>, std::size_t> pred_index;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      pred_index[{pred.sample(i).patient_id, pred.sample(i).slice_index}] = i;
    }
    std::vector<metrics::PatientMetrics> per_patient;
    for (const auto& [patient, idx] : by_patient(truth)) {
      std::vector<LabelMask> seg, gt;
      for (std::size_t i : idx) {
        const auto key = std::pair{patient, truth.sample(i).slice_index};
        const auto it = pred_index.find(key);
        if (it == pred_index.end()) {
          throw ValidationError("no prediction for patient " + std::to_string(patient) + " slice " +
                                std::to_string(key.second));
        }
        seg.push_back(pred.mask(it->second));
        gt.push_back(truth.mask(i));
      }
      auto m = metrics::evaluate_volume(seg, gt, args.spacing, args.distance_mode);
      m.patient_id = patient;
      per_patient.push_back(m);
    }
    write_metrics(per_patient, dir);
    save_config(cfg, dir / "config.json");
    std::ifstream table(dir / "summary.txt");
    out << table.rdbuf();
    return 0;
  });
}

int cmd_ablate(const CommonOptions& common, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = resolve_config(common);
    const fs::path dir = require_out(common, cfg);
    const AblationResult r = run_ablation(cfg, dir, err);
    std::ifstream csv(dir / "ablation.csv");
    out << csv.rdbuf();
    if (r.target_mask_reads_in_training != 0) {
      return fail(err, "target-domain masks were read during training");
    }
    return 0;
  });
}

}  // namespace stgan::app
