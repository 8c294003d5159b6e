#include "stgan/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace stgan {
namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

std::string kind(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool integral(const json& v) {
  if (v.is_number_integer()) return true;
  if (!v.is_number_float()) return false;
  const double d = v.get<double>();
  return std::isfinite(d) && std::floor(d) == d;
}

// Compares a user document against the materialized defaults.
void check_schema(const json& doc, const json& ref, const std::string& prefix,
                  std::vector<std::string>& errors) {
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    const auto it = ref.find(key);
    if (it == ref.end()) {
      errors.push_back(path + ": unknown key");
      continue;
    }
    const json& expected = *it;
    const bool nullable_string = expected.is_string() && value.is_null();
    if (kind(value) != kind(expected) && !nullable_string) {
      errors.push_back(path + ": expected " + kind(expected) + ", got " + kind(value));
      continue;
    }
    if (expected.is_number_unsigned() && (!integral(value) || value.get<double>() < 0)) {
      errors.push_back(path + ": expected a non-negative integer");
    } else if (expected.is_number_integer() && !integral(value)) {
      errors.push_back(path + ": expected an integer");
    } else if (expected.is_object()) {
      check_schema(value, expected, path, errors);
    } else if (expected.is_array()) {
      for (const auto& e : value) {
        if (!integral(e) || e.get<double>() < 0) {
          errors.push_back(path + ": expected an array of non-negative integers");
          break;
        }
      }
    }
  }
}

void leaf_paths(const json& doc, const std::string& prefix, std::vector<std::string>& out) {
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      leaf_paths(value, path, out);
    } else {
      out.push_back(path);
    }
  }
}

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += "\n  " + l;
  return out;
}

}  // namespace

void to_json(json& j, const PhantomSpec& v) {
  auto range = [](const Range& r) { return json{{"min", r.min}, {"max", r.max}}; };
  auto profile = [](const IntensityProfile& p) {
    return json{{"background", p.background}, {"lv", p.lv}, {"myo", p.myo}, {"rv", p.rv}};
  };
  j = json{{"image_size", v.image_size},
           {"lv_radius", range(v.lv_radius)},
           {"myo_thickness", range(v.myo_thickness)},
           {"rv_crescent", v.rv_crescent},
           {"rv_angle_deg", range(v.rv_angle_deg)},
           {"rv_thickness", range(v.rv_thickness)},
           {"scar_patch_count", {{"min", v.scar_patch_count.min}, {"max", v.scar_patch_count.max}}},
           {"scar_intensity", v.scar_intensity},
           {"noise_sigma_source", v.noise_sigma_source},
           {"noise_sigma_target", v.noise_sigma_target},
           {"boundary_blur_target", v.boundary_blur_target},
           {"intensity_source", profile(v.intensity_source)},
           {"intensity_target", profile(v.intensity_target)}};
}

void from_json(const json& j, PhantomSpec& v) {
  auto range = [&j](const char* key, Range& r) {
    if (auto it = j.find(key); it != j.end()) {
      read(*it, "min", r.min);
      read(*it, "max", r.max);
    }
  };
  auto profile = [&j](const char* key, IntensityProfile& p) {
    if (auto it = j.find(key); it != j.end()) {
      read(*it, "background", p.background);
      read(*it, "lv", p.lv);
      read(*it, "myo", p.myo);
      read(*it, "rv", p.rv);
    }
  };
  read(j, "image_size", v.image_size);
  range("lv_radius", v.lv_radius);
  range("myo_thickness", v.myo_thickness);
  read(j, "rv_crescent", v.rv_crescent);
  range("rv_angle_deg", v.rv_angle_deg);
  range("rv_thickness", v.rv_thickness);
  if (auto it = j.find("scar_patch_count"); it != j.end()) {
    read(*it, "min", v.scar_patch_count.min);
    read(*it, "max", v.scar_patch_count.max);
  }
  read(j, "scar_intensity", v.scar_intensity);
  read(j, "noise_sigma_source", v.noise_sigma_source);
  read(j, "noise_sigma_target", v.noise_sigma_target);
  read(j, "boundary_blur_target", v.boundary_blur_target);
  profile("intensity_source", v.intensity_source);
  profile("intensity_target", v.intensity_target);
}

void to_json(json& j, const ArchConfig& v) {
  j = json{{"image_size", v.image_size},
           {"base_channels", v.base_channels},
           {"n_residual_blocks", v.n_residual_blocks},
           {"n_discriminator_layers", v.n_discriminator_layers},
           {"n_classes", v.n_classes},
           {"segmentor_depth", v.segmentor_depth}};
}

void from_json(const json& j, ArchConfig& v) {
  read(j, "image_size", v.image_size);
  read(j, "base_channels", v.base_channels);
  read(j, "n_residual_blocks", v.n_residual_blocks);
  read(j, "n_discriminator_layers", v.n_discriminator_layers);
  read(j, "n_classes", v.n_classes);
  read(j, "segmentor_depth", v.segmentor_depth);
}

void to_json(json& j, const LossWeights& v) {
  j = json{{"lambda_cyc", v.lambda_cyc}, {"lambda_shape", v.lambda_shape}};
}

void from_json(const json& j, LossWeights& v) {
  read(j, "lambda_cyc", v.lambda_cyc);
  read(j, "lambda_shape", v.lambda_shape);
}

void to_json(json& j, const TrainConfig& v) {
  j = json{{"epochs", v.epochs},
           {"batch_size", v.batch_size},
           {"lr_gan", v.lr_gan},
           {"lr_seg", v.lr_seg},
           {"lr_pretrain", v.lr_pretrain},
           {"adam_beta1", v.adam_beta1},
           {"adam_beta2", v.adam_beta2},
           {"weights", v.weights},
           {"seed", v.seed},
           {"checkpoint_every", v.checkpoint_every},
           {"log_every", v.log_every},
           {"pretrain_epochs", v.pretrain_epochs},
           {"segmentor_joint", v.segmentor_joint},
           {"device", v.device}};
}

void from_json(const json& j, TrainConfig& v) {
  read(j, "epochs", v.epochs);
  read(j, "batch_size", v.batch_size);
  read(j, "lr_gan", v.lr_gan);
  read(j, "lr_seg", v.lr_seg);
  read(j, "lr_pretrain", v.lr_pretrain);
  read(j, "adam_beta1", v.adam_beta1);
  read(j, "adam_beta2", v.adam_beta2);
  read(j, "weights", v.weights);
  read(j, "seed", v.seed);
  read(j, "checkpoint_every", v.checkpoint_every);
  read(j, "log_every", v.log_every);
  read(j, "pretrain_epochs", v.pretrain_epochs);
  read(j, "segmentor_joint", v.segmentor_joint);
  read(j, "device", v.device);
}

void to_json(json& j, const DataConfig& v) {
  j = json{{"source_patients", v.source_patients},
           {"target_patients", v.target_patients},
           {"eval_patients", v.eval_patients},
           {"slices_per_patient", v.slices_per_patient},
           {"source_manifest", v.source_manifest},
           {"target_manifest", v.target_manifest},
           {"eval_manifest", v.eval_manifest}};
}

void from_json(const json& j, DataConfig& v) {
  read(j, "source_patients", v.source_patients);
  read(j, "target_patients", v.target_patients);
  read(j, "eval_patients", v.eval_patients);
  read(j, "slices_per_patient", v.slices_per_patient);
  auto path = [&j](const char* key, std::string& out) {
    if (auto it = j.find(key); it != j.end()) out = it->is_null() ? "" : it->get<std::string>();
  };
  path("source_manifest", v.source_manifest);
  path("target_manifest", v.target_manifest);
  path("eval_manifest", v.eval_manifest);
}

void to_json(json& j, const AblationConfig& v) { j = json{{"seeds", v.seeds}}; }

void from_json(const json& j, AblationConfig& v) { read(j, "seeds", v.seeds); }

void to_json(json& j, const RunConfig& v) {
  j = json{{"phantom", v.phantom}, {"arch", v.arch},         {"train", v.train},
           {"data", v.data},       {"ablation", v.ablation}, {"out_dir", v.out_dir},
           {"deterministic", v.deterministic}};
}

void from_json(const json& j, RunConfig& v) {
  read(j, "phantom", v.phantom);
  read(j, "arch", v.arch);
  read(j, "train", v.train);
  read(j, "data", v.data);
  read(j, "ablation", v.ablation);
  read(j, "out_dir", v.out_dir);
  read(j, "deterministic", v.deterministic);
}

std::vector<std::string> config_errors(const RunConfig& cfg) {
  std::vector<std::string> errors;
  auto collect = [&errors](const std::string& section, auto&& validate) {
    try {
      validate();
    } catch (const ValidationError& e) {
      errors.push_back(section + ": " + e.what());
    }
  };
  collect("phantom", [&] { cfg.phantom.validate(); });
  collect("arch", [&] { cfg.arch.validate(); });
  collect("train", [&] { cfg.train.validate(); });
  if (cfg.phantom.image_size != cfg.arch.image_size) {
    errors.push_back("phantom.image_size must equal arch.image_size");
  }
  const DataConfig& d = cfg.data;
  for (auto [name, n] : {std::pair{"data.source_patients", d.source_patients},
                         std::pair{"data.target_patients", d.target_patients},
                         std::pair{"data.eval_patients", d.eval_patients},
                         std::pair{"data.slices_per_patient", d.slices_per_patient}}) {
    if (n < 1) errors.push_back(std::string(name) + " must be >= 1");
  }
  if (cfg.ablation.seeds.empty()) errors.push_back("ablation.seeds must not be empty");
  if (cfg.out_dir.empty()) errors.push_back("out_dir must not be empty");
  return errors;
}

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ValidationError("config: top level must be an object");
  std::vector<std::string> errors;
  check_schema(doc, json(RunConfig{}), "", errors);
  if (!errors.empty()) throw ValidationError("invalid config:" + join(errors));
  RunConfig cfg;
  from_json(doc, cfg);
  errors = config_errors(cfg);
  if (!errors.empty()) throw ValidationError("invalid config:" + join(errors));
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  apply_env_overrides(doc, stx_environment());
  return parse_config(doc);
}

void save_config(const RunConfig& cfg, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot write config");
  out << json(cfg).dump(2) << '\n';
}

std::string env_var_name(const std::string& key_path) {
  std::string out = "STX_";
  for (char c : key_path) {
    out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

std::vector<std::string> apply_env_overrides(json& doc, const std::map<std::string, std::string>& env) {
  std::vector<std::string> keys;
  leaf_paths(json(RunConfig{}), "", keys);
  std::vector<std::string> applied;
  std::vector<std::string> unknown;
  for (const auto& [name, raw] : env) {
    if (name.rfind("STX_", 0) != 0) continue;
    const auto it = std::find_if(keys.begin(), keys.end(),
                                 [&](const std::string& k) { return env_var_name(k) == name; });
    if (it == keys.end()) {
      unknown.push_back(name + ": matches no config key");
      continue;
    }
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &doc;
    std::stringstream ss(*it);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
      node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = value;
    applied.push_back(*it);
  }
  if (!unknown.empty()) throw ValidationError("environment overrides:" + join(unknown));
  return applied;
}

std::map<std::string, std::string> stx_environment() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    if (entry.rfind("STX_", 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

}  // namespace stgan
