#include "msff/config.hpp"

#include <fstream>
#include <sstream>

namespace msff {

void TrainConfig::validate() const {
  if (lambda < 0) throw ConfigError("lambda must be >= 0");
  if (mu <= 0 || gamma <= 0) throw ConfigError("mu and gamma must be positive");
  if (lr_init <= 0 || lr_final <= 0) throw ConfigError("learning rates must be positive");
  if (lr_final > lr_init) throw ConfigError("lr_final must be <= lr_init");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (patch_size < 8 || patch_size % 4 != 0)
    throw ConfigError("patch_size must be a multiple of 4 and >= 8");
  if (patch_stride < 1) throw ConfigError("patch_stride must be >= 1");
  if (channels < 2) throw ConfigError("channels must be >= 2");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
}

TrainConfig desk_profile() { return TrainConfig{}; }

TrainConfig paper_profile() {
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.epochs = 210;
  cfg.patch_size = 256;
  cfg.patch_stride = 128;
  cfg.channels = 64;
  return cfg;
}

TrainConfig profile_by_name(const std::string& name) {
  if (name == "desk") return desk_profile();
  if (name == "paper") return paper_profile();
  throw ConfigError("unknown profile '" + name + "' (expected desk or paper)");
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto as_double = [&] {
    try {
      return std::stod(value);
    } catch (const std::exception&) {
      throw ConfigError("bad numeric value '" + value + "' for " + key);
    }
  };
  auto as_int = [&] {
    try {
      return std::stoi(value);
    } catch (const std::exception&) {
      throw ConfigError("bad integer value '" + value + "' for " + key);
    }
  };
  if (key == "lambda") cfg.lambda = as_double();
  else if (key == "mu") cfg.mu = as_double();
  else if (key == "gamma") cfg.gamma = as_double();
  else if (key == "lr_init") cfg.lr_init = as_double();
  else if (key == "lr_final") cfg.lr_final = as_double();
  else if (key == "beta1") cfg.beta1 = as_double();
  else if (key == "beta2") cfg.beta2 = as_double();
  else if (key == "adam_eps") cfg.adam_eps = as_double();
  else if (key == "batch_size") cfg.batch_size = as_int();
  else if (key == "epochs") cfg.epochs = as_int();
  else if (key == "patch_size") cfg.patch_size = as_int();
  else if (key == "patch_stride") cfg.patch_stride = as_int();
  else if (key == "channels") cfg.channels = as_int();
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
  else if (key == "numeric_mode") {
    try {
      cfg.numeric_mode = dtype_from_name(value);
    } catch (const std::exception&) {
      throw ConfigError("numeric_mode must be f32 or f64, got '" + value + "'");
    }
  } else if (key == "checkpoint_interval") cfg.checkpoint_interval = as_int();
  else if (key == "target_l_tm") cfg.target_l_tm = as_double();
  else throw ConfigError("unknown config key '" + key + "'");
}

void apply_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    apply_config_kv(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string config_to_text(const TrainConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "lambda = " << cfg.lambda << "\n"
     << "mu = " << cfg.mu << "\n"
     << "gamma = " << cfg.gamma << "\n"
     << "lr_init = " << cfg.lr_init << "\n"
     << "lr_final = " << cfg.lr_final << "\n"
     << "beta1 = " << cfg.beta1 << "\n"
     << "beta2 = " << cfg.beta2 << "\n"
     << "adam_eps = " << cfg.adam_eps << "\n"
     << "batch_size = " << cfg.batch_size << "\n"
     << "epochs = " << cfg.epochs << "\n"
     << "patch_size = " << cfg.patch_size << "\n"
     << "patch_stride = " << cfg.patch_stride << "\n"
     << "channels = " << cfg.channels << "\n"
     << "seed = " << cfg.seed << "\n"
     << "numeric_mode = " << dtype_name(cfg.numeric_mode) << "\n"
     << "checkpoint_interval = " << cfg.checkpoint_interval << "\n"
     << "target_l_tm = " << cfg.target_l_tm << "\n";
  return os.str();
}

}  // namespace msff
