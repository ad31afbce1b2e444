#include "ldcq/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "ldcq/errors.hpp"

namespace ldcq::harness {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty()) out.push_back(std::stoi(trim(item)));
  if (out.empty()) throw ConfigError("config: empty int list");
  return out;
}

std::string int_list_to_string(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: expected bool, got '" + v + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::desk_default(const std::string& env_name) {
  ExperimentConfig c;
  c.env = env_name;
  // shared desk-scale profile
  c.vae.epochs = 30;
  c.vae.hidden = 128;
  c.vae.batch_size = 64;
  c.vae.lr = 1e-3;
  c.vae.latent_dim = 8;
  c.prior.epochs = 60;
  c.prior.T = 200;
  c.prior.lr = 1e-3;
  c.prior.batch_size = 64;
  c.prior_time_dim = 32;
  c.prior_enc_hidden = 32;
  c.prior_blocks = {32, 16, 8, 16, 32};
  c.q.candidates = 16;
  c.q.q_hidden = 128;
  c.q.lr = 1e-3;
  c.q.batch_size = 16;
  c.wm.hidden = 128;

  if (env_name == "rw1d") {
    c.horizon = 1;
    c.data_episodes = 100;
    c.vae.latent_dim = 2;
    c.vae.hidden = 32;
    c.vae.epochs = 15;
    c.prior.T = 25;
    c.prior.epochs = 30;
    c.prior_time_dim = 16;
    c.prior_enc_hidden = 16;
    c.prior_blocks = {16, 8, 16};
    c.guidance.w = 1.0;
    c.q.iterations = 10000;
    c.q.q_hidden = 48;
    c.eval.episodes = 100;
  } else if (env_name == "trimodal") {
    c.horizon = 20;
    c.data_episodes = 300;
    c.vae.hidden = 64;
    c.prior.T = 30;
    c.prior.epochs = 40;
    c.guidance.w = 1.0;
    c.q.iterations = 3000;
    c.q.q_hidden = 64;
    c.eval.episodes = 100;
  } else if (env_name == "gridmaze" || env_name.rfind("gridmaze:", 0) == 0) {
    c.horizon = 10;
    c.data_episodes = 400;
    c.vae.hidden = 64;
    c.vae.epochs = 25;
    c.vae.batch_size = 128;
    c.prior.T = 30;
    c.prior.epochs = 30;
    c.guidance.w = 1.5;
    c.q.iterations = 3000;
    c.q.q_hidden = 64;
    c.wm.hidden = 64;
    c.plan_candidates = 6;
    c.plan_depth = 2;
    c.eval.episodes = 100;
  }
  c.q.horizon = c.horizon;
  return c;
}

void ExperimentConfig::apply_paper_scale() {
  paper_scale = true;
  vae = vae::VaeConfig{};          // Table 5
  prior = diffusion::PriorTrainConfig{};  // Table 6, except T (see below)
  prior.T = 500;
  prior.batch_size = 32;
  prior_time_dim = 256;
  prior_enc_hidden = 128;
  prior_blocks = {128, 32, 16, 8, 16, 32, 128};
  q = qlearn::LdcqConfig{};        // Table 7
  q.candidates = 500;
  q.q_hidden = 256;
  q.horizon = horizon;
}

std::uint64_t ExperimentConfig::eval_seed() const {
  return eval.seed != 0 ? eval.seed : Rng::derive(seed, "eval");
}

nn::DenoiserSpec ExperimentConfig::denoiser_spec() const {
  nn::DenoiserSpec spec;
  spec.time_dim = prior_time_dim;
  spec.enc_hidden = prior_enc_hidden;
  spec.blocks = prior_blocks;
  return spec;
}

qlearn::LdcqConfig ExperimentConfig::q_config() const {
  qlearn::LdcqConfig cfg = q;
  cfg.horizon = horizon;
  cfg.guidance = guidance;
  return cfg;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (key == "env") env = v;
  else if (key == "seed") seed = std::stoull(v);
  else if (key == "out") out = v;
  else if (key == "horizon") horizon = std::stoi(v);
  else if (key == "episodes") data_episodes = std::stoi(v);
  else if (key == "data.file") data_file = v;
  else if (key == "paper_scale") { if (parse_bool(v)) apply_paper_scale(); }
  else if (key == "vae.latent_dim") vae.latent_dim = std::stoi(v);
  else if (key == "vae.beta") vae.beta = std::stod(v);
  else if (key == "vae.lr") vae.lr = std::stod(v);
  else if (key == "vae.batch_size") vae.batch_size = std::stoi(v);
  else if (key == "vae.epochs") vae.epochs = std::stoi(v);
  else if (key == "vae.hidden") vae.hidden = std::stoi(v);
  else if (key == "vae.gru_layers") vae.gru_layers = std::stoi(v);
  else if (key == "prior.lr") prior.lr = std::stod(v);
  else if (key == "prior.batch_size") prior.batch_size = std::stoi(v);
  else if (key == "prior.epochs") prior.epochs = std::stoi(v);
  else if (key == "prior.T") prior.T = std::stoi(v);
  else if (key == "prior.beta_min") prior.beta_min = std::stod(v);
  else if (key == "prior.beta_max") prior.beta_max = std::stod(v);
  else if (key == "prior.drop_prob") prior.drop_prob = std::stod(v);
  else if (key == "prior.snr_clip") prior.snr_clip = std::stod(v);
  else if (key == "prior.time_dim") prior_time_dim = std::stoi(v);
  else if (key == "prior.enc_hidden") prior_enc_hidden = std::stoi(v);
  else if (key == "prior.blocks") prior_blocks = parse_int_list(v);
  else if (key == "guidance.w") guidance.w = std::stod(v);
  else if (key == "guidance.extra_steps") guidance.extra_steps = std::stoi(v);
  else if (key == "q.gamma") q.gamma = std::stod(v);
  else if (key == "q.rho") q.rho = std::stod(v);
  else if (key == "q.swap_mixing") q.swap_mixing = parse_bool(v);
  else if (key == "q.batch_size") q.batch_size = std::stoi(v);
  else if (key == "q.candidates") q.candidates = std::stoi(v);
  else if (key == "q.iterations") q.iterations = std::stol(v);
  else if (key == "q.lr") q.lr = std::stod(v);
  else if (key == "q.stride") q.stride = std::stoi(v);
  else if (key == "q.per_alpha") q.per_alpha = std::stod(v);
  else if (key == "q.per_eps") q.per_eps = std::stod(v);
  else if (key == "q.hidden") q.q_hidden = std::stoi(v);
  else if (key == "q.prior") {
    if (v != "diffusion" && v != "gaussian")
      throw ConfigError("config: q.prior must be diffusion|gaussian");
    q_candidate_prior = v;
  }
  else if (key == "wm.hidden") wm.hidden = std::stoi(v);
  else if (key == "wm.epochs") wm.epochs = std::stoi(v);
  else if (key == "wm.batch_size") wm.batch_size = std::stoi(v);
  else if (key == "wm.lr") wm.lr = std::stod(v);
  else if (key == "plan.candidates") plan_candidates = std::stoi(v);
  else if (key == "plan.depth") plan_depth = std::stoi(v);
  else if (key == "eval.mode") {
    if (v != "ldcq" && v != "bcq" && v != "ldgc" && v != "ldcp" && v != "behavior")
      throw ConfigError("config: unknown eval.mode '" + v + "'");
    eval.mode = v;
  }
  else if (key == "eval.episodes") eval.episodes = std::stoi(v);
  else if (key == "eval.seed") eval.seed = std::stoull(v);
  else if (key == "eval.candidates") eval.candidates = std::stoi(v);
  else if (key == "eval.use_min") eval.use_min = parse_bool(v);
  else if (key == "eval.sample_actions") eval.sample_actions = parse_bool(v);
  else throw ConfigError("config: unknown key '" + key + "'");
}

std::string ExperimentConfig::get(const std::string& key) const {
  // serialize() holds every key; scan it
  std::istringstream in(serialize());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    if (line.substr(0, eq) == key) return line.substr(eq + 3);
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "env = " << env << "\n";
  os << "data.file = " << data_file << "\n";
  os << "episodes = " << data_episodes << "\n";
  os << "eval.candidates = " << eval.candidates << "\n";
  os << "eval.episodes = " << eval.episodes << "\n";
  os << "eval.mode = " << eval.mode << "\n";
  os << "eval.sample_actions = " << (eval.sample_actions ? "true" : "false") << "\n";
  os << "eval.seed = " << eval.seed << "\n";
  os << "eval.use_min = " << (eval.use_min ? "true" : "false") << "\n";
  os << "guidance.extra_steps = " << guidance.extra_steps << "\n";
  os << "guidance.w = " << guidance.w << "\n";
  os << "horizon = " << horizon << "\n";
  os << "out = " << out << "\n";
  os << "paper_scale = " << (paper_scale ? "true" : "false") << "\n";
  os << "plan.candidates = " << plan_candidates << "\n";
  os << "plan.depth = " << plan_depth << "\n";
  os << "prior.T = " << prior.T << "\n";
  os << "prior.batch_size = " << prior.batch_size << "\n";
  os << "prior.beta_max = " << prior.beta_max << "\n";
  os << "prior.beta_min = " << prior.beta_min << "\n";
  os << "prior.blocks = " << int_list_to_string(prior_blocks) << "\n";
  os << "prior.drop_prob = " << prior.drop_prob << "\n";
  os << "prior.enc_hidden = " << prior_enc_hidden << "\n";
  os << "prior.epochs = " << prior.epochs << "\n";
  os << "prior.lr = " << prior.lr << "\n";
  os << "prior.snr_clip = " << prior.snr_clip << "\n";
  os << "prior.time_dim = " << prior_time_dim << "\n";
  os << "q.batch_size = " << q.batch_size << "\n";
  os << "q.candidates = " << q.candidates << "\n";
  os << "q.gamma = " << q.gamma << "\n";
  os << "q.hidden = " << q.q_hidden << "\n";
  os << "q.iterations = " << q.iterations << "\n";
  os << "q.lr = " << q.lr << "\n";
  os << "q.per_alpha = " << q.per_alpha << "\n";
  os << "q.per_eps = " << q.per_eps << "\n";
  os << "q.prior = " << q_candidate_prior << "\n";
  os << "q.rho = " << q.rho << "\n";
  os << "q.stride = " << q.stride << "\n";
  os << "q.swap_mixing = " << (q.swap_mixing ? "true" : "false") << "\n";
  os << "seed = " << seed << "\n";
  os << "vae.batch_size = " << vae.batch_size << "\n";
  os << "vae.beta = " << vae.beta << "\n";
  os << "vae.epochs = " << vae.epochs << "\n";
  os << "vae.gru_layers = " << vae.gru_layers << "\n";
  os << "vae.hidden = " << vae.hidden << "\n";
  os << "vae.latent_dim = " << vae.latent_dim << "\n";
  os << "vae.lr = " << vae.lr << "\n";
  os << "wm.batch_size = " << wm.batch_size << "\n";
  os << "wm.epochs = " << wm.epochs << "\n";
  os << "wm.hidden = " << wm.hidden << "\n";
  os << "wm.lr = " << wm.lr << "\n";
  return os.str();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  // start from the desk profile of the env named in the text (if any), then
  // apply every key in order
  std::istringstream scan(text);
  std::string line, env_name = "rw1d";
  while (std::getline(scan, line)) {
    const std::string t = trim(line);
    if (t.rfind("env", 0) == 0) {
      const auto eq = t.find('=');
      if (eq != std::string::npos && trim(t.substr(0, eq)) == "env")
        env_name = trim(t.substr(eq + 1));
    }
  }
  ExperimentConfig cfg = desk_default(env_name);
  std::istringstream in(text);
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: malformed line '" + t + "'");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config: cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ExperimentConfig::save(const std::filesystem::path& file) const {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw ConfigError("config: cannot write " + file.string());
  out << serialize();
}

}  // namespace ldcq::harness
