#include "hfda/config.hpp"

#include "hfda/errors.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace hfda {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw UsageError("expected a number, got '" + s + "'");
  }
  if (pos != s.size()) throw UsageError("expected a number, got '" + s + "'");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw UsageError("expected a nonnegative integer, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw UsageError("expected true or false, got '" + s + "'");
}

std::string fmt(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

ScheduleKind parse_schedule(const std::string& v) {
  if (v == "constant") return ScheduleKind::constant;
  if (v == "polynomial") return ScheduleKind::polynomial;
  throw UsageError("unknown schedule '" + v + "'");
}

std::string schedule_name(ScheduleKind k) {
  return k == ScheduleKind::constant ? "constant" : "polynomial";
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Entry {
  ConfigKey key;
  Setter set;
  Getter get;
};

const std::vector<Entry>& entries() {
  using C = ExperimentConfig;
  static const std::vector<Entry> table = {
      {{"model.name", "string", "built-in model: fitzhugh_nagumo, lotka_volterra, van_der_pol"},
       [](C& c, const std::string& v) { c.model = v; },
       [](const C& c) { return c.model; }},
      {{"model.estimate_initial_state", "bool", "estimate x0 together with the parameters"},
       [](C& c, const std::string& v) { c.estimate_initial_state = to_bool(v); },
       [](const C& c) { return std::string(c.estimate_initial_state ? "true" : "false"); }},
      {{"observations.period", "double", "time between observations (model default)"},
       [](C& c, const std::string& v) { c.obs_period = to_double(v); },
       [](const C& c) { return c.obs_period ? fmt(*c.obs_period) : std::string(); }},
      {{"observations.sigma", "double", "noise standard deviation (V = sigma^2 I)"},
       [](C& c, const std::string& v) { c.obs_sigma = to_double(v); },
       [](const C& c) { return fmt(c.obs_sigma); }},
      {{"observations.seed", "uint", "noise seed"},
       [](C& c, const std::string& v) { c.obs_seed = to_u64(v); },
       [](const C& c) { return std::to_string(c.obs_seed); }},
      {{"integration.h", "double", "preferred RK step (model default)"},
       [](C& c, const std::string& v) { c.h = to_double(v); },
       [](const C& c) { return c.h ? fmt(*c.h) : std::string(); }},
      {{"study.schemes", "list", "modification schemes to evaluate"},
       [](C& c, const std::string& v) {
         c.schemes.clear();
         for (const auto& s : split_list(v)) c.schemes.push_back(parse_modification(s));
       },
       [](const C& c) {
         std::string out;
         for (auto k : c.schemes) out += (out.empty() ? "" : ", ") + to_string(k);
         return out;
       }},
      {{"study.potps", "list", "proportions of observations to keep"},
       [](C& c, const std::string& v) {
         c.potps.clear();
         for (const auto& s : split_list(v)) c.potps.push_back(to_double(s));
       },
       [](const C& c) {
         std::string out;
         for (double p : c.potps) out += (out.empty() ? "" : ", ") + fmt(p);
         return out;
       }},
      {{"study.scheme_seed", "uint", "seed for the random modification schemes"},
       [](C& c, const std::string& v) { c.scheme_seed = to_u64(v); },
       [](const C& c) { return std::to_string(c.scheme_seed); }},
      {{"solver.eta0", "double", "first-order step per loss term (model default)"},
       [](C& c, const std::string& v) { c.eta0 = to_double(v); },
       [](const C& c) { return c.eta0 ? fmt(*c.eta0) : std::string(); }},
      {{"solver.sgd_eta0", "double", "SGD step per loss term (model default)"},
       [](C& c, const std::string& v) { c.sgd_eta0 = to_double(v); },
       [](const C& c) { return c.sgd_eta0 ? fmt(*c.sgd_eta0) : std::string(); }},
      {{"solver.gd_modified_eta0", "double", "GD step per loss term on modified data (model default)"},
       [](C& c, const std::string& v) { c.gd_modified_eta0 = to_double(v); },
       [](const C& c) { return c.gd_modified_eta0 ? fmt(*c.gd_modified_eta0) : std::string(); }},
      {{"solver.schedule", "string", "GD step schedule: constant or polynomial"},
       [](C& c, const std::string& v) { c.schedule = parse_schedule(v); },
       [](const C& c) { return schedule_name(c.schedule); }},
      {{"solver.sgd_schedule", "string", "SGD step schedule (defaults to schedule)"},
       [](C& c, const std::string& v) { c.sgd_schedule = parse_schedule(v); },
       [](const C& c) { return c.sgd_schedule ? schedule_name(*c.sgd_schedule) : std::string(); }},
      {{"solver.alpha", "double", "polynomial decay exponent in (0.5, 1]"},
       [](C& c, const std::string& v) { c.alpha = to_double(v); },
       [](const C& c) { return fmt(c.alpha); }},
      {{"solver.k0", "double", "polynomial decay offset"},
       [](C& c, const std::string& v) { c.k0 = to_double(v); },
       [](const C& c) { return fmt(c.k0); }},
      {{"solver.lambda", "double", "Gauss-Newton damping; negative picks 1e-8 trace/q"},
       [](C& c, const std::string& v) { c.lambda = to_double(v); },
       [](const C& c) { return fmt(c.lambda); }},
      {{"solver.gn_tol", "double", "Gauss-Newton relative step tolerance (0 disables)"},
       [](C& c, const std::string& v) { c.gn_tol = to_double(v); },
       [](const C& c) { return fmt(c.gn_tol); }},
      {{"solver.gn_max_iter", "uint", "iteration cap for study and reference minimizations"},
       [](C& c, const std::string& v) { c.gn_max_iter = to_u64(v); },
       [](const C& c) { return std::to_string(c.gn_max_iter); }},
      {{"solver.batch_kappa", "uint", "stochastic batch spacing (0: round(h / period))"},
       [](C& c, const std::string& v) { c.batch_kappa = to_u64(v); },
       [](const C& c) { return std::to_string(c.batch_kappa); }},
      {{"solver.form", "string", "kSGD update: auto, information, covariance"},
       [](C& c, const std::string& v) { c.form = parse_ksgd_form(v); },
       [](const C& c) { return to_string(c.form); }},
      {{"solver.mode", "string", "derivatives: forward or adjoint"},
       [](C& c, const std::string& v) {
         if (v == "forward")
           c.mode = DerivativeMode::forward;
         else if (v == "adjoint")
           c.mode = DerivativeMode::adjoint;
         else
           throw UsageError("unknown derivative mode '" + v + "'");
       },
       [](const C& c) {
         return std::string(c.mode == DerivativeMode::forward ? "forward" : "adjoint");
       }},
      {{"solver.sgd_sampler", "string", "systematic, simple, stratified, full, sweep"},
       [](C& c, const std::string& v) { c.sgd_sampler = parse_sampler(v); },
       [](const C& c) { return to_string(c.sgd_sampler); }},
      {{"solver.ksgd_sampler", "string", "systematic, simple, stratified, full, sweep"},
       [](C& c, const std::string& v) { c.ksgd_sampler = parse_sampler(v); },
       [](const C& c) { return to_string(c.ksgd_sampler); }},
      {{"solver.ksgd_simple_run", "bool", "add a kSGD race run with simple random sampling"},
       [](C& c, const std::string& v) { c.ksgd_simple_run = to_bool(v); },
       [](const C& c) { return std::string(c.ksgd_simple_run ? "true" : "false"); }},
      {{"solver.reweight", "bool", "weight loss terms by observation counts"},
       [](C& c, const std::string& v) { c.reweight = to_bool(v); },
       [](const C& c) { return std::string(c.reweight ? "true" : "false"); }},
      {{"solver.seed", "uint", "seed for the stochastic samplers"},
       [](C& c, const std::string& v) { c.solver_seed = to_u64(v); },
       [](const C& c) { return std::to_string(c.solver_seed); }},
      {{"race.budget", "double", "solver seconds per run (0 disables)"},
       [](C& c, const std::string& v) { c.budget = to_double(v); },
       [](const C& c) { return fmt(c.budget); }},
      {{"race.max_iter", "uint", "iteration cap per run (0 disables)"},
       [](C& c, const std::string& v) { c.max_iter = to_u64(v); },
       [](const C& c) { return std::to_string(c.max_iter); }},
      {{"race.potp", "double", "proportion kept by the modified problems"},
       [](C& c, const std::string& v) { c.race_potp = to_double(v); },
       [](const C& c) { return fmt(c.race_potp); }},
      {{"race.theta0", "string", "start: reference, perturbed or explicit"},
       [](C& c, const std::string& v) { c.theta0 = parse_theta0_policy(v); },
       [](const C& c) { return to_string(c.theta0); }},
      {{"race.perturb_scale", "double", "relative size of the Gaussian start perturbation"},
       [](C& c, const std::string& v) { c.perturb_scale = to_double(v); },
       [](const C& c) { return fmt(c.perturb_scale); }},
      {{"race.perturb_seed", "uint", "seed of the start perturbation"},
       [](C& c, const std::string& v) { c.perturb_seed = to_u64(v); },
       [](const C& c) { return std::to_string(c.perturb_seed); }},
      {{"race.theta0_values", "list", "explicit start (free unknowns or full z0)"},
       [](C& c, const std::string& v) {
         c.theta0_values.clear();
         for (const auto& s : split_list(v)) c.theta0_values.push_back(to_double(s));
       },
       [](const C& c) {
         std::string out;
         for (double p : c.theta0_values) out += (out.empty() ? "" : ", ") + fmt(p);
         return out;
       }},
      {{"race.record_every", "uint", "record cadence for GD and Gauss-Newton"},
       [](C& c, const std::string& v) { c.record_every_deterministic = to_u64(v); },
       [](const C& c) { return std::to_string(c.record_every_deterministic); }},
      {{"race.record_every_stochastic", "uint", "record cadence for SGD and kSGD"},
       [](C& c, const std::string& v) { c.record_every_stochastic = to_u64(v); },
       [](const C& c) { return std::to_string(c.record_every_stochastic); }},
      {{"race.max_records", "uint", "records replayed per run, evenly thinned (0: all)"},
       [](C& c, const std::string& v) { c.max_records = to_u64(v); },
       [](const C& c) { return std::to_string(c.max_records); }},
      {{"output.dir", "path", "output directory"},
       [](C& c, const std::string& v) { c.output_dir = v; },
       [](const C& c) { return c.output_dir.string(); }},
  };
  return table;
}

const Entry& find_entry(const std::string& name) {
  for (const auto& e : entries())
    if (e.key.name == name) return e;
  throw UsageError("unknown config key '" + name + "'");
}

std::pair<std::string, std::string> split_assignment(const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw UsageError("expected 'key = value'");
  std::string key = trim(line.substr(0, eq));
  if (key.empty()) throw UsageError("missing key before '='");
  return {key, trim(line.substr(eq + 1))};
}

}  // namespace

void apply_setting(ExperimentConfig& config, const std::string& dotted_key,
                   const std::string& value) {
  const Entry& e = find_entry(dotted_key);
  try {
    e.set(config, value);
  } catch (const UsageError& err) {
    throw UsageError(dotted_key + ": " + err.what());
  }
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::vector<std::string>& overrides,
                                   const std::string& source) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      if (line.front() == '[') {
        if (line.back() != ']') throw UsageError("unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (section.empty()) throw UsageError("empty section name");
        continue;
      }
      auto [key, value] = split_assignment(line);
      if (section.empty() && key.find('.') == std::string::npos)
        throw UsageError("key '" + key + "' outside any section");
      apply_setting(config, section.empty() ? key : section + "." + key, value);
    } catch (const UsageError& err) {
      throw UsageError(source + ":" + std::to_string(lineno) + ": " + err.what());
    }
  }
  for (const auto& ov : overrides) {
    try {
      auto [key, value] = split_assignment(ov);
      apply_setting(config, key, value);
    } catch (const UsageError& err) {
      throw UsageError("--set " + ov + ": " + err.what());
    }
  }
  try {
    config.resolve();
  } catch (const UsageError& err) {
    throw UsageError(source + ": " + err.what());
  }
  return config;
}

ExperimentConfig parse_config(const std::filesystem::path& path,
                              const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides, path.string());
}

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return keys;
}

std::string config_help() {
  std::ostringstream os;
  for (const auto& k : config_schema())
    os << "  " << std::left << std::setw(34) << k.name << std::setw(8) << k.type << k.description
       << '\n';
  return os.str();
}

std::string format_config(const ExperimentConfig& config) {
  std::ostringstream os;
  std::string section;
  for (const auto& e : entries()) {
    const auto dot = e.key.name.find('.');
    const std::string sec = e.key.name.substr(0, dot);
    const std::string value = e.get(config);
    if (value.empty()) continue;
    if (sec != section) {
      os << (section.empty() ? "" : "\n") << '[' << sec << "]\n";
      section = sec;
    }
    os << e.key.name.substr(dot + 1) << " = " << value << '\n';
  }
  return os.str();
}

}  // namespace hfda
