#include "cmt/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/algorithm/string/split.hpp>
#include <boost/algorithm/string/trim.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace cmt {

ScheduleMode parse_schedule_mode(const std::string& name) {
  if (name == "combined") return ScheduleMode::combined;
  if (name == "tr_only") return ScheduleMode::tr_only;
  if (name == "ent_only") return ScheduleMode::ent_only;
  if (name == "fixed_linear") return ScheduleMode::fixed_linear;
  throw ContractViolation("unknown schedule_mode '" + name + "'");
}

std::string to_string(ScheduleMode mode) {
  switch (mode) {
    case ScheduleMode::combined:
      return "combined";
    case ScheduleMode::tr_only:
      return "tr_only";
    case ScheduleMode::ent_only:
      return "ent_only";
    case ScheduleMode::fixed_linear:
      return "fixed_linear";
  }
  return "unknown";
}

void RunConfig::validate() const {
  target.validate();
  family.fit.validate();
  dual.validate();
  if (family.k_comp == 0) throw ContractViolation("family.k_comp must be >= 1");
  if (!(family.init_entropy_scale > 0.0)) throw ContractViolation("family.init_entropy_scale must be > 0");
  if (!(family.init_jitter >= 0.0)) throw ContractViolation("family.init_jitter must be >= 0");
  if (family.init_mean.size() > 1 && family.init_mean.size() != target.dim) {
    throw ContractViolation("family.init_mean must have 1 or target.dim entries");
  }
  if (loop.buffer_size < 10 * family.k_comp * target.dim) {
    throw ContractViolation("loop.buffer_size must be >= 10 * family.k_comp * target.dim");
  }
  if (loop.max_steps < 1) throw ContractViolation("loop.max_steps must be >= 1");
  if (!(loop.terminal_multiplier_tol >= 0.0)) throw ContractViolation("loop.terminal_multiplier_tol must be >= 0");
  if (!loop.refresh_buffer_every_step) {
    throw ContractViolation("loop.refresh_buffer_every_step = false is not supported: buffers must come from the current model");
  }
  if (output.run_dir.empty()) throw ContractViolation("output.run_dir must not be empty");
}

namespace {

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  try {
    return boost::lexical_cast<T>(text);
  } catch (const boost::bad_lexical_cast&) {
    throw ContractViolation("config: cannot parse '" + text + "' for " + key);
  }
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ContractViolation("config: '" + text + "' is not a boolean for " + key);
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::string> parts;
  boost::split(parts, text, [](char c) { return c == ',' || c == ' '; });
  std::vector<double> out;
  for (auto& p : parts) {
    boost::trim(p);
    if (!p.empty()) out.push_back(parse_value<double>(key, p));
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

template <class T, class Field>
Setter number(Field field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_value<T>(k, v); };
}

template <class Field>
Setter flag(Field field) {
  return [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_bool(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"target.kind", [](RunConfig& c, const std::string&, const std::string& v) { c.target.kind = parse_target_kind(v); }},
      {"target.dim", number<std::size_t>([](RunConfig& c) -> auto& { return c.target.dim; })},
      {"target.mu", number<double>([](RunConfig& c) -> auto& { return c.target.mu; })},
      {"target.sigma", number<double>([](RunConfig& c) -> auto& { return c.target.sigma; })},
      {"target.offset", number<double>([](RunConfig& c) -> auto& { return c.target.offset; })},
      {"target.grid_size", number<std::size_t>([](RunConfig& c) -> auto& { return c.target.grid_size; })},
      {"target.spacing", number<double>([](RunConfig& c) -> auto& { return c.target.spacing; })},
      {"target.a", number<double>([](RunConfig& c) -> auto& { return c.target.a; })},
      {"target.b", number<double>([](RunConfig& c) -> auto& { return c.target.b; })},
      {"target.confinement", number<double>([](RunConfig& c) -> auto& { return c.target.confinement; })},
      {"target.funnel_scale", number<double>([](RunConfig& c) -> auto& { return c.target.funnel_scale; })},
      {"family.k_comp", number<std::size_t>([](RunConfig& c) -> auto& { return c.family.k_comp; })},
      {"family.var_floor", number<double>([](RunConfig& c) -> auto& { return c.family.fit.var_floor; })},
      {"family.weight_floor", number<double>([](RunConfig& c) -> auto& { return c.family.fit.weight_floor; })},
      {"family.em_tol", number<double>([](RunConfig& c) -> auto& { return c.family.fit.em_tol; })},
      {"family.em_max_iters", number<int>([](RunConfig& c) -> auto& { return c.family.fit.em_max_iters; })},
      {"family.component_floor", number<double>([](RunConfig& c) -> auto& { return c.family.fit.component_floor; })},
      {"family.reset_scale", number<double>([](RunConfig& c) -> auto& { return c.family.fit.reset_scale; })},
      {"family.init_entropy_scale", number<double>([](RunConfig& c) -> auto& { return c.family.init_entropy_scale; })},
      {"family.init_jitter", number<double>([](RunConfig& c) -> auto& { return c.family.init_jitter; })},
      {"family.init_mean",
       [](RunConfig& c, const std::string& k, const std::string& v) { c.family.init_mean = parse_list(k, v); }},
      {"dual.eps_tr", number<double>([](RunConfig& c) -> auto& { return c.dual.eps_tr; })},
      {"dual.eps_ent", number<double>([](RunConfig& c) -> auto& { return c.dual.eps_ent; })},
      {"dual.tr_enabled", flag([](RunConfig& c) -> auto& { return c.dual.tr_enabled; })},
      {"dual.ent_enabled", flag([](RunConfig& c) -> auto& { return c.dual.ent_enabled; })},
      {"dual.multiplier_max", number<double>([](RunConfig& c) -> auto& { return c.dual.multiplier_max; })},
      {"dual.init_guess", number<double>([](RunConfig& c) -> auto& { return c.dual.init_guess; })},
      {"dual.tol", number<double>([](RunConfig& c) -> auto& { return c.dual.tol; })},
      {"dual.max_rounds", number<int>([](RunConfig& c) -> auto& { return c.dual.max_rounds; })},
      {"loop.buffer_size", number<std::size_t>([](RunConfig& c) -> auto& { return c.loop.buffer_size; })},
      {"loop.max_steps", number<std::size_t>([](RunConfig& c) -> auto& { return c.loop.max_steps; })},
      {"loop.terminal_multiplier_tol",
       number<double>([](RunConfig& c) -> auto& { return c.loop.terminal_multiplier_tol; })},
      {"loop.refresh_buffer_every_step", flag([](RunConfig& c) -> auto& { return c.loop.refresh_buffer_every_step; })},
      {"loop.seed", number<std::uint64_t>([](RunConfig& c) -> auto& { return c.loop.seed; })},
      {"schedule_mode",
       [](RunConfig& c, const std::string&, const std::string& v) { c.schedule_mode = parse_schedule_mode(v); }},
      {"output.run_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output.run_dir = v; }},
      {"output.emit_model_snapshots", flag([](RunConfig& c) -> auto& { return c.output.emit_model_snapshots; })},
      {"output.wall_clock", flag([](RunConfig& c) -> auto& { return c.output.wall_clock; })},
      {"eval.model_samples", number<std::size_t>([](RunConfig& c) -> auto& { return c.eval.model_samples; })},
      {"eval.reference_samples", number<std::size_t>([](RunConfig& c) -> auto& { return c.eval.reference_samples; })},
  };
  return table;
}

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ContractViolation("config: unknown key '" + key + "'");
  it->second(cfg, key, boost::trim_copy(value));
}

RunConfig parse_config(std::istream& in) {
  // The INI reader only knows ';' comments; '#' lines are dropped here.
  std::ostringstream cleaned;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] == '#') continue;
    cleaned << line << '\n';
  }
  std::istringstream src(cleaned.str());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(src, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ContractViolation(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      set_config_value(cfg, name, node.data());
    } else {
      for (const auto& [sub, leaf] : node) set_config_value(cfg, name + "." + sub, leaf.data());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractViolation("config: cannot open '" + path + "'");
  return parse_config(in);
}

std::string render_config(const RunConfig& c) {
  std::ostringstream os;
  const auto b = [](bool v) { return v ? "true" : "false"; };
  os << "target.kind = " << to_string(c.target.kind) << '\n'
     << "target.dim = " << c.target.dim << '\n'
     << "target.mu = " << fmt_double(c.target.mu) << '\n'
     << "target.sigma = " << fmt_double(c.target.sigma) << '\n'
     << "target.offset = " << fmt_double(c.target.offset) << '\n'
     << "target.grid_size = " << c.target.grid_size << '\n'
     << "target.spacing = " << fmt_double(c.target.spacing) << '\n'
     << "target.a = " << fmt_double(c.target.a) << '\n'
     << "target.b = " << fmt_double(c.target.b) << '\n'
     << "target.confinement = " << fmt_double(c.target.confinement) << '\n'
     << "target.funnel_scale = " << fmt_double(c.target.funnel_scale) << '\n'
     << "family.k_comp = " << c.family.k_comp << '\n'
     << "family.var_floor = " << fmt_double(c.family.fit.var_floor) << '\n'
     << "family.weight_floor = " << fmt_double(c.family.fit.weight_floor) << '\n'
     << "family.em_tol = " << fmt_double(c.family.fit.em_tol) << '\n'
     << "family.em_max_iters = " << c.family.fit.em_max_iters << '\n'
     << "family.component_floor = " << fmt_double(c.family.fit.component_floor) << '\n'
     << "family.reset_scale = " << fmt_double(c.family.fit.reset_scale) << '\n'
     << "family.init_entropy_scale = " << fmt_double(c.family.init_entropy_scale) << '\n'
     << "family.init_jitter = " << fmt_double(c.family.init_jitter) << '\n';
  if (!c.family.init_mean.empty()) {
    os << "family.init_mean = ";
    for (std::size_t i = 0; i < c.family.init_mean.size(); ++i) {
      os << (i ? ", " : "") << fmt_double(c.family.init_mean[i]);
    }
    os << '\n';
  }
  os << "dual.eps_tr = " << fmt_double(c.dual.eps_tr) << '\n'
     << "dual.eps_ent = " << fmt_double(c.dual.eps_ent) << '\n'
     << "dual.tr_enabled = " << b(c.dual.tr_enabled) << '\n'
     << "dual.ent_enabled = " << b(c.dual.ent_enabled) << '\n'
     << "dual.multiplier_max = " << fmt_double(c.dual.multiplier_max) << '\n'
     << "dual.init_guess = " << fmt_double(c.dual.init_guess) << '\n'
     << "dual.tol = " << fmt_double(c.dual.tol) << '\n'
     << "dual.max_rounds = " << c.dual.max_rounds << '\n'
     << "loop.buffer_size = " << c.loop.buffer_size << '\n'
     << "loop.max_steps = " << c.loop.max_steps << '\n'
     << "loop.terminal_multiplier_tol = " << fmt_double(c.loop.terminal_multiplier_tol) << '\n'
     << "loop.refresh_buffer_every_step = " << b(c.loop.refresh_buffer_every_step) << '\n'
     << "loop.seed = " << c.loop.seed << '\n'
     << "schedule_mode = " << to_string(c.schedule_mode) << '\n'
     << "output.run_dir = " << c.output.run_dir << '\n'
     << "output.emit_model_snapshots = " << b(c.output.emit_model_snapshots) << '\n'
     << "output.wall_clock = " << b(c.output.wall_clock) << '\n'
     << "eval.model_samples = " << c.eval.model_samples << '\n'
     << "eval.reference_samples = " << c.eval.reference_samples << '\n';
  return os.str();
}

}  // namespace cmt
