#include <cmath>
#include <fstream>
#include <sstream>

#include "json_object.hpp"
#include "tpgm/theory.hpp"

namespace tpgm::theory {

namespace {

using detail::Obj;
using nlohmann::json;

std::vector<double> grid(const json& v, const std::string& where, bool allow_count) {
  std::vector<double> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]: expected a number");
      out.push_back(v[i].get<double>());
    }
  } else if (allow_count && v.is_object() && v.contains("count")) {
    Obj o(v, where);
    const std::int64_t k = o.integer("count", 2);
    o.finish();
    if (k < 2) throw ConfigError(where + ".count: must be >= 2");
    for (std::int64_t i = 0; i < k; ++i) out.push_back(static_cast<double>(i) / static_cast<double>(k - 1));
  } else {
    Obj o(v, where);
    const double start = o.number("start", 0.0);
    const double stop = o.number("stop", 0.0);
    const double step = o.number("step", 0.0);
    o.finish();
    if (!(step > 0.0) || stop < start) throw ConfigError(where + ": need step > 0 and stop >= start");
    const auto k = static_cast<std::int64_t>(std::floor((stop - start) / step + 1e-9));
    for (std::int64_t i = 0; i <= k; ++i) out.push_back(start + static_cast<double>(i) * step);
  }
  if (out.empty()) throw ConfigError(where + ": must be nonempty");
  return out;
}

std::vector<std::uint64_t> seed_list(const json& v) {
  std::vector<std::uint64_t> out;
  if (v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::int64_t s = Obj::as_integer(v[i], "seeds[" + std::to_string(i) + "]");
      if (s < 0) throw ConfigError("seeds[" + std::to_string(i) + "]: must be >= 0");
      out.push_back(static_cast<std::uint64_t>(s));
    }
    return out;
  }
  Obj o(v, "seeds");
  const std::int64_t start = o.integer("start", 0);
  const std::int64_t count = o.integer("count", 1);
  o.finish();
  if (start < 0 || count < 1) throw ConfigError("seeds: need start >= 0 and count >= 1");
  for (std::int64_t i = 0; i < count; ++i) out.push_back(static_cast<std::uint64_t>(start + i));
  return out;
}

}  // namespace

TheoryConfig parse_theory_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  Obj root(doc, "");
  TheoryConfig cfg;
  ScanConfig& s = cfg.scan;
  s.d = root.count("d", s.d);
  s.n = root.count("n", s.n);
  s.samples = root.count("samples", s.samples);
  s.s_par = root.number("s_par", s.s_par);
  s.s_perp = root.number("s_perp", s.s_perp);
  if (!root.has("epsilons")) throw ConfigError("epsilons: required");
  s.epsilons = grid(root.raw("epsilons"), "epsilons", false);
  s.alphas = root.has("alphas") ? grid(root.raw("alphas"), "alphas", true) : grid(json{{"count", 21}}, "alphas", true);
  s.seeds = root.has("seeds") ? seed_list(root.raw("seeds")) : std::vector<std::uint64_t>{0};
  if (root.has("bound_checks")) {
    const json& b = root.raw("bound_checks");
    if (!(b.is_boolean() && !b.get<bool>())) {
      BoundCheckConfig bc;
      if (!b.is_boolean()) {
        Obj o(b, "bound_checks");
        bc.problems = o.count("problems", bc.problems);
        bc.samples_per_problem = o.count("samples", bc.samples_per_problem);
        bc.max_d = o.count("max_d", bc.max_d);
        bc.max_epsilon = o.number("max_epsilon", bc.max_epsilon);
        bc.seed = static_cast<std::uint64_t>(o.count("seed", 0));
        if (o.has("alphas")) bc.alphas = grid(o.raw("alphas"), "bound_checks.alphas", true);
        o.finish();
      }
      if (bc.max_d < 2) throw ConfigError("bound_checks.max_d: must be >= 2");
      cfg.bounds = bc;
    }
  }
  root.finish();
  s.validate();
  return cfg;
}

TheoryConfig load_theory_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_theory_config(text.str());
}

}  // namespace tpgm::theory
