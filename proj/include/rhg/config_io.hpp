#pragma once

// Experiment files: JSON configuration with line-precise diagnostics, and
// long-format CSV traces with a metadata header.

#include "rhg/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rhg {

/// Invalid configuration; `what()` names file, line and field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SweepKind { coupling, forecast_asymmetry };

struct SweepSpec {
  SweepKind kind = SweepKind::coupling;
  std::size_t agent = 1;
  std::size_t row = 1;
  std::size_t col = 0;
  std::vector<double> factors{0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0};
};

struct ConfigFile {
  Scenario scenario;
  std::optional<SweepSpec> sweep;
  double turnpike_eps = 1.0;
  std::string output_dir = "out";
  std::optional<std::int64_t> seed;  ///< accepted for bookkeeping; nothing consumes it
};

// ---------------------------------------------------------------------------
// JSON value -> line map

namespace detail {

/// Records the 1-based line at which every JSON value starts, keyed by its
/// JSON pointer. Assumes the text already parsed as valid JSON.
class JsonLineMap {
 public:
  explicit JsonLineMap(const std::string& text) : text_(text) {
    skip_ws();
    if (pos_ < text_.size()) value("");
  }

  int line_of(const std::string& pointer) const {
    // Fall back to the closest recorded ancestor.
    std::string p = pointer;
    while (true) {
      auto it = lines_.find(p);
      if (it != lines_.end()) return it->second;
      if (p.empty()) return 1;
      p = p.substr(0, p.rfind('/'));
    }
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '\n') ++line_;
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string string_token() {
    std::string out;
    ++pos_;  // opening quote
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') ++pos_;
      if (pos_ < text_.size()) out += text_[pos_++];
    }
    ++pos_;
    return out;
  }

  void value(const std::string& pointer) {
    skip_ws();
    lines_.emplace(pointer, line_);
    if (pos_ >= text_.size()) return;
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      skip_ws();
      while (pos_ < text_.size() && text_[pos_] != '}') {
        const std::string key = string_token();
        skip_ws();
        ++pos_;  // ':'
        value(pointer + "/" + key);
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') ++pos_;
        skip_ws();
      }
      ++pos_;
    } else if (c == '[') {
      ++pos_;
      skip_ws();
      std::size_t index = 0;
      while (pos_ < text_.size() && text_[pos_] != ']') {
        value(pointer + "/" + std::to_string(index++));
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') ++pos_;
        skip_ws();
      }
      ++pos_;
    } else if (c == '"') {
      string_token();
    } else {
      while (pos_ < text_.size() && std::string_view(",]} \t\r\n").find(text_[pos_]) == std::string_view::npos) ++pos_;
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

/// Typed accessors that report the offending field with its line.
class ConfigReader {
 public:
  ConfigReader(std::string source, const std::string& text, const nlohmann::json& root)
      : source_(std::move(source)), lines_(text), root_(root) {}

  [[noreturn]] void fail(const std::string& pointer, const std::string& message) const {
    throw ConfigError(source_ + ":" + std::to_string(lines_.line_of(pointer)) + ": " +
                      (pointer.empty() ? std::string("<root>") : pointer) + ": " + message);
  }

  void require(bool ok, const std::string& pointer, const std::string& message) const {
    if (!ok) fail(pointer, message);
  }

  const nlohmann::json& at(const std::string& pointer) const {
    const nlohmann::json::json_pointer ptr(pointer);
    if (!root_.contains(ptr)) fail(pointer, "missing required field");
    return root_.at(ptr);
  }

  bool has(const std::string& pointer) const { return root_.contains(nlohmann::json::json_pointer(pointer)); }

  double number(const std::string& pointer) const {
    const auto& j = at(pointer);
    if (!j.is_number()) fail(pointer, "expected a number");
    return j.get<double>();
  }

  std::size_t index(const std::string& pointer) const {
    const auto& j = at(pointer);
    if (!j.is_number_integer() || j.get<std::int64_t>() < 0) fail(pointer, "expected a nonnegative integer");
    return j.get<std::size_t>();
  }

  bool boolean(const std::string& pointer) const {
    const auto& j = at(pointer);
    if (!j.is_boolean()) fail(pointer, "expected true or false");
    return j.get<bool>();
  }

  std::string string(const std::string& pointer) const {
    const auto& j = at(pointer);
    if (!j.is_string()) fail(pointer, "expected a string");
    return j.get<std::string>();
  }

  const nlohmann::json& array(const std::string& pointer) const {
    const auto& j = at(pointer);
    if (!j.is_array()) fail(pointer, "expected an array");
    return j;
  }

  void only_keys(const std::string& pointer, std::initializer_list<const char*> allowed) const {
    const auto& j = at(pointer);
    if (!j.is_object()) fail(pointer, "expected an object");
    for (const auto& item : j.items()) {
      bool known = false;
      for (const char* k : allowed) known = known || item.key() == k;
      if (!known) fail(pointer + "/" + item.key(), "unknown field");
    }
  }

 private:
  std::string source_;
  JsonLineMap lines_;
  const nlohmann::json& root_;
};

inline std::pair<std::size_t, std::size_t> parse_beta_target(const ConfigReader& r, const std::string& pointer) {
  const std::string t = r.string(pointer);
  if (t.size() != 7 || t.rfind("beta_", 0) != 0 || t[5] < '1' || t[5] > '9' || t[6] < '1' || t[6] > '9') {
    r.fail(pointer, "expected a target of the form beta_ij with 1-based digits i, j (e.g. beta_21)");
  }
  return {static_cast<std::size_t>(t[5] - '1'), static_cast<std::size_t>(t[6] - '1')};
}

}  // namespace detail

/// Parses and validates a configuration held in memory. `source` names it
/// in diagnostics.
inline ConfigFile parse_config(const std::string& text, const std::string& source = "<config>") {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto ? upto - 1 : 0), '\n');
    throw ConfigError(source + ":" + std::to_string(line) + ": parse error: " + e.what());
  }
  const detail::ConfigReader r(source, text, root);
  r.only_keys("", {"name", "market", "suppliers", "manufacturers", "horizon", "days", "base_demand", "initial_state",
                   "scenario", "sweep", "turnpike", "solver", "output", "seed"});

  ConfigFile cfg;
  Scenario& s = cfg.scenario;
  s.name = r.has("/name") ? r.string("/name") : "scenario";
  s.forecast.clear();

  // Chain.
  r.only_keys("/market", {"beta"});
  const auto& beta = r.array("/market/beta");
  const std::size_t n_m = beta.size();
  r.require(n_m >= 1, "/market/beta", "need at least one manufacturer row");
  s.params.market.beta.resize(static_cast<Eigen::Index>(n_m), static_cast<Eigen::Index>(n_m));
  for (std::size_t v = 0; v < n_m; ++v) {
    const std::string row = "/market/beta/" + std::to_string(v);
    r.require(r.array(row).size() == n_m, row,
              "row has " + std::to_string(r.array(row).size()) + " entries, expected n_m = " + std::to_string(n_m));
    for (std::size_t j = 0; j < n_m; ++j) {
      const std::string p = row + "/" + std::to_string(j);
      const double b = r.number(p);
      r.require(b >= 0.0, p, "demand coefficients must be >= 0");
      if (j == v) r.require(b > 0.0, p, "own-price coefficient must be > 0");
      s.params.market.beta(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(j)) = b;
    }
  }

  const auto& suppliers = r.array("/suppliers");
  r.require(!suppliers.empty(), "/suppliers", "need at least one supplier");
  for (std::size_t i = 0; i < suppliers.size(); ++i) {
    const std::string p = "/suppliers/" + std::to_string(i);
    r.only_keys(p, {"rho0", "rho1", "o_max"});
    SupplierParams sp{r.number(p + "/rho0"), r.number(p + "/rho1"), r.number(p + "/o_max")};
    r.require(sp.rho0 >= 0.0, p + "/rho0", "base price must be >= 0");
    r.require(sp.rho1 >= 0.0, p + "/rho1", "price slope < 0 violates the convexity requirement (rho1 >= 0)");
    r.require(sp.o_max > 0.0, p + "/o_max", "capacity must be > 0");
    s.params.suppliers.push_back(sp);
  }

  const auto& mans = r.array("/manufacturers");
  r.require(mans.size() == n_m, "/manufacturers",
            "has " + std::to_string(mans.size()) + " entries, expected n_m = " + std::to_string(n_m));
  for (std::size_t v = 0; v < n_m; ++v) {
    const std::string p = "/manufacturers/" + std::to_string(v);
    r.only_keys(p, {"alpha", "gamma", "xi_safety", "xi_max"});
    ManufacturerParams m{r.number(p + "/alpha"), r.number(p + "/gamma"), r.number(p + "/xi_safety"), r.number(p + "/xi_max")};
    r.require(m.alpha > 0.0 && m.alpha <= 1.0, p + "/alpha", "must be in (0, 1]");
    r.require(m.gamma > 0.0, p + "/gamma", "safety-stock weight gamma must be > 0");
    r.require(m.xi_max > 0.0, p + "/xi_max", "must be > 0");
    r.require(m.xi_safety >= 0.0 && m.xi_safety <= m.xi_max, p + "/xi_safety", "must be in [0, xi_max]");
    s.params.manufacturers.push_back(m);
  }

  s.params.horizon = r.index("/horizon");
  r.require(s.params.horizon >= 1, "/horizon", "must be >= 1");
  s.days = r.index("/days");
  r.require(s.days >= 1, "/days", "must be >= 1");

  const auto& w = r.array("/base_demand");
  r.require(w.size() == n_m, "/base_demand", "expected n_m = " + std::to_string(n_m) + " entries");
  s.base_demand.resize(static_cast<Eigen::Index>(n_m));
  for (std::size_t v = 0; v < n_m; ++v) s.base_demand(static_cast<Eigen::Index>(v)) = r.number("/base_demand/" + std::to_string(v));

  const auto& x0 = r.array("/initial_state");
  r.require(x0.size() == n_m, "/initial_state", "expected n_m = " + std::to_string(n_m) + " states");
  s.x0.clear();
  for (std::size_t v = 0; v < n_m; ++v) {
    const std::string p = "/initial_state/" + std::to_string(v);
    r.require(r.array(p).size() == 3, p, "state is (inventory, previous production, previous demand)");
    AgentState st{r.number(p + "/0"), r.number(p + "/1"), r.number(p + "/2")};
    r.require(st.xi >= 0.0 && st.xi <= s.params.manufacturers[v].xi_max, p + "/0", "initial inventory must be in [0, xi_max]");
    s.x0.push_back(st);
  }

  // Scenario.
  if (r.has("/scenario")) {
    r.only_keys("/scenario", {"demand_events", "supply_events", "forecast", "belief_perturbations", "observe_supply_cap"});
    if (r.has("/scenario/demand_events")) {
      const auto& evs = r.array("/scenario/demand_events");
      for (std::size_t i = 0; i < evs.size(); ++i) {
        const std::string p = "/scenario/demand_events/" + std::to_string(i);
        r.only_keys(p, {"agents", "factor", "first_day", "last_day"});
        DemandEvent e;
        const auto& agents = r.array(p + "/agents");
        for (std::size_t a = 0; a < agents.size(); ++a) {
          const std::string pa = p + "/agents/" + std::to_string(a);
          e.agents.push_back(r.index(pa));
          r.require(e.agents.back() < n_m, pa, "agent index out of range");
        }
        e.factor = r.number(p + "/factor");
        r.require(e.factor > 0.0, p + "/factor", "must be > 0");
        e.first_day = r.index(p + "/first_day");
        e.last_day = r.index(p + "/last_day");
        r.require(e.first_day <= e.last_day && e.last_day < s.days, p, "interval must lie within [0, days)");
        s.demand_events.push_back(std::move(e));
      }
    }
    if (r.has("/scenario/supply_events")) {
      const auto& evs = r.array("/scenario/supply_events");
      for (std::size_t i = 0; i < evs.size(); ++i) {
        const std::string p = "/scenario/supply_events/" + std::to_string(i);
        r.only_keys(p, {"supplier", "factor", "first_day", "last_day"});
        SupplyEvent e{r.index(p + "/supplier"), r.number(p + "/factor"), r.index(p + "/first_day"), r.index(p + "/last_day")};
        r.require(e.supplier < s.params.n_s(), p + "/supplier", "supplier index out of range");
        r.require(e.factor > 0.0 && e.factor <= 1.0, p + "/factor", "capacity factor must be in (0, 1]");
        r.require(e.first_day <= e.last_day && e.last_day < s.days, p, "interval must lie within [0, days)");
        s.supply_events.push_back(e);
      }
    }
    if (r.has("/scenario/forecast")) {
      const auto& fc = r.array("/scenario/forecast");
      r.require(fc.size() == n_m, "/scenario/forecast", "expected one forecast mode per manufacturer");
      for (std::size_t v = 0; v < n_m; ++v) {
        const std::string p = "/scenario/forecast/" + std::to_string(v);
        const std::string mode = r.string(p);
        r.require(mode == "perfect" || mode == "persistence", p, "forecast mode must be 'perfect' or 'persistence'");
        s.forecast.push_back(mode == "perfect" ? ForecastMode::perfect : ForecastMode::persistence);
      }
    }
    if (r.has("/scenario/belief_perturbations")) {
      const auto& ps = r.array("/scenario/belief_perturbations");
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const std::string p = "/scenario/belief_perturbations/" + std::to_string(i);
        r.only_keys(p, {"agent", "target", "factor"});
        BeliefPerturbation bp;
        bp.agent = r.index(p + "/agent");
        r.require(bp.agent < n_m, p + "/agent", "agent index out of range");
        std::tie(bp.row, bp.col) = detail::parse_beta_target(r, p + "/target");
        r.require(bp.row < n_m && bp.col < n_m, p + "/target", "target outside the n_m x n_m coefficient matrix");
        bp.factor = r.number(p + "/factor");
        r.require(bp.factor > 0.0, p + "/factor", "must be > 0");
        s.perturbations.push_back(bp);
      }
    }
    if (r.has("/scenario/observe_supply_cap")) s.observe_supply_cap = r.boolean("/scenario/observe_supply_cap");
  }

  if (r.has("/sweep")) {
    r.only_keys("/sweep", {"kind", "agent", "target", "factors"});
    SweepSpec sw;
    const std::string kind = r.string("/sweep/kind");
    r.require(kind == "coupling" || kind == "forecast_asymmetry", "/sweep/kind", "must be 'coupling' or 'forecast_asymmetry'");
    sw.kind = kind == "coupling" ? SweepKind::coupling : SweepKind::forecast_asymmetry;
    if (sw.kind == SweepKind::coupling) {
      if (r.has("/sweep/agent")) sw.agent = r.index("/sweep/agent");
      r.require(sw.agent < n_m, "/sweep/agent", "agent index out of range");
      std::tie(sw.row, sw.col) = detail::parse_beta_target(r, "/sweep/target");
      r.require(sw.row < n_m && sw.col < n_m, "/sweep/target", "target outside the n_m x n_m coefficient matrix");
      if (r.has("/sweep/factors")) {
        sw.factors.clear();
        const auto& fs = r.array("/sweep/factors");
        for (std::size_t i = 0; i < fs.size(); ++i) {
          const std::string p = "/sweep/factors/" + std::to_string(i);
          sw.factors.push_back(r.number(p));
          r.require(sw.factors.back() > 0.0, p, "factors must be > 0");
        }
      }
    }
    cfg.sweep = sw;
  }

  if (r.has("/turnpike")) {
    r.only_keys("/turnpike", {"eps"});
    cfg.turnpike_eps = r.number("/turnpike/eps");
    r.require(cfg.turnpike_eps > 0.0, "/turnpike/eps", "must be > 0");
  }

  if (r.has("/solver")) {
    r.only_keys("/solver", {"tol", "max_iter", "smoothing_init", "smoothing_decay", "regularization", "linesearch_factor",
                            "min_step", "armijo"});
    SolverSettings& st = s.settings;
    if (r.has("/solver/tol")) st.tol = r.number("/solver/tol");
    if (r.has("/solver/max_iter")) st.max_iter = static_cast<int>(r.index("/solver/max_iter"));
    if (r.has("/solver/smoothing_init")) st.smoothing_init = r.number("/solver/smoothing_init");
    if (r.has("/solver/smoothing_decay")) st.smoothing_decay = r.number("/solver/smoothing_decay");
    if (r.has("/solver/regularization")) st.regularization = r.number("/solver/regularization");
    if (r.has("/solver/linesearch_factor")) st.linesearch_factor = r.number("/solver/linesearch_factor");
    if (r.has("/solver/min_step")) st.min_step = r.number("/solver/min_step");
    if (r.has("/solver/armijo")) st.armijo = r.number("/solver/armijo");
    r.require(st.tol > 0.0, "/solver/tol", "must be > 0");
    r.require(st.max_iter >= 1, "/solver/max_iter", "must be >= 1");
    r.require(st.smoothing_init >= 0.0, "/solver/smoothing_init", "must be >= 0");
    r.require(st.smoothing_decay > 0.0 && st.smoothing_decay < 1.0, "/solver/smoothing_decay", "must be in (0, 1)");
    r.require(st.regularization >= 0.0, "/solver/regularization", "must be >= 0");
    r.require(st.linesearch_factor > 0.0 && st.linesearch_factor < 1.0, "/solver/linesearch_factor", "must be in (0, 1)");
  }

  if (r.has("/output")) {
    r.only_keys("/output", {"dir"});
    cfg.output_dir = r.string("/output/dir");
  }
  if (r.has("/seed")) {
    const auto& j = r.at("/seed");
    r.require(j.is_number_integer(), "/seed", "expected an integer");
    cfg.seed = j.get<std::int64_t>();
  }

  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return cfg;
}

inline ConfigFile load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

/// Data model of a configuration as JSON; `parse_config` of its dump yields
/// an equal configuration.
inline nlohmann::json config_to_json(const ConfigFile& cfg) {
  using nlohmann::json;
  const Scenario& s = cfg.scenario;
  json j;
  j["name"] = s.name;
  json beta = json::array();
  for (Eigen::Index v = 0; v < s.params.market.beta.rows(); ++v) {
    json row = json::array();
    for (Eigen::Index c = 0; c < s.params.market.beta.cols(); ++c) row.push_back(s.params.market.beta(v, c));
    beta.push_back(row);
  }
  j["market"] = {{"beta", beta}};
  j["suppliers"] = json::array();
  for (const auto& sp : s.params.suppliers) j["suppliers"].push_back({{"rho0", sp.rho0}, {"rho1", sp.rho1}, {"o_max", sp.o_max}});
  j["manufacturers"] = json::array();
  for (const auto& m : s.params.manufacturers) {
    j["manufacturers"].push_back({{"alpha", m.alpha}, {"gamma", m.gamma}, {"xi_safety", m.xi_safety}, {"xi_max", m.xi_max}});
  }
  j["horizon"] = s.params.horizon;
  j["days"] = s.days;
  j["base_demand"] = json::array();
  for (Eigen::Index v = 0; v < s.base_demand.size(); ++v) j["base_demand"].push_back(s.base_demand(v));
  j["initial_state"] = json::array();
  for (const auto& x : s.x0) j["initial_state"].push_back({x.xi, x.o_prev, x.d_prev});

  json sc;
  sc["demand_events"] = json::array();
  for (const auto& e : s.demand_events) {
    sc["demand_events"].push_back({{"agents", e.agents}, {"factor", e.factor}, {"first_day", e.first_day}, {"last_day", e.last_day}});
  }
  sc["supply_events"] = json::array();
  for (const auto& e : s.supply_events) {
    sc["supply_events"].push_back({{"supplier", e.supplier}, {"factor", e.factor}, {"first_day", e.first_day}, {"last_day", e.last_day}});
  }
  if (!s.forecast.empty()) {
    sc["forecast"] = json::array();
    for (auto f : s.forecast) sc["forecast"].push_back(to_string(f));
  }
  sc["belief_perturbations"] = json::array();
  for (const auto& p : s.perturbations) {
    sc["belief_perturbations"].push_back({{"agent", p.agent},
                                          {"target", "beta_" + std::to_string(p.row + 1) + std::to_string(p.col + 1)},
                                          {"factor", p.factor}});
  }
  sc["observe_supply_cap"] = s.observe_supply_cap;
  j["scenario"] = sc;

  if (cfg.sweep) {
    const SweepSpec& sw = *cfg.sweep;
    if (sw.kind == SweepKind::coupling) {
      j["sweep"] = {{"kind", "coupling"},
                    {"agent", sw.agent},
                    {"target", "beta_" + std::to_string(sw.row + 1) + std::to_string(sw.col + 1)},
                    {"factors", sw.factors}};
    } else {
      j["sweep"] = {{"kind", "forecast_asymmetry"}};
    }
  }
  j["turnpike"] = {{"eps", cfg.turnpike_eps}};
  const SolverSettings& st = s.settings;
  j["solver"] = {{"tol", st.tol},
                 {"max_iter", st.max_iter},
                 {"smoothing_init", st.smoothing_init},
                 {"smoothing_decay", st.smoothing_decay},
                 {"regularization", st.regularization},
                 {"linesearch_factor", st.linesearch_factor},
                 {"min_step", st.min_step},
                 {"armijo", st.armijo}};
  j["output"] = {{"dir", cfg.output_dir}};
  if (cfg.seed) j["seed"] = *cfg.seed;
  return j;
}

/// FNV-1a over the canonical (key-sorted) dump of the configuration.
inline std::string config_hash(const ConfigFile& cfg) {
  const std::string canon = config_to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

// ---------------------------------------------------------------------------
// CSV output

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string metadata_header(const ConfigFile& cfg) {
  const SolverSettings& st = cfg.scenario.settings;
  std::ostringstream os;
  os << "# scenario=" << cfg.scenario.name << "\n"
     << "# config_hash=" << config_hash(cfg) << "\n"
     << "# solver tol=" << format_double(st.tol) << " max_iter=" << st.max_iter
     << " smoothing_init=" << format_double(st.smoothing_init) << " smoothing_decay=" << format_double(st.smoothing_decay)
     << " regularization=" << format_double(st.regularization) << " linesearch_factor=" << format_double(st.linesearch_factor)
     << " min_step=" << format_double(st.min_step) << " armijo=" << format_double(st.armijo) << "\n";
  return os.str();
}

/// Per-agent field names of the long-format trace, in file order.
inline std::vector<std::string> trace_fields(std::size_t n_s) {
  std::vector<std::string> f{"xi", "o_prev", "d_prev"};
  for (std::size_t s = 0; s < n_s; ++s) f.push_back("order_" + std::to_string(s + 1));
  for (const char* name : {"price", "demand", "base_demand", "stage_cost", "net_cash_flow"}) f.emplace_back(name);
  return f;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace detail

inline std::string trace_csv(const ScenarioTrace& trace, const ConfigFile& cfg) {
  std::ostringstream os;
  os << metadata_header(cfg) << "day,agent,field,value\n";
  const auto fields = trace_fields(trace.dims.n_s);
  for (std::size_t t = 0; t < trace.days.size(); ++t) {
    const DayRecord& d = trace.days[t];
    for (std::size_t v = 0; v < d.states.size(); ++v) {
      const auto vi = static_cast<Eigen::Index>(v);
      std::vector<double> values{d.states[v].xi, d.states[v].o_prev, d.states[v].d_prev};
      for (Eigen::Index s = 0; s < d.actions[v].orders.size(); ++s) values.push_back(d.actions[v].orders(s));
      values.insert(values.end(), {d.actions[v].price, d.demand(vi), d.base_demand(vi), d.stage_cost(vi), d.net_cash_flow(vi)});
      for (std::size_t f = 0; f < fields.size(); ++f) {
        os << t << ',' << (v + 1) << ',' << fields[f] << ',' << format_double(values[f]) << '\n';
      }
    }
  }
  return os.str();
}

inline std::string suppliers_csv(const ScenarioTrace& trace, const ConfigFile& cfg) {
  std::ostringstream os;
  os << metadata_header(cfg) << "day,supplier,total_orders,wholesale_price,capacity,rationed\n";
  for (std::size_t t = 0; t < trace.days.size(); ++t) {
    const DayRecord& d = trace.days[t];
    for (Eigen::Index s = 0; s < d.total_orders.size(); ++s) {
      os << t << ',' << (s + 1) << ',' << format_double(d.total_orders(s)) << ',' << format_double(d.wholesale_price(s)) << ','
         << format_double(d.supply_cap(s)) << ',' << (d.rationed[static_cast<std::size_t>(s)] ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

inline std::string plans_csv(const ScenarioTrace& trace, const ConfigFile& cfg) {
  std::ostringstream os;
  os << metadata_header(cfg) << "day,agent,stage,xi,o_prev,d_prev";
  for (std::size_t s = 0; s < trace.dims.n_s; ++s) os << ",order_" << (s + 1);
  os << ",price\n";
  for (std::size_t t = 0; t < trace.days.size(); ++t) {
    const DayRecord& d = trace.days[t];
    for (std::size_t v = 0; v < d.planned_states.size(); ++v) {
      const MatrixXd& X = d.planned_states[v];
      const MatrixXd& U = d.planned_inputs[v];
      for (Eigen::Index k = 0; k < X.rows(); ++k) {
        os << t << ',' << (v + 1) << ',' << k;
        for (Eigen::Index c = 0; c < 3; ++c) os << ',' << format_double(X(k, c));
        for (Eigen::Index c = 0; c < U.cols(); ++c) os << ',' << (k < U.rows() ? format_double(U(k, c)) : std::string());
        os << '\n';
      }
    }
  }
  return os.str();
}

inline std::string diagnostics_csv(const ScenarioTrace& trace, const ConfigFile& cfg) {
  std::ostringstream os;
  os << metadata_header(cfg)
     << "day,agent,status,iterations,residual,stationarity,feasibility,complementarity,fallback,rationed,licq_ok,second_order_ok\n";
  for (std::size_t t = 0; t < trace.days.size(); ++t) {
    const DayRecord& d = trace.days[t];
    const bool rationed = std::any_of(d.rationed.begin(), d.rationed.end(), [](bool b) { return b; });
    for (std::size_t v = 0; v < d.diagnostics.size(); ++v) {
      const SolveDiagnostics& g = d.diagnostics[v];
      os << t << ',' << (v + 1) << ',' << to_string(g.status) << ',' << g.iterations << ',' << format_double(g.residual) << ','
         << format_double(g.kkt.stationarity) << ',' << format_double(g.kkt.feasibility) << ','
         << format_double(g.kkt.complementarity) << ',' << (g.fallback ? 1 : 0) << ',' << (rationed ? 1 : 0) << ','
         << (g.regularity_checked ? (g.licq_ok ? "1" : "0") : "") << ','
         << (g.regularity_checked ? (g.second_order_ok ? "1" : "0") : "") << '\n';
    }
  }
  return os.str();
}

inline std::string metrics_csv(const MetricsSummary& m, const ConfigFile& cfg) {
  std::ostringstream os;
  os << metadata_header(cfg) << "# baseline=" << (m.baseline.empty() ? "none" : m.baseline) << "\n";
  os << "agent,cumulative_net_cash_flow,mean_price,max_price,min_inventory,max_inventory";
  const std::size_t n_s = m.agents.empty() ? 0 : static_cast<std::size_t>(m.agents.front().total_orders.size());
  for (std::size_t s = 0; s < n_s; ++s) os << ",total_orders_" << (s + 1);
  os << ",rationed_days,fallback_days,negative_demand_days,relative_change_pct\n";
  for (std::size_t v = 0; v < m.agents.size(); ++v) {
    const AgentMetrics& a = m.agents[v];
    os << (v + 1) << ',' << format_double(a.cumulative_net_cash_flow) << ',' << format_double(a.mean_price) << ','
       << format_double(a.max_price) << ',' << format_double(a.min_inventory) << ',' << format_double(a.max_inventory);
    for (Eigen::Index s = 0; s < a.total_orders.size(); ++s) os << ',' << format_double(a.total_orders(s));
    os << ',' << a.rationed_days << ',' << a.fallback_days << ',' << a.negative_demand_days << ','
       << format_double(a.relative_change) << '\n';
  }
  return os.str();
}

/// Wide per-day table with the quantities plotted for a closed-loop run:
/// base demand, prices, demand, inventory, orders, net cash flow, and the
/// suppliers' aggregate orders and wholesale prices.
inline std::string plot_csv(const ScenarioTrace& trace) {
  std::ostringstream os;
  const std::size_t n_m = trace.dims.n_m;
  const std::size_t n_s = trace.dims.n_s;
  os << "day";
  for (const char* q : {"w", "price", "demand", "xi", "net_cash_flow"}) {
    for (std::size_t v = 0; v < n_m; ++v) os << ',' << q << '_' << (v + 1);
  }
  for (std::size_t v = 0; v < n_m; ++v) {
    for (std::size_t s = 0; s < n_s; ++s) os << ",order_" << (v + 1) << '_' << (s + 1);
  }
  for (std::size_t s = 0; s < n_s; ++s) os << ",total_orders_" << (s + 1) << ",wholesale_price_" << (s + 1) << ",capacity_" << (s + 1);
  os << '\n';
  for (std::size_t t = 0; t < trace.days.size(); ++t) {
    const DayRecord& d = trace.days[t];
    os << t;
    for (std::size_t v = 0; v < n_m; ++v) os << ',' << format_double(d.base_demand(static_cast<Eigen::Index>(v)));
    for (std::size_t v = 0; v < n_m; ++v) os << ',' << format_double(d.actions[v].price);
    for (std::size_t v = 0; v < n_m; ++v) os << ',' << format_double(d.demand(static_cast<Eigen::Index>(v)));
    for (std::size_t v = 0; v < n_m; ++v) os << ',' << format_double(d.states[v].xi);
    for (std::size_t v = 0; v < n_m; ++v) os << ',' << format_double(d.net_cash_flow(static_cast<Eigen::Index>(v)));
    for (std::size_t v = 0; v < n_m; ++v) {
      for (std::size_t s = 0; s < n_s; ++s) os << ',' << format_double(d.actions[v].orders(static_cast<Eigen::Index>(s)));
    }
    for (std::size_t s = 0; s < n_s; ++s) {
      const auto si = static_cast<Eigen::Index>(s);
      os << ',' << format_double(d.total_orders(si)) << ',' << format_double(d.wholesale_price(si)) << ','
         << format_double(d.supply_cap(si));
    }
    os << '\n';
  }
  return os.str();
}

/// Writes trace.csv, suppliers.csv, diagnostics.csv, metrics.csv and, when
/// the trace holds them, plans.csv into `dir`.
inline void write_trace(const ScenarioTrace& trace, const MetricsSummary& metrics, const ConfigFile& cfg,
                        const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  detail::write_file(dir / "trace.csv", trace_csv(trace, cfg));
  detail::write_file(dir / "suppliers.csv", suppliers_csv(trace, cfg));
  detail::write_file(dir / "diagnostics.csv", diagnostics_csv(trace, cfg));
  detail::write_file(dir / "metrics.csv", metrics_csv(metrics, cfg));
  if (trace.has_plans()) detail::write_file(dir / "plans.csv", plans_csv(trace, cfg));
}

/// Long-format trace rows read back from trace.csv.
struct TraceRow {
  std::size_t day = 0;
  std::size_t agent = 0;
  std::string field;
  double value = 0.0;
};

inline std::vector<TraceRow> read_trace_csv(const std::string& content) {
  std::vector<TraceRow> rows;
  std::istringstream in(content);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line != "day,agent,field,value") throw IoError("unexpected trace header: " + line);
      header_seen = true;
      continue;
    }
    std::istringstream ls(line);
    std::string day, agent, field, value;
    if (!std::getline(ls, day, ',') || !std::getline(ls, agent, ',') || !std::getline(ls, field, ',') || !std::getline(ls, value)) {
      throw IoError("malformed trace row: " + line);
    }
    TraceRow r;
    r.day = std::stoul(day);
    r.agent = std::stoul(agent);
    r.field = field;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), r.value);
    if (res.ec != std::errc()) throw IoError("malformed value in trace row: " + line);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace rhg
