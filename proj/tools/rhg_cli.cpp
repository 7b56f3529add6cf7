// rhg: run supply-chain receding-horizon game experiments from a config.
//
//   rhg simulate <config> [--out DIR] [--seedless] [--plot-data]
//   rhg sweep    <config> ...
//   rhg turnpike <config> ...
//   rhg check    <config> ...
//
// Exit codes: 0 ok, 2 config error, 3 solver failure (check), 4 I/O error.

#include "rhg/rhg.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config;
  std::string out;
  bool seedless = false;
  bool plot_data = false;
};

rhg::ConfigFile load(const Options& opt) {
  rhg::ConfigFile cfg = rhg::load_config(opt.config);
  if (opt.seedless && cfg.seed) {
    throw rhg::ConfigError(opt.config + ": /seed: --seedless forbids a seed entry");
  }
  return cfg;
}

std::filesystem::path out_dir(const Options& opt, const rhg::ConfigFile& cfg) {
  return opt.out.empty() ? std::filesystem::path(cfg.output_dir) : std::filesystem::path(opt.out);
}

void write(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw rhg::IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << content)) throw rhg::IoError("cannot write '" + path.string() + "'");
}

bool has_events(const rhg::Scenario& s) {
  return !s.demand_events.empty() || !s.supply_events.empty() || !s.perturbations.empty();
}

void print_metrics(const rhg::MetricsSummary& m) {
  std::printf("%-6s %14s %10s %10s %9s %9s %8s %8s", "agent", "cum_ncf", "mean_p", "max_p", "min_xi", "max_xi", "ration",
              "fallbk");
  if (!m.baseline.empty()) std::printf(" %10s", "d_ncf_%");
  std::printf("\n");
  for (std::size_t v = 0; v < m.agents.size(); ++v) {
    const auto& a = m.agents[v];
    std::printf("M%-5zu %14.4f %10.4f %10.4f %9.4f %9.4f %8zu %8zu", v + 1, a.cumulative_net_cash_flow, a.mean_price,
                a.max_price, a.min_inventory, a.max_inventory, a.rationed_days, a.fallback_days);
    if (!m.baseline.empty()) std::printf(" %10.3f", a.relative_change);
    std::printf("\n");
  }
}

std::string turnpike_csv(const rhg::TurnpikeReport& rep, const rhg::ConfigFile& cfg) {
  std::string s = rhg::metadata_header(cfg);
  s += "# eps=" + rhg::format_double(rep.eps) + " fraction_detected=" + rhg::format_double(rep.fraction_detected) +
       " fraction_middle_within=" + rhg::format_double(rep.fraction_middle_within) + "\n";
  s += "day,agent,level,entry,exit,middle_within,detected\n";
  for (const auto& p : rep.plans) {
    s += std::to_string(p.day) + "," + std::to_string(p.agent + 1) + "," + rhg::format_double(p.level) + "," +
         std::to_string(p.entry) + "," + std::to_string(p.exit) + "," + (p.middle_within ? "1" : "0") + "," +
         (p.detected ? "1" : "0") + "\n";
  }
  return s;
}

std::string turnpike_plot_csv(const rhg::TurnpikeReport& rep) {
  std::string s = "day,agent";
  const Eigen::Index len = rep.plans.empty() ? 0 : rep.plans.front().plan.size();
  for (Eigen::Index k = 0; k < len; ++k) s += ",xi_" + std::to_string(k);
  s += "\n";
  for (const auto& p : rep.plans) {
    s += std::to_string(p.day) + "," + std::to_string(p.agent + 1);
    for (Eigen::Index k = 0; k < p.plan.size(); ++k) s += "," + rhg::format_double(p.plan(k));
    s += "\n";
  }
  return s;
}

int cmd_simulate(const Options& opt) {
  rhg::ConfigFile cfg = load(opt);
  const auto dir = out_dir(opt, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  rhg::ScenarioResult res = rhg::run_scenario(cfg.scenario);
  if (has_events(cfg.scenario)) {
    rhg::Scenario base = cfg.scenario;
    base.name += "_baseline";
    base.demand_events.clear();
    base.supply_events.clear();
    base.perturbations.clear();
    base.record_plans = false;
    rhg::apply_baseline(res.metrics, rhg::run_scenario(base).metrics, base.name);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rhg::write_trace(res.trace, res.metrics, cfg, dir);
  if (opt.plot_data) write(dir / ("plot_" + cfg.scenario.name + ".csv"), rhg::plot_csv(res.trace));

  std::printf("scenario %s: %zu days, %zu manufacturers, %zu suppliers, N = %zu (%.2f s)\n", cfg.scenario.name.c_str(),
              cfg.scenario.days, res.trace.dims.n_m, res.trace.dims.n_s, res.trace.dims.horizon, secs);
  print_metrics(res.metrics);
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

int cmd_sweep(const Options& opt) {
  rhg::ConfigFile cfg = load(opt);
  if (!cfg.sweep) throw rhg::ConfigError(opt.config + ": /sweep: missing required field for the sweep command");
  const auto dir = out_dir(opt, cfg);
  const rhg::SweepSpec& sw = *cfg.sweep;
  const std::size_t n_m = cfg.scenario.params.n_m();
  rhg::Scenario base = cfg.scenario;
  base.record_plans = false;

  if (sw.kind == rhg::SweepKind::forecast_asymmetry) {
    const rhg::ForecastAsymmetryResult r = rhg::run_forecast_asymmetry(base);
    std::string csv = rhg::metadata_header(cfg) + "agent,ncf_m1_preview,ncf_no_forecast,relative_change_pct\n";
    std::printf("%-6s %16s %16s %10s\n", "agent", "M1_preview", "no_forecast", "d_%");
    for (std::size_t v = 0; v < n_m; ++v) {
      const double a = r.perfect_first.agents[v].cumulative_net_cash_flow;
      const double b = r.no_forecast.agents[v].cumulative_net_cash_flow;
      const double d = r.perfect_first.agents[v].relative_change;
      csv += std::to_string(v + 1) + "," + rhg::format_double(a) + "," + rhg::format_double(b) + "," + rhg::format_double(d) + "\n";
      std::printf("M%-5zu %16.4f %16.4f %10.3f\n", v + 1, a, b, d);
    }
    write(dir / "forecast_asymmetry.csv", csv);
  } else {
    const rhg::SweepTable t = rhg::run_coupling_sweep(base, sw.agent, sw.row, sw.col, sw.factors);
    std::string csv = rhg::metadata_header(cfg);
    csv += "# believer=" + std::to_string(sw.agent + 1) + " target=beta_" + std::to_string(sw.row + 1) +
           std::to_string(sw.col + 1) + "\nfactor";
    for (std::size_t v = 0; v < n_m; ++v) csv += ",ncf_" + std::to_string(v + 1);
    for (std::size_t v = 0; v < n_m; ++v) csv += ",relative_change_pct_" + std::to_string(v + 1);
    csv += "\n";
    std::printf("M%zu believes beta_%zu%zu scaled by c\n%-8s", sw.agent + 1, sw.row + 1, sw.col + 1, "c");
    for (std::size_t v = 0; v < n_m; ++v) std::printf("  %10s%zu", "d_ncf_%_M", v + 1);
    std::printf("\n");
    for (const auto& p : t.points) {
      csv += rhg::format_double(p.factor);
      for (Eigen::Index v = 0; v < p.cumulative_net_cash_flow.size(); ++v) csv += "," + rhg::format_double(p.cumulative_net_cash_flow(v));
      for (Eigen::Index v = 0; v < p.relative_change.size(); ++v) csv += "," + rhg::format_double(p.relative_change(v));
      csv += "\n";
      std::printf("%-8.3g", p.factor);
      for (Eigen::Index v = 0; v < p.relative_change.size(); ++v) std::printf("  %11.3f", p.relative_change(v));
      std::printf("\n");
    }
    write(dir / "sweep.csv", csv);
  }
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

int cmd_turnpike(const Options& opt) {
  rhg::ConfigFile cfg = load(opt);
  const auto dir = out_dir(opt, cfg);
  rhg::Scenario s = cfg.scenario;
  s.record_plans = true;
  const rhg::ScenarioResult res = rhg::run_scenario(s);
  const rhg::TurnpikeReport rep = rhg::turnpike_analysis(res.trace, cfg.turnpike_eps);
  write(dir / "turnpike.csv", turnpike_csv(rep, cfg));
  write(dir / "plans.csv", rhg::plans_csv(res.trace, cfg));
  if (opt.plot_data) write(dir / "plot_turnpike_plans.csv", turnpike_plot_csv(rep));
  std::printf("turnpike eps = %g over %zu plans\n", rep.eps, rep.plans.size());
  std::printf("  entry > 0, exit < N, middle third within eps: %.4f\n", rep.fraction_detected);
  std::printf("  middle third within eps:                     %.4f\n", rep.fraction_middle_within);
  std::printf("wrote %s\n", dir.string().c_str());
  return 0;
}

int cmd_check(const Options& opt) {
  rhg::ConfigFile cfg = load(opt);
  const rhg::ClosedLoopConfig cl = rhg::make_closed_loop(cfg.scenario);
  bool ok = true;
  for (std::size_t v = 0; v < cl.policies.size(); ++v) {
    rhg::AgentPolicy policy = cl.policies[v];
    policy.belief.w_hat = rhg::make_forecast(policy.forecast, cl.w_true, 0, cfg.scenario.params.horizon);
    if (policy.observe_supply_cap) {
      for (std::size_t s = 0; s < policy.belief.theta_hat.suppliers.size(); ++s) {
        policy.belief.theta_hat.suppliers[s].o_max = cl.supply_cap(0, static_cast<Eigen::Index>(s));
      }
    }
    const rhg::PolicyOutput out = rhg::policy_step(policy, v, cl.x0, true);
    const auto& d = out.diagnostics;
    std::printf("M%zu: %s in %d iterations, residual %.3e (stationarity %.1e, feasibility %.1e, complementarity %.1e)",
                v + 1, rhg::to_string(d.status), d.iterations, d.residual, d.kkt.stationarity, d.kkt.feasibility,
                d.kkt.complementarity);
    if (d.regularity_checked) {
      std::printf(", LICQ %s, second-order %s", d.licq_ok ? "ok" : "FAIL", d.second_order_ok ? "ok" : "FAIL");
    }
    std::printf("\n");
    ok = ok && !d.fallback;
  }
  if (!ok) {
    std::fprintf(stderr, "rhg check: solver failed on the day-0 game\n");
    return kExitSolver;
  }
  std::printf("config ok\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Receding-horizon supply-chain game simulator"};
  app.require_subcommand(1);
  Options opt;

  const auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("config", opt.config, "JSON experiment configuration")->required();
    sub->add_option("--out", opt.out, "output directory (overrides output.dir)");
    sub->add_flag("--seedless", opt.seedless, "reject configurations that carry a seed");
    sub->add_flag("--plot-data", opt.plot_data, "also write wide plot-ready CSV tables");
    return sub;
  };
  CLI::App* simulate = add("simulate", "run one closed-loop scenario and write its trace");
  CLI::App* sweep = add("sweep", "run the sweep described by the config's sweep section");
  CLI::App* turnpike = add("turnpike", "run a scenario and analyse its open-loop plans");
  CLI::App* check = add("check", "validate the config and solve the day-0 game");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(opt);
    if (sweep->parsed()) return cmd_sweep(opt);
    if (turnpike->parsed()) return cmd_turnpike(opt);
    if (check->parsed()) return cmd_check(opt);
  } catch (const rhg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const rhg::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
