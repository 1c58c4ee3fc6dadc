#include "cesmarket/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <variant>

#include "cesmarket/demos.hpp"
#include "cesmarket/errors.hpp"
#include "cesmarket/json_io.hpp"
#include "cesmarket/pricing.hpp"
#include "cesmarket/solver.hpp"
#include "cesmarket/sybil.hpp"
#include "cesmarket/truthful.hpp"
#include "cesmarket/welfare.hpp"

namespace cesmarket::cli {

namespace {

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

void emit(const Json& report, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << dump(report);
    return;
  }
  std::ofstream f(path);
  if (!f) throw FormatError("cannot write " + path);
  f << dump(report);
}

Json header(const char* command) {
  Json j;
  j["version"] = kFormatVersion;
  j["command"] = command;
  return j;
}

std::vector<double> welfare_values(const Instance& inst, const Allocation& x) {
  return inst.values(x);
}

Certificate certify_with(const Instance& inst, const Allocation& x,
                         const std::vector<double>& q, double tol) {
  return we_certificate(inst, x, make_pricing_rule(q, inst.rho(), inst.degree()), tol);
}

// ---- solve ----------------------------------------------------------------

struct SolveArgs {
  std::string file;
  std::optional<double> tol;
  std::size_t max_iters = 400000;
  std::string out;
  std::string method = "ellipsoid";
};

int cmd_solve(const SolveArgs& a, Streams s) {
  const InstanceFile f = load_instance_file(a.file);
  const Instance& inst = f.instance;
  SolveOptions opts;
  if (a.tol) opts.tolerance = *a.tol;
  opts.max_iters = a.max_iters;
  opts.method = a.method == "projected-gradient" ? SolveMethod::ProjectedGradient
                                                 : SolveMethod::Ellipsoid;

  Json report = header("solve");
  report["rho"] = inst.rho();
  report["degree"] = inst.degree();
  Allocation x;
  std::vector<double> q;
  std::size_t iterations = 0;
  bool converged = true;
  if (inst.all_leontief()) {
    const LeontiefResult L = solve_leontief(inst, opts);
    x = L.allocation;
    q = L.multipliers;
    iterations = L.iterations;
    report["alphas"] = L.alphas;
  } else {
    SolveResult res;
    try {
      res = solve_ces(inst, opts);
    } catch (const ConvergenceError& e) {
      res = e.best();
      converged = false;
      s.err << "warning: " << e.what() << "\n";
    }
    x = res.allocation;
    q = res.multipliers;
    iterations = res.iterations;
  }
  const auto values = welfare_values(inst, x);
  const Certificate cert = certify_with(inst, x, q, opts.tolerance);
  report["converged"] = converged;
  report["iterations"] = iterations;
  report["allocation"] = allocation_to_json(x);
  report["values"] = values;
  report["multipliers"] = q;
  report["payments"] = cert.payments;
  report["objective"] = number(ces_objective({inst.rho(), {}}, values));
  report["welfare"] = number(ces_welfare({inst.rho(), {}}, values));
  report["tolerance"] = opts.tolerance;
  report["certificate"] = certificate_to_json(cert);
  emit(report, a.out, s.out);
  return cert.pass ? kExitOk : kExitFailed;
}

// ---- verify ---------------------------------------------------------------

int cmd_verify(const std::string& file, const std::string& solution, std::optional<double> tol,
               Streams s) {
  const InstanceFile f = load_instance_file(file);
  const Instance& inst = f.instance;
  const SolutionFile sol = solution_from_json(parse_json_file(solution), inst.agents(), inst.goods());
  const double t = tol.value_or(default_tolerance());
  std::vector<double> q;
  Certificate cert;
  if (sol.multipliers) {
    q = *sol.multipliers;
    cert = certify_with(inst, sol.allocation, q, t);
  } else {
    if (!inst.all_differentiable()) {
      throw FormatError("leontief solutions must carry \"multipliers\"");
    }
    try {
      q = extract_multipliers(inst, sol.allocation, t);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InconsistentMultipliers) throw;
      s.err << "multipliers: " << e.what() << "\n";
      // Averaged over holders so the residuals below say how far off x is.
      q = extract_multipliers(inst, sol.allocation, std::numeric_limits<double>::infinity());
    }
    cert = certify_with(inst, sol.allocation, q, t);
  }
  Json report = header("verify");
  report["multipliers"] = numbers(q);
  report["tolerance"] = t;
  report["certificate"] = certificate_to_json(cert);
  s.out << dump(report);
  if (!cert.pass) {
    s.err << "not certified: stationarity " << cert.stationarity << ", clearing " << cert.clearing
          << ", payment_ratio " << cert.payment_ratio << "\n";
    return kExitFailed;
  }
  return kExitOk;
}

// ---- truthful -------------------------------------------------------------

BidProfile bids_from(const Instance& inst) {
  if (inst.goods() != 1) throw FormatError("truthful needs a single-good instance");
  BidProfile b;
  b.r = inst.degree();
  b.rho = inst.rho();
  for (const auto& v : inst.valuations()) {
    if (const auto* lp = std::get_if<Valuation::LinearParams>(&v.params())) {
      b.bids.push_back(lp->weights[0]);
    } else if (const auto* pp = std::get_if<Valuation::PowerParams>(&v.params())) {
      b.bids.push_back(pp->weight);
    } else {
      throw FormatError("truthful needs linear or power valuations");
    }
  }
  b.validate();
  return b;
}

int cmd_truthful(const std::string& file, std::optional<std::size_t> agent, bool scan, Streams s) {
  const InstanceFile f = load_instance_file(file);
  const BidProfile b = bids_from(f.instance);
  const std::size_t n = b.bids.size();
  if (agent && *agent >= n) throw FormatError("--agent out of range");
  const Allocation x = truthful_allocation(b);

  Json report = header("truthful");
  report["rho"] = b.rho;
  report["degree"] = b.r;
  report["alpha"] = b.alpha();
  Json agents = Json::array();
  for (std::size_t i = 0; i < n; ++i) {
    if (agent && *agent != i) continue;
    const double pay = truthful_payment(b, i);
    Json a;
    a["agent"] = i;
    a["bid"] = b.bids[i];
    a["allocation"] = x(i, 0);
    a["payment"] = pay;
    a["utility_at_bid"] = b.bids[i] * std::pow(x(i, 0), b.r) - pay;
    agents.push_back(a);
  }
  report["agents"] = agents;
  bool ok = true;
  if (scan) {
    const std::size_t i = agent.value_or(0);
    std::vector<double> others;
    for (std::size_t k = 0; k < n; ++k) {
      if (k != i) others.push_back(b.bids[k]);
    }
    const BestResponseScan sc = scan_best_response(b.bids[i], others, b.r, b.rho);
    Json j;
    j["agent"] = i;
    j["true_weight"] = b.bids[i];
    j["best_bid"] = sc.best_bid;
    j["step"] = sc.step;
    ok = std::abs(sc.best_bid - b.bids[i]) <= sc.step;
    j["truthful"] = ok;
    j["bids"] = sc.bids;
    j["utilities"] = sc.utilities;
    report["scan"] = j;
  }
  s.out << dump(report);
  return ok ? kExitOk : kExitFailed;
}

// ---- sybil-check ----------------------------------------------------------

int cmd_sybil(const std::string& file, std::optional<double> kappa_flag, Streams s) {
  const InstanceFile f = load_instance_file(file);
  const Instance& inst = f.instance;
  if (!kappa_flag && !f.kappa) throw FormatError("sybil-check needs --kappa or a \"kappa\" field");
  const double kappa = kappa_flag ? *kappa_flag : *f.kappa;
  if (inst.degree() != 1.0) {
    fail(ErrorKind::UnsupportedDegree, "sybil analysis covers degree-one valuations only");
  }
  const double tol = default_tolerance();
  Allocation x;
  std::vector<double> q;
  if (inst.all_leontief()) {
    const LeontiefResult L = solve_leontief(inst);
    x = L.allocation;
    q = L.multipliers;
  } else {
    const SolveResult res = solve_ces(inst);
    x = res.allocation;
    q = res.multipliers;
  }
  const PricingRule p = make_pricing_rule(q, inst.rho(), inst.degree());
  const SweReport r = swe_check(inst, x, p, kappa, tol);

  Json report = header("sybil-check");
  report["rho"] = inst.rho();
  report["kappa"] = kappa;
  report["is_swe"] = r.is_swe;
  report["cap"] = number(r.cap);
  report["welfare_cap"] = number(r.welfare_cap);
  report["welfare"] = ces_welfare({inst.rho(), {}}, r.values);
  report["allocation"] = allocation_to_json(x);
  report["multipliers"] = q;
  Json agents = Json::array();
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    Json a;
    a["agent"] = i;
    a["value"] = r.values[i];
    a["status"] = std::string(to_string(r.statuses[i]));
    agents.push_back(a);
  }
  report["agents"] = agents;
  s.out << dump(report);
  return r.is_swe ? kExitOk : kExitFailed;
}

// ---- fisher ---------------------------------------------------------------

int cmd_fisher(const std::string& file, const std::string& solution, Streams s) {
  const InstanceFile f = load_instance_file(file);
  const Instance& inst = f.instance;
  const SolutionFile sol = solution_from_json(parse_json_file(solution), inst.agents(), inst.goods());
  if (!inst.all_differentiable()) throw FormatError("fisher needs differentiable valuations");
  const double tol = default_tolerance();
  const std::vector<double> q =
      sol.multipliers ? *sol.multipliers : extract_multipliers(inst, sol.allocation, tol);
  const PricingRule p = make_pricing_rule(q, inst.rho(), inst.degree());
  const FisherReport fr = to_fisher(inst, sol.allocation, p, tol);
  const WeightedShiftReport ws = weighted_shift_certificate(inst, sol.allocation, inst.rho(), tol);

  Json report = header("fisher");
  report["budgets"] = fr.budgets;
  report["fisher_pass"] = fr.fisher_pass;
  report["worst_gain"] = number(fr.worst_gain);
  Json w;
  w["pass"] = ws.pass;
  w["residual"] = number(ws.residual);
  w["weights"] = ws.weights;
  w["multipliers"] = ws.multipliers;
  report["weighted_shift"] = w;
  s.out << dump(report);
  return fr.fisher_pass && ws.pass ? kExitOk : kExitFailed;
}

// ---- demos ----------------------------------------------------------------

struct DemoArgs {
  std::string name;
  std::optional<std::size_t> n;
  std::optional<double> eps;
  std::optional<double> rho;
  std::size_t grid = 1000000;
  std::string file;
  std::string solution;
};

int demo_gap(const DemoArgs& a, Streams s) {
  std::vector<GapReport> cells;
  if (a.n || a.eps || a.rho) {
    cells.push_back(linear_gap_demo(a.n.value_or(4), a.eps.value_or(0.1), a.rho.value_or(0.5)));
  } else {
    for (std::size_t n : {2, 4, 8}) {
      for (double eps : {0.1, 1.0}) {
        for (double rho : {0.25, 0.5, 1.0}) cells.push_back(linear_gap_demo(n, eps, rho));
      }
    }
  }
  bool pass = true;
  Json arr = Json::array();
  s.err << "linear-pricing welfare gap, one good, v_1 = (1+eps) x, v_i = x\n";
  s.err << "     n      eps      rho      ratio      bound\n";
  for (const auto& c : cells) {
    pass = pass && c.ratio <= c.bound + 1e-9;
    arr.push_back(gap_to_json(c));
    s.err << std::setw(6) << c.n << std::setw(9) << c.eps << std::setw(9) << c.rho
          << std::setw(11) << std::setprecision(6) << c.ratio << std::setw(11) << c.bound
          << "\n";
  }
  Json report = header("demo");
  report["demo"] = "gap";
  report["cells"] = arr;
  report["pass"] = pass;
  s.out << dump(report);
  return pass ? kExitOk : kExitFailed;
}

int demo_violation(ViolationKind kind, const DemoArgs& a, Streams s) {
  const double rho = a.rho.value_or(kind == ViolationKind::NegativeRho ? -1.0 : 0.5);
  const ViolationReport r = exchange_violation_demo(kind, rho, a.grid);
  s.err << to_string(kind) << ": " << r.instance << "\n"
        << "  optimum x = (" << r.optimum[0] << ", " << r.optimum[1] << ")\n"
        << "  equilibrium would need: " << r.inequality << "\n"
        << "  lhs " << r.lhs << ", rhs " << r.rhs << ", margin " << r.margin << "\n";
  if (kind == ViolationKind::MixedDegree) {
    s.err << "  margin at the exact optimum " << r.analytic_margin << "\n";
  }
  Json report = header("demo");
  report["demo"] = std::string(to_string(kind));
  report["report"] = violation_to_json(r);
  bool pass = r.margin > 1e-9;
  if (kind == ViolationKind::NashDifferentiable) {
    const Instance inst = a.file.empty()
                              ? Instance({Valuation::linear({1.0}), Valuation::linear({2.0})}, 1.0)
                              : load_instance_file(a.file).instance;
    const NashPricingReport np = nash_threshold_pricing(inst);
    Json j;
    j["allocation"] = allocation_to_json(np.allocation);
    j["q"] = np.q;
    j["spends"] = np.spends;
    j["budget_pricing_check"] = np.budget_pricing_check;
    report["threshold_pricing"] = j;
    s.err << "  budget pricing at the Nash optimum: q = (";
    for (std::size_t k = 0; k < np.q.size(); ++k) s.err << (k ? ", " : "") << np.q[k];
    s.err << "), every agent spends 1: " << (np.budget_pricing_check ? "yes" : "no") << "\n";
    pass = pass && np.budget_pricing_check;
  }
  report["pass"] = pass;
  s.out << dump(report);
  return pass ? kExitOk : kExitFailed;
}

Json first_welfare_case(const Instance& inst, const Allocation& x, const std::vector<double>& q,
                        Streams s) {
  Json j;
  j["allocation"] = allocation_to_json(x);
  j["q"] = q;
  try {
    const FirstWelfareReport r = first_welfare_check(inst, x, q);
    j["equilibrium"] = true;
    j["holds"] = r.holds;
    j["welfare"] = r.welfare;
    j["grid_welfare"] = r.grid_welfare;
    s.err << "  equilibrium; welfare " << r.welfare << " vs grid " << r.grid_welfare
          << (r.holds ? " (holds)\n" : " (FAILS)\n");
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NotEquilibrium) throw;
    j["equilibrium"] = false;
    j["holds"] = false;
    j["reason"] = e.what();
    s.err << "  not an equilibrium: " << e.what() << "\n";
  }
  return j;
}

int demo_first_welfare(const DemoArgs& a, Streams s) {
  Json report = header("demo");
  report["demo"] = "first-welfare";
  Json cases = Json::array();
  s.err << "first welfare theorem under linear prices\n";
  int code = kExitOk;
  if (a.file.empty()) {
    const Instance inst({Valuation::linear({1.0}), Valuation::linear({6.0}),
                         Valuation::linear({5.0})},
                        1.0);
    Allocation good(3, 1), bad(3, 1);
    good(1, 0) = 1.0;
    bad(0, 0) = 1.0;
    cases.push_back(first_welfare_case(inst, good, {6.0}, s));
    cases.push_back(first_welfare_case(inst, bad, {6.0}, s));
    if (!cases[0]["holds"].get<bool>() || cases[1]["equilibrium"].get<bool>()) code = kExitFailed;
  } else {
    if (a.solution.empty()) throw FormatError("first-welfare with --file needs --solution");
    const Instance inst = load_instance_file(a.file).instance;
    const SolutionFile sol =
        solution_from_json(parse_json_file(a.solution), inst.agents(), inst.goods());
    if (!sol.multipliers) throw FormatError("first-welfare needs linear prices in \"multipliers\"");
    cases.push_back(first_welfare_case(inst, sol.allocation, *sol.multipliers, s));
    if (!cases[0]["holds"].get<bool>()) code = kExitFailed;
  }
  report["cases"] = cases;
  report["pass"] = code == kExitOk;
  s.out << dump(report);
  return code;
}

int cmd_demo(const DemoArgs& a, Streams s) {
  if (a.name == "gap") return demo_gap(a, s);
  if (a.name == "mixed-degree") return demo_violation(ViolationKind::MixedDegree, a, s);
  if (a.name == "neg-rho") return demo_violation(ViolationKind::NegativeRho, a, s);
  if (a.name == "nash") return demo_violation(ViolationKind::NashDifferentiable, a, s);
  if (a.name == "first-welfare") return demo_first_welfare(a, s);
  throw FormatError("unknown demo \"" + a.name + "\"");
}

std::string one_line(std::string msg) {
  for (char& c : msg) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return msg;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Streams s{out, err};
  CLI::App app{"CES-welfare allocations, supporting prices and equilibrium certificates",
               "ces-market"};
  app.require_subcommand(1);

  SolveArgs solve;
  auto* c_solve = app.add_subcommand("solve", "maximize CES welfare and certify the prices");
  c_solve->add_option("file", solve.file, "instance JSON")->required();
  c_solve->add_option("--tol", solve.tol, "certificate and solver tolerance");
  c_solve->add_option("--max-iters", solve.max_iters, "first-stage iteration cap");
  c_solve->add_option("--out", solve.out, "write the report here instead of stdout");
  c_solve->add_option("--method", solve.method, "first stage")
      ->check(CLI::IsMember({"ellipsoid", "projected-gradient"}));

  std::string v_file, v_sol;
  std::optional<double> v_tol;
  auto* c_verify = app.add_subcommand("verify", "certify a stored solution");
  c_verify->add_option("file", v_file, "instance JSON")->required();
  c_verify->add_option("solution", v_sol, "solution JSON with \"allocation\"")->required();
  c_verify->add_option("--tol", v_tol, "certificate tolerance");

  std::string t_file;
  std::optional<std::size_t> t_agent;
  bool t_scan = false;
  auto* c_truth = app.add_subcommand("truthful", "single-good truthful mechanism report");
  c_truth->add_option("file", t_file, "instance JSON (one good, bids = weights)")->required();
  c_truth->add_option("--agent", t_agent, "report only this agent");
  c_truth->add_flag("--scan", t_scan, "best-response scan for the agent (default 0)");

  std::string y_file;
  std::optional<double> y_kappa;
  auto* c_sybil = app.add_subcommand("sybil-check", "Sybil-resistance of the optimum");
  c_sybil->add_option("file", y_file, "instance JSON")->required();
  c_sybil->add_option("--kappa", y_kappa, "identity cost (else the file's \"kappa\")");

  DemoArgs demo;
  auto* c_demo = app.add_subcommand("demo", "gap|mixed-degree|neg-rho|nash|first-welfare");
  c_demo->add_option("name", demo.name, "demo name")
      ->required()
      ->check(CLI::IsMember({"gap", "mixed-degree", "neg-rho", "nash", "first-welfare"}));
  c_demo->add_option("--n", demo.n, "gap: agents");
  c_demo->add_option("--eps", demo.eps, "gap: weight edge of agent 1");
  c_demo->add_option("--rho", demo.rho, "inequality aversion");
  c_demo->add_option("--grid", demo.grid, "1-D search cells");
  c_demo->add_option("--file", demo.file, "instance JSON (nash, first-welfare)");
  c_demo->add_option("--solution", demo.solution, "solution JSON (first-welfare)");

  std::string f_file, f_sol;
  auto* c_fisher = app.add_subcommand("fisher", "Fisher-market and weighted-shift checks");
  c_fisher->add_option("file", f_file, "instance JSON")->required();
  c_fisher->add_option("solution", f_sol, "solution JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*c_solve) return cmd_solve(solve, s);
    if (*c_verify) return cmd_verify(v_file, v_sol, v_tol, s);
    if (*c_truth) return cmd_truthful(t_file, t_agent, t_scan, s);
    if (*c_sybil) return cmd_sybil(y_file, y_kappa, s);
    if (*c_demo) return cmd_demo(demo, s);
    if (*c_fisher) return cmd_fisher(f_file, f_sol, s);
  } catch (const FormatError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitInput;
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << one_line(e.what()) << "\n";
    const bool certified_fail =
        e.kind() == ErrorKind::NotEquilibrium || e.kind() == ErrorKind::DidNotConverge;
    return certified_fail ? kExitFailed : kExitInput;
  } catch (const Json::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return kExitInput;
  }
  return kExitInput;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace cesmarket::cli
