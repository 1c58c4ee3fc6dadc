#include "cesmarket/json_io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

namespace cesmarket {

namespace {

[[noreturn]] void bad(const std::string& what) { throw FormatError(what); }

double get_number(const Json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) bad(where + ": missing \"" + key + "\"");
  if (!it->is_number()) bad(where + ": \"" + key + "\" must be a number");
  return it->get<double>();
}

std::vector<double> get_numbers(const Json& j, const std::string& where) {
  if (!j.is_array()) bad(where + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : j) {
    if (!e.is_number()) bad(where + " must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

void only_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) bad(where + ": unknown field \"" + it.key() + "\"");
  }
}

}  // namespace

Json number(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

Json numbers(const std::vector<double>& v) {
  Json a = Json::array();
  for (double d : v) a.push_back(number(d));
  return a;
}

Json valuation_to_json(const Valuation& v) {
  Json j;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, Valuation::LinearParams>) {
          j["kind"] = "linear";
          j["weights"] = p.weights;
        } else if constexpr (std::is_same_v<P, Valuation::PowerParams>) {
          j["kind"] = "power";
          j["weights"] = std::vector<double>{p.weight};
          j["degree"] = p.degree;
        } else if constexpr (std::is_same_v<P, Valuation::CobbDouglasParams>) {
          j["kind"] = "cobb-douglas";
          j["weights"] = p.exponents;
          j["scale"] = p.scale;
        } else if constexpr (std::is_same_v<P, Valuation::CesParams>) {
          j["kind"] = "ces";
          j["weights"] = p.weights;
          j["degree"] = p.degree;
          j["sigma"] = p.sigma;
        } else {
          j["kind"] = "leontief";
          j["weights"] = p.weights;
        }
      },
      v.params());
  return j;
}

Valuation valuation_from_json(const Json& j, std::size_t goods, const std::string& where) {
  if (!j.is_object()) bad(where + " must be an object");
  auto kind_it = j.find("kind");
  if (kind_it == j.end() || !kind_it->is_string()) bad(where + ": missing string \"kind\"");
  const std::string kind = kind_it->get<std::string>();
  if (!j.contains("weights")) bad(where + ": missing \"weights\"");
  const auto w = get_numbers(j.at("weights"), where + " weights");
  if (kind != "power" && w.size() != goods) {
    std::ostringstream os;
    os << where << ": expected " << goods << " weights, got " << w.size();
    bad(os.str());
  }
  if (kind == "linear") {
    only_keys(j, {"kind", "weights"}, where);
    return Valuation::linear(w);
  }
  if (kind == "power") {
    only_keys(j, {"kind", "weights", "degree"}, where);
    if (goods != 1 || w.size() != 1) bad("power valuations need exactly one good and one weight");
    return Valuation::power(w[0], get_number(j, "degree", where));
  }
  if (kind == "cobb-douglas") {
    only_keys(j, {"kind", "weights", "scale"}, where);
    const double scale = j.contains("scale") ? get_number(j, "scale", where) : 1.0;
    return Valuation::cobb_douglas(scale, w);
  }
  if (kind == "ces") {
    only_keys(j, {"kind", "weights", "degree", "sigma"}, where);
    return Valuation::ces(w, get_number(j, "sigma", where), get_number(j, "degree", where));
  }
  if (kind == "leontief") {
    only_keys(j, {"kind", "weights"}, where);
    return Valuation::leontief(w);
  }
  bad(where + ": unknown kind \"" + kind + "\"");
}

Json instance_to_json(const Instance& instance, std::optional<double> kappa) {
  Json j;
  j["version"] = kFormatVersion;
  j["rho"] = instance.rho();
  j["goods"] = instance.goods();
  Json agents = Json::array();
  for (const auto& v : instance.valuations()) agents.push_back(valuation_to_json(v));
  j["agents"] = agents;
  if (kappa) j["kappa"] = *kappa;
  return j;
}

InstanceFile instance_from_json(const Json& j) {
  if (!j.is_object()) bad("instance file must hold a JSON object");
  only_keys(j, {"version", "rho", "goods", "agents", "kappa"}, "instance");
  auto ver = j.find("version");
  if (ver == j.end() || !ver->is_number_integer()) bad("instance: missing integer \"version\"");
  if (ver->get<long long>() != kFormatVersion) {
    bad("instance: unsupported version " + ver->dump());
  }
  auto goods_it = j.find("goods");
  if (goods_it == j.end() || !goods_it->is_number_integer() || goods_it->get<long long>() < 1) {
    bad("instance: \"goods\" must be a positive integer");
  }
  const auto goods = goods_it->get<std::size_t>();
  const double rho = get_number(j, "rho", "instance");
  auto agents_it = j.find("agents");
  if (agents_it == j.end() || !agents_it->is_array()) bad("instance: \"agents\" must be an array");
  std::vector<Valuation> vals;
  for (const auto& a : *agents_it) {
    vals.push_back(valuation_from_json(a, goods, "agents[" + std::to_string(vals.size()) + "]"));
  }
  InstanceFile out{Instance(std::move(vals), rho), std::nullopt};
  if (j.contains("kappa")) out.kappa = get_number(j, "kappa", "instance");
  return out;
}

Json allocation_to_json(const Allocation& x) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < x.agents(); ++i) {
    const auto b = x.bundle(i);
    rows.push_back(std::vector<double>(b.begin(), b.end()));
  }
  return rows;
}

Allocation allocation_from_json(const Json& j, std::size_t agents, std::size_t goods) {
  if (!j.is_array() || j.size() != agents) {
    std::ostringstream os;
    os << "allocation must be an array of " << agents << " rows";
    bad(os.str());
  }
  Allocation x(agents, goods);
  for (std::size_t i = 0; i < agents; ++i) {
    const auto row = get_numbers(j[i], "allocation row");
    if (row.size() != goods) {
      std::ostringstream os;
      os << "allocation row " << i << " must have " << goods << " entries";
      bad(os.str());
    }
    for (std::size_t k = 0; k < goods; ++k) x(i, k) = row[k];
  }
  return x;
}

SolutionFile solution_from_json(const Json& j, std::size_t agents, std::size_t goods) {
  if (!j.is_object() || !j.contains("allocation")) {
    bad("solution file must be an object with an \"allocation\" field");
  }
  SolutionFile out{allocation_from_json(j.at("allocation"), agents, goods), std::nullopt};
  if (j.contains("multipliers") && !j.at("multipliers").is_null()) {
    auto q = get_numbers(j.at("multipliers"), "multipliers");
    if (q.size() != goods) bad("multipliers must have one entry per good");
    out.multipliers = std::move(q);
  }
  return out;
}

Json certificate_to_json(const Certificate& c) {
  Json j;
  j["stationarity"] = number(c.stationarity);
  j["clearing"] = number(c.clearing);
  j["payment_ratio"] = number(c.payment_ratio);
  j["pass"] = c.pass;
  Json w = Json::array();
  for (const auto& [i, k] : c.waived) w.push_back({i, k});
  j["waived"] = w;
  return j;
}

Json gap_to_json(const GapReport& r) {
  Json j;
  j["n"] = r.n;
  j["eps"] = r.eps;
  j["rho"] = r.rho;
  j["we_welfare"] = r.we_welfare;
  j["opt_welfare"] = r.opt_welfare;
  j["ratio"] = r.ratio;
  j["bound"] = r.bound;
  return j;
}

Json violation_to_json(const ViolationReport& r) {
  Json j;
  j["kind"] = std::string(to_string(r.kind));
  j["rho"] = r.rho;
  j["instance"] = r.instance;
  j["inequality"] = r.inequality;
  j["optimum"] = r.optimum;
  j["lhs"] = r.lhs;
  j["rhs"] = r.rhs;
  j["margin"] = r.margin;
  if (r.kind == ViolationKind::MixedDegree) j["analytic_margin"] = r.analytic_margin;
  return j;
}

Json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    bad(path + ": " + e.what());
  }
}

InstanceFile load_instance_file(const std::string& path) {
  return instance_from_json(parse_json_file(path));
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace cesmarket
