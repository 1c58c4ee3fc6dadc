#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cesmarket/demos.hpp"
#include "cesmarket/instance.hpp"
#include "cesmarket/pricing.hpp"
#include "cesmarket/solver.hpp"
#include "cesmarket/sybil.hpp"

namespace cesmarket {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

/// Input-file problems that are not library errors (bad JSON, wrong types,
/// unknown fields). The CLI maps these to exit code 2.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InstanceFile {
  Instance instance;
  std::optional<double> kappa;
};

struct SolutionFile {
  Allocation allocation;
  std::optional<std::vector<double>> multipliers;
};

Json valuation_to_json(const Valuation& v);
Valuation valuation_from_json(const Json& j, std::size_t goods,
                              const std::string& where = "valuation");

Json instance_to_json(const Instance& instance, std::optional<double> kappa = std::nullopt);
InstanceFile instance_from_json(const Json& j);

Json allocation_to_json(const Allocation& x);
Allocation allocation_from_json(const Json& j, std::size_t agents, std::size_t goods);

/// Reads "allocation" and an optional "multipliers" array; a solve report
/// is itself a valid solution file.
SolutionFile solution_from_json(const Json& j, std::size_t agents, std::size_t goods);

/// Infinite and NaN numbers become null.
Json number(double v);
Json numbers(const std::vector<double>& v);

Json certificate_to_json(const Certificate& c);
Json gap_to_json(const GapReport& r);
Json violation_to_json(const ViolationReport& r);

Json parse_json_file(const std::string& path);
InstanceFile load_instance_file(const std::string& path);

/// Two-space indented dump with a trailing newline.
std::string dump(const Json& j);

}  // namespace cesmarket
