#ifndef MORAN_CONFIG_HPP
#define MORAN_CONFIG_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "moran/harness.hpp"
#include "moran/model.hpp"
#include "moran/zoo.hpp"

namespace moran {

/// Malformed or inconsistent configuration; line and column are 1-based
/// (0 when unknown).
class ConfigError : public Error {
 public:
  ConfigError(const std::string& message, int line = 0, int column = 0);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

/// Model block resolved into a spec, keeping the builder inputs around for
/// checks that need them (series, doubling tests, analytic eigen-elements).
struct ResolvedModel {
  ModelSpec spec;
  std::string builder;  // empty for inline models
  std::optional<BDParams> bd;
  std::optional<Counterexample> counterexample;
  YAML::Node node;
};

struct RunConfig {
  std::string text;
  std::string hash;
  ResolvedModel model;
  std::string task;      // validate, simulate, flow, eigen, variance, experiment, zoo-check
  std::string task_arg;  // name after the colon
  YAML::Node task_node;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  std::string tolerance_profile = "default";
  Tolerances tolerances;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

ResolvedModel build_model(const YAML::Node& node);
/// Rebuilds a builder-based model with a different truncation K.
ModelSpec rebuild_with_size(const ResolvedModel& model, std::size_t K);

Measure parse_measure(const YAML::Node& node, std::size_t size);
NamedFunction parse_function(const YAML::Node& node, std::size_t size, std::size_t index);
std::vector<NamedFunction> parse_functions(const YAML::Node& node, std::size_t size);

/// Experiment plan from a task block.
ExperimentPlan parse_plan(const RunConfig& config);

}  // namespace moran

#endif  // MORAN_CONFIG_HPP
