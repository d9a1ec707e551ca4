#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "longit/dataset.hpp"

namespace longit::cli {

/// Exit codes shared by every command.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kNumerical = 2;

struct DataOptions {
  std::string path;
  std::string treatment = "trt";
  std::vector<std::string> categorical;
  std::vector<std::string> time_varying;
  std::string reference;  // reference arm override
};

[[nodiscard]] LongDataset load_data(const DataOptions& options);

struct DescribeOptions {
  DataOptions data;
  std::string out;  // optional CSV copy
};

struct FitOptions {
  DataOptions data;
  std::string model = "gee";        // gee, wgee, glmm
  std::string strategy = "observed";  // cc, locf, observed
  std::string formula = "outcome ~ trt*visit";
  std::optional<std::string> corr;  // ind, exch, ar1, un (default exch)
  std::string quadrature = "adaptive";
  int Q = 0;
  std::string optimizer = "quasi-newton";
  std::string weights = "occasion";
  std::vector<std::string> dropout_covariates;
  std::optional<double> truncate;
  bool zero_start = false;
  std::vector<std::string> tests;  // contrast kinds
  std::string out;
};

struct EndpointOptions {
  DataOptions data;
  std::string view = "last-planned";
  std::string strategy = "locf";
  bool mixed = true;
  std::string formula = "outcome ~ trt*visit";
  int Q = 20;
  std::string out;
};

struct ScanOptions {
  DataOptions data;
  std::string formula = "outcome ~ trt*visit";
  std::vector<int> q_list{2, 3, 5, 10, 20, 50};
  std::vector<std::string> modes{"adaptive", "nonadaptive"};
  std::vector<std::string> optimizers{"quasi-newton", "newton-raphson"};
  std::string param;
  bool zero_start = false;
  std::string out;
};

struct SimulateOptions {
  std::string spec;
  std::size_t replicates = 1;
  std::vector<std::string> estimators{"oracle", "gee-observed", "wgee"};
  std::optional<std::uint64_t> seed;
  std::string formula = "outcome ~ trt*visit";
  std::string corr = "exch";
  std::string weights = "occasion";
  int Q = 20;
  std::string out;
  std::string data_out;  // CSV of the first replicate's dataset
};

/// Each command validates its options, writes its table to `out` (and to the
/// --out file when given), diagnostics to `err`, and returns an exit code.
int cmd_describe(const DescribeOptions& options, std::ostream& out, std::ostream& err);
int cmd_fit(const FitOptions& options, std::ostream& out, std::ostream& err);
int cmd_endpoint(const EndpointOptions& options, std::ostream& out, std::ostream& err);
int cmd_scan(const ScanOptions& options, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateOptions& options, std::ostream& out, std::ostream& err);

/// Parses argv (subcommands describe, fit, endpoint, scan, simulate) and
/// dispatches.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Report-style label for a design column: "visit[4]" -> "Int. 4",
/// "visit[4]:trt[B]" -> "Trt. 4" (with the arm when several arms exist).
[[nodiscard]] std::string effect_label(const std::string& column, std::size_t n_arms);

}  // namespace longit::cli
