#pragma once

// Subcommands of the ilms tool. Each writes its CSV files (and the resolved
// configuration) into `out_dir`, reports a short summary on `log`, and throws
// the library's error types; `exit_code_for` maps those onto process codes.

#include "ilms/config.hpp"
#include "ilms/engine.hpp"
#include "ilms/theory.hpp"

#include <exception>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace ilms::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitInstability = 3;
inline constexpr int kExitDivergence = 4;

[[nodiscard]] std::string_view version() noexcept;

/// Process status for an exception escaping a subcommand.
[[nodiscard]] int exit_code_for(const std::exception& e) noexcept;

/// Builds CSV text; doubles are printed with %.12g so output is byte-stable.
class CsvWriter {
public:
    CsvWriter(const config::LoadedConfig& cfg, std::string_view command);

    void comment(std::string_view text);
    void header(std::initializer_list<std::string_view> columns);
    CsvWriter& cell(double value);
    CsvWriter& cell(long long value);
    CsvWriter& cell(int value) { return cell(static_cast<long long>(value)); }
    CsvWriter& cell(std::string_view text);
    void end_row();

    [[nodiscard]] const std::string& text() const noexcept { return buf_; }
    /// Writes through a temporary file and renames, so readers never see a partial file.
    void save(const std::filesystem::path& path) const;

private:
    std::string buf_;
    bool row_open_ = false;
};

[[nodiscard]] std::string format_number(double value);

struct SimulationResult {
    engine::MetricSeries series;
    engine::SteadyStateEstimate steady;
};

struct TheoryResult {
    theory::StabilityReport stability;
    theory::SteadyStatePrediction prediction;
};

struct CompareRow {
    int node = 0;
    double sim[3] = {0, 0, 0};     ///< eta, zeta, xi in dB
    double theory[3] = {0, 0, 0};
    double gap[3] = {0, 0, 0};     ///< sim - theory
};

struct CompareResult {
    std::vector<CompareRow> rows;
    double max_abs_gap = 0.0;
    int max_node = 0;
    std::string max_metric;
};

SimulationResult cmd_simulate(const config::LoadedConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Writes stability.csv always; prediction.csv only when the prediction exists
/// (a stale one is removed), then rethrows the instability.
TheoryResult cmd_theory(const config::LoadedConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Nothing is written unless both engines succeed.
CompareResult cmd_compare(const config::LoadedConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

struct SweepRow {
    double value = 0.0;
    int node = 0;
    double eta_db = 0.0, zeta_db = 0.0, xi_db = 0.0;
    std::string source;  ///< theory | simulation | unstable | diverged
};

std::vector<SweepRow> cmd_sweep(const config::LoadedConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Every node's step size replaced by `mu`.
[[nodiscard]] model::NetworkConfig with_step_size(const model::NetworkConfig& net, double mu);
/// Every link replaced by the mean-one law with second moment `s`.
[[nodiscard]] model::NetworkConfig with_second_moment(const model::NetworkConfig& net, double s);

/// Parses argv and dispatches; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ilms::cli
