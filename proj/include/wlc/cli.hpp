#pragma once

// The `wlc` command line: subcommands loops gen, energy, scan, density, fit
// and bounds. Exit codes: 0 success, 1 numeric or I/O failure, 2 usage.
// Worker threads come from $WLC_THREADS (default: all hardware threads).

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "wlc/analysis.hpp"
#include "wlc/engine.hpp"

namespace wlc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumeric = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line with `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Header of energy and scan tables.
inline constexpr const char* kEnergyHeader =
    "a_over_R,E,E_err,E0_pfa,E_norm,E_norm_err,n_L,N,m,runtime_s,status";
/// Header of density tables; lengths in L0, density in L0^-4.
inline constexpr const char* kDensityHeader = "rho_L0,z_L0,density_per_L0^4";

struct EnergyRow {
  double a_over_R = 0.0;
  double E = 0.0, E_err = 0.0, E0_pfa = 0.0, E_norm = 0.0, E_norm_err = 0.0;
  std::uint64_t n_L = 0, N = 0;
  double m = 0.0, runtime_s = 0.0;
  std::string status = "ok";
};

/// Formats a double with 17 significant digits and '.' as decimal point.
std::string format_double(double v);
std::string format_row(const EnergyRow& row);
EnergyRow make_row(const EnergyResult& e, double e0_pfa);

std::vector<EnergyRow> read_energy_csv(std::istream& in);
std::vector<EnergyRow> read_energy_csv(const std::filesystem::path& path);
/// Curve of (a_over_R, E_norm, E_norm_err) from rows whose status is "ok".
Curve curve_from_rows(const std::vector<EnergyRow>& rows);

}  // namespace wlc::cli
