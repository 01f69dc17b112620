#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfamp {

using cplx = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Reference impedance of the source and of every S-parameter port.
inline constexpr double kZ0 = 50.0;

inline double db10(double x) { return 10.0 * std::log10(x); }
inline double db20(double x) { return 20.0 * std::log10(x); }
inline double from_db10(double d) { return std::pow(10.0, d / 10.0); }

inline double ghz_to_omega(double ghz) { return kTwoPi * ghz * 1e9; }
inline double omega_to_ghz(double w) { return w / (kTwoPi * 1e9); }

/// n log-spaced points on [lo, hi], both ends included.
std::vector<double> log_grid(double lo, double hi, int n);

/// splitmix64 step, used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// FNV-1a over the raw bytes of a double sequence.
std::uint64_t hash_doubles(const std::vector<double>& v);
std::string hex64(std::uint64_t h);

// Error hierarchy. Every failure the library reports is one of these.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define RFAMP_DECLARE_ERROR(Name)                 \
    class Name : public Error {                   \
    public:                                       \
        using Error::Error;                       \
    }

RFAMP_DECLARE_ERROR(InfeasibleBudget);
RFAMP_DECLARE_ERROR(DegenerateNetwork);
RFAMP_DECLARE_ERROR(GridMismatch);
RFAMP_DECLARE_ERROR(Unrealizable);
RFAMP_DECLARE_ERROR(UnknownDevice);
RFAMP_DECLARE_ERROR(SingularNetwork);
RFAMP_DECLARE_ERROR(Unmatchable);
RFAMP_DECLARE_ERROR(NoFeasibleSolution);
RFAMP_DECLARE_ERROR(CalibrationFailed);
RFAMP_DECLARE_ERROR(BudgetExhausted);
RFAMP_DECLARE_ERROR(NoExperience);
RFAMP_DECLARE_ERROR(SchemaError);
RFAMP_DECLARE_ERROR(StorageError);
RFAMP_DECLARE_ERROR(PolicyError);

#undef RFAMP_DECLARE_ERROR

} // namespace rfamp
