#pragma once

// Central numeric policy: every tolerance used by the library lives here so
// tests and callers can reason about one set of constants.

namespace posnet::policy {

// Relative tolerance for "is this weight vector a probability distribution".
inline constexpr double kWeightSumTol = 1e-12;

// Entrywise tolerance when deciding Metzler / nonnegative structure.
inline constexpr double kSignTol = 0.0;

// Eigenvalue iterations are certified to this absolute-or-relative width.
inline constexpr double kEigTol = 1e-9;

// Strict feasibility margin required of a certificate: the scalar test value
// 2*rho*delta/a + 6*rho*sigma^2/a^2 must sit below 3 by at least this much.
inline constexpr double kCertMargin = 1e-9;

// Consistency tolerance between a stored rho and log(n*N/eps).
inline constexpr double kRhoConsistencyTol = 1e-9;

// Smallest reportable unreliability; smaller values clamp here with a flag.
inline constexpr double kEpsFloor = 1e-300;

// Default cap on enumerated joint support sizes (A1 -> A2 conversion,
// per-row variance assembly, brute-force stability probability).
inline constexpr unsigned long long kEnumCap = 1000000ull;

// Geometric-program solver defaults.
inline constexpr double kGpTol = 1e-7;        // duality-gap surrogate target
inline constexpr int kGpMaxNewton = 500;      // total damped Newton steps
inline constexpr double kGpFeasTol = 1e-8;    // posterior residual checks
inline constexpr double kGpUnboundedDrop = 27.6; // ~log(1e12): objective drop
                                                 // treated as unbounded below

// Design-space box: distribution parameters r and auxiliary GP variables.
inline constexpr double kDesignRLo = 1e-4;
inline constexpr double kDesignRHi = 1.0;
inline constexpr double kDesignAuxLo = 1e-6;
inline constexpr double kDesignAuxHi = 1e6;

}  // namespace posnet::policy
