#pragma once

#include "ps2f/core/types.hpp"
#include "ps2f/sim/commands.hpp"

namespace ps2f {

/// Double integrator A = [[1,1],[0,1]], B = I₂, Q = 10I₂, R = I₂, N = 5,
/// M = 2, a = 0.95, X = [−2,2]², U = [−1,1]², LQR terminal ellipsoid with
/// γ = 7.28.
Ps2fConfig case1_config();
/// (2, −2).
Vector case1_initial_state();
inline constexpr int kCase1Steps = 100;
inline constexpr double kCase1Gamma = 7.28;

/// Case 1 with N = 5, Q = ρ·I₂ and an LQR terminal ellipsoid. The level is
/// 7.28 for ρ = 10 and max_ellipsoid_level otherwise; M = N.
Ps2fConfig case2_config(double rho = 10.0, int N = 5);

/// Unicycle with Ts = 0.2, Q = 10I₃, R = I₂, N = M = 5, V_f = 0, X_f = {0},
/// X = [−0.5,0.5]² × [−π/3,π/3], U = [−10,10]².
Ps2fConfig case3_config();
Vector case3_goal();
/// a(k) = 100 for k < Ks, 0.5 afterwards; M = 5.
ModeSchedule case3_schedule(int Ks);
/// Discounted goal command (H = 5, γ = 0.9, bounds U) toward `target`.
ExternalCommandSource case3_command(const Vector& target);
inline constexpr int kCase3Steps = 150;
inline constexpr int kCase3SwitchIndex = 30;
inline constexpr double kCase3ExploreA = 100.0;
inline constexpr double kCase3ExploitA = 0.5;

}  // namespace ps2f
