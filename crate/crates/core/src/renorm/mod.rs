//! Renormalization factors: functionals, algebraic solves for conservative
//! laws, and the Crank–Nicolson path for the dissipation law.

mod dissipative;
mod functional;
mod solve;

pub use dissipative::{dissipative_renorm, DissipationParams, DissipativeState};
pub use functional::{evaluate_functional, nls_momentum, Functional, LawPoly};
pub use solve::{
    real_polynomial_roots, solve_conservative, solve_multi_law_newton, solve_single_law,
    solve_two_law_mass_momentum, RenormDiagnostics, RenormFactors, NEWTON_MAX_ITER, NEWTON_TOL,
    SELECTION_TOL,
};
