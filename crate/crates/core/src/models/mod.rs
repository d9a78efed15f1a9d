//! Concrete equations and the scenario catalog built on them.

mod allen_cahn;
mod kdv;
mod nls;

pub use allen_cahn::{ac_travelling_exact, AcBoundary, AllenCahn};
pub use kdv::{kdv_soliton_exact, local_conservation_errors, Kdv};
pub use nls::{townes_profile, townes_residual, Nls, TownesOptions, TownesProfile};
pub mod scenario;

pub use scenario::{
    catalog, compare, lookup, parse_number, run_reference, run_scenario, sweep, BuildContext, Comparison, FieldData,
    GridLayout, ReferenceResult, ScenarioInfo, ScenarioKind, ScenarioOutcome, ScenarioParams, ScenarioReport,
    SweepPoint, SweepReport,
};
