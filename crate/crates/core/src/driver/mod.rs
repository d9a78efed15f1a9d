//! The TDSR fixed-point iteration: pseudo initial conditions, sub-Duhamel
//! sweeps with renormalization, and multi-blocking.

mod block;
mod engine;
mod multiblock;
mod split;

pub use block::{
    compose, renormalize, tdsr_solve_block, BlockSetup, BlockSolution, Dissipation, Enforcement, IterationRecord,
    Kernel, Model, Renormalized, SolveOptions, Targets,
};
pub use engine::{DuhamelEngine, LinearPart};
pub use multiblock::{multiblock_run, BlockSummary, GuessPolicy, RunOutcome, RunSpec, Storage};
pub use split::{
    explicit_split, generate_initial_guess, generate_initial_guess_stream, mollifier, split_initial_condition,
    PseudoICs, RandomGuess, SplitStrategy, SPLIT_TOL,
};
