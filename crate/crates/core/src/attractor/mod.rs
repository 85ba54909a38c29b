//! Absorbing sets and pullback attractors for the sampled equation.
//!
//! [`BoundConstants`] gathers every constant; [`bounds`] evaluates the
//! short-time and a-priori estimates; [`ergodic`] and [`gap`] decide whether
//! an attractor is expected; [`absorb`] and [`pullback`] measure it.

pub mod absorb;
pub mod bounds;
pub mod calibrate;
pub mod constants;
pub mod ergodic;
pub mod gap;
pub mod pullback;

pub use absorb::{absorbing_radius, temperedness_proxy, AbsorbOptions, AbsorbReport};
pub use bounds::{apriori_bound, chained_bound, check_solution_bound, eval_h, eval_p_constants, BoundCheck, HValues, PConstants};
pub use calibrate::{calibrate, collect_training, validate, Calibration, SampleSpec, Validation};
pub use constants::{poly_p, BoundConstants, ConstantInputs, Provenance};
pub use ergodic::{birkhoff_check, ensemble_average, ergodic_moments, time_average, ErgodicReport};
pub use gap::{check_gap_condition, check_gap_condition_beta, GapCheck};
pub use pullback::{diameter, hausdorff_semidistance, pullback_estimate, write_report_csv, PullbackRow, PullbackRun};
