//! Joint cache refresh, age-of-information and recommendation scheduling.

pub mod colgen;
pub mod experiment;
pub mod gen;
pub mod greedy;
pub mod io;
pub mod lda;
pub mod model;
pub mod oracle;
pub mod simplex;
pub mod sp1;

pub use experiment::{
    results_csv, run_experiment, Algorithm, LdaOptions, ResultRow, SweepParam, SweepSpec,
};
pub use gen::{generate_instance, GenConfig, GenError};
pub use io::{read_instance, read_solution, write_instance, write_solution, IoError, SolutionDoc};
pub use model::*;
