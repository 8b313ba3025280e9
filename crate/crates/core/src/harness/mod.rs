//! Benchmark harness: synthetic generators, dataset IO, metrics, the
//! experiment grid and the verification battery behind the `oracle`
//! subcommand.

pub mod grid;
pub mod io;
pub mod metrics;
pub mod oracle;
pub mod synth;

pub use grid::{compare_dataset, query_grid, run_grid, run_method, write_outputs, GridReport};
pub use io::{load_dataset, parse_dataset, write_dataset, GridConfig};
pub use metrics::{mae, rmse, ExperimentResult, Method};
pub use synth::{descending_grid, generate_dataset, synth_function, FunctionId, SyntheticSpec};
