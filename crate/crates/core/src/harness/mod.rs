//! Two-level Monte Carlo experiments: inner replications produce Wald p-value
//! samples, outer replications test those samples for uniformity.

mod config;
mod grid;
mod runner;
mod summary;

pub use config::{DesignChoice, ExperimentConfig, NonconvergencePolicy};
pub use grid::{build_grid, dimension_for, explicit_grid, grid_point, GridPoint};
pub use runner::{
    experiment_grid, grid_file, load_results, read_rows, run_experiment, run_experiment_with,
    run_inner_batch, run_outer_rep, ConvergenceCounts, InnerBatch, Manifest, OuterResultRow,
    RunControl, RunOutcome, CSV_HEADER, MANIFEST_FILE, VERSION,
};
pub use summary::{
    five_number, quantile_sorted, summarize, summarize_rows, write_summary_csv, SummaryRow,
    UniformityTest,
};
