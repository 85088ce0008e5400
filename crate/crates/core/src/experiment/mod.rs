//! Experiment specs, grid sweeps over seeds, result tables and plots.

mod plot;
mod runner;
mod spec;
mod table;

pub use plot::{plot, plot_dir, PlotKind};
pub use runner::{
    evaluate_test, propensities_for, run_cached, run_experiment, test_histories, train_and_evaluate, RunOutcome,
    CHECKPOINT_FILE, METRICS_FILE, REPORT_FILE, STATE_FILE,
};
pub use spec::{
    data_root, DatasetSource, DatasetSpec, ExperimentSpec, ExposureSpec, RunConfig, SweepAxis, SweepSpec, C_AXIS,
    DATA_ROOT_ENV,
};
pub use table::{mean_exposure, Cell, ResultRow, ResultTable, RESULTS_JSON, RESULTS_TSV};
