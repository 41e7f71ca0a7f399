//! NMSE metric, the least-squares baseline, SNR-sweep benchmarks and the
//! model-capacity sweep.

mod bench;
mod nmse;
mod sweep;

pub use bench::{run_benchmark, test_set, BenchConfig, BenchRow, BenchmarkTable, Estimator};
pub use nmse::{
    ls_baseline, ls_nmse, ls_nmse_closed_form, mean_db, model_nmse, nmse, nmse_slices, nmse_with, to_db,
    NmseDenominator, NMSE_FLOOR_DB,
};
pub use sweep::{capacity_sweep, sweep_csv, SweepConfig, SweepRow};
