//! Datasets, training, BER sweeps, parameter studies and CSV exports.

mod dataset;
mod export;
mod report;
mod study;
mod sweep;
mod train;

pub use dataset::{generate_dataset, Dataset};
pub use export::{basis_rows, export_basis, export_signals, read_basis, BasisRow};
pub use report::{baseline_rows, curve_rows, format_float, write_ber_csv, write_history_csv, BerRow};
pub use study::{study, StudyBase, StudyCurve, StudyKind};
pub use sweep::{ber_sweep, config_hash, BerCurve, BerPoint, SweepConfig};
pub use train::{train, EpochRecord, TrainConfig, TrainHistory, Trained};
