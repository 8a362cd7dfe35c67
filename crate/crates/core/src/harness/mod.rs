//! Experiment configuration, seeded multi-realization runs, baselines,
//! figure reproduction, gradient checking and CSV output.

pub mod config;
pub mod experiment;
pub mod figures;
pub mod gradcheck;
pub mod records;

pub use config::{ExperimentConfig, MethodChoice, ModulationConfig};
pub use experiment::{run_experiment, run_no_ris_baseline, ArmOutcome, ExperimentOutput};
pub use figures::{reproduce_fig2, reproduce_fig3, FigureOutput};
pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckReport};
pub use records::{emit_csv, emit_summary_csv, RealizationId, RunRecord, SummaryRecord};
