use std::path::{Path, PathBuf};

use crate::constellation::ModulationKind;
use crate::error::Result;
use crate::pgm::Method;

use super::config::{ExperimentConfig, MethodChoice, ModulationConfig};
use super::experiment::{run_experiment, run_no_ris_baseline, ExperimentOutput};
use super::records::{emit_csv, emit_summary_csv, RunRecord, SummaryRecord};

/// Experiments behind one figure, in a fixed order.
#[derive(Debug, Clone)]
pub struct FigureOutput {
    pub name: String,
    pub experiments: Vec<ExperimentOutput>,
}

impl FigureOutput {
    pub fn experiment(&self, run_id: &str) -> Option<&ExperimentOutput> {
        self.experiments.iter().find(|e| e.run_id == run_id)
    }

    pub fn mean(&self, run_id: &str, method: Method) -> Option<&SummaryRecord> {
        self.experiment(run_id)?.mean_summary(method)
    }

    pub fn records(&self) -> Vec<RunRecord> {
        self.experiments.iter().flat_map(|e| e.records.iter().cloned()).collect()
    }

    pub fn summaries(&self) -> Vec<SummaryRecord> {
        self.experiments.iter().flat_map(|e| e.summaries.iter().cloned()).collect()
    }

    /// Writes `<name>_iterations.csv` and `<name>_summary.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let iterations = dir.join(format!("{}_iterations.csv", self.name));
        let summary = dir.join(format!("{}_summary.csv", self.name));
        emit_csv(&self.records(), &iterations)?;
        emit_summary_csv(&self.summaries(), &summary)?;
        Ok((iterations, summary))
    }
}

/// Cutoff rate and MI of both optimizers, with and without the RIS, for
/// the direct link present (`fig2a`) and blocked (`fig2b`). Uses 4-QAM;
/// every other setting comes from `base`.
pub fn reproduce_fig2(base: &ExperimentConfig, seed: u64) -> Result<FigureOutput> {
    let mut config = base.clone();
    config.seed = seed;
    config.method = MethodChoice::Both;
    config.ris_enabled = true;
    config.modulation = ModulationConfig { kind: ModulationKind::Qam, order: 4 };

    let mut experiments = Vec::new();
    for (panel, blocked) in [("fig2a", false), ("fig2b", true)] {
        config.direct_blocked = blocked;
        experiments.push(run_experiment(&config, panel)?);
        experiments.push(run_no_ris_baseline(&config, &format!("{panel}-noris"))?);
    }
    Ok(FigureOutput { name: "fig2".into(), experiments })
}

pub const FIG3_ORDERS: [usize; 2] = [4, 16];

/// Per-vector draw count that keeps `draws · reference_vectors` samples in
/// total when the alphabet grows to `n_vectors` transmit vectors.
pub fn equal_total_draws(draws: usize, reference_vectors: usize, n_vectors: usize) -> usize {
    (draws * reference_vectors).div_ceil(n_vectors).max(1)
}

/// MI of the cutoff-rate-optimized design (PGM) for 4- and 16-QAM, direct
/// link present (`fig3a-M*`) and blocked (`fig3b-M*`), with the Gaussian
/// log-det rate at the same point and the water-filling reference.
///
/// The MI budgets of `base` apply to 4-QAM; 16-QAM keeps the same total
/// number of noise samples per estimate.
pub fn reproduce_fig3(base: &ExperimentConfig, seed: u64) -> Result<FigureOutput> {
    let mut config = base.clone();
    config.seed = seed;
    config.method = MethodChoice::Pgm;
    config.ris_enabled = true;
    let n_r = config.geometry.n_rx as u32;
    let reference = FIG3_ORDERS[0].pow(n_r);

    let mut experiments = Vec::new();
    for (panel, blocked) in [("fig3a", false), ("fig3b", true)] {
        for order in FIG3_ORDERS {
            let mut c = config.clone();
            c.direct_blocked = blocked;
            c.modulation = ModulationConfig { kind: ModulationKind::Qam, order };
            let n_vectors = order.pow(n_r);
            c.n_noise = equal_total_draws(config.n_noise, reference, n_vectors);
            c.final_noise = equal_total_draws(config.final_noise, reference, n_vectors);
            experiments.push(run_experiment(&c, &format!("{panel}-M{order}"))?);
        }
    }
    Ok(FigureOutput { name: "fig3".into(), experiments })
}
