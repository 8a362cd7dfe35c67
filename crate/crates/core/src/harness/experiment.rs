use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::channel::realize_channels;
use crate::constellation::{build_alphabet, enumerate_vectors, ConstellationTable};
use crate::error::Result;
use crate::metrics::{gaussian_capacity, rate_report, RateReport};
use crate::pgm::{random_init, run_pgm, Method, OptimizerTrace};
use crate::rng::{substream, tag};
use crate::sca::run_sca;

use super::config::ExperimentConfig;
use super::records::{RealizationId, RunRecord, SummaryRecord};

/// One optimizer run on one realization.
#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub realization: usize,
    pub method: Method,
    pub records: Vec<RunRecord>,
    pub summary: SummaryRecord,
    /// Optimizer time only; not written to CSV so output stays reproducible.
    pub wall_time: Duration,
}

/// Everything one experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub run_id: String,
    /// Per-realization rows followed by the mean curve, grouped by method.
    pub records: Vec<RunRecord>,
    /// Per-realization final rows followed by the mean row, grouped by method.
    pub summaries: Vec<SummaryRecord>,
    pub outcomes: Vec<ArmOutcome>,
}

impl ExperimentOutput {
    pub fn mean_summary(&self, method: Method) -> Option<&SummaryRecord> {
        self.summaries.iter().find(|s| s.method == method && s.realization == RealizationId::Mean)
    }

    pub fn realization_summaries(&self, method: Method) -> impl Iterator<Item = &SummaryRecord> {
        self.summaries
            .iter()
            .filter(move |s| s.method == method && s.realization != RealizationId::Mean)
    }

    pub fn total_wall_time(&self) -> Duration {
        self.outcomes.iter().map(|o| o.wall_time).sum()
    }
}

pub fn constellation_for(config: &ExperimentConfig) -> Result<ConstellationTable> {
    enumerate_vectors(
        &build_alphabet(config.modulation.order, config.modulation.kind)?,
        config.geometry.n_rx,
    )
}

/// Runs every configured method on `n_realizations` channel draws.
///
/// Realization `r` takes its channels, initial point and MI noise from
/// substreams of `config.seed` indexed by `r` (and the iteration for MI), so
/// all methods and baselines see identical randomness and the output does
/// not depend on scheduling.
pub fn run_experiment(config: &ExperimentConfig, run_id: &str) -> Result<ExperimentOutput> {
    config.validate()?;
    let table = constellation_for(config)?;
    let methods = config.method.methods();

    let per_realization: Vec<Vec<ArmOutcome>> = (0..config.n_realizations)
        .into_par_iter()
        .map(|r| run_realization(config, &table, r, &methods, run_id))
        .collect::<Result<_>>()?;
    let mut outcomes: Vec<ArmOutcome> = per_realization.into_iter().flatten().collect();
    outcomes.sort_by_key(|o| (methods.iter().position(|m| *m == o.method), o.realization));

    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for &method in &methods {
        let arms: Vec<&ArmOutcome> = outcomes.iter().filter(|o| o.method == method).collect();
        for arm in &arms {
            records.extend(arm.records.iter().cloned());
            summaries.push(arm.summary.clone());
        }
        records.extend(mean_curve(run_id, method, &arms));
        summaries.push(mean_summary(run_id, method, &arms));
    }
    Ok(ExperimentOutput { run_id: run_id.to_string(), records, summaries, outcomes })
}

/// Same protocol with the RIS removed: `H = √β_DIR⁻¹ H_D` and only the
/// precoder is optimized. With a blocked direct link every rate is zero.
pub fn run_no_ris_baseline(config: &ExperimentConfig, run_id: &str) -> Result<ExperimentOutput> {
    let mut config = config.clone();
    config.ris_enabled = false;
    run_experiment(&config, run_id)
}

fn run_realization(
    config: &ExperimentConfig,
    table: &ConstellationTable,
    r: usize,
    methods: &[Method],
    run_id: &str,
) -> Result<Vec<ArmOutcome>> {
    let g = &config.geometry;
    let seed = config.seed;
    let sigma2 = config.noise_power();
    let mut channels = realize_channels(g, &mut substream(seed, &[tag::CHANNEL, r as u64]), config.direct_blocked)?;
    if !config.ris_enabled {
        channels = channels.without_ris();
    }
    let init = random_init(g.n_ris(), g.n_tx, g.n_rx, &mut substream(seed, &[tag::INIT, r as u64]));

    methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let trace: OptimizerTrace = match method {
                Method::Pgm => run_pgm(&init, &channels, table, sigma2, &config.pgm)?,
                Method::Sca => run_sca(&init, &channels, table, sigma2, &config.sca)?,
            };
            let wall_time = start.elapsed();

            let records = trace
                .records
                .iter()
                .map(|rec| {
                    let mut rng = substream(seed, &[tag::MI_TRACE, r as u64, rec.iteration as u64]);
                    Ok(RunRecord {
                        run_id: run_id.to_string(),
                        realization: RealizationId::Index(r),
                        method,
                        iteration: rec.iteration,
                        rates: rate_report(&rec.point, &channels, table, sigma2, config.n_noise, &mut rng)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            let point = trace.final_point();
            let mut rng = substream(seed, &[tag::MI_FINAL, r as u64]);
            let summary = SummaryRecord {
                run_id: run_id.to_string(),
                realization: RealizationId::Index(r),
                method,
                iterations: trace.records.len(),
                termination: trace.termination.to_string(),
                rates: rate_report(point, &channels, table, sigma2, config.final_noise, &mut rng)?,
                gaussian_reference: gaussian_capacity(&point.theta, &channels, sigma2)?,
                unit_modulus_residual: point.unit_modulus_residual(),
                power_residual: point.power_residual(),
                theta_gradient_evals: trace.theta_gradient_evals,
            };
            Ok(ArmOutcome { realization: r, method, records, summary, wall_time })
        })
        .collect()
}

fn mean_rates<'a>(reports: impl Iterator<Item = &'a RateReport>) -> RateReport {
    let reports: Vec<&RateReport> = reports.collect();
    let n = reports.len() as f64;
    let mean = |f: fn(&RateReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
    RateReport {
        r0: mean(|r| r.r0),
        mi: mean(|r| r.mi),
        // Standard error of the mean of independent estimates.
        mi_stderr: reports.iter().map(|r| r.mi_stderr * r.mi_stderr).sum::<f64>().sqrt() / n,
        mi_lower_bound: mean(|r| r.mi_lower_bound),
        gaussian_rate: mean(|r| r.gaussian_rate),
        f_log: mean(|r| r.f_log),
    }
}

/// Per-iteration means; a run that stopped early contributes its last
/// iterate to every later iteration.
fn mean_curve(run_id: &str, method: Method, arms: &[&ArmOutcome]) -> Vec<RunRecord> {
    let len = arms.iter().map(|a| a.records.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let rates = mean_rates(arms.iter().filter_map(|a| a.records.get(k).or(a.records.last()).map(|r| &r.rates)));
            RunRecord { run_id: run_id.to_string(), realization: RealizationId::Mean, method, iteration: k + 1, rates }
        })
        .collect()
}

/// Means of the final rows. Integer columns hold maxima and the
/// termination column counts each reason.
fn mean_summary(run_id: &str, method: Method, arms: &[&ArmOutcome]) -> SummaryRecord {
    let n = arms.len() as f64;
    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for a in arms {
        *reasons.entry(a.summary.termination.as_str()).or_default() += 1;
    }
    let termination = reasons.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";");
    let mean = |f: fn(&SummaryRecord) -> f64| arms.iter().map(|a| f(&a.summary)).sum::<f64>() / n;
    SummaryRecord {
        run_id: run_id.to_string(),
        realization: RealizationId::Mean,
        method,
        iterations: arms.iter().map(|a| a.summary.iterations).max().unwrap_or(0),
        termination,
        rates: mean_rates(arms.iter().map(|a| &a.summary.rates)),
        gaussian_reference: mean(|s| s.gaussian_reference),
        unit_modulus_residual: mean(|s| s.unit_modulus_residual),
        power_residual: mean(|s| s.power_residual),
        theta_gradient_evals: arms.iter().map(|a| a.summary.theta_gradient_evals).max().unwrap_or(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::MethodChoice;
    use crate::harness::records::write_records;

    /// Default geometry shrunk to a 3×3 RIS with cheap MI budgets.
    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.geometry.ris_rows = 3;
        c.geometry.ris_cols = 3;
        c.geometry.n_tx = 4;
        c.n_realizations = 3;
        c.n_noise = 20;
        c.final_noise = 50;
        c.pgm.max_iters = 15;
        c.sca.outer_max_iters = 10;
        c
    }

    #[test]
    fn one_iteration_gives_one_row_per_method() {
        let mut c = small_config();
        c.n_realizations = 1;
        c.pgm.max_iters = 1;
        c.sca.outer_max_iters = 1;
        let out = run_experiment(&c, "t").unwrap();
        for m in [Method::Pgm, Method::Sca] {
            let rows: Vec<_> =
                out.records.iter().filter(|r| r.method == m && r.realization == RealizationId::Index(0)).collect();
            assert_eq!(rows.len(), 1);
            assert_eq!(rows[0].iteration, 1);
        }
    }

    #[test]
    fn deterministic_output() {
        let c = small_config();
        let render = || {
            let mut buf = Vec::new();
            write_records(&run_experiment(&c, "t").unwrap().records, &mut buf).unwrap();
            buf
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn iterations_contiguous_and_means_exact() {
        let out = run_experiment(&small_config(), "t").unwrap();
        for m in [Method::Pgm, Method::Sca] {
            for r in 0..3 {
                let its: Vec<usize> = out
                    .records
                    .iter()
                    .filter(|x| x.method == m && x.realization == RealizationId::Index(r))
                    .map(|x| x.iteration)
                    .collect();
                assert_eq!(its, (1..=its.len()).collect::<Vec<_>>());
            }
            let mean = out.mean_summary(m).unwrap();
            let rows: Vec<_> = out.realization_summaries(m).collect();
            assert_eq!(rows.len(), 3);
            let r0: f64 = rows.iter().map(|s| s.rates.r0).sum::<f64>() / 3.0;
            assert!((mean.rates.r0 - r0).abs() < 1e-12);
        }
    }

    #[test]
    fn methods_share_realizations() {
        let mut c = small_config();
        c.method = MethodChoice::Pgm;
        let pgm = run_experiment(&c, "t").unwrap();
        c.method = MethodChoice::Both;
        let both = run_experiment(&c, "t").unwrap();
        let a: Vec<_> = pgm.realization_summaries(Method::Pgm).collect();
        let b: Vec<_> = both.realization_summaries(Method::Pgm).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn blocked_baseline_is_zero() {
        let mut c = small_config();
        c.direct_blocked = true;
        let out = run_no_ris_baseline(&c, "noris").unwrap();
        for s in &out.summaries {
            assert_eq!(s.theta_gradient_evals, 0);
            assert!(s.rates.r0.abs() < 1e-12);
            assert!(s.rates.mi.abs() <= 3.0 * s.rates.mi_stderr + 1e-12);
        }
    }
}
