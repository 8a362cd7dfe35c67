use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ris_cutoff::constellation::ModulationKind;
use ris_cutoff::harness::config::{grid_points, parse_grid_axis};
use ris_cutoff::harness::{
    emit_csv, emit_summary_csv, gradcheck, reproduce_fig2, reproduce_fig3, run_experiment, run_no_ris_baseline,
    ExperimentConfig, ExperimentOutput, FigureOutput, GradcheckConfig, MethodChoice, RealizationId,
};
use ris_cutoff::Result;

#[derive(Parser)]
#[command(name = "ris-cutoff", version, about = "Cutoff-rate optimization of RIS-aided MIMO links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one configuration (one realization unless --realizations is given).
    Optimize(RunArgs),
    /// Run the experiment for every point of a parameter grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Grid axis `key=v1,v2,...`; repeat for a Cartesian product.
        #[arg(long = "grid", required = true)]
        grid: Vec<String>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Cutoff rate and MI per iteration, direct link present and blocked.
    #[command(name = "reproduce-fig2")]
    ReproduceFig2(RunArgs),
    /// MI of the cutoff-rate design for 4- and 16-QAM against the Gaussian rate.
    #[command(name = "reproduce-fig3")]
    ReproduceFig3(RunArgs),
    /// Optimize the precoder alone with the RIS removed.
    #[command(name = "baseline-noris")]
    BaselineNoRis(RunArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV files.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    realizations: Option<usize>,
    /// pgm, sca or both.
    #[arg(long)]
    method: Option<MethodChoice>,
    #[arg(long = "noise-db", allow_hyphen_values = true)]
    noise_db: Option<f64>,
    #[arg(long = "direct-blocked")]
    direct_blocked: Option<bool>,
    #[arg(long = "modulation-order")]
    modulation_order: Option<usize>,
    #[arg(long = "modulation-kind")]
    modulation_kind: Option<ModulationKind>,
    /// Noise draws per transmit vector for MI at each iterate.
    #[arg(long = "n-noise")]
    n_noise: Option<usize>,
    /// Noise draws per transmit vector for MI at the final point.
    #[arg(long = "final-noise")]
    final_noise: Option<usize>,
    /// PGM initial step.
    #[arg(long = "l0", alias = "L0")]
    l0: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// PGM iteration cap.
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// PGM relative-decrease tolerance.
    #[arg(long = "rel-tol")]
    rel_tol: Option<f64>,
    #[arg(long = "sca-outer-iters")]
    sca_outer_iters: Option<usize>,
    #[arg(long = "sca-inner-iters")]
    sca_inner_iters: Option<usize>,
    /// SCA inner gradient-mapping tolerance.
    #[arg(long = "sca-tol")]
    sca_tol: Option<f64>,
    /// Any config key as `key=value` (dotted for sections, e.g. `geometry.rician_k=2`).
    #[arg(long = "set")]
    set: Vec<String>,
}

impl RunArgs {
    fn build_config(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! apply {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        apply!(self.seed => c.seed);
        apply!(self.realizations => c.n_realizations);
        apply!(self.method => c.method);
        apply!(self.noise_db => c.noise_power_db);
        apply!(self.direct_blocked => c.direct_blocked);
        apply!(self.modulation_order => c.modulation.order);
        apply!(self.modulation_kind => c.modulation.kind);
        apply!(self.n_noise => c.n_noise);
        apply!(self.final_noise => c.final_noise);
        apply!(self.l0 => c.pgm.l0);
        apply!(self.delta => c.pgm.delta);
        apply!(self.rho => c.pgm.rho);
        apply!(self.max_iters => c.pgm.max_iters);
        apply!(self.rel_tol => c.pgm.rel_tol);
        apply!(self.sca_outer_iters => c.sca.outer_max_iters);
        apply!(self.sca_inner_iters => c.sca.inner_max_iters);
        apply!(self.sca_tol => c.sca.inner_tol);
        for kv in &self.set {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| ris_cutoff::Error::Config(format!("--set expects key=value, got `{kv}`")))?;
            c = c.with_override(key.trim(), value.trim())?;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long = "n-tx", default_value_t = 4)]
    n_tx: usize,
    #[arg(long = "n-rx", default_value_t = 2)]
    n_rx: usize,
    #[arg(long = "n-ris", default_value_t = 8)]
    n_ris: usize,
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Fixed linear noise power; by default chosen per instance.
    #[arg(long = "noise-power")]
    noise_power: Option<f64>,
    #[arg(long = "fd-step", default_value_t = 1e-6)]
    fd_step: f64,
}

fn print_experiment(out: &ExperimentOutput) {
    for s in out.summaries.iter().filter(|s| s.realization == RealizationId::Mean) {
        let wall: f64 = out
            .outcomes
            .iter()
            .filter(|o| o.method == s.method)
            .map(|o| o.wall_time.as_secs_f64())
            .sum();
        println!(
            "{:<14} {:<4} R0 {:.4}  MI {:.4} ± {:.4}  MI_lb {:.4}  gauss {:.4}  ref {:.4}  iters ≤ {:<4} [{}]  {:.2}s",
            out.run_id,
            s.method,
            s.rates.r0,
            s.rates.mi,
            s.rates.mi_stderr,
            s.rates.mi_lower_bound,
            s.rates.gaussian_rate,
            s.gaussian_reference,
            s.iterations,
            s.termination,
            wall
        );
    }
}

fn write_experiment(out: &ExperimentOutput, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let iterations = dir.join(format!("{stem}_iterations.csv"));
    let summary = dir.join(format!("{stem}_summary.csv"));
    emit_csv(&out.records, &iterations)?;
    emit_summary_csv(&out.summaries, &summary)?;
    println!("wrote {} and {}", iterations.display(), summary.display());
    Ok(())
}

fn finish_figure(fig: &FigureOutput, dir: &Path) -> Result<()> {
    for e in &fig.experiments {
        print_experiment(e);
    }
    let (a, b) = fig.write(dir)?;
    println!("wrote {} and {}", a.display(), b.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Optimize(args) => {
            let mut config = args.build_config()?;
            if args.realizations.is_none() && !args.set.iter().any(|s| s.starts_with("n_realizations")) {
                config.n_realizations = 1;
            }
            let out = run_experiment(&config, "optimize")?;
            print_experiment(&out);
            write_experiment(&out, &args.out, "optimize")
        }
        Command::Sweep { run: args, grid } => {
            let base = args.build_config()?;
            let axes = grid.iter().map(|g| parse_grid_axis(g)).collect::<Result<Vec<_>>>()?;
            let mut records = Vec::new();
            let mut summaries = Vec::new();
            for (k, point) in grid_points(&axes).into_iter().enumerate() {
                let config = point.iter().try_fold(base.clone(), |c, (key, value)| c.with_override(key, value))?;
                let label = point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
                let out = run_experiment(&config, &format!("sweep-{k}"))?;
                println!("sweep-{k}: {label}");
                print_experiment(&out);
                records.extend(out.records);
                summaries.extend(out.summaries);
            }
            std::fs::create_dir_all(&args.out)?;
            emit_csv(&records, &args.out.join("sweep_iterations.csv"))?;
            emit_summary_csv(&summaries, &args.out.join("sweep_summary.csv"))?;
            println!("wrote sweep CSVs to {}", args.out.display());
            Ok(())
        }
        Command::Gradcheck(args) => {
            let config = GradcheckConfig {
                seed: args.seed,
                n_points: args.points,
                n_tx: args.n_tx,
                n_rx: args.n_rx,
                n_ris: args.n_ris,
                order: args.order,
                noise_power: args.noise_power,
                fd_step: args.fd_step,
                ..GradcheckConfig::default()
            };
            let report = gradcheck(&config)?;
            println!(
                "gradcheck over {} points: max rel error θ {:.3e}, P {:.3e} -> {}",
                report.n_points,
                report.theta_max_rel_error,
                report.precoder_max_rel_error,
                if report.passed { "PASS" } else { "FAIL" }
            );
            if report.passed {
                Ok(())
            } else {
                Err(ris_cutoff::Error::Config("gradient check failed".into()))
            }
        }
        Command::ReproduceFig2(args) => {
            let config = args.build_config()?;
            finish_figure(&reproduce_fig2(&config, config.seed)?, &args.out)
        }
        Command::ReproduceFig3(args) => {
            let config = args.build_config()?;
            finish_figure(&reproduce_fig3(&config, config.seed)?, &args.out)
        }
        Command::BaselineNoRis(args) => {
            let config = args.build_config()?;
            if config.direct_blocked {
                println!("note: direct link blocked, so without the RIS every rate is zero");
            }
            let out = run_no_ris_baseline(&config, "noris")?;
            print_experiment(&out);
            write_experiment(&out, &args.out, "noris")
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
