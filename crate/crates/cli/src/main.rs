use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use scatlab::config::{bundled_names, ScenarioConfig};
use scatlab::lab::ScatteringReport;
use scatlab::runner::{self, ClassifyReport, SweepReport};
use scatlab::{LabError, Result, Sign};

/// Spectral laboratory for hyperbolic systems with time-dependent
/// coefficients.
#[derive(Parser)]
#[command(name = "scatlab", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Classify each root and end as R-stable or not (no amplitude runs).
    Classify(Common),
    /// Full pipeline: decay curves, plateau checks, wave and scattering operators.
    Scatter(Common),
    /// Repeat a run for several values of one config parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// JSON pointer into the config, e.g. /symbol/c/p
        #[arg(long)]
        path: String,
        /// Comma-separated JSON values, e.g. 0.5,1,1.5,2
        #[arg(long, allow_hyphen_values = true, default_value = "")]
        values: String,
        /// Run the full scattering pipeline per value instead of classifying.
        #[arg(long)]
        full: bool,
    },
    /// Tabulate the characteristic roots along the first grid direction.
    DumpRoots {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Bundled scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory; overrides the config's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Override the time horizon.
    #[arg(long)]
    tmax: Option<f64>,
    /// Seed for the random data ensemble.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        if let Some(n) = self.threads {
            runner::init_threads(n)?;
        }
        let mut cfg = match (&self.config, &self.scenario) {
            (Some(path), _) => ScenarioConfig::from_path(path)?,
            (None, Some(name)) => ScenarioConfig::bundled(name)?,
            (None, None) => {
                return Err(LabError::Config(format!(
                    "give --config PATH or --scenario NAME (bundled: {})",
                    bundled_names().collect::<Vec<_>>().join(", ")
                )))
            }
        };
        if let Some(t) = self.tmax {
            cfg = cfg.with_t_max(t)?;
        }
        if let Some(seed) = self.seed {
            cfg.ensemble.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into())
}

fn print_classify(rep: &ClassifyReport) {
    println!("scenario {} (T_max = {})", rep.name, rep.t_max);
    println!(
        "{:<24} {:>4} {:>2} {:<14} {:<12} {:>12}",
        "omega", "sign", "j", "class", "model", "psi(T_max)"
    );
    for d in &rep.directions {
        let omega = format!("{:?}", d.omega.as_slice());
        for v in &d.verdicts {
            println!(
                "{:<24} {:>4} {:>2} {:<14} {:<12} {:>12.5e}",
                omega,
                v.sign,
                v.j,
                format!("{:?}", v.class),
                v.model.name(),
                v.psi.last().copied().unwrap_or(0.0)
            );
        }
    }
    println!(
        "class(-) = {:?}, class(+) = {:?}",
        rep.class(Sign::Minus),
        rep.class(Sign::Plus)
    );
}

fn print_scatter(rep: &ScatteringReport) {
    println!(
        "scenario {} (T_max = {}, {} modes)",
        rep.name, rep.t_max, rep.modes
    );
    for c in &rep.curves {
        println!("branch {} ({:?}):", c.sign, c.kind);
        println!("  {:>12} {:>12} {:>12}", "t", "relative", "bound");
        for p in &c.points {
            println!(
                "  {:>12} {:>12.4e} {:>12.4e}",
                p.t,
                p.distance / c.norm_initial,
                p.bound / c.norm_initial
            );
        }
        if let Some(pl) = c.plateau {
            println!(
                "  predicted plateau {pl:.4e} (relative {:.4e})",
                pl / c.norm_initial
            );
        }
    }
    for (sign, o) in &rep.outcomes {
        println!("outcome {sign}: {o:?}");
    }
    for n in &rep.nonfree {
        println!(
            "plateau {} at t = {}: predicted {:.4e}, measured {:.4e}, gap {:.2}%",
            n.sign,
            n.t,
            n.predicted,
            n.measured,
            100.0 * n.relative_gap
        );
    }
    if let Some(ops) = &rep.operators {
        println!("operators on {} samples:", ops.samples);
        println!(
            "  W round trip (-, +): {}, {}",
            fmt_opt(ops.wave_roundtrip[0]),
            fmt_opt(ops.wave_roundtrip[1])
        );
        println!("  S round trip: {}", fmt_opt(ops.scattering_roundtrip));
        println!("  max |Sg - g|/|g|: {}", fmt_opt(ops.scattering_deviation));
        println!(
            "  |S| empirical {} (bound {})",
            fmt_opt(ops.norms.scattering),
            fmt_opt(ops.norms.scattering_bound)
        );
    }
    println!("bound violations: {}", rep.violations);
    for f in &rep.flags {
        warn!("{f}");
    }
}

fn print_sweep(rep: &SweepReport) {
    println!("sweep {} over {}", rep.name, rep.path);
    for r in &rep.rows {
        println!(
            "  {:<10} -:{:<14} +:{:<14} {} {}",
            r.value.to_string(),
            format!("{:?}", r.class_minus),
            format!("{:?}", r.class_plus),
            r.outcome.map(|o| format!("{o:?}")).unwrap_or_default(),
            fmt_opt(r.metric)
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.verb {
        Verb::Classify(common) => {
            let cfg = common.load()?;
            let rep = runner::run_classify(&cfg)?;
            print_classify(&rep);
            if let Some(dir) = &cfg.output.dir {
                runner::write_classify_outputs(&rep, dir)?;
            }
        }
        Verb::Scatter(common) => {
            let cfg = common.load()?;
            let run = runner::run_scatter(&cfg)?;
            print_scatter(&run.report);
            if let Some(dir) = &cfg.output.dir {
                runner::write_scatter_outputs(&run.report, dir)?;
            }
        }
        Verb::Sweep {
            common,
            path,
            values,
            full,
        } => {
            let cfg = common.load()?;
            let values = runner::parse_values(&values)?;
            let rep = runner::run_sweep(&cfg, &path, &values, full)?;
            print_sweep(&rep);
            if let Some(dir) = &cfg.output.dir {
                runner::write_sweep_outputs(&rep, dir)?;
            }
        }
        Verb::DumpRoots { common, samples } => {
            let cfg = common.load()?;
            let rows = runner::dump_roots(&cfg, samples)?;
            match &cfg.output.dir {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    runner::write_roots_csv(&rows, &dir.join("roots.csv"))?;
                }
                None => {
                    for (t, r) in &rows {
                        let cols: Vec<String> = r.iter().map(|x| x.to_string()).collect();
                        println!("{t},{}", cols.join(","));
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
