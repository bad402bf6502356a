use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use robust_amp::amp::{amp_run, analytic_b_sequence, AmpMode};
use robust_amp::baseline::m_estimate;
use robust_amp::duality::duality_check;
use robust_amp::harness::{default_variance_grid, emit_plotdata, run_experiment, ExperimentConfig, ModeSpec};
use robust_amp::se::{predicted_mae, predicted_mse, LowerBounds, StateEvolution};
use robust_amp::{Error, Loss, NoiseModel, ProblemInstance, Quadrature, Result, Vector};

#[derive(Parser)]
#[command(
    name = "robust-amp",
    version,
    about = "AMP and state evolution for robust M-estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the state-evolution fixed point (τ*², b*).
    SeFixedPoint {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run the state-evolution recursion from τ₀².
    SeRun {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        tau0_sq: f64,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        /// Stop early once successive τ² differ by at most tol·(1 + τ²).
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run AMP on a generated instance.
    AmpSolve {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        /// Also solve by Newton and report the distance to it.
        #[arg(long)]
        with_newton: bool,
        /// Write the per-iteration trajectory as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Compute the M-estimate by damped Newton.
    MEstimate {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run a replication experiment and write records, summary and plot data.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of replications.
        #[arg(long)]
        reps: Option<usize>,
        /// Output directory (default: `output` from the config, else `simulation`).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Compare Huber regression with its Lasso dual on a random instance.
    DualityCheck {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: usize,
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Information lower bounds on the SE variance.
    Bounds {
        #[arg(long)]
        noise: String,
        #[arg(long)]
        delta: f64,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// e.g. `huber:3`, `huber-ridge:3,0.05`, `logcosh:1`, `squared`.
    #[arg(long)]
    loss: String,
    /// e.g. `cn:0.05,10`, `normal:0,1`, `mix:0.9,0,1;0.1,0,3`.
    #[arg(long)]
    noise: String,
    #[arg(long)]
    delta: f64,
    /// `composite` (default) or `hermite:ORDER`.
    #[arg(long, default_value = "composite")]
    quadrature: String,
}

impl ModelArgs {
    fn engine(&self) -> Result<StateEvolution> {
        let loss: Loss = self.loss.parse()?;
        let noise: NoiseModel = self.noise.parse()?;
        Ok(StateEvolution::new(loss, noise, self.delta)?.with_quadrature(parse_quadrature(&self.quadrature)?))
    }
}

fn parse_quadrature(s: &str) -> Result<Quadrature> {
    match s.split_once(':') {
        None if s == "composite" => Ok(Quadrature::composite()),
        Some(("hermite", order)) => {
            let order = order
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad Hermite order in {s:?}")))?;
            Quadrature::gauss_hermite(order)
        }
        _ => Err(Error::InvalidArgument(format!(
            "unknown quadrature {s:?} (expected composite or hermite:ORDER)"
        ))),
    }
}

#[derive(Args)]
struct InstanceArgs {
    /// Experiment config file; the explicit flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    noise: Option<String>,
    /// `‖θ₀‖₂ / √p`.
    #[arg(long)]
    theta0_norm: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl InstanceArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let (Some(n), Some(p)) = (self.n, self.p) else {
                    return Err(Error::InvalidArgument("give --config or both --n and --p".into()));
                };
                ExperimentConfig::new(n, p, "huber:3", "cn:0.05,10")
            }
        };
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(p) = self.p {
            cfg.p = p;
        }
        if let Some(l) = &self.loss {
            cfg.loss = l.clone();
        }
        if let Some(w) = &self.noise {
            cfg.noise = w.clone();
        }
        if let Some(r) = self.theta0_norm {
            cfg.theta0_norm = r;
            cfg.theta0 = None;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.seeds = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn generate(cfg: &ExperimentConfig) -> Result<ProblemInstance> {
    let seed = cfg.seeds()[0];
    ProblemInstance::generate(cfg.n, cfg.p, &cfg.noise()?, &cfg.signal(), seed)
}

#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl OutputArgs {
    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.output {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(io::stdout().lock()),
        })
    }

    fn json<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut w = self.writer()?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Empirical,
    Analytic,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SeFixedPoint {
            model,
            tol,
            max_iters,
            out,
        } => out.json(&model.engine()?.fixed_point(tol, max_iters)?),

        Command::SeRun {
            model,
            tau0_sq,
            iters,
            tol,
            format,
            out,
        } => {
            let se = model.engine()?;
            let states = se.run(tau0_sq, iters, tol)?;
            match format {
                Format::Json => {
                    let last = states.last().expect("initial state");
                    out.json(&se.predict(last.tau_sq, last.b, &states))
                }
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(out.writer()?);
                    w.write_record(["t", "tau_sq", "b", "predicted_mse", "predicted_mae"])?;
                    for s in &states {
                        w.write_record([
                            s.t.to_string(),
                            s.tau_sq.to_string(),
                            s.b.to_string(),
                            predicted_mse(s.delta, s.tau_sq).to_string(),
                            predicted_mae(s.delta, s.tau_sq).to_string(),
                        ])?;
                    }
                    w.flush()?;
                    Ok(())
                }
            }
        }

        Command::AmpSolve {
            instance,
            mode,
            max_iters,
            tol,
            with_newton,
            csv,
            out,
        } => {
            let cfg = instance.config()?;
            let inst = generate(&cfg)?;
            let loss = cfg.loss()?;
            let max_iters = max_iters.unwrap_or(cfg.amp_max_iters);
            let mode = match mode.unwrap_or(match cfg.mode {
                ModeSpec::Empirical => Mode::Empirical,
                ModeSpec::Analytic => Mode::Analytic,
            }) {
                Mode::Empirical => AmpMode::Empirical,
                Mode::Analytic => {
                    let se = StateEvolution::new(loss, cfg.noise()?, cfg.delta())?;
                    AmpMode::Analytic(analytic_b_sequence(&se, cfg.tau0_sq(), max_iters)?)
                }
            };
            let reference = if with_newton {
                Some(m_estimate(&inst, &loss, cfg.newton_tol, cfg.newton_max_iters)?.theta)
            } else {
                None
            };
            let report = amp_run(
                &inst,
                &loss,
                &Vector::zeros(cfg.p),
                max_iters,
                tol.unwrap_or(cfg.amp_tol),
                &mode,
                reference.as_ref(),
            )?;
            if let Some(path) = csv {
                report.write_csv(BufWriter::new(File::create(path)?))?;
            }
            out.json(&report)
        }

        Command::MEstimate {
            instance,
            tol,
            max_iters,
            out,
        } => {
            let cfg = instance.config()?;
            let inst = generate(&cfg)?;
            let est = m_estimate(
                &inst,
                &cfg.loss()?,
                tol.unwrap_or(cfg.newton_tol),
                max_iters.unwrap_or(cfg.newton_max_iters),
            )?;
            out.json(&est)
        }

        Command::Simulate { config, reps, out_dir } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(r) = reps {
                cfg.replications = r;
                cfg.seeds = None;
            }
            cfg.validate()?;
            let dir = out_dir
                .or_else(|| cfg.output.clone())
                .unwrap_or_else(|| PathBuf::from("simulation"));
            let result = run_experiment(&cfg)?;
            let se = StateEvolution::new(cfg.loss()?, cfg.noise()?, cfg.delta())?;
            let grid = cfg
                .variance_map_grid
                .clone()
                .unwrap_or_else(|| default_variance_grid(&result));
            let mut files = emit_plotdata(&result, &se, &grid, &dir)?;
            let json = dir.join("result.json");
            result.write_json(&json)?;
            files.push(json);
            for failure in &result.failures {
                eprintln!("replication with seed {} failed: {}", failure.seed, failure.error);
            }
            for f in &files {
                eprintln!("wrote {}", f.display());
            }
            OutputArgs { output: None }.json(&result.summary)
        }

        Command::DualityCheck {
            n,
            p,
            lambda,
            seed,
            out,
        } => out.json(&duality_check(n, p, lambda, seed)?),

        Command::Bounds { noise, delta, out } => {
            if delta.is_nan() || delta <= 1.0 {
                return Err(Error::InvalidArgument(format!("delta must exceed 1, got {delta}")));
            }
            out.json(&LowerBounds::new(&noise.parse()?, delta))
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
