use std::fs::{self, File};
use std::io::{self as stdio, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use irgroup::bench::{self, InstanceSpec, LossKind, NoiseKind};
use irgroup::io;
use irgroup::{kkt, ConcaveFn, IrParams, Problem};

#[derive(Parser)]
#[command(name = "irgroup", version, about = "Group-sparse recovery with concave penalties and losses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Loss {
    Cauchy,
    Identity,
}

impl From<Loss> for LossKind {
    fn from(l: Loss) -> Self {
        match l {
            Loss::Cauchy => LossKind::Cauchy,
            Loss::Identity => LossKind::Identity,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Gaussian,
    Cauchy,
}

impl From<Noise> for NoiseKind {
    fn from(n: Noise) -> Self {
        match n {
            Noise::Gaussian => NoiseKind::Gaussian,
            Noise::Cauchy => NoiseKind::Cauchy,
        }
    }
}

#[derive(clap::Args)]
struct SolverArgs {
    /// Outer stopping tolerance on the relative step.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_outer: usize,
    #[arg(long, default_value_t = 50_000)]
    max_inner: usize,
}

impl SolverArgs {
    fn params(&self) -> IrParams {
        IrParams { outer_tol: self.tol, max_outer: self.max_outer, max_inner: self.max_inner, ..IrParams::default() }
    }
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    s: usize,
    #[arg(long, default_value_t = 2)]
    block_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "cauchy")]
    loss: Loss,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: Noise,
    #[arg(long, default_value_t = 0.005)]
    noise_scale: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1.2)]
    sigma_factor: f64,
}

impl GenArgs {
    fn spec(&self) -> InstanceSpec {
        InstanceSpec {
            m: self.m,
            n: self.n,
            s: self.s,
            block_size: self.block_size,
            noise_scale: self.noise_scale,
            sigma_factor: self.sigma_factor,
            delta: self.delta,
            eps: self.eps,
            seed: self.seed,
            loss: self.loss.into(),
            noise: self.noise.into(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance: problem.json plus A.csv, b.csv and x_orig.csv.
    Gen {
        #[command(flatten)]
        args: GenArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a problem file and print the report as JSON.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        /// Replace the loss of the problem file.
        #[arg(long, value_enum)]
        loss: Option<Loss>,
        /// Replace the penalty parameter.
        #[arg(long)]
        eps: Option<f64>,
        /// Replace the Cauchy loss parameter.
        #[arg(long)]
        delta: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Include the final point in the report.
        #[arg(long)]
        emit_x: bool,
    },
    /// Run seeded trials over one or more sizes and write the per-instance CSV.
    Bench {
        /// Comma-separated MxNxS triples.
        #[arg(long, default_value = "108x512x16")]
        sizes: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value_t = 2)]
        block_size: usize,
        #[arg(long, value_enum, default_value = "cauchy")]
        loss: Loss,
        #[arg(long, value_enum, default_value = "gaussian")]
        noise: Noise,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        /// Write measured wall time instead of 0 in the wall_s column.
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Print KKT residuals of a point (one value per line) as JSON.
    Verify {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        point: PathBuf,
        /// Multiplier to seed the search with.
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
    },
}

fn apply_overrides(prob: &Problem, loss: Option<Loss>, eps: Option<f64>, delta: Option<f64>) -> irgroup::Result<Problem> {
    let psi = match eps {
        Some(eps) => ConcaveFn::Log { eps },
        None => prob.psi(),
    };
    let current_delta = match prob.phi() {
        ConcaveFn::Cauchy { delta } => Some(delta),
        _ => None,
    };
    let phi = match (loss, delta.or(current_delta)) {
        (Some(Loss::Identity), _) => ConcaveFn::Identity,
        (Some(Loss::Cauchy), Some(delta)) => ConcaveFn::Cauchy { delta },
        (Some(Loss::Cauchy), None) => ConcaveFn::Cauchy { delta: 0.05 },
        (None, Some(delta)) if current_delta.is_some() => ConcaveFn::Cauchy { delta },
        (None, _) => prob.phi(),
    };
    Problem::new(prob.a().to_owned(), prob.b().to_owned(), prob.sigma(), prob.partition().clone(), psi, phi)
}

fn run(cli: Cli) -> irgroup::Result<()> {
    match cli.command {
        Command::Gen { args, out } => {
            let spec = args.spec();
            let inst = bench::generate_instance(&spec)?;
            io::write_problem_dir(&out, &inst.problem, Some(inst.x_orig.view()), Some(spec))?;
        }
        Command::Solve { problem, loss, eps, delta, solver, report, emit_x } => {
            let loaded = io::load_problem(&problem)?;
            let prob = if loss.is_some() || eps.is_some() || delta.is_some() {
                // A regenerated instance recomputes sigma for the new loss.
                match loaded.spec {
                    Some(spec) => {
                        let spec = InstanceSpec {
                            loss: loss.map_or(spec.loss, Into::into),
                            eps: eps.unwrap_or(spec.eps),
                            delta: delta.unwrap_or(spec.delta),
                            ..spec
                        };
                        bench::generate_instance(&spec)?.problem
                    }
                    None => apply_overrides(&loaded.problem, loss, eps, delta)?,
                }
            } else {
                loaded.problem
            };
            let result = irgroup::ir_solve(&prob, &solver.params())?;
            let mut json = result.to_json(emit_x);
            if let Some(x_orig) = &loaded.x_orig {
                if x_orig.len() == prob.cols() {
                    let metrics = bench::recovery_metrics(result.x.view(), x_orig.view(), &prob)?;
                    json["recovery"] = serde_json::to_value(metrics)?;
                }
            }
            let text = serde_json::to_string_pretty(&json)?;
            match report {
                Some(path) => fs::write(path, text + "\n")?,
                None => writeln!(stdio::stdout().lock(), "{text}")?,
            }
        }
        Command::Bench {
            sizes,
            trials,
            seed,
            workers,
            csv,
            block_size,
            loss,
            noise,
            eps,
            delta,
            timing,
            solver,
        } => {
            let specs = sizes
                .split(',')
                .map(|text| {
                    let (m, n, s) = bench::parse_size(text)?;
                    Ok(InstanceSpec {
                        block_size,
                        loss: loss.into(),
                        noise: noise.into(),
                        eps,
                        delta,
                        seed,
                        ..InstanceSpec::new(m, n, s)
                    })
                })
                .collect::<irgroup::Result<Vec<_>>>()?;
            let table = bench::run_experiment(&specs, trials, &solver.params(), workers)?;
            table.verify_aggregates()?;
            table.write_csv(BufWriter::new(File::create(&csv)?), timing)?;
            let mut out = stdio::stdout().lock();
            for agg in &table.aggregates {
                writeln!(out, "{}", serde_json::to_string(agg)?)?;
            }
            for row in table.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("{}: {}", row.instance_id, row.error.as_deref().unwrap_or_default());
            }
        }
        Command::Verify { problem, point, lambda } => {
            let loaded = io::load_problem(&problem)?;
            let x = io::read_vector_csv(File::open(&point)?)?;
            if x.len() != loaded.problem.cols() {
                return Err(irgroup::Error::Dimension { what: "point", expected: loaded.problem.cols(), found: x.len() });
            }
            let report = kkt::kkt_report(x.view(), &loaded.problem, lambda);
            let json = serde_json::json!({
                "kkt": report,
                "mfcq": kkt::mfcq_boundary_check(x.view(), &loaded.problem),
            });
            writeln!(stdio::stdout().lock(), "{}", serde_json::to_string_pretty(&json)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
