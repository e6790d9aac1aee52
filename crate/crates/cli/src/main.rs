use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

use rcc_core::scenario::{
    parse_channel, parse_model, run_point, run_scenario, write_csv, write_outputs, Scenario,
};
use rcc_core::{
    blahut_arimoto, bsc_robust_capacity, dual_certificate, kl_symmetric_dual, step_constants,
    upper_bound_weakly_symmetric, BscInterval, Error, KlRow,
};

/// Robust capacity of channels with an uncertain law matrix.
#[derive(Parser, Debug)]
#[command(name = "rcc", version)]
struct Cli {
    /// target duality gap in nats (overrides the scenario)
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// generator seed (overrides the scenario)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// report information quantities in bits
    #[arg(long, global = true)]
    bits: bool,
    /// directory for the CSV and the per-run JSON reports
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the base instance of a scenario
    Solve { scenario: PathBuf },
    /// Run every point of a scenario sweep
    Sweep { scenario: PathBuf },
    /// Closed-form robust capacity of a binary symmetric channel
    Bsc {
        #[arg(long)]
        lo: f64,
        #[arg(long)]
        hi: f64,
    },
    /// Weakly symmetric robust capacity under a KL ball around one row
    Kl {
        /// reference row, comma separated
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        q: Vec<f64>,
        #[arg(long)]
        rho: f64,
        /// number of inputs
        #[arg(long, default_value_t = 1)]
        n: usize,
    },
    /// Bounds and step constants of an uncertainty model
    Bounds { model: PathBuf },
    /// Deterministic capacity by Blahut–Arimoto
    Ba { channel: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NoConvergence { .. }
        | Error::NonFinite { .. }
        | Error::Inconsistent(_)
        | Error::NonPositiveEntry { .. } => 3,
        _ => 2,
    }
}

struct Units {
    bits: bool,
}

impl Units {
    fn key(&self, name: &str) -> String {
        format!("{name}_{}", if self.bits { "bits" } else { "nats" })
    }

    fn val(&self, v: f64) -> f64 {
        if self.bits {
            v / std::f64::consts::LN_2
        } else {
            v
        }
    }

    fn put(&self, m: &mut Map<String, Value>, name: &str, v: f64) {
        m.insert(self.key(name), json!(self.val(v)));
    }
}

fn load_scenario(path: &Path, cli: &Cli) -> rcc_core::Result<Scenario> {
    let mut sc = Scenario::load(path)?;
    if let Some(e) = cli.epsilon {
        sc.solver.epsilon = e;
    }
    if let Some(n) = cli.max_iters {
        sc.solver.max_iters = n;
    }
    if let Some(s) = cli.seed {
        sc.seed = s;
        sc.solver.seed = s;
    }
    sc.solver.validate()?;
    Ok(sc)
}

fn out_dir(cli: &Cli, sc: &Scenario) -> Option<PathBuf> {
    cli.out.clone().or_else(|| sc.output.dir.clone())
}

fn prefix(sc: &Scenario) -> String {
    sc.output
        .prefix
        .clone()
        .unwrap_or_else(|| sc.display_name().to_owned())
}

fn run(cli: &Cli) -> rcc_core::Result<()> {
    let u = Units { bits: cli.bits };
    match &cli.command {
        Command::Solve { scenario } | Command::Sweep { scenario } => {
            let sc = load_scenario(scenario, cli)?;
            let results = if matches!(cli.command, Command::Sweep { .. }) {
                run_scenario(&sc, sc.execution())?
            } else {
                let mut points = sc.points()?;
                let mut base = points.swap_remove(0);
                if sc.sweep.is_some() {
                    log::info!("solve ignores the sweep; use the sweep subcommand");
                    base.index = 0;
                }
                vec![run_point(&base, &sc.solver, sc.seed)?]
            };
            write_csv(&results, std::io::stdout().lock(), cli.bits)?;
            if let Some(dir) = out_dir(cli, &sc) {
                for p in write_outputs(&results, &dir, &prefix(&sc), cli.bits)? {
                    log::info!("wrote {}", p.display());
                }
            }
        }
        Command::Bsc { lo, hi } => {
            let i = BscInterval::new(*lo, *hi)?;
            let mut m = Map::new();
            m.insert("beta_lo".into(), json!(i.beta_lo()));
            m.insert("beta_hi".into(), json!(i.beta_hi()));
            m.insert("worst_beta".into(), json!(i.worst_beta()));
            u.put(&mut m, "robust_capacity", bsc_robust_capacity(&i));
            println!("{}", Value::Object(m));
        }
        Command::Kl { q, rho, n } => {
            let row = KlRow::new(q.clone(), *rho, *n)?;
            let d = kl_symmetric_dual(&row, 1e-10)?;
            let mut m = Map::new();
            u.put(&mut m, "robust_capacity", d.value);
            m.insert(
                "lambda_star".into(),
                if d.lambda_star.is_finite() {
                    json!(d.lambda_star)
                } else {
                    json!("inf")
                },
            );
            println!("{}", Value::Object(m));
        }
        Command::Bounds { model } => {
            let model = parse_model(&std::fs::read_to_string(model)?)?;
            let q0 = model.nominal();
            let cols: Vec<f64> = q0.column_sums().iter().map(|c| c.ln()).collect();
            let consts = step_constants(&model, rcc_core::prox::DEFAULT_DELTA)?;
            let mut m = Map::new();
            u.put(
                &mut m,
                "nominal_capacity",
                blahut_arimoto(q0, 1e-9)?.capacity,
            );
            u.put(
                &mut m,
                "weak_symmetry_bound",
                upper_bound_weakly_symmetric(q0),
            );
            u.put(&mut m, "dual_certificate", dual_certificate(q0, &cols)?);
            let n = model.n_inputs().min(model.n_outputs()) as f64;
            u.put(&mut m, "trivial_bound", n.ln());
            m.insert("tau".into(), json!(model.tau()));
            m.insert(
                "step_constants".into(),
                serde_json::to_value(&consts).unwrap_or_default(),
            );
            println!("{}", Value::Object(m));
        }
        Command::Ba { channel } => {
            let q = parse_channel(&std::fs::read_to_string(channel)?)?;
            let r = blahut_arimoto(&q, 1e-9)?;
            let mut m = Map::new();
            u.put(&mut m, "capacity", r.capacity);
            u.put(&mut m, "upper", r.upper);
            m.insert("p".into(), json!(r.p.probs()));
            m.insert("iterations".into(), json!(r.iterations));
            println!("{}", Value::Object(m));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RCC_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rcc: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
