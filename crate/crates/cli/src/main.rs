use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use flownet::dynamics::{integrate, State};
use flownet::equilibria::equilibrium_set;
use flownet::io::{self, Scenario};
use flownet::netmodel::{classify_routing, RoutingTag};
use flownet::transitions::{sweep, DemandPath};
use flownet::{ExecMode, FlowError};
use serde_json::{json, Value};

/// Simulate and analyse saturated dynamical flow networks.
#[derive(Parser)]
#[command(name = "flownet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a scenario and classify its routing matrix.
    Check { scenario: PathBuf },
    /// Integrate the flow and write the sampled trajectory as CSV.
    Simulate {
        scenario: PathBuf,
        /// Initial state: "zero", "cap", or comma-separated values.
        #[arg(long, default_value = "zero")]
        x0: String,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        sample_every: Option<usize>,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the equilibrium set.
    Equilibria {
        scenario: PathBuf,
        /// Require the closed-form segment analysis (stochastic irreducible routing).
        #[arg(long)]
        analytic: bool,
    },
    /// Sweep demand along an affine path and report jumps.
    Sweep {
        scenario: PathBuf,
        /// Path start; defaults to the scenario demand.
        #[arg(long, allow_hyphen_values = true)]
        c_start: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        c_end: String,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        /// CSV destination; the critical-point sidecar goes next to it as
        /// `<stem>.critical.json`. Without it CSV goes to stdout and the
        /// sidecar to stderr.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
}

enum Failure {
    Flow(FlowError),
    Io(String),
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        Failure::Flow(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Flow(FlowError::Invalid(_)) => 2,
            Failure::Flow(FlowError::Numerical(_) | FlowError::Inconsistent(_)) => 3,
            Failure::Flow(FlowError::Precondition(_)) => 4,
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Flow(e) => e.to_string(),
            Failure::Io(e) => e.clone(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    Ok(io::read_scenario(path)?)
}

fn cmd_check(path: &Path) -> CmdResult {
    let sc = load(path)?;
    print_json(&io::check_report(&sc.spec)?);
    Ok(0)
}

fn cmd_simulate(
    path: &Path,
    x0: &str,
    t_end: Option<f64>,
    dt: Option<f64>,
    sample_every: Option<usize>,
    out: Option<&Path>,
) -> CmdResult {
    let sc = load(path)?;
    let spec = &sc.spec;
    let mut cfg = sc.integrator;
    cfg.t_end = t_end.unwrap_or(cfg.t_end);
    cfg.dt = dt.unwrap_or(cfg.dt);
    cfg.sample_every = sample_every.unwrap_or(cfg.sample_every);
    let start = match x0 {
        "zero" => State::zero(spec),
        "cap" => State::full(spec),
        values => State::new(spec, io::parse_vector(values)?)?,
    };
    let traj = integrate(spec, &start, &cfg)?;
    let csv = io::trajectory_csv(&traj);
    let summary = json!({
        "converged": traj.converged,
        "final_residual": traj.final_residual,
        "final_time": traj.final_time(),
        "final_state": traj.final_state(),
        "samples": traj.len(),
    });
    let summary = serde_json::to_string_pretty(&summary).expect("JSON values serialize");
    match out {
        Some(p) => {
            write_file(p, &csv)?;
            println!("{summary}");
        }
        None => {
            print!("{csv}");
            eprintln!("{summary}");
        }
    }
    Ok(if traj.converged { 0 } else { 3 })
}

fn cmd_equilibria(path: &Path, analytic: bool) -> CmdResult {
    let sc = load(path)?;
    if analytic {
        let class = classify_routing(sc.spec.routing());
        if class.tag != RoutingTag::StochasticIrreducible {
            return Err(FlowError::Precondition(format!(
                "segment analysis needs stochastic irreducible routing ({}: {})",
                class.tag, class.detail
            ))
            .into());
        }
    }
    let set = equilibrium_set(&sc.spec)?;
    print_json(&io::equilibrium_json(&set));
    Ok(0)
}

fn cmd_sweep(
    path: &Path,
    c_start: Option<&str>,
    c_end: &str,
    samples: usize,
    out: Option<&Path>,
    sequential: bool,
) -> CmdResult {
    let sc = load(path)?;
    let start = match c_start {
        Some(s) => io::parse_vector(s)?,
        None => sc.spec.demand().to_vec(),
    };
    let end = io::parse_vector(c_end)?;
    let path = DemandPath::new(start, end, samples)?;
    let mode = if sequential {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    };
    let result = sweep(&sc.spec, &path, mode)?;
    let csv = io::sweep_csv(&result);
    let sidecar = serde_json::to_string_pretty(&io::critical_sidecar(&result))
        .expect("JSON values serialize");
    match out {
        Some(p) => {
            write_file(p, &csv)?;
            write_file(&sidecar_path(p), &format!("{sidecar}\n"))?;
        }
        None => {
            print!("{csv}");
            eprintln!("{sidecar}");
        }
    }
    Ok(0)
}

fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("critical.json")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { scenario } => cmd_check(scenario),
        Command::Simulate {
            scenario,
            x0,
            t_end,
            dt,
            sample_every,
            out,
        } => cmd_simulate(scenario, x0, *t_end, *dt, *sample_every, out.as_deref()),
        Command::Equilibria { scenario, analytic } => cmd_equilibria(scenario, *analytic),
        Command::Sweep {
            scenario,
            c_start,
            c_end,
            samples,
            out,
            sequential,
        } => cmd_sweep(
            scenario,
            c_start.as_deref(),
            c_end,
            *samples,
            out.as_deref(),
            *sequential,
        ),
    };
    let _ = std::io::stdout().flush();
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
