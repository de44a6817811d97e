use aniso_ident::dynamics::simulate;
use aniso_ident::harness::experiment::{run_experiment_with, sample_interior_controls, HarnessError};
use aniso_ident::harness::{
    convergence_study, generate_artificial_data, plots, uniform_positions, validate_gradient, ExperimentConfig,
};
use aniso_ident::io::{read_positions_csv, write_state_csv};
use aniso_ident::transport::{optimal_plan, write_plan_csv, GroundCost};
use clap::{Args, Parser, Subcommand};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "aniso-ident", version, about = "Control identification for anisotropic interacting particles")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Start from a named preset (paper, p1..p3, desk, desk-p1..desk-p3).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Seed of the uniform sample evolved into the desired pattern.
    #[arg(long, global = true)]
    seed_data: Option<u64>,
    /// Seed of the uniform initial positions used by the optimisation.
    #[arg(long, global = true)]
    seed_init: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set n_particles=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate from a uniform sample (or a CSV) and write the trajectory.
    Simulate {
        /// Control angle; defaults to `theta_data`. Accepts `0.7pi`.
        #[arg(long)]
        theta: Option<String>,
        #[arg(long)]
        eta: Option<f64>,
        /// Initial positions instead of the `seed_init` sample.
        #[arg(long)]
        initial: Option<PathBuf>,
    },
    /// Generate the desired pattern from `seed_data` and `u_data`.
    MakeData,
    /// Identify the control and write the full report.
    Optimize,
    /// Exact periodic W2 between two position files.
    W2 {
        source: PathBuf,
        target: PathBuf,
        /// Plan output; defaults to `<out>/w2_plan.csv`.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Compare the adjoint gradient with central differences.
    CheckGradient {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        control_seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "1e-3,1e-4,1e-5")]
        steps: Vec<f64>,
    },
    /// Identification error against N over several seeds.
    ConvergenceStudy {
        #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
    },
    /// Redraw the figures of an output directory from its CSV files.
    Plot,
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let mut cfg = match &c.preset {
        Some(p) => ExperimentConfig::preset(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &c.config {
        cfg.apply_text(&fs::read_to_string(path)?)?;
    }
    for kv in &c.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = c.seed_data {
        cfg.seed_data = s;
    }
    if let Some(s) = c.seed_init {
        cfg.seed_init = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn writer(path: &Path) -> std::io::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn read_state(path: &Path) -> Result<aniso_ident::ParticleState, Box<dyn std::error::Error>> {
    Ok(read_positions_csv(File::open(path).map_err(|e| format!("{}: {e}", path.display()))?)?)
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = load_config(&cli.common)?;
    let out = cfg.output_dir.clone();
    match cli.cmd {
        Cmd::Simulate { theta, eta, initial } => {
            let mut u = cfg.u_data;
            if let Some(t) = theta {
                let mut probe = cfg.clone();
                probe.set("theta_data", &t)?;
                u.theta = probe.u_data.theta;
            }
            if let Some(e) = eta {
                u.eta = e;
            }
            let start = match initial {
                Some(p) => read_state(&p)?,
                None => uniform_positions(cfg.n_particles, cfg.seed_init)?,
            };
            let traj = simulate(&start, u, &cfg.params, cfg.dt, cfg.steps)?;
            traj.write_csv(writer(&out.join("trajectory.csv"))?, cfg.export_stride)?;
            write_state_csv(writer(&out.join("positions_final.csv"))?, traj.final_state())?;
            println!(
                "simulated N={} steps={} theta={} eta={} -> {}",
                start.len(),
                cfg.steps,
                u.theta,
                u.eta,
                out.display()
            );
        }
        Cmd::MakeData => {
            let data = generate_artificial_data(cfg.seed_data, cfg.u_data, &cfg)?;
            write_state_csv(writer(&out.join("positions_desired.csv"))?, &data)?;
            write_state_csv(
                writer(&out.join("positions_data_initial.csv"))?,
                &uniform_positions(cfg.n_particles, cfg.seed_data)?,
            )?;
            println!("wrote {}", out.join("positions_desired.csv").display());
        }
        Cmd::Optimize => {
            let report = run_experiment_with(&cfg, |r| {
                eprintln!(
                    "iter {:>3}  total {:.6e}  grad_rel {:.3e}  theta {:.4}pi  eta {:.4}",
                    r.iter,
                    r.cost.total,
                    r.grad_rel,
                    r.control.theta / std::f64::consts::PI,
                    r.control.eta
                )
            })?;
            print!("{}", report.to_text());
        }
        Cmd::W2 { source, target, plan } => {
            let (a, b) = (read_state(&source)?, read_state(&target)?);
            let p = optimal_plan(&a, &b)?;
            let path = plan.unwrap_or_else(|| out.join("w2_plan.csv"));
            write_plan_csv(writer(&path)?, &p, &GroundCost::periodic(&a, &b))?;
            println!("w2_squared = {}", p.w2_squared);
            println!("total_cost = {}", p.total_cost);
        }
        Cmd::CheckGradient { count, control_seed, steps } => {
            let controls = sample_interior_controls(count, control_seed, &cfg, 0.01);
            let report = validate_gradient(&cfg, &controls, &steps)?;
            report.write_csv(writer(&out.join("gradient_check.csv"))?)?;
            for &h in &steps {
                let worst = report.rows.iter().filter(|r| r.step == h).map(|r| r.worst()).fold(0.0, f64::max);
                println!("h = {h:e}: worst relative error {worst:.3e}");
            }
        }
        Cmd::ConvergenceStudy { n_list, seeds } => {
            let report = convergence_study(&cfg, &n_list, seeds)?;
            report.write_runs_csv(writer(&out.join("convergence_runs.csv"))?)?;
            report.write_summary_csv(writer(&out.join("convergence.csv"))?)?;
            for r in &report.rows {
                println!(
                    "N = {:>5}: median error {:.4e} (min {:.4e}, max {:.4e})",
                    r.n_particles, r.median, r.min, r.max
                );
            }
        }
        Cmd::Plot => {
            plots::plot_from_dir(&out).map_err(|e: HarnessError| format!("{}: {e}", out.display()))?;
            println!("wrote {} and {}", out.join("scatter.svg").display(), out.join("cost.svg").display());
        }
    }
    Ok(())
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
