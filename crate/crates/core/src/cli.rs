//! Command-line front end. Exit status: 0 on success, 1 for invalid input,
//! 2 for numerical failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{self, RawConfig, RunConfig};
use crate::diagnostics;
use crate::error::{Error, Result};
use crate::front;
use crate::harness::{self, SweepBase};
use crate::io::{self, Envelope};
use crate::model::ModelConstants;
use crate::solver::{run_with, SolutionRecord};
use crate::toy::{self, Forcing, ToyConfig};

#[derive(Debug, Parser)]
#[command(
    name = "hhmo",
    version,
    about = "Relay precipitation model: simulate, analyze, verify"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML config file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config and HHMO_OUT_DIR)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    #[arg(long, global = true)]
    pub u_star: Option<f64>,
    #[arg(long, global = true)]
    pub u_star_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub dx: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub x_max: Option<f64>,
    #[arg(long, global = true)]
    pub t_max: Option<f64>,
    /// sharp, mollified or property_p
    #[arg(long, global = true)]
    pub relay: Option<String>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// Only keep nodes with x <= this in snapshots
    #[arg(long, global = true)]
    pub store_x_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ForcingArg {
    Constant,
    Linear,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Derived constants as a flat JSON object
    Constants,
    /// Run the solver and write a record directory
    Simulate {
        /// Record directory (default: <out>/record)
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Front, rings and boundary classification of a record
    Analyze {
        #[arg(long)]
        record: PathBuf,
    },
    /// Duhamel identity, transversality and bound margins of a record
    Diagnose {
        #[arg(long)]
        record: PathBuf,
    },
    /// Feasibility table of the two-relay ODE
    Toy {
        #[arg(long, value_enum)]
        forcing: Option<ForcingArg>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long = "toy-dt")]
        toy_dt: Option<f64>,
    },
    /// Compare two records on the same grid
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Default: agreement_factor times the self-refinement error of `a`
        #[arg(long)]
        agreement_tol: Option<f64>,
    },
    /// Sharp base run against each configured perturbation
    Sweep,
}

impl Common {
    fn apply(&self, raw: &mut RawConfig) {
        macro_rules! set {
            ($src:expr => $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = Some(v);
                }
            };
        }
        set!(self.alpha => raw.alpha);
        set!(self.beta => raw.beta);
        if self.u_star.is_some() || self.u_star_fraction.is_some() {
            raw.u_star = self.u_star;
            raw.u_star_fraction = self.u_star_fraction;
        }
        set!(self.dx => raw.grid.dx);
        set!(self.dt => raw.grid.dt);
        set!(self.x_max => raw.grid.x_max);
        set!(self.t_max => raw.grid.t_max);
        set!(self.relay => raw.relay.kind);
        set!(self.epsilon => raw.relay.epsilon);
        set!(self.stride => raw.run.snapshot_stride);
        set!(self.store_x_max => raw.run.store_x_max);
        set!(self.out => raw.output.dir);
    }

    /// Config file (if any) plus flag overrides, validated.
    pub fn load(&self) -> Result<RunConfig> {
        let mut raw = match &self.config {
            Some(p) => config::parse_raw(&std::fs::read_to_string(p)?)?,
            None => RawConfig::default(),
        };
        self.apply(&mut raw);
        config::resolve(&raw)
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        match &self.out {
            Some(p) => p.clone(),
            None => cfg.resolved_out_dir(),
        }
    }
}

#[derive(Serialize)]
struct ConstantsReport {
    constants: ModelConstants,
    ring_width_sqrt_t_star: f64,
    t2_ceiling: f64,
    f1_bound: f64,
    f2_bound: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    record_dir: PathBuf,
    n_snapshots: usize,
    n_nodes: usize,
    t_end: f64,
    ignited_nodes: usize,
    constants: Option<ModelConstants>,
    t1_scan: Option<crate::solver::T1Scan>,
}

fn emit<T: Serialize>(
    dir: &Path,
    file: &str,
    command: &str,
    cfg: &RunConfig,
    report: T,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(file);
    io::write_json(&path, &Envelope::new(command, cfg, report))?;
    Ok(path)
}

fn load_record(dir: &Path) -> Result<SolutionRecord> {
    io::read_record(dir)
}

/// Runs one parsed command.
pub fn dispatch(cli: &Cli) -> Result<()> {
    let mut cfg = cli.common.load()?;
    let out = cli.common.out_dir(&cfg);
    match &cli.command {
        Command::Constants => {
            let c = ModelConstants::compute(&cfg.params, None)?;
            std::fs::create_dir_all(&out)?;
            let flat = io::to_json(&c)?;
            std::fs::write(out.join("constants.json"), &flat)?;
            let report = ConstantsReport {
                constants: c,
                ring_width_sqrt_t_star: c.ring_width_sqrt_t_star(),
                t2_ceiling: c.t2_ceiling(),
                f1_bound: c.f1_bound(),
                f2_bound: c.f2_bound(),
            };
            emit(&out, "constants_report.json", "constants", &cfg, report)?;
            print!("{flat}");
        }
        Command::Simulate { record } => {
            let dir = record.clone().unwrap_or_else(|| out.join("record"));
            let rec = run_with(&cfg.params, &cfg.grid, cfg.relay, &cfg.options)?;
            io::write_record(&dir, &rec)?;
            let summary = SimulateSummary {
                record_dir: dir.clone(),
                n_snapshots: rec.n_snapshots(),
                n_nodes: rec.n_nodes(),
                t_end: *rec.times.last().unwrap_or(&0.0),
                ignited_nodes: rec.ignition_time.iter().filter(|t| t.is_some()).count(),
                constants: rec.constants,
                t1_scan: rec.t1_scan,
            };
            let path = emit(&out, "simulate.json", "simulate", &cfg, summary)?;
            println!(
                "record written to {}; summary in {}",
                dir.display(),
                path.display()
            );
        }
        Command::Analyze { record } => {
            let rec = load_record(record)?;
            let report =
                front::analyze(&rec, cfg.tolerances.measure_tol, cfg.tolerances.jump_factor)?;
            println!(
                "{} ring(s), {} interring(s), X* = {:.6}, first ring width {:?}",
                report.rings.len(),
                report.interrings.len(),
                report.x_star,
                report.first_ring_width
            );
            emit(&out, "front_report.json", "analyze", &cfg, report)?;
        }
        Command::Diagnose { record } => {
            let rec = load_record(record)?;
            let f = front::extract_front(&rec)?;
            let report = diagnostics::diagnose(
                &rec,
                &f,
                &cfg.probes,
                cfg.tolerances.slope_floor,
                cfg.tolerances.rate_floor,
            )?;
            let mut csv = String::from("x,t,f1,f2,psi_t,u_t,residual\n");
            for r in &report.probes {
                csv += &[r.x, r.t, r.f1, r.f2, r.psi_t, r.u_t, r.residual]
                    .map(io::fmt_f64)
                    .join(",");
                csv.push('\n');
            }
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("probes.csv"), csv)?;
            println!("max |identity residual| = {:.3e}", report.max_abs_residual);
            emit(&out, "diagnostics.json", "diagnose", &cfg, report)?;
        }
        Command::Toy {
            forcing,
            horizon,
            toy_dt,
        } => {
            let f = match forcing {
                Some(ForcingArg::Constant) => Forcing::half(),
                Some(ForcingArg::Linear) => Forcing::Linear,
                None => cfg.toy.forcing,
            };
            cfg.toy = ToyConfig::new(
                f,
                horizon.unwrap_or(cfg.toy.horizon),
                toy_dt.unwrap_or(cfg.toy.dt),
            )?;
            let table = toy::enumerate(&cfg.toy);
            print!("{}", table.render());
            emit(&out, "toy.json", "toy", &cfg, table)?;
        }
        Command::Compare {
            a,
            b,
            agreement_tol,
        } => {
            let ra = load_record(a)?;
            let rb = load_record(b)?;
            let tol = match agreement_tol {
                Some(t) => *t,
                None => self_refinement_tol(&ra, cfg.tolerances.agreement_factor)?,
            };
            let report = harness::compare(&ra, &rb, tol)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("comparison.csv"), report.to_csv())?;
            println!(
                "max sup_diff {:.3e} (tol {:.3e}), divergence at {:?}, entangled {}",
                report.sup_diff.iter().fold(0.0f64, |m, d| m.max(*d)),
                tol,
                report.divergence_time,
                report.entangled
            );
            emit(&out, "comparison.json", "compare", &cfg, report)?;
        }
        Command::Sweep => {
            let table = harness::perturbation_sweep(&cfg.sweep_base(), &cfg.perturbations())?;
            let mut csv =
                String::from("label,divergence_time,agrees_until_t_unique,max_sup_diff\n");
            println!(
                "T_unique = {:.6}, agreement_tol = {:.3e}",
                table.t_unique, table.agreement_tol
            );
            for r in &table.rows {
                csv += &format!(
                    "{},{},{},{}\n",
                    r.label,
                    r.divergence_time.map(io::fmt_f64).unwrap_or_default(),
                    r.agrees_until_t_unique,
                    io::fmt_f64(r.max_sup_diff)
                );
                println!(
                    "{:<20} divergence {:>14} max sup_diff {:.3e}",
                    r.label,
                    r.divergence_time
                        .map_or("none".into(), |t| format!("{t:.6}")),
                    r.max_sup_diff
                );
            }
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("sweep.csv"), csv)?;
            emit(&out, "sweep.json", "sweep", &cfg, table)?;
        }
    }
    Ok(())
}

/// `factor` times the sup distance between `record` and its `(dx/2, dt/4)`
/// refinement at `min(T_unique, t_end)`.
fn self_refinement_tol(record: &SolutionRecord, factor: f64) -> Result<f64> {
    let base = SweepBase {
        params: record.params,
        grid: record.grid,
        options: record.options,
        agreement_factor: factor,
    };
    let (grid, options) = harness::refined(&base)?;
    let fine = run_with(
        &record.params,
        &grid,
        crate::relay::RelayKind::Sharp,
        &options,
    )?;
    let t_end = record.constants.map_or(record.grid.t_max, |c| c.t_unique);
    Ok(factor * harness::refinement_error_at(record, &fine, t_end)?)
}

pub fn exit_code(err: &Error) -> u8 {
    if err.is_numerical() {
        2
    } else {
        1
    }
}

/// Entry point used by the binary.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
