//! Command-line front end: JSON config ingestion, solve and sweep commands,
//! CSV tables and a run manifest.
//!
//! Files use engineering units (sensing times in ms, powers in dBm, rates in
//! bps/Hz); everything is converted to SI/linear before it reaches the solver.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, LevelFilter};
use serde::{Deserialize, Serialize};

use crate::association::AssocOptions;
use crate::error::{Error, Result};
use crate::model::{approx_throughput, NetworkDims, Params, RadioParams, SensingParams};
use crate::orchestrator::{initial_allocation, solve_joint, AltConfig, FallbackPolicy};
use crate::power::PowerOptions;
use crate::scenario::{
    generate_instance, geometric_tau_grid, grid_rrh_coords, run_interruption, run_sweep, ScenarioSpec, SweepSpec,
    SweptParameter,
};

/// Process exit status for a successful run.
pub const EXIT_OK: i32 = 0;
/// Unexpected failure (I/O, numerical breakdown).
pub const EXIT_FAILURE: i32 = 1;
/// The optimization model has no feasible point.
pub const EXIT_INFEASIBLE: i32 = 2;
/// Bad command line or config file.
pub const EXIT_CONFIG: i32 = 3;

const DEFAULT_TRIALS: usize = 20;
const DEFAULT_INTERRUPTION_TRIALS: usize = 10_000;
const DEFAULT_TAU_POINTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    SweepTau,
    SweepPd,
    SweepPfa,
    SweepUsers,
    SweepRrhs,
    Interruption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Verbosity {
    Quiet,
    #[default]
    Normal,
    Verbose,
}

/// One invocation of the tool.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub seed_override: Option<u64>,
    pub trials_override: Option<usize>,
    pub verbosity: Verbosity,
}

/// A value that may be given once for every entry or as a full list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn expand(&self, n: usize) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone(); n],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimsSection {
    pub num_slices: usize,
    pub num_rrhs: usize,
    pub num_bbus: usize,
    pub num_subcarriers: usize,
    pub users_per_slice: OneOrMany<usize>,
    pub bbu_user_cap: usize,
    /// Row-major over (RRH, BBU) when given as a list.
    pub fronthaul_cap: OneOrMany<usize>,
}

impl Default for DimsSection {
    fn default() -> Self {
        Self {
            num_slices: 2,
            num_rrhs: 4,
            num_bbus: 3,
            num_subcarriers: 16,
            users_per_slice: OneOrMany::One(8),
            bbu_user_cap: 6,
            fronthaul_cap: OneOrMany::One(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingSection {
    pub target_pd: f64,
    pub target_pfa: OneOrMany<f64>,
    pub hvwn_snr_db: f64,
    pub sampling_freq_hz: f64,
    pub frame_len_ms: f64,
    pub hvwn_active_prob: f64,
}

impl Default for SensingSection {
    fn default() -> Self {
        Self {
            target_pd: 0.9,
            target_pfa: OneOrMany::One(0.2),
            hvwn_snr_db: -15.0,
            sampling_freq_hz: 1e6,
            frame_len_ms: 200.0,
            hvwn_active_prob: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    pub noise_power_dbm: f64,
    pub hvwn_interference_dbm: f64,
    pub max_power_dbm: OneOrMany<f64>,
    /// Reserved rate per slice in bps/Hz.
    pub reserved_rate: OneOrMany<f64>,
}

impl Default for RadioSection {
    fn default() -> Self {
        Self {
            noise_power_dbm: -100.0,
            hvwn_interference_dbm: -100.0,
            max_power_dbm: OneOrMany::One(30.0),
            reserved_rate: OneOrMany::One(4.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub area_side_km: f64,
    /// Defaults to cell centers of a square grid.
    pub rrh_coords_km: Option<Vec<(f64, f64)>>,
    pub pathloss_exp: f64,
    pub fading_mean: f64,
    pub seed: u64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            area_side_km: 2.0,
            rrh_coords_km: None,
            pathloss_exp: 3.0,
            fading_mean: 0.5,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub epsilon: f64,
    pub max_outer_iters: usize,
    pub warm_start: bool,
    pub fallback_on_infeasible_step: FallbackPolicy,
    pub fixed_tau_ms: Option<f64>,
    pub zeta: f64,
    pub power_max_iters: usize,
    pub power_inner_max_iters: usize,
    pub power_dual_rounds: usize,
    pub association_node_limit: u64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let alt = AltConfig::default();
        Self {
            epsilon: alt.epsilon,
            max_outer_iters: alt.max_outer_iters,
            warm_start: alt.warm_start,
            fallback_on_infeasible_step: alt.fallback_on_infeasible_step,
            fixed_tau_ms: None,
            zeta: alt.power.zeta,
            power_max_iters: alt.power.max_iters,
            power_inner_max_iters: alt.power.inner_max_iters,
            power_dual_rounds: alt.power.dual_rounds,
            association_node_limit: alt.association.node_limit,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Swept values; sensing times in ms. Each command has its own default.
    pub grid: Option<Vec<f64>>,
    /// Trials per grid point.
    pub trials: Option<usize>,
}

/// The JSON config document. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub dims: DimsSection,
    pub sensing: SensingSection,
    pub radio: RadioSection,
    pub scenario: ScenarioSection,
    pub solver: SolverSection,
    pub sweep: SweepSection,
}

fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Config with every default applied, lists expanded and units converted.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: ScenarioSpec,
    pub solver: AltConfig,
    /// Grid in solver units (seconds for sensing times).
    pub grid: Vec<f64>,
    pub trials: usize,
    /// The file-unit view written to the manifest.
    pub echo: FileConfig,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Apply defaults and overrides for `command` and validate the result.
    pub fn resolve(&self, command: Command, seed: Option<u64>, trials: Option<usize>) -> Result<Resolved> {
        let mut echo = self.clone();
        let d = &self.dims;
        let dims = NetworkDims {
            num_slices: d.num_slices,
            num_rrhs: d.num_rrhs,
            num_bbus: d.num_bbus,
            num_subcarriers: d.num_subcarriers,
            users_per_slice: d.users_per_slice.expand(d.num_slices),
            bbu_user_cap: d.bbu_user_cap,
            fronthaul_cap: d.fronthaul_cap.expand(d.num_rrhs * d.num_bbus),
        };
        let s = &self.sensing;
        let sensing = SensingParams {
            target_pd: s.target_pd,
            target_pfa: s.target_pfa.expand(d.num_subcarriers),
            hvwn_snr: 10f64.powf(s.hvwn_snr_db / 10.0),
            sampling_freq: s.sampling_freq_hz,
            frame_len: s.frame_len_ms * 1e-3,
            hvwn_active_prob: s.hvwn_active_prob,
        };
        let r = &self.radio;
        let radio = RadioParams {
            noise_power: dbm_to_watts(r.noise_power_dbm),
            hvwn_interference: dbm_to_watts(r.hvwn_interference_dbm),
            max_power: r.max_power_dbm.expand(d.num_rrhs).into_iter().map(dbm_to_watts).collect(),
            reserved_rate: r.reserved_rate.expand(d.num_slices),
        };
        let sc = &self.scenario;
        let rrh_coords = sc
            .rrh_coords_km
            .clone()
            .unwrap_or_else(|| grid_rrh_coords(d.num_rrhs, sc.area_side_km));
        let scenario = ScenarioSpec {
            area_side: sc.area_side_km,
            rrh_coords: rrh_coords.clone(),
            pathloss_exp: sc.pathloss_exp,
            fading_mean: sc.fading_mean,
            seed: seed.unwrap_or(sc.seed),
            params: Params { dims, sensing, radio },
        };
        scenario.validate()?;

        let so = &self.solver;
        let solver = AltConfig {
            epsilon: so.epsilon,
            max_outer_iters: so.max_outer_iters,
            warm_start: so.warm_start,
            fallback_on_infeasible_step: so.fallback_on_infeasible_step,
            fixed_tau: so.fixed_tau_ms.map(|t| t * 1e-3),
            association: AssocOptions {
                node_limit: so.association_node_limit,
            },
            power: PowerOptions {
                zeta: so.zeta,
                max_iters: so.power_max_iters,
                inner_max_iters: so.power_inner_max_iters,
                dual_rounds: so.power_dual_rounds,
            },
        };
        solver.validate()?;
        if let Some(t) = solver.fixed_tau {
            let frame = scenario.params.sensing.frame_len;
            if !(t > 0.0 && t <= frame) {
                return Err(Error::invalid("solver.fixed_tau_ms", "must lie in (0, frame_len_ms]"));
            }
        }

        let frame_ms = s.frame_len_ms;
        let grid_ms = match (&self.sweep.grid, command) {
            (Some(g), _) => g.clone(),
            (None, Command::Solve) => Vec::new(),
            (None, Command::SweepTau) => geometric_tau_grid(frame_ms, DEFAULT_TAU_POINTS),
            (None, Command::SweepPd) => vec![0.8, 0.9, 0.99],
            (None, Command::SweepPfa) => vec![0.1, 0.2, 0.3],
            (None, Command::SweepUsers) => vec![4.0, 8.0, 12.0],
            (None, Command::SweepRrhs) => vec![2.0, 4.0, 6.0],
            (None, Command::Interruption) => (1..=20).map(|i| (i * 10) as f64).collect(),
        };
        let in_ms = matches!(command, Command::SweepTau | Command::Interruption);
        let grid: Vec<f64> = if in_ms {
            grid_ms.iter().map(|t| t * 1e-3).collect()
        } else {
            grid_ms.clone()
        };
        if command != Command::Solve {
            if grid.is_empty() {
                return Err(Error::invalid("sweep.grid", "must not be empty"));
            }
            if !grid.windows(2).all(|w| w[0] < w[1]) {
                return Err(Error::invalid("sweep.grid", "must be strictly increasing"));
            }
            if in_ms && !grid.iter().all(|&t| t > 0.0 && t <= scenario.params.sensing.frame_len) {
                return Err(Error::invalid("sweep.grid", "sensing times must lie in (0, frame_len_ms]"));
            }
        }
        let default_trials = if command == Command::Interruption {
            DEFAULT_INTERRUPTION_TRIALS
        } else {
            DEFAULT_TRIALS
        };
        let trials = trials.or(self.sweep.trials).unwrap_or(default_trials);
        if trials == 0 {
            return Err(Error::invalid("sweep.trials", "must be >= 1"));
        }

        echo.dims.users_per_slice = OneOrMany::Many(scenario.params.dims.users_per_slice.clone());
        echo.dims.fronthaul_cap = OneOrMany::Many(scenario.params.dims.fronthaul_cap.clone());
        echo.sensing.target_pfa = OneOrMany::Many(scenario.params.sensing.target_pfa.clone());
        echo.radio.max_power_dbm = OneOrMany::Many(r.max_power_dbm.expand(d.num_rrhs));
        echo.radio.reserved_rate = OneOrMany::Many(scenario.params.radio.reserved_rate.clone());
        echo.scenario.rrh_coords_km = Some(rrh_coords);
        echo.scenario.seed = scenario.seed;
        if command != Command::Solve {
            echo.sweep.grid = Some(grid_ms);
            echo.sweep.trials = Some(trials);
        }
        Ok(Resolved {
            scenario,
            solver,
            grid,
            trials,
            echo,
        })
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    /// Resolved config; valid input for `--config`.
    pub config: FileConfig,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
}

/// Files produced by a run, before they are written.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub files: Vec<(String, String)>,
    pub manifest: Manifest,
}

impl RunOutput {
    /// Write every table plus `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            std::fs::write(dir.join(name), body)?;
        }
        let mut json = serde_json::to_string_pretty(&self.manifest).map_err(|e| Error::Config(e.to_string()))?;
        json.push('\n');
        std::fs::write(dir.join("manifest.json"), json)?;
        Ok(())
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Shortest decimal that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Run `command` on an already parsed config. Nothing touches the disk.
pub fn execute(command: Command, config: &FileConfig, seed: Option<u64>, trials: Option<usize>) -> Result<RunOutput> {
    let res = config.resolve(command, seed, trials)?;
    let spec = &res.scenario;
    let mut files: Vec<(String, String)> = Vec::new();
    let mut summary = serde_json::Value::Null;
    match command {
        Command::Solve => {
            let params = &spec.params;
            let dims = &params.dims;
            let inst = generate_instance(spec)?;
            let init = initial_allocation(params, &inst.channel, Some(&inst.distance), res.solver.fixed_tau)?;
            let (alloc, report) = solve_joint(&init, &inst.channel, params, &res.solver)?;

            let trajectory = report
                .objective_trajectory
                .iter()
                .zip(&report.residual_trajectory)
                .enumerate()
                .map(|(t, (o, r))| vec![(t + 1).to_string(), num(*o), num(*r)]);
            files.push(("trajectory.csv".into(), csv("iteration,objective,max_residual", trajectory)));

            let mut sensing = Vec::new();
            for r in 0..dims.num_rrhs {
                for k in 0..dims.num_subcarriers {
                    sensing.push(vec![r.to_string(), k.to_string(), num(alloc.tau[dims.rk(r, k)] * 1e3)]);
                }
            }
            files.push(("sensing.csv".into(), csv("rrh,subcarrier,tau_ms", sensing)));

            let slice_of = dims.slice_of_users();
            let mut cells = Vec::new();
            let mut user_rate = vec![0.0; dims.num_users()];
            for r in 0..dims.num_rrhs {
                for k in 0..dims.num_subcarriers {
                    for n in 0..dims.num_users() {
                        let c = dims.cell(r, k, n);
                        if !alloc.beta[c] {
                            continue;
                        }
                        let rate = approx_throughput(params, r, k, n, &alloc, &inst.channel, params.sensing.target_pfa[k])?;
                        user_rate[n] += rate;
                        cells.push(vec![
                            r.to_string(),
                            k.to_string(),
                            n.to_string(),
                            slice_of[n].to_string(),
                            num(watts_to_dbm(alloc.power[c])),
                            num(rate),
                        ]);
                    }
                }
            }
            files.push((
                "allocation.csv".into(),
                csv("rrh,subcarrier,user,slice,power_dbm,rate", cells),
            ));

            let users = (0..dims.num_users()).map(|n| {
                let (x, y) = inst.user_positions[n];
                vec![
                    n.to_string(),
                    slice_of[n].to_string(),
                    num(x * 1e-3),
                    num(y * 1e-3),
                    opt(alloc.rrh_of(dims, n)),
                    opt(alloc.bbu_of(dims, n)),
                    num(user_rate[n]),
                ]
            });
            files.push(("users.csv".into(), csv("user,slice,x_km,y_km,rrh,bbu,rate", users)));

            summary = serde_json::json!({
                "objective": report.objective_trajectory.last().copied().unwrap_or(report.initial_objective),
                "initial_objective": report.initial_objective,
                "iterations": report.iterations,
                "converged": report.converged,
                "constraint_residuals": report.constraint_residuals,
                "fallbacks": report.fallbacks.iter().map(|(t, s, why)| {
                    serde_json::json!({"iteration": t, "step": s, "reason": why})
                }).collect::<Vec<_>>(),
            });
        }
        Command::Interruption => {
            let rows = run_interruption(spec, &res.grid, res.trials)?;
            let body = csv(
                "tau_ms,p_interrupt,stderr",
                rows.iter()
                    .map(|(t, e)| vec![num(t * 1e3), num(e.mean), num(e.stderr)]),
            );
            files.push(("interruption.csv".into(), body));
        }
        _ => {
            let (swept, file, column) = match command {
                Command::SweepTau => (SweptParameter::Tau, "sweep_tau.csv", "tau_ms"),
                Command::SweepPd => (SweptParameter::TargetPd, "sweep_pd.csv", "target_pd"),
                Command::SweepPfa => (SweptParameter::TargetPfa, "sweep_pfa.csv", "target_pfa"),
                Command::SweepUsers => (SweptParameter::NumUsers, "sweep_users.csv", "users_per_slice"),
                Command::SweepRrhs => (SweptParameter::NumRrhs, "sweep_rrhs.csv", "num_rrhs"),
                Command::Solve | Command::Interruption => unreachable!(),
            };
            let sweep = SweepSpec {
                swept_parameter: swept,
                grid: res.grid.clone(),
                trials_per_point: res.trials,
                base: spec.clone(),
                solver: res.solver.clone(),
            };
            let rows = run_sweep(&sweep)?;
            let searches_tau = matches!(command, Command::SweepPd | Command::SweepPfa | Command::SweepRrhs);
            let mut header = column.to_string();
            if searches_tau {
                header.push_str(",opt_tau_ms");
            }
            header.push_str(",throughput,stderr,infeasible_trials");
            let body = csv(
                &header,
                rows.iter().map(|row| {
                    let value = if command == Command::SweepTau { row.value * 1e3 } else { row.value };
                    let mut cols = vec![num(value)];
                    if searches_tau {
                        cols.push(row.opt_tau.map(|t| num(t * 1e3)).unwrap_or_default());
                    }
                    cols.push(num(row.throughput.mean));
                    cols.push(num(row.throughput.stderr));
                    cols.push(row.infeasible_trials.to_string());
                    cols
                }),
            );
            files.push((file.into(), body));
        }
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
        seed: spec.seed,
        config: res.echo,
        outputs: files.iter().map(|(n, _)| n.clone()).collect(),
        summary,
    };
    Ok(RunOutput { files, manifest })
}

/// Read the config, run the command, then write all outputs. Outputs are only
/// written once the whole computation has succeeded.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let text = std::fs::read_to_string(&cfg.config_path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", cfg.config_path.display())))?;
    let file = FileConfig::parse(&text)?;
    let out = execute(cfg.command, &file, cfg.seed_override, cfg.trials_override)?;
    out.write(&cfg.output_dir)?;
    info!("wrote {} files to {}", out.files.len() + 1, cfg.output_dir.display());
    Ok(out)
}

/// Exit status for an error returned by [`run`].
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::Domain(_) => EXIT_CONFIG,
        Error::Unattainable(_) => EXIT_INFEASIBLE,
        e if e.is_infeasible() => EXIT_INFEASIBLE,
        _ => EXIT_FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "cran-sense", version, about = "Joint sensing, association and power optimization for sliced C-RAN")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Solve one drawn deployment and dump the allocation.
    Solve(CommonArgs),
    /// Mean throughput over a grid of fixed sensing times.
    SweepTau(CommonArgs),
    /// Best sensing time for each target detection probability.
    SweepPd(CommonArgs),
    /// Best sensing time for each target false-alarm probability.
    SweepPfa(CommonArgs),
    /// Joint-solve throughput for each number of users per slice.
    SweepUsers(CommonArgs),
    /// Best sensing time for each number of RRHs.
    SweepRrhs(CommonArgs),
    /// Interruption probability over a grid of sensing times.
    Interruption(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Override scenario.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override sweep.trials.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, conflicts_with = "verbose")]
    quiet: bool,
    #[arg(long)]
    verbose: bool,
}

impl Cmd {
    fn into_run_config(self) -> RunConfig {
        let (command, a) = match self {
            Cmd::Solve(a) => (Command::Solve, a),
            Cmd::SweepTau(a) => (Command::SweepTau, a),
            Cmd::SweepPd(a) => (Command::SweepPd, a),
            Cmd::SweepPfa(a) => (Command::SweepPfa, a),
            Cmd::SweepUsers(a) => (Command::SweepUsers, a),
            Cmd::SweepRrhs(a) => (Command::SweepRrhs, a),
            Cmd::Interruption(a) => (Command::Interruption, a),
        };
        let verbosity = if a.quiet {
            Verbosity::Quiet
        } else if a.verbose {
            Verbosity::Verbose
        } else {
            Verbosity::Normal
        };
        RunConfig {
            command,
            config_path: a.config,
            output_dir: a.out,
            seed_override: a.seed,
            trials_override: a.trials,
            verbosity,
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let cfg = cli.command.into_run_config();
    let level = match cfg.verbosity {
        Verbosity::Quiet => LevelFilter::Error,
        Verbosity::Normal => LevelFilter::Warn,
        Verbosity::Verbose => LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match run(&cfg) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
