//! Command-line front end. Every run writes `manifest.json` and the resolved
//! `config.toml` into the output directory, even when the run fails.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use moldflux::alifanov;
use moldflux::benchmarks::{
    relative_error_norms, run_convergence_study, run_eta_sweep, run_noise_study, run_pg_sweep, Estimator,
    IndustrialCase,
};
use moldflux::config::{BenchmarkKind, MethodKind, Problem, RunConfig};
use moldflux::io::csv::{fmt_f64, read_readings, write_face_field, write_points, write_rows, write_trace, write_values};
use moldflux::io::vtk::{write_boundary_field, write_cell_field};
use moldflux::measurements::add_noise_stream;
use moldflux::rbf_param::{
    build_offline, load_artifact, online_solve, reconstruct_flux, save_artifact, RbfBasis,
};
use moldflux::solvers::{patch_integral, solve_direct};
use moldflux::{Error, PatchId, Result, StructuredGrid};

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "moldflux", version, about = "Boundary heat-flux estimation from interior temperature sensors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Built-in parameter set: analytical or industrial.
    #[arg(long, global = true, conflicts_with = "config")]
    pub preset: Option<String>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel studies.
    #[arg(long, global = true, env = "MOLDFLUX_THREADS")]
    pub threads: Option<usize>,
    /// Industrial benchmark at full resolution.
    #[arg(long, global = true)]
    pub full: bool,
    /// Grid cells as nx,ny,nz.
    #[arg(long, global = true, value_delimiter = ',')]
    pub cells: Option<Vec<usize>>,
    /// Inverse method: param or alifanov.
    #[arg(long, global = true)]
    pub method: Option<String>,
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Online regularization: lu or tsvd:<alpha>.
    #[arg(long, global = true)]
    pub reg: Option<String>,
    /// Cost functional: j1 or j2.
    #[arg(long, global = true)]
    pub mode: Option<String>,
    #[arg(long = "p-g", global = true)]
    pub p_g: Option<f64>,
    /// Measurement noise standard deviation (K).
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub j_tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Stop the conjugate gradient iteration by the discrepancy principle.
    #[arg(long, global = true)]
    pub discrepancy: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the direct problem with the benchmark flux.
    Direct,
    /// Grid convergence study on the analytical benchmark.
    Converge {
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
    },
    /// Estimate the flux from the configured readings.
    Invert,
    /// Build and save the offline parameterization artifact.
    Offline {
        /// Artifact path; defaults to artifact.bin in the output directory.
        #[arg(long)]
        artifact: Option<PathBuf>,
    },
    /// Online solve against a saved artifact.
    Online {
        #[arg(long)]
        artifact: PathBuf,
        /// CSV with a value column, optionally x,y,z.
        #[arg(long)]
        measurements: PathBuf,
    },
    /// Error statistics over noisy repetitions.
    NoiseStudy {
        #[arg(long, value_delimiter = ',')]
        omegas: Option<Vec<f64>>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Clean-data parameterization errors and conditioning against η.
    EtaSweep {
        #[arg(long, value_delimiter = ',')]
        etas: Option<Vec<f64>>,
    },
    /// Total-heat weight study.
    PgSweep {
        #[arg(long = "pg-values", value_delimiter = ',')]
        pg_values: Option<Vec<f64>>,
    },
    /// Print an artifact's metadata.
    InspectArtifact {
        #[arg(long)]
        artifact: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Direct => "direct",
            Command::Converge { .. } => "converge",
            Command::Invert => "invert",
            Command::Offline { .. } => "offline",
            Command::Online { .. } => "online",
            Command::NoiseStudy { .. } => "noise-study",
            Command::EtaSweep { .. } => "eta-sweep",
            Command::PgSweep { .. } => "pg-sweep",
            Command::InspectArtifact { .. } => "inspect-artifact",
        }
    }
}

/// Collects what a run produced for the manifest.
struct Run {
    out: PathBuf,
    outputs: Vec<String>,
    inputs: Vec<PathBuf>,
    results: serde_json::Map<String, Value>,
}

impl Run {
    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_owned());
        self.out.join(name)
    }

    fn result(&mut self, key: &str, v: Value) {
        self.results.insert(key.to_owned(), v);
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T> {
    serde_json::from_value(Value::String(s.to_ascii_lowercase()))
        .map_err(|_| Error::Config(format!("invalid {what} '{s}'")))
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let c = &cli.common;
    let mut cfg = match (&c.config, &c.preset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(p)) => RunConfig::preset(p)?,
        (None, None) => RunConfig::preset("analytical")?,
    };
    if c.full {
        if cfg.benchmark.kind != BenchmarkKind::Industrial {
            return Err(Error::Config("--full applies to the industrial benchmark only".into()));
        }
        cfg.grid.cells = IndustrialCase::FULL_CELLS;
    }
    if let Some(cells) = &c.cells {
        let [nx, ny, nz] = cells[..] else {
            return Err(Error::Config(format!("--cells needs three values, got {}", cells.len())));
        };
        cfg.grid.cells = [nx, ny, nz];
    }
    if let Some(m) = &c.method {
        cfg.method.kind = parse_enum("method", m)?;
    }
    if let Some(e) = c.eta {
        cfg.method.eta = e;
    }
    if let Some(r) = &c.reg {
        cfg.method.reg = r.clone();
    }
    if let Some(m) = &c.mode {
        cfg.cost.mode = parse_enum("cost mode", m)?;
    }
    if let Some(p) = c.p_g {
        cfg.cost.p_g = p;
    }
    if let Some(w) = c.omega {
        cfg.noise.omega = w;
    }
    if let Some(s) = c.seed {
        cfg.noise.seed = s;
    }
    if let Some(t) = c.j_tol {
        cfg.method.j_tol = t;
    }
    if let Some(n) = c.max_iter {
        cfg.method.max_iter = n;
    }
    if c.discrepancy {
        cfg.method.discrepancy = true;
    }
    match &cli.command {
        Command::Converge { levels: Some(l) } => cfg.study.levels = l.clone(),
        Command::NoiseStudy { omegas, reps } => {
            if let Some(o) = omegas {
                cfg.noise.omegas = o.clone();
            }
            if let Some(r) = reps {
                cfg.noise.reps = *r;
            }
        }
        Command::EtaSweep { etas: Some(e) } => cfg.study.etas = e.clone(),
        Command::PgSweep { pg_values: Some(p) } => cfg.study.pg_values = p.clone(),
        _ => {}
    }
    if let Some(out) = &c.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Hash in the style of a git blob id, chained over all inputs.
fn input_hash(config_text: &str, inputs: &[PathBuf]) -> String {
    let mut h = Sha256::new();
    let mut blob = |bytes: &[u8]| {
        h.update(format!("blob {}\0", bytes.len()).as_bytes());
        h.update(bytes);
    };
    blob(config_text.as_bytes());
    for p in inputs {
        match fs::read(p) {
            Ok(b) => blob(&b),
            Err(_) => blob(p.to_string_lossy().as_bytes()),
        }
    }
    hex::encode(h.finalize())
}

fn write_manifest(
    out: &Path,
    cli_args: &[String],
    command: &str,
    cfg: Option<&RunConfig>,
    run: &Run,
    status: std::result::Result<(), &Error>,
    elapsed: f64,
) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let text = cfg.map(RunConfig::to_toml).unwrap_or_default();
    if cfg.is_some() {
        fs::write(out.join("config.toml"), &text)?;
    }
    let manifest = json!({
        "tool": "moldflux",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "argv": cli_args,
        "config": cfg,
        "seed": cfg.map(|c| c.noise.seed),
        "inputs": run.inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "input_hash": input_hash(&text, &run.inputs),
        "outputs": run.outputs,
        "results": run.results,
        "status": if status.is_ok() { "ok" } else { "error" },
        "error": status.err().map(|e| e.to_string()),
        "elapsed_seconds": elapsed,
    });
    let body = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    fs::write(out.join("manifest.json"), body + "\n")
}

fn problem(cfg: &RunConfig, run: &mut Run) -> Result<Problem> {
    if let Some(f) = &cfg.sensors.file {
        run.inputs.push(f.clone());
    }
    cfg.problem()
}

/// Readings with noise of the configured ω (stream 0 of the seed).
fn readings(cfg: &RunConfig, p: &Problem) -> Result<Vec<f64>> {
    if cfg.noise.omega > 0.0 {
        add_noise_stream(&p.setup.clean, cfg.noise.omega, cfg.noise.seed, 0)
    } else {
        Ok(p.setup.clean.clone())
    }
}

fn write_errors(cfg: &RunConfig, run: &mut Run, grid: &StructuredGrid, g: &[f64], p: &Problem) -> Result<()> {
    let total = patch_integral(grid, PatchId::SIn, g);
    run.result("total_heat", json!(total));
    if !p.has_truth {
        return Ok(());
    }
    if cfg.benchmark.kind == BenchmarkKind::Industrial && cfg.grid.cells != IndustrialCase::FULL_CELLS {
        run.result(
            "error_band",
            json!("desk resolution: L2 <= 5% for clean LU and <= 10% for TSVD at omega 0.5 K; the <= 2% band applies to --full"),
        );
    }
    let (l2, linf) = relative_error_norms(grid, g, &p.setup.reference)?;
    let th = (total - p.setup.total_heat).abs() / p.setup.total_heat.abs();
    let path = run.path("errors.csv");
    write_rows(
        &path,
        &["metric", "value"],
        [("l2_rel", l2), ("linf_rel", linf), ("total_heat_rel", th)]
            .iter()
            .map(|(k, v)| vec![k.to_string(), fmt_f64(*v)]),
    )?;
    run.result("l2_rel", json!(l2));
    run.result("linf_rel", json!(linf));
    run.result("total_heat_rel", json!(th));
    Ok(())
}

fn write_flux(run: &mut Run, grid: &StructuredGrid, g: &[f64]) -> Result<()> {
    let centers = grid.patch_face_centers(PatchId::SIn);
    let p = run.path("flux.csv");
    write_face_field(&p, &centers, g)?;
    let p = run.path("flux.vtk");
    write_boundary_field(&p, grid, "heat_flux", g)
}

fn cmd_direct(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let p = problem(cfg, run)?;
    let case = &p.setup.case;
    let t = solve_direct(case)?;
    let grid = case.grid();
    let path = run.path("temperature.vtk");
    write_cell_field(&path, grid, &t, "temperature")?;
    let values = t.sample_points(grid, &p.setup.sensors)?;
    let path = run.path("readings.csv");
    moldflux::io::csv::write_readings(&path, &p.setup.sensors, &values)?;
    write_flux(run, grid, &case.g)?;
    let (lo, hi) = t.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    run.result("t_min", json!(lo));
    run.result("t_max", json!(hi));
    Ok(())
}

fn cmd_converge(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    if cfg.benchmark.kind != BenchmarkKind::Analytical {
        return Err(Error::Config("converge needs the analytical benchmark".into()));
    }
    let report = run_convergence_study(&cfg.analytical(), &cfg.study.levels)?;
    let path = run.path("convergence.csv");
    write_rows(
        &path,
        &["n", "spacing", "abs_l2", "rel_l2", "cell_abs_l2", "cell_rel_l2"],
        report.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                fmt_f64(r.spacing),
                fmt_f64(r.abs_l2),
                fmt_f64(r.rel_l2),
                fmt_f64(r.cell_abs_l2),
                fmt_f64(r.cell_rel_l2),
            ]
        }),
    )?;
    run.result("slope", json!(report.slope));
    run.result("cell_slope", json!(report.cell_slope));
    match report.slope {
        Some(s) => say!("log-log slope of the L2 error: {s:.4}"),
        None => say!("single level; no slope"),
    }
    Ok(())
}

fn cmd_invert(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let p = problem(cfg, run)?;
    let setup = &p.setup;
    let grid = setup.case.grid();
    let t_hat = readings(cfg, &p)?;
    let mode = cfg.cost_mode(setup.total_heat);
    let path = run.path("readings.csv");
    moldflux::io::csv::write_readings(&path, &setup.sensors, &t_hat)?;
    let g = match cfg.method.kind {
        MethodKind::Param => {
            let basis = RbfBasis::from_sensors(grid, &setup.sensors, cfg.method.eta)?;
            let artifact = build_offline(&setup.case, &basis, &setup.sensors)?;
            let w = online_solve(&artifact, &t_hat, cfg.regularization()?, &mode)?;
            let path = run.path("weights.csv");
            write_values(&path, &w)?;
            reconstruct_flux(&basis, grid, &w)?
        }
        MethodKind::Alifanov => {
            let mut rule = cfg.stopping_rule();
            if let Some(dp) = rule.discrepancy.as_mut() {
                dp.omega = cfg.noise.omega;
                dp.sensors = setup.sensors.len();
            }
            let sensors = setup.measurements(t_hat)?;
            let g0 = vec![cfg.method.g0; setup.case.flux_len()];
            let reference = p.has_truth.then_some(setup.reference.as_slice());
            let out = alifanov::run(&setup.case, &sensors, &g0, &rule, &mode, reference)?;
            let path = run.path("trace.csv");
            write_trace(&path, &out.trace)?;
            run.result("iterations", json!(out.state.iter));
            run.result("stop_reason", json!(out.reason));
            run.result("stagnated", json!(out.stagnated));
            out.g
        }
    };
    write_flux(run, grid, &g)?;
    write_errors(cfg, run, grid, &g, &p)
}

fn cmd_offline(cfg: &RunConfig, run: &mut Run, artifact: Option<&Path>) -> Result<()> {
    let p = problem(cfg, run)?;
    let setup = &p.setup;
    let basis = RbfBasis::from_sensors(setup.case.grid(), &setup.sensors, cfg.method.eta)?;
    let start = Instant::now();
    let art = build_offline(&setup.case, &basis, &setup.sensors)?;
    run.result("offline_seconds", json!(start.elapsed().as_secs_f64()));
    let path = match artifact {
        Some(a) => a.to_path_buf(),
        None => run.path("artifact.bin"),
    };
    save_artifact(&art, &path)?;
    let sp = run.path("sensors.csv");
    write_points(&sp, &setup.sensors)?;
    run.result("artifact", json!(path.display().to_string()));
    run.result("case_hash", json!(art.metadata.case_hash));
    say!("{}", path.display());
    Ok(())
}

fn cmd_online(cfg: &RunConfig, run: &mut Run, artifact: &Path, measurements: &Path) -> Result<()> {
    run.inputs.push(artifact.to_path_buf());
    run.inputs.push(measurements.to_path_buf());
    let art = load_artifact(artifact)?;
    let p = problem(cfg, run)?;
    let setup = &p.setup;
    let basis = RbfBasis::from_sensors(setup.case.grid(), &setup.sensors, cfg.method.eta)?;
    art.verify_against(&setup.case, &basis, &setup.sensors)?;
    let (points, t_hat) = read_readings(measurements)?;
    if let Some(points) = points {
        let same = points.len() == art.sensors().len()
            && points.iter().zip(art.sensors()).all(|(a, b)| (0..3).all(|i| (a[i] - b[i]).abs() <= 1e-9));
        if !same {
            return Err(Error::Integrity("measurement positions differ from the artifact's sensors".into()));
        }
    }
    let mode = cfg.cost_mode(setup.total_heat);
    let start = Instant::now();
    let w = online_solve(&art, &t_hat, cfg.regularization()?, &mode)?;
    run.result("online_seconds", json!(start.elapsed().as_secs_f64()));
    let path = run.path("weights.csv");
    write_values(&path, &w)?;
    let grid = setup.case.grid();
    let g = reconstruct_flux(&basis, grid, &w)?;
    write_flux(run, grid, &g)?;
    write_errors(cfg, run, grid, &g, &p)
}

fn truth_required(p: &Problem, what: &str) -> Result<()> {
    if p.has_truth {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} needs a benchmark with a known flux")))
    }
}

fn cmd_noise(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let p = problem(cfg, run)?;
    truth_required(&p, "noise-study")?;
    let est = Estimator::prepare(&p.setup, &cfg.method()?)?;
    let mode = cfg.cost_mode(p.setup.total_heat);
    let stats = run_noise_study(&p.setup, &est, &mode, &cfg.noise.omegas, cfg.noise.reps, cfg.noise.seed)?;
    let path = run.path("noise.csv");
    write_rows(
        &path,
        &["omega", "reps", "mean_l2", "q05_l2", "q95_l2", "mean_linf", "q05_linf", "q95_linf"],
        stats.iter().map(|s| {
            vec![
                fmt_f64(s.omega),
                s.reps.to_string(),
                fmt_f64(s.mean_l2),
                fmt_f64(s.q05_l2),
                fmt_f64(s.q95_l2),
                fmt_f64(s.mean_linf),
                fmt_f64(s.q05_linf),
                fmt_f64(s.q95_linf),
            ]
        }),
    )?;
    Ok(())
}

fn cmd_eta(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let p = problem(cfg, run)?;
    truth_required(&p, "eta-sweep")?;
    let rows = run_eta_sweep(&p.setup, &cfg.study.etas, cfg.regularization()?)?;
    let path = run.path("eta.csv");
    write_rows(
        &path,
        &["eta", "l2", "linf", "condition_number", "rank", "sigma_ratio_half"],
        rows.iter().map(|r| {
            vec![
                fmt_f64(r.eta),
                fmt_f64(r.l2),
                fmt_f64(r.linf),
                fmt_f64(r.condition_number),
                r.rank.to_string(),
                fmt_f64(r.sigma_ratio_half),
            ]
        }),
    )
}

fn cmd_pg(cfg: &RunConfig, run: &mut Run) -> Result<()> {
    let p = problem(cfg, run)?;
    truth_required(&p, "pg-sweep")?;
    let est = Estimator::prepare(&p.setup, &cfg.method()?)?;
    let mut setup = p.setup.clone();
    if let Some(g_hat) = cfg.cost.g_hat {
        setup.total_heat = g_hat;
    }
    let rows = run_pg_sweep(&setup, &est, &cfg.study.pg_values)?;
    let path = run.path("pg.csv");
    write_rows(
        &path,
        &["p_g", "l2", "linf", "total_heat_rel_err"],
        rows.iter()
            .map(|r| vec![fmt_f64(r.p_g), fmt_f64(r.l2), fmt_f64(r.linf), fmt_f64(r.total_heat_rel_err)]),
    )
}

fn cmd_inspect(run: &mut Run, artifact: &Path) -> Result<()> {
    run.inputs.push(artifact.to_path_buf());
    let art = load_artifact(artifact)?;
    let meta = serde_json::to_value(&art.metadata)?;
    let text = serde_json::to_string_pretty(&json!({
        "metadata": meta,
        "rows": art.theta.nrows(),
        "cols": art.theta.ncols(),
    }))?;
    say!("{text}");
    let path = run.path("artifact.json");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn dispatch(cli: &Cli, cfg: Option<&RunConfig>, run: &mut Run) -> Result<()> {
    fs::create_dir_all(&run.out).map_err(|e| Error::io(&run.out, e))?;
    if let Command::InspectArtifact { artifact } = &cli.command {
        return cmd_inspect(run, artifact);
    }
    let cfg = cfg.expect("config resolved for this command");
    match &cli.command {
        Command::Direct => cmd_direct(cfg, run),
        Command::Converge { .. } => cmd_converge(cfg, run),
        Command::Invert => cmd_invert(cfg, run),
        Command::Offline { artifact } => cmd_offline(cfg, run, artifact.as_deref()),
        Command::Online { artifact, measurements } => cmd_online(cfg, run, artifact, measurements),
        Command::NoiseStudy { .. } => cmd_noise(cfg, run),
        Command::EtaSweep { .. } => cmd_eta(cfg, run),
        Command::PgSweep { .. } => cmd_pg(cfg, run),
        Command::InspectArtifact { .. } => unreachable!(),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn main_with(argv: Vec<OsString>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let start = Instant::now();

    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    let cfg = match &cli.command {
        Command::InspectArtifact { .. } => Ok(None),
        _ => resolve_config(&cli).map(Some),
    };
    let out = match &cfg {
        Ok(Some(c)) => c.output.dir.clone(),
        _ => cli.common.out.clone().unwrap_or_else(|| PathBuf::from("out")),
    };
    let mut run = Run {
        out: out.clone(),
        outputs: Vec::new(),
        inputs: cli.common.config.iter().cloned().collect(),
        results: Default::default(),
    };
    let result = match &cfg {
        Ok(c) => dispatch(&cli, c.as_ref(), &mut run),
        Err(e) => Err(Error::Config(e.to_string().trim_start_matches("configuration error: ").to_owned())),
    };
    let cfg_ref = cfg.as_ref().ok().and_then(|c| c.as_ref());
    let elapsed = start.elapsed().as_secs_f64();
    if let Err(e) = write_manifest(&out, &args, cli.command.name(), cfg_ref, &run, result.as_ref().map(|_| ()), elapsed) {
        eprintln!("moldflux: could not write manifest to {}: {e}", out.display());
    }
    match result {
        Ok(()) => {
            log::info!("{} finished in {elapsed:.3} s", cli.command.name());
            0
        }
        Err(e) => {
            eprintln!("moldflux: {e}");
            exit_code(&e)
        }
    }
}
