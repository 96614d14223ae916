//! `metashock`: steady states, evolutions, family sweeps, spectra and the
//! table/figure data, written as CSV/JSON with a checksummed manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use metashock::config::{Config, SpectrumProfile};
use metashock::evolve::{self, EvolveOptions, Trajectory};
use metashock::experiments::{self, SPEED_STOP_THRESHOLD, SPEED_WINDOW_START, TABLE_TIMES};
use metashock::{family, spectral, steady, Error, Grid, GridField, ProblemSpec};

#[derive(Parser, Debug)]
#[command(name = "metashock", version, about = "Metastable shock layers under saturating diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; METASHOCK_OUT takes precedence.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Number of grid cells (overrides the config).
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monotone steady state: steady.csv and steady.json.
    Steady,
    /// Time evolution: trajectory.csv and one snapshot per output time.
    Evolve,
    /// Sweep of the approximate family: family.csv.
    Family,
    /// Eigenpairs of the linearization: spectrum.json, eigenfunctions.csv.
    Spectrum,
    /// Reduced interface equation: reduced.csv.
    Reduce,
    /// Interface tables.
    Tables {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        table: u8,
    },
    /// Snapshot data behind a figure.
    Figures {
        #[arg(long)]
        figure: String,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::ConfigParse { .. } | Error::InvalidSpec(_) => 2,
            _ => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

#[derive(Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Serialize)]
struct GridSummary {
    n_cells: usize,
    ell: f64,
    spacing: f64,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    spec: Option<ProblemSpec>,
    grid: Option<GridSummary>,
    scheme: String,
    output_dir: String,
    tool_version: String,
    wall_time: f64,
    config: Option<String>,
    determinism: String,
    files: Vec<FileEntry>,
}

/// Collects artifacts in memory; everything is written at the end together
/// with the manifest.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn add(&mut self, path: impl Into<String>, body: impl Into<Vec<u8>>) {
        self.files.push((path.into(), body.into()));
    }

    fn extend(&mut self, prefix: &str, other: Artifacts) {
        for (p, b) in other.files {
            self.files.push((format!("{prefix}/{p}"), b));
        }
    }
}

fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn json_text(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t:e}.csv")
}

fn field_csv(u: &GridField) -> String {
    csv(&["x", "u"], u.grid.nodes.iter().zip(&u.values).map(|(x, v)| vec![*x, *v]))
}

fn trajectory_artifacts(traj: &Trajectory) -> Artifacts {
    let mut a = Artifacts::default();
    a.add(
        "trajectory.csv",
        csv(
            &["t", "xi", "sup_u", "sup_z", "l2_dist", "dt"],
            traj.diagnostics.iter().map(|d| vec![d.t, d.xi, d.sup_u, d.sup_z, d.l2_dist, d.dt]),
        ),
    );
    for s in &traj.snapshots {
        a.add(snapshot_name(s.time), field_csv(s));
    }
    a
}

struct Context {
    config: Option<Config>,
    config_text: Option<String>,
    grid_override: Option<usize>,
}

impl Context {
    fn config(&self) -> Result<&Config, Failure> {
        self.config.as_ref().ok_or_else(|| config_error("this command needs --config"))
    }

    fn cells(&self) -> usize {
        self.grid_override.or(self.config.as_ref().map(|c| c.run.grid)).unwrap_or(Grid::DEFAULT_CELLS)
    }
}

struct Outcome {
    artifacts: Artifacts,
    spec: Option<ProblemSpec>,
    grid: Option<Grid>,
    scheme: String,
}

fn steady_reference(spec: &ProblemSpec, grid: &Grid) -> Option<GridField> {
    let report = metashock::check_existence(spec, spec.direction()).ok()?;
    if !report.exists() {
        return None;
    }
    steady::steady_state(spec, grid).ok().map(|s| s.profile)
}

fn cmd_steady(ctx: &Context) -> Result<Outcome, Failure> {
    let cfg = ctx.config()?;
    let spec = cfg.spec;
    let grid = Grid::for_spec(&spec, ctx.cells())?;
    let report = metashock::check_existence(&spec, spec.direction())?;
    if !report.exists() {
        let why = if !report.gap_ok {
            format!("flux oscillation M - m = {} is not below epsilon = {}", report.big_m - report.m, spec.epsilon)
        } else {
            format!("domain length {} does not exceed the threshold {}", 2.0 * spec.ell, report.c_threshold)
        };
        return Err(Failure { code: 4, message: format!("no monotone steady state: {why}") });
    }
    let s = steady::steady_state(&spec, &grid)?;
    let mut a = Artifacts::default();
    a.add(
        "steady.csv",
        csv(
            &["x", "u", "slope"],
            grid.nodes.iter().zip(&s.profile.values).zip(&s.slope.values).map(|((x, u), d)| vec![*x, *u, *d]),
        ),
    );
    a.add(
        "steady.json",
        json_text(&json!({
            "epsilon": spec.epsilon,
            "ell": spec.ell,
            "C": s.c_const,
            "direction": spec.direction().as_str(),
            "c_threshold": report.c_threshold,
        })),
    );
    Ok(Outcome { artifacts: a, spec: Some(spec), grid: Some(grid), scheme: "exact quadrature".into() })
}

fn cmd_evolve(ctx: &Context) -> Result<Outcome, Failure> {
    let cfg = ctx.config()?;
    let spec = cfg.spec;
    let grid = Grid::for_spec(&spec, ctx.cells())?;
    let u0 = cfg.initial_field(&grid);
    let opts = EvolveOptions { disc: cfg.run.disc, reference: steady_reference(&spec, &grid), ..EvolveOptions::default() };
    let traj = evolve::evolve(&spec, &u0, cfg.run.t_end, &cfg.run.times, &opts).map_err(|e| Failure::from(e.source))?;
    Ok(Outcome {
        artifacts: trajectory_artifacts(&traj),
        spec: Some(spec),
        grid: Some(grid),
        scheme: format!("bdf1/{}", cfg.run.disc.label()),
    })
}

fn cmd_family(ctx: &Context) -> Result<Outcome, Failure> {
    let cfg = ctx.config()?;
    let spec = cfg.spec;
    let grid = Grid::for_spec(&spec, ctx.cells())?;
    let (lo, hi) = family::xi_range(&spec)?;
    let a = cfg.family.xi_min.unwrap_or(lo);
    let b = cfg.family.xi_max.unwrap_or(hi);
    let n = cfg.family.xi_count.max(1);
    let xis: Vec<f64> =
        (0..n).map(|k| if n == 1 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 }).collect();
    let rows: Vec<Vec<f64>> = xis
        .par_iter()
        .map(|&xi| -> metashock::Result<Vec<f64>> {
            let k = family::solve_kappas(xi, &spec)?;
            let th = match cfg.family.theta {
                family::ThetaMode::HyperbolicClosedForm => family::theta(xi, &spec, cfg.family.theta)?,
                family::ThetaMode::DiscreteAdjoint => family::theta_discrete(xi, &spec, &grid)?,
            };
            Ok(vec![xi, k.kappa_minus, k.kappa_plus, k.omega(), th])
        })
        .collect::<metashock::Result<_>>()?;
    let mut art = Artifacts::default();
    art.add("family.csv", csv(&["xi", "kappa_minus", "kappa_plus", "omega", "theta"], rows));
    Ok(Outcome { artifacts: art, spec: Some(spec), grid: Some(grid), scheme: "family sweep".into() })
}

fn cmd_spectrum(ctx: &Context) -> Result<Outcome, Failure> {
    let cfg = ctx.config()?;
    let spec = cfg.spec;
    let grid = Grid::for_spec(&spec, ctx.cells())?;
    let count = cfg.spectrum.count;
    let report = match cfg.spectrum.profile {
        SpectrumProfile::Element => {
            let width = cfg.family.smoothing.unwrap_or_else(|| family::default_smoothing(&grid));
            let e = family::build_element(cfg.spectrum.xi, &spec, &grid, width)?;
            spectral::eigenpairs(&spectral::assemble(&e, &spec)?, count)?
        }
        SpectrumProfile::Zero => {
            let zero = GridField::from_fn(&grid, 0.0, |_| 0.0);
            let mut r = spectral::eigenpairs(&spectral::assemble_profile(&zero, &spec)?, count)?;
            r.xi = cfg.spectrum.xi;
            r
        }
    };
    let mut a = Artifacts::default();
    a.add(
        "spectrum.json",
        json_text(&json!({
            "xi": report.xi,
            "epsilon": report.epsilon,
            "eigenvalues": report.eigenvalues,
            "lambda1_predicted": report.lambda1_predicted,
            "lambda2_bound": report.lambda2_bound,
        })),
    );
    let mut header = vec!["x".to_string()];
    header.extend((1..=report.eigenfunctions.len()).map(|k| format!("phi{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = grid.nodes.iter().enumerate().map(|(i, x)| {
        let mut row = vec![*x];
        row.extend(report.eigenfunctions.iter().map(|f| f.values[i]));
        row
    });
    a.add("eigenfunctions.csv", csv(&header, rows));
    Ok(Outcome { artifacts: a, spec: Some(spec), grid: Some(grid), scheme: "sturm bisection + inverse iteration".into() })
}

fn cmd_reduce(ctx: &Context) -> Result<Outcome, Failure> {
    let cfg = ctx.config()?;
    let spec = cfg.spec;
    let r = &cfg.reduce;
    let traj = family::reduced_ode_solve_from(r.t0, r.xi0, &spec, &r.times)?;
    let mut a = Artifacts::default();
    a.add("reduced.csv", csv(&["t", "xi"], traj.times.iter().zip(&traj.xi_values).map(|(t, x)| vec![*t, *x])));
    Ok(Outcome { artifacts: a, spec: Some(spec), grid: None, scheme: "rk4 step doubling".into() })
}

fn eps_label(eps: f64) -> String {
    format!("eps_{eps}")
}

fn cmd_tables(ctx: &Context, table: u8) -> Result<Outcome, Failure> {
    let epsilons =
        ctx.config.as_ref().map(|c| c.tables.epsilons.clone()).unwrap_or_else(|| experiments::TABLE_EPSILONS.to_vec());
    let n = ctx.cells();
    let linear = table == 3;
    let t_end = *TABLE_TIMES.last().unwrap();
    let runs: Vec<Trajectory> = epsilons
        .par_iter()
        .map(|&eps| -> Result<Trajectory, Failure> {
            let spec = experiments::table_spec(eps)?;
            let grid = Grid::for_spec(&spec, n)?;
            let u0 = experiments::table_initial(eps, &grid)?;
            evolve::evolve(&spec, &u0, t_end, &TABLE_TIMES, &experiments::table_options(linear))
                .map_err(|e| Failure::from(e.source))
        })
        .collect::<Result<_, _>>()?;
    let mut a = Artifacts::default();
    let labels: Vec<String> = epsilons.iter().map(|&e| eps_label(e)).collect();
    if table == 2 {
        let mut rows = Vec::new();
        for (run, &eps) in runs.iter().zip(&epsilons) {
            let speed = family::average_speed(&run.interface_track, SPEED_WINDOW_START, SPEED_STOP_THRESHOLD)?;
            rows.push(vec![eps, speed, experiments::speed_predictor(eps)]);
        }
        a.add("table2.csv", csv(&["epsilon", "measured_speed", "predicted_speed"], rows));
    } else {
        let mut header = vec!["t".to_string()];
        header.extend(labels.iter().map(|l| format!("xi_{l}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = TABLE_TIMES.iter().map(|&t| {
            let mut row = vec![t];
            row.extend(runs.iter().map(|r| r.xi_at(t).unwrap_or(f64::NAN)));
            row
        });
        a.add(format!("table{table}.csv"), csv(&header, rows));
    }
    for (run, label) in runs.iter().zip(&labels) {
        a.add(
            format!("{label}/interface_track.csv"),
            csv(&["t", "xi"], run.interface_track.iter().map(|(t, x)| vec![*t, *x])),
        );
    }
    let scheme = format!("bdf1/{}", experiments::table_discretization(linear).label());
    Ok(Outcome { artifacts: a, spec: None, grid: Some(Grid::new(1.0, n)?), scheme })
}

fn cmd_figures(ctx: &Context, id: &str) -> Result<Outcome, Failure> {
    let n = ctx.cells();
    let runs = experiments::figure_runs(id, n)?;
    let parts: Vec<(String, Artifacts)> = runs
        .par_iter()
        .map(|run| -> Result<(String, Artifacts), Failure> {
            let t_end = *run.times.last().expect("figure runs have output times");
            let mut opts = run.options.clone();
            opts.reference = steady_reference(&run.spec, &run.initial.grid);
            let traj = evolve::evolve(&run.spec, &run.initial, t_end, &run.times, &opts)
                .map_err(|e| Failure::from(e.source))?;
            Ok((run.name.clone(), trajectory_artifacts(&traj)))
        })
        .collect::<Result<_, _>>()?;
    let mut a = Artifacts::default();
    for (name, art) in parts {
        a.extend(&name, art);
    }
    Ok(Outcome { artifacts: a, spec: None, grid: Some(Grid::new(1.0, n)?), scheme: format!("figure {id}") })
}

fn write_outputs(dir: &Path, outcome: Outcome, command: &str, ctx: &Context, started: Instant) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for (rel, body) in &outcome.artifacts.files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, body)?;
        files.push(FileEntry { path: rel.clone(), sha256: sha256_hex(body), bytes: body.len() });
    }
    let manifest = RunManifest {
        command: command.to_string(),
        spec: outcome.spec,
        grid: outcome.grid.map(|g| GridSummary { n_cells: g.n_cells, ell: g.ell, spacing: g.spacing }),
        scheme: outcome.scheme,
        output_dir: dir.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time: started.elapsed().as_secs_f64(),
        config: ctx.config_text.clone(),
        determinism: "no randomness: identical configuration and flags give bit-identical CSV bodies".into(),
        files,
    };
    fs::write(dir.join("manifest.json"), json_text(&manifest))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let started = Instant::now();
    if let Some(k) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build_global()
            .map_err(|e| Failure { code: 1, message: e.to_string() })?;
    }
    let config_text = match &cli.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let config = config_text.as_deref().map(Config::parse).transpose()?;
    let ctx = Context { config, config_text, grid_override: cli.grid };
    if ctx.grid_override.is_some_and(|n| n < 4) {
        return Err(config_error("--grid needs at least 4 cells"));
    }
    let out = std::env::var_os("METASHOCK_OUT").map(PathBuf::from).unwrap_or(cli.out);
    let (name, outcome) = match &cli.command {
        Command::Steady => ("steady".to_string(), cmd_steady(&ctx)?),
        Command::Evolve => ("evolve".to_string(), cmd_evolve(&ctx)?),
        Command::Family => ("family".to_string(), cmd_family(&ctx)?),
        Command::Spectrum => ("spectrum".to_string(), cmd_spectrum(&ctx)?),
        Command::Reduce => ("reduce".to_string(), cmd_reduce(&ctx)?),
        Command::Tables { table } => (format!("tables --table {table}"), cmd_tables(&ctx, *table)?),
        Command::Figures { figure } => (format!("figures --figure {figure}"), cmd_figures(&ctx, figure)?),
    };
    write_outputs(&out, outcome, &name, &ctx, started)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("metashock: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
