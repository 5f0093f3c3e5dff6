//! The `fracmap` command line.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 when a computation or
//! file operation fails. Diagnostics go to stderr; data goes to files, and
//! `key: value` reports go to `--out` or stdout.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    box_dimension, cells_to_grid, compare_grids, default_levels, estimate_bilipschitz, ifs_cells,
    FractalTag,
};
use crate::config::{
    read_config, CriterionArg, DomainArg, GridSize, MapMode, RasterFormat, RunConfig, SchemeKind,
    SystemKind, TagArg, TimeList,
};
use crate::error::Error;
use crate::flow::{
    evolve_points_in, trajectory_samples, Direction, IntegratorConfig, OdeSystem, SectionRequest,
};
use crate::fmi::{
    default_image_domain, discrete_orbit, forward_image_points, mapped_membership_grid,
    rasterize_points, verify_pushforward, PlaneMap,
};
use crate::geometry::{GridSpec, MembershipGrid, Point2, RectDomain, TriangleDomain};
use crate::io::{
    format_sig9, read_csv_points, read_pnm, write_csv_points, write_csv_trajectories, write_pgm,
    write_ppm, Palette,
};
use crate::schemes::{
    membership_grid, CarpetScheme, EscapeCriterion, GasketScheme, Profile, Scheme, SineParams,
};

const CARPET_GRID: GridSize = GridSize {
    width: 729,
    height: 729,
};
const GASKET_GRID: GridSize = GridSize {
    width: 1024,
    height: 887,
};
const DEFAULT_DEPTH: u32 = 6;
const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Parser, Debug)]
#[command(
    name = "fracmap",
    version,
    about = "Escape-time fractals, fractal mappings and fractal flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rasterise the k-th approximation of a carpet or gasket scheme.
    Generate(GenerateArgs),
    /// Map a fractal through a plane map.
    Map(MapArgs),
    /// Move a fractal point set along the flow of an ODE system.
    Evolve(EvolveArgs),
    /// Box-counting dimension of a raster.
    Dimension(DimensionArgs),
    /// Member agreement between two rasters.
    Compare(CompareArgs),
    /// Rasterise the classical carpet or gasket from its IFS.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// `key = value` file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct SchemeArgs {
    /// tent | mod-tent | sine | auto-sine | gasket
    #[arg(long)]
    scheme: Option<SchemeKind>,
    /// any | both-eventually | both-simultaneous (carpet schemes only)
    #[arg(long)]
    criterion: Option<CriterionArg>,
    /// Approximation depth k.
    #[arg(long)]
    depth: Option<u32>,
    /// Raster size WxH.
    #[arg(long)]
    grid: Option<GridSize>,
    /// Raster rectangle x0,x1,y0,y1.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<DomainArg>,
    /// Frequency growth a.
    #[arg(long, allow_hyphen_values = true)]
    a: Option<f64>,
    /// Amplitude parameter b (sine schemes).
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    /// Gasket profile along x'.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Gasket profile along x''.
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    /// Gasket profile along y.
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
}

impl SchemeArgs {
    fn apply(self, cfg: &mut RunConfig) {
        cfg.scheme = self.scheme;
        cfg.criterion = self.criterion;
        cfg.depth = self.depth;
        cfg.grid = self.grid;
        cfg.domain = self.domain;
        cfg.a = self.a;
        cfg.b = self.b;
        cfg.alpha = self.alpha;
        cfg.beta = self.beta;
        cfg.gamma = self.gamma;
    }
}

const SCHEME_KEYS: &[&str] = &[
    "scheme",
    "criterion",
    "depth",
    "grid",
    "domain",
    "a",
    "b",
    "alpha",
    "beta",
    "gamma",
];

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Raster output (.pgm or .ppm).
    #[arg(long)]
    out: Option<PathBuf>,
    /// pgm | ppm (default: from the --out extension).
    #[arg(long)]
    format: Option<RasterFormat>,
    /// CSV of member cell centers.
    #[arg(long)]
    points_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MapArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Registry name or expression text `f1, f2 | g1, g2`.
    #[arg(long, allow_hyphen_values = true)]
    map: Option<String>,
    /// inverse | forward | orbit | verify | lipschitz
    #[arg(long)]
    mode: Option<MapMode>,
    /// Target rectangle x0,x1,y0,y1 (default: padded image bounding box).
    #[arg(long, allow_hyphen_values = true)]
    target: Option<DomainArg>,
    /// Target raster size WxH (default: --grid).
    #[arg(long)]
    target_grid: Option<GridSize>,
    /// Number of orbit iterates.
    #[arg(long)]
    iterates: Option<usize>,
    /// Point pairs for the distortion estimate.
    #[arg(long)]
    samples: Option<usize>,
    /// Input point CSV (orbit mode).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Orbit file prefix: PREFIX_0.csv, PREFIX_1.csv, ...
    #[arg(long)]
    out_prefix: Option<String>,
    #[arg(long)]
    format: Option<RasterFormat>,
    /// CSV of forward image points.
    #[arg(long)]
    points_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// vdp | duffing | expr
    #[arg(long)]
    system: Option<SystemKind>,
    /// Van der Pol damping mu.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    /// Duffing damping delta.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Duffing linear stiffness (coefficient of x).
    #[arg(long, allow_hyphen_values = true)]
    stiffness: Option<f64>,
    /// Duffing cubic stiffness (coefficient of x^3).
    #[arg(long, allow_hyphen_values = true)]
    cubic: Option<f64>,
    /// Duffing forcing amplitude.
    #[arg(long, allow_hyphen_values = true)]
    forcing: Option<f64>,
    /// Duffing forcing frequency.
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    /// x' as an expression in t, x, y.
    #[arg(long, allow_hyphen_values = true)]
    dx: Option<String>,
    /// y' as an expression in t, x, y.
    #[arg(long, allow_hyphen_values = true)]
    dy: Option<String>,
    /// RK4 step.
    #[arg(long)]
    h: Option<f64>,
    /// Section times, comma separated.
    #[arg(long)]
    times: Option<TimeList>,
    /// Trajectory end time.
    #[arg(long)]
    t_end: Option<f64>,
    /// Trajectory sampling interval.
    #[arg(long)]
    dt: Option<f64>,
    /// Integrate sections backward in time.
    #[arg(long)]
    backward: bool,
    /// Initial point CSV (default: member centers of --scheme).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Section file prefix: PREFIX_t<time>.csv
    #[arg(long)]
    out_prefix: Option<String>,
    /// Trajectory CSV (t,x,y).
    #[arg(long)]
    trajectory_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DimensionArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Use the IFS raster of carpet | gasket.
    #[arg(long)]
    tag: Option<TagArg>,
    /// Raster to measure (.pgm or .ppm); black pixels are members.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Number of dyadic box sizes.
    #[arg(long)]
    levels: Option<u32>,
    /// Report file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    scheme: SchemeArgs,
    /// Compare against the IFS raster of carpet | gasket.
    #[arg(long)]
    tag: Option<TagArg>,
    /// First raster (default: computed from --scheme).
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Second raster (default: computed from --tag).
    #[arg(long)]
    against: Option<PathBuf>,
    /// Report file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// carpet | gasket
    #[arg(long)]
    tag: Option<TagArg>,
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    grid: Option<GridSize>,
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<DomainArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    format: Option<RasterFormat>,
    #[arg(long)]
    points_out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Compute(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn usage<T>(message: impl Into<String>) -> Outcome<T> {
    Err(Failure::Usage(message.into()))
}

/// Turns a validation error into a usage error naming `--flag`.
fn flag_error(flag: &str, e: Error) -> Failure {
    match e {
        Error::InvalidParameter { reason, .. } => {
            Failure::Usage(format!("invalid value for --{flag}: {reason}"))
        }
        other => Failure::Usage(format!("invalid value for --{flag}: {other}")),
    }
}

fn bad_flag(flag: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| flag_error(flag, e)
}

/// Validation errors from library constructors carry the parameter name,
/// which matches the flag name.
fn invalid_as_usage(e: Error) -> Failure {
    match e {
        Error::InvalidParameter { ref name, .. } => {
            let flag = name.clone();
            flag_error(&flag, e)
        }
        other => Failure::Compute(other),
    }
}

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Outcome<&'a T> {
    match value {
        Some(v) => Ok(v),
        None => usage(format!("missing required flag --{flag}")),
    }
}

/// Runs the command line `args` (including the program name) and returns
/// the process exit status.
pub fn run_cli(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(message)) => {
            eprintln!("fracmap: {message}");
            1
        }
        Err(Failure::Compute(e)) => {
            eprintln!("fracmap: error: {e}");
            2
        }
    }
}

type Runner = fn(&RunConfig) -> Outcome;

fn execute(cli: Cli) -> Outcome {
    let mut flags = RunConfig::default();
    let (name, common, allowed, run): (&str, CommonArgs, Vec<&str>, Runner) = match cli.command {
        Command::Generate(a) => {
            a.scheme.apply(&mut flags);
            flags.out = a.out;
            flags.format = a.format;
            flags.points_out = a.points_out;
            let keys = [SCHEME_KEYS, &["out", "format", "points-out"]].concat();
            ("generate", a.common, keys, run_generate)
        }
        Command::Map(a) => {
            a.scheme.apply(&mut flags);
            flags.map = a.map;
            flags.mode = a.mode;
            flags.target = a.target;
            flags.target_grid = a.target_grid;
            flags.iterates = a.iterates;
            flags.samples = a.samples;
            flags.input = a.input;
            flags.out = a.out;
            flags.out_prefix = a.out_prefix;
            flags.format = a.format;
            flags.points_out = a.points_out;
            let keys = [
                SCHEME_KEYS,
                &[
                    "map",
                    "mode",
                    "target",
                    "target-grid",
                    "iterates",
                    "samples",
                    "in",
                    "out",
                    "out-prefix",
                    "format",
                    "points-out",
                ],
            ]
            .concat();
            ("map", a.common, keys, run_map)
        }
        Command::Evolve(a) => {
            a.scheme.apply(&mut flags);
            flags.system = a.system;
            flags.mu = a.mu;
            flags.delta = a.delta;
            flags.stiffness = a.stiffness;
            flags.cubic = a.cubic;
            flags.forcing = a.forcing;
            flags.omega = a.omega;
            flags.dx = a.dx;
            flags.dy = a.dy;
            flags.h = a.h;
            flags.times = a.times;
            flags.t_end = a.t_end;
            flags.dt = a.dt;
            flags.backward = a.backward.then_some(true);
            flags.input = a.input;
            flags.out_prefix = a.out_prefix;
            flags.trajectory_out = a.trajectory_out;
            let keys = [
                SCHEME_KEYS,
                &[
                    "system",
                    "mu",
                    "delta",
                    "stiffness",
                    "cubic",
                    "forcing",
                    "omega",
                    "dx",
                    "dy",
                    "h",
                    "times",
                    "t-end",
                    "dt",
                    "backward",
                    "in",
                    "out-prefix",
                    "trajectory-out",
                ],
            ]
            .concat();
            ("evolve", a.common, keys, run_evolve)
        }
        Command::Dimension(a) => {
            a.scheme.apply(&mut flags);
            flags.tag = a.tag;
            flags.input = a.input;
            flags.levels = a.levels;
            flags.out = a.out;
            let keys = [SCHEME_KEYS, &["tag", "in", "levels", "out"]].concat();
            ("dimension", a.common, keys, run_dimension)
        }
        Command::Compare(a) => {
            a.scheme.apply(&mut flags);
            flags.tag = a.tag;
            flags.input = a.input;
            flags.against = a.against;
            flags.out = a.out;
            let keys = [SCHEME_KEYS, &["tag", "in", "against", "out"]].concat();
            ("compare", a.common, keys, run_compare)
        }
        Command::Oracle(a) => {
            flags.tag = a.tag;
            flags.depth = a.depth;
            flags.grid = a.grid;
            flags.domain = a.domain;
            flags.out = a.out;
            flags.format = a.format;
            flags.points_out = a.points_out;
            let keys = vec![
                "tag",
                "depth",
                "grid",
                "domain",
                "out",
                "format",
                "points-out",
            ];
            ("oracle", a.common, keys, run_oracle)
        }
    };
    flags.threads = common.threads;
    let file = match &common.config {
        Some(path) => read_config(path).map_err(|e| Failure::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    for key in file.keys_set() {
        if key != "threads" && !allowed.contains(&key) {
            return usage(format!(
                "config line {}: key `{key}` does not apply to `{name}`",
                file.lines.get(key).copied().unwrap_or(0)
            ));
        }
    }
    let cfg = flags.overlay(file);
    match cfg.threads {
        Some(0) => usage("invalid value for --threads: must be at least 1"),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Usage(format!("cannot start {n} threads: {e}")))?;
            pool.install(|| run(&cfg))
        }
        None => run(&cfg),
    }
}

struct SchemeSetup {
    scheme: Scheme,
    criterion: EscapeCriterion,
    depth: u32,
    spec: GridSpec,
}

fn reject(cfg_has: bool, flag: &str, context: &str) -> Outcome {
    if cfg_has {
        usage(format!("--{flag} does not apply to {context}"))
    } else {
        Ok(())
    }
}

fn profile(text: &Option<String>, flag: &str) -> Outcome<Profile> {
    match text {
        Some(t) => Profile::parse(t).map_err(bad_flag(flag)),
        None => Ok(Profile::sin()),
    }
}

fn scheme_setup(cfg: &RunConfig) -> Outcome<SchemeSetup> {
    let kind = *require(&cfg.scheme, "scheme")?;
    let context = format!("--scheme {}", kind.name());
    let scheme: Scheme = match kind {
        SchemeKind::Tent | SchemeKind::ModTent => {
            reject(cfg.a.is_some(), "a", &context)?;
            reject(cfg.b.is_some(), "b", &context)?;
            if kind == SchemeKind::Tent {
                CarpetScheme::Tent2D.into()
            } else {
                CarpetScheme::ModTent2D.into()
            }
        }
        SchemeKind::Sine | SchemeKind::AutoSine => {
            let params = SineParams::new(cfg.a.unwrap_or(3.0), cfg.b.unwrap_or(3.0))
                .map_err(invalid_as_usage)?;
            if kind == SchemeKind::Sine {
                CarpetScheme::Sine(params).into()
            } else {
                CarpetScheme::AutoSine(params).into()
            }
        }
        SchemeKind::Gasket => {
            reject(cfg.criterion.is_some(), "criterion", &context)?;
            reject(cfg.b.is_some(), "b", &context)?;
            GasketScheme::new(
                profile(&cfg.alpha, "alpha")?,
                profile(&cfg.beta, "beta")?,
                profile(&cfg.gamma, "gamma")?,
                cfg.a.unwrap_or(2.0),
            )
            .map_err(invalid_as_usage)?
            .into()
        }
    };
    if kind != SchemeKind::Gasket {
        for (has, flag) in [
            (cfg.alpha.is_some(), "alpha"),
            (cfg.beta.is_some(), "beta"),
            (cfg.gamma.is_some(), "gamma"),
        ] {
            reject(has, flag, &context)?;
        }
    }
    let depth = cfg.depth.unwrap_or(DEFAULT_DEPTH);
    if depth == 0 {
        return usage("invalid value for --depth: must be at least 1");
    }
    let tag = if scheme.is_gasket() {
        FractalTag::Gasket
    } else {
        FractalTag::Carpet
    };
    Ok(SchemeSetup {
        criterion: cfg
            .criterion
            .map(|c| c.0)
            .unwrap_or(EscapeCriterion::BothSimultaneous),
        depth,
        spec: grid_spec(cfg.grid, cfg.domain, tag)?,
        scheme,
    })
}

fn default_domain(tag: FractalTag) -> RectDomain {
    match tag {
        FractalTag::Carpet => RectDomain::unit_square(),
        FractalTag::Gasket => TriangleDomain.bounding_box(),
    }
}

fn grid_spec(
    size: Option<GridSize>,
    domain: Option<DomainArg>,
    tag: FractalTag,
) -> Outcome<GridSpec> {
    let size = size.unwrap_or(match tag {
        FractalTag::Carpet => CARPET_GRID,
        FractalTag::Gasket => GASKET_GRID,
    });
    let domain = domain.map(|d| d.0).unwrap_or_else(|| default_domain(tag));
    GridSpec::new(domain, size.width, size.height).map_err(bad_flag("grid"))
}

/// Checks that a raster `--out` has a known format before any compute runs.
fn check_raster_out(cfg: &RunConfig) -> Outcome {
    match (&cfg.out, cfg.format) {
        (Some(path), None) if RasterFormat::from_path(path).is_none() => usage(format!(
            "--out {}: extension is not .pgm or .ppm; name one or pass --format",
            path.display()
        )),
        _ => Ok(()),
    }
}

fn write_raster(grid: &MembershipGrid, path: &Path, format: Option<RasterFormat>) -> Outcome {
    match format
        .or_else(|| RasterFormat::from_path(path))
        .unwrap_or(RasterFormat::Pgm)
    {
        RasterFormat::Pgm => write_pgm(grid, path)?,
        RasterFormat::Ppm => write_ppm(grid, &Palette::color(), path)?,
    }
    Ok(())
}

fn write_report(out: Option<&Path>, lines: &[(&str, String)]) -> Outcome {
    let text: String = lines.iter().map(|(k, v)| format!("{k}: {v}\n")).collect();
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e))?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

fn warn_failures(what: &str, count: usize, first: Option<&Error>) {
    if let Some(e) = first {
        eprintln!("fracmap: warning: {count} {what} dropped; first: {e}");
    }
}

fn need_output(cfg_has: &[(bool, &str)]) -> Outcome {
    if cfg_has.iter().any(|(has, _)| *has) {
        Ok(())
    } else {
        let flags: Vec<String> = cfg_has.iter().map(|(_, f)| format!("--{f}")).collect();
        usage(format!("nothing to write: give {}", flags.join(" or ")))
    }
}

fn run_generate(cfg: &RunConfig) -> Outcome {
    let s = scheme_setup(cfg)?;
    need_output(&[
        (cfg.out.is_some(), "out"),
        (cfg.points_out.is_some(), "points-out"),
    ])?;
    check_raster_out(cfg)?;
    let grid = membership_grid(&s.scheme, s.criterion, &s.spec, s.depth)?;
    if let Some(path) = &cfg.out {
        write_raster(&grid, path, cfg.format)?;
    }
    if let Some(path) = &cfg.points_out {
        write_csv_points(&grid.member_centers(), path)?;
    }
    Ok(())
}

fn target_spec(cfg: &RunConfig, map: &PlaneMap, s: &SchemeSetup) -> Outcome<GridSpec> {
    let domain = match cfg.target {
        Some(d) => d.0,
        None => default_image_domain(map, &s.scheme)?,
    };
    let size = cfg.target_grid.unwrap_or(GridSize {
        width: s.spec.width,
        height: s.spec.height,
    });
    GridSpec::new(domain, size.width, size.height).map_err(bad_flag("target-grid"))
}

fn run_map(cfg: &RunConfig) -> Outcome {
    let map = PlaneMap::parse(require(&cfg.map, "map")?).map_err(bad_flag("map"))?;
    let mode = cfg.mode.unwrap_or(if map.has_inverse() {
        MapMode::Inverse
    } else {
        MapMode::Forward
    });
    match mode {
        MapMode::Inverse => {
            if !map.has_inverse() {
                return usage(format!(
                    "--map {} has no inverse; use --mode forward",
                    map.name()
                ));
            }
            let s = scheme_setup(cfg)?;
            let out = require(&cfg.out, "out")?;
            check_raster_out(cfg)?;
            let target = target_spec(cfg, &map, &s)?;
            let grid = mapped_membership_grid(&map, &s.scheme, s.criterion, &target, s.depth)?;
            write_raster(&grid, out, cfg.format)
        }
        MapMode::Forward => {
            let s = scheme_setup(cfg)?;
            need_output(&[
                (cfg.out.is_some(), "out"),
                (cfg.points_out.is_some(), "points-out"),
            ])?;
            check_raster_out(cfg)?;
            let grid = membership_grid(&s.scheme, s.criterion, &s.spec, s.depth)?;
            let image = forward_image_points(&map, &grid);
            warn_failures(
                "points",
                image.failures.len(),
                image.failures.first().map(|f| &f.1),
            );
            if let Some(out) = &cfg.out {
                let target = target_spec(cfg, &map, &s)?;
                write_raster(&rasterize_points(&image.points, &target), out, cfg.format)?;
            }
            if let Some(path) = &cfg.points_out {
                write_csv_points(&image.points, path)?;
            }
            Ok(())
        }
        MapMode::Orbit => {
            let prefix = require(&cfg.out_prefix, "out-prefix")?;
            let start = match &cfg.input {
                Some(path) => read_csv_points(path)?,
                None => {
                    let s = scheme_setup(cfg)?;
                    membership_grid(&s.scheme, s.criterion, &s.spec, s.depth)?.member_centers()
                }
            };
            let orbit = discrete_orbit(&map, &start, cfg.iterates.unwrap_or(1));
            for (i, step) in orbit.iter().enumerate() {
                warn_failures(
                    "points",
                    step.failures.len(),
                    step.failures.first().map(|f| &f.1),
                );
                write_csv_points(&step.points, format!("{prefix}_{i}.csv"))?;
            }
            Ok(())
        }
        MapMode::Verify => {
            let s = scheme_setup(cfg)?;
            let target = target_spec(cfg, &map, &s)?;
            let r = verify_pushforward(&map, &s.scheme, s.criterion, &s.spec, &target, s.depth)?;
            let c = r.comparison;
            write_report(
                cfg.out.as_deref(),
                &[
                    ("map", map.name().to_string()),
                    ("agreement", format_sig9(c.agreement)),
                    ("compared", c.compared.to_string()),
                    ("both_members", c.both_members.to_string()),
                    ("forward_only", c.a_only.to_string()),
                    ("inverse_only", c.b_only.to_string()),
                    ("forward_points", r.forward_points.to_string()),
                    ("forward_failures", r.forward_failures.to_string()),
                ],
            )
        }
        MapMode::Lipschitz => {
            let domain = cfg
                .domain
                .map(|d| d.0)
                .unwrap_or_else(RectDomain::unit_square);
            let est = estimate_bilipschitz(&map, &domain, cfg.samples.unwrap_or(DEFAULT_SAMPLES))
                .map_err(|e| match e {
                Error::InvalidParameter { .. } => bad_flag("samples")(e),
                other => Failure::Compute(other),
            })?;
            write_report(
                cfg.out.as_deref(),
                &[
                    ("map", map.name().to_string()),
                    ("l1", format_sig9(est.l1)),
                    ("l2", format_sig9(est.l2)),
                    ("samples", est.samples.to_string()),
                ],
            )
        }
    }
}

fn ode_system(cfg: &RunConfig) -> Outcome<OdeSystem> {
    let kind = *require(&cfg.system, "system")?;
    let duffing_flags = [
        (cfg.delta.is_some(), "delta"),
        (cfg.stiffness.is_some(), "stiffness"),
        (cfg.cubic.is_some(), "cubic"),
        (cfg.forcing.is_some(), "forcing"),
        (cfg.omega.is_some(), "omega"),
    ];
    let expr_flags = [(cfg.dx.is_some(), "dx"), (cfg.dy.is_some(), "dy")];
    let context = "this --system";
    match kind {
        SystemKind::VanDerPol => {
            for (has, flag) in duffing_flags.iter().chain(&expr_flags) {
                reject(*has, flag, context)?;
            }
            OdeSystem::van_der_pol(*require(&cfg.mu, "mu")?).map_err(invalid_as_usage)
        }
        SystemKind::Duffing => {
            for (has, flag) in std::iter::once(&(cfg.mu.is_some(), "mu")).chain(&expr_flags) {
                reject(*has, flag, context)?;
            }
            let v = |x: Option<f64>| x.unwrap_or(0.0);
            OdeSystem::duffing(
                v(cfg.delta),
                v(cfg.stiffness),
                v(cfg.cubic),
                v(cfg.forcing),
                v(cfg.omega),
            )
            .map_err(|e| match e {
                Error::InvalidParameter { ref name, .. } => {
                    let flag = match name.as_str() {
                        "beta" => "stiffness",
                        "alpha" => "cubic",
                        "gamma" => "forcing",
                        other => other,
                    }
                    .to_string();
                    flag_error(&flag, e)
                }
                other => Failure::Compute(other),
            })
        }
        SystemKind::Expr => {
            for (has, flag) in std::iter::once(&(cfg.mu.is_some(), "mu")).chain(&duffing_flags) {
                reject(*has, flag, context)?;
            }
            let dx = require(&cfg.dx, "dx")?;
            let dy = require(&cfg.dy, "dy")?;
            OdeSystem::from_exprs(dx, "0").map_err(bad_flag("dx"))?;
            OdeSystem::from_exprs("0", dy).map_err(bad_flag("dy"))?;
            Ok(OdeSystem::from_exprs(dx, dy)?)
        }
    }
}

fn time_label(t: f64) -> String {
    format_sig9(t)
}

fn run_evolve(cfg: &RunConfig) -> Outcome {
    let system = ode_system(cfg)?;
    let integrator =
        IntegratorConfig::new(cfg.h.unwrap_or(crate::flow::DEFAULT_STEP)).map_err(bad_flag("h"))?;
    need_output(&[
        (cfg.out_prefix.is_some(), "out-prefix"),
        (cfg.trajectory_out.is_some(), "trajectory-out"),
    ])?;
    let backward = cfg.backward.unwrap_or(false);
    let sections = match (&cfg.out_prefix, &cfg.times) {
        (Some(prefix), Some(times)) => Some((
            prefix,
            SectionRequest::new(times.0.clone()).map_err(bad_flag("times"))?,
        )),
        (Some(_), None) => return usage("--out-prefix needs --times"),
        (None, Some(_)) => return usage("--times needs --out-prefix"),
        (None, None) => None,
    };
    let trajectory = match (&cfg.trajectory_out, cfg.t_end, cfg.dt) {
        (Some(path), Some(t_end), Some(dt)) => {
            if backward {
                return usage("--backward applies to sections only, not --trajectory-out");
            }
            Some((path, t_end, dt))
        }
        (Some(_), None, _) => return usage("--trajectory-out needs --t-end"),
        (Some(_), _, None) => return usage("--trajectory-out needs --dt"),
        (None, _, _) => {
            reject(
                cfg.t_end.is_some(),
                "t-end",
                "evolve without --trajectory-out",
            )?;
            reject(cfg.dt.is_some(), "dt", "evolve without --trajectory-out")?;
            None
        }
    };
    let points: Vec<Point2> = match &cfg.input {
        Some(path) => read_csv_points(path)?,
        None => {
            let s = scheme_setup(cfg)?;
            membership_grid(&s.scheme, s.criterion, &s.spec, s.depth)?.member_centers()
        }
    };
    if let Some((prefix, request)) = sections {
        let dir = if backward {
            Direction::Backward
        } else {
            Direction::Forward
        };
        let result = evolve_points_in(&system, dir, &points, &request, &integrator);
        warn_failures(
            "points",
            result.failures.len(),
            result.failures.first().map(|f| &f.1),
        );
        for (t, section) in request.times().iter().zip(&result.sections) {
            write_csv_points(section, format!("{prefix}_t{}.csv", time_label(*t)))?;
        }
    }
    if let Some((path, t_end, dt)) = trajectory {
        let (samples, failures) =
            trajectory_samples(&system, &points, t_end, dt, &integrator).map_err(bad_flag("dt"))?;
        warn_failures("points", failures.len(), failures.first().map(|f| &f.1));
        write_csv_trajectories(&samples, path)?;
    }
    Ok(())
}

fn oracle_grid(tag: FractalTag, depth: u32, spec: &GridSpec) -> Outcome<MembershipGrid> {
    let cells = ifs_cells(tag, depth).map_err(invalid_as_usage)?;
    Ok(cells_to_grid(&cells, spec))
}

fn read_raster(path: &Path) -> Outcome<MembershipGrid> {
    Ok(read_pnm(path)?.to_grid()?)
}

fn has_scheme_flags(cfg: &RunConfig) -> bool {
    cfg.scheme.is_some()
}

fn run_dimension(cfg: &RunConfig) -> Outcome {
    let sources = [
        (cfg.input.is_some(), "--in"),
        (has_scheme_flags(cfg), "--scheme"),
        (cfg.tag.is_some(), "--tag"),
    ];
    let given: Vec<&str> = sources.iter().filter(|s| s.0).map(|s| s.1).collect();
    if given.len() != 1 {
        return usage("give exactly one of --in, --scheme or --tag");
    }
    let grid = if let Some(path) = &cfg.input {
        read_raster(path)?
    } else if let Some(tag) = cfg.tag {
        let spec = grid_spec(cfg.grid, cfg.domain, tag.0)?;
        oracle_grid(tag.0, cfg.depth.unwrap_or(DEFAULT_DEPTH), &spec)?
    } else {
        let s = scheme_setup(cfg)?;
        membership_grid(&s.scheme, s.criterion, &s.spec, s.depth)?
    };
    let levels = cfg
        .levels
        .unwrap_or_else(|| default_levels(grid.width(), grid.height()));
    let r = box_dimension(&grid, levels).map_err(|e| match e {
        Error::InvalidParameter { .. } => bad_flag("levels")(e),
        other => Failure::Compute(other),
    })?;
    let join = |v: &[usize]| {
        v.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    write_report(
        cfg.out.as_deref(),
        &[
            ("width", grid.width().to_string()),
            ("height", grid.height().to_string()),
            ("members", grid.member_count().to_string()),
            ("levels", levels.to_string()),
            ("scales", join(&r.scales)),
            ("counts", join(&r.counts)),
            ("slope", format_sig9(r.slope)),
            ("r_squared", format_sig9(r.r_squared)),
        ],
    )
}

fn run_compare(cfg: &RunConfig) -> Outcome {
    if cfg.input.is_some() && has_scheme_flags(cfg) {
        return usage("--in conflicts with --scheme");
    }
    if cfg.against.is_some() && cfg.tag.is_some() {
        return usage("--against conflicts with --tag");
    }
    let left = match &cfg.input {
        Some(path) => read_raster(path)?,
        None if has_scheme_flags(cfg) => {
            let s = scheme_setup(cfg)?;
            membership_grid(&s.scheme, s.criterion, &s.spec, s.depth)?
        }
        None => return usage("missing required flag --in (or --scheme)"),
    };
    let right = match (&cfg.against, cfg.tag) {
        (Some(path), _) => read_raster(path)?,
        (None, Some(tag)) => {
            let domain = cfg
                .domain
                .map(|d| d.0)
                .unwrap_or_else(|| default_domain(tag.0));
            let spec =
                GridSpec::new(domain, left.width(), left.height()).map_err(bad_flag("domain"))?;
            oracle_grid(tag.0, cfg.depth.unwrap_or(DEFAULT_DEPTH), &spec)?
        }
        (None, None) => return usage("missing required flag --against (or --tag)"),
    };
    let c = compare_grids(&left, &right)?;
    write_report(
        cfg.out.as_deref(),
        &[
            ("agreement", format_sig9(c.agreement)),
            ("compared", c.compared.to_string()),
            ("both_members", c.both_members.to_string()),
            ("a_only", c.a_only.to_string()),
            ("b_only", c.b_only.to_string()),
        ],
    )
}

fn run_oracle(cfg: &RunConfig) -> Outcome {
    need_output(&[
        (cfg.out.is_some(), "out"),
        (cfg.points_out.is_some(), "points-out"),
    ])?;
    check_raster_out(cfg)?;
    let tag = require(&cfg.tag, "tag")?.0;
    let spec = grid_spec(cfg.grid, cfg.domain, tag)?;
    let grid = oracle_grid(tag, cfg.depth.unwrap_or(DEFAULT_DEPTH), &spec)?;
    if let Some(path) = &cfg.out {
        write_raster(&grid, path, cfg.format)?;
    }
    if let Some(path) = &cfg.points_out {
        write_csv_points(&grid.member_centers(), path)?;
    }
    Ok(())
}
