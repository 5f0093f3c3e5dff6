//! Run configuration: typed option values shared by command-line flags and
//! `key = value` config files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::FractalTag;
use crate::error::{Error, Result};
use crate::geometry::RectDomain;
use crate::schemes::EscapeCriterion;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    Tent,
    ModTent,
    Sine,
    AutoSine,
    Gasket,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Tent => "tent",
            SchemeKind::ModTent => "mod-tent",
            SchemeKind::Sine => "sine",
            SchemeKind::AutoSine => "auto-sine",
            SchemeKind::Gasket => "gasket",
        }
    }
}

fn one_of<T: Copy>(value: &str, what: &str, table: &[(&str, T)]) -> std::result::Result<T, String> {
    table
        .iter()
        .find(|(name, _)| *name == value)
        .map(|&(_, v)| v)
        .ok_or_else(|| {
            let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
            format!(
                "unknown {what} `{value}` (expected one of {})",
                names.join(", ")
            )
        })
}

impl FromStr for SchemeKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        use SchemeKind::*;
        one_of(
            s,
            "scheme",
            &[
                ("tent", Tent),
                ("mod-tent", ModTent),
                ("sine", Sine),
                ("auto-sine", AutoSine),
                ("gasket", Gasket),
            ],
        )
    }
}

/// Wrapper so criteria parse from their command-line names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriterionArg(pub EscapeCriterion);

impl FromStr for CriterionArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        use EscapeCriterion::*;
        one_of(
            s,
            "criterion",
            &[
                ("any", AnyCoordinate),
                ("both-eventually", BothEventually),
                ("both-simultaneous", BothSimultaneous),
            ],
        )
        .map(CriterionArg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagArg(pub FractalTag);

impl FromStr for TagArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        one_of(
            s,
            "tag",
            &[
                ("carpet", FractalTag::Carpet),
                ("gasket", FractalTag::Gasket),
            ],
        )
        .map(TagArg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    /// Mapped membership through the inverse map.
    Inverse,
    /// Forward image of the member cell centers.
    Forward,
    /// Discrete orbit of a point set.
    Orbit,
    /// Forward raster against inverse raster.
    Verify,
    /// Empirical distortion bounds.
    Lipschitz,
}

impl FromStr for MapMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        use MapMode::*;
        one_of(
            s,
            "mode",
            &[
                ("inverse", Inverse),
                ("forward", Forward),
                ("orbit", Orbit),
                ("verify", Verify),
                ("lipschitz", Lipschitz),
            ],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    VanDerPol,
    Duffing,
    Expr,
}

impl FromStr for SystemKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        use SystemKind::*;
        one_of(
            s,
            "system",
            &[("vdp", VanDerPol), ("duffing", Duffing), ("expr", Expr)],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterFormat {
    Pgm,
    Ppm,
}

impl RasterFormat {
    /// `.ppm` selects colour output; anything else is grayscale.
    /// Format named by the file extension, if it names one.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ppm") => Some(RasterFormat::Ppm),
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => Some(RasterFormat::Pgm),
            _ => None,
        }
    }
}

impl FromStr for RasterFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        one_of(
            s,
            "format",
            &[("pgm", RasterFormat::Pgm), ("ppm", RasterFormat::Ppm)],
        )
    }
}

/// Raster size written `WxH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize {
    pub width: usize,
    pub height: usize,
}

impl FromStr for GridSize {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("expected WIDTHxHEIGHT, got `{s}`");
        let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let width: usize = w.trim().parse().map_err(|_| bad())?;
        let height: usize = h.trim().parse().map_err(|_| bad())?;
        if width == 0 || height == 0 {
            return Err(format!("grid dimensions must be positive, got `{s}`"));
        }
        Ok(GridSize { width, height })
    }
}

impl fmt::Display for GridSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

fn parse_numbers(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad number `{}`", part.trim()))
        })
        .collect()
}

/// Rectangle written `x0,x1,y0,y1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainArg(pub RectDomain);

impl FromStr for DomainArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let v = parse_numbers(s)?;
        let [x0, x1, y0, y1] = v[..] else {
            return Err(format!("expected x0,x1,y0,y1, got `{s}`"));
        };
        RectDomain::new(x0, x1, y0, y1)
            .map(DomainArg)
            .map_err(|e| e.to_string())
    }
}

/// Comma-separated list of times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeList(pub Vec<f64>);

impl FromStr for TimeList {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_numbers(s).map(TimeList)
    }
}

fn parse_value<T>(value: &str) -> std::result::Result<T, String>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| e.to_string())
}

macro_rules! run_config {
    ($($field:ident : $ty:ty = $key:literal),* $(,)?) => {
        /// Every option of every subcommand; `None` means "not given".
        #[derive(Debug, Clone, Default, PartialEq)]
        pub struct RunConfig {
            $(pub $field: Option<$ty>,)*
            /// Config-file line of each key read from a file.
            pub lines: BTreeMap<&'static str, usize>,
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets `key` from its text form; `Ok(false)` for unknown keys.
            fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
                match key {
                    $($key => {
                        self.$field = Some(parse_value::<$ty>(value)?);
                        Ok(true)
                    })*
                    _ => Ok(false),
                }
            }

            /// Values in `self` win; missing ones come from `fallback`.
            pub fn overlay(self, fallback: RunConfig) -> RunConfig {
                RunConfig {
                    $($field: self.$field.or(fallback.$field),)*
                    lines: fallback.lines,
                }
            }

            /// Keys that hold a value.
            pub fn keys_set(&self) -> Vec<&'static str> {
                let mut keys = Vec::new();
                $(if self.$field.is_some() { keys.push($key); })*
                keys
            }
        }
    };
}

run_config! {
    scheme: SchemeKind = "scheme",
    criterion: CriterionArg = "criterion",
    depth: u32 = "depth",
    grid: GridSize = "grid",
    domain: DomainArg = "domain",
    a: f64 = "a",
    b: f64 = "b",
    alpha: String = "alpha",
    beta: String = "beta",
    gamma: String = "gamma",
    tag: TagArg = "tag",
    map: String = "map",
    mode: MapMode = "mode",
    target: DomainArg = "target",
    target_grid: GridSize = "target-grid",
    iterates: usize = "iterates",
    samples: usize = "samples",
    system: SystemKind = "system",
    mu: f64 = "mu",
    delta: f64 = "delta",
    stiffness: f64 = "stiffness",
    cubic: f64 = "cubic",
    forcing: f64 = "forcing",
    omega: f64 = "omega",
    dx: String = "dx",
    dy: String = "dy",
    h: f64 = "h",
    times: TimeList = "times",
    t_end: f64 = "t-end",
    dt: f64 = "dt",
    backward: bool = "backward",
    input: PathBuf = "in",
    against: PathBuf = "against",
    out: PathBuf = "out",
    out_prefix: String = "out-prefix",
    points_out: PathBuf = "points-out",
    trajectory_out: PathBuf = "trajectory-out",
    format: RasterFormat = "format",
    levels: u32 = "levels",
    threads: usize = "threads",
}

/// Parses `key = value` lines. Blank lines and text after `#` are ignored;
/// surrounding double quotes on a value are stripped.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Config {
            line: line_no,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        let known = cfg
            .set(key, value)
            .map_err(|m| err(format!("bad value for `{key}`: {m}")))?;
        if !known {
            return Err(err(format!("unknown key `{key}`")));
        }
        let key = RunConfig::KEYS
            .iter()
            .find(|k| **k == key)
            .expect("known key");
        cfg.lines.insert(key, line_no);
    }
    Ok(cfg)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}
