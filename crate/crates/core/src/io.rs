//! Deterministic file outputs: binary PGM/PPM rasters and CSV point lists,
//! plus a small netpbm reader for round trips.
//!
//! Rasters are written top row first, where the top row holds the maximal
//! `y` of the grid domain.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::TrajectorySample;
use crate::geometry::{GridSpec, MembershipGrid, Point2, RectDomain};

pub type Rgb = [u8; 3];

/// Stage colours. Grayscale: member black, stage `n` of `k` at
/// `55 + floor(200 n / k)`, sentinel white.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    pub member: Rgb,
    pub sentinel: Rgb,
    /// Colours for stages `1, 2, ...`; reused cyclically past its length.
    pub ramp: Vec<Rgb>,
}

/// Fixed colour ramp for the PPM mode.
const COLOR_RAMP: [Rgb; 12] = [
    [0x1f, 0x3a, 0x93],
    [0x2e, 0x86, 0xc1],
    [0x17, 0xa5, 0x89],
    [0x58, 0xd6, 0x8d],
    [0xd4, 0xe1, 0x57],
    [0xf4, 0xd0, 0x3f],
    [0xf3, 0x9c, 0x12],
    [0xe6, 0x7e, 0x22],
    [0xd3, 0x54, 0x00],
    [0xc0, 0x39, 0x2b],
    [0x8e, 0x44, 0xad],
    [0x6c, 0x34, 0x83],
];

impl Palette {
    pub fn gray(depth: u32) -> Self {
        let k = depth.max(1) as u64;
        let ramp = (1..=k)
            .map(|n| {
                let v = (55 + 200 * n / k) as u8;
                [v, v, v]
            })
            .collect();
        Palette {
            member: [0, 0, 0],
            sentinel: [255, 255, 255],
            ramp,
        }
    }

    pub fn color() -> Self {
        Palette {
            member: [0, 0, 0],
            sentinel: [255, 255, 255],
            ramp: COLOR_RAMP.to_vec(),
        }
    }

    pub fn color_of(&self, value: u32, sentinel: u32) -> Rgb {
        if value == 0 {
            self.member
        } else if value >= sentinel {
            self.sentinel
        } else {
            self.ramp[(value as usize - 1) % self.ramp.len()]
        }
    }
}

fn rows_top_down(grid: &MembershipGrid) -> impl Iterator<Item = &[u32]> {
    grid.cells().chunks(grid.width()).rev()
}

pub fn encode_pgm(grid: &MembershipGrid) -> Vec<u8> {
    let palette = Palette::gray(grid.depth());
    let mut out = format!("P5\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.reserve(grid.cells().len());
    for row in rows_top_down(grid) {
        out.extend(row.iter().map(|&v| palette.color_of(v, grid.sentinel())[0]));
    }
    out
}

pub fn encode_ppm(grid: &MembershipGrid, palette: &Palette) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", grid.width(), grid.height()).into_bytes();
    out.reserve(3 * grid.cells().len());
    for row in rows_top_down(grid) {
        for &v in row {
            out.extend_from_slice(&palette.color_of(v, grid.sentinel()));
        }
    }
    out
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(grid: &MembershipGrid, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(grid))
}

pub fn write_ppm(grid: &MembershipGrid, palette: &Palette, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_ppm(grid, palette))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmKind {
    Gray,
    Rgb,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PnmImage {
    pub kind: PnmKind,
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Samples in file order (top row first), 1 or 3 per pixel.
    pub data: Vec<u8>,
}

impl PnmImage {
    pub fn pixel(&self, col: usize, row_from_top: usize) -> Rgb {
        let idx = row_from_top * self.width + col;
        match self.kind {
            PnmKind::Gray => {
                let v = self.data[idx];
                [v, v, v]
            }
            PnmKind::Rgb => [
                self.data[3 * idx],
                self.data[3 * idx + 1],
                self.data[3 * idx + 2],
            ],
        }
    }

    /// Members are black pixels. For PPM, white pixels are the sentinel;
    /// in PGM white is also the last stage, so it reads as a non-member.
    pub fn to_grid(&self) -> Result<MembershipGrid> {
        let domain = RectDomain::new(0.0, self.width as f64, 0.0, self.height as f64)?;
        let spec = GridSpec::new(domain, self.width, self.height)?;
        let mut cells = Vec::with_capacity(self.width * self.height);
        for j in 0..self.height {
            let row = self.height - 1 - j;
            for i in 0..self.width {
                let px = self.pixel(i, row);
                cells.push(match (self.kind, px) {
                    (_, [0, 0, 0]) => 0,
                    (PnmKind::Rgb, [255, 255, 255]) => 2,
                    _ => 1,
                });
            }
        }
        MembershipGrid::from_cells(spec, 1, cells)
    }
}

/// Parses binary PGM (P5) or PPM (P6) with 8-bit samples; `#` comments are
/// allowed in the header.
pub fn decode_pnm(bytes: &[u8], origin: &Path) -> Result<PnmImage> {
    let bad = |message: &str| Error::Format {
        path: origin.to_path_buf(),
        message: message.to_string(),
    };
    let kind = match bytes.get(..2) {
        Some(b"P5") => PnmKind::Gray,
        Some(b"P6") => PnmKind::Rgb,
        _ => return Err(bad("not a binary PGM/PPM file")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|c| c.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed header number"))?;
    }
    if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(bad("missing whitespace after header"));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit samples are supported"));
    }
    let channels = if kind == PnmKind::Rgb { 3 } else { 1 };
    let expected = width * height * channels;
    let data = &bytes[pos..];
    if data.len() != expected {
        return Err(bad(&format!(
            "expected {expected} sample bytes, found {}",
            data.len()
        )));
    }
    Ok(PnmImage {
        kind,
        width,
        height,
        maxval: maxval as u16,
        data: data.to_vec(),
    })
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<PnmImage> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes, path)
}

/// `%.9g`-style formatting: 9 significant digits, trailing zeros trimmed,
/// exponent form outside `1e-4 <= |v| < 1e9`.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn encode_csv_points(points: &[Point2]) -> String {
    let mut out = String::from("x,y\n");
    for p in points {
        out.push_str(&format!("{},{}\n", format_sig9(p.x), format_sig9(p.y)));
    }
    out
}

pub fn encode_csv_trajectories(samples: &[Vec<TrajectorySample>]) -> String {
    let mut out = String::from("t,x,y\n");
    for s in samples.iter().flatten() {
        out.push_str(&format!(
            "{},{},{}\n",
            format_sig9(s.t),
            format_sig9(s.p.x),
            format_sig9(s.p.y)
        ));
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_csv_points(points: &[Point2], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &encode_csv_points(points))
}

pub fn write_csv_trajectories(
    samples: &[Vec<TrajectorySample>],
    path: impl AsRef<Path>,
) -> Result<()> {
    write_text(path.as_ref(), &encode_csv_trajectories(samples))
}

/// Reads an `x,y` CSV as written by [`write_csv_points`].
pub fn read_csv_points(path: impl AsRef<Path>) -> Result<Vec<Point2>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_points(&text, path)
}

pub fn parse_csv_points(text: &str, origin: &Path) -> Result<Vec<Point2>> {
    let bad = |line: usize, message: String| Error::Format {
        path: origin.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "x,y" => {}
        _ => return Err(bad(1, "expected header `x,y`".into())),
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (Some(x), Some(y), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(idx + 1, "expected two fields".into()));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(idx + 1, format!("bad number `{s}`")))
        };
        points.push(Point2::new(parse(x)?, parse(y)?));
    }
    Ok(points)
}
