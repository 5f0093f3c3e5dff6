//! Plane primitives and the raster model shared by every scheme.
//!
//! A [`MembershipGrid`] stores one escape index per cell: `0` for points that
//! survive all `depth` stages, `n` in `1..=depth` for points excluded at stage
//! `n`, and `depth + 1` for cells whose sample lies outside the scheme domain.

use crate::error::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn swapped(self) -> Point2 {
        Point2::new(self.y, self.x)
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2::new(x, y)
    }
}

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectDomain {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl RectDomain {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::invalid(
                "domain",
                format!("[{x_min}, {x_max}] x [{y_min}, {y_max}] is not a proper rectangle"),
            ));
        }
        Ok(RectDomain {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    pub const fn unit_square() -> Self {
        RectDomain {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    /// Smallest rectangle containing every point, or `None` for an empty or
    /// degenerate set.
    pub fn bounding(points: impl IntoIterator<Item = Point2>) -> Option<Self> {
        let mut it = points.into_iter().filter(|p| p.is_finite());
        let first = it.next()?;
        let (mut x0, mut x1, mut y0, mut y1) = (first.x, first.x, first.y, first.y);
        for p in it {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        RectDomain::new(x0, x1, y0, y1).ok()
    }

    /// Grows every side by `fraction` of the corresponding extent.
    pub fn padded(&self, fraction: f64) -> Self {
        let dx = self.width() * fraction;
        let dy = self.height() * fraction;
        RectDomain {
            x_min: self.x_min - dx,
            x_max: self.x_max + dx,
            y_min: self.y_min - dy,
            y_max: self.y_max + dy,
        }
    }
}

/// The fixed unit equilateral triangle with vertices `(0, 0)`,
/// `(-1/2, sqrt3/2)` and `(1/2, sqrt3/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TriangleDomain;

impl TriangleDomain {
    pub const HEIGHT: f64 = SQRT_3 / 2.0;

    pub fn vertices(&self) -> [Point2; 3] {
        [
            Point2::ORIGIN,
            Point2::new(-0.5, Self::HEIGHT),
            Point2::new(0.5, Self::HEIGHT),
        ]
    }

    pub fn centroid(&self) -> Point2 {
        Point2::new(0.0, SQRT_3 / 3.0)
    }

    pub fn contains(&self, p: Point2) -> bool {
        in_triangle(p)
    }

    pub fn bounding_box(&self) -> RectDomain {
        RectDomain {
            x_min: -0.5,
            x_max: 0.5,
            y_min: 0.0,
            y_max: Self::HEIGHT,
        }
    }
}

/// Membership in the unit triangle: `-y/sqrt3 <= x <= y/sqrt3`, `0 <= y <= sqrt3/2`.
pub fn in_triangle(p: Point2) -> bool {
    let half_width = p.y / SQRT_3;
    // Vertices sit on the slanted edges up to one rounding of the division.
    let slack = 4.0 * f64::EPSILON * half_width.abs();
    p.y >= 0.0
        && p.y <= TriangleDomain::HEIGHT
        && p.x >= -half_width - slack
        && p.x <= half_width + slack
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub domain: RectDomain,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(domain: RectDomain, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(
                "grid",
                format!("{width}x{height} has an empty axis"),
            ));
        }
        Ok(GridSpec {
            domain,
            width,
            height,
        })
    }

    pub fn cell_width(&self) -> f64 {
        self.domain.width() / self.width as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.domain.height() / self.height as f64
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Midpoint of cell `(i, j)`; row `j = 0` holds the minimal `y`.
    pub fn cell_center(&self, i: usize, j: usize) -> Result<Point2> {
        if i >= self.width || j >= self.height {
            return Err(Error::IndexOutOfRange {
                i,
                j,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.center_unchecked(i, j))
    }

    /// Centers are offset from the domain midpoint, so cells mirrored about
    /// the midpoint get exactly negated offsets.
    pub(crate) fn center_unchecked(&self, i: usize, j: usize) -> Point2 {
        let d = &self.domain;
        let along = |k: usize, n: usize, lo: f64, hi: f64| {
            let offset = (2 * k + 1) as f64 - n as f64;
            (lo + hi) / 2.0 + offset * (hi - lo) / (2 * n) as f64
        };
        Point2::new(
            along(i, self.width, d.x_min, d.x_max),
            along(j, self.height, d.y_min, d.y_max),
        )
    }

    /// Cell containing `p` under nearest-cell binning, if `p` lies in the domain.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        if !p.is_finite() || !self.domain.contains(p) {
            return None;
        }
        let fi = (p.x - self.domain.x_min) / self.cell_width();
        let fj = (p.y - self.domain.y_min) / self.cell_height();
        let i = (fi.floor() as usize).min(self.width - 1);
        let j = (fj.floor() as usize).min(self.height - 1);
        Some((i, j))
    }
}

/// Free-function form of [`GridSpec::cell_center`].
pub fn cell_center(spec: &GridSpec, i: usize, j: usize) -> Result<Point2> {
    spec.cell_center(i, j)
}

/// The `depth`-th approximation of a set as a raster of escape indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipGrid {
    spec_width: usize,
    spec_height: usize,
    depth: u32,
    cells: Vec<u32>,
    domain: [u64; 4],
}

impl MembershipGrid {
    /// Builds a grid from row-major cells (row 0 = minimal `y`).
    pub fn from_cells(spec: GridSpec, depth: u32, cells: Vec<u32>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::invalid("depth", "must be at least 1"));
        }
        if cells.len() != spec.len() {
            return Err(Error::invalid(
                "cells",
                format!("expected {} values, got {}", spec.len(), cells.len()),
            ));
        }
        if let Some(bad) = cells.iter().find(|&&v| v > depth + 1) {
            return Err(Error::invalid(
                "cells",
                format!("value {bad} exceeds sentinel {}", depth + 1),
            ));
        }
        Ok(MembershipGrid {
            spec_width: spec.width,
            spec_height: spec.height,
            depth,
            cells,
            domain: [
                spec.domain.x_min.to_bits(),
                spec.domain.x_max.to_bits(),
                spec.domain.y_min.to_bits(),
                spec.domain.y_max.to_bits(),
            ],
        })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            domain: RectDomain {
                x_min: f64::from_bits(self.domain[0]),
                x_max: f64::from_bits(self.domain[1]),
                y_min: f64::from_bits(self.domain[2]),
                y_max: f64::from_bits(self.domain[3]),
            },
            width: self.spec_width,
            height: self.spec_height,
        }
    }

    pub fn width(&self) -> usize {
        self.spec_width
    }

    pub fn height(&self) -> usize {
        self.spec_height
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Value reserved for cells outside the scheme domain.
    pub fn sentinel(&self) -> u32 {
        self.depth + 1
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.cells[j * self.spec_width + i]
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    pub fn is_member(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == 0
    }

    pub fn member_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v == 0).count()
    }

    /// Centers of member cells in row-major order.
    pub fn member_centers(&self) -> Vec<Point2> {
        let spec = self.spec();
        let mut out = Vec::with_capacity(self.member_count());
        for j in 0..self.spec_height {
            for i in 0..self.spec_width {
                if self.is_member(i, j) {
                    out.push(spec.center_unchecked(i, j));
                }
            }
        }
        out
    }
}
