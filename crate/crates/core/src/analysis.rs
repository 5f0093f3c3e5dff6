//! Independent IFS oracles, box-counting dimension, grid comparison and
//! empirical bi-Lipschitz constants.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmi::PlaneMap;
use crate::geometry::{in_triangle, GridSpec, MembershipGrid, Point2, RectDomain, TriangleDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FractalTag {
    Carpet,
    Gasket,
}

/// `p -> M p + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contraction {
    pub matrix: [[f64; 2]; 2],
    pub offset: [f64; 2],
}

impl Contraction {
    fn scaled(ratio: f64, offset: [f64; 2]) -> Self {
        Contraction {
            matrix: [[ratio, 0.0], [0.0, ratio]],
            offset,
        }
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        let m = &self.matrix;
        Point2::new(
            m[0][0] * p.x + m[0][1] * p.y + self.offset[0],
            m[1][0] * p.x + m[1][1] * p.y + self.offset[1],
        )
    }

    /// Operator 2-norm of the linear part.
    pub fn ratio(&self) -> f64 {
        let [[a, b], [c, d]] = self.matrix;
        let s = a * a + b * b + c * c + d * d;
        let det = a * d - b * c;
        ((s + (s * s - 4.0 * det * det).max(0.0).sqrt()) / 2.0).sqrt()
    }
}

/// An iterated function system together with the shape it is applied to.
#[derive(Debug, Clone, PartialEq)]
pub struct IfsSpec {
    pub tag: FractalTag,
    pub maps: Vec<Contraction>,
}

impl IfsSpec {
    /// Eight maps of ratio 1/3 on the unit square, skipping the center.
    pub fn carpet() -> Self {
        let maps = (0..3)
            .flat_map(|dy| (0..3).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| (dx, dy) != (1, 1))
            .map(|(dx, dy)| Contraction::scaled(1.0 / 3.0, [dx as f64 / 3.0, dy as f64 / 3.0]))
            .collect();
        IfsSpec {
            tag: FractalTag::Carpet,
            maps,
        }
    }

    /// Three maps of ratio 1/2 toward the corners of the unit triangle.
    pub fn gasket() -> Self {
        let maps = TriangleDomain
            .vertices()
            .iter()
            .map(|v| Contraction::scaled(0.5, [v.x / 2.0, v.y / 2.0]))
            .collect();
        IfsSpec {
            tag: FractalTag::Gasket,
            maps,
        }
    }

    pub fn for_tag(tag: FractalTag) -> Self {
        match tag {
            FractalTag::Carpet => IfsSpec::carpet(),
            FractalTag::Gasket => IfsSpec::gasket(),
        }
    }

    fn base_polygon(&self) -> Vec<Point2> {
        match self.tag {
            FractalTag::Carpet => vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            FractalTag::Gasket => TriangleDomain.vertices().to_vec(),
        }
    }
}

const DIGIT_BITS: u32 = 3;
const MAX_DEPTH: u32 = 21;

/// The depth-`k` cells of an IFS, identified by their map addresses. Digit
/// `i` (most significant first) is the index of the `i`-th map from the
/// outside in the composition `f_a1 o f_a2 o ... o f_ak`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    pub tag: FractalTag,
    pub depth: u32,
    pub addresses: Vec<u64>,
}

impl CellSet {
    pub fn empty(tag: FractalTag, depth: u32) -> Self {
        CellSet {
            tag,
            depth,
            addresses: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }

    pub fn digits(&self, address: u64) -> Vec<u8> {
        (0..self.depth)
            .rev()
            .map(|i| ((address >> (i * DIGIT_BITS)) & 0b111) as u8)
            .collect()
    }

    /// Addresses truncated to depth `depth - 1` (the parent cells).
    pub fn parents(&self) -> Vec<u64> {
        let mut out: Vec<u64> = self.addresses.iter().map(|a| a >> DIGIT_BITS).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Carpet cells as base-3 index pairs `(column, row)` on the `3^k` lattice.
    pub fn carpet_indices(&self) -> Option<Vec<(u32, u32)>> {
        if self.tag != FractalTag::Carpet {
            return None;
        }
        let offsets: Vec<(u32, u32)> = (0..3u32)
            .flat_map(|dy| (0..3u32).map(move |dx| (dx, dy)))
            .filter(|&p| p != (1, 1))
            .collect();
        Some(
            self.addresses
                .iter()
                .map(|&a| {
                    self.digits(a).iter().fold((0, 0), |(ix, iy), &d| {
                        let (dx, dy) = offsets[d as usize];
                        (ix * 3 + dx, iy * 3 + dy)
                    })
                })
                .collect(),
        )
    }
}

/// Deterministic Hutchinson iteration to depth `k`.
pub fn ifs_cells(tag: FractalTag, k: u32) -> Result<CellSet> {
    if k > MAX_DEPTH {
        return Err(Error::invalid("depth", format!("at most {MAX_DEPTH}")));
    }
    let ifs = IfsSpec::for_tag(tag);
    let mut addresses = vec![0u64];
    for level in 0..k {
        let shift = level * DIGIT_BITS;
        addresses = (0..ifs.maps.len() as u64)
            .flat_map(|m| addresses.iter().map(move |&a| (m << shift) | a))
            .collect();
    }
    addresses.sort_unstable();
    Ok(CellSet {
        tag,
        depth: k,
        addresses,
    })
}

fn cell_polygon(ifs: &IfsSpec, cells: &CellSet, address: u64) -> Vec<Point2> {
    let digits = cells.digits(address);
    ifs.base_polygon()
        .into_iter()
        .map(|p| {
            digits
                .iter()
                .rev()
                .fold(p, |q, &d| ifs.maps[d as usize].apply(q))
        })
        .collect()
}

/// Closed containment in a convex polygon with a tolerance relative to its size.
fn in_convex(poly: &[Point2], p: Point2, eps: f64) -> bool {
    let n = poly.len();
    let mut sign = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        let edge = a.distance(b);
        if cross.abs() <= eps * edge {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

/// Rasterises oracle cells by cell-center containment: members `0`, others
/// `1`; for gaskets, cells whose center is outside the triangle hold the
/// sentinel.
pub fn cells_to_grid(cells: &CellSet, spec: &GridSpec) -> MembershipGrid {
    let depth = cells.depth.max(1);
    let sentinel = depth + 1;
    let ifs = IfsSpec::for_tag(cells.tag);
    let mut values = vec![1u32; spec.len()];
    if cells.tag == FractalTag::Gasket {
        for j in 0..spec.height {
            for i in 0..spec.width {
                if !in_triangle(spec.center_unchecked(i, j)) {
                    values[j * spec.width + i] = sentinel;
                }
            }
        }
    }
    let (cw, ch) = (spec.cell_width(), spec.cell_height());
    let d = spec.domain;
    for &address in &cells.addresses {
        let poly = cell_polygon(&ifs, cells, address);
        let Some(bb) = RectDomain::bounding(poly.iter().copied()) else {
            continue;
        };
        let eps = 1e-12 * bb.width().max(bb.height());
        let i0 = (((bb.x_min - d.x_min) / cw - 0.5).floor().max(0.0)) as usize;
        let j0 = (((bb.y_min - d.y_min) / ch - 0.5).floor().max(0.0)) as usize;
        let i1 = ((((bb.x_max - d.x_min) / cw - 0.5).ceil()).max(0.0) as usize).min(spec.width - 1);
        let j1 =
            ((((bb.y_max - d.y_min) / ch - 0.5).ceil()).max(0.0) as usize).min(spec.height - 1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let c = spec.center_unchecked(i, j);
                let idx = j * spec.width + i;
                if values[idx] != sentinel && in_convex(&poly, c, eps) {
                    values[idx] = 0;
                }
            }
        }
    }
    MembershipGrid::from_cells(*spec, depth, values).expect("oracle values fit the depth")
}

/// Box counts on dyadic scales and the fitted log-log slope.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxCountResult {
    /// Box edge lengths in cells: `1, 2, 4, ...`.
    pub scales: Vec<usize>,
    pub counts: Vec<usize>,
    pub slope: f64,
    pub r_squared: f64,
}

/// Dyadic levels used when none are requested: box sizes up to a quarter of
/// the shorter grid side, and never fewer than 3.
pub fn default_levels(width: usize, height: usize) -> u32 {
    let quarter = width.min(height) / 4;
    if quarter < 1 {
        return 3;
    }
    (quarter.ilog2() + 1).max(3)
}

/// Least-squares slope of `log N(s)` against `log(1/s)` for box sizes
/// `s = 2^0 .. 2^(levels-1)` cells, boxes anchored at cell `(0, 0)`.
pub fn box_dimension(grid: &MembershipGrid, levels: u32) -> Result<BoxCountResult> {
    if levels < 3 {
        return Err(Error::invalid("levels", "need at least 3 box sizes"));
    }
    let (mut w, mut h) = (grid.width(), grid.height());
    let mut mask: Vec<bool> = grid.cells().iter().map(|&v| v == 0).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::NoMembers);
    }
    let mut scales = Vec::with_capacity(levels as usize);
    let mut counts = Vec::with_capacity(levels as usize);
    for level in 0..levels {
        scales.push(1usize << level);
        counts.push(mask.iter().filter(|&&m| m).count());
        if level + 1 == levels {
            break;
        }
        let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
        let prev = &mask;
        let next: Vec<bool> = (0..nh)
            .into_par_iter()
            .flat_map_iter(|j| {
                (0..nw).map(move |i| {
                    let mut any = false;
                    for dj in 0..2 {
                        for di in 0..2 {
                            let (x, y) = (2 * i + di, 2 * j + dj);
                            if x < w && y < h && prev[y * w + x] {
                                any = true;
                            }
                        }
                    }
                    any
                })
            })
            .collect();
        mask = next;
        w = nw;
        h = nh;
    }
    let xs: Vec<f64> = scales.iter().map(|&s| -(s as f64).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let (slope, r_squared) = linear_fit(&xs, &ys);
    Ok(BoxCountResult {
        scales,
        counts,
        slope,
        r_squared,
    })
}

/// Ordinary least squares; returns `(slope, r^2)`. A perfectly flat response
/// counts as a perfect fit.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    (slope, r2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridComparison {
    /// Fraction of compared cells where membership agrees.
    pub agreement: f64,
    /// Cells where neither grid holds its sentinel.
    pub compared: usize,
    pub both_members: usize,
    pub a_only: usize,
    pub b_only: usize,
}

pub fn compare_grids(a: &MembershipGrid, b: &MembershipGrid) -> Result<GridComparison> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            a_width: a.width(),
            a_height: a.height(),
            b_width: b.width(),
            b_height: b.height(),
        });
    }
    let (sa, sb) = (a.sentinel(), b.sentinel());
    let mut cmp = GridComparison {
        agreement: 1.0,
        compared: 0,
        both_members: 0,
        a_only: 0,
        b_only: 0,
    };
    for (&va, &vb) in a.cells().iter().zip(b.cells()) {
        if va == sa || vb == sb {
            continue;
        }
        cmp.compared += 1;
        match (va == 0, vb == 0) {
            (true, true) => cmp.both_members += 1,
            (true, false) => cmp.a_only += 1,
            (false, true) => cmp.b_only += 1,
            (false, false) => {}
        }
    }
    if cmp.compared > 0 {
        let disagree = cmp.a_only + cmp.b_only;
        cmp.agreement = 1.0 - disagree as f64 / cmp.compared as f64;
    }
    Ok(cmp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzEstimate {
    pub l1: f64,
    pub l2: f64,
    pub samples: usize,
}

/// Van der Corput radical inverse of `i` in `base`.
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Offset into the Halton sequence; skips the degenerate first terms.
const HALTON_START: u64 = 20;

/// `i`-th point pair of a 4D Halton sequence scaled to `domain`.
fn halton_pair(domain: &RectDomain, i: u64) -> (Point2, Point2) {
    let idx = HALTON_START + i;
    let at = |hx: f64, hy: f64| {
        Point2::new(
            domain.x_min + hx * domain.width(),
            domain.y_min + hy * domain.height(),
        )
    };
    (
        at(radical_inverse(idx, 2), radical_inverse(idx, 3)),
        at(radical_inverse(idx, 5), radical_inverse(idx, 7)),
    )
}

/// Extreme distortion ratios `|Phi(u) - Phi(v)| / |u - v|` over quasi-random
/// pairs in `domain`.
pub fn estimate_bilipschitz(
    map: &PlaneMap,
    domain: &RectDomain,
    samples: usize,
) -> Result<LipschitzEstimate> {
    if samples < 2 {
        return Err(Error::invalid("samples", "need at least 2 pairs"));
    }
    let min_sep = 1e-9 * domain.width().hypot(domain.height());
    let ratios: Vec<Option<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (u, v) = halton_pair(domain, i);
            let d = u.distance(v);
            if d < min_sep {
                return Ok(None);
            }
            Ok(Some(map.forward(u)?.distance(map.forward(v)?) / d))
        })
        .collect::<Result<_>>()?;
    let (mut l1, mut l2, mut used) = (f64::INFINITY, 0.0f64, 0usize);
    for r in ratios.into_iter().flatten() {
        l1 = l1.min(r);
        l2 = l2.max(r);
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid("samples", "no usable point pairs"));
    }
    Ok(LipschitzEstimate {
        l1,
        l2,
        samples: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> GridSpec {
        GridSpec::new(RectDomain::unit_square(), n, n).unwrap()
    }

    #[test]
    fn ifs_counts() {
        assert_eq!(ifs_cells(FractalTag::Carpet, 1).unwrap().len(), 8);
        assert_eq!(ifs_cells(FractalTag::Gasket, 2).unwrap().len(), 9);
        assert_eq!(ifs_cells(FractalTag::Carpet, 0).unwrap().len(), 1);
        for k in 0..=5 {
            assert_eq!(
                ifs_cells(FractalTag::Carpet, k).unwrap().len(),
                8usize.pow(k)
            );
            assert_eq!(
                ifs_cells(FractalTag::Gasket, k).unwrap().len(),
                3usize.pow(k)
            );
        }
    }

    #[test]
    fn contraction_ratios_below_one() {
        for ifs in [IfsSpec::carpet(), IfsSpec::gasket()] {
            for m in &ifs.maps {
                assert!(m.ratio() < 1.0);
            }
        }
        assert!((IfsSpec::carpet().maps[0].ratio() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn carpet_indices_skip_center_digits() {
        let cells = ifs_cells(FractalTag::Carpet, 2).unwrap();
        let idx = cells.carpet_indices().unwrap();
        assert_eq!(idx.len(), 64);
        for (ix, iy) in idx {
            assert!(!(ix % 3 == 1 && iy % 3 == 1));
            assert!(!(ix / 3 == 1 && iy / 3 == 1));
        }
    }

    #[test]
    fn cells_to_grid_examples() {
        let g = cells_to_grid(&ifs_cells(FractalTag::Carpet, 1).unwrap(), &unit(3));
        assert_eq!(g.cells(), &[0, 0, 0, 0, 1, 0, 0, 0, 0]);
        let g = cells_to_grid(&ifs_cells(FractalTag::Carpet, 2).unwrap(), &unit(9));
        assert_eq!(g.member_count(), 64);
        let g = cells_to_grid(&CellSet::empty(FractalTag::Carpet, 2), &unit(9));
        assert!(g.cells().iter().all(|&v| v == 1));
    }

    #[test]
    fn gasket_oracle_grid_has_sentinel_background() {
        let spec = GridSpec::new(TriangleDomain.bounding_box(), 32, 28).unwrap();
        let g = cells_to_grid(&ifs_cells(FractalTag::Gasket, 1).unwrap(), &spec);
        assert_eq!(g.get(0, 0), g.sentinel());
        // Center of the removed middle triangle.
        let (i, j) = spec.cell_of(TriangleDomain.centroid()).unwrap();
        assert_eq!(g.get(i, j), 1);
        // Near the origin corner.
        let (i, j) = spec.cell_of(Point2::new(0.0, 0.05)).unwrap();
        assert_eq!(g.get(i, j), 0);
    }

    #[test]
    fn box_dimension_filled_and_point() {
        let full = MembershipGrid::from_cells(unit(512), 1, vec![0; 512 * 512]).unwrap();
        let r = box_dimension(&full, 6).unwrap();
        assert!((r.slope - 2.0).abs() < 0.02, "{r:?}");
        let mut cells = vec![1; 512 * 512];
        cells[1000] = 0;
        let point = MembershipGrid::from_cells(unit(512), 1, cells).unwrap();
        let r = box_dimension(&point, 6).unwrap();
        assert!(r.slope.abs() < 0.02);
        assert_eq!(r.counts, vec![1; 6]);
    }

    #[test]
    fn default_levels_reach_a_quarter_of_the_short_side() {
        assert_eq!(default_levels(729, 729), 8);
        assert_eq!(default_levels(1024, 887), 8);
        assert_eq!(default_levels(512, 512), 8);
        assert_eq!(default_levels(2048, 1774), 9);
        assert_eq!(default_levels(81, 81), 5);
        assert_eq!(default_levels(3, 3), 3);
        assert_eq!(default_levels(1, 1000), 3);
    }

    #[test]
    fn box_dimension_errors() {
        let empty = MembershipGrid::from_cells(unit(8), 1, vec![1; 64]).unwrap();
        assert!(matches!(box_dimension(&empty, 3), Err(Error::NoMembers)));
        let full = MembershipGrid::from_cells(unit(8), 1, vec![0; 64]).unwrap();
        assert!(box_dimension(&full, 2).is_err());
    }

    #[test]
    fn compare_examples() {
        let a = cells_to_grid(&ifs_cells(FractalTag::Carpet, 2).unwrap(), &unit(9));
        assert_eq!(compare_grids(&a, &a).unwrap().agreement, 1.0);
        let full = MembershipGrid::from_cells(unit(9), 1, vec![0; 81]).unwrap();
        let none = MembershipGrid::from_cells(unit(9), 1, vec![1; 81]).unwrap();
        assert_eq!(compare_grids(&full, &none).unwrap().agreement, 0.0);
        let other = MembershipGrid::from_cells(unit(3), 1, vec![0; 9]).unwrap();
        assert!(matches!(
            compare_grids(&a, &other),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn compare_skips_sentinels() {
        let spec = GridSpec::new(RectDomain::unit_square(), 3, 1).unwrap();
        let a = MembershipGrid::from_cells(spec, 2, vec![0, 3, 1]).unwrap();
        let b = MembershipGrid::from_cells(spec, 2, vec![0, 0, 0]).unwrap();
        let c = compare_grids(&a, &b).unwrap();
        assert_eq!(c.compared, 2);
        assert_eq!(c.b_only, 1);
        assert_eq!(c.agreement, 0.5);
    }

    #[test]
    fn halton_is_deterministic_and_in_range() {
        let d = RectDomain::new(-1.0, 2.0, 3.0, 4.0).unwrap();
        for i in 0..100 {
            let (u, v) = halton_pair(&d, i);
            assert!(d.contains(u) && d.contains(v));
            assert_eq!(halton_pair(&d, i), (u, v));
        }
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(5, 3), 2.0 / 3.0 + 1.0 / 9.0);
    }

    #[test]
    fn bilipschitz_examples() {
        let d = RectDomain::unit_square();
        let id = estimate_bilipschitz(&PlaneMap::identity(), &d, 1000).unwrap();
        assert!((id.l1 - 1.0).abs() < 1e-12 && (id.l2 - 1.0).abs() < 1e-12);
        let double = PlaneMap::affine(2.0, 0.0, 0.0, 2.0, 0.0, 0.0).unwrap();
        let e = estimate_bilipschitz(&double, &d, 1000).unwrap();
        assert!((e.l1 - 2.0).abs() < 1e-12 && (e.l2 - 2.0).abs() < 1e-12);
        assert!(estimate_bilipschitz(&double, &d, 1).is_err());
    }
}
