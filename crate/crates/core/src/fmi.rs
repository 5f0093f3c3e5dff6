//! Fractal mapping iteration.
//!
//! A fractal `F` built by an escape scheme on `D` is carried to `Phi(F)` in two
//! independent ways: by running the scheme on the preimage `Phi^-1(q)` of every
//! target sample `q` (mapped membership), or by pushing member points forward
//! through `Phi` and rasterising the cloud. Both must describe the same set.

use rayon::prelude::*;

use crate::analysis::{compare_grids, GridComparison};
use crate::error::{Error, Result};
use crate::geometry::{GridSpec, MembershipGrid, Point2, RectDomain, TriangleDomain};
use crate::mapexpr::{parse_map, Env, MapDef};
use crate::schemes::{escape_index, membership_grid, EscapeCriterion, Scheme};

/// Target raster for mapped sets; same shape rules as [`GridSpec`].
pub type MappedGridSpec = GridSpec;

/// `(x, y) -> (a x + b y + e, c x + d y + f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl Affine {
    fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    fn apply(&self, p: Point2) -> Point2 {
        Point2::new(
            self.a * p.x + self.b * p.y + self.e,
            self.c * p.x + self.d * p.y + self.f,
        )
    }

    fn invert(&self, q: Point2) -> Point2 {
        let det = self.det();
        let (u, v) = (q.x - self.e, q.y - self.f);
        Point2::new(
            (self.d * u - self.b * v) / det,
            (self.a * v - self.c * u) / det,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    Identity,
    Affine(Affine),
    /// `(x^2 + y^2, x - y)`, inverted on the first quadrant.
    SumOfSquares,
    /// `(sin x + y, cos x)`, inverted with `x = acos(eta)` in `[0, pi]`.
    SineShift,
    /// `(x^2 - y, x + y^2)`, forward only.
    QuadraticShear,
    /// `(x + y^2, x - 2 y^(2/3))` with the real cube root, forward only.
    CubeRootShear,
    Expr(MapDef),
}

/// An invertible or forward-only plane map.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneMap {
    name: String,
    kind: MapKind,
}

/// Names accepted by [`PlaneMap::from_registry`].
pub const REGISTRY: &[(&str, &str)] = &[
    ("identity", "(x, y)"),
    ("sum-squares", "(x^2 + y^2, x - y), invertible on [0,1]^2"),
    ("sine-shift", "(sin x + y, cos x), invertible on [0,1]^2"),
    ("quadratic-shear", "(x^2 - y, x + y^2), forward only"),
    ("cbrt-shear", "(x + y^2, x - 2 y^(2/3)), forward only"),
    ("affine:a,b,c,d,e,f", "(a x + b y + e, c x + d y + f)"),
];

/// Expression-language texts of the built-in maps (forward `|` inverse).
/// Parsing one gives a map that evaluates like the native implementation.
pub const BUILTIN_EXPRESSIONS: &[(&str, &str)] = &[
    ("identity", "x, y | x, y"),
    (
        "sum-squares",
        "x^2 + y^2, x - y | (-y + sqrt(2*x - y^2))/2 + y, (-y + sqrt(2*x - y^2))/2",
    ),
    (
        "sine-shift",
        "sin(x) + y, cos(x) | acos(y), x - sin(acos(y))",
    ),
    ("quadratic-shear", "x^2 - y, x + y^2"),
    ("cbrt-shear", "x + y^2, x - 2*cbrt(y^2)"),
];

impl PlaneMap {
    pub fn identity() -> Self {
        PlaneMap::new("identity", MapKind::Identity)
    }

    pub fn affine(a: f64, b: f64, c: f64, d: f64, e: f64, f: f64) -> Result<Self> {
        let m = Affine { a, b, c, d, e, f };
        if ![a, b, c, d, e, f].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("map", "affine coefficients must be finite"));
        }
        Ok(PlaneMap::new(
            format!("affine:{a},{b},{c},{d},{e},{f}"),
            MapKind::Affine(m),
        ))
    }

    pub fn sum_of_squares() -> Self {
        PlaneMap::new("sum-squares", MapKind::SumOfSquares)
    }

    pub fn sine_shift() -> Self {
        PlaneMap::new("sine-shift", MapKind::SineShift)
    }

    pub fn quadratic_shear() -> Self {
        PlaneMap::new("quadratic-shear", MapKind::QuadraticShear)
    }

    pub fn cbrt_shear() -> Self {
        PlaneMap::new("cbrt-shear", MapKind::CubeRootShear)
    }

    pub fn from_def(def: MapDef) -> Self {
        PlaneMap::new(def.name.clone(), MapKind::Expr(def))
    }

    fn new(name: impl Into<String>, kind: MapKind) -> Self {
        PlaneMap {
            name: name.into(),
            kind,
        }
    }

    pub fn from_registry(name: &str) -> Option<Result<Self>> {
        let name = name.trim();
        if let Some(coeffs) = name.strip_prefix("affine:") {
            return Some(parse_affine(coeffs));
        }
        let map = match name {
            "identity" => PlaneMap::identity(),
            "sum-squares" => PlaneMap::sum_of_squares(),
            "sine-shift" => PlaneMap::sine_shift(),
            "quadratic-shear" => PlaneMap::quadratic_shear(),
            "cbrt-shear" => PlaneMap::cbrt_shear(),
            _ => return None,
        };
        Some(Ok(map))
    }

    /// Registry name, `affine:...`, or an expression map `"f1, f2 [| g1, g2]"`.
    pub fn parse(text: &str) -> Result<Self> {
        match PlaneMap::from_registry(text) {
            Some(map) => map,
            None => Ok(PlaneMap::from_def(parse_map(text)?)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &MapKind {
        &self.kind
    }

    pub fn has_inverse(&self) -> bool {
        match &self.kind {
            MapKind::Identity | MapKind::SumOfSquares | MapKind::SineShift => true,
            MapKind::Affine(m) => m.det() != 0.0,
            MapKind::QuadraticShear | MapKind::CubeRootShear => false,
            MapKind::Expr(def) => def.inverse.is_some(),
        }
    }

    fn eval_error(p: Point2, source: crate::mapexpr::EvalError) -> Error {
        Error::Eval { point: p, source }
    }

    pub fn forward(&self, p: Point2) -> Result<Point2> {
        let out = match &self.kind {
            MapKind::Identity => p,
            MapKind::Affine(m) => m.apply(p),
            MapKind::SumOfSquares => Point2::new(p.x * p.x + p.y * p.y, p.x - p.y),
            MapKind::SineShift => Point2::new(p.x.sin() + p.y, p.x.cos()),
            MapKind::QuadraticShear => Point2::new(p.x * p.x - p.y, p.x + p.y * p.y),
            MapKind::CubeRootShear => Point2::new(p.x + p.y * p.y, p.x - 2.0 * (p.y * p.y).cbrt()),
            MapKind::Expr(def) => {
                let env = Env::xy(p.x, p.y);
                let x = def.forward[0]
                    .eval(&env)
                    .map_err(|e| Self::eval_error(p, e))?;
                let y = def.forward[1]
                    .eval(&env)
                    .map_err(|e| Self::eval_error(p, e))?;
                Point2::new(x, y)
            }
        };
        if !out.is_finite() {
            return Err(Error::Eval {
                point: p,
                source: crate::mapexpr::EvalError::NonFinite { offset: 0 },
            });
        }
        Ok(out)
    }

    pub fn inverse(&self, q: Point2) -> Result<Point2> {
        let not_in_image = || Error::NotInImage {
            map: self.name.clone(),
            point: q,
        };
        let out = match &self.kind {
            MapKind::Identity => q,
            MapKind::Affine(m) if m.det() != 0.0 => m.invert(q),
            MapKind::SumOfSquares => {
                let disc = 2.0 * q.x - q.y * q.y;
                if disc < 0.0 {
                    return Err(not_in_image());
                }
                let y = (-q.y + disc.sqrt()) / 2.0;
                Point2::new(y + q.y, y)
            }
            MapKind::SineShift => {
                if q.y.abs() > 1.0 {
                    return Err(not_in_image());
                }
                let x = q.y.acos();
                Point2::new(x, q.x - x.sin())
            }
            MapKind::Expr(MapDef {
                inverse: Some(inv), ..
            }) => {
                let env = Env::xy(q.x, q.y);
                // A domain error in the inverse means q has no preimage.
                let x = inv[0].eval(&env).map_err(|_| not_in_image())?;
                let y = inv[1].eval(&env).map_err(|_| not_in_image())?;
                Point2::new(x, y)
            }
            _ => return Err(Error::NoInverse(self.name.clone())),
        };
        if !out.is_finite() {
            return Err(not_in_image());
        }
        Ok(out)
    }
}

fn parse_affine(coeffs: &str) -> Result<PlaneMap> {
    let values: Vec<f64> = coeffs
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid("map", format!("bad affine coefficients `{coeffs}`")))?;
    match values[..] {
        [a, b, c, d, e, f] => PlaneMap::affine(a, b, c, d, e, f),
        _ => Err(Error::invalid(
            "map",
            format!("affine needs 6 coefficients, got {}", values.len()),
        )),
    }
}

pub fn apply_forward(map: &PlaneMap, p: Point2) -> Result<Point2> {
    map.forward(p)
}

pub fn apply_inverse(map: &PlaneMap, q: Point2) -> Result<Point2> {
    map.inverse(q)
}

/// Outcome of running a scheme on the preimage of a target point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappedEscape {
    Member,
    Excluded(u32),
    /// No preimage, or the preimage lies outside the scheme domain.
    Outside,
}

pub fn mapped_escape_index(
    map: &PlaneMap,
    scheme: &Scheme,
    criterion: EscapeCriterion,
    q0: Point2,
    k: u32,
) -> Result<MappedEscape> {
    if !map.has_inverse() {
        return Err(Error::NoInverse(map.name.clone()));
    }
    let p0 = match map.inverse(q0) {
        Ok(p) => p,
        Err(Error::NotInImage { .. }) => return Ok(MappedEscape::Outside),
        Err(e) => return Err(e),
    };
    if !scheme.domain_contains(p0) {
        return Ok(MappedEscape::Outside);
    }
    Ok(match escape_index(scheme, criterion, p0, k)? {
        None => MappedEscape::Member,
        Some(n) => MappedEscape::Excluded(n),
    })
}

/// Raster of [`mapped_escape_index`] over the target cell centers;
/// `Outside` cells hold the sentinel `k + 1`.
pub fn mapped_membership_grid(
    map: &PlaneMap,
    scheme: &Scheme,
    criterion: EscapeCriterion,
    spec: &MappedGridSpec,
    k: u32,
) -> Result<MembershipGrid> {
    if !map.has_inverse() {
        return Err(Error::NoInverse(map.name.clone()));
    }
    if k == 0 {
        return Err(Error::invalid("depth", "must be at least 1"));
    }
    let rows: Vec<Vec<u32>> = (0..spec.height)
        .into_par_iter()
        .map(|j| {
            (0..spec.width)
                .map(|i| {
                    let q = spec.center_unchecked(i, j);
                    Ok(match mapped_escape_index(map, scheme, criterion, q, k)? {
                        MappedEscape::Member => 0,
                        MappedEscape::Excluded(n) => n,
                        MappedEscape::Outside => k + 1,
                    })
                })
                .collect::<Result<Vec<u32>>>()
        })
        .collect::<Result<_>>()?;
    MembershipGrid::from_cells(*spec, k, rows.concat())
}

/// Points that mapped successfully plus the failures, in input order.
#[derive(Debug, Default)]
pub struct PointImage {
    pub points: Vec<Point2>,
    pub failures: Vec<(Point2, Error)>,
}

fn map_points(map: &PlaneMap, points: &[Point2]) -> PointImage {
    let results: Vec<(Point2, Result<Point2>)> =
        points.par_iter().map(|&p| (p, map.forward(p))).collect();
    let mut image = PointImage::default();
    for (p, r) in results {
        match r {
            Ok(q) => image.points.push(q),
            Err(e) => image.failures.push((p, e)),
        }
    }
    image
}

/// Forward images of the member cell centers, row-major.
pub fn forward_image_points(map: &PlaneMap, grid: &MembershipGrid) -> PointImage {
    map_points(map, &grid.member_centers())
}

/// `[S_0, S_1, ..., S_m]` with `S_{i+1} = Phi(S_i)`. Points that fail to map
/// are dropped from later iterates and listed in that iterate's failures.
pub fn discrete_orbit(map: &PlaneMap, points: &[Point2], m: usize) -> Vec<PointImage> {
    let mut orbit = Vec::with_capacity(m + 1);
    orbit.push(PointImage {
        points: points.to_vec(),
        failures: Vec::new(),
    });
    for _ in 0..m {
        let next = map_points(map, &orbit.last().expect("non-empty").points);
        orbit.push(next);
    }
    orbit
}

/// Nearest-cell binning: a cell is a member (`0`) when at least one point
/// lands in it, otherwise `1`. Points outside the domain are ignored.
pub fn rasterize_points(points: &[Point2], spec: &GridSpec) -> MembershipGrid {
    let mut cells = vec![1u32; spec.len()];
    for &p in points {
        if let Some((i, j)) = spec.cell_of(p) {
            cells[j * spec.width + i] = 0;
        }
    }
    MembershipGrid::from_cells(*spec, 1, cells).expect("binary cells fit depth 1")
}

/// Bounding box of the forward images of a 64x64 boundary-inclusive lattice
/// on the scheme domain, padded by 5% per side.
pub fn default_image_domain(map: &PlaneMap, scheme: &Scheme) -> Result<RectDomain> {
    const N: usize = 64;
    let source = match scheme {
        Scheme::Carpet(_) => RectDomain::unit_square(),
        Scheme::Gasket(_) => TriangleDomain.bounding_box(),
    };
    let lattice = (0..N).flat_map(|j| {
        (0..N).map(move |i| {
            Point2::new(
                source.x_min + source.width() * i as f64 / (N - 1) as f64,
                source.y_min + source.height() * j as f64 / (N - 1) as f64,
            )
        })
    });
    let images = lattice
        .filter(|&p| scheme.domain_contains(p))
        .filter_map(|p| map.forward(p).ok());
    RectDomain::bounding(images)
        .map(|r| r.padded(0.05))
        .ok_or_else(|| Error::invalid("map", format!("`{}` collapses the domain", map.name)))
}

#[derive(Debug, Clone)]
pub struct PushforwardReport {
    pub comparison: GridComparison,
    pub forward_points: usize,
    pub forward_failures: usize,
}

impl PushforwardReport {
    pub fn agreement(&self) -> f64 {
        self.comparison.agreement
    }
}

/// Compares the forward-image raster of the `k`-th approximation (sampled on
/// `source`) with the mapped membership grid on `target`.
pub fn verify_pushforward(
    map: &PlaneMap,
    scheme: &Scheme,
    criterion: EscapeCriterion,
    source: &GridSpec,
    target: &MappedGridSpec,
    k: u32,
) -> Result<PushforwardReport> {
    let grid = membership_grid(scheme, criterion, source, k)?;
    let image = forward_image_points(map, &grid);
    let forward = rasterize_points(&image.points, target);
    let mapped = mapped_membership_grid(map, scheme, criterion, target, k)?;
    Ok(PushforwardReport {
        comparison: compare_grids(&forward, &mapped)?,
        forward_points: image.points.len(),
        forward_failures: image.failures.len(),
    })
}
