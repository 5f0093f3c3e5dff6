//! Escape-criterion iteration schemes for Sierpinski carpets and gaskets.
//!
//! Each scheme produces, for a starting point, a sequence of stage values
//! `n = 1, 2, ...`; an escape rule decides at which stage (if any) the point
//! is excluded from the `k`-th approximation.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{in_triangle, GridSpec, MembershipGrid, Point2};
use crate::mapexpr::{FuncDef, Node, Var};

/// Parameters `a, b > 1` of the sine scheme `psi_n(x) = B sin(A_n x)` with
/// `A_n = pi a^(n-1)` and `B = 1 / sin(pi / b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineParams {
    a: f64,
    b: f64,
    amplitude: f64,
}

impl SineParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 1.0) {
            return Err(Error::invalid(
                "a",
                format!("must be a finite number > 1, got {a}"),
            ));
        }
        if !(b.is_finite() && b > 1.0) {
            return Err(Error::invalid(
                "b",
                format!("must be a finite number > 1, got {b}"),
            ));
        }
        let s = (PI / b).sin();
        let amplitude = 1.0 / s;
        if !(s > 0.0 && amplitude.is_finite()) {
            return Err(Error::invalid("b", format!("sin(pi/{b}) must be positive")));
        }
        Ok(SineParams { a, b, amplitude })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `B = 1 / sin(pi / b)`.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// `A_n = pi a^(n-1)`.
    pub fn frequency(&self, n: u32) -> f64 {
        PI * self.a.powi(n as i32 - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CarpetScheme {
    /// `(3/2 - 3|x - 1/2|, 3/2 - 3|y - 1/2|)`.
    Tent2D,
    /// Modified tent map applied per coordinate.
    ModTent2D,
    /// Non-iterative `psi_n(x0, y0)`.
    Sine(SineParams),
    /// Autonomous form `x -> B sin(a asin(x / B))`.
    AutoSine(SineParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EscapeCriterion {
    /// Excluded once either coordinate has escaped.
    AnyCoordinate,
    /// Excluded once both coordinates have escaped, possibly at different stages.
    BothEventually,
    /// Excluded when both coordinates violate the bound at the same stage.
    BothSimultaneous,
}

/// A gasket profile function (`alpha`, `beta` or `gamma`).
#[derive(Debug, Clone, PartialEq)]
pub struct Profile(FuncDef);

impl Profile {
    /// Accepts an expression in `x`, or a bare unary function name such as
    /// `sin`, which stands for `sin(x)`.
    pub fn parse(text: &str) -> Result<Self> {
        let trimmed = text.trim();
        let is_name = !trimmed.is_empty()
            && trimmed.bytes().all(|c| c.is_ascii_lowercase())
            && !matches!(trimmed, "x" | "pi");
        let def = if is_name {
            FuncDef::parse(&format!("{trimmed}(x)"))?
        } else {
            FuncDef::parse(trimmed)?
        };
        Ok(Profile(def))
    }

    pub fn sin() -> Self {
        Profile::parse("sin(x)").expect("builtin profile")
    }

    pub fn eval(&self, v: f64, at: Point2) -> Result<f64> {
        self.0
            .eval(v)
            .map_err(|source| Error::Eval { point: at, source })
    }

    /// Short display form, e.g. `sin(x)`.
    pub fn text(&self) -> String {
        match &self.0.body.node {
            Node::Call(f, args) if matches!(args[0].node, Node::Var(Var::X)) => {
                format!("{}(x)", f.name())
            }
            _ => self.0.to_string(),
        }
    }
}

/// Gasket recursion `(alpha(A_n x'), beta(A_n x''), gamma(A_n y))` with
/// `A_n = (2/sqrt3) pi a^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GasketScheme {
    pub alpha: Profile,
    pub beta: Profile,
    pub gamma: Profile,
    a: f64,
}

impl GasketScheme {
    pub fn new(alpha: Profile, beta: Profile, gamma: Profile, a: f64) -> Result<Self> {
        if !(a.is_finite() && a > 1.0) {
            return Err(Error::invalid(
                "a",
                format!("must be a finite number > 1, got {a}"),
            ));
        }
        Ok(GasketScheme {
            alpha,
            beta,
            gamma,
            a,
        })
    }

    /// `alpha = beta = gamma = sin`, `a = 2`.
    pub fn classical() -> Self {
        GasketScheme::new(Profile::sin(), Profile::sin(), Profile::sin(), 2.0)
            .expect("classical parameters are valid")
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn frequency(&self, n: u32) -> f64 {
        2.0 / 3f64.sqrt() * PI * self.a.powi(n as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Carpet(CarpetScheme),
    Gasket(GasketScheme),
}

impl Scheme {
    /// Whether `p` lies in the domain on which the scheme is defined:
    /// the unit square for carpets and the unit triangle for gaskets.
    pub fn domain_contains(&self, p: Point2) -> bool {
        match self {
            Scheme::Carpet(_) => (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y),
            Scheme::Gasket(_) => in_triangle(p),
        }
    }

    pub fn is_gasket(&self) -> bool {
        matches!(self, Scheme::Gasket(_))
    }
}

impl From<CarpetScheme> for Scheme {
    fn from(s: CarpetScheme) -> Self {
        Scheme::Carpet(s)
    }
}

impl From<GasketScheme> for Scheme {
    fn from(s: GasketScheme) -> Self {
        Scheme::Gasket(s)
    }
}

fn tent(v: f64) -> f64 {
    1.5 - 3.0 * (v - 0.5).abs()
}

fn mod_tent(v: f64) -> f64 {
    if v <= 0.5 || v > 1.0 {
        3.0 * (v - v.floor())
    } else {
        3.0 * (1.0 - v)
    }
}

pub fn step_tent2d(p: Point2) -> Point2 {
    Point2::new(tent(p.x), tent(p.y))
}

pub fn step_mod_tent2d(p: Point2) -> Point2 {
    Point2::new(mod_tent(p.x), mod_tent(p.y))
}

/// `psi_n(p0)` for `n >= 1`; depends only on `p0` and `n`.
pub fn psi_term(params: &SineParams, p0: Point2, n: u32) -> Result<Point2> {
    if n == 0 {
        return Err(Error::invalid("n", "stage index starts at 1"));
    }
    let freq = params.frequency(n);
    let b = params.amplitude();
    Ok(Point2::new(
        b * (freq * p0.x).sin(),
        b * (freq * p0.y).sin(),
    ))
}

/// The point left `[-B, B]`, so the arcsine in the autonomous step is undefined.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("value {value} is outside the arcsine domain [-{amplitude}, {amplitude}]")]
pub struct OutsideArcsine {
    pub value: f64,
    pub amplitude: f64,
}

fn auto_sine(params: &SineParams, v: f64) -> std::result::Result<f64, OutsideArcsine> {
    let b = params.amplitude();
    let ratio = v / b;
    if ratio.is_nan() || ratio.abs() > 1.0 {
        return Err(OutsideArcsine {
            value: v,
            amplitude: b,
        });
    }
    Ok(b * (params.a() * ratio.asin()).sin())
}

pub fn step_auto_sine(
    params: &SineParams,
    p: Point2,
) -> std::result::Result<Point2, OutsideArcsine> {
    Ok(Point2::new(
        auto_sine(params, p.x)?,
        auto_sine(params, p.y)?,
    ))
}

/// Projections onto the `x'` and `x''` axes at +-60 degrees through the
/// origin; `y` is returned unchanged.
pub fn gasket_project(p: Point2) -> (f64, f64, f64) {
    let s3 = 3f64.sqrt();
    ((s3 * p.x + p.y) / 2.0, (-s3 * p.x + p.y) / 2.0, p.y)
}

pub fn gasket_term(scheme: &GasketScheme, p: Point2, n: u32) -> Result<(f64, f64, f64)> {
    if n == 0 {
        return Err(Error::invalid("n", "stage index starts at 1"));
    }
    let (xp, xpp, y) = gasket_project(p);
    let freq = scheme.frequency(n);
    Ok((
        scheme.alpha.eval(freq * xp, p)?,
        scheme.beta.eval(freq * xpp, p)?,
        scheme.gamma.eval(freq * y, p)?,
    ))
}

/// Per-coordinate escape bookkeeping; the `escaped` flags only ever go from
/// `false` to `true`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeState {
    pub current: Point2,
    pub x_escaped: bool,
    pub y_escaped: bool,
    pub stage: u32,
}

impl EscapeState {
    fn new(p0: Point2) -> Self {
        EscapeState {
            current: p0,
            x_escaped: false,
            y_escaped: false,
            stage: 0,
        }
    }

    /// Records the stage-`n` violations and reports whether `criterion` fires.
    fn record(&mut self, criterion: EscapeCriterion, vx: bool, vy: bool) -> bool {
        self.stage += 1;
        self.x_escaped |= vx;
        self.y_escaped |= vy;
        match criterion {
            EscapeCriterion::AnyCoordinate => self.x_escaped || self.y_escaped,
            EscapeCriterion::BothEventually => self.x_escaped && self.y_escaped,
            EscapeCriterion::BothSimultaneous => vx && vy,
        }
    }
}

fn carpet_escape(
    scheme: &CarpetScheme,
    criterion: EscapeCriterion,
    p0: Point2,
    k: u32,
) -> Result<Option<u32>> {
    let mut state = EscapeState::new(p0);
    // Coordinates whose autonomous step left the arcsine domain stay out.
    let (mut x_out, mut y_out) = (false, false);
    for n in 1..=k {
        let (vx, vy) = match scheme {
            CarpetScheme::Tent2D => {
                state.current = step_tent2d(state.current);
                (state.current.x > 1.0, state.current.y > 1.0)
            }
            CarpetScheme::ModTent2D => {
                state.current = step_mod_tent2d(state.current);
                (state.current.x > 1.0, state.current.y > 1.0)
            }
            CarpetScheme::Sine(params) => {
                state.current = psi_term(params, p0, n)?;
                (state.current.x.abs() > 1.0, state.current.y.abs() > 1.0)
            }
            CarpetScheme::AutoSine(params) => {
                let advance = |v: &mut f64, out: &mut bool| -> bool {
                    if *out {
                        return true;
                    }
                    match auto_sine(params, *v) {
                        Ok(next) => {
                            *v = next;
                            next.abs() > 1.0
                        }
                        Err(_) => {
                            *out = true;
                            true
                        }
                    }
                };
                let mut cur = state.current;
                let vx = advance(&mut cur.x, &mut x_out);
                let vy = advance(&mut cur.y, &mut y_out);
                state.current = cur;
                (vx, vy)
            }
        };
        if state.record(criterion, vx, vy) {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

fn gasket_escape(scheme: &GasketScheme, p0: Point2, k: u32) -> Result<Option<u32>> {
    for n in 1..=k {
        let (xp, xpp, y) = gasket_term(scheme, p0, n)?;
        if xp > 0.0 && xpp > 0.0 && y < 0.0 {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Smallest stage `n <= k` at which `p0` is excluded, or `None` when `p0`
/// belongs to the `k`-th approximation. Gaskets always use the three-sign
/// rule and ignore `criterion`.
pub fn escape_index(
    scheme: &Scheme,
    criterion: EscapeCriterion,
    p0: Point2,
    k: u32,
) -> Result<Option<u32>> {
    if k == 0 {
        return Err(Error::invalid("depth", "must be at least 1"));
    }
    match scheme {
        Scheme::Carpet(c) => carpet_escape(c, criterion, p0, k),
        Scheme::Gasket(g) => gasket_escape(g, p0, k),
    }
}

/// Rasterises the `k`-th approximation: `0` for members, the exclusion stage
/// otherwise, and `k + 1` for cells outside the scheme domain.
pub fn membership_grid(
    scheme: &Scheme,
    criterion: EscapeCriterion,
    spec: &GridSpec,
    k: u32,
) -> Result<MembershipGrid> {
    if k == 0 {
        return Err(Error::invalid("depth", "must be at least 1"));
    }
    let sentinel = k + 1;
    let rows: Vec<Vec<u32>> = (0..spec.height)
        .into_par_iter()
        .map(|j| {
            (0..spec.width)
                .map(|i| {
                    let p = spec.center_unchecked(i, j);
                    if !scheme.domain_contains(p) {
                        return Ok(sentinel);
                    }
                    Ok(escape_index(scheme, criterion, p, k)?.unwrap_or(0))
                })
                .collect::<Result<Vec<u32>>>()
        })
        .collect::<Result<_>>()?;
    MembershipGrid::from_cells(*spec, k, rows.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RectDomain;

    const TOL: f64 = 1e-7;

    fn close(a: Point2, b: (f64, f64)) -> bool {
        (a.x - b.0).abs() < TOL && (a.y - b.1).abs() < TOL
    }

    fn carpet(s: CarpetScheme) -> Scheme {
        Scheme::Carpet(s)
    }

    fn sine33() -> SineParams {
        SineParams::new(3.0, 3.0).unwrap()
    }

    #[test]
    fn tent_examples() {
        assert_eq!(step_tent2d(Point2::new(0.0, 0.0)), Point2::new(0.0, 0.0));
        assert_eq!(step_tent2d(Point2::new(0.5, 0.5)), Point2::new(1.5, 1.5));
        assert!(close(step_tent2d(Point2::new(0.2, 0.7)), (0.6, 0.9)));
    }

    #[test]
    fn mod_tent_examples() {
        assert!(close(step_mod_tent2d(Point2::new(0.4, 0.7)), (1.2, 0.9)));
        assert_eq!(
            step_mod_tent2d(Point2::new(1.5, 1.5)),
            Point2::new(1.5, 1.5)
        );
        assert_eq!(
            step_mod_tent2d(Point2::new(0.5, 1.0)),
            Point2::new(1.5, 0.0)
        );
    }

    #[test]
    fn psi_examples() {
        let p = sine33();
        assert!(close(
            psi_term(&p, Point2::new(0.5, 0.5), 1).unwrap(),
            (1.1547005, 1.1547005)
        ));
        let sixth = 1.0 / 6.0;
        assert!(close(
            psi_term(&p, Point2::new(sixth, sixth), 1).unwrap(),
            (0.5773503, 0.5773503)
        ));
        for n in 1..6 {
            assert_eq!(psi_term(&p, Point2::ORIGIN, n).unwrap(), Point2::ORIGIN);
        }
        assert!(psi_term(&p, Point2::ORIGIN, 0).is_err());
    }

    #[test]
    fn sine_params_validation() {
        assert!(SineParams::new(3.0, 0.0).is_err());
        assert!(SineParams::new(1.0, 3.0).is_err());
        assert!(SineParams::new(2.0, 1.5).is_ok());
        assert!(matches!(
            SineParams::new(3.0, 0.5),
            Err(Error::InvalidParameter { name, .. }) if name == "b"
        ));
    }

    #[test]
    fn auto_sine_examples() {
        let p = sine33();
        let out = step_auto_sine(&p, Point2::new(0.5, 0.0)).unwrap();
        assert!(close(out, (1.125, 0.0)));
        let q = SineParams::new(4.0, 5.0).unwrap();
        assert_eq!(step_auto_sine(&q, Point2::ORIGIN).unwrap(), Point2::ORIGIN);
        assert!(step_auto_sine(&p, Point2::new(1.2, 0.0)).is_err());
    }

    #[test]
    fn gasket_projection_examples() {
        assert_eq!(gasket_project(Point2::ORIGIN), (0.0, 0.0, 0.0));
        let (a, b, c) = gasket_project(Point2::new(0.0, 0.577_350_3));
        assert!((a - 0.2886751).abs() < TOL && (b - 0.2886751).abs() < TOL);
        assert!((c - 0.5773503).abs() < TOL);
        let (a, b, c) = gasket_project(Point2::new(0.5, 0.866_025_4));
        assert!((a - 0.8660254).abs() < TOL && b.abs() < TOL && (c - 0.8660254).abs() < TOL);
    }

    #[test]
    fn gasket_term_examples() {
        let g = GasketScheme::classical();
        let h = 3f64.sqrt() / 2.0;
        let (a, b, c) = gasket_term(&g, Point2::new(0.0, 3f64.sqrt() / 3.0), 1).unwrap();
        assert!((a - h).abs() < TOL && (b - h).abs() < TOL && (c + h).abs() < TOL);
        let (a, b, c) = gasket_term(&g, Point2::new(0.0, 3f64.sqrt() / 6.0), 2).unwrap();
        assert!((a - h).abs() < TOL && (b - h).abs() < TOL && (c + h).abs() < TOL);
        for n in 1..5 {
            assert_eq!(gasket_term(&g, Point2::ORIGIN, n).unwrap(), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn escape_index_examples() {
        use EscapeCriterion::*;
        let mt = carpet(CarpetScheme::ModTent2D);
        assert_eq!(
            escape_index(&mt, BothSimultaneous, Point2::new(0.5, 0.5), 6).unwrap(),
            Some(1)
        );
        assert_eq!(
            escape_index(&mt, BothSimultaneous, Point2::new(1.0 / 6.0, 0.5), 6).unwrap(),
            Some(2)
        );
        let sine = carpet(CarpetScheme::Sine(sine33()));
        let sixth = 1.0 / 6.0;
        assert_eq!(
            escape_index(&sine, BothSimultaneous, Point2::new(sixth, sixth), 6).unwrap(),
            Some(2)
        );
        let g = Scheme::Gasket(GasketScheme::classical());
        assert_eq!(
            escape_index(&g, AnyCoordinate, Point2::ORIGIN, 10).unwrap(),
            None
        );
        let centroid = Point2::new(0.0, 3f64.sqrt() / 3.0);
        assert_eq!(
            escape_index(&g, AnyCoordinate, centroid, 10).unwrap(),
            Some(1)
        );
        assert!(escape_index(&g, AnyCoordinate, centroid, 0).is_err());
    }

    #[test]
    fn gasket_vertices_are_members() {
        let g = Scheme::Gasket(GasketScheme::classical());
        for v in crate::geometry::TriangleDomain.vertices() {
            assert_eq!(
                escape_index(&g, EscapeCriterion::AnyCoordinate, v, 10).unwrap(),
                None
            );
        }
    }

    #[test]
    fn both_eventually_needs_memory() {
        // x escapes at stage 1 (middle third), y only at stage 2; the tent map
        // sends x negative afterwards so the raw values never coincide.
        let tent = carpet(CarpetScheme::Tent2D);
        let p = Point2::new(0.5, 0.5 / 3.0);
        use EscapeCriterion::*;
        assert_eq!(escape_index(&tent, AnyCoordinate, p, 4).unwrap(), Some(1));
        assert_eq!(escape_index(&tent, BothEventually, p, 4).unwrap(), Some(2));
        assert_eq!(escape_index(&tent, BothSimultaneous, p, 4).unwrap(), None);
    }

    #[test]
    fn one_axis_tent_gives_cantor_set() {
        // Degenerate one-axis case: the 1D tent map with y pinned at 1/2
        // (which escapes at once) reduces AnyCoordinate to the y escape, so
        // use BothEventually to read off the x-axis Cantor set.
        let tent = carpet(CarpetScheme::Tent2D);
        let stage = |x: f64| {
            escape_index(
                &tent,
                EscapeCriterion::BothEventually,
                Point2::new(x, 0.5),
                3,
            )
            .unwrap()
        };
        assert_eq!(stage(0.1), None); // 0.1 = 0.00220..._3
        assert_eq!(stage(0.5), Some(1));
        assert_eq!(stage(1.5 / 9.0), Some(2));
        assert_eq!(stage(7.5 / 9.0), Some(2));
        assert_eq!(stage(1.5 / 27.0), Some(3));
    }

    #[test]
    fn one_axis_perforation_set() {
        // psi-scheme perforation set: middle interval at stage 1, then
        // (1/9, 2/9), (4/9, 5/9), (7/9, 8/9) at stage 2.
        let p = sine33();
        let out = |x: f64, n| psi_term(&p, Point2::new(x, 0.0), n).unwrap().x.abs() > 1.0;
        assert!(out(0.5, 1));
        assert!(out(1.5 / 9.0, 2) && out(4.5 / 9.0, 2) && out(7.5 / 9.0, 2));
        assert!(!out(1.0 / 18.0, 2) && !out(3.0 / 9.0 + 1.0 / 18.0, 2));
    }

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::new(RectDomain::unit_square(), n, n).unwrap()
    }

    #[test]
    fn membership_grid_examples() {
        let g = membership_grid(
            &carpet(CarpetScheme::ModTent2D),
            EscapeCriterion::BothSimultaneous,
            &unit_grid(3),
            1,
        )
        .unwrap();
        assert_eq!(g.cells(), &[0, 0, 0, 0, 1, 0, 0, 0, 0]);

        let g = membership_grid(
            &carpet(CarpetScheme::Tent2D),
            EscapeCriterion::AnyCoordinate,
            &unit_grid(3),
            1,
        )
        .unwrap();
        let members: Vec<usize> = (0..9).filter(|&c| g.cells()[c] == 0).collect();
        assert_eq!(members, vec![0, 2, 6, 8]);

        for scheme in [
            carpet(CarpetScheme::Tent2D),
            carpet(CarpetScheme::Sine(sine33())),
            carpet(CarpetScheme::AutoSine(sine33())),
        ] {
            let g =
                membership_grid(&scheme, EscapeCriterion::AnyCoordinate, &unit_grid(1), 1).unwrap();
            assert_eq!(g.cells().len(), 1);
            assert!(g.cells()[0] <= 1);
        }
    }

    #[test]
    fn gasket_grid_marks_outside_cells() {
        let spec = GridSpec::new(crate::geometry::TriangleDomain.bounding_box(), 16, 14).unwrap();
        let g = membership_grid(
            &Scheme::Gasket(GasketScheme::classical()),
            EscapeCriterion::AnyCoordinate,
            &spec,
            3,
        )
        .unwrap();
        assert_eq!(g.get(0, 0), 4);
        assert_eq!(g.get(15, 0), 4);
        assert!(g.cells().iter().all(|&v| v <= 4));
        assert!(g.member_count() > 0);
    }

    #[test]
    fn profile_accepts_bare_names() {
        assert_eq!(
            Profile::parse("cos").unwrap(),
            Profile::parse("cos(x)").unwrap()
        );
        assert_eq!(Profile::parse(" atan ").unwrap().text(), "atan(x)");
        assert!(Profile::parse("foo").is_err());
        assert!(Profile::parse("sin(y)").is_err());
    }
}
