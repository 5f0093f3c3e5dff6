//! Planar ODE flows applied to fractal point sets.
//!
//! Every point is integrated independently with fixed-step classical RK4
//! from `t = 0`, so results are bit-identical for any parallel schedule.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point2;
use crate::mapexpr::{Env, Expr, Var};

/// States with a norm above this abort the integration of that point.
pub const BLOW_UP_NORM: f64 = 1e12;

pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum OdeSystem {
    /// `x' = y`, `y' = mu (1 - x^2) y - x`.
    VanDerPol { mu: f64 },
    /// `x' = y`, `y' = -delta y - beta x - alpha x^3 + gamma cos(omega t)`.
    Duffing {
        delta: f64,
        beta: f64,
        alpha: f64,
        gamma: f64,
        omega: f64,
    },
    /// `x' = dx(t, x, y)`, `y' = dy(t, x, y)`.
    Expr { dx: Expr, dy: Expr },
}

impl OdeSystem {
    pub fn van_der_pol(mu: f64) -> Result<Self> {
        check_finite("mu", mu)?;
        Ok(OdeSystem::VanDerPol { mu })
    }

    pub fn duffing(delta: f64, beta: f64, alpha: f64, gamma: f64, omega: f64) -> Result<Self> {
        for (name, v) in [
            ("delta", delta),
            ("beta", beta),
            ("alpha", alpha),
            ("gamma", gamma),
            ("omega", omega),
        ] {
            check_finite(name, v)?;
        }
        Ok(OdeSystem::Duffing {
            delta,
            beta,
            alpha,
            gamma,
            omega,
        })
    }

    pub fn from_exprs(dx: &str, dy: &str) -> Result<Self> {
        let allowed = [Var::T, Var::X, Var::Y];
        let dx = crate::mapexpr::parse_expr(dx)?;
        dx.check_variables(&allowed)?;
        let dy = crate::mapexpr::parse_expr(dy)?;
        dy.check_variables(&allowed)?;
        Ok(OdeSystem::Expr { dx, dy })
    }

    pub fn is_autonomous(&self) -> bool {
        match self {
            OdeSystem::VanDerPol { .. } => true,
            OdeSystem::Duffing { gamma, .. } => *gamma == 0.0,
            OdeSystem::Expr { dx, dy } => !dx
                .variables()
                .iter()
                .chain(dy.variables().iter())
                .any(|(v, _)| *v == Var::T),
        }
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be finite"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub step: f64,
}

impl IntegratorConfig {
    pub fn new(step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid(
                "h",
                format!("step must be positive, got {step}"),
            ));
        }
        Ok(IntegratorConfig { step })
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { step: DEFAULT_STEP }
    }
}

/// Strictly ascending, non-negative section times.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionRequest {
    times: Vec<f64>,
}

impl SectionRequest {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::invalid("times", "must be finite and >= 0"));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("times", "must be strictly ascending"));
        }
        Ok(SectionRequest { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub p: Point2,
}

pub fn vector_field(system: &OdeSystem, t: f64, s: Point2) -> Result<Point2> {
    Ok(match system {
        OdeSystem::VanDerPol { mu } => Point2::new(s.y, mu * (1.0 - s.x * s.x) * s.y - s.x),
        OdeSystem::Duffing {
            delta,
            beta,
            alpha,
            gamma,
            omega,
        } => Point2::new(
            s.y,
            -delta * s.y - beta * s.x - alpha * s.x.powi(3) + gamma * (omega * t).cos(),
        ),
        OdeSystem::Expr { dx, dy } => {
            let env = Env::txy(t, s.x, s.y);
            let err = |source| Error::Eval { point: s, source };
            Point2::new(dx.eval(&env).map_err(err)?, dy.eval(&env).map_err(err)?)
        }
    })
}

/// Right-hand side for integrating forward or along the reversed-time field
/// `-g(-t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Forward,
    Backward,
}

fn field(system: &OdeSystem, dir: Direction, t: f64, s: Point2) -> Result<Point2> {
    match dir {
        Direction::Forward => vector_field(system, t, s),
        Direction::Backward => {
            let v = vector_field(system, -t, s)?;
            Ok(Point2::new(-v.x, -v.y))
        }
    }
}

fn rk4(system: &OdeSystem, dir: Direction, t: f64, s: Point2, h: f64) -> Result<Point2> {
    let at = |p: Point2, k: Point2, c: f64| Point2::new(p.x + c * k.x, p.y + c * k.y);
    let k1 = field(system, dir, t, s)?;
    let k2 = field(system, dir, t + h / 2.0, at(s, k1, h / 2.0))?;
    let k3 = field(system, dir, t + h / 2.0, at(s, k2, h / 2.0))?;
    let k4 = field(system, dir, t + h, at(s, k3, h))?;
    Ok(Point2::new(
        s.x + h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        s.y + h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
    ))
}

/// One classical fourth-order Runge-Kutta step of size `h`.
pub fn rk4_step(system: &OdeSystem, t: f64, s: Point2, h: f64) -> Result<Point2> {
    if h.is_nan() || h <= 0.0 {
        return Err(Error::invalid("h", "step must be positive"));
    }
    rk4(system, Direction::Forward, t, s, h)
}

/// Splits `[t0, t1]` into whole steps of `h` plus a final shortened step.
/// Spans within a relative `1e-9` of a whole number of steps get no partial step.
fn step_plan(t0: f64, t1: f64, h: f64) -> (u64, f64) {
    let span = t1 - t0;
    if span <= 0.0 {
        return (0, 0.0);
    }
    let ratio = span / h;
    let nearest = ratio.round();
    if (ratio - nearest).abs() < 1e-9 * ratio.max(1.0) {
        (nearest as u64, 0.0)
    } else {
        let whole = ratio.floor();
        (whole as u64, span - whole * h)
    }
}

fn guard(t: f64, s: Point2) -> Result<Point2> {
    if !s.is_finite() || s.norm() > BLOW_UP_NORM {
        return Err(Error::BlowUp { time: t, state: s });
    }
    Ok(s)
}

/// Integrates from `(t0, s0)` to `t1 >= t0`. Step times are `t0 + i h`, so
/// splitting a span at whole steps reproduces the unsplit result.
fn advance(
    system: &OdeSystem,
    dir: Direction,
    t0: f64,
    s0: Point2,
    t1: f64,
    h: f64,
) -> Result<Point2> {
    let (steps, rest) = step_plan(t0, t1, h);
    let mut s = s0;
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        s = guard(t + h, rk4(system, dir, t, s, h)?)?;
    }
    if rest > 0.0 {
        let t = t0 + steps as f64 * h;
        s = guard(t1, rk4(system, dir, t, s, rest)?)?;
    }
    Ok(s)
}

/// The motion `A_t s0`: the state at `t_target` of the solution through `s0` at `t = 0`.
pub fn flow_to(
    system: &OdeSystem,
    s0: Point2,
    t_target: f64,
    cfg: &IntegratorConfig,
) -> Result<Point2> {
    if t_target.is_nan() || t_target < 0.0 {
        return Err(Error::invalid("t", "target time must be >= 0"));
    }
    advance(system, Direction::Forward, 0.0, s0, t_target, cfg.step)
}

/// The backward motion `A_{-t} s0`, integrated along the reversed-time field.
pub fn flow_backward(
    system: &OdeSystem,
    s0: Point2,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Point2> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::invalid("t", "time must be >= 0"));
    }
    advance(system, Direction::Backward, 0.0, s0, t, cfg.step)
}

/// Per-time images of a point set, plus the points lost to blow-up.
#[derive(Debug, Default)]
pub struct Sections {
    /// One point sequence per requested time, in input order.
    pub sections: Vec<Vec<Point2>>,
    /// `(input index, error)` for points dropped along the way.
    pub failures: Vec<(usize, Error)>,
}

fn evolve_one(
    system: &OdeSystem,
    dir: Direction,
    p: Point2,
    times: &[f64],
    h: f64,
) -> (Vec<Point2>, Option<Error>) {
    let mut states = Vec::with_capacity(times.len());
    let (mut t, mut s) = (0.0, p);
    for &target in times {
        match advance(system, dir, t, s, target, h) {
            Ok(next) => {
                states.push(next);
                t = target;
                s = next;
            }
            Err(e) => return (states, Some(e)),
        }
    }
    (states, None)
}

/// Integrates every point once through all section times.
pub fn evolve_points(
    system: &OdeSystem,
    points: &[Point2],
    sections: &SectionRequest,
    cfg: &IntegratorConfig,
) -> Sections {
    evolve_points_in(system, Direction::Forward, points, sections, cfg)
}

pub fn evolve_points_in(
    system: &OdeSystem,
    dir: Direction,
    points: &[Point2],
    sections: &SectionRequest,
    cfg: &IntegratorConfig,
) -> Sections {
    let times = sections.times();
    let per_point: Vec<(Vec<Point2>, Option<Error>)> = points
        .par_iter()
        .map(|&p| evolve_one(system, dir, p, times, cfg.step))
        .collect();
    let mut out = Sections {
        sections: vec![Vec::with_capacity(points.len()); times.len()],
        failures: Vec::new(),
    };
    for (idx, (states, err)) in per_point.into_iter().enumerate() {
        for (section, s) in out.sections.iter_mut().zip(states) {
            section.push(s);
        }
        if let Some(e) = err {
            out.failures.push((idx, e));
        }
    }
    out
}

/// Sample times `0, dt, 2 dt, ...` up to `t_end`, with `t_end` itself
/// appended when it is not a whole multiple of `dt`.
pub fn sample_times(t_end: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt <= t_end && t_end.is_finite()) {
        return Err(Error::invalid("dt", "need 0 < dt <= t_end"));
    }
    let (whole, rest) = step_plan(0.0, t_end, dt);
    let mut times: Vec<f64> = (0..=whole).map(|i| i as f64 * dt).collect();
    if rest > 0.0 {
        times.push(t_end);
    } else if let Some(last) = times.last_mut() {
        *last = t_end;
    }
    Ok(times)
}

/// Samples per input point, plus `(index, error)` for points that blew up.
pub type Trajectories = (Vec<Vec<TrajectorySample>>, Vec<(usize, Error)>);

/// Trajectory samples per point. A point that blows up keeps the samples
/// reached so far; the error is reported alongside.
pub fn trajectory_samples(
    system: &OdeSystem,
    points: &[Point2],
    t_end: f64,
    dt_sample: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectories> {
    let times = sample_times(t_end, dt_sample)?;
    let per_point: Vec<(Vec<Point2>, Option<Error>)> = points
        .par_iter()
        .map(|&p| evolve_one(system, Direction::Forward, p, &times, cfg.step))
        .collect();
    let mut failures = Vec::new();
    let samples = per_point
        .into_iter()
        .enumerate()
        .map(|(idx, (states, err))| {
            if let Some(e) = err {
                failures.push((idx, e));
            }
            times
                .iter()
                .zip(states)
                .map(|(&t, p)| TrajectorySample { t, p })
                .collect()
        })
        .collect();
    Ok((samples, failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn harmonic() -> OdeSystem {
        OdeSystem::van_der_pol(0.0).unwrap()
    }

    fn still() -> OdeSystem {
        OdeSystem::from_exprs("0", "0").unwrap()
    }

    fn close(a: Point2, b: (f64, f64), tol: f64) -> bool {
        (a.x - b.0).abs() < tol && (a.y - b.1).abs() < tol
    }

    #[test]
    fn vector_field_examples() {
        let v = vector_field(
            &OdeSystem::van_der_pol(0.5).unwrap(),
            0.0,
            Point2::new(0.0, 1.0),
        );
        assert_eq!(v.unwrap(), Point2::new(1.0, 0.5));
        for mu in [0.0, 0.5, 3.0] {
            let v = vector_field(
                &OdeSystem::van_der_pol(mu).unwrap(),
                7.0,
                Point2::new(1.0, 0.0),
            );
            assert_eq!(v.unwrap(), Point2::new(0.0, -1.0));
        }
        let duffing = OdeSystem::duffing(0.08, 0.0, 1.0, 0.2, 1.0).unwrap();
        let v = vector_field(&duffing, 0.0, Point2::new(1.0, 0.0)).unwrap();
        assert!(close(v, (0.0, -0.8), 1e-15));
    }

    #[test]
    fn rk4_step_examples() {
        let s = rk4_step(&harmonic(), 0.0, Point2::new(1.0, 0.0), 0.1).unwrap();
        assert!(close(s, (0.995_004_17, -0.099_833_33), 1e-6));
        assert!(close(s, (0.1f64.cos(), -(0.1f64.sin())), 1e-6));
        let p = Point2::new(0.3, -0.2);
        assert_eq!(rk4_step(&still(), 1.0, p, 0.5).unwrap(), p);
        assert!(rk4_step(&harmonic(), 0.0, p, 0.0).is_err());
    }

    #[test]
    fn rk4_step_is_consistent() {
        let p = Point2::new(0.7, 0.4);
        let sys = OdeSystem::van_der_pol(1.3).unwrap();
        for h in [1e-2, 1e-3, 1e-4] {
            let s = rk4_step(&sys, 0.0, p, h).unwrap();
            assert!(s.distance(p) < 2.0 * h);
        }
    }

    #[test]
    fn flow_examples() {
        let cfg = IntegratorConfig::default();
        let p = Point2::new(1.0, 0.0);
        assert!(close(
            flow_to(&harmonic(), p, 2.0 * PI, &cfg).unwrap(),
            (1.0, 0.0),
            1e-8
        ));
        assert_eq!(
            flow_to(&OdeSystem::van_der_pol(2.0).unwrap(), p, 0.0, &cfg).unwrap(),
            p
        );
        assert!(close(
            flow_to(&harmonic(), p, FRAC_PI_2, &cfg).unwrap(),
            (0.0, -1.0),
            1e-9
        ));
        assert!(flow_to(&harmonic(), p, -1.0, &cfg).is_err());
    }

    #[test]
    fn backward_flow_undoes_forward() {
        let cfg = IntegratorConfig::default();
        let sys = OdeSystem::van_der_pol(0.5).unwrap();
        let p = Point2::new(0.2, 0.4);
        let fwd = flow_to(&sys, p, 1.0, &cfg).unwrap();
        assert!(flow_backward(&sys, fwd, 1.0, &cfg).unwrap().distance(p) < 1e-10);
        let back = flow_backward(&harmonic(), Point2::new(0.0, -1.0), FRAC_PI_2, &cfg).unwrap();
        assert!(close(back, (1.0, 0.0), 1e-9));
    }

    #[test]
    fn blow_up_is_reported_with_time() {
        let cfg = IntegratorConfig::new(1e-3).unwrap();
        let sys = OdeSystem::from_exprs("x^2", "0").unwrap();
        match flow_to(&sys, Point2::new(1.0, 0.0), 2.0, &cfg) {
            Err(Error::BlowUp { time, .. }) => assert!(time > 0.9 && time < 1.01, "{time}"),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn evolve_examples() {
        let cfg = IntegratorConfig::default();
        let pts = vec![Point2::new(0.1, 0.2), Point2::new(-3.0, 4.0)];
        let s = evolve_points(
            &still(),
            &pts,
            &SectionRequest::new(vec![1.0, 2.0]).unwrap(),
            &cfg,
        );
        assert_eq!(s.sections, vec![pts.clone(), pts.clone()]);

        let req = SectionRequest::new(vec![FRAC_PI_2, PI]).unwrap();
        let s = evolve_points(&harmonic(), &[Point2::new(1.0, 0.0)], &req, &cfg);
        assert!(close(s.sections[0][0], (0.0, -1.0), 1e-8));
        assert!(close(s.sections[1][0], (-1.0, 0.0), 1e-8));

        let s = evolve_points(&harmonic(), &[], &req, &cfg);
        assert!(s.sections.iter().all(|v| v.is_empty()));
    }

    #[test]
    fn evolve_drops_blown_up_points() {
        let cfg = IntegratorConfig::default();
        let sys = OdeSystem::from_exprs("x^2", "0").unwrap();
        let pts = [Point2::new(1.0, 0.0), Point2::new(0.1, 0.0)];
        let req = SectionRequest::new(vec![0.5, 2.0]).unwrap();
        let s = evolve_points(&sys, &pts, &req, &cfg);
        assert_eq!(s.sections[0].len(), 2);
        assert_eq!(s.sections[1].len(), 1);
        assert_eq!(s.failures.len(), 1);
        assert_eq!(s.failures[0].0, 0);
    }

    #[test]
    fn section_request_validation() {
        assert!(SectionRequest::new(vec![1.0, 1.0]).is_err());
        assert!(SectionRequest::new(vec![2.0, 1.0]).is_err());
        assert!(SectionRequest::new(vec![-1.0]).is_err());
        assert!(SectionRequest::new(vec![0.0, 0.5]).is_ok());
    }

    #[test]
    fn trajectory_examples() {
        let cfg = IntegratorConfig::default();
        let (samples, _) =
            trajectory_samples(&harmonic(), &[Point2::new(1.0, 0.0)], 0.4, 0.4, &cfg).unwrap();
        assert_eq!(samples[0].len(), 2);
        assert_eq!(samples[0][0].t, 0.0);
        assert_eq!(samples[0][1].t, 0.4);

        let p = Point2::new(0.5, 0.5);
        let (samples, _) = trajectory_samples(&still(), &[p], 1.0, 0.25, &cfg).unwrap();
        assert_eq!(samples[0].len(), 5);
        assert!(samples[0].iter().all(|s| s.p == p));

        let (samples, _) =
            trajectory_samples(&harmonic(), &[Point2::new(1.0, 0.0)], PI, FRAC_PI_2, &cfg).unwrap();
        let expected = [
            (0.0, (1.0, 0.0)),
            (FRAC_PI_2, (0.0, -1.0)),
            (PI, (-1.0, 0.0)),
        ];
        assert_eq!(samples[0].len(), 3);
        for (s, (t, p)) in samples[0].iter().zip(expected) {
            assert!((s.t - t).abs() < 1e-15);
            assert!(close(s.p, p, 1e-8));
        }
        assert!(trajectory_samples(&still(), &[p], 1.0, 2.0, &cfg).is_err());
    }

    #[test]
    fn sample_times_appends_uneven_end() {
        assert_eq!(sample_times(1.0, 0.4).unwrap(), vec![0.0, 0.4, 0.8, 1.0]);
        assert_eq!(sample_times(1.0, 0.25).unwrap().len(), 5);
    }

    #[test]
    fn autonomy_detection() {
        assert!(harmonic().is_autonomous());
        assert!(!OdeSystem::duffing(0.0, 1.0, 1.0, 0.2, 1.0)
            .unwrap()
            .is_autonomous());
        assert!(OdeSystem::duffing(0.0, 1.0, 1.0, 0.0, 1.0)
            .unwrap()
            .is_autonomous());
        assert!(!OdeSystem::from_exprs("cos(t)", "x")
            .unwrap()
            .is_autonomous());
        assert!(OdeSystem::from_exprs("x", "foo").is_err());
    }
}
