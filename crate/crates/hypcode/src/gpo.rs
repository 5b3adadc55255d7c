//! Admissible curves, graph transforms, stable/unstable curves of
//! pseudo-orbits, shadowing, the first-coding roof, and center lifts.
//!
//! Curve data lives in chart coordinates and is propagated through the exact
//! affine chart maps, never through materialized manifold points; offsets far
//! below the floating-point spacing of the base coordinates stay exact this
//! way.

use crate::charts::{ChartError, ChartMapDecomp, ChartSystem, DoubleChart};
use crate::model::{ModelFlow, PointM, RoofProfile};
use crate::sections::holonomy_forward;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpoError {
    #[error("chart error: {0}")]
    Chart(#[from] ChartError),
    #[error("section error: {0}")]
    Section(#[from] crate::sections::SectionError),
    #[error("pair at index {0} fails the edge conditions")]
    NotAnEdge(i64),
    #[error("transformed curve is not a graph over its axis")]
    GraphReparamFailure,
    #[error("stable and unstable curves do not intersect inside the window")]
    NoIntersection,
    #[error("curve violates admissibility: {0} = {1} (limit {2})")]
    NotAdmissible(&'static str, f64, f64),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CurveKind {
    Stable,
    Unstable,
}

/// Graph of a small function in chart coordinates: stable curves are graphs
/// `(t, F(t))` over `[-p^s, p^s]`, unstable curves `(F(t), t)` over
/// `[-p^u, p^u]`. 65 samples with cubic interpolation.
#[derive(Clone, Debug)]
pub struct AdmissibleCurve {
    pub kind: CurveKind,
    /// half-width of the parameter interval (p^s or p^u of the owner)
    pub p: f64,
    /// p^s ^ p^u of the owner, for the admissibility thresholds
    pub p_min: f64,
    pub samples: Vec<f64>,
}

pub const CURVE_SAMPLES: usize = 65;

impl AdmissibleCurve {
    pub fn flat(kind: CurveKind, p: f64, p_min: f64) -> Self {
        AdmissibleCurve { kind, p, p_min, samples: vec![0.0; CURVE_SAMPLES] }
    }

    /// Largest constant curve allowed by the value condition; used as the
    /// second seed in the double-seed convergence check.
    pub fn offset_seed(kind: CurveKind, p: f64, p_min: f64) -> Self {
        AdmissibleCurve { kind, p, p_min, samples: vec![1e-3 * p_min; CURVE_SAMPLES] }
    }

    fn grid_t(&self, i: usize) -> f64 {
        -self.p + 2.0 * self.p * i as f64 / (CURVE_SAMPLES - 1) as f64
    }

    /// Cubic (Catmull-Rom) interpolation of the sample grid; endpoints are
    /// extended linearly so straight data is reproduced exactly.
    pub fn eval(&self, t: f64) -> f64 {
        let n = CURVE_SAMPLES - 1;
        let x = ((t + self.p) / (2.0 * self.p) * n as f64).clamp(0.0, n as f64);
        let i = (x.floor() as usize).min(n - 1);
        let f = x - i as f64;
        let at = |j: i64| {
            if j < 0 {
                2.0 * self.samples[0] - self.samples[1]
            } else if j > n as i64 {
                2.0 * self.samples[n] - self.samples[n - 1]
            } else {
                self.samples[j as usize]
            }
        };
        let (p0, p1, p2, p3) = (at(i as i64 - 1), at(i as i64), at(i as i64 + 1), at(i as i64 + 2));
        let a = (-p0 + 3.0 * p1 - 3.0 * p2 + p3) / 2.0;
        let b = p0 - 2.5 * p1 + 2.0 * p2 - p3 / 2.0;
        let c = (p2 - p0) / 2.0;
        ((a * f + b) * f + c) * f + p1
    }

    /// Finite-difference derivative samples.
    fn derivative_samples(&self) -> Vec<f64> {
        let h = 2.0 * self.p / (CURVE_SAMPLES - 1) as f64;
        let n = CURVE_SAMPLES;
        (0..n)
            .map(|i| {
                if i == 0 {
                    (self.samples[1] - self.samples[0]) / h
                } else if i == n - 1 {
                    (self.samples[n - 1] - self.samples[n - 2]) / h
                } else {
                    (self.samples[i + 1] - self.samples[i - 1]) / (2.0 * h)
                }
            })
            .collect()
    }

    /// Check the three admissibility conditions with sampled seminorms.
    pub fn check_admissible(&self, beta: f64) -> Result<(), GpoError> {
        let f0 = self.eval(0.0);
        let lim0 = 1e-3 * self.p_min;
        if f0.abs() > lim0 * (1.0 + 1e-9) {
            return Err(GpoError::NotAdmissible("|F(0)|", f0.abs(), lim0));
        }
        let ds = self.derivative_samples();
        let d0 = ds[CURVE_SAMPLES / 2];
        let lim1 = 0.5 * self.p_min.powf(beta / 3.0);
        if d0.abs() > lim1 {
            return Err(GpoError::NotAdmissible("|F'(0)|", d0.abs(), lim1));
        }
        let sup_d = ds.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        let mut hoel = 0.0f64;
        let stride = 4;
        for i in (0..CURVE_SAMPLES).step_by(stride) {
            for j in ((i + 1)..CURVE_SAMPLES).step_by(stride) {
                let dt = self.grid_t(j) - self.grid_t(i);
                hoel = hoel.max((ds[j] - ds[i]).abs() / dt.powf(beta / 3.0));
            }
        }
        if sup_d + hoel > 0.5 {
            return Err(GpoError::NotAdmissible("|F'| + Hoelder(F')", sup_d + hoel, 0.5));
        }
        Ok(())
    }

    /// C0 distance between two curves at the same chart (sampled).
    pub fn dist_c0(&self, other: &AdmissibleCurve) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// C1 distance (value plus first finite difference, sampled).
    pub fn dist_c1(&self, other: &AdmissibleCurve) -> f64 {
        let da = self.derivative_samples();
        let db = other.derivative_samples();
        let dv = da.iter().zip(&db).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        self.dist_c0(other) + dv
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,F\n");
        for (i, s) in self.samples.iter().enumerate() {
            out.push_str(&format!("{:.17e},{:.17e}\n", self.grid_t(i), s));
        }
        out
    }
}

/// Pseudo-orbit over double charts: a core window, with optional periodic
/// wraps on both sides. A period of 0 marks a truncated tail: the path is
/// only known on its window (the finite-horizon semantics).
#[derive(Clone, Debug)]
pub struct GpoPath {
    pub charts: Vec<DoubleChart>,
    /// index of position 0 inside `charts`
    pub origin: usize,
    /// wrap length at the start (first `past_period` entries repeat
    /// backward); 0 for a truncated past
    pub past_period: usize,
    /// wrap length at the end (last `future_period` entries repeat
    /// forward); 0 for a truncated future
    pub future_period: usize,
}

impl GpoPath {
    /// Chart at index n. Panics outside a truncated window.
    pub fn chart_at(&self, n: i64) -> &DoubleChart {
        let len = self.charts.len() as i64;
        let idx = self.origin as i64 + n;
        if idx < 0 {
            assert!(self.past_period > 0, "index {} beyond a truncated past", n);
            let p = self.past_period as i64;
            let w = ((idx % p) + p) % p;
            &self.charts[w as usize]
        } else if idx >= len {
            assert!(self.future_period > 0, "index {} beyond a truncated future", n);
            let f = self.future_period as i64;
            let w = (idx - len) % f;
            &self.charts[(len - f + w) as usize]
        } else {
            &self.charts[idx as usize]
        }
    }

    pub fn window(&self) -> (i64, i64) {
        (-(self.origin as i64), self.charts.len() as i64 - self.origin as i64 - 1)
    }

    /// Largest depth usable for curve and shadow constructions.
    pub fn max_depth(&self) -> usize {
        let (lo, hi) = self.window();
        if self.past_period > 0 && self.future_period > 0 {
            usize::MAX / 4
        } else {
            (-lo).min(hi).max(0) as usize
        }
    }

    /// Validate every consecutive pair (and wrap joints where periodic).
    pub fn validate(&self, sys: &ChartSystem) -> Result<Vec<f64>, GpoError> {
        let (lo, hi) = self.window();
        let from = if self.past_period > 0 { lo - self.past_period as i64 - 1 } else { lo };
        let to = if self.future_period > 0 { hi + self.future_period as i64 + 1 } else { hi };
        let mut times = Vec::new();
        for n in from..to {
            let v = self.chart_at(n);
            let w = self.chart_at(n + 1);
            match sys.edge_test(v, w)? {
                Some(t) => times.push(t),
                None => return Err(GpoError::NotAnEdge(n)),
            }
        }
        Ok(times)
    }
}

/// Graph transform for stable curves along an edge (v, w): pull an
/// s-admissible curve at w back to v through the backward chart map.
pub fn graph_transform_s(
    sys: &ChartSystem,
    v: &DoubleChart,
    w: &DoubleChart,
    curve: &AdmissibleCurve,
) -> Result<AdmissibleCurve, GpoError> {
    assert_eq!(curve.kind, CurveKind::Stable);
    // backward chart map from w's chart into v's chart
    let d = back_map(sys, v, w)?;
    transform_stable_through(&d, v, curve, sys.consts.beta)
}

fn back_map(sys: &ChartSystem, v: &DoubleChart, w: &DoubleChart) -> Result<ChartMapDecomp, GpoError> {
    let d = sys.chart_return_map_back_into(w.base(), &v.chart)?;
    Ok(d)
}

fn transform_stable_through(
    d: &ChartMapDecomp,
    v: &DoubleChart,
    curve: &AdmissibleCurve,
    beta: f64,
) -> Result<AdmissibleCurve, GpoError> {
    // image of (t, F(t)): a(t) = A t + H_0(t, F(t)), b(t) = B F(t) + H_1
    let a_of = |t: f64| {
        let f = curve.eval(t);
        d.eval([t, f])[0]
    };
    let b_of = |t: f64| {
        let f = curve.eval(t);
        d.eval([t, f])[1]
    };
    // the first coordinate must be strictly monotone (|A| > 1 backward)
    let (a_lo, a_hi) = (a_of(-curve.p), a_of(curve.p));
    let increasing = a_hi > a_lo;
    let (mut lo, mut hi) = if increasing { (a_lo, a_hi) } else { (a_hi, a_lo) };
    lo = lo.max(-v.ps - v.ps);
    hi = hi.min(v.ps + v.ps);
    let _ = (lo, hi);
    if !(a_lo.min(a_hi) <= -v.ps && a_hi.max(a_lo) >= v.ps) {
        return Err(GpoError::GraphReparamFailure);
    }
    let mut samples = Vec::with_capacity(CURVE_SAMPLES);
    for i in 0..CURVE_SAMPLES {
        let target = -v.ps + 2.0 * v.ps * i as f64 / (CURVE_SAMPLES - 1) as f64;
        // monotone root finding by bisection with a Newton-style polish
        let (mut t0, mut t1) = (-curve.p, curve.p);
        let (f0, _f1) = (a_of(t0) - target, a_of(t1) - target);
        for _ in 0..80 {
            let tm = 0.5 * (t0 + t1);
            let fm = a_of(tm) - target;
            if (fm == 0.0) || (t1 - t0).abs() < 1e-18 * curve.p.max(1e-300) {
                t0 = tm;
                t1 = tm;
                break;
            }
            if (fm > 0.0) == (f0 > 0.0) {
                t0 = tm;
            } else {
                t1 = tm;
            }
        }
        let t_star = 0.5 * (t0 + t1);
        samples.push(b_of(t_star));
    }
    let out = AdmissibleCurve { kind: CurveKind::Stable, p: v.ps, p_min: v.p_min(), samples };
    out.check_admissible(beta)?;
    Ok(out)
}

/// Graph transform for unstable curves along an edge (v, w): push a
/// u-admissible curve at v forward to w through the forward chart map.
pub fn graph_transform_u(
    sys: &ChartSystem,
    v: &DoubleChart,
    w: &DoubleChart,
    curve: &AdmissibleCurve,
) -> Result<AdmissibleCurve, GpoError> {
    assert_eq!(curve.kind, CurveKind::Unstable);
    let d = sys.chart_return_map_into(v.base(), &w.chart)?;
    // image of (F(t), t): a(t) = A F(t) + .., b(t) = B t + ..; b is monotone
    let a_of = |t: f64| {
        let f = curve.eval(t);
        d.eval([f, t])[0]
    };
    let b_of = |t: f64| {
        let f = curve.eval(t);
        d.eval([f, t])[1]
    };
    let (b_lo, b_hi) = (b_of(-curve.p), b_of(curve.p));
    if !(b_lo.min(b_hi) <= -w.pu && b_lo.max(b_hi) >= w.pu) {
        return Err(GpoError::GraphReparamFailure);
    }
    let mut samples = Vec::with_capacity(CURVE_SAMPLES);
    let f0 = b_of(-curve.p);
    for i in 0..CURVE_SAMPLES {
        let target = -w.pu + 2.0 * w.pu * i as f64 / (CURVE_SAMPLES - 1) as f64;
        let (mut t0, mut t1) = (-curve.p, curve.p);
        for _ in 0..80 {
            let tm = 0.5 * (t0 + t1);
            let fm = b_of(tm) - target;
            if fm == 0.0 || (t1 - t0).abs() < 1e-18 * curve.p.max(1e-300) {
                t0 = tm;
                t1 = tm;
                break;
            }
            if (fm > 0.0) == (f0 - target > 0.0) {
                t0 = tm;
            } else {
                t1 = tm;
            }
        }
        let t_star = 0.5 * (t0 + t1);
        samples.push(a_of(t_star));
    }
    let out = AdmissibleCurve { kind: CurveKind::Unstable, p: w.pu, p_min: w.p_min(), samples };
    out.check_admissible(sys.consts.beta)?;
    Ok(out)
}

/// Stable curve of the forward ray of a pseudo-orbit: the limit of composed
/// graph transforms, truncated at `depth` with a certified error.
pub fn stable_curve(
    sys: &ChartSystem,
    gpo: &GpoPath,
    depth: usize,
    seed: Option<AdmissibleCurve>,
) -> Result<(AdmissibleCurve, f64), GpoError> {
    let vd = gpo.chart_at(depth as i64);
    let mut curve = seed.unwrap_or_else(|| AdmissibleCurve::flat(CurveKind::Stable, vd.ps, vd.p_min()));
    for n in (0..depth).rev() {
        let v = gpo.chart_at(n as i64);
        let w = gpo.chart_at(n as i64 + 1);
        curve = graph_transform_s(sys, v, w, &curve)?;
    }
    let theta = contraction_factor(sys);
    let v0 = gpo.chart_at(0);
    let cert = 2.0 * v0.ps * theta.powi(depth as i32);
    Ok((curve, cert))
}

/// Unstable curve of the backward ray.
pub fn unstable_curve(
    sys: &ChartSystem,
    gpo: &GpoPath,
    depth: usize,
    seed: Option<AdmissibleCurve>,
) -> Result<(AdmissibleCurve, f64), GpoError> {
    let vd = gpo.chart_at(-(depth as i64));
    let mut curve =
        seed.unwrap_or_else(|| AdmissibleCurve::flat(CurveKind::Unstable, vd.pu, vd.p_min()));
    for n in 0..depth {
        let v = gpo.chart_at(-(depth as i64) + n as i64);
        let w = gpo.chart_at(-(depth as i64) + n as i64 + 1);
        curve = graph_transform_u(sys, v, w, &curve)?;
    }
    let theta = contraction_factor(sys);
    let v0 = gpo.chart_at(0);
    let cert = 2.0 * v0.pu * theta.powi(depth as i32);
    Ok((curve, cert))
}

/// Contraction factor of one graph-transform step.
pub fn contraction_factor(sys: &ChartSystem) -> f64 {
    let inf_r = sys.reference.inf_return_time(sys.flow, 4000);
    (-sys.consts.chi * inf_r / 2.0).exp()
}

/// Hoelder-dependence certificate for curves of pseudo-orbits agreeing to
/// depth N: d_{C1} <= K theta^N with these constants.
pub fn hoelder_certificate(sys: &ChartSystem, p_scale: f64) -> (f64, f64) {
    (4.0 * p_scale, contraction_factor(sys))
}

/// Result of shadowing a bi-infinite pseudo-orbit.
#[derive(Clone, Debug)]
pub struct ShadowResult {
    pub point: PointM,
    pub chart_coords: [f64; 2],
    pub vs: AdmissibleCurve,
    pub vu: AdmissibleCurve,
    pub residual: f64,
    pub window_ok: bool,
    pub depth: usize,
}

/// The unique point whose orbit stays in the chart windows: the intersection
/// of the stable and unstable curves at position 0, found by fixed-point
/// iteration (the slope product is at most 1/4).
pub fn shadow(sys: &ChartSystem, gpo: &GpoPath, depth: usize) -> Result<ShadowResult, GpoError> {
    let (vs, _) = stable_curve(sys, gpo, depth, None)?;
    let (vu, _) = unstable_curve(sys, gpo, depth, None)?;
    // solve r = F_s(t), t = G_u(r)
    let mut t = 0.0;
    let mut r = 0.0;
    let mut residual = f64::INFINITY;
    for _ in 0..200 {
        let t_new = vu.eval(r);
        let r_new = vs.eval(t_new);
        residual = (t_new - t).abs().max((r_new - r).abs());
        t = t_new;
        r = r_new;
        if residual <= 1e-10 * vs.p.max(1e-300) + 1e-300 {
            break;
        }
    }
    if !t.is_finite() || !r.is_finite() {
        return Err(GpoError::NoIntersection);
    }
    let v0 = gpo.chart_at(0);
    let window_ok = t.abs() <= 1e-2 * v0.p_min() && r.abs() <= 1e-2 * v0.p_min();
    let point = v0.chart.apply([t, r])?;
    Ok(ShadowResult { point, chart_coords: [t, r], vs, vu, residual, window_ok, depth })
}

/// Roof value of the first coding at a pseudo-orbit: the flow increment
/// between the shadowed point and its image under the first holonomy.
pub fn first_roof(sys: &ChartSystem, gpo: &GpoPath, shadowed: &ShadowResult) -> Result<f64, GpoError> {
    let x0 = gpo.chart_at(0).base();
    let (_, r_time) = sys.reference.return_map(sys.flow, x0)?;
    let moved = sys.flow.flow(shadowed.point, r_time);
    let x1 = gpo.chart_at(1).base();
    let disc = sys
        .reference
        .disc_at(x1)
        .expect("chart bases lie on the reference section");
    let t_d = sys.reference.project_t(sys.flow, disc, moved)?;
    let r = r_time - t_d;
    if !(r > 0.0 && r < sys.consts.rho) {
        return Err(GpoError::NotAdmissible("first roof", r, sys.consts.rho));
    }
    Ok(r)
}

/// Cumulative shear of the center lift along the stable curve, truncated at
/// `depth`: Delta_n(t) = sum_k [T_k(G_k y(t)) - T_k(G_k y(0))], evaluated on
/// a sample grid in chart coordinates. Returns the sampled limit and the
/// successive-difference norms (the Cauchy rate data).
pub fn center_lift(
    sys: &ChartSystem,
    gpo: &GpoPath,
    curve: &AdmissibleCurve,
    depth: usize,
    grid: usize,
) -> Result<(Vec<f64>, Vec<f64>), GpoError> {
    let n_grid = grid.max(3);
    // track chart coordinates of curve points and of the center
    let mut pts: Vec<[f64; 2]> = (0..n_grid)
        .map(|i| {
            let t = -curve.p + 2.0 * curve.p * i as f64 / (n_grid - 1) as f64;
            [t, curve.eval(t)]
        })
        .collect();
    let mut center = [0.0f64, curve.eval(0.0)];
    let mut delta = vec![0.0f64; n_grid];
    let mut diffs = Vec::with_capacity(depth);
    for k in 0..depth {
        let v = gpo.chart_at(k as i64);
        let w = gpo.chart_at(k as i64 + 1);
        // time-function differences at the current positions, exactly
        let hol = holonomy_forward(sys.flow, sys.reference, v.base())?;
        let tdiff = |offset: [f64; 2]| -> f64 {
            // T(z) - T(base) depends on the fiber offset only through the
            // roof profile along the crossing branch
            if hol.crossings == 1 {
                let du = v.chart.params.c_matrix.apply(offset);
                roof_diff(sys.flow, v.base().u, du)
            } else {
                0.0
            }
        };
        let mut step = 0.0f64;
        let t_center = tdiff(center);
        for (i, p) in pts.iter().enumerate() {
            let contrib = tdiff(*p) - t_center;
            delta[i] += contrib;
            step = step.max(contrib.abs());
        }
        diffs.push(step);
        // advance all tracked offsets through the exact chart map
        let d = sys.chart_return_map_into(v.base(), &w.chart)?;
        for p in pts.iter_mut() {
            *p = d.eval(*p);
        }
        center = d.eval(center);
    }
    Ok((delta, diffs))
}

/// Exact difference r(u + du) - r(u) of the roof profile, written so that
/// tiny `du` keeps full relative precision.
pub fn roof_diff(flow: &ModelFlow, u: [f64; 2], du: [f64; 2]) -> f64 {
    use std::f64::consts::PI;
    match flow.roof {
        RoofProfile::Const => 0.0,
        RoofProfile::Cos { delta } => {
            // cos(a + h) - cos(a) = -2 sin(a + h/2) sin(h/2)
            let a = 2.0 * PI * u[0];
            let h = 2.0 * PI * du[0];
            -2.0 * delta * (a + h / 2.0).sin() * (h / 2.0).sin()
        }
        RoofProfile::Stretch { .. } => {
            flow.roof.eval([u[0] + du[0], u[1] + du[1]]) - flow.roof.eval(u)
        }
    }
}
