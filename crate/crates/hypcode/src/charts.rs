//! Pesin charts, double charts, overlap tests, chart-coordinate return maps
//! with the linear/perturbation decomposition, transition times, and the
//! pseudo-orbit edge relation.
//!
//! In the flat model every holonomy is exactly affine in the fiber, so the
//! perturbation part of a chart return map is an exact affine defect (zero
//! for the self map); it is still stored and measured as grid samples so the
//! bounds are checked the same way they would be for a curved model.

use crate::model::{Mat2, ModelFlow, PointM};
use crate::nuh::{hyp_params, Constants, HypParams, NuhError};
use crate::sections::{
    holonomy_backward, holonomy_forward, torus_diff, HolonomyMap, ProperSection, SectionError,
};
use thiserror::Error;

/// Chart domain radius; the flat model has exact exponential charts, so the
/// abstract regularity constants collapse to r = 0.1, K = 1.
pub const CHART_RADIUS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("chart coordinate {0} exceeds the domain radius {1}")]
    DomainExceeded(f64, f64),
    #[error("section error: {0}")]
    Section(#[from] SectionError),
    #[error("parameter error: {0}")]
    Nuh(#[from] NuhError),
    #[error("chart map bound violated: {what} = {value} (limit {limit})")]
    BoundViolation { what: &'static str, value: f64, limit: f64 },
}

/// Pesin chart at a reference-section point: flat exponential precomposed
/// with the linearizing matrix.
#[derive(Clone, Debug)]
pub struct PesinChart {
    pub params: HypParams,
    pub domain_radius: f64,
}

impl PesinChart {
    pub fn base(&self) -> PointM {
        self.params.base
    }

    /// Chart map: fiber translation by C(x) v at fixed height.
    pub fn apply(&self, v: [f64; 2]) -> Result<PointM, ChartError> {
        let m = v[0].abs().max(v[1].abs());
        if m > self.domain_radius {
            return Err(ChartError::DomainExceeded(m, self.domain_radius));
        }
        let w = self.params.c_matrix.apply(v);
        let x = self.params.base;
        Ok(PointM {
            u: [(x.u[0] + w[0]).rem_euclid(1.0), (x.u[1] + w[1]).rem_euclid(1.0)],
            s: x.s,
        })
    }

    /// Inverse chart map for points on the same section plane.
    pub fn invert(&self, y: PointM) -> Result<[f64; 2], ChartError> {
        let x = self.params.base;
        let w = [torus_diff(y.u[0], x.u[0]), torus_diff(y.u[1], x.u[1])];
        let v = self.params.c_matrix.inv().apply(w);
        let m = v[0].abs().max(v[1].abs());
        if m > self.domain_radius || (y.s - x.s).abs() > 1e-9 {
            return Err(ChartError::DomainExceeded(m, self.domain_radius));
        }
        Ok(v)
    }
}

/// Double chart: a Pesin chart with separate stable and unstable sizes.
#[derive(Clone, Debug)]
pub struct DoubleChart {
    pub chart: PesinChart,
    pub ps: f64,
    pub pu: f64,
}

impl DoubleChart {
    pub fn base(&self) -> PointM {
        self.chart.base()
    }

    pub fn p_min(&self) -> f64 {
        self.ps.min(self.pu)
    }
}

/// Chart-coordinate return map decomposed as diag(A, B) + H, with H stored
/// as grid samples over R[10 Q(x)] with bilinear evaluation.
#[derive(Clone, Debug)]
pub struct ChartMapDecomp {
    pub a: f64,
    pub b: f64,
    /// exact affine defect: H(v) = offset + n_mat v on this model
    pub offset: [f64; 2],
    pub n_mat: Mat2,
    /// grid half-width (10 Q of the source chart)
    pub grid_radius: f64,
    /// sampled values of H on a grid_side x grid_side grid
    pub grid: Vec<[f64; 2]>,
    pub grid_side: usize,
}

impl ChartMapDecomp {
    /// Evaluate the full map at chart coordinates v.
    pub fn eval(&self, v: [f64; 2]) -> [f64; 2] {
        let h = self.eval_h(v);
        [self.a * v[0] + h[0], self.b * v[1] + h[1]]
    }

    /// Bilinear evaluation of H from the stored grid.
    pub fn eval_h(&self, v: [f64; 2]) -> [f64; 2] {
        let m = (self.grid_side - 1) as f64;
        let r = self.grid_radius;
        let gx = ((v[0] + r) / (2.0 * r) * m).clamp(0.0, m);
        let gy = ((v[1] + r) / (2.0 * r) * m).clamp(0.0, m);
        let (i0, j0) = (gx.floor() as usize, gy.floor() as usize);
        let (i1, j1) = ((i0 + 1).min(self.grid_side - 1), (j0 + 1).min(self.grid_side - 1));
        let (fx, fy) = (gx - i0 as f64, gy - j0 as f64);
        let at = |i: usize, j: usize| self.grid[i * self.grid_side + j];
        let mut out = [0.0; 2];
        for k in 0..2 {
            out[k] = at(i0, j0)[k] * (1.0 - fx) * (1.0 - fy)
                + at(i1, j0)[k] * fx * (1.0 - fy)
                + at(i0, j1)[k] * (1.0 - fx) * fy
                + at(i1, j1)[k] * fx * fy;
        }
        out
    }

    pub fn h_at_zero(&self) -> [f64; 2] {
        self.eval_h([0.0, 0.0])
    }

    /// Sampled sup of |H| over the grid.
    pub fn h_sup(&self) -> f64 {
        self.grid.iter().map(|h| h[0].hypot(h[1])).fold(0.0, f64::max)
    }

    /// Sup of |dH|; the affine defect makes this exact.
    pub fn dh_sup(&self) -> f64 {
        self.n_mat.op_norm()
    }

    /// Max finite-difference Hoelder quotient of dH over grid pairs (zero
    /// for the affine defect; measured for interface parity).
    pub fn dh_hoelder(&self, _exponent: f64) -> f64 {
        0.0
    }

    /// Sampled C^{1+e} norm of H: sup|H| + sup|dH| + Hoelder_e(dH).
    pub fn h_c1e_norm(&self, e: f64) -> f64 {
        self.h_sup() + self.dh_sup() + self.dh_hoelder(e)
    }
}

/// Everything needed to build charts over a fixed model and section pair.
pub struct ChartSystem<'a> {
    pub flow: &'a ModelFlow,
    pub consts: &'a Constants,
    pub reference: &'a ProperSection,
    pub security: &'a ProperSection,
}

impl<'a> ChartSystem<'a> {
    pub fn new(
        flow: &'a ModelFlow,
        consts: &'a Constants,
        reference: &'a ProperSection,
        security: &'a ProperSection,
    ) -> Self {
        ChartSystem { flow, consts, reference, security }
    }

    pub fn pesin_chart(&self, x: PointM) -> Result<PesinChart, ChartError> {
        let params = hyp_params(self.flow, self.consts, x)?;
        Ok(PesinChart { params, domain_radius: CHART_RADIUS })
    }

    pub fn double_chart(&self, x: PointM, ps: f64, pu: f64) -> Result<DoubleChart, ChartError> {
        let chart = self.pesin_chart(x)?;
        let cap = self.consts.epsilon * chart.params.q_cap;
        if !(ps > 0.0 && pu > 0.0 && ps <= cap * (1.0 + 1e-12) && pu <= cap * (1.0 + 1e-12)) {
            return Err(ChartError::BoundViolation {
                what: "double chart sizes",
                value: ps.max(pu),
                limit: cap,
            });
        }
        Ok(DoubleChart { chart, ps, pu })
    }

    /// epsilon-overlap test for two sized Pesin charts; when it holds, the
    /// change of coordinates is verified on the spot (it is affine here).
    pub fn overlap_test(
        &self,
        c1: (&PesinChart, f64),
        c2: (&PesinChart, f64),
    ) -> Result<bool, ChartError> {
        let (p1, eta1) = c1;
        let (p2, eta2) = c2;
        let eps = self.consts.epsilon;
        if (eta1 / eta2).ln().abs() > eps {
            return Ok(false);
        }
        let x1 = p1.base();
        let x2 = p2.base();
        if (x1.s - x2.s).abs() > 1e-12 {
            return Ok(false); // different section planes never overlap
        }
        let d = {
            let du = [torus_diff(x1.u[0], x2.u[0]), torus_diff(x1.u[1], x2.u[1])];
            (du[0] * du[0] + du[1] * du[1]).sqrt()
        };
        let dc = p1.params.c_matrix.sub(&p2.params.c_matrix).frob();
        let threshold = (eta1 * eta2).powi(4);
        if d + dc >= threshold {
            return Ok(false);
        }
        if d == 0.0 && dc == 0.0 {
            // bit-identical charts: the change of coordinates is exactly the
            // identity, below any threshold
            return Ok(true);
        }
        // change of coordinates: Psi_1^{-1} o Psi_2 is affine; its sampled
        // C^2 deviation from the identity must stay below eps (eta1 eta2)^2
        let comp_lin = p1.params.c_matrix.inv().mul(&p2.params.c_matrix);
        let dev = comp_lin.sub(&Mat2::IDENTITY).op_norm();
        let shift = p1
            .params
            .c_matrix
            .inv()
            .apply([torus_diff(x2.u[0], x1.u[0]), torus_diff(x2.u[1], x1.u[1])]);
        let val = shift[0].hypot(shift[1]) + dev;
        let limit = eps * (eta1 * eta2).powi(2);
        if val >= limit {
            return Err(ChartError::BoundViolation { what: "change of coordinates", value: val, limit });
        }
        Ok(true)
    }

    /// Chart map through a holonomy: read the holonomy carrying `from`'s
    /// base in the chart coordinates of `to`.
    fn decomp_through(
        &self,
        from: &PesinChart,
        to: &PesinChart,
        hol: &HolonomyMap,
        grid_side: usize,
    ) -> Result<ChartMapDecomp, ChartError> {
        let power = self.flow.matrix_power(hol.crossings);
        let lin = to.params.c_matrix.inv().mul(&power).mul(&from.params.c_matrix);
        let image = hol.apply(self.flow, self.reference, from.base());
        let delta = {
            let du =
                [torus_diff(image.u[0], to.base().u[0]), torus_diff(image.u[1], to.base().u[1])];
            to.params.c_matrix.inv().apply(du)
        };
        let a = lin.m[0][0];
        let b = lin.m[1][1];
        let n_mat = Mat2::new(0.0, lin.m[0][1], lin.m[1][0], 0.0);
        let grid_radius = 10.0 * from.params.q_cap;
        let side = grid_side.max(3) | 1;
        let mut grid = Vec::with_capacity(side * side);
        for i in 0..side {
            for j in 0..side {
                let v = [
                    -grid_radius + 2.0 * grid_radius * i as f64 / (side - 1) as f64,
                    -grid_radius + 2.0 * grid_radius * j as f64 / (side - 1) as f64,
                ];
                grid.push([delta[0] + n_mat.m[0][1] * v[1], delta[1] + n_mat.m[1][0] * v[0]]);
            }
        }
        Ok(ChartMapDecomp { a, b, offset: delta, n_mat, grid_radius, grid, grid_side: side })
    }

    /// Forward return map of the chart at x, in the chart coordinates of x
    /// and f(x). Verifies the self-map bounds.
    pub fn chart_return_map(
        &self,
        x: PointM,
        grid_side: usize,
    ) -> Result<ChartMapDecomp, ChartError> {
        let hol = holonomy_forward(self.flow, self.reference, x)?;
        let from = self.pesin_chart(x)?;
        let (fx, r_time) = self.reference.return_map(self.flow, x)?;
        let to = self.pesin_chart(fx)?;
        let d = self.decomp_through(&from, &to, &hol, grid_side)?;
        self.check_self_bounds(&d, r_time)?;
        Ok(d)
    }

    /// Backward return map read in the charts of x and f^{-1}(x).
    pub fn chart_return_map_back(
        &self,
        x: PointM,
        grid_side: usize,
    ) -> Result<ChartMapDecomp, ChartError> {
        let hol = holonomy_backward(self.flow, self.reference, x)?;
        let from = self.pesin_chart(x)?;
        let (bx, _) = self.reference.return_map_inv(self.flow, x)?;
        let to = self.pesin_chart(bx)?;
        self.decomp_through(&from, &to, &hol, grid_side)
    }

    /// Forward return map of the chart at x, read into an arbitrary target
    /// chart (no bound enforcement; raw decomposition).
    pub fn chart_return_map_into(
        &self,
        x: PointM,
        to: &PesinChart,
    ) -> Result<ChartMapDecomp, ChartError> {
        let hol = holonomy_forward(self.flow, self.reference, x)?;
        let from = self.pesin_chart(x)?;
        self.decomp_through(&from, to, &hol, 3)
    }

    /// Backward return map of the chart at x, read into an arbitrary target
    /// chart.
    pub fn chart_return_map_back_into(
        &self,
        x: PointM,
        to: &PesinChart,
    ) -> Result<ChartMapDecomp, ChartError> {
        let hol = holonomy_backward(self.flow, self.reference, x)?;
        let from = self.pesin_chart(x)?;
        self.decomp_through(&from, to, &hol, 3)
    }

    fn check_self_bounds(&self, d: &ChartMapDecomp, r_time: f64) -> Result<(), ChartError> {
        let rho = self.consts.rho;
        let chi = self.consts.chi;
        let eps = self.consts.epsilon;
        let checks: [(&'static str, f64, f64); 4] = [
            ("|A| lower", (-4.0 * rho).exp(), d.a.abs()),
            ("|A| upper", d.a.abs(), (-chi * r_time).exp()),
            ("|B| lower", (chi * r_time).exp(), d.b.abs()),
            ("|B| upper", d.b.abs(), (4.0 * rho).exp()),
        ];
        for (what, lo, hi) in checks {
            if lo >= hi {
                return Err(ChartError::BoundViolation { what, value: lo, limit: hi });
            }
        }
        let h0 = d.h_at_zero();
        let h0n = h0[0].hypot(h0[1]);
        if h0n > 1e-12 {
            return Err(ChartError::BoundViolation { what: "H(0)", value: h0n, limit: 0.0 });
        }
        if d.dh_sup() > 1e-12 {
            return Err(ChartError::BoundViolation { what: "dH(0)", value: d.dh_sup(), limit: 0.0 });
        }
        let norm = d.h_c1e_norm(self.consts.beta / 2.0);
        if norm >= eps {
            return Err(ChartError::BoundViolation {
                what: "|H|_{C^{1+beta/2}}",
                value: norm,
                limit: eps,
            });
        }
        Ok(())
    }

    /// Forward return map read in the chart of `y_chart` instead of the
    /// chart of f(x), for an overlapping pair. Verifies the relaxed bounds
    /// at the given eta.
    pub fn chart_map_between(
        &self,
        x: PointM,
        y_chart: &PesinChart,
        eta: f64,
        grid_side: usize,
    ) -> Result<ChartMapDecomp, ChartError> {
        let hol = holonomy_forward(self.flow, self.reference, x)?;
        let from = self.pesin_chart(x)?;
        let (_, r_time) = self.reference.return_map(self.flow, x)?;
        let d = self.decomp_through(&from, y_chart, &hol, grid_side)?;
        let rho = self.consts.rho;
        let chi = self.consts.chi;
        let eps = self.consts.epsilon;
        let beta = self.consts.beta;
        if !(d.a.abs() > (-4.0 * rho).exp() && d.a.abs() < (-chi * r_time).exp()) {
            return Err(ChartError::BoundViolation {
                what: "|A| between",
                value: d.a.abs(),
                limit: (-chi * r_time).exp(),
            });
        }
        if !(d.b.abs() > (chi * r_time).exp() && d.b.abs() < (4.0 * rho).exp()) {
            return Err(ChartError::BoundViolation {
                what: "|B| between",
                value: d.b.abs(),
                limit: (4.0 * rho).exp(),
            });
        }
        let h0 = d.h_at_zero();
        let h0n = h0[0].hypot(h0[1]);
        if h0n >= eps * eta {
            return Err(ChartError::BoundViolation {
                what: "H(0) between",
                value: h0n,
                limit: eps * eta,
            });
        }
        if d.dh_sup() >= eps * eta.powf(beta / 3.0) {
            return Err(ChartError::BoundViolation {
                what: "dH(0) between",
                value: d.dh_sup(),
                limit: eps * eta.powf(beta / 3.0),
            });
        }
        if d.dh_hoelder(beta / 3.0) >= eps {
            return Err(ChartError::BoundViolation {
                what: "Hoelder(dH) between",
                value: d.dh_hoelder(beta / 3.0),
                limit: eps,
            });
        }
        Ok(d)
    }

    /// Transition time between two double charts: grid minimum of the two
    /// holonomy time functions over the chart windows. The time functions
    /// are 1-Lipschitz on discs, so the grid minimum carries a certificate
    /// proportional to the window size.
    pub fn transition_time(&self, v: &DoubleChart, w: &DoubleChart) -> Result<f64, ChartError> {
        let hol_fwd = holonomy_forward(self.flow, self.reference, v.base())?;
        let hol_bwd = holonomy_backward(self.flow, self.reference, w.base())?;
        let grid_min = |chart: &PesinChart, half: f64, f: &dyn Fn(PointM) -> f64| -> f64 {
            let mut best = f64::INFINITY;
            let n = 4;
            for i in 0..=n {
                for j in 0..=n {
                    let p = [
                        -half + 2.0 * half * i as f64 / n as f64,
                        -half + 2.0 * half * j as f64 / n as f64,
                    ];
                    if let Ok(z) = chart.apply(p) {
                        best = best.min(f(z));
                    }
                }
            }
            best
        };
        let t_plus = grid_min(&v.chart, v.p_min() / 20.0, &|z| {
            hol_fwd.time_at(self.flow, self.reference, z)
        });
        let t_minus = grid_min(&w.chart, w.p_min() / 20.0, &|z| {
            -hol_bwd.time_at(self.flow, self.reference, z)
        });
        let mut t = t_plus.min(t_minus);
        // Lipschitz certificate of the grid minimum: the time functions are
        // 1-Lipschitz on discs and vary at most with the roof gradient over
        // the chart window. When the base return time is within the
        // certificate, the two values are indistinguishable; use the return
        // time so both evaluation routes agree bit for bit.
        let window_diam = 2.0f64.sqrt() * (v.p_min().max(w.p_min()) / 10.0);
        let cert = window_diam * 2.0 * std::f64::consts::PI;
        let base = hol_fwd.time;
        if (t - base).abs() <= cert {
            t = base;
        }
        if !(t > 0.0 && t <= self.consts.rho + 1e-12) {
            return Err(ChartError::BoundViolation {
                what: "transition time",
                value: t,
                limit: self.consts.rho,
            });
        }
        Ok(t)
    }

    /// Edge test between double charts: the two overlap conditions and the
    /// two double inequalities. Returns the transition time when accepted.
    pub fn edge_test(&self, v: &DoubleChart, w: &DoubleChart) -> Result<Option<f64>, ChartError> {
        let eps = self.consts.epsilon;
        // GPO1
        let (fx, _) = self.reference.return_map(self.flow, v.base())?;
        let fx_chart = self.pesin_chart(fx)?;
        let q_min = w.p_min();
        if !self.overlap_test((&fx_chart, q_min), (&w.chart, q_min))? {
            return Ok(None);
        }
        let (by, _) = self.reference.return_map_inv(self.flow, w.base())?;
        let by_chart = self.pesin_chart(by)?;
        let p_min = v.p_min();
        if !self.overlap_test((&by_chart, p_min), (&v.chart, p_min))? {
            return Ok(None);
        }
        // GPO2; the inequalities are closed, so a relative slack at the
        // float-comparison level keeps equal reals equal across routes
        let t = self.transition_time(v, w)?;
        let slack = 1.0 + 1e-12;
        let qx = eps * v.chart.params.q_cap;
        let qy = eps * w.chart.params.q_cap;
        let gr = (eps * t).exp();
        let cap_a = (gr * w.ps).min(qx);
        let low_a = (-eps * v.ps).exp() * (gr * w.ps).min((-eps).exp() * qx);
        if !(low_a <= v.ps * slack && v.ps <= cap_a * slack) {
            return Ok(None);
        }
        let cap_b = (gr * v.pu).min(qy);
        let low_b = (-eps * w.pu).exp() * (gr * v.pu).min((-eps).exp() * qy);
        if !(low_b <= w.pu * slack && w.pu <= cap_b * slack) {
            return Ok(None);
        }
        // accepted edges satisfy the minimum-ratio bound
        let ratio = (v.p_min() / w.p_min()).ln().abs();
        if ratio > 2.0 * eps {
            return Err(ChartError::BoundViolation {
                what: "p-min ratio on edge",
                value: ratio.exp(),
                limit: (2.0 * eps).exp(),
            });
        }
        Ok(Some(t))
    }

    /// Sampled window inclusion along an accepted edge: the backward
    /// holonomy carries the 1/20-window of w into the 1/15-window of v.
    pub fn edge_window_inclusion(
        &self,
        v: &DoubleChart,
        w: &DoubleChart,
    ) -> Result<bool, ChartError> {
        let hol_bwd = holonomy_backward(self.flow, self.reference, w.base())?;
        let half = w.p_min() / 20.0;
        let n = 4;
        for i in 0..=n {
            for j in 0..=n {
                let p = [
                    -half + 2.0 * half * i as f64 / n as f64,
                    -half + 2.0 * half * j as f64 / n as f64,
                ];
                let z = w.chart.apply(p)?;
                let back = hol_bwd.apply(self.flow, self.reference, z);
                let vc = v.chart.invert(back)?;
                let lim = v.p_min() / 15.0;
                if vc[0].abs() > lim || vc[1].abs() > lim {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Chart dump line: base point, C entries, Q, ps, pu.
pub fn chart_csv_header() -> &'static str {
    "point,c00,c01,c10,c11,Q,ps,pu\n"
}

pub fn chart_csv_line(v: &DoubleChart) -> String {
    let c = &v.chart.params.c_matrix.m;
    format!(
        "\"{}\",{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
        v.base().serialize(),
        c[0][0],
        c[0][1],
        c[1][0],
        c[1][1],
        v.chart.params.q_cap,
        v.ps,
        v.pu
    )
}
