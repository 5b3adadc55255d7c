//! Quantification of hyperbolicity along model orbits: the stable/unstable
//! weights s(x), u(x), the linearizing matrix C(x), the chart-size parameter
//! Q(x), the orbit quantifiers q, q^s, q^u, and their Z-indexed versions
//! p^s, p^u with the greedy recursion.
//!
//! All integrands are piecewise exponentials between roof crossings, so the
//! quadrature runs on crossing-aligned panels with an analytic geometric
//! tail bound.

use crate::model::{Mat2, ModelFlow, PointM};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NuhError {
    #[error("integral diverges: chi = {chi} is not below the decay rate {rate}")]
    DivergentIntegral { chi: f64, rate: f64 },
    #[error("off-diagonal residual {0} exceeds tolerance in the reduced cocycle")]
    DiagonalizationResidual(f64),
    #[error("horizon {horizon} too short; required at least {required}")]
    HorizonTooShort { horizon: f64, required: f64 },
    #[error("time spacing {0} outside [{1}, {2}]")]
    SpacingViolation(f64, f64, f64),
}

/// Global small constants of the construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub chi: f64,
    pub beta: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Constants {
    pub fn defaults() -> Constants {
        Constants { chi: 0.5, beta: 1.0, rho: 0.2, epsilon: 0.02 }
    }

    /// 250 rho / beta, the Q-ratio exponent over short times.
    pub fn q_ratio_exponent(&self) -> f64 {
        250.0 * self.rho / self.beta
    }

    /// eps rho + 250 rho / beta, the robustness exponent.
    pub fn h_frak(&self) -> f64 {
        self.epsilon * self.rho + self.q_ratio_exponent()
    }

    /// Q(x) from the Frobenius norm of C(x)^{-1}.
    pub fn q_of(&self, c_inv_frob: f64) -> f64 {
        self.epsilon.powf(3.0 / self.beta) * c_inv_frob.powf(-12.0 / self.beta)
    }
}

/// Hyperbolicity package at a point.
#[derive(Clone, Debug)]
pub struct HypParams {
    pub base: PointM,
    pub n_s: [f64; 2],
    pub n_u: [f64; 2],
    pub s_val: f64,
    pub u_val: f64,
    pub alpha: f64,
    pub c_matrix: Mat2,
    pub c_inv_frob: f64,
    pub q_cap: f64,
}

/// Orbit quantifiers at a point, with the truncation horizon used and the
/// grid certificate slack.
#[derive(Clone, Copy, Debug)]
pub struct LocalQ {
    pub q: f64,
    pub q_s: f64,
    pub q_u: f64,
    pub horizon: f64,
    /// certified upper bound on how much a finer grid could lower the inf
    pub grid_slack: f64,
}

/// Z-indexed stable/unstable sizes over a time ladder.
#[derive(Clone, Debug)]
pub struct ZIndexedP {
    pub times: Vec<f64>,
    pub ps: Vec<f64>,
    pub pu: Vec<f64>,
}

/// Forward crossing times of the orbit of `x` up to `horizon`.
fn crossings_forward(flow: &ModelFlow, x: PointM, horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut u = x.u;
    let mut t = flow.roof_at(u) - x.s;
    while t <= horizon {
        out.push(t);
        u = flow.apply_matrix(u);
        t += flow.roof_at(u);
    }
    out
}

/// Backward crossing times (as positive numbers) up to `horizon`.
fn crossings_backward(flow: &ModelFlow, x: PointM, horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut u = x.u;
    let mut t = x.s;
    while t <= horizon {
        out.push(t);
        u = flow.apply_matrix_inv(u);
        t += flow.roof_at(u);
    }
    out
}

/// Gauss-Legendre nodes and weights on [-1, 1], 8 points.
const GL8: [(f64, f64); 8] = [
    (-0.9602898564975363, 0.10122853629037626),
    (-0.7966664774136267, 0.22238103445337448),
    (-0.5255324099163290, 0.31370664587788727),
    (-0.1834346424956498, 0.36268378337836200),
    (0.1834346424956498, 0.36268378337836200),
    (0.5255324099163290, 0.31370664587788727),
    (0.7966664774136267, 0.22238103445337448),
    (0.9602898564975363, 0.10122853629037626),
];

fn gl_panel(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    GL8.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Memo cache for the s/u integrals; the pipeline evaluates them at the
/// same orbit points over and over. Keyed by the point and every constant
/// the value depends on.
fn su_cache() -> &'static std::sync::Mutex<std::collections::HashMap<[u64; 7], (f64, f64)>> {
    static CACHE: std::sync::OnceLock<
        std::sync::Mutex<std::collections::HashMap<[u64; 7], (f64, f64)>>,
    > = std::sync::OnceLock::new();
    CACHE.get_or_init(|| std::sync::Mutex::new(std::collections::HashMap::new()))
}

/// s(x) and u(x): weighted L2 norms of the induced flow along the stable and
/// unstable directions, by crossing-aligned panel quadrature with an
/// analytic geometric tail. Certified relative error below 1e-8. Memoized.
pub fn compute_su(flow: &ModelFlow, consts: &Constants, x: PointM) -> Result<(f64, f64), NuhError> {
    let key = [
        x.u[0].to_bits(),
        x.u[1].to_bits(),
        x.s.to_bits(),
        consts.chi.to_bits(),
        consts.rho.to_bits(),
        flow.lambda.to_bits(),
        (flow.roof.max() - flow.roof.min()).to_bits(),
    ];
    if let Some(&v) = su_cache().lock().unwrap().get(&key) {
        return Ok(v);
    }
    let v = compute_su_uncached(flow, consts, x)?;
    let mut cache = su_cache().lock().unwrap();
    if cache.len() > 4_000_000 {
        cache.clear();
    }
    cache.insert(key, v);
    Ok(v)
}

fn compute_su_uncached(flow: &ModelFlow, consts: &Constants, x: PointM) -> Result<(f64, f64), NuhError> {
    let chi = consts.chi;
    let rate = flow.log_lambda / flow.roof.max();
    if chi >= rate {
        return Err(NuhError::DivergentIntegral { chi, rate });
    }
    let lam2 = flow.lambda * flow.lambda;
    let gamma = (2.0 * chi * flow.roof.max()).exp() / lam2;
    debug_assert!(gamma < 1.0);

    let integral_and_tail = |crossing_times: &[f64]| -> (f64, f64) {
        // integrand e^{2 chi t} lambda^{-2 k(t)}, k = panel index
        let mut total = 0.0;
        let mut prev = 0.0;
        let mut weight: f64 = 1.0;
        for &tc in crossing_times {
            total += weight * gl_panel(|t| (2.0 * chi * t).exp(), prev, tc);
            prev = tc;
            weight /= lam2;
        }
        let tail = weight * (2.0 * chi * prev).exp() * flow.roof.max() / (1.0 - gamma);
        (total, tail)
    };

    // grow the horizon until the analytic tail is negligible
    let mut horizon = 24.0;
    loop {
        let fc = crossings_forward(flow, x, horizon);
        let bc = crossings_backward(flow, x, horizon);
        let (i_s, tail_s) = integral_and_tail(&fc);
        let (i_u, tail_u) = integral_and_tail(&bc);
        if tail_s <= 1e-9 * i_s && tail_u <= 1e-9 * i_u {
            let pref = 2.0 * (2.0 * consts.rho).exp();
            return Ok((pref * i_s.sqrt(), pref * i_u.sqrt()));
        }
        horizon *= 2.0;
        if horizon > 4096.0 {
            return Err(NuhError::DivergentIntegral { chi, rate });
        }
    }
}

/// Closed-form value of the s/u integrals for the constant-roof model at
/// height h (the geometric-series oracle):
/// I(d) = (e^{2 chi d} - 1)/(2 chi) + e^{2 chi d} lambda^{-2} I(1) with
/// d = 1 - h for s and d = h for u, and I(1) summed in closed form.
pub fn closed_form_su_const_roof(flow: &ModelFlow, consts: &Constants, height: f64) -> (f64, f64) {
    let two_chi = 2.0 * consts.chi;
    let lam2 = flow.lambda * flow.lambda;
    let i_unit = (two_chi.exp() - 1.0) / two_chi / (1.0 - two_chi.exp() / lam2);
    let seg = |d: f64| ((two_chi * d).exp() - 1.0) / two_chi + (two_chi * d).exp() / lam2 * i_unit;
    let pref = 2.0 * (2.0 * consts.rho).exp();
    (pref * seg(1.0 - height).sqrt(), pref * seg(height).sqrt())
}

/// Full hyperbolicity package at a point.
pub fn hyp_params(flow: &ModelFlow, consts: &Constants, x: PointM) -> Result<HypParams, NuhError> {
    let (n_s, n_u) = flow
        .splitting_directions(x)
        .expect("model flow is hyperbolic by construction");
    let (s_val, u_val) = compute_su(flow, consts, x)?;
    let alpha = flow.splitting_angle();
    let c_matrix =
        Mat2::from_cols([n_s[0] / s_val, n_s[1] / s_val], [n_u[0] / u_val, n_u[1] / u_val]);
    let c_inv_frob = (s_val * s_val + u_val * u_val).sqrt() / flow.sin_alpha();
    let q_cap = consts.q_of(c_inv_frob);
    Ok(HypParams { base: x, n_s, n_u, s_val, u_val, alpha, c_matrix, c_inv_frob, q_cap })
}

/// Q(x) alone (used in hot paths).
pub fn q_at(flow: &ModelFlow, consts: &Constants, x: PointM) -> Result<f64, NuhError> {
    let (s_val, u_val) = compute_su(flow, consts, x)?;
    let c_inv_frob = (s_val * s_val + u_val * u_val).sqrt() / flow.sin_alpha();
    Ok(consts.q_of(c_inv_frob))
}

/// Diagonal entries of C(phi^t x)^{-1} Phi^t C(x); errors when the
/// off-diagonal residual exceeds 1e-8.
pub fn oseledets_pesin_reduce(
    flow: &ModelFlow,
    consts: &Constants,
    x: PointM,
    t: f64,
) -> Result<(f64, f64), NuhError> {
    let hx = hyp_params(flow, consts, x)?;
    let hy = hyp_params(flow, consts, flow.flow(x, t))?;
    let phi = flow.induced_phi(x, t);
    let d = hy.c_matrix.inv().mul(&phi).mul(&hx.c_matrix);
    let off = d.m[0][1].abs().max(d.m[1][0].abs());
    let scale = d.m[0][0].abs().max(d.m[1][1].abs()).max(1.0);
    if off > 1e-8 * scale {
        return Err(NuhError::DiagonalizationResidual(off));
    }
    Ok((d.m[0][0], d.m[1][1]))
}

/// Analytic lower bound for Q over the whole manifold.
pub fn q_floor(flow: &ModelFlow, consts: &Constants) -> f64 {
    let two_chi = 2.0 * consts.chi;
    let rmax = flow.roof.max();
    let gamma = (two_chi * rmax).exp() / (flow.lambda * flow.lambda);
    // I <= sum over panels of e^{2 chi t_{j+1}} lambda^{-2j} r_max
    let i_max = (two_chi * rmax).exp() * rmax / (1.0 - gamma);
    let pref = 2.0 * (2.0 * consts.rho).exp();
    let su_max = pref * i_max.sqrt();
    let c_inv_max = (2.0 * su_max * su_max).sqrt() / flow.sin_alpha();
    consts.q_of(c_inv_max)
}

/// q(x), q^s(x), q^u(x) by grid evaluation on crossing-aligned panels with a
/// finite-difference Lipschitz certificate, truncated at `horizon` with an
/// exactness check against the global Q floor.
pub fn compute_q(
    flow: &ModelFlow,
    consts: &Constants,
    x: PointM,
    horizon: f64,
    per_panel: usize,
) -> Result<LocalQ, NuhError> {
    let eps = consts.epsilon;
    let eval = |t: f64| -> Result<f64, NuhError> {
        Ok((eps * t.abs()).exp() * q_at(flow, consts, flow.flow(x, t))?)
    };
    let scan = |sign: f64| -> Result<(f64, f64), NuhError> {
        let crossings = if sign > 0.0 {
            crossings_forward(flow, x, horizon)
        } else {
            crossings_backward(flow, x, horizon)
        };
        let mut knots = vec![0.0];
        knots.extend(crossings.iter().copied());
        knots.push(horizon);
        knots.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let mut best = f64::INFINITY;
        let mut max_step = 0.0f64;
        let mut max_rate = 0.0f64;
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let n = per_panel.max(2);
            let mut prev: Option<(f64, f64)> = None;
            for i in 0..=n {
                let t = a + (b - a) * i as f64 / n as f64;
                let v = eval(sign * t)?;
                best = best.min(v);
                if let Some((tp, vp)) = prev {
                    let dt = t - tp;
                    if dt > 1e-14 {
                        max_step = max_step.max(dt);
                        max_rate = max_rate.max(((v.ln() - vp.ln()) / dt).abs());
                    }
                }
                prev = Some((t, v));
            }
        }
        // within-panel variation bound: rate * step, as the certificate
        let slack = best * (max_rate * max_step).min(0.5);
        Ok((best, slack))
    };
    let (inf_s, slack_s) = scan(1.0)?;
    let (inf_u, slack_u) = scan(-1.0)?;
    let q_s = eps * inf_s;
    let q_u = eps * inf_u;
    // beyond-horizon certificate: e^{eps t} Q >= e^{eps horizon} Q_floor
    let floor = (eps * horizon).exp() * q_floor(flow, consts);
    let best = inf_s.min(inf_u);
    if floor < best {
        let required = (best / q_floor(flow, consts)).ln() / eps;
        return Err(NuhError::HorizonTooShort { horizon, required });
    }
    Ok(LocalQ { q: q_s.min(q_u), q_s, q_u, horizon, grid_slack: eps * slack_s.max(slack_u) })
}

/// Greedy recursion for the Z-indexed parameters over a ladder of times.
///
/// `times` must be increasing with spacing inside the given bounds;
/// `q_caps[i]` is eps Q at the i-th ladder point. Seeding the recursion at
/// the far end with the cap reproduces the truncated infimum definition
/// exactly (same floating values): multiplication by a positive constant
/// distributes over min under monotone rounding, and the product nesting is
/// identical.
pub fn z_indexed_p(
    times: &[f64],
    q_caps: &[f64],
    consts: &Constants,
    spacing_bounds: (f64, f64),
) -> Result<ZIndexedP, NuhError> {
    assert_eq!(times.len(), q_caps.len());
    let eps = consts.epsilon;
    let n = times.len();
    for w in times.windows(2) {
        let dt = w[1] - w[0];
        if dt < spacing_bounds.0 - 1e-12 || dt > spacing_bounds.1 + 1e-12 {
            return Err(NuhError::SpacingViolation(dt, spacing_bounds.0, spacing_bounds.1));
        }
    }
    let mut ps = vec![0.0; n];
    let mut pu = vec![0.0; n];
    ps[n - 1] = q_caps[n - 1];
    for i in (0..n - 1).rev() {
        let grow = (eps * (times[i + 1] - times[i])).exp();
        ps[i] = (grow * ps[i + 1]).min(q_caps[i]);
    }
    pu[0] = q_caps[0];
    for i in 1..n {
        let grow = (eps * (times[i] - times[i - 1])).exp();
        pu[i] = (grow * pu[i - 1]).min(q_caps[i]);
    }
    Ok(ZIndexedP { times: times.to_vec(), ps, pu })
}

/// Number of ladder indices after which the cap certainly re-enters the
/// recursion, from the global Q spread and the minimal spacing.
pub fn cap_window(q_max: f64, q_min: f64, consts: &Constants, min_spacing: f64) -> usize {
    ((q_max / q_min).ln() / (consts.epsilon * min_spacing)).ceil() as usize + 1
}

pub fn params_csv_header() -> &'static str {
    "point,s,u,alpha,Q,q,qs,qu,horizon\n"
}

pub fn params_csv_line(h: &HypParams, lq: &LocalQ) -> String {
    format!(
        "\"{}\",{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
        h.base.serialize(),
        h.s_val,
        h.u_val,
        h.alpha,
        h.q_cap,
        lq.q,
        lq.q_s,
        lq.q_u,
        lq.horizon
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RoofProfile;
    use approx::assert_relative_eq;

    fn consts() -> Constants {
        Constants::defaults()
    }

    #[test]
    fn su_matches_closed_form_on_constant_roof() {
        let flow = ModelFlow::cat(RoofProfile::Const);
        let c = consts();
        for k in 0..6 {
            let h = k as f64 / 6.0;
            let x = flow.point([0.37, 0.21], h);
            let (s, u) = compute_su(&flow, &c, x).unwrap();
            let (s_o, u_o) = closed_form_su_const_roof(&flow, &c, h);
            assert_relative_eq!(s, s_o, max_relative = 1e-8);
            assert_relative_eq!(u, u_o, max_relative = 1e-8);
            assert!(s >= std::f64::consts::SQRT_2);
            assert!(u >= std::f64::consts::SQRT_2);
        }
    }

    #[test]
    fn su_diverges_past_expansion_rate() {
        let flow = ModelFlow::cat(RoofProfile::Const);
        let mut c = consts();
        c.chi = flow.log_lambda + 0.1;
        let x = flow.point([0.1, 0.1], 0.0);
        assert!(matches!(compute_su(&flow, &c, x), Err(NuhError::DivergentIntegral { .. })));
    }

    #[test]
    fn c_matrix_norms() {
        for roof in [RoofProfile::Const, RoofProfile::Cos { delta: 0.1 }] {
            let flow = ModelFlow::cat(roof);
            let c = consts();
            let x = flow.point([0.3, 0.8], 0.11);
            let h = hyp_params(&flow, &c, x).unwrap();
            assert!(h.c_matrix.frob() <= 1.0 + 1e-12);
            assert!(h.c_matrix.op_norm() <= h.c_matrix.frob() + 1e-15);
            // Frobenius identity for the inverse
            assert_relative_eq!(h.c_matrix.inv().frob(), h.c_inv_frob, max_relative = 1e-10);
            // Q invariant
            assert_relative_eq!(h.q_cap, c.q_of(h.c_inv_frob), max_relative = 1e-14);
            assert!(h.q_cap <= c.epsilon.powf(3.0 / c.beta));
        }
    }

    #[test]
    fn reduction_is_diagonal_with_bounds() {
        // e^{-4 rho} < |A_t| < e^{-chi t} and e^{chi t} < |B_t| < e^{4 rho}
        // for 0 < t <= 2 rho, plus the short-time ratio bounds on s, u and
        // the inverse norm.
        let c = consts();
        for roof in [RoofProfile::Const, RoofProfile::Cos { delta: 0.1 }] {
            let flow = ModelFlow::cat(roof);
            let mut seed = 0xABCDEF12345u64;
            let mut rnd = move || {
                seed ^= seed << 13;
                seed ^= seed >> 7;
                seed ^= seed << 17;
                (seed >> 11) as f64 / (1u64 << 53) as f64
            };
            for _ in 0..50 {
                let x = flow.point([rnd(), rnd()], rnd() * 0.8);
                let t = 1e-3 + rnd() * (2.0 * c.rho - 1e-3);
                let (a, b) = oseledets_pesin_reduce(&flow, &c, x, t).unwrap();
                assert!(a.abs() > (-4.0 * c.rho).exp(), "|A_t| = {}", a.abs());
                assert!(a.abs() < (-c.chi * t).exp(), "|A_t| = {} at t = {}", a.abs(), t);
                assert!(b.abs() > (c.chi * t).exp());
                assert!(b.abs() < (4.0 * c.rho).exp());
                // the model preserves orientation
                assert!(a * b > 0.0);
                let hx = hyp_params(&flow, &c, x).unwrap();
                let hy = hyp_params(&flow, &c, flow.flow(x, t)).unwrap();
                assert!((hy.s_val / hx.s_val).ln().abs() <= 10.0 * c.rho);
                assert!((hy.u_val / hx.u_val).ln().abs() <= 10.0 * c.rho);
                assert!((hy.c_inv_frob / hx.c_inv_frob).ln().abs() <= 18.0 * c.rho);
            }
        }
    }

    #[test]
    fn reduction_identity_at_zero() {
        let flow = ModelFlow::cat(RoofProfile::Const);
        let c = consts();
        let x = flow.point([0.3, 0.8], 0.11);
        let (a, b) = oseledets_pesin_reduce(&flow, &c, x, 0.0).unwrap();
        assert_relative_eq!(a, 1.0, max_relative = 1e-9);
        assert_relative_eq!(b, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn q_ratio_bound_along_flow() {
        let c = consts();
        let flow = ModelFlow::cat(RoofProfile::Cos { delta: 0.1 });
        let x = flow.point([0.13, 0.57], 0.02);
        let q0 = q_at(&flow, &c, x).unwrap();
        for i in 1..=8 {
            let t = i as f64 * (2.0 * c.rho) / 8.0;
            let qt = q_at(&flow, &c, flow.flow(x, t)).unwrap();
            let lograt = (qt / q0).ln().abs();
            assert!(lograt <= c.q_ratio_exponent());
            // the bound above is vacuously wide at desk constants; pin the
            // observed swing too so regressions surface
            assert!(lograt <= 3.0, "observed Q swing too large: {}", lograt);
        }
    }

    #[test]
    fn q_inf_certificates() {
        let c = consts();
        let flow = ModelFlow::cat(RoofProfile::Cos { delta: 0.1 });
        let x = flow.point([0.13, 0.57], 0.02);
        match compute_q(&flow, &c, x, 2.0, 6) {
            Err(NuhError::HorizonTooShort { required, .. }) => {
                assert!(required > 2.0);
                let lq = compute_q(&flow, &c, x, required * 1.05, 6).unwrap();
                assert!(lq.q > 0.0 && lq.q <= c.epsilon * q_at(&flow, &c, x).unwrap());
                assert_eq!(lq.q, lq.q_s.min(lq.q_u));
            }
            Ok(lq) => assert!(lq.q > 0.0),
            Err(e) => panic!("unexpected {:?}", e),
        }
    }

    #[test]
    fn q_truncated_inf_matches_brute_force() {
        let c = consts();
        let flow = ModelFlow::cat(RoofProfile::Cos { delta: 0.1 });
        let x = flow.point([0.41, 0.29], 0.07);
        let req = match compute_q(&flow, &c, x, 4.0, 8) {
            Err(NuhError::HorizonTooShort { required, .. }) => required * 1.05,
            _ => 4.0,
        };
        let lq = compute_q(&flow, &c, x, req, 8).unwrap();
        // dense brute force over double the horizon
        let mut brute = f64::INFINITY;
        let n = 3000;
        for i in 0..=n {
            let t = 4.0 * req * i as f64 / n as f64 - 2.0 * req;
            let v = (c.epsilon * t.abs()).exp() * q_at(&flow, &c, flow.flow(x, t)).unwrap();
            brute = brute.min(c.epsilon * v);
        }
        assert!(
            (lq.q - brute).abs() <= lq.grid_slack.max(1e-10 * brute),
            "q = {}, brute = {}, slack = {}",
            lq.q,
            brute,
            lq.grid_slack
        );
    }

    #[test]
    fn q_lemma_ratio() {
        // q(phi^t x) = e^{± eps |t|} q(x) on samples
        let c = consts();
        let flow = ModelFlow::cat(RoofProfile::Cos { delta: 0.1 });
        let x = flow.point([0.41, 0.29], 0.07);
        let lq0 = match compute_q(&flow, &c, x, 60.0, 6) {
            Err(NuhError::HorizonTooShort { required, .. }) => {
                compute_q(&flow, &c, x, required * 1.05, 6).unwrap()
            }
            Ok(lq) => lq,
            Err(e) => panic!("{e:?}"),
        };
        for t in [0.3, 1.0, 2.5] {
            let y = flow.flow(x, t);
            let lqt = compute_q(&flow, &c, y, lq0.horizon + t, 6).unwrap();
            let lograt = (lqt.q / lq0.q).ln().abs();
            let tol = (lq0.grid_slack / lq0.q + lqt.grid_slack / lqt.q).max(1e-12);
            assert!(
                lograt <= c.epsilon * t + tol,
                "t = {}: |log ratio| = {} vs eps t = {}",
                t,
                lograt,
                c.epsilon * t
            );
        }
    }

    #[test]
    fn greedy_recursion_matches_truncated_inf() {
        // the recursion must reproduce the brute-force truncated infimum
        // exactly, same floating values
        let c = consts();
        let flow = ModelFlow::cat(RoofProfile::Cos { delta: 0.1 });
        let x = flow.point([0.318, 0.774], 0.03);
        let mut times = vec![0.0];
        let mut caps = vec![c.epsilon * q_at(&flow, &c, x).unwrap()];
        let mut t = 0.0;
        for _ in 0..160 {
            t += 0.13;
            times.push(t);
            caps.push(c.epsilon * q_at(&flow, &c, flow.flow(x, t)).unwrap());
        }
        let zp = z_indexed_p(&times, &caps, &c, (0.01, 0.4)).unwrap();
        let n = times.len();
        for i in (0..n).step_by(13) {
            let mut best = f64::INFINITY;
            for m in i..n {
                let mut acc = caps[m];
                for k in (i..m).rev() {
                    acc = (c.epsilon * (times[k + 1] - times[k])).exp() * acc;
                }
                best = best.min(acc);
            }
            assert_eq!(zp.ps[i], best, "ps mismatch at {}", i);
        }
        // monotonicity: ps_n >= e^{-eps (t_n - t_m)} ps_m for n >= m
        for m in (0..n).step_by(17) {
            for nn in m..n {
                assert!(
                    zp.ps[nn] >= (-c.epsilon * (times[nn] - times[m])).exp() * zp.ps[m] * (1.0 - 1e-14)
                );
            }
        }
        // caps respected; at least one capped index per cap window
        let qmax = caps.iter().cloned().fold(0.0, f64::max);
        let qmin = caps.iter().cloned().fold(f64::INFINITY, f64::min);
        let win = cap_window(qmax, qmin, &c, 0.13);
        let capped: Vec<usize> = (0..n).filter(|&i| zp.ps[i] == caps[i]).collect();
        assert!(!capped.is_empty());
        for w in capped.windows(2) {
            assert!(w[1] - w[0] <= win, "cap gap {} exceeds window {}", w[1] - w[0], win);
        }
        for i in 0..n {
            assert!(zp.ps[i] <= caps[i] && zp.pu[i] <= caps[i]);
        }
    }

    #[test]
    fn spacing_violation_detected() {
        let c = consts();
        let times = vec![0.0, 0.5];
        let caps = vec![1e-10, 1e-10];
        assert!(matches!(
            z_indexed_p(&times, &caps, &c, (0.05, 0.4)),
            Err(NuhError::SpacingViolation(..))
        ));
    }
}
