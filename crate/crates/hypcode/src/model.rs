//! Explicit non-singular model flows: the mapping torus of a hyperbolic toral
//! automorphism under a constant or variable roof, with exact derivatives.
//!
//! Points move vertically at unit speed; crossing the roof at `(u, r(u))`
//! applies the automorphism and restarts at height zero. All derivative data
//! is assembled from exact per-crossing Jacobians, so there is no ODE
//! integration anywhere.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("matrix must have determinant 1, got {0}")]
    BadDeterminant(i64),
    #[error("matrix must be hyperbolic (|trace| > 2), got trace {0}")]
    NotHyperbolic(i64),
    #[error("roof perturbation {0} must satisfy 0 <= delta < 1")]
    BadDelta(f64),
    #[error("eigen splitting did not converge")]
    SplittingFailure,
}

/// Dense 2x2 matrix with just the operations the pipeline needs.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct Mat2 {
    pub m: [[f64; 2]; 2],
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2 { m: [[1.0, 0.0], [0.0, 1.0]] };

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub fn from_cols(c0: [f64; 2], c1: [f64; 2]) -> Self {
        Mat2 { m: [[c0[0], c1[0]], [c0[1], c1[1]]] }
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn inv(&self) -> Mat2 {
        let d = self.det();
        Mat2::new(self.m[1][1] / d, -self.m[0][1] / d, -self.m[1][0] / d, self.m[0][0] / d)
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let mut r = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = self.m[i][0] * o.m[0][j] + self.m[i][1] * o.m[1][j];
            }
        }
        Mat2 { m: r }
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn frob(&self) -> f64 {
        self.m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Spectral (operator) norm.
    pub fn op_norm(&self) -> f64 {
        // singular values of 2x2 via the closed form
        let a = self.m[0][0];
        let b = self.m[0][1];
        let c = self.m[1][0];
        let d = self.m[1][1];
        let q = a * a + b * b + c * c + d * d;
        let det = self.det();
        let disc = ((q * q / 4.0 - det * det).max(0.0)).sqrt();
        (q / 2.0 + disc).sqrt()
    }

    pub fn sub(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.m[0][0] - o.m[0][0],
            self.m[0][1] - o.m[0][1],
            self.m[1][0] - o.m[1][0],
            self.m[1][1] - o.m[1][1],
        )
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.m[0][0] * s, self.m[0][1] * s, self.m[1][0] * s, self.m[1][1] * s)
    }
}

/// Roof profile of the mapping torus.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum RoofProfile {
    /// Constant roof 1.
    Const,
    /// `1 + delta cos(2 pi u_1)`.
    Cos { delta: f64 },
    /// Non-uniform slowdown near the fiber point `(1/2, 1/2)`:
    /// `1 + delta cos^2(pi u_1) cos^2(pi u_2)` shifted to peak there.
    /// Excluded from acceptance runs.
    Stretch { delta: f64 },
}

impl RoofProfile {
    pub fn eval(&self, u: [f64; 2]) -> f64 {
        match *self {
            RoofProfile::Const => 1.0,
            RoofProfile::Cos { delta } => 1.0 + delta * (2.0 * std::f64::consts::PI * u[0]).cos(),
            RoofProfile::Stretch { delta } => {
                let s1 = (std::f64::consts::PI * (u[0] - 0.5)).cos();
                let s2 = (std::f64::consts::PI * (u[1] - 0.5)).cos();
                1.0 + delta * s1 * s1 * s2 * s2
            }
        }
    }

    pub fn grad(&self, u: [f64; 2]) -> [f64; 2] {
        use std::f64::consts::PI;
        match *self {
            RoofProfile::Const => [0.0, 0.0],
            RoofProfile::Cos { delta } => [-2.0 * PI * delta * (2.0 * PI * u[0]).sin(), 0.0],
            RoofProfile::Stretch { delta } => {
                let a1 = PI * (u[0] - 0.5);
                let a2 = PI * (u[1] - 0.5);
                [
                    -2.0 * PI * delta * a1.cos() * a1.sin() * a2.cos() * a2.cos(),
                    -2.0 * PI * delta * a2.cos() * a2.sin() * a1.cos() * a1.cos(),
                ]
            }
        }
    }

    pub fn min(&self) -> f64 {
        match *self {
            RoofProfile::Const => 1.0,
            RoofProfile::Cos { delta } => 1.0 - delta,
            RoofProfile::Stretch { .. } => 1.0,
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            RoofProfile::Const => 1.0,
            RoofProfile::Cos { delta } | RoofProfile::Stretch { delta } => 1.0 + delta,
        }
    }
}

/// Point of the mapping torus: fiber coordinates mod 1 and a height in
/// `[0, roof(fiber))`.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct PointM {
    pub u: [f64; 2],
    pub s: f64,
}

impl PointM {
    /// Bit-exact identity key. Orbits are the exactly computed f64 orbits,
    /// so sample identity is float identity.
    pub fn key(&self) -> (u64, u64, u64) {
        (self.u[0].to_bits(), self.u[1].to_bits(), self.s.to_bits())
    }

    pub fn serialize(&self) -> String {
        format!("({:.17e}, {:.17e}, {:.17e})", self.u[0], self.u[1], self.s)
    }
}

fn mod1(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r == 1.0 {
        0.0
    } else {
        r
    }
}

/// Fiber coordinates live on the dyadic lattice 2^-53 Z / Z, so the
/// automorphism acts as an exactly invertible integer map; computed orbits
/// are then exact orbits of the realized system in both time directions.
const LATTICE: f64 = 9007199254740992.0; // 2^53

fn to_lattice(x: f64) -> u64 {
    let v = (mod1(x) * LATTICE).round() as u64;
    if v >= LATTICE as u64 {
        0
    } else {
        v
    }
}

fn from_lattice(k: u64) -> f64 {
    k as f64 / LATTICE
}

/// Snap a fiber pair onto the lattice.
pub fn quantize_fiber(u: [f64; 2]) -> [f64; 2] {
    [from_lattice(to_lattice(u[0])), from_lattice(to_lattice(u[1]))]
}

/// Suspension of a hyperbolic toral automorphism.
#[derive(Clone, Debug)]
pub struct ModelFlow {
    pub matrix: [[i64; 2]; 2],
    pub roof: RoofProfile,
    /// Expanding eigenvalue (> 1).
    pub lambda: f64,
    /// log(lambda); the fiber expansion rate per crossing. The standing
    /// derivative bound reads `|dphi^t| <= e^{rate (|t| + sup roof)}` with
    /// `rate = log lambda / min roof`, and plain `e^{|t|}` once `|t|` clears
    /// the one-crossing slack (rate < 1 for the default matrix and roof).
    pub log_lambda: f64,
    /// Unit stable and unstable fiber eigendirections, signs chosen so that
    /// their angle is at most pi/2.
    pub n_s: [f64; 2],
    pub n_u: [f64; 2],
}

fn normalize(v: [f64; 2]) -> [f64; 2] {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    [v[0] / n, v[1] / n]
}

impl ModelFlow {
    pub fn new(matrix: [[i64; 2]; 2], roof: RoofProfile) -> Result<Self, ModelError> {
        let det = matrix[0][0] * matrix[1][1] - matrix[0][1] * matrix[1][0];
        if det != 1 {
            return Err(ModelError::BadDeterminant(det));
        }
        let tr = matrix[0][0] + matrix[1][1];
        if tr.abs() <= 2 {
            return Err(ModelError::NotHyperbolic(tr));
        }
        if let RoofProfile::Cos { delta } | RoofProfile::Stretch { delta } = roof {
            if !(0.0..1.0).contains(&delta) {
                return Err(ModelError::BadDelta(delta));
            }
        }
        let trf = tr as f64;
        let disc = (trf * trf - 4.0).sqrt();
        let lambda = (trf.abs() + disc) / 2.0;
        let (ev_u, ev_s) = if trf > 0.0 { (lambda, 1.0 / lambda) } else { (-lambda, -1.0 / lambda) };
        let a = matrix[0][0] as f64;
        let b = matrix[0][1] as f64;
        let c = matrix[1][0] as f64;
        let eig = |mu: f64| -> [f64; 2] {
            // (A - mu I) v = 0; rows are proportional, pick the better one
            if b.abs() > 1e-12 {
                normalize([b, mu - a])
            } else if c.abs() > 1e-12 {
                normalize([mu - matrix[1][1] as f64, c])
            } else {
                if a == mu {
                    [1.0, 0.0]
                } else {
                    [0.0, 1.0]
                }
            }
        };
        let mut n_u = eig(ev_u);
        let mut n_s = eig(ev_s);
        if n_u[0] < 0.0 || (n_u[0] == 0.0 && n_u[1] < 0.0) {
            n_u = [-n_u[0], -n_u[1]];
        }
        if n_s[0] * n_u[0] + n_s[1] * n_u[1] < 0.0 {
            n_s = [-n_s[0], -n_s[1]];
        }
        Ok(ModelFlow { matrix, roof, lambda, log_lambda: lambda.ln(), n_s, n_u })
    }

    /// Default model: the matrix [[2,1],[1,1]] with the given roof.
    pub fn cat(roof: RoofProfile) -> Self {
        ModelFlow::new([[2, 1], [1, 1]], roof).expect("default matrix is hyperbolic")
    }

    pub fn roof_at(&self, u: [f64; 2]) -> f64 {
        self.roof.eval(u)
    }

    pub fn apply_matrix(&self, u: [f64; 2]) -> [f64; 2] {
        let a = self.matrix;
        let k = [to_lattice(u[0]) as i128, to_lattice(u[1]) as i128];
        let m = LATTICE as i128;
        let r0 = (a[0][0] as i128 * k[0] + a[0][1] as i128 * k[1]).rem_euclid(m);
        let r1 = (a[1][0] as i128 * k[0] + a[1][1] as i128 * k[1]).rem_euclid(m);
        [from_lattice(r0 as u64), from_lattice(r1 as u64)]
    }

    pub fn apply_matrix_inv(&self, u: [f64; 2]) -> [f64; 2] {
        // det = 1, so inv = [[d, -b], [-c, a]]; exact on the lattice
        let a = self.matrix;
        let k = [to_lattice(u[0]) as i128, to_lattice(u[1]) as i128];
        let m = LATTICE as i128;
        let r0 = (a[1][1] as i128 * k[0] - a[0][1] as i128 * k[1]).rem_euclid(m);
        let r1 = (-a[1][0] as i128 * k[0] + a[0][0] as i128 * k[1]).rem_euclid(m);
        [from_lattice(r0 as u64), from_lattice(r1 as u64)]
    }

    pub fn canonical(&self, mut p: PointM) -> PointM {
        p.u = quantize_fiber(p.u);
        let mut guard = 0;
        while p.s >= self.roof_at(p.u) {
            p.s -= self.roof_at(p.u);
            p.u = self.apply_matrix(p.u);
            guard += 1;
            assert!(guard < 64, "height too far above roof");
        }
        while p.s < 0.0 {
            p.u = self.apply_matrix_inv(p.u);
            p.s += self.roof_at(p.u);
            guard += 1;
            assert!(guard < 64, "height too far below zero");
        }
        p
    }

    pub fn point(&self, u: [f64; 2], s: f64) -> PointM {
        self.canonical(PointM { u, s })
    }

    /// Time flow; exact event stepping across roof crossings.
    pub fn flow(&self, x: PointM, t: f64) -> PointM {
        let mut p = self.canonical(x);
        let mut rem = t;
        let guard_max = (t.abs() / self.roof.min()).ceil() as usize + 4;
        let mut guard = 0;
        if rem >= 0.0 {
            loop {
                let r = self.roof_at(p.u);
                let gap = r - p.s;
                if rem < gap {
                    p.s += rem;
                    return p;
                }
                rem -= gap;
                p.u = self.apply_matrix(p.u);
                p.s = 0.0;
                guard += 1;
                assert!(guard <= guard_max, "flow stepping diverged");
            }
        } else {
            loop {
                if p.s + rem >= 0.0 {
                    p.s += rem;
                    return p;
                }
                rem += p.s;
                p.u = self.apply_matrix_inv(p.u);
                p.s = self.roof_at(p.u);
                guard += 1;
                assert!(guard <= guard_max, "flow stepping diverged");
            }
        }
    }

    /// Signed number of roof crossings along `flow(x, t)`.
    pub fn crossings(&self, x: PointM, t: f64) -> i64 {
        let mut p = self.canonical(x);
        let mut rem = t;
        let mut k = 0i64;
        if rem >= 0.0 {
            loop {
                let gap = self.roof_at(p.u) - p.s;
                if rem < gap {
                    return k;
                }
                rem -= gap;
                p.u = self.apply_matrix(p.u);
                p.s = 0.0;
                k += 1;
            }
        } else {
            loop {
                if p.s + rem >= 0.0 {
                    return k;
                }
                rem += p.s;
                p.u = self.apply_matrix_inv(p.u);
                p.s = self.roof_at(p.u);
                k -= 1;
            }
        }
    }

    /// Integer power of the automorphism as an exact 2x2 when |k| is small,
    /// else via the eigen form.
    pub fn matrix_power(&self, k: i64) -> Mat2 {
        if k.unsigned_abs() <= 40 {
            let base: [[i128; 2]; 2] = if k >= 0 {
                [
                    [self.matrix[0][0] as i128, self.matrix[0][1] as i128],
                    [self.matrix[1][0] as i128, self.matrix[1][1] as i128],
                ]
            } else {
                [
                    [self.matrix[1][1] as i128, -self.matrix[0][1] as i128],
                    [-self.matrix[1][0] as i128, self.matrix[0][0] as i128],
                ]
            };
            let mut acc = [[1i128, 0], [0, 1]];
            for _ in 0..k.unsigned_abs() {
                let mut r = [[0i128; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        r[i][j] = acc[i][0] * base[0][j] + acc[i][1] * base[1][j];
                    }
                }
                acc = r;
            }
            Mat2::new(acc[0][0] as f64, acc[0][1] as f64, acc[1][0] as f64, acc[1][1] as f64)
        } else {
            // A^k = ev_u^k P_u + ev_s^k P_s with oblique projectors
            let nu = self.n_u;
            let ns = self.n_s;
            let det = nu[0] * ns[1] - nu[1] * ns[0];
            // columns [nu ns]^-1 rows give dual basis
            let du = [ns[1] / det, -ns[0] / det];
            let ds = [-nu[1] / det, nu[0] / det];
            let tr = (self.matrix[0][0] + self.matrix[1][1]) as f64;
            let (ev_u, ev_s) = if tr > 0.0 {
                (self.lambda, 1.0 / self.lambda)
            } else {
                (-self.lambda, -1.0 / self.lambda)
            };
            let pu = Mat2::new(nu[0] * du[0], nu[0] * du[1], nu[1] * du[0], nu[1] * du[1]);
            let ps = Mat2::new(ns[0] * ds[0], ns[0] * ds[1], ns[1] * ds[0], ns[1] * ds[1]);
            let wu = ev_u.powi(k as i32);
            let ws = ev_s.powi(k as i32);
            Mat2::new(
                wu * pu.m[0][0] + ws * ps.m[0][0],
                wu * pu.m[0][1] + ws * ps.m[0][1],
                wu * pu.m[1][0] + ws * ps.m[1][0],
                wu * pu.m[1][1] + ws * ps.m[1][1],
            )
        }
    }

    /// Full derivative of the time-t flow in the frame (e1, e2, X): the fiber
    /// block is the matrix power, the bottom row carries the crossing shear
    /// from the variable roof.
    pub fn dflow(&self, x: PointM, t: f64) -> [[f64; 3]; 3] {
        let mut p = self.canonical(x);
        let mut rem = t;
        let mut jac = [[0.0f64; 3]; 3];
        for (i, row) in jac.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let cross = |jac: &mut [[f64; 3]; 3], u: [f64; 2], model: &ModelFlow, forward: bool| {
            // forward crossing at fiber u (before the jump):
            //   du' = A du, ds' = ds - grad r(u) . du
            let g = model.roof.grad(u);
            let a = model.matrix;
            let mstep: [[f64; 3]; 3] = if forward {
                [
                    [a[0][0] as f64, a[0][1] as f64, 0.0],
                    [a[1][0] as f64, a[1][1] as f64, 0.0],
                    [-g[0], -g[1], 1.0],
                ]
            } else {
                // inverse of the forward crossing Jacobian at u
                let inv = [[a[1][1] as f64, -(a[0][1] as f64)], [-(a[1][0] as f64), a[0][0] as f64]];
                [
                    [inv[0][0], inv[0][1], 0.0],
                    [inv[1][0], inv[1][1], 0.0],
                    [g[0] * inv[0][0] + g[1] * inv[1][0], g[0] * inv[0][1] + g[1] * inv[1][1], 1.0],
                ]
            };
            let mut res = [[0.0f64; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for (k, row) in mstep.iter().enumerate().take(3) {
                        let _ = row;
                        res[i][j] += mstep[i][k] * jac[k][j];
                    }
                }
            }
            *jac = res;
        };
        if rem >= 0.0 {
            loop {
                let gap = self.roof_at(p.u) - p.s;
                if rem < gap {
                    return jac;
                }
                rem -= gap;
                let u_before = p.u;
                p.u = self.apply_matrix(p.u);
                p.s = 0.0;
                cross(&mut jac, u_before, self, true);
            }
        } else {
            loop {
                if p.s + rem >= 0.0 {
                    return jac;
                }
                rem += p.s;
                p.u = self.apply_matrix_inv(p.u);
                p.s = self.roof_at(p.u);
                cross(&mut jac, p.u, self, false);
            }
        }
    }

    /// Projection parallel to X onto Ker(theta) = the fiber plane:
    /// v - theta(v) X with theta = ds in the canonical chart.
    pub fn one_form_project(&self, _x: PointM, v: [f64; 3]) -> [f64; 3] {
        [v[0], v[1], 0.0]
    }

    /// Induced linear Poincare flow N_x -> N_{phi^t x} in the orthonormal
    /// fiber frame. Exactly the matrix power on the crossing count.
    pub fn induced_phi(&self, x: PointM, t: f64) -> Mat2 {
        self.matrix_power(self.crossings(x, t))
    }

    /// Norm growth of the induced flow along the stable/unstable directions;
    /// exact: `|Phi^t n_s| = lambda^{-k(t)}`, `|Phi^t n_u| = lambda^{k(t)}`.
    pub fn phi_norm_stable(&self, x: PointM, t: f64) -> f64 {
        self.lambda.powi(-(self.crossings(x, t) as i32))
    }

    pub fn phi_norm_unstable(&self, x: PointM, t: f64) -> f64 {
        self.lambda.powi(self.crossings(x, t) as i32)
    }

    /// Stable/unstable unit vectors of the fiber splitting at `x`. The
    /// splitting of the toral automorphism is fiber-independent; failure is
    /// reserved for non-hyperbolic data.
    pub fn splitting_directions(&self, _x: PointM) -> Result<([f64; 2], [f64; 2]), ModelError> {
        let tr = self.matrix[0][0] + self.matrix[1][1];
        if tr.abs() <= 2 {
            return Err(ModelError::SplittingFailure);
        }
        Ok((self.n_s, self.n_u))
    }

    /// Angle between the stable and unstable directions, in (0, pi/2].
    pub fn splitting_angle(&self) -> f64 {
        let d = self.n_s[0] * self.n_u[0] + self.n_s[1] * self.n_u[1];
        d.clamp(-1.0, 1.0).acos()
    }

    /// sin of the splitting angle (|sin alpha(x)|, fiber-independent here).
    pub fn sin_alpha(&self) -> f64 {
        (self.n_s[0] * self.n_u[1] - self.n_s[1] * self.n_u[0]).abs()
    }

    /// Orthonormal basis of N_x = Ker(theta_x) together with the base point.
    pub fn normal_frame(&self, base: PointM) -> NormalFrame {
        NormalFrame { base, e1: [1.0, 0.0, 0.0], e2: [0.0, 1.0, 0.0] }
    }
}

/// Orthonormal frame of the plane transverse to the flow at a point.
#[derive(Clone, Copy, Debug)]
pub struct NormalFrame {
    pub base: PointM,
    pub e1: [f64; 3],
    pub e2: [f64; 3],
}

/// Parse `(u1, u2, s)`.
pub fn parse_point(text: &str) -> Result<(f64, f64, f64), String> {
    let inner = text
        .trim()
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| format!("expected (u1, u2, s), got {:?}", text))?;
    let parts: Vec<&str> = inner.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected 3 components, got {}", parts.len()));
    }
    let mut vals = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        vals[i] = p.trim().parse().map_err(|e| format!("bad component {:?}: {}", p, e))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cat_const() -> ModelFlow {
        ModelFlow::cat(RoofProfile::Const)
    }

    fn cat_cos() -> ModelFlow {
        ModelFlow::cat(RoofProfile::Cos { delta: 0.1 })
    }

    #[test]
    fn flow_identity_and_one_crossing() {
        let m = cat_const();
        let x = m.point([0.3, 0.7], 0.0);
        let y = m.flow(x, 0.0);
        assert_eq!(x, y);
        let z = m.flow(x, 1.0);
        assert_eq!(z.u, m.apply_matrix([0.3, 0.7]));
        assert_eq!(z.s, 0.0);
    }

    #[test]
    fn flow_group_law_random() {
        for model in [cat_const(), cat_cos()] {
            let mut seed = 0x9E3779B97F4A7C15u64;
            let mut rnd = move || {
                seed ^= seed << 13;
                seed ^= seed >> 7;
                seed ^= seed << 17;
                (seed >> 11) as f64 / (1u64 << 53) as f64
            };
            for _ in 0..200 {
                let x = model.point([rnd(), rnd()], rnd() * 0.8);
                let a = (rnd() - 0.5) * 6.0;
                let b = (rnd() - 0.5) * 6.0;
                let p = model.flow(model.flow(x, a), b);
                let q = model.flow(x, a + b);
                assert!((p.u[0] - q.u[0]).abs() < 1e-9, "{:?} {:?}", p, q);
                assert!((p.u[1] - q.u[1]).abs() < 1e-9);
                assert!((p.s - q.s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dflow_identity_and_matrix_block() {
        let m = cat_const();
        let x = m.point([0.3, 0.7], 0.0);
        let j0 = m.dflow(x, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(j0[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        let j1 = m.dflow(x, 1.0);
        assert_eq!(j1[0][0], 2.0);
        assert_eq!(j1[0][1], 1.0);
        assert_eq!(j1[1][0], 1.0);
        assert_eq!(j1[1][1], 1.0);
        // fiber determinant over a full period is 1
        let det = j1[0][0] * j1[1][1] - j1[0][1] * j1[1][0];
        assert_eq!(det, 1.0);
    }

    #[test]
    fn dflow_chain_rule() {
        for model in [cat_const(), cat_cos()] {
            let x = model.point([0.21, 0.64], 0.3);
            for (a, b) in [(0.7, 1.3), (-0.4, 2.2), (1.5, -0.9)] {
                let lhs = model.dflow(x, a + b);
                let ja = model.dflow(x, a);
                let jb = model.dflow(model.flow(x, a), b);
                let mut prod = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        for k in 0..3 {
                            prod[i][j] += jb[i][k] * ja[k][j];
                        }
                    }
                }
                for i in 0..3 {
                    for j in 0..3 {
                        assert!(
                            (lhs[i][j] - prod[i][j]).abs() < 1e-10,
                            "model {:?} a={} b={} ({},{}): {} vs {}",
                            model.roof, a, b, i, j, lhs[i][j], prod[i][j]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn projection_properties() {
        let m = cat_const();
        let x = m.point([0.1, 0.2], 0.4);
        // v = X(x) -> 0
        assert_eq!(m.one_form_project(x, [0.0, 0.0, 1.0]), [0.0, 0.0, 0.0]);
        // v in N_x -> v
        assert_eq!(m.one_form_project(x, [0.3, -0.4, 0.0]), [0.3, -0.4, 0.0]);
        // v = X + w -> w; idempotent
        let v = [0.3, -0.4, 2.5];
        let p = m.one_form_project(x, v);
        assert_eq!(p, [0.3, -0.4, 0.0]);
        assert_eq!(m.one_form_project(x, p), p);
    }

    #[test]
    fn induced_phi_cocycle() {
        for model in [cat_const(), cat_cos()] {
            let x = model.point([0.37, 0.58], 0.2);
            let full = model.induced_phi(x, 1.3);
            let first = model.induced_phi(x, 0.5);
            let second = model.induced_phi(model.flow(x, 0.5), 0.8);
            let prod = second.mul(&first);
            for i in 0..2 {
                for j in 0..2 {
                    assert!((full.m[i][j] - prod.m[i][j]).abs() < 1e-10);
                }
            }
        }
        // t = 0 -> identity; t = 1 from height 0 -> the matrix itself
        let m = cat_const();
        let x = m.point([0.3, 0.7], 0.0);
        assert_eq!(m.induced_phi(x, 0.0), Mat2::IDENTITY);
        assert_eq!(m.induced_phi(x, 1.0), Mat2::new(2.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn splitting_matches_eigen_oracle() {
        let m = cat_const();
        let (ns, nu) = m.splitting_directions(m.point([0.0, 0.0], 0.0)).unwrap();
        // oracle: n_u ~ (1, (sqrt5-1)/2); n_s ~ (1, -(sqrt5+1)/2), normalized
        let s5 = 5.0f64.sqrt();
        let nu_o = normalize([1.0, (s5 - 1.0) / 2.0]);
        let ns_o = normalize([1.0, -(s5 + 1.0) / 2.0]);
        for i in 0..2 {
            assert_relative_eq!(nu[i], nu_o[i], max_relative = 1e-12);
        }
        // sign convention allows either sign pattern for n_s as long as the
        // angle to n_u is <= pi/2; compare up to sign
        let dot: f64 = ns[0] * ns_o[0] + ns[1] * ns_o[1];
        for i in 0..2 {
            assert_relative_eq!(ns[i], dot.signum() * ns_o[i], max_relative = 1e-12);
        }
        let angle = m.splitting_angle();
        assert!(angle > 0.0 && angle <= std::f64::consts::FRAC_PI_2 + 1e-15);
        // cat matrix is symmetric: orthogonal splitting
        assert_relative_eq!(m.sin_alpha(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn phi_maps_unstable_to_unstable() {
        for model in [cat_const(), cat_cos()] {
            let x = model.point([0.11, 0.83], 0.05);
            let (_, nu) = model.splitting_directions(x).unwrap();
            for t in [0.5, 1.0, 2.7] {
                let img = model.induced_phi(x, t).apply(nu);
                let n = (img[0] * img[0] + img[1] * img[1]).sqrt();
                let unit = [img[0] / n, img[1] / n];
                let cross = (unit[0] * nu[1] - unit[1] * nu[0]).abs();
                assert!(cross < 1e-9, "angle deviation {}", cross);
            }
        }
    }

    #[test]
    fn dphi_norm_growth_pattern() {
        // |dphi^t| = lambda^{k(t)} on the fiber; with log lambda < 1 the
        // standing bound e^{|t|} holds up to the single-crossing slack and
        // exactly for large |t|.
        let m = cat_const();
        let x = m.point([0.3, 0.9], 0.85);
        for t in [0.05, 0.3, 1.0, 2.5, 7.0, 30.0] {
            let k = m.crossings(x, t);
            let j = m.dflow(x, t);
            let fiber = Mat2::new(j[0][0], j[0][1], j[1][0], j[1][1]);
            assert_relative_eq!(fiber.op_norm(), m.lambda.powi(k as i32), max_relative = 1e-9);
            assert!(fiber.op_norm() <= (m.log_lambda * (t + 1.0)).exp() * (1.0 + 1e-12));
        }
        // clean bound for t past the slack horizon
        for t in [26.0, 40.0] {
            let j = m.dflow(x, t);
            let fiber = Mat2::new(j[0][0], j[0][1], j[1][0], j[1][1]);
            assert!(fiber.op_norm() <= t.exp());
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(matches!(
            ModelFlow::new([[2, 1], [1, 2]], RoofProfile::Const),
            Err(ModelError::BadDeterminant(3))
        ));
        assert!(matches!(
            ModelFlow::new([[1, 1], [0, 1]], RoofProfile::Const),
            Err(ModelError::NotHyperbolic(2))
        ));
    }

    #[test]
    fn stretch_model_flows_and_stays_hyperbolic() {
        // behind a flag and excluded from acceptance runs; it must still
        // flow, differentiate, and keep the fiber splitting
        let m = ModelFlow::cat(RoofProfile::Stretch { delta: 0.2 });
        assert!(m.roof.max() > 1.0 && m.roof.min() >= 1.0);
        let near = m.point([0.52, 0.48], 0.3);
        let far = m.point([0.02, 0.98], 0.3);
        assert!(m.roof_at(near.u) > m.roof_at(far.u), "slowdown near the marked point");
        let x = m.point([0.31, 0.7], 0.2);
        let a = m.flow(m.flow(x, 1.3), -1.3);
        assert!((a.u[0] - x.u[0]).abs() < 1e-9 && (a.s - x.s).abs() < 1e-9);
        assert!(m.splitting_directions(x).is_ok());
    }

    #[test]
    fn matrix_action_exactly_invertible_on_lattice() {
        let m = cat_const();
        let mut seed = 0x5DEECE66Du64;
        let mut rnd = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let u = quantize_fiber([rnd(), rnd()]);
            let v = m.apply_matrix(u);
            let back = m.apply_matrix_inv(v);
            assert_eq!(back, u, "inverse must be bit-exact on the lattice");
            let w = m.apply_matrix_inv(u);
            assert_eq!(m.apply_matrix(w), u);
        }
    }

    #[test]
    fn point_serialization() {
        let m = cat_const();
        let x = m.point([0.25, 0.5], 0.125);
        let s = x.serialize();
        let (u1, u2, h) = parse_point(&s).unwrap();
        assert_eq!([u1, u2], x.u);
        assert_eq!(h, x.s);
    }
}
