//! Proper Poincare sections of the model flow, flow-box projections, the
//! return map, and holonomy maps.
//!
//! Discs are flat squares at constant height, one stack of levels per fiber
//! tile. The reference section carries the base levels; the security section
//! carries concentric strictly larger copies plus mid-level discs, so the
//! return to it genuinely differs from the forward holonomy. Cover and
//! partial-order conditions are open conditions; they are verified by
//! deterministic grid sampling with margin, and that sampled verification is
//! the acceptance semantics here.

use crate::model::{Mat2, ModelFlow, PointM};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SectionError {
    #[error("sampled cover check failed: point ({0}, {1}, {2}) has no backward hit within rho")]
    CoverageFailure(f64, f64, f64),
    #[error("partial-order violation between discs {0} and {1}")]
    PartialOrderViolation(usize, usize),
    #[error("no return to the section within rho from ({0}, {1}, {2})")]
    NoReturnWithinRho(f64, f64, f64),
    #[error("point ({0}, {1}, {2}) is outside the flow box of disc {3}")]
    OutOfBox(f64, f64, f64, usize),
    #[error("point ({0}, {1}, {2}) is not on the section")]
    NotOnSection(f64, f64, f64),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SectionKind {
    Reference,
    Security,
}

/// Flat square disc at constant height. The chart identifies it with
/// `[-half_side, half_side]^2` around the center at fixed height.
#[derive(Clone, Debug)]
pub struct Disc {
    pub id: usize,
    pub tile: (usize, usize),
    pub center: [f64; 2],
    pub height: f64,
    pub half_side: f64,
}

impl Disc {
    pub fn contains_fiber(&self, u: [f64; 2], slack: f64) -> bool {
        let d0 = torus_dist(u[0], self.center[0]);
        let d1 = torus_dist(u[1], self.center[1]);
        d0 <= self.half_side + slack && d1 <= self.half_side + slack
    }

    /// Chart coordinates of a fiber point relative to the center.
    pub fn chart_coords(&self, u: [f64; 2]) -> [f64; 2] {
        [torus_diff(u[0], self.center[0]), torus_diff(u[1], self.center[1])]
    }
}

pub fn torus_diff(a: f64, b: f64) -> f64 {
    let mut d = a - b;
    if d > 0.5 {
        d -= 1.0;
    }
    if d < -0.5 {
        d += 1.0;
    }
    d
}

pub fn torus_dist(a: f64, b: f64) -> f64 {
    torus_diff(a, b).abs()
}

/// A finite union of constant-height square discs forming a section.
#[derive(Clone, Debug)]
pub struct ProperSection {
    pub kind: SectionKind,
    pub rho: f64,
    pub grid: usize,
    pub discs: Vec<Disc>,
    /// per tile: sorted heights carried by that tile
    levels: Vec<Vec<f64>>,
    /// (tile_index, level_index) -> disc id
    index: Vec<Vec<usize>>,
    height_tol: f64,
}

impl ProperSection {
    fn tile_of(&self, u: [f64; 2]) -> (usize, usize) {
        let g = self.grid as f64;
        let i = ((u[0].rem_euclid(1.0)) * g).floor() as usize % self.grid;
        let j = ((u[1].rem_euclid(1.0)) * g).floor() as usize % self.grid;
        (i, j)
    }

    fn tile_index(&self, t: (usize, usize)) -> usize {
        t.0 * self.grid + t.1
    }

    pub fn disc(&self, id: usize) -> &Disc {
        &self.discs[id]
    }

    pub fn tile_levels(&self, u: [f64; 2]) -> &[f64] {
        &self.levels[self.tile_index(self.tile_of(u))]
    }

    /// Disc containing `x`, if `x` lies on the section.
    pub fn disc_at(&self, x: PointM) -> Option<usize> {
        let ti = self.tile_index(self.tile_of(x.u));
        for (li, &h) in self.levels[ti].iter().enumerate() {
            if (x.s - h).abs() <= self.height_tol {
                let id = self.index[ti][li];
                if self.discs[id].contains_fiber(x.u, 0.0) {
                    return Some(id);
                }
            }
        }
        None
    }

    pub fn contains(&self, x: PointM) -> bool {
        self.disc_at(x).is_some()
    }

    /// First forward hit of the section strictly after `x` (event stepping
    /// across roof crossings). Returns the hit point, the travel time and
    /// the disc id.
    pub fn next_hit(&self, flow: &ModelFlow, x: PointM) -> Result<(PointM, f64, usize), SectionError> {
        let mut u = x.u;
        let mut s = x.s;
        let mut t_acc = 0.0;
        for _ in 0..6 {
            let ti = self.tile_index(self.tile_of(u));
            let on_square = self.index[ti]
                .first()
                .map(|&id| self.discs[id].contains_fiber(u, 0.0))
                .unwrap_or(false);
            if on_square {
                for (li, &h) in self.levels[ti].iter().enumerate() {
                    if h > s + self.height_tol {
                        let t = t_acc + (h - s);
                        if t > 2.0 * self.rho {
                            return Err(SectionError::NoReturnWithinRho(x.u[0], x.u[1], x.s));
                        }
                        return Ok((PointM { u, s: h }, t, self.index[ti][li]));
                    }
                }
            }
            // no level above inside this fiber block: cross the roof
            let r = flow.roof_at(u);
            t_acc += r - s;
            u = flow.apply_matrix(u);
            s = 0.0;
            if t_acc > 2.0 * self.rho {
                return Err(SectionError::NoReturnWithinRho(x.u[0], x.u[1], x.s));
            }
            // height 0 is a carried level of every tile; check it immediately
            let ti2 = self.tile_index(self.tile_of(u));
            if let Some(li0) = self.levels[ti2].iter().position(|&h| h.abs() <= self.height_tol) {
                if self.discs[self.index[ti2][li0]].contains_fiber(u, 0.0) {
                    return Ok((PointM { u, s: 0.0 }, t_acc, self.index[ti2][li0]));
                }
            }
        }
        Err(SectionError::NoReturnWithinRho(x.u[0], x.u[1], x.s))
    }

    /// First backward hit (including `x` itself when it lies on the section).
    pub fn prev_hit_or_self(
        &self,
        flow: &ModelFlow,
        x: PointM,
    ) -> Result<(PointM, f64, usize), SectionError> {
        if let Some(id) = self.disc_at(x) {
            return Ok((x, 0.0, id));
        }
        let mut u = x.u;
        let mut s = x.s;
        let mut t_acc = 0.0;
        for _ in 0..6 {
            let ti = self.tile_index(self.tile_of(u));
            let on_square = self.index[ti]
                .first()
                .map(|&id| self.discs[id].contains_fiber(u, 0.0))
                .unwrap_or(false);
            if on_square {
                for (li, &h) in self.levels[ti].iter().enumerate().rev() {
                    if h < s - self.height_tol {
                        let t = t_acc + (s - h);
                        if t > 2.0 * self.rho {
                            return Err(SectionError::NoReturnWithinRho(x.u[0], x.u[1], x.s));
                        }
                        return Ok((PointM { u, s: h }, t, self.index[ti][li]));
                    }
                }
            }
            t_acc += s;
            u = flow.apply_matrix_inv(u);
            s = flow.roof_at(u);
            if t_acc > 2.0 * self.rho {
                return Err(SectionError::NoReturnWithinRho(x.u[0], x.u[1], x.s));
            }
        }
        Err(SectionError::NoReturnWithinRho(x.u[0], x.u[1], x.s))
    }

    /// Poincare return map together with the return time.
    pub fn return_map(&self, flow: &ModelFlow, x: PointM) -> Result<(PointM, f64), SectionError> {
        if !self.contains(x) {
            return Err(SectionError::NotOnSection(x.u[0], x.u[1], x.s));
        }
        let (p, t, _) = self.next_hit(flow, x)?;
        if t > self.rho * (1.0 + 1e-9) {
            return Err(SectionError::NoReturnWithinRho(x.u[0], x.u[1], x.s));
        }
        Ok((p, t))
    }

    /// Inverse return map.
    pub fn return_map_inv(&self, flow: &ModelFlow, x: PointM) -> Result<(PointM, f64), SectionError> {
        if !self.contains(x) {
            return Err(SectionError::NotOnSection(x.u[0], x.u[1], x.s));
        }
        // step just below the disc and search backward
        let eps = 1e-9;
        let below = flow.flow(x, -eps);
        let (p, t, _) = self.prev_hit_or_self(flow, below)?;
        Ok((p, t + eps))
    }

    /// Signed flow time from `x` to the plane of disc `d`, choosing the
    /// branch with minimal |t| among at most one roof crossing either way.
    pub fn project_t(&self, flow: &ModelFlow, d: usize, x: PointM) -> Result<f64, SectionError> {
        let disc = &self.discs[d];
        let cap = 4.0 * self.rho;
        let mut best: Option<f64> = None;
        // no crossing
        if disc.contains_fiber(x.u, 0.0) {
            let t = disc.height - x.s;
            if t.abs() <= cap {
                best = Some(t);
            }
        }
        // one crossing up
        let up_u = flow.apply_matrix(x.u);
        if disc.contains_fiber(up_u, 0.0) {
            let t = (flow.roof_at(x.u) - x.s) + disc.height;
            if t.abs() <= cap && best.map(|b| t.abs() < b.abs()).unwrap_or(true) {
                best = Some(t);
            }
        }
        // one crossing down
        let dn_u = flow.apply_matrix_inv(x.u);
        if disc.contains_fiber(dn_u, 0.0) {
            let t = -(x.s + (flow.roof_at(dn_u) - disc.height));
            if t.abs() <= cap && best.map(|b| t.abs() < b.abs()).unwrap_or(true) {
                best = Some(t);
            }
        }
        best.ok_or(SectionError::OutOfBox(x.u[0], x.u[1], x.s, d))
    }

    /// Flow-box projection onto disc `d` along flow lines.
    pub fn project_q(&self, flow: &ModelFlow, d: usize, x: PointM) -> Result<PointM, SectionError> {
        let t = self.project_t(flow, d, x)?;
        let mut p = flow.flow(x, t);
        // land exactly on the disc plane
        p.s = self.discs[d].height;
        Ok(p)
    }

    /// Sampled check of the cover condition: every grid sample admits a
    /// backward hit of the section within time rho.
    pub fn cover_check(
        &self,
        flow: &ModelFlow,
        n_fiber: usize,
        n_height: usize,
    ) -> Result<(), SectionError> {
        for i in 0..n_fiber {
            for j in 0..n_fiber {
                let u = [(i as f64 + 0.5) / n_fiber as f64, (j as f64 + 0.5) / n_fiber as f64];
                let rmax = flow.roof_at(u);
                for k in 0..n_height {
                    let s = (k as f64 + 0.5) / n_height as f64 * rmax;
                    let x = PointM { u, s };
                    match self.prev_hit_or_self(flow, x) {
                        Ok((_, t, _)) if t < self.rho => {}
                        _ => return Err(SectionError::CoverageFailure(u[0], u[1], s)),
                    }
                }
            }
        }
        Ok(())
    }

    /// Sampled partial-order check with window `[0, 2 rho]` (the discs have
    /// size rho/2 in the transverse-disc convention, so their flow boxes span
    /// four times that). For each unordered pair with both closure
    /// intersections nonempty, reports a violation.
    pub fn partial_order_check(&self, flow: &ModelFlow) -> Vec<(usize, usize)> {
        let window = 2.0 * self.rho;
        let n = self.discs.len();
        let reach = |from: &Disc, to: &Disc| -> bool {
            // no-crossing: climb from `from` to `to` at frozen fiber
            let dt = to.height - from.height;
            if (0.0..=window).contains(&dt) {
                let overlap = torus_dist(from.center[0], to.center[0])
                    <= from.half_side + to.half_side + 1e-12
                    && torus_dist(from.center[1], to.center[1])
                        <= from.half_side + to.half_side + 1e-12;
                if overlap {
                    return true;
                }
            }
            // one crossing: sampled over the closed source square
            let m = 8;
            for a in 0..=m {
                for b in 0..=m {
                    let u = [
                        from.center[0] - from.half_side
                            + 2.0 * from.half_side * a as f64 / m as f64,
                        from.center[1] - from.half_side
                            + 2.0 * from.half_side * b as f64 / m as f64,
                    ];
                    let t = (flow.roof_at(u) - from.height) + to.height;
                    if (0.0..=window).contains(&t) && to.contains_fiber(flow.apply_matrix(u), 1e-12) {
                        return true;
                    }
                }
            }
            false
        };
        let mut bad = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let a = &self.discs[i];
                let b = &self.discs[j];
                if reach(a, b) && reach(b, a) {
                    bad.push((i, j));
                }
            }
        }
        bad
    }

    /// Infimum of the return time over a sampled set of section points.
    pub fn inf_return_time(&self, flow: &ModelFlow, max_samples: usize) -> f64 {
        let mut inf = f64::INFINITY;
        let mut k = 0usize;
        'outer: for d in &self.discs {
            for a in 0..3 {
                for b in 0..3 {
                    let u = [
                        d.center[0] + (a as f64 - 1.0) * d.half_side * 0.8,
                        d.center[1] + (b as f64 - 1.0) * d.half_side * 0.8,
                    ];
                    let x = flow.point(u, d.height);
                    if self.contains(x) {
                        if let Ok((_, t, _)) = self.next_hit(flow, x) {
                            inf = inf.min(t);
                        }
                    }
                    k += 1;
                    if k >= max_samples {
                        break 'outer;
                    }
                }
            }
        }
        inf
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("disc_id,center_u1,center_u2,height,radius,kind\n");
        let kind = match self.kind {
            SectionKind::Reference => "L",
            SectionKind::Security => "Lhat",
        };
        for d in &self.discs {
            out.push_str(&format!(
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{}\n",
                d.id, d.center[0], d.center[1], d.height, d.half_side, kind
            ));
        }
        out
    }
}

/// Geometry knobs for the section builder.
#[derive(Clone, Copy, Debug)]
pub struct SectionLayout {
    /// fiber tiles per side
    pub grid: usize,
    /// base level spacing
    pub level_spacing: f64,
    /// clearance below the local roof required to carry a level
    pub roof_margin: f64,
    /// fractional shrink of the full tile: reference half-side is
    /// (1 - 2 shrink)/(2 grid), security half-side (1 - shrink)/(2 grid)
    pub shrink: f64,
}

impl SectionLayout {
    pub fn for_model(flow: &ModelFlow, rho: f64) -> SectionLayout {
        if (flow.roof.max() - flow.roof.min()).abs() < 1e-15 {
            // constant roof: floor(1/rho)+1 levels keep the spacing strictly
            // below rho
            let n = (1.0 / rho).floor() as usize + 1;
            SectionLayout { grid: 6, level_spacing: 1.0 / n as f64, roof_margin: 0.02, shrink: 0.005 }
        } else {
            // variable roof: finer fiber grid so each tile sees a small roof
            // variation, and denser levels so the wrap gap stays below rho
            SectionLayout { grid: 12, level_spacing: 0.12, roof_margin: 0.02, shrink: 0.005 }
        }
    }
}

/// Build the reference and security sections. Security discs are concentric
/// with strictly larger half-side; the security section additionally carries
/// mid-level discs between consecutive base levels.
pub fn build_sections(
    flow: &ModelFlow,
    rho: f64,
    layout: SectionLayout,
    cover_fiber_samples: usize,
    cover_height_samples: usize,
) -> Result<(ProperSection, ProperSection), SectionError> {
    let g = layout.grid;
    let lam_half = (1.0 - 2.0 * layout.shrink) / (2.0 * g as f64);
    let hat_half = (1.0 - layout.shrink) / (2.0 * g as f64);

    let tile_min_roof = |i: usize, j: usize| -> f64 {
        let mut m = f64::INFINITY;
        let k = 8;
        for a in 0..=k {
            for b in 0..=k {
                let u = [
                    (i as f64 + a as f64 / k as f64) / g as f64,
                    (j as f64 + b as f64 / k as f64) / g as f64,
                ];
                m = m.min(flow.roof_at(u));
            }
        }
        m
    };

    let mk = |kind: SectionKind, half: f64, midlevels: bool| -> ProperSection {
        let mut discs = Vec::new();
        let mut levels = vec![Vec::new(); g * g];
        let mut index = vec![Vec::new(); g * g];
        for i in 0..g {
            for j in 0..g {
                let rmin = tile_min_roof(i, j);
                let center = [(i as f64 + 0.5) / g as f64, (j as f64 + 0.5) / g as f64];
                let ti = i * g + j;
                let mut heights = Vec::new();
                let mut lvl = 0usize;
                loop {
                    let h = lvl as f64 * layout.level_spacing;
                    if lvl > 0 && h + layout.roof_margin > rmin {
                        break;
                    }
                    heights.push(h);
                    if midlevels {
                        let mid = h + layout.level_spacing / 2.0;
                        if mid + layout.roof_margin <= rmin {
                            heights.push(mid);
                        }
                    }
                    lvl += 1;
                }
                heights.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for h in heights {
                    let id = discs.len();
                    discs.push(Disc { id, tile: (i, j), center, height: h, half_side: half });
                    levels[ti].push(h);
                    index[ti].push(id);
                }
            }
        }
        ProperSection { kind, rho, grid: g, discs, levels, index, height_tol: 1e-12 }
    };

    let reference = mk(SectionKind::Reference, lam_half, false);
    let security = mk(SectionKind::Security, hat_half, true);

    reference.cover_check(flow, cover_fiber_samples, cover_height_samples)?;
    let bad = reference.partial_order_check(flow);
    if let Some(&(i, j)) = bad.first() {
        return Err(SectionError::PartialOrderViolation(i, j));
    }
    Ok((reference, security))
}

/// Forward or backward holonomy map at a section point: the flow-box
/// projection onto the disc of the next (previous) return. Its derivative at
/// the base point is the induced linear Poincare flow at the transition time.
#[derive(Clone, Debug)]
pub struct HolonomyMap {
    pub source: PointM,
    pub target_disc: usize,
    /// transition time at the source point (negative for backward maps)
    pub time: f64,
    /// signed crossing count of the transition; the fiber derivative is the
    /// matrix power on this count
    pub crossings: i64,
}

impl HolonomyMap {
    /// Transition-time function on a neighborhood of the source
    /// (branch-consistent with the source's crossing count).
    pub fn time_at(&self, flow: &ModelFlow, section: &ProperSection, z: PointM) -> f64 {
        let h = section.discs[self.target_disc].height;
        match self.crossings {
            0 => h - z.s,
            1 => (flow.roof_at(z.u) - z.s) + h,
            -1 => -(z.s + (flow.roof_at(flow.apply_matrix_inv(z.u)) - h)),
            _ => unreachable!("holonomy transitions cross at most once"),
        }
    }

    /// Apply the holonomy to a nearby point (branch-consistent projection).
    pub fn apply(&self, flow: &ModelFlow, section: &ProperSection, z: PointM) -> PointM {
        let h = section.discs[self.target_disc].height;
        let u = match self.crossings {
            0 => z.u,
            1 => flow.apply_matrix(z.u),
            -1 => flow.apply_matrix_inv(z.u),
            _ => unreachable!(),
        };
        PointM { u, s: h }
    }

    /// Derivative at the source: the induced linear Poincare flow.
    pub fn derivative(&self, flow: &ModelFlow) -> Mat2 {
        flow.matrix_power(self.crossings)
    }
}

/// Forward holonomy `g_x^+` (projection onto the disc of the next return).
pub fn holonomy_forward(
    flow: &ModelFlow,
    section: &ProperSection,
    x: PointM,
) -> Result<HolonomyMap, SectionError> {
    if !section.contains(x) {
        return Err(SectionError::NotOnSection(x.u[0], x.u[1], x.s));
    }
    let (_, t, disc) = section.next_hit(flow, x)?;
    if t > section.rho * (1.0 + 1e-9) {
        return Err(SectionError::NoReturnWithinRho(x.u[0], x.u[1], x.s));
    }
    let crossings = flow.crossings(x, t).clamp(-1, 1);
    Ok(HolonomyMap { source: x, target_disc: disc, time: t, crossings })
}

/// Backward holonomy `g_x^-` (projection onto the disc of the previous
/// return).
pub fn holonomy_backward(
    flow: &ModelFlow,
    section: &ProperSection,
    x: PointM,
) -> Result<HolonomyMap, SectionError> {
    if !section.contains(x) {
        return Err(SectionError::NotOnSection(x.u[0], x.u[1], x.s));
    }
    let (p, t) = section.return_map_inv(flow, x)?;
    let disc = section
        .disc_at(p)
        .ok_or(SectionError::NotOnSection(p.u[0], p.u[1], p.s))?;
    let crossings = flow.crossings(x, -t).clamp(-1, 1);
    Ok(HolonomyMap { source: x, target_disc: disc, time: -t, crossings })
}
