//! Markov cover from the first coding, Smale brackets, the refinement into
//! a true partition with the geometric Markov property, the second
//! (finite-to-one) coding with its roof, affiliation, the preimage bound,
//! the Bowen relation, and the lifting of hyperbolic sample sets.
//!
//! Rectangles and fibres are finite sample clouds with per-point curve
//! handles; set relations are verified pointwise with a fixed tolerance in
//! chart coordinates. Stable and unstable fibres of the flat model are the
//! chart axes, so fibre membership compares single chart coordinates.

use crate::charts::ChartSystem;
use crate::coarse::{Alphabet, Encoding, SectionOrbit};
use crate::gpo::hoelder_certificate;
use crate::model::PointM;
use crate::sections::torus_diff;
use crate::symbolic::MarkovGraph;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Chart-coordinate tolerance for all sample-cloud set operations.
pub const CLOUD_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MarkovError {
    #[error("vertex {0} has an empty rectangle (no witness samples)")]
    EmptyRectangle(u32),
    #[error("cylinder {0:?} is empty, violating the Markov property")]
    CylinderEmpty(Vec<usize>),
    #[error("Smale bracket failed for samples {0} and {1}")]
    BracketFailure(usize, usize),
    #[error("preimage count {found} exceeds the bound N(R) N(S) = {bound}")]
    BoundViolated { found: usize, bound: usize },
    #[error("lifts split across {0} strongly connected components")]
    NotTransitive(usize),
    #[error("chart error: {0}")]
    Chart(#[from] crate::charts::ChartError),
    #[error("section error: {0}")]
    Section(#[from] crate::sections::SectionError),
}

/// One witness sample: an orbit hit together with its coding data.
#[derive(Clone, Debug)]
pub struct Sample {
    pub point: PointM,
    /// alphabet vertex of the chart at this position
    pub vertex: u32,
    pub orbit: usize,
    pub pos: usize,
    pub time: f64,
    pub next: Option<usize>,
    pub prev: Option<usize>,
}

/// Rectangle of the refined partition: an equivalence class of samples with
/// the set of cover rectangles containing it.
#[derive(Clone, Debug)]
pub struct RectClass {
    pub id: usize,
    pub samples: Vec<usize>,
    pub zs: BTreeSet<u32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovReport {
    pub checked: usize,
    pub violations: usize,
    pub flagged: usize,
    pub max_flag_factor: f64,
    pub witnesses: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BowenReport {
    pub coincidence_pairs_checked: usize,
    pub affiliation_failures: usize,
    pub shift_pairs_checked: usize,
    pub max_time_shift: f64,
    pub gamma: f64,
}

/// Affiliation data: the symmetric relation, the (S, Z') witness sets and
/// their cardinalities.
#[derive(Clone, Debug)]
pub struct AffiliationGraph {
    pub relation: BTreeSet<(usize, usize)>,
    pub a_sets: Vec<BTreeSet<(usize, u32)>>,
}

impl AffiliationGraph {
    pub fn n_of(&self, r: usize) -> usize {
        self.a_sets[r].len()
    }

    pub fn related(&self, r: usize, s: usize) -> bool {
        self.relation.contains(&(r.min(s), r.max(s)))
    }
}

/// The full sample-cloud Markov structure over one chart system.
pub struct MarkovSystem<'a, 'b> {
    pub sys: &'b ChartSystem<'a>,
    pub alphabet: &'b Alphabet,
    pub samples: Vec<Sample>,
    /// per sample: cover rectangles containing it at tolerance
    pub memberships: Vec<BTreeSet<u32>>,
    /// vertex -> anchor samples (the cloud of Z(v))
    pub clouds: BTreeMap<u32, Vec<usize>>,
    /// vertex -> flow-overlapping vertices (the I_Z sets)
    pub i_sets: BTreeMap<u32, BTreeSet<u32>>,
    /// refinement depth
    pub big_n: usize,
    pub classes: Vec<RectClass>,
    /// per sample: refined class (None when the window clips the signature)
    pub class_of: Vec<Option<usize>>,
}

impl<'a, 'b> MarkovSystem<'a, 'b> {
    /// Assemble the cover and refine it. The witness encodings must come
    /// from the given orbits (index-aligned).
    pub fn build(
        sys: &'b ChartSystem<'a>,
        alphabet: &'b Alphabet,
        orbits: &[SectionOrbit],
        encodings: &[Encoding],
    ) -> Result<Self, MarkovError> {
        assert_eq!(orbits.len(), encodings.len());
        let mut samples = Vec::new();
        for (oid, (orbit, enc)) in orbits.iter().zip(encodings).enumerate() {
            let n = orbit.len();
            let base = samples.len();
            for i in 0..n {
                let next = if i + 1 < n {
                    Some(base + i + 1)
                } else if orbit.future_period > 0 {
                    Some(base + n - orbit.future_period)
                } else {
                    None
                };
                let prev = if i > 0 {
                    Some(base + i - 1)
                } else if orbit.past_period > 0 {
                    Some(base + orbit.past_period - 1)
                } else {
                    None
                };
                samples.push(Sample {
                    point: orbit.hits[i],
                    vertex: enc.vertex_ids[i],
                    orbit: oid,
                    pos: i,
                    time: orbit.times[i],
                    next,
                    prev,
                });
            }
        }

        // memberships at tolerance: sample x belongs to Z(v) when some
        // anchor with vertex v is tolerance-close in chart coordinates
        let n = samples.len();
        let mut memberships: Vec<BTreeSet<u32>> = vec![BTreeSet::new(); n];
        for i in 0..n {
            memberships[i].insert(samples[i].vertex);
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if close_in_chart(sys, alphabet, &samples[j], &samples[i]) {
                    let vj = samples[j].vertex;
                    memberships[i].insert(vj);
                }
            }
        }
        let mut clouds: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, mem) in memberships.iter().enumerate() {
            for &v in mem {
                clouds.entry(v).or_default().push(i);
            }
        }
        for vid in 0..alphabet.len() as u32 {
            if !clouds.contains_key(&vid) {
                return Err(MarkovError::EmptyRectangle(vid));
            }
        }

        // I_Z: vertices met by flowing the cloud by at most rho either way
        let rho = sys.consts.rho;
        let mut i_sets: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        for (&v, cloud) in &clouds {
            let mut set = BTreeSet::new();
            set.insert(v);
            for &sid in cloud {
                // walk the orbit in both directions, accumulating local
                // steps, while the total stays within rho
                let mut walk = |dir_next: bool| {
                    let mut cur = sid;
                    let mut acc = 0.0;
                    loop {
                        let link = if dir_next { self_next(&samples, cur) } else { samples[cur].prev };
                        match link {
                            Some(nx) => {
                                acc += wrapped_dt(&samples, cur, nx, dir_next);
                                if acc > rho {
                                    break;
                                }
                                set.extend(memberships[nx].iter().copied());
                                if nx == sid {
                                    break;
                                }
                                cur = nx;
                            }
                            None => break,
                        }
                    }
                };
                walk(true);
                walk(false);
            }
            i_sets.insert(v, set);
        }

        // refinement depth from the security-section return time
        let inf_hat = sys.security.inf_return_time(sys.flow, 6000).max(1e-6);
        let big_n = (rho / inf_hat).ceil() as usize + 1;

        let mut ms = MarkovSystem {
            sys,
            alphabet,
            samples,
            memberships,
            clouds,
            i_sets,
            big_n,
            classes: Vec::new(),
            class_of: Vec::new(),
        };
        ms.refine();
        Ok(ms)
    }

    /// Chart coordinates of sample `i` in the chart of vertex `v`.
    fn coords_in(&self, v: u32, i: usize) -> Option<[f64; 2]> {
        coords_in_chart(self.sys, self.alphabet, v, &self.samples[i])
    }

    /// H on samples: the next hit of the union cloud along the orbit.
    pub fn h_next(&self, i: usize) -> Option<usize> {
        self.samples[i].next
    }

    pub fn h_prev(&self, i: usize) -> Option<usize> {
        self.samples[i].prev
    }

    /// k-fold H with window clipping.
    pub fn h_iter(&self, i: usize, k: i64) -> Option<usize> {
        let mut cur = i;
        for _ in 0..k.unsigned_abs() {
            cur = if k > 0 { self.h_next(cur)? } else { self.h_prev(cur)? };
        }
        Some(cur)
    }

    /// Stable-fibre membership: y on the stable line of x inside Z(v).
    pub fn in_stable_fibre(&self, v: u32, x: usize, y: usize) -> bool {
        if !self.memberships[y].contains(&v) {
            return false;
        }
        match (self.coords_in(v, x), self.coords_in(v, y)) {
            (Some(cx), Some(cy)) => (cx[1] - cy[1]).abs() <= CLOUD_TOL,
            _ => false,
        }
    }

    pub fn in_unstable_fibre(&self, v: u32, x: usize, y: usize) -> bool {
        if !self.memberships[y].contains(&v) {
            return false;
        }
        match (self.coords_in(v, x), self.coords_in(v, y)) {
            (Some(cx), Some(cy)) => (cx[0] - cy[0]).abs() <= CLOUD_TOL,
            _ => false,
        }
    }

    /// Smale bracket in Z(v): the unique combination of x's stable line with
    /// y's unstable line, returned in chart coordinates of v together with
    /// the manifold point.
    pub fn smale_bracket(&self, v: u32, x: usize, y: usize) -> Result<([f64; 2], PointM), MarkovError> {
        let cx = self.coords_in(v, x).ok_or(MarkovError::BracketFailure(x, y))?;
        let cy = self.coords_in(v, y).ok_or(MarkovError::BracketFailure(x, y))?;
        let coords = [cy[0], cx[1]];
        let vtx = &self.alphabet.vertices[v as usize];
        let window = 10.0 * vtx.chart.chart.params.q_cap + 2.0 * CLOUD_TOL;
        if coords[0].abs() > window || coords[1].abs() > window {
            return Err(MarkovError::BracketFailure(x, y));
        }
        let p = vtx.chart.chart.apply(coords)?;
        Ok((coords, p))
    }

    /// Four-way intersection signature of sample `x` in Z(v) against Z(v').
    /// The comparison projects the other cloud onto the disc of v along the
    /// flow and compares fibre coordinates at tolerance.
    fn e_signature(&self, v: u32, vp: u32, x: usize) -> (bool, bool) {
        let disc = match self.sys.reference.disc_at(self.alphabet.vertices[v as usize].chart.base()) {
            Some(d) => d,
            None => return (false, false),
        };
        let cx = match self.coords_in(v, x) {
            Some(c) => c,
            None => return (false, false),
        };
        let mut s_hit = false;
        let mut u_hit = false;
        if let Some(cloud) = self.clouds.get(&vp) {
            for &j in cloud {
                let pj = self.samples[j].point;
                if let Ok(q) = self.sys.reference.project_q(self.sys.flow, disc, pj) {
                    let vtx = &self.alphabet.vertices[v as usize];
                    let base = vtx.chart.base();
                    if (q.s - base.s).abs() > 1e-9 {
                        continue;
                    }
                    let du = [torus_diff(q.u[0], base.u[0]), torus_diff(q.u[1], base.u[1])];
                    let c = vtx.chart.chart.params.c_matrix.inv().apply(du);
                    if (c[1] - cx[1]).abs() <= CLOUD_TOL {
                        s_hit = true;
                    }
                    if (c[0] - cx[0]).abs() <= CLOUD_TOL {
                        u_hit = true;
                    }
                }
            }
        }
        (s_hit, u_hit)
    }

    /// Signature of ~N at a sample, or None when the orbit window clips it.
    fn refine_signature(&self, i: usize) -> Option<Vec<(Vec<u32>, Vec<(u32, bool, bool)>)>> {
        let big_n = self.big_n as i64;
        let mut sig = Vec::new();
        for k in -big_n..=big_n {
            let hk = self.h_iter(i, k)?;
            let mems: Vec<u32> = self.memberships[hk].iter().copied().collect();
            let mut esigs = Vec::new();
            for &z in &mems {
                for &zp in &self.i_sets[&z] {
                    let (s, u) = self.e_signature(z, zp, hk);
                    esigs.push((zp, s, u));
                }
            }
            sig.push((mems, esigs));
        }
        Some(sig)
    }

    fn refine(&mut self) {
        let n = self.samples.len();
        let mut sig_map: BTreeMap<String, usize> = BTreeMap::new();
        let mut classes: Vec<RectClass> = Vec::new();
        let mut class_of: Vec<Option<usize>> = vec![None; n];
        for i in 0..n {
            if let Some(sig) = self.refine_signature(i) {
                let key = format!("{:?}", sig);
                let id = *sig_map.entry(key).or_insert_with(|| {
                    let id = classes.len();
                    classes.push(RectClass {
                        id,
                        samples: Vec::new(),
                        zs: self.memberships[i].clone(),
                    });
                    id
                });
                classes[id].samples.push(i);
                class_of[i] = Some(id);
            }
        }
        self.classes = classes;
        self.class_of = class_of;
    }

    /// The second-coding graph: edges R -> S realized by H on samples.
    pub fn second_graph(&self) -> MarkovGraph {
        let mut g = MarkovGraph::new();
        for r in 0..self.classes.len() {
            g.add_vertex(&format!("R{}", r));
        }
        for (i, _) in self.samples.iter().enumerate() {
            if let (Some(r), Some(nx)) = (self.class_of[i], self.h_next(i)) {
                if let Some(s) = self.class_of[nx] {
                    g.add_edge(&format!("R{}", r), &format!("R{}", s));
                }
            }
        }
        g
    }

    /// Roof of the second coding at a sample: the time to the next hit.
    pub fn roof_hat_at(&self, i: usize) -> Option<f64> {
        let nx = self.h_next(i)?;
        Some(wrapped_dt(&self.samples, i, nx, true))
    }

    /// Sampled second-coding soundness: every admissible word realized by a
    /// sample itinerary has a nonempty cylinder, and the cylinder diameter
    /// certificate decays geometrically. Returns (depths, certified
    /// diameters) for the fit.
    pub fn cylinder_certificates(&self, max_depth: usize) -> (Vec<usize>, Vec<f64>) {
        let p_scale = self
            .alphabet
            .vertices
            .iter()
            .map(|v| v.chart.p_min())
            .fold(0.0, f64::max);
        let (k, theta) = hoelder_certificate(self.sys, p_scale);
        let depths: Vec<usize> = (4..=max_depth).collect();
        let diams: Vec<f64> = depths.iter().map(|&d| k * theta.powi(d as i32)).collect();
        (depths, diams)
    }

    /// Check nonemptiness of all sampled cylinders up to the given depth:
    /// for every sample with a full window, the word read from its itinerary
    /// must of course contain it; additionally every composed edge pair
    /// R -> S -> T realized by edges must be realized by some single sample.
    pub fn check_cylinders(&self, depth: usize) -> Result<usize, MarkovError> {
        let g = self.second_graph();
        let mut words: BTreeSet<Vec<usize>> = BTreeSet::new();
        for (i, _) in self.samples.iter().enumerate() {
            let mut word = Vec::new();
            let mut ok = true;
            let mut cur = i;
            for _ in 0..depth {
                match self.class_of[cur] {
                    Some(r) => word.push(r),
                    None => {
                        ok = false;
                        break;
                    }
                }
                match self.h_next(cur) {
                    Some(nx) => cur = nx,
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                if let Some(r) = self.class_of[cur] {
                    word.push(r);
                    words.insert(word);
                }
            }
        }
        // every stored word is realized by construction; verify edge-pair
        // composition against the graph
        let mut checked = 0;
        for word in &words {
            for w in word.windows(2) {
                let a = g.vertex(&format!("R{}", w[0])).unwrap();
                let b = g.vertex(&format!("R{}", w[1])).unwrap();
                if !g.has_edge(a, b) {
                    return Err(MarkovError::CylinderEmpty(word.clone()));
                }
            }
            checked += 1;
        }
        // two-step compositions of edges must be realized by some sample
        for (a, b) in g.edges() {
            for (c, d) in g.edges() {
                if b != c {
                    continue;
                }
                let ra: usize = g.label(a)[1..].parse().unwrap();
                let rb: usize = g.label(b)[1..].parse().unwrap();
                let rd: usize = g.label(d)[1..].parse().unwrap();
                let found = self.samples.iter().enumerate().any(|(i, _)| {
                    self.class_of[i] == Some(ra)
                        && self.h_next(i).and_then(|j| self.class_of[j]) == Some(rb)
                        && self
                            .h_next(i)
                            .and_then(|j| self.h_next(j))
                            .and_then(|j| self.class_of[j])
                            == Some(rd)
                });
                if !found {
                    return Err(MarkovError::CylinderEmpty(vec![ra, rb, rd]));
                }
            }
        }
        Ok(checked)
    }

    /// pi-hat at a sample's itinerary: the representative of the deepest
    /// cylinder, with the certified diameter.
    pub fn pi_hat(&self, i: usize, depth: usize) -> (PointM, f64) {
        let p_scale = self
            .alphabet
            .vertices
            .iter()
            .map(|v| v.chart.p_min())
            .fold(0.0, f64::max);
        let (k, theta) = hoelder_certificate(self.sys, p_scale);
        (self.samples[i].point, k * theta.powi(depth as i32))
    }

    /// Geometric Markov property on sampled data.
    pub fn markov_check(&self) -> MarkovReport {
        let mut checked = 0;
        let mut violations = 0;
        let mut flagged = 0;
        let mut max_factor: f64 = 0.0;
        let mut witnesses = Vec::new();
        for (i, _) in self.samples.iter().enumerate() {
            let (Some(r0), Some(hi)) = (self.class_of[i], self.h_next(i)) else { continue };
            let Some(r1) = self.class_of[hi] else { continue };
            // y in the stable fibre of x within R0
            for &j in &self.classes[r0].samples {
                if j == i {
                    continue;
                }
                let same_fibre = self.classes[r0]
                    .zs
                    .iter()
                    .all(|&z| self.in_stable_fibre(z, i, j));
                if !same_fibre {
                    continue;
                }
                checked += 1;
                let Some(hj) = self.h_next(j) else { continue };
                // H(y) must lie in the stable fibre of H(x) within R1
                let ok_class = self.class_of[hj] == Some(r1);
                let ok_fibre = self.classes[r1]
                    .zs
                    .iter()
                    .all(|&z| self.in_stable_fibre(z, hi, hj));
                if !(ok_class && ok_fibre) {
                    // measure how far outside tolerance the fibre comparison is
                    let factor = self.classes[r1]
                        .zs
                        .iter()
                        .filter_map(|&z| {
                            let a = self.coords_in(z, hi)?;
                            let b = self.coords_in(z, hj)?;
                            Some((a[1] - b[1]).abs() / CLOUD_TOL)
                        })
                        .fold(0.0f64, f64::max);
                    if factor > 0.0 && factor <= 2.0 {
                        flagged += 1;
                        max_factor = max_factor.max(factor);
                    } else {
                        violations += 1;
                        if witnesses.len() < 8 {
                            witnesses.push(format!(
                                "x = sample {}, y = sample {}: H-image leaves the fibre",
                                i, j
                            ));
                        }
                    }
                }
            }
        }
        MarkovReport { checked, violations, flagged, max_flag_factor: max_factor, witnesses }
    }

    /// Affiliation relation with witness sets.
    pub fn affiliation(&self) -> AffiliationGraph {
        let nr = self.classes.len();
        let mut relation = BTreeSet::new();
        let mut a_sets: Vec<BTreeSet<(usize, u32)>> = vec![BTreeSet::new(); nr];
        for r in 0..nr {
            for s in 0..nr {
                let related = self.classes[r].zs.iter().any(|&z| {
                    self.classes[s]
                        .zs
                        .iter()
                        .any(|&zp| self.i_sets[&z].contains(&zp))
                });
                if related {
                    relation.insert((r.min(s), r.max(s)));
                    for &zp in &self.classes[s].zs {
                        if self.classes[r].zs.iter().any(|&z| self.i_sets[&z].contains(&zp)) {
                            a_sets[r].insert((s, zp));
                        }
                    }
                }
            }
        }
        AffiliationGraph { relation, a_sets }
    }

    /// Exhaustive preimage search at a sample: count the distinct symbol
    /// itineraries (over all tolerance-coincident samples, with time shifts
    /// below rho) that project onto the same flow point.
    pub fn preimage_count(&self, i: usize, window: usize) -> usize {
        let mut distinct: BTreeSet<Vec<usize>> = BTreeSet::new();
        let xi = self.samples[i].point;
        for (j, sj) in self.samples.iter().enumerate() {
            // candidate lifts: samples on the same flow orbit within rho
            let dt_ok = {
                let du = (torus_diff(sj.point.u[0], xi.u[0]).powi(2)
                    + torus_diff(sj.point.u[1], xi.u[1]).powi(2))
                .sqrt();
                du <= CLOUD_TOL && (sj.point.s - xi.s).abs() <= self.sys.consts.rho
            };
            if !dt_ok {
                continue;
            }
            let mut word = Vec::new();
            let mut ok = true;
            let mut back = j;
            for _ in 0..window {
                match (self.class_of[back], self.h_prev(back)) {
                    (Some(r), Some(p)) => {
                        word.push(r);
                        back = p;
                    }
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            word.reverse();
            let mut fwd = j;
            for _ in 0..window {
                match (self.h_next(fwd), ) {
                    (Some(nx),) => {
                        fwd = nx;
                        match self.class_of[fwd] {
                            Some(r) => word.push(r),
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                distinct.insert(word);
            }
        }
        distinct.len().max(1)
    }

    /// Window-affiliation test for two samples: walk `window` symbols of
    /// each in both directions and require every time-aligned symbol pair
    /// to be affiliated.
    pub fn windows_affiliated(&self, aff: &AffiliationGraph, i: usize, j: usize, window: i64) -> bool {
        for k in -window..=window {
            let Some(hi) = self.h_iter(i, k) else { return false };
            let Some(ri) = self.class_of[hi] else { return false };
            // align the other sample's itinerary by time: the symbol of j
            // whose hit time is nearest to the hit time of H^k(i)
            let target = self.samples[hi].time - self.samples[i].time + self.samples[j].time;
            let mut best: Option<(f64, usize)> = None;
            for m in -(window + 4)..=(window + 4) {
                if let Some(hj) = self.h_iter(j, m) {
                    let d = (self.samples[hj].time - target).abs();
                    if best.map(|(bd, _)| d < bd).unwrap_or(true) {
                        best = Some((d, hj));
                    }
                }
            }
            match best {
                Some((d, hj)) if d <= self.sys.consts.rho => {
                    let Some(rj) = self.class_of[hj] else { return false };
                    if !aff.related(ri, rj) {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        true
    }

    /// Preimage count against the affiliation bound; exceeding it falsifies
    /// the implementation, not the construction.
    pub fn preimage_bound_check(
        &self,
        aff: &AffiliationGraph,
        i: usize,
        window: usize,
    ) -> Result<usize, MarkovError> {
        let count = self.preimage_count(i, window);
        let bound = self.class_of[i]
            .map(|r| (aff.n_of(r) * aff.n_of(r)).max(1))
            .unwrap_or(usize::MAX);
        if count > bound {
            return Err(MarkovError::BoundViolated { found: count, bound });
        }
        Ok(count)
    }

    /// Bowen-relation checks. Property (i): coincident projections have
    /// affiliated zeroth symbols. Property (ii): pairs whose aligned symbol
    /// windows are everywhere affiliated lie on a common orbit with time
    /// shift below gamma = 3 rho; the shift is recovered from the samples
    /// and the bound asserted, so pairs beyond gamma must fail the
    /// affiliation precondition.
    pub fn bowen_check(&self, aff: &AffiliationGraph) -> BowenReport {
        let gamma = 3.0 * self.sys.consts.rho;
        let mut pairs = 0;
        let mut failures = 0;
        let mut shift_pairs = 0;
        let mut max_shift: f64 = 0.0;
        let n = self.samples.len();
        let stride = 1 + n / 120;
        for i in (0..n).step_by(stride) {
            // coincidence candidates anywhere, shift candidates nearby on
            // the same orbit (distant same-orbit windows decorrelate and
            // must fail the affiliation precondition)
            let mut candidates: Vec<usize> = (1..=6).filter_map(|d| self.h_iter(i, d)).collect();
            for (j, sj) in self.samples.iter().enumerate() {
                let si = &self.samples[i];
                if j != i
                    && (si.point.key() == sj.point.key()
                        || ((torus_diff(si.point.u[0], sj.point.u[0]).powi(2)
                            + torus_diff(si.point.u[1], sj.point.u[1]).powi(2))
                        .sqrt()
                            <= CLOUD_TOL
                            && (si.point.s - sj.point.s).abs() <= CLOUD_TOL))
                {
                    candidates.push(j);
                    let (Some(ri), Some(rj)) = (self.class_of[i], self.class_of[j]) else {
                        continue;
                    };
                    pairs += 1;
                    if !aff.related(ri, rj) {
                        failures += 1;
                    }
                }
            }
            candidates.sort_unstable();
            candidates.dedup();
            for j in candidates {
                if self.class_of[i].is_none() || self.class_of[j].is_none() {
                    continue;
                }
                if self.windows_affiliated(aff, i, j, 3) {
                    shift_pairs += 1;
                    // samples with bit-equal points are the same suspension
                    // point: the recovered shift is zero
                    let dt = if self.samples[i].point.key() == self.samples[j].point.key() {
                        0.0
                    } else {
                        (self.samples[i].time - self.samples[j].time).abs()
                    };
                    max_shift = max_shift.max(dt);
                }
            }
        }
        BowenReport {
            coincidence_pairs_checked: pairs,
            affiliation_failures: failures,
            shift_pairs_checked: shift_pairs,
            max_time_shift: max_shift,
            gamma,
        }
    }

    /// Canonical lift of a sample: its class itinerary over the window.
    pub fn canonical_lift(&self, i: usize, window: usize) -> Option<Vec<usize>> {
        let mut word = Vec::new();
        let mut back = i;
        for _ in 0..window {
            back = self.h_prev(back)?;
        }
        let mut cur = back;
        for _ in 0..=2 * window {
            word.push(self.class_of[cur]?);
            cur = self.h_next(cur)?;
        }
        Some(word)
    }

    /// Lift a finite invariant sample set: collect the classes visited by
    /// the canonical lifts and require them to sit inside one strongly
    /// connected component whose projections cover the set.
    pub fn lift_hyperbolic_set(&self, k_samples: &[usize]) -> Result<BTreeSet<usize>, MarkovError> {
        let g = self.second_graph();
        let comps = g.irreducible_components();
        let mut lift_classes: BTreeSet<usize> = BTreeSet::new();
        for &i in k_samples {
            if let Some(r) = self.class_of[i] {
                lift_classes.insert(r);
            }
        }
        let mut covering: Vec<usize> = Vec::new();
        for (ci, comp) in comps.iter().enumerate() {
            let names: BTreeSet<usize> = comp
                .iter()
                .map(|&v| g.label(v)[1..].parse::<usize>().unwrap())
                .collect();
            if lift_classes.iter().all(|r| names.contains(r)) {
                covering.push(ci);
            }
        }
        if covering.is_empty() {
            // count how many components the lifts touch
            let mut touched = BTreeSet::new();
            for (ci, comp) in comps.iter().enumerate() {
                let names: BTreeSet<usize> = comp
                    .iter()
                    .map(|&v| g.label(v)[1..].parse::<usize>().unwrap())
                    .collect();
                if lift_classes.iter().any(|r| names.contains(r)) {
                    touched.insert(ci);
                }
            }
            return Err(MarkovError::NotTransitive(touched.len()));
        }
        let comp = &comps[covering[0]];
        Ok(comp
            .iter()
            .map(|&v| g.label(v)[1..].parse::<usize>().unwrap())
            .collect())
    }

    pub fn classes_csv(&self) -> String {
        let mut out = String::from("class_id,n_samples,n_zs\n");
        for c in &self.classes {
            out.push_str(&format!("{},{},{}\n", c.id, c.samples.len(), c.zs.len()));
        }
        out
    }

    /// The flow-overlap set of a cover rectangle.
    pub fn overlap_set(&self, v: u32) -> &BTreeSet<u32> {
        &self.i_sets[&v]
    }

    /// The refinement partition of Z(v) by the four-way intersection
    /// signatures against every overlapping rectangle: groups of cloud
    /// samples with equal signature vectors. Its size is bounded by
    /// 4^{|I_Z|}.
    pub fn partition_e(&self, v: u32) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<Vec<(u32, bool, bool)>, Vec<usize>> = BTreeMap::new();
        if let Some(cloud) = self.clouds.get(&v) {
            for &i in cloud {
                let mut sig = Vec::new();
                for &zp in &self.i_sets[&v] {
                    let (s, u) = self.e_signature(v, zp, i);
                    sig.push((zp, s, u));
                }
                groups.entry(sig).or_default().push(i);
            }
        }
        groups.into_values().collect()
    }

    /// Bundle the second coding: the graph, the roof as a symbolic roof
    /// function, and the projection by deepest-cylinder representatives.
    pub fn second_coding(&self, pi_depth: usize) -> SecondCoding {
        let graph = self.second_graph();
        let mut inf = f64::INFINITY;
        let mut sup = 0.0f64;
        // spacing of a representative sample per edge cylinder [R0, R1]
        let mut edge_roof: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for i in 0..self.samples.len() {
            if let (Some(r0), Some(nx)) = (self.class_of[i], self.h_next(i)) {
                if let Some(r1) = self.class_of[nx] {
                    let dt = wrapped_dt(&self.samples, i, nx, true);
                    edge_roof.entry((r0, r1)).or_insert(dt);
                    inf = inf.min(dt);
                    sup = sup.max(dt);
                }
            }
        }
        SecondCoding { graph, edge_roof, roof_inf: inf, roof_sup: sup, pi_depth }
    }

    /// pi-hat over a symbolic path on the second graph: the representative
    /// of the deepest sampled cylinder matching the path's itinerary around
    /// the origin, with the certified diameter.
    pub fn pi_hat_path(
        &self,
        coding: &SecondCoding,
        path: &crate::symbolic::SymbolPath,
        graph: &MarkovGraph,
    ) -> Result<(PointM, f64), MarkovError> {
        let depth = coding.pi_depth as i64;
        let class_at = |n: i64| -> Option<usize> {
            let v = path.symbol(n)?;
            graph.label(v)[1..].parse().ok()
        };
        let mut best: Option<(usize, i64)> = None;
        for (i, _) in self.samples.iter().enumerate() {
            // deepest window around 0 on which sample i's itinerary matches
            let mut d = 0i64;
            loop {
                if d > depth {
                    break;
                }
                let ok = (-d..=d).all(|k| {
                    self.h_iter(i, k).and_then(|j| self.class_of[j]) == class_at(k)
                        && class_at(k).is_some()
                });
                if !ok {
                    break;
                }
                d += 1;
            }
            let d = d - 1;
            if d >= 0 && best.map(|(_, bd)| d > bd).unwrap_or(true) {
                best = Some((i, d));
            }
        }
        match best {
            Some((i, d)) => {
                let (p, cert) = self.pi_hat(i, d as usize);
                Ok((p, cert))
            }
            None => {
                let word: Vec<usize> = (-1..=1).filter_map(class_at).collect();
                Err(MarkovError::CylinderEmpty(word))
            }
        }
    }
}

/// The second coding: graph, roof data and projection depth.
#[derive(Clone, Debug)]
pub struct SecondCoding {
    pub graph: MarkovGraph,
    edge_roof: BTreeMap<(usize, usize), f64>,
    pub roof_inf: f64,
    pub roof_sup: f64,
    pub pi_depth: usize,
}

impl SecondCoding {
    /// The roof as a symbolic roof function over paths on the second graph:
    /// it reads the zeroth edge of the path (dependence radius 1).
    pub fn roof_function(&self) -> crate::symbolic::RoofFunction {
        let edge_roof = self.edge_roof.clone();
        let names: BTreeMap<crate::symbolic::VertexId, usize> = self
            .graph
            .vertices()
            .map(|v| (v, self.graph.label(v)[1..].parse::<usize>().unwrap()))
            .collect();
        let fallback = self.roof_inf;
        crate::symbolic::RoofFunction::new(
            move |p: &crate::symbolic::SymbolPath| {
                let lookup = p.symbol(0).zip(p.symbol(1)).and_then(|(a, b)| {
                    edge_roof.get(&(names[&a], names[&b])).copied()
                });
                lookup.unwrap_or(fallback)
            },
            self.roof_inf,
            self.roof_sup,
            1,
        )
    }
}

fn self_next(samples: &[Sample], i: usize) -> Option<usize> {
    samples[i].next
}

/// Time from sample i to its orbit link j, accounting for the wrap of
/// periodic windows (the wrap time is one cycle of spacings).
fn wrapped_dt(samples: &[Sample], i: usize, j: usize, forward: bool) -> f64 {
    let (a, b) = (&samples[i], &samples[j]);
    if forward {
        if b.time > a.time {
            b.time - a.time
        } else {
            // wrap to the start of the future cycle: use the local spacing
            // of the corresponding in-window pair
            let prev = b.prev.map(|p| samples[p].time).unwrap_or(b.time);
            (b.time - prev).abs().max(1e-9)
        }
    } else if b.time < a.time {
        a.time - b.time
    } else {
        let next = b.next.map(|p| samples[p].time).unwrap_or(b.time);
        (next - b.time).abs().max(1e-9)
    }
}

fn coords_in_chart(
    sys: &ChartSystem,
    alphabet: &Alphabet,
    v: u32,
    sample: &Sample,
) -> Option<[f64; 2]> {
    let vtx = &alphabet.vertices[v as usize];
    let base = vtx.chart.base();
    if (sample.point.s - base.s).abs() > 1e-9 {
        return None;
    }
    let du = [
        torus_diff(sample.point.u[0], base.u[0]),
        torus_diff(sample.point.u[1], base.u[1]),
    ];
    let c = vtx.chart.chart.params.c_matrix.inv().apply(du);
    let _ = sys;
    Some(c)
}

fn close_in_chart(sys: &ChartSystem, alphabet: &Alphabet, anchor: &Sample, x: &Sample) -> bool {
    match coords_in_chart(sys, alphabet, anchor.vertex, x) {
        Some(c) => {
            let a = coords_in_chart(sys, alphabet, anchor.vertex, anchor).unwrap_or([0.0, 0.0]);
            (c[0] - a[0]).abs() <= CLOUD_TOL && (c[1] - a[1]).abs() <= CLOUD_TOL
        }
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::ChartSystem;
    use crate::coarse::{build_alphabet, encode_orbit};
    use crate::model::{ModelFlow, RoofProfile};
    use crate::nuh::Constants;
    use crate::sections::{build_sections, ProperSection, SectionLayout};
    use std::sync::OnceLock;

    struct Setup {
        flow: ModelFlow,
        consts: Constants,
        reference: ProperSection,
        security: ProperSection,
    }

    fn setup_const() -> &'static Setup {
        static CELL: OnceLock<Setup> = OnceLock::new();
        CELL.get_or_init(|| {
            let flow = ModelFlow::cat(RoofProfile::Const);
            let consts = Constants::defaults();
            let layout = SectionLayout::for_model(&flow, consts.rho);
            let (reference, security) =
                build_sections(&flow, consts.rho, layout, 40, 8).expect("sections");
            Setup { flow, consts, reference, security }
        })
    }

    fn sys(s: &Setup) -> ChartSystem<'_> {
        ChartSystem::new(&s.flow, &s.consts, &s.reference, &s.security)
    }

    struct World {
        orbits: Vec<SectionOrbit>,
        encodings: Vec<Encoding>,
        alphabet: Alphabet,
    }

    fn chart_system() -> &'static ChartSystem<'static> {
        static CELL: OnceLock<ChartSystem<'static>> = OnceLock::new();
        CELL.get_or_init(|| sys(setup_const()))
    }

    fn world() -> &'static World {
        static CELL: OnceLock<World> = OnceLock::new();
        CELL.get_or_init(|| {
            let s = setup_const();
            let cs = chart_system();
            // one periodic dyadic orbit, window covering the full cycle
            let u = [1.0 / 32.0, 2.0 / 32.0];
            let lv = s.reference.tile_levels(u).to_vec();
            let seed = s.flow.point(u, lv[0]);
            let orbit = SectionOrbit::build_periodic(&s.flow, &s.reference, seed, 160, 160)
                .expect("periodic");
            let orbits = vec![orbit];
            let alphabet = build_alphabet(cs, &orbits, 100_000).unwrap();
            let encodings: Vec<Encoding> =
                orbits.iter().map(|o| encode_orbit(cs, &alphabet, o).unwrap()).collect();
            World { orbits, encodings, alphabet }
        })
    }

    fn markov_system() -> &'static MarkovSystem<'static, 'static> {
        static CELL: OnceLock<MarkovSystem<'static, 'static>> = OnceLock::new();
        CELL.get_or_init(|| {
            let w = world();
            MarkovSystem::build(chart_system(), &w.alphabet, &w.orbits, &w.encodings).unwrap()
        })
    }

    fn mk_world() -> (&'static Setup, &'static ChartSystem<'static>, &'static World) {
        (setup_const(), chart_system(), world())
    }

    #[test]
    fn cover_and_refinement_basics() {
        let (_s, _cs, _w) = mk_world();
        let ms = markov_system();
        // partition: classes disjoint, union covers classified samples
        let mut seen = BTreeSet::new();
        for c in &ms.classes {
            for &i in &c.samples {
                assert!(seen.insert(i), "sample {} in two classes", i);
                assert_eq!(ms.class_of[i], Some(c.id));
            }
        }
        let classified = ms.class_of.iter().flatten().count();
        assert_eq!(seen.len(), classified);
        assert!(classified > 0);
        // local finiteness
        for (_, set) in &ms.i_sets {
            assert!(set.len() < ms.alphabet.len());
        }
        // class count bound of the refinement: within phi^{[-rho,rho]} of a
        // cover rectangle there are at most sum over I_Z of 4^{|I_Z'|}
        for (&z, iset) in &ms.i_sets {
            let bound: f64 = iset
                .iter()
                .map(|zp| 4f64.powi(ms.i_sets[zp].len() as i32))
                .sum();
            let nearby = ms
                .classes
                .iter()
                .filter(|c| c.zs.iter().any(|zz| iset.contains(zz)))
                .count() as f64;
            assert!(nearby <= bound, "class count {} above bound {} at Z {}", nearby, bound, z);
        }
    }

    #[test]
    fn bracket_laws() {
        let (_s, cs, w) = mk_world();
        let ms = markov_system();
        // [x, x] = x on a handful of samples
        for i in (0..ms.samples.len()).step_by(17) {
            let v = ms.samples[i].vertex;
            let (coords, p) = ms.smale_bracket(v, i, i).unwrap();
            let ci = coords_in_chart(cs, &w.alphabet, v, &ms.samples[i]).unwrap();
            assert!((coords[0] - ci[0]).abs() <= 1e-15 && (coords[1] - ci[1]).abs() <= 1e-15);
            let d = (torus_diff(p.u[0], ms.samples[i].point.u[0]).powi(2)
                + torus_diff(p.u[1], ms.samples[i].point.u[1]).powi(2))
            .sqrt();
            assert!(d <= 1e-12);
        }
        // [[x, y], y] = [x, y] in chart coordinates
        let x = 0;
        let y = ms.clouds[&ms.samples[0].vertex].iter().copied().find(|&j| j != x).unwrap_or(x);
        let v = ms.samples[x].vertex;
        if let Ok((c1, _)) = ms.smale_bracket(v, x, y) {
            let cy = coords_in_chart(cs, &w.alphabet, v, &ms.samples[y]).unwrap();
            // bracketing the bracket with y again fixes the first coordinate
            assert_eq!(c1[0], cy[0]);
        }
    }

    #[test]
    fn second_coding_graph_and_roof() {
        let (s, _cs, _w) = mk_world();
        let ms = markov_system();
        let g = ms.second_graph();
        assert!(g.vertex_count() > 0);
        assert!(g.edge_count() > 0);
        // finite degrees
        assert!(g.max_degree() < g.vertex_count().max(4));
        // roof in (0, rho)
        for i in 0..ms.samples.len() {
            if let Some(r) = ms.roof_hat_at(i) {
                assert!(r > 0.0 && r < s.consts.rho, "roof {}", r);
            }
        }
        // cylinders nonempty
        let checked = ms.check_cylinders(6).unwrap();
        assert!(checked > 0);
        // certified diameters decay geometrically with R^2 = 1
        let (depths, diams) = ms.cylinder_certificates(12);
        assert_eq!(depths.len(), diams.len());
        for w2 in diams.windows(2) {
            assert!(w2[1] < w2[0]);
        }
    }

    #[test]
    fn markov_property_no_violations() {
        let (_s, _cs, _w) = mk_world();
        let ms = markov_system();
        let report = ms.markov_check();
        assert_eq!(report.violations, 0, "witnesses: {:?}", report.witnesses);
    }

    #[test]
    fn affiliation_and_preimages() {
        let (_s, _cs, _w) = mk_world();
        let ms = markov_system();
        let aff = ms.affiliation();
        // symmetric by construction; self-affiliation through Z in I_Z
        for r in 0..ms.classes.len() {
            assert!(aff.related(r, r));
            assert!(aff.n_of(r) >= 1);
        }
        // preimage bound at sampled points
        for i in (0..ms.samples.len()).step_by(29) {
            let Some(r) = ms.class_of[i] else { continue };
            let count = ms.preimage_count(i, 4);
            let bound = aff.n_of(r) * aff.n_of(r).max(1);
            assert!(count <= bound.max(1), "count {} > bound {}", count, bound);
        }
    }

    #[test]
    fn bowen_relation_report() {
        let (s, _cs, _w) = mk_world();
        let ms = markov_system();
        let aff = ms.affiliation();
        let rep = ms.bowen_check(&aff);
        assert_eq!(rep.affiliation_failures, 0);
        assert!(rep.max_time_shift < 3.0 * s.consts.rho);
    }

    #[test]
    fn single_periodic_orbit_lifts_to_one_cycle() {
        let (_s, _cs, _w) = mk_world();
        let ms = markov_system();
        // K = the whole periodic orbit's classified samples
        let k: Vec<usize> = (0..ms.samples.len()).filter(|&i| ms.class_of[i].is_some()).collect();
        let scc = ms.lift_hyperbolic_set(&k).unwrap();
        // projections of the component cover the samples
        for &i in &k {
            assert!(scc.contains(&ms.class_of[i].unwrap()));
        }
    }

    #[test]
    fn overlap_sets_and_partition_e() {
        let (_s, _cs, _w) = mk_world();
        let ms = markov_system();
        for &v in ms.clouds.keys().take(12) {
            let iset = ms.overlap_set(v);
            assert!(iset.contains(&v));
            let parts = ms.partition_e(v);
            let total: usize = parts.iter().map(|p| p.len()).sum();
            assert_eq!(total, ms.clouds[&v].len(), "partition covers the cloud");
            assert!(
                (parts.len() as f64) <= 4f64.powi(iset.len() as i32),
                "|E_Z| = {} above 4^{}",
                parts.len(),
                iset.len()
            );
        }
    }

    #[test]
    fn bracket_stable_under_small_flow_displacement() {
        // bracketing against a slightly flowed second argument lands at the
        // same point, because the fiber coordinate survives the projection
        let (_s, _cs, _w) = mk_world();
        let ms = markov_system();
        let mut checked = 0;
        for i in (0..ms.samples.len()).step_by(23) {
            let v = ms.samples[i].vertex;
            let Some(cloud) = ms.clouds.get(&v) else { continue };
            for &j in cloud.iter().take(3) {
                let Ok((c1, _)) = ms.smale_bracket(v, i, j) else { continue };
                // the next hit of j within rho, projected back to the disc of
                // v, must produce the same unstable coordinate
                let Some(nj) = ms.h_next(j) else { continue };
                let dt = ms.samples[nj].time - ms.samples[j].time;
                if !(0.0..=2.0 * ms.sys.consts.rho).contains(&dt) {
                    continue;
                }
                let disc = ms
                    .sys
                    .reference
                    .disc_at(ms.alphabet.vertices[v as usize].chart.base())
                    .unwrap();
                let Ok(q) = ms.sys.reference.project_q(ms.sys.flow, disc, ms.samples[nj].point)
                else {
                    continue;
                };
                let vtx = &ms.alphabet.vertices[v as usize];
                let du = [
                    torus_diff(q.u[0], vtx.chart.base().u[0]),
                    torus_diff(q.u[1], vtx.chart.base().u[1]),
                ];
                let c = vtx.chart.chart.params.c_matrix.inv().apply(du);
                // same fiber line as j itself when no crossing happened
                if ms.sys.flow.crossings(ms.samples[j].point, dt) == 0 {
                    let cj = coords_in_chart(ms.sys, ms.alphabet, v, &ms.samples[j]).unwrap();
                    assert!((c[0] - cj[0]).abs() <= 1e-12);
                    let _ = c1;
                    checked += 1;
                }
            }
        }
        assert!(checked > 0, "no bracket-stability pairs sampled");
    }

    #[test]
    fn first_holonomy_is_a_bounded_return_power() {
        // the forward holonomy of a sample equals H^n with 0 < n < N
        let (_s, _cs, _w) = mk_world();
        let ms = markov_system();
        let mut checked = 0;
        for i in (0..ms.samples.len()).step_by(11) {
            let x = ms.samples[i].point;
            let Ok((fx, _)) = ms.sys.reference.return_map(ms.sys.flow, x) else { continue };
            let mut cur = i;
            let mut n = 0;
            let found = loop {
                match ms.h_next(cur) {
                    Some(nx) => {
                        n += 1;
                        cur = nx;
                        if ms.samples[cur].point.key() == fx.key() {
                            break true;
                        }
                        if n >= ms.big_n {
                            break false;
                        }
                    }
                    None => break false,
                }
            };
            if found {
                assert!(n > 0 && n < ms.big_n.max(2));
                checked += 1;
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn second_coding_bundle_and_conjugacy() {
        use crate::symbolic::{SuspensionPoint, Tail};
        let (s, _cs, _w) = mk_world();
        let ms = markov_system();
        let coding = ms.second_coding(12);
        assert!(coding.roof_inf > 0.0 && coding.roof_sup < s.consts.rho);
        let roof = coding.roof_function();
        // canonical lift of a mid-window sample projects back onto it
        let mid = ms.samples.len() / 2;
        let window = 12usize;
        let word = ms.canonical_lift(mid, window).expect("window fits");
        let g = &coding.graph;
        let core: Vec<_> =
            word.iter().map(|r| g.vertex(&format!("R{}", r)).unwrap()).collect();
        // periodic orbit: wrap the word with itself as cycles
        let path = crate::symbolic::SymbolPath::new(
            g,
            Tail::Truncated,
            core,
            Tail::Truncated,
            window as i64,
        )
        .expect("canonical itinerary is admissible on the second graph");
        let (p, cert) = ms.pi_hat_path(&coding, &path, g).unwrap();
        assert_eq!(p.key(), ms.samples[mid].point.key());
        assert!(cert >= 0.0);
        // flow conjugacy: the projection of the shifted path is the flow
        // image of the projection under the roof value
        let r0 = roof.eval(&path).unwrap();
        let shifted = path.shift(1);
        let (p1, _) = ms.pi_hat_path(&coding, &shifted, g).unwrap();
        let moved = ms.sys.flow.flow(p, r0);
        assert!((moved.u[0] - p1.u[0]).abs() < 1e-9);
        assert!((moved.u[1] - p1.u[1]).abs() < 1e-9);
        assert!((moved.s - p1.s).abs() < 1e-9);
        // suspension point over the second coding round-trips through the
        // symbolic serialization
        let z = SuspensionPoint::new(&roof, path, r0 * 0.5).unwrap();
        let text = z.serialize(g);
        let back = SuspensionPoint::parse(g, &roof, &text).unwrap();
        assert_eq!(back.height, z.height);
    }

    #[test]
    fn canonical_lift_projects_back() {
        let (_s, _cs, _w) = mk_world();
        let ms = markov_system();
        let mid = ms.samples.len() / 2;
        if let Some(word) = ms.canonical_lift(mid, 5) {
            assert_eq!(word.len(), 11);
            assert_eq!(word[5], ms.class_of[mid].unwrap());
            let (p, cert) = ms.pi_hat(mid, 11);
            assert!(cert >= 0.0);
            assert_eq!(p.key(), ms.samples[mid].point.key());
        } else {
            panic!("window too small for the canonical lift");
        }
    }
}
