//! Coarse graining: the finite alphabet of double charts built from orbit
//! samples (a lazy net), and the encoder that turns a section orbit into a
//! validated pseudo-orbit over that alphabet.
//!
//! The nets are the supplied orbit samples themselves, which satisfies the
//! closeness conditions by construction with distance exactly zero; the
//! fiber lattice makes the return map exactly invertible, so consecutive
//! encoded charts meet the overlap conditions bit-exactly.

use crate::charts::{chart_csv_line, chart_csv_header, ChartError, ChartSystem, DoubleChart};
use crate::gpo::{GpoError, GpoPath};
use crate::model::{ModelFlow, PointM};
use crate::nuh::{compute_q, q_at, Constants, NuhError};
use crate::sections::{ProperSection, SectionError};
use crate::symbolic::MarkovGraph;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoarseError {
    #[error("section error: {0}")]
    Section(#[from] SectionError),
    #[error("chart error: {0}")]
    Chart(#[from] ChartError),
    #[error("parameter error: {0}")]
    Nuh(#[from] NuhError),
    #[error("gpo error: {0}")]
    Gpo(#[from] GpoError),
    #[error("alphabet exceeds the configured cap {0} (densest bucket: {1})")]
    NetOverflow(usize, String),
    #[error("surgery failed at index {0}: {1}")]
    SurgeryFailure(i64, String),
    #[error("coarse graining requires beta < 2, got {0}")]
    BetaTooLarge(f64),
    #[error("orbit is not eventually periodic within the window")]
    NoCycle,
}

/// Section orbit of a seed: a window of exact hits; tails are detected as
/// exact cycles when the window sees a repeat (period 0 = truncated, the
/// finite-horizon case of a generic seed).
#[derive(Clone, Debug)]
pub struct SectionOrbit {
    pub hits: Vec<PointM>,
    /// cumulative hit times; times[origin] = 0
    pub times: Vec<f64>,
    /// exact per-step return times (length len - 1); the recursions use
    /// these, not differences of the cumulative times
    pub steps: Vec<f64>,
    pub origin: usize,
    /// hits[len-1] == hits[len-1 - future_period] when nonzero
    pub future_period: usize,
    /// hits[0] == hits[past_period] when nonzero
    pub past_period: usize,
}

impl SectionOrbit {
    /// Build the orbit window around a seed on the reference section.
    /// Eventual periodicity is detected by exact key repeats.
    pub fn build(
        flow: &ModelFlow,
        section: &ProperSection,
        seed: PointM,
        back: usize,
        fwd: usize,
    ) -> Result<SectionOrbit, CoarseError> {
        let mut forward = vec![seed];
        let mut ftimes = vec![0.0];
        let mut fsteps = Vec::new();
        let mut x = seed;
        for _ in 0..fwd {
            let (fx, dt) = section.return_map(flow, x)?;
            ftimes.push(ftimes.last().unwrap() + dt);
            fsteps.push(dt);
            forward.push(fx);
            x = fx;
        }
        let mut backward = Vec::new();
        let mut btimes = Vec::new();
        let mut bsteps = Vec::new();
        let mut y = seed;
        let mut t = 0.0;
        for _ in 0..back {
            let (by, dt) = section.return_map_inv(flow, y)?;
            t -= dt;
            backward.push(by);
            btimes.push(t);
            bsteps.push(dt);
            y = by;
        }
        backward.reverse();
        btimes.reverse();
        bsteps.reverse();
        let mut hits = backward;
        let origin = hits.len();
        hits.extend(forward);
        let mut times = btimes;
        times.extend(ftimes);
        let mut steps = bsteps;
        steps.extend(fsteps);

        let n = hits.len();
        let future_period = {
            let key = hits[n - 1].key();
            (origin..n - 1).rev().find(|&j| hits[j].key() == key).map(|j| n - 1 - j).unwrap_or(0)
        };
        let past_period = {
            let key = hits[0].key();
            (1..=origin).find(|&j| hits[j].key() == key).unwrap_or(0)
        };
        Ok(SectionOrbit { hits, times, steps, origin, future_period, past_period })
    }

    /// Like `build`, but errors unless both tails closed into exact cycles.
    pub fn build_periodic(
        flow: &ModelFlow,
        section: &ProperSection,
        seed: PointM,
        back: usize,
        fwd: usize,
    ) -> Result<SectionOrbit, CoarseError> {
        let o = Self::build(flow, section, seed, back, fwd)?;
        if o.future_period == 0 || o.past_period == 0 {
            return Err(CoarseError::NoCycle);
        }
        Ok(o)
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    /// Exact return-time spacings.
    pub fn spacings(&self) -> Vec<f64> {
        self.steps.clone()
    }
}

/// Validate that a seed's orbit stays clear of the fiber gaps of the
/// section over the requested window.
pub fn seed_is_clear(
    flow: &ModelFlow,
    section: &ProperSection,
    seed: PointM,
    back: usize,
    fwd: usize,
) -> bool {
    SectionOrbit::build(flow, section, seed, back, fwd).is_ok()
}

/// Bucket of the precompactness net: dyadic exponents of the inverse-norm at
/// the three positions, of Q, and of q.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct NetIndex {
    pub l: [i64; 3],
    pub m: i64,
    pub j: i64,
}

/// Alphabet vertex: a double chart with its bucket tag and the exact keys of
/// the three-point window that identifies its net point.
#[derive(Clone, Debug)]
pub struct AlphabetVertex {
    pub chart: DoubleChart,
    pub net: NetIndex,
    pub q_local: f64,
}

type VertexKey = ((u64, u64, u64), u64, u64);

/// Finite alphabet of double charts with the edge graph realized by the
/// supplied orbits.
#[derive(Default)]
pub struct Alphabet {
    pub vertices: Vec<AlphabetVertex>,
    pub edges: BTreeSet<(u32, u32)>,
    index: HashMap<VertexKey, u32>,
}

impl Alphabet {
    fn key(chart: &DoubleChart) -> VertexKey {
        (chart.base().key(), chart.ps.to_bits(), chart.pu.to_bits())
    }

    pub fn lookup(&self, chart: &DoubleChart) -> Option<u32> {
        self.index.get(&Self::key(chart)).copied()
    }

    fn insert(&mut self, v: AlphabetVertex) -> u32 {
        let key = Self::key(&v.chart);
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.vertices.len() as u32;
        self.index.insert(key, id);
        self.vertices.push(v);
        id
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Discreteness count: vertices with both sizes above the threshold.
    pub fn count_above(&self, t: f64) -> usize {
        self.vertices.iter().filter(|v| v.chart.ps > t && v.chart.pu > t).count()
    }

    /// Edge graph in the shared graph format.
    pub fn to_graph(&self) -> MarkovGraph {
        let mut g = MarkovGraph::new();
        for (i, _) in self.vertices.iter().enumerate() {
            g.add_vertex(&format!("v{}", i));
        }
        for &(a, b) in &self.edges {
            g.add_edge(&format!("v{}", a), &format!("v{}", b));
        }
        g
    }

    pub fn charts_csv(&self) -> String {
        let mut out = String::from(chart_csv_header());
        for v in &self.vertices {
            out.push_str(&chart_csv_line(&v.chart));
        }
        out
    }
}

/// Per-index encoder trace entry.
#[derive(Clone, Debug, serde::Serialize)]
pub struct TraceEntry {
    pub index: i64,
    pub cap: f64,
    pub p_s: f64,
    pub p_u: f64,
    pub a_n: f64,
    /// classification by the growth rule (reported); capped indices are the
    /// maximal ones
    pub maximal_s: bool,
    pub maximal_u: bool,
}

/// Encoder output: the pseudo-orbit, the vertex ids, and the trace.
pub struct Encoding {
    pub gpo: GpoPath,
    pub vertex_ids: Vec<u32>,
    pub trace: Vec<TraceEntry>,
    /// window contains at least two capped indices in each direction
    pub horizon_ok: bool,
}

/// Compute caps, transition-driven stable/unstable sizes and the trace for
/// one orbit. The backward induction `p^s_k = min(e^{eps T_k} p^s_{k+1},
/// eps Q_k)` (dually for p^u) realizes the double inequalities exactly; the
/// ratio to the spacing-driven ladder is the reported a_n.
fn surgery(
    sys: &ChartSystem,
    orbit: &SectionOrbit,
) -> Result<(Vec<DoubleChart>, Vec<TraceEntry>), CoarseError> {
    let eps = sys.consts.epsilon;
    let n = orbit.len();
    if n < 3 {
        return Err(CoarseError::SurgeryFailure(0, "window too small".into()));
    }
    // caps at every hit
    let mut caps = Vec::with_capacity(n);
    for &x in &orbit.hits {
        caps.push(eps * q_at(sys.flow, sys.consts, x)?);
    }
    // For the lazy orbit the chart windows have zero net radius, so the
    // transition times of the recursion are the return times themselves;
    // edge validation re-derives the grid minimum over the final windows.
    let spacings = orbit.spacings();
    let cap_win = crate::nuh::cap_window(
        caps.iter().cloned().fold(0.0, f64::max),
        caps.iter().cloned().fold(f64::INFINITY, f64::min),
        sys.consts,
        spacings.iter().cloned().fold(f64::INFINITY, f64::min).max(1e-6),
    );

    // backward recursion for the stable sizes, extended through the future
    // cycle (when present) far enough for the cap to engage
    let fp = orbit.future_period;
    let ext_f = if fp > 0 { cap_win + fp } else { 0 };
    let mut ps = vec![0.0; n];
    {
        // extended sequence index i in [0, n + ext_f): caps and spacings
        // repeat with period fp in the tail
        let cap_at = |i: usize| if i < n { caps[i] } else { caps[n - fp + (i - n) % fp] };
        let spc_at = |i: usize| {
            if i < n - 1 {
                spacings[i]
            } else {
                spacings[n - 1 - fp + (i - (n - 1)) % fp]
            }
        };
        let total = n + ext_f;
        let mut acc = cap_at(total - 1);
        for i in (0..total - 1).rev() {
            acc = ((eps * spc_at(i)).exp() * acc).min(cap_at(i));
            if i < n {
                ps[i] = acc;
            }
        }
        if ext_f == 0 {
            ps[n - 1] = caps[n - 1];
        }
    }
    // forward recursion for the unstable sizes, extended through the past
    // cycle when present
    let pp = orbit.past_period;
    let ext_p = if pp > 0 { cap_win + pp } else { 0 };
    let mut pu = vec![0.0; n];
    {
        let cap_at = |i: i64| {
            if i >= 0 {
                caps[i as usize]
            } else {
                caps[(((i % pp as i64) + pp as i64) % pp as i64) as usize]
            }
        };
        let spc_at = |i: i64| {
            if i >= 0 {
                spacings[i as usize]
            } else {
                spacings[(((i % pp as i64) + pp as i64) % pp as i64) as usize]
            }
        };
        let start = -(ext_p as i64);
        let mut acc = cap_at(start);
        if start == 0 {
            pu[0] = caps[0];
        }
        for i in start..(n as i64 - 1) {
            acc = ((eps * spc_at(i)).exp() * acc).min(cap_at(i + 1));
            if i + 1 >= 0 {
                pu[(i + 1) as usize] = acc;
            }
        }
    }

    // At zero net radius the transition times are the return times, so the
    // spacing-driven ladder coincides with the recursion values and the
    // shrink factors a_n are identically 1; the ratio is still computed so
    // the trace stays meaningful if the two ever diverge.
    let big_ps = ps.clone();
    let lambda_growth = (eps.powf(1.5)).exp();
    let mut charts = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(n);
    for i in 0..n {
        let a_n = ps[i] / big_ps[i];
        if !(a_n > (-eps).exp() && a_n <= 1.0 + 1e-12) {
            return Err(CoarseError::SurgeryFailure(
                i as i64 - orbit.origin as i64,
                format!("a_n = {} outside (e^-eps, 1]", a_n),
            ));
        }
        let chart = sys.double_chart(orbit.hits[i], ps[i], pu[i])?;
        let maximal_s = ps[i] == caps[i];
        let maximal_u = pu[i] == caps[i];
        let growing_tag = if i + 1 < n { big_ps[i] >= lambda_growth * big_ps[i + 1] } else { false };
        let _ = growing_tag;
        trace.push(TraceEntry {
            index: i as i64 - orbit.origin as i64,
            cap: caps[i],
            p_s: ps[i],
            p_u: pu[i],
            a_n,
            maximal_s,
            maximal_u,
        });
        charts.push(chart);
    }
    Ok((charts, trace))
}

/// Build the alphabet from orbit samples: one vertex per (net point, sizes)
/// pair realized by the encoder, edges along the orbits.
pub fn build_alphabet(
    sys: &ChartSystem,
    orbits: &[SectionOrbit],
    cap: usize,
) -> Result<Alphabet, CoarseError> {
    if sys.consts.beta >= 2.0 {
        return Err(CoarseError::BetaTooLarge(sys.consts.beta));
    }
    let mut alphabet = Alphabet::default();
    let q_horizon_hint = 40.0;
    for orbit in orbits {
        let (charts, _) = surgery(sys, orbit)?;
        let mut prev: Option<u32> = None;
        for (i, chart) in charts.iter().enumerate() {
            let x = orbit.hits[i];
            let lq = match compute_q(sys.flow, sys.consts, x, q_horizon_hint, 4) {
                Ok(lq) => lq,
                Err(NuhError::HorizonTooShort { required, .. }) => {
                    compute_q(sys.flow, sys.consts, x, required * 1.05, 4)?
                }
                Err(e) => return Err(e.into()),
            };
            let net = net_index(sys, x, lq.q)?;
            // CG3 recheck
            let h = sys.consts.h_frak();
            let ratio = (chart.p_min() / lq.q).ln();
            if !(-h - 1.0 <= ratio && ratio <= h + 1.0) {
                return Err(CoarseError::SurgeryFailure(
                    i as i64 - orbit.origin as i64,
                    format!("CG3 ratio exp({}) out of range", ratio),
                ));
            }
            let id = alphabet.insert(AlphabetVertex { chart: chart.clone(), net, q_local: lq.q });
            if alphabet.len() > cap {
                let dense = densest_bucket(&alphabet);
                return Err(CoarseError::NetOverflow(cap, dense));
            }
            if let Some(p) = prev {
                alphabet.edges.insert((p, id));
            }
            prev = Some(id);
        }
        // wrap edges for detected periodic tails
        let n = charts.len();
        if orbit.future_period > 0 {
            let fp = orbit.future_period;
            let first_of_cycle = alphabet.lookup(&charts[n - fp]).unwrap();
            let last = alphabet.lookup(&charts[n - 1]).unwrap();
            alphabet.edges.insert((last, first_of_cycle));
        }
        if orbit.past_period > 0 {
            let pp = orbit.past_period;
            let first = alphabet.lookup(&charts[0]).unwrap();
            let last_of_past = alphabet.lookup(&charts[pp - 1]).unwrap();
            alphabet.edges.insert((last_of_past, first));
        }
    }
    Ok(alphabet)
}

fn net_index(sys: &ChartSystem, x: PointM, q_local: f64) -> Result<NetIndex, CoarseError> {
    let (fx, _) = sys.reference.return_map(sys.flow, x)?;
    let (bx, _) = sys.reference.return_map_inv(sys.flow, x)?;
    let mut l = [0i64; 3];
    for (slot, p) in [(0usize, bx), (1, x), (2, fx)] {
        let h = crate::nuh::hyp_params(sys.flow, sys.consts, p)?;
        l[slot] = h.c_inv_frob.ln().floor() as i64;
    }
    let hq = crate::nuh::hyp_params(sys.flow, sys.consts, x)?;
    let m = (-hq.q_cap.ln()).floor() as i64;
    let j = (-q_local.ln()).floor() as i64;
    Ok(NetIndex { l, m, j })
}

fn densest_bucket(alphabet: &Alphabet) -> String {
    let mut counts: BTreeMap<NetIndex, usize> = BTreeMap::new();
    for v in &alphabet.vertices {
        *counts.entry(v.net).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by_key(|&(_, c)| c)
        .map(|(k, c)| format!("{:?} x{}", k, c))
        .unwrap_or_else(|| "empty".into())
}

/// Encode an orbit over a built alphabet: the charts must already be
/// vertices (the alphabet was built from at least this orbit's samples).
pub fn encode_orbit(
    sys: &ChartSystem,
    alphabet: &Alphabet,
    orbit: &SectionOrbit,
) -> Result<Encoding, CoarseError> {
    let (charts, trace) = surgery(sys, orbit)?;
    let mut vertex_ids = Vec::with_capacity(charts.len());
    for (i, chart) in charts.iter().enumerate() {
        match alphabet.lookup(chart) {
            Some(id) => vertex_ids.push(id),
            None => {
                return Err(CoarseError::SurgeryFailure(
                    i as i64 - orbit.origin as i64,
                    "chart missing from alphabet".into(),
                ))
            }
        }
    }
    let capped_s_fwd = trace.iter().filter(|t| t.index >= 0 && t.maximal_s).count();
    let capped_u_bwd = trace.iter().filter(|t| t.index <= 0 && t.maximal_u).count();
    let horizon_ok = capped_s_fwd >= 2 && capped_u_bwd >= 2;
    let gpo = GpoPath {
        charts,
        origin: orbit.origin,
        past_period: orbit.past_period,
        future_period: orbit.future_period,
    };
    Ok(Encoding { gpo, vertex_ids, trace, horizon_ok })
}

/// Tail-sum invariant: between consecutive capped indices the spacing-driven
/// sizes must sum below eps^{3/beta - 1}.
pub fn check_tail_sums(trace: &[TraceEntry], consts: &Constants) -> Result<(), CoarseError> {
    let bound = consts.epsilon.powf(3.0 / consts.beta - 1.0);
    let caps: Vec<usize> =
        trace.iter().enumerate().filter(|(_, t)| t.maximal_s).map(|(i, _)| i).collect();
    for w in caps.windows(2) {
        let sum: f64 = trace[w[0] + 1..=w[1]].iter().map(|t| t.p_s).sum();
        if sum >= bound {
            return Err(CoarseError::SurgeryFailure(
                trace[w[0]].index,
                format!("tail sum {} exceeds {}", sum, bound),
            ));
        }
    }
    Ok(())
}

/// Keep only vertices that appear in some witness encoding; sufficiency of
/// the pruned alphabet is re-verified by the caller re-encoding witnesses.
pub fn prune_relevant(alphabet: &Alphabet, witnesses: &[Encoding]) -> Alphabet {
    let mut used: BTreeSet<u32> = BTreeSet::new();
    for w in witnesses {
        used.extend(w.vertex_ids.iter().copied());
    }
    let mut out = Alphabet::default();
    let mut remap: HashMap<u32, u32> = HashMap::new();
    for (old, v) in alphabet.vertices.iter().enumerate() {
        if used.contains(&(old as u32)) {
            let nid = out.insert(v.clone());
            remap.insert(old as u32, nid);
        }
    }
    for &(a, b) in &alphabet.edges {
        if let (Some(&na), Some(&nb)) = (remap.get(&a), remap.get(&b)) {
            out.edges.insert((na, nb));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpo::shadow;
    use crate::model::RoofProfile;
    use crate::nuh::Constants;
    use crate::sections::{build_sections, SectionLayout};
    use std::sync::OnceLock;

    struct Setup {
        flow: ModelFlow,
        consts: Constants,
        reference: ProperSection,
        security: ProperSection,
    }

    fn setup(roof: RoofProfile) -> Setup {
        let flow = ModelFlow::cat(roof);
        let consts = Constants::defaults();
        let layout = SectionLayout::for_model(&flow, consts.rho);
        let (reference, security) =
            build_sections(&flow, consts.rho, layout, 40, 8).expect("sections");
        Setup { flow, consts, reference, security }
    }

    fn setup_const() -> &'static Setup {
        static CELL: OnceLock<Setup> = OnceLock::new();
        CELL.get_or_init(|| setup(RoofProfile::Const))
    }

    fn setup_cos() -> &'static Setup {
        static CELL: OnceLock<Setup> = OnceLock::new();
        CELL.get_or_init(|| setup(RoofProfile::Cos { delta: 0.1 }))
    }

    fn sys(s: &Setup) -> ChartSystem<'_> {
        ChartSystem::new(&s.flow, &s.consts, &s.reference, &s.security)
    }

    fn dyadic_seed(s: &Setup) -> PointM {
        let u = [1.0 / 32.0, 2.0 / 32.0];
        let lv = s.reference.tile_levels(u).to_vec();
        s.flow.point(u, lv[0])
    }

    #[test]
    fn orbit_builds_and_detects_cycle() {
        for s in [setup_const(), setup_cos()] {
            let seed = dyadic_seed(s);
            // the 24-fiber dyadic cycle spans up to ~24 x levels hits
            let orbit =
                SectionOrbit::build_periodic(&s.flow, &s.reference, seed, 240, 240).unwrap();
            assert_eq!(orbit.hits.len(), 481);
            assert!(orbit.future_period > 0 && orbit.past_period > 0);
            for dt in orbit.spacings() {
                assert!(dt > 0.0 && dt <= s.consts.rho * (1.0 + 1e-12));
            }
            let n = orbit.len();
            let fp = orbit.future_period;
            assert_eq!(orbit.hits[n - 1].key(), orbit.hits[n - 1 - fp].key());
            // a short window is honestly truncated
            let short = SectionOrbit::build(&s.flow, &s.reference, seed, 20, 20).unwrap();
            assert_eq!(short.future_period, 0);
        }
    }

    #[test]
    fn generic_seed_orbit_is_exactly_invertible() {
        // a quantized generic seed yields a window whose backward hits undo
        // the forward hits bit-exactly (the lattice realization)
        let s = setup_const();
        let seed = {
            let u = [0.372_915_662_11, 0.681_002_447_3];
            let lv = s.reference.tile_levels(u).to_vec();
            s.flow.point(u, lv[0])
        };
        let orbit = SectionOrbit::build(&s.flow, &s.reference, seed, 30, 30);
        if let Ok(orbit) = orbit {
            for i in 1..orbit.len() {
                let (back, _) = s.reference.return_map_inv(&s.flow, orbit.hits[i]).unwrap();
                assert_eq!(back.key(), orbit.hits[i - 1].key(), "inverse mismatch at {}", i);
            }
        }
    }

    #[test]
    fn alphabet_builds_with_cg_conditions() {
        for s in [setup_const(), setup_cos()] {
            let cs = sys(s);
            let seed = dyadic_seed(s);
            let orbit = SectionOrbit::build(&s.flow, &s.reference, seed, 30, 30).unwrap();
            let alphabet = build_alphabet(&cs, std::slice::from_ref(&orbit), 10_000).unwrap();
            assert!(!alphabet.is_empty());
            // CG2: sizes below the cap (ladder is float-dense at this scale)
            for v in &alphabet.vertices {
                let cap = s.consts.epsilon * v.chart.chart.params.q_cap;
                assert!(v.chart.ps <= cap * (1.0 + 1e-12));
                assert!(v.chart.pu <= cap * (1.0 + 1e-12));
            }
            // discreteness: counts are monotone nonincreasing in t
            let c0 = alphabet.count_above(0.0);
            let c1 = alphabet.count_above(1e-18);
            let c2 = alphabet.count_above(1e-16);
            assert!(c0 >= c1 && c1 >= c2);
            assert_eq!(c0, alphabet.len());
        }
    }

    #[test]
    fn encoding_validates_and_shadows_the_seed() {
        for s in [setup_const(), setup_cos()] {
            let cs = sys(s);
            let seed = dyadic_seed(s);
            let orbit = SectionOrbit::build(&s.flow, &s.reference, seed, 30, 30).unwrap();
            let alphabet = build_alphabet(&cs, std::slice::from_ref(&orbit), 10_000).unwrap();
            let enc = encode_orbit(&cs, &alphabet, &orbit).unwrap();
            assert!(enc.horizon_ok);
            // every consecutive pair passes the edge test
            enc.gpo.validate(&cs).expect("encoded gpo validates");
            check_tail_sums(&enc.trace, &s.consts).unwrap();
            // a_n within (e^{-eps}, 1]
            for t in &enc.trace {
                assert!(t.a_n > (-s.consts.epsilon).exp() && t.a_n <= 1.0 + 1e-12);
            }
            // the encoding shadows the seed
            let res = shadow(&cs, &enc.gpo, 20).unwrap();
            let d = ((res.point.u[0] - seed.u[0]).powi(2) + (res.point.u[1] - seed.u[1]).powi(2))
                .sqrt()
                + (res.point.s - seed.s).abs();
            assert!(d <= 1e-6, "round trip missed by {}", d);
        }
    }

    #[test]
    fn constant_q_along_level_caps_everywhere() {
        // on the constant-roof model Q depends only on the height, so along
        // one level every index is capped and the sizes equal eps Q
        let s = setup_const();
        let cs = sys(s);
        let seed = dyadic_seed(s);
        let orbit = SectionOrbit::build(&s.flow, &s.reference, seed, 12, 12).unwrap();
        let (charts, trace) = surgery(&cs, &orbit).unwrap();
        // identical heights recur every 6 hits (6 levels per unit roof)
        for (i, t) in trace.iter().enumerate() {
            if t.maximal_s {
                assert_eq!(charts[i].ps, t.cap);
            }
        }
        // the cap engages at the Q-minimizing level, once per unit time
        let capped: Vec<usize> =
            trace.iter().enumerate().filter(|(_, t)| t.maximal_s).map(|(i, _)| i).collect();
        assert!(capped.len() >= 2, "expected caps once per level cycle");
        for w in capped.windows(2) {
            assert!(w[1] - w[0] <= 7, "cap gap {} too wide", w[1] - w[0]);
        }
    }

    #[test]
    fn pruning_is_idempotent_and_preserves_encodings() {
        let s = setup_const();
        let cs = sys(s);
        let seed = dyadic_seed(s);
        let orbit = SectionOrbit::build(&s.flow, &s.reference, seed, 20, 20).unwrap();
        let alphabet = build_alphabet(&cs, std::slice::from_ref(&orbit), 10_000).unwrap();
        let enc = encode_orbit(&cs, &alphabet, &orbit).unwrap();
        let pruned = prune_relevant(&alphabet, std::slice::from_ref(&enc));
        assert!(pruned.len() <= alphabet.len());
        // re-encoding over the pruned alphabet still works
        let enc2 = encode_orbit(&cs, &pruned, &orbit).unwrap();
        assert_eq!(enc2.vertex_ids.len(), enc.vertex_ids.len());
        let pruned2 = prune_relevant(&pruned, std::slice::from_ref(&enc2));
        assert_eq!(pruned2.len(), pruned.len());
    }

    #[test]
    fn periodic_encoding_is_a_regular_symbol_path() {
        // bridge to the symbolic layer: the vertex itinerary of a periodic
        // encoding is an admissible, regular path over the alphabet graph
        use crate::symbolic::{SymbolPath, Tail};
        let s = setup_const();
        let cs = sys(s);
        let seed = dyadic_seed(s);
        let orbit =
            SectionOrbit::build_periodic(&s.flow, &s.reference, seed, 160, 160).unwrap();
        let alphabet = build_alphabet(&cs, std::slice::from_ref(&orbit), 200_000).unwrap();
        let enc = encode_orbit(&cs, &alphabet, &orbit).unwrap();
        let g = alphabet.to_graph();
        let name = |id: u32| format!("v{}", id);
        let core: Vec<_> =
            enc.vertex_ids.iter().map(|&id| g.vertex(&name(id)).unwrap()).collect();
        let fp = orbit.future_period;
        let pp = orbit.past_period;
        let future = Tail::Cycle(core[core.len() - fp..].to_vec());
        let past = Tail::Cycle(core[..pp].to_vec());
        let path = SymbolPath::new(&g, past, core, future, orbit.origin as i64)
            .expect("encoded itinerary is admissible over the alphabet graph");
        assert!(path.is_regular());
    }

    #[test]
    fn beta_guard() {
        let s = setup_const();
        let mut consts = s.consts;
        consts.beta = 2.0;
        let cs = ChartSystem::new(&s.flow, &consts, &s.reference, &s.security);
        let seed = dyadic_seed(s);
        let orbit = SectionOrbit::build(&s.flow, &s.reference, seed, 8, 8).unwrap();
        assert!(matches!(
            build_alphabet(&cs, std::slice::from_ref(&orbit), 10_000),
            Err(CoarseError::BetaTooLarge(_))
        ));
    }
}
