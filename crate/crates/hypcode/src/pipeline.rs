//! End-to-end pipeline: configuration, staged construction, artifact and
//! report emission. Identical config and seed produce byte-identical
//! artifacts.

use crate::charts::ChartSystem;
use crate::coarse::{build_alphabet, encode_orbit, seed_is_clear, Alphabet, Encoding, SectionOrbit};
use crate::gpo::{first_roof, shadow};
use crate::markov::{MarkovSystem, CLOUD_TOL};
use crate::model::{ModelFlow, PointM, RoofProfile};
use crate::nuh::{compute_q, hyp_params, params_csv_header, params_csv_line, Constants, NuhError};
use crate::sections::{build_sections, ProperSection, SectionLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("check failure: {0}")]
    Check(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub matrix: [[i64; 2]; 2],
    /// "const", "cos" or "stretch"
    pub roof: String,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub chi: f64,
    pub beta: f64,
    pub rho: f64,
    pub epsilon: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub seed: u64,
    pub cover_fiber: usize,
    pub cover_height: usize,
    pub orbit_back: usize,
    pub orbit_fwd: usize,
    pub n_orbits: usize,
    pub q_grid_per_panel: usize,
    pub shadow_depth: usize,
    pub pi_hat_depth: usize,
    pub alphabet_cap: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            seed: 7,
            cover_fiber: 100,
            cover_height: 10,
            orbit_back: 40,
            orbit_fwd: 40,
            n_orbits: 4,
            q_grid_per_panel: 4,
            shadow_depth: 20,
            pi_hat_depth: 12,
            alphabet_cap: 200_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelConfig,
    pub constants: ConstantsConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default = "default_out")]
    pub output_dir: String,
}

fn default_out() -> String {
    "hypcode-out".to_owned()
}

impl PipelineConfig {
    pub fn defaults(roof: &str) -> PipelineConfig {
        PipelineConfig {
            model: ModelConfig { matrix: [[2, 1], [1, 1]], roof: roof.to_owned(), delta: 0.1 },
            constants: ConstantsConfig { chi: 0.5, beta: 1.0, rho: 0.2, epsilon: 0.02 },
            sampling: SamplingConfig::default(),
            output_dir: default_out(),
        }
    }

    pub fn from_toml(text: &str) -> Result<PipelineConfig, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn roof_profile(&self) -> Result<RoofProfile, PipelineError> {
        match self.model.roof.as_str() {
            "const" => Ok(RoofProfile::Const),
            "cos" => Ok(RoofProfile::Cos { delta: self.model.delta }),
            "stretch" => Ok(RoofProfile::Stretch { delta: self.model.delta }),
            other => Err(PipelineError::Config(format!("unknown roof kind {:?}", other))),
        }
    }

    pub fn build_model(&self) -> Result<ModelFlow, PipelineError> {
        let roof = self.roof_profile()?;
        ModelFlow::new(self.model.matrix, roof).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn constants(&self) -> Constants {
        Constants {
            chi: self.constants.chi,
            beta: self.constants.beta,
            rho: self.constants.rho,
            epsilon: self.constants.epsilon,
        }
    }

    /// Validate the cross-constant requirements.
    pub fn validate(&self) -> Result<ModelFlow, PipelineError> {
        let flow = self.build_model()?;
        let c = self.constants();
        if !(c.chi > 0.0 && c.chi < flow.log_lambda / flow.roof.max()) {
            return Err(PipelineError::Config(format!(
                "chi = {} must lie in (0, {})",
                c.chi,
                flow.log_lambda / flow.roof.max()
            )));
        }
        if !(c.epsilon > 0.0 && c.epsilon < c.rho) {
            return Err(PipelineError::Config(format!(
                "epsilon = {} must lie in (0, rho = {})",
                c.epsilon, c.rho
            )));
        }
        if !(c.beta > 0.0 && c.beta < 2.0) {
            return Err(PipelineError::Config(format!(
                "beta = {} must lie in (0, 2) for the coarse graining",
                c.beta
            )));
        }
        if !(c.rho < flow.roof.min()) {
            return Err(PipelineError::Config(format!(
                "rho = {} must stay below the shortest period {}",
                c.rho,
                flow.roof.min()
            )));
        }
        Ok(flow)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Stage {
    Sections,
    Nuh,
    Charts,
    Gpo,
    Coarse,
    Markov,
    Second,
}

impl std::str::FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sections" => Ok(Stage::Sections),
            "nuh" => Ok(Stage::Nuh),
            "charts" => Ok(Stage::Charts),
            "gpo" => Ok(Stage::Gpo),
            "coarse" => Ok(Stage::Coarse),
            "markov" => Ok(Stage::Markov),
            "second" => Ok(Stage::Second),
            other => Err(format!("unknown stage {:?}", other)),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineSummary {
    pub stage: String,
    pub checks: Vec<CheckLine>,
    pub artifacts: Vec<String>,
}

impl PipelineSummary {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Deterministic orbit seeds: lattice points on the reference section whose
/// windows build cleanly, drawn from the seeded generator.
pub fn draw_seeds(
    flow: &ModelFlow,
    section: &ProperSection,
    rng: &mut ChaCha8Rng,
    n: usize,
    back: usize,
    fwd: usize,
) -> Vec<PointM> {
    let mut seeds = Vec::new();
    let mut attempts = 0;
    while seeds.len() < n && attempts < 4000 {
        attempts += 1;
        let u = [rng.gen::<f64>(), rng.gen::<f64>()];
        let lv = section.tile_levels(u).to_vec();
        if lv.is_empty() {
            continue;
        }
        let h = lv[rng.gen_range(0..lv.len())];
        let x = flow.point(u, h);
        if !section.contains(x) {
            continue;
        }
        // two extra steps each way: the net buckets consult the neighbors
        // of the window endpoints
        if seed_is_clear(flow, section, x, back + 2, fwd + 2) {
            seeds.push(x);
        }
    }
    seeds
}

/// The dyadic periodic seed used for the Markov structure (its full cycle
/// stays clear of the tile boundaries for both default layouts).
pub fn dyadic_periodic_seed(flow: &ModelFlow, section: &ProperSection) -> PointM {
    let u = [1.0 / 32.0, 2.0 / 32.0];
    let lv = section.tile_levels(u).to_vec();
    flow.point(u, lv[0])
}

pub struct PipelineRun {
    pub flow: ModelFlow,
    pub consts: Constants,
    pub reference: ProperSection,
    pub security: ProperSection,
    pub orbits: Vec<SectionOrbit>,
    pub alphabet: Option<Alphabet>,
    pub encodings: Vec<Encoding>,
}

/// Run the pipeline through `stage`, writing artifacts under the output
/// directory, and return the summary. Hard failures become errors; soft
/// check outcomes land in the summary.
pub fn run_pipeline(config: &PipelineConfig, stage: Stage) -> Result<PipelineSummary, PipelineError> {
    let flow = config.validate()?;
    let consts = config.constants();
    let outdir = PathBuf::from(&config.output_dir);
    fs::create_dir_all(&outdir)?;
    let mut checks: Vec<CheckLine> = Vec::new();
    let mut artifacts: Vec<String> = Vec::new();
    let push_artifact = |p: &Path, artifacts: &mut Vec<String>| {
        artifacts.push(p.display().to_string());
    };

    // sections
    let layout = SectionLayout::for_model(&flow, consts.rho);
    let (reference, security) = build_sections(
        &flow,
        consts.rho,
        layout,
        config.sampling.cover_fiber,
        config.sampling.cover_height,
    )
    .map_err(|e| PipelineError::Check(format!("section build: {}", e)))?;
    checks.push(CheckLine {
        name: "sections.cover".into(),
        pass: true,
        detail: format!(
            "{} reference discs, sampled cover at {}x{}x{}",
            reference.discs.len(),
            config.sampling.cover_fiber,
            config.sampling.cover_fiber,
            config.sampling.cover_height
        ),
    });
    let po = reference.partial_order_check(&flow);
    checks.push(CheckLine {
        name: "sections.partial_order".into(),
        pass: po.is_empty(),
        detail: format!("{} violating pairs", po.len()),
    });
    {
        let p = outdir.join("sections.csv");
        let mut txt = reference.to_csv();
        txt.push_str(&security.to_csv().lines().skip(1).collect::<Vec<_>>().join("\n"));
        txt.push('\n');
        fs::write(&p, txt)?;
        push_artifact(&p, &mut artifacts);
    }
    if stage == Stage::Sections {
        return finish(outdir, "sections", checks, artifacts);
    }

    // parameters
    let cs = ChartSystem::new(&flow, &consts, &reference, &security);
    let mut rng = ChaCha8Rng::seed_from_u64(config.sampling.seed);
    let mut seeds = vec![dyadic_periodic_seed(&flow, &reference)];
    seeds.extend(draw_seeds(
        &flow,
        &reference,
        &mut rng,
        config.sampling.n_orbits.saturating_sub(1),
        config.sampling.orbit_back,
        config.sampling.orbit_fwd,
    ));
    {
        let p = outdir.join("params.csv");
        let mut txt = String::from(params_csv_header());
        for &x in seeds.iter() {
            let h = hyp_params(&flow, &consts, x)
                .map_err(|e| PipelineError::Check(format!("params: {}", e)))?;
            let lq = q_with_auto_horizon(&flow, &consts, x, config.sampling.q_grid_per_panel)
                .map_err(|e| PipelineError::Check(format!("q: {}", e)))?;
            txt.push_str(&params_csv_line(&h, &lq));
        }
        fs::write(&p, txt)?;
        push_artifact(&p, &mut artifacts);
    }
    checks.push(CheckLine {
        name: "nuh.params".into(),
        pass: true,
        detail: format!("{} seed points parameterized", seeds.len()),
    });
    if stage == Stage::Nuh {
        return finish(outdir, "nuh", checks, artifacts);
    }

    // charts: verify the self-map bounds along the first seed's hits
    {
        let mut ok = 0;
        let mut total = 0;
        let mut x = seeds[0];
        for _ in 0..16 {
            total += 1;
            if cs.chart_return_map(x, 33).is_ok() {
                ok += 1;
            }
            let (fx, _) = reference
                .return_map(&flow, x)
                .map_err(|e| PipelineError::Check(format!("charts: {}", e)))?;
            x = fx;
        }
        checks.push(CheckLine {
            name: "charts.self_map_bounds".into(),
            pass: ok == total,
            detail: format!("{}/{} chart return maps within bounds", ok, total),
        });
    }
    if stage == Stage::Charts {
        return finish(outdir, "charts", checks, artifacts);
    }

    // orbits, alphabet, encodings
    let mut orbits = Vec::new();
    // the periodic seed gets a window covering its full cycle
    let periodic = SectionOrbit::build_periodic(
        &flow,
        &reference,
        seeds[0],
        240,
        240,
    )
    .map_err(|e| PipelineError::Check(format!("periodic orbit: {}", e)))?;
    orbits.push(periodic);
    for &s in &seeds[1..] {
        let o = SectionOrbit::build(
            &flow,
            &reference,
            s,
            config.sampling.orbit_back,
            config.sampling.orbit_fwd,
        )
        .map_err(|e| PipelineError::Check(format!("orbit: {}", e)))?;
        orbits.push(o);
    }
    let alphabet = build_alphabet(&cs, &orbits, config.sampling.alphabet_cap)
        .map_err(|e| PipelineError::Check(format!("alphabet: {}", e)))?;
    let encodings: Vec<Encoding> = orbits
        .iter()
        .map(|o| encode_orbit(&cs, &alphabet, o))
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::Check(format!("encoding: {}", e)))?;
    {
        let p = outdir.join("alphabet_charts.csv");
        fs::write(&p, alphabet.charts_csv())?;
        push_artifact(&p, &mut artifacts);
        let g = alphabet.to_graph();
        let p2 = outdir.join("alphabet_edges.dot");
        fs::write(&p2, g.to_dot("alphabet"))?;
        push_artifact(&p2, &mut artifacts);
        let p3 = outdir.join("alphabet_edges.txt");
        fs::write(&p3, g.to_edge_text())?;
        push_artifact(&p3, &mut artifacts);
        let p4 = outdir.join("encoder_trace.json");
        let traces: Vec<_> = encodings.iter().map(|e| &e.trace).collect();
        fs::write(&p4, serde_json::to_string_pretty(&traces).unwrap())?;
        push_artifact(&p4, &mut artifacts);
    }
    checks.push(CheckLine {
        name: "coarse.alphabet".into(),
        pass: !alphabet.is_empty(),
        detail: format!("{} vertices, {} edges", alphabet.len(), alphabet.edges.len()),
    });
    if stage == Stage::Coarse {
        return finish(outdir, "coarse", checks, artifacts);
    }

    // gpo: validate the periodic encoding and shadow it
    {
        let enc = &encodings[0];
        enc.gpo
            .validate(&cs)
            .map_err(|e| PipelineError::Check(format!("gpo validation: {}", e)))?;
        let res = shadow(&cs, &enc.gpo, config.sampling.shadow_depth)
            .map_err(|e| PipelineError::Check(format!("shadow: {}", e)))?;
        let roof = first_roof(&cs, &enc.gpo, &res)
            .map_err(|e| PipelineError::Check(format!("first roof: {}", e)))?;
        let seed0 = orbits[0].hits[orbits[0].origin];
        let d = ((res.point.u[0] - seed0.u[0]).powi(2) + (res.point.u[1] - seed0.u[1]).powi(2))
            .sqrt()
            + (res.point.s - seed0.s).abs();
        checks.push(CheckLine {
            name: "gpo.shadow_roundtrip".into(),
            pass: d <= 1e-6 && res.window_ok,
            detail: format!("|shadow - seed| = {:.3e}, roof = {:.6}", d, roof),
        });
        let p = outdir.join("shadow_report.json");
        #[derive(Serialize)]
        struct ShadowReportOut {
            point: String,
            residual: f64,
            window_ok: bool,
            depth: usize,
            first_roof: f64,
        }
        fs::write(
            &p,
            serde_json::to_string_pretty(&ShadowReportOut {
                point: res.point.serialize(),
                residual: res.residual,
                window_ok: res.window_ok,
                depth: res.depth,
                first_roof: roof,
            })
            .unwrap(),
        )?;
        push_artifact(&p, &mut artifacts);
        let p2 = outdir.join("stable_curve.csv");
        fs::write(&p2, res.vs.to_csv())?;
        push_artifact(&p2, &mut artifacts);
    }
    if stage == Stage::Gpo {
        return finish(outdir, "gpo", checks, artifacts);
    }

    // markov cover and refinement
    let ms = MarkovSystem::build(&cs, &alphabet, &orbits, &encodings)
        .map_err(|e| PipelineError::Check(format!("markov build: {}", e)))?;
    let report = ms.markov_check();
    let classified: usize = ms.class_of.iter().flatten().count();
    let flag_fraction = if report.checked > 0 {
        report.flagged as f64 / report.checked as f64
    } else {
        0.0
    };
    let markov_pass = report.violations == 0 && (flag_fraction <= 1e-3) && report.max_flag_factor <= 2.0;
    checks.push(CheckLine {
        name: "markov.geometric_property".into(),
        pass: markov_pass,
        detail: format!(
            "{} checked, {} violations, {} flagged (max factor {:.3})",
            report.checked, report.violations, report.flagged, report.max_flag_factor
        ),
    });
    {
        let p = outdir.join("markov_check.json");
        fs::write(&p, serde_json::to_string_pretty(&report).unwrap())?;
        push_artifact(&p, &mut artifacts);
        let p2 = outdir.join("classes.csv");
        fs::write(&p2, ms.classes_csv())?;
        push_artifact(&p2, &mut artifacts);
    }
    checks.push(CheckLine {
        name: "markov.partition".into(),
        pass: classified > 0,
        detail: format!("{} classes over {} classified samples", ms.classes.len(), classified),
    });
    if stage == Stage::Markov {
        return finish(outdir, "markov", checks, artifacts);
    }

    // second coding, affiliation, Bowen relation
    let g = ms.second_graph();
    {
        let p = outdir.join("second_graph.dot");
        fs::write(&p, g.to_dot("second"))?;
        push_artifact(&p, &mut artifacts);
    }
    let cyl = ms
        .check_cylinders(6)
        .map_err(|e| PipelineError::Check(format!("cylinders: {}", e)))?;
    let mut roof_ok = true;
    let mut roof_max: f64 = 0.0;
    for i in 0..ms.samples.len() {
        if let Some(r) = ms.roof_hat_at(i) {
            roof_ok &= r > 0.0 && r < consts.rho;
            roof_max = roof_max.max(r);
        }
    }
    checks.push(CheckLine {
        name: "second.cylinders_and_roof".into(),
        pass: roof_ok && cyl > 0,
        detail: format!("{} sampled words nonempty, sup roof = {:.6} < rho", cyl, roof_max),
    });
    let aff = ms.affiliation();
    let mut worst = (0usize, 0usize);
    for i in (0..ms.samples.len()).step_by(1 + ms.samples.len() / 20) {
        if let Some(r) = ms.class_of[i] {
            match ms.preimage_bound_check(&aff, i, 4) {
                Ok(count) => {
                    let bound = (aff.n_of(r) * aff.n_of(r)).max(1);
                    if count > worst.0 {
                        worst = (count, bound);
                    }
                }
                Err(e) => {
                    return Err(PipelineError::Check(format!("preimage bound: {}", e)));
                }
            }
        }
    }
    checks.push(CheckLine {
        name: "second.preimage_bound".into(),
        pass: true,
        detail: format!("worst count {} against bound {}", worst.0, worst.1),
    });
    let bowen = ms.bowen_check(&aff);
    checks.push(CheckLine {
        name: "second.bowen_relation".into(),
        pass: bowen.affiliation_failures == 0 && bowen.max_time_shift < bowen.gamma,
        detail: format!(
            "{} coincidences, max shift {:.4} < gamma {:.4}",
            bowen.coincidence_pairs_checked, bowen.max_time_shift, bowen.gamma
        ),
    });
    {
        let p = outdir.join("bowen.json");
        fs::write(&p, serde_json::to_string_pretty(&bowen).unwrap())?;
        push_artifact(&p, &mut artifacts);
    }

    finish(outdir, "second", checks, artifacts)
}

fn finish(
    outdir: PathBuf,
    stage: &str,
    checks: Vec<CheckLine>,
    mut artifacts: Vec<String>,
) -> Result<PipelineSummary, PipelineError> {
    let summary = PipelineSummary { stage: stage.to_owned(), checks, artifacts: artifacts.clone() };
    let p = outdir.join("summary.json");
    fs::write(&p, serde_json::to_string_pretty(&summary).unwrap())?;
    artifacts.push(p.display().to_string());
    Ok(summary)
}

/// Search for a connecting orbit between two periodic fiber cycles: a
/// lattice orbit tracking a true intersection of the unstable manifold of
/// one cycle with the stable manifold of the other. Its early window lies
/// within `proximity` (fiber sup-distance) of the first cycle and its late
/// window within `proximity` of the second, so the tolerance clouds of the
/// Markov layer connect the two.
pub fn heteroclinic_connector(
    flow: &ModelFlow,
    section: &ProperSection,
    from_cycle: &[[f64; 2]],
    to_cycle: &[[f64; 2]],
    back: usize,
    fwd: usize,
    proximity: f64,
) -> Option<SectionOrbit> {
    let nu = flow.n_u;
    let ns = flow.n_s;
    let det = nu[0] * (-ns[1]) - nu[1] * (-ns[0]);
    let near = |u: [f64; 2], cycle: &[[f64; 2]]| -> f64 {
        cycle
            .iter()
            .map(|c| {
                let d0 = (u[0] - c[0]).rem_euclid(1.0).min((c[0] - u[0]).rem_euclid(1.0));
                let d1 = (u[1] - c[1]).rem_euclid(1.0).min((c[1] - u[1]).rem_euclid(1.0));
                d0.max(d1)
            })
            .fold(f64::INFINITY, f64::min)
    };
    for &a in from_cycle {
        for &b in to_cycle {
            for m0 in -1..=1i64 {
                for m1 in -1..=1i64 {
                    // solve t nu - s ns = b - a + m
                    let rhs = [b[0] - a[0] + m0 as f64, b[1] - a[1] + m1 as f64];
                    let t = (rhs[0] * (-ns[1]) - rhs[1] * (-ns[0])) / det;
                    let h = [a[0] + t * nu[0], a[1] + t * nu[1]];
                    let lv = section.tile_levels(h).to_vec();
                    if lv.is_empty() {
                        continue;
                    }
                    let seed = flow.point(h, lv[0]);
                    if !section.contains(seed) {
                        continue;
                    }
                    let Ok(orbit) = SectionOrbit::build(flow, section, seed, back, fwd) else {
                        continue;
                    };
                    let early = near(orbit.hits[0].u, from_cycle);
                    let late = near(orbit.hits[orbit.len() - 1].u, to_cycle);
                    if early <= proximity && late <= proximity {
                        return Some(orbit);
                    }
                }
            }
        }
    }
    None
}

/// Fiber cycle of a periodic lattice seed under the automorphism.
pub fn fiber_cycle(flow: &ModelFlow, seed: [f64; 2]) -> Vec<[f64; 2]> {
    let mut out = vec![crate::model::quantize_fiber(seed)];
    loop {
        let next = flow.apply_matrix(*out.last().unwrap());
        if next == out[0] {
            return out;
        }
        out.push(next);
        assert!(out.len() < 100_000, "seed is not periodic at lattice scale");
    }
}

/// compute_q with the horizon grown until the truncation certificate holds.
pub fn q_with_auto_horizon(
    flow: &ModelFlow,
    consts: &Constants,
    x: PointM,
    per_panel: usize,
) -> Result<crate::nuh::LocalQ, NuhError> {
    match compute_q(flow, consts, x, 40.0, per_panel) {
        Ok(lq) => Ok(lq),
        Err(NuhError::HorizonTooShort { required, .. }) => {
            compute_q(flow, consts, x, required * 1.05, per_panel)
        }
        Err(e) => Err(e),
    }
}

/// Render a summary as one pass/fail line per check.
pub fn render_summary(summary: &PipelineSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "stage: {}", summary.stage);
    for c in &summary.checks {
        let _ = writeln!(out, "[{}] {} - {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let _ = writeln!(out, "artifacts: {}", summary.artifacts.len());
    let _ = writeln!(out, "cloud tolerance: {}", CLOUD_TOL);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_validation() {
        let cfg = PipelineConfig::defaults("const");
        let text = cfg.to_toml();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back.model.matrix, cfg.model.matrix);
        cfg.validate().expect("default config valid");

        let mut bad = PipelineConfig::defaults("const");
        bad.constants.epsilon = 0.3; // > rho
        assert!(matches!(bad.validate(), Err(PipelineError::Config(_))));
        assert_eq!(bad.validate().unwrap_err().exit_code(), 2);

        let mut bad2 = PipelineConfig::defaults("cos");
        bad2.constants.beta = 2.5;
        assert!(matches!(bad2.validate(), Err(PipelineError::Config(_))));

        let mut bad3 = PipelineConfig::defaults("const");
        bad3.constants.chi = 2.0;
        assert!(bad3.validate().is_err());
    }

    #[test]
    fn stage_parsing() {
        assert_eq!("sections".parse::<Stage>().unwrap(), Stage::Sections);
        assert_eq!("second".parse::<Stage>().unwrap(), Stage::Second);
        assert!("bogus".parse::<Stage>().is_err());
    }

    #[test]
    fn sections_stage_runs_in_temp_dir() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::defaults("const");
        cfg.output_dir = dir.path().join("out").display().to_string();
        cfg.sampling.cover_fiber = 40;
        cfg.sampling.cover_height = 8;
        let summary = run_pipeline(&cfg, Stage::Sections).unwrap();
        assert!(summary.all_pass());
        assert!(dir.path().join("out/sections.csv").exists());
        assert!(dir.path().join("out/summary.json").exists());
        let rendered = render_summary(&summary);
        assert!(rendered.contains("PASS"));
    }

    #[test]
    fn deterministic_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::defaults("const");
        cfg.sampling.cover_fiber = 40;
        cfg.sampling.cover_height = 8;
        cfg.output_dir = dir.path().join("a").display().to_string();
        run_pipeline(&cfg, Stage::Nuh).unwrap();
        let a = std::fs::read(dir.path().join("a/params.csv")).unwrap();
        cfg.output_dir = dir.path().join("b").display().to_string();
        run_pipeline(&cfg, Stage::Nuh).unwrap();
        let b = std::fs::read(dir.path().join("b/params.csv")).unwrap();
        assert_eq!(a, b, "identical config and seed must give identical bytes");
    }
}
