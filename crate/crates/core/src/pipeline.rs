//! Two-model stability experiments: measured data discrepancy δ, the
//! trilinear, h and V channels per perturbation scale, and power-law fits
//! of each channel against δ.
//!
//! The ladder entries are perturbation scales `c`: row `c` compares the
//! reference model with `ref + c·(alt − ref)`. δ is measured, never set.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::coef::Coef;
use crate::error::{Error, Result};
use crate::fit::{loglog, LineFit};
use crate::geometry::{build_interaction, in_cylinder, Covector, DomainSpec, Event, InteractionConfig};
use crate::grid::{restrict, sobolev_norm, Field, Region, SpacetimeGrid, Window};
use crate::linearization::{default_eps, response, Observation, POLARIZATION};
use crate::par;
use crate::probe::{recover_h_difference, ProbeSpec};
use crate::raytransform::{lipschitz_bound, pointwise_bound, sup_discrepancy, RaySampling};
use crate::solver::Model;
use crate::sources::{SourceSet, SourceTemplate};

pub const SCHEMA: u32 = 1;

/// Spatial grid; the time extent comes from the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "L")]
    pub l: f64,
    pub n_space: usize,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
}

fn default_cfl() -> f64 {
    0.5
}

impl GridSpec {
    pub fn build(&self, dom: &DomainSpec) -> Result<SpacetimeGrid> {
        SpacetimeGrid::new(dom.d, self.l, self.n_space, dom.t_max, self.cfl)
    }
}

/// One interaction site: the point y where three packets meet, the probe
/// point z on its out-ray, the covector parameter r and the incoming leg
/// length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Site {
    pub y: Event,
    pub z: Event,
    pub r: f64,
    pub s_in: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeTemplate {
    /// Cutoff width in units of the output period `1/K`.
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub dom: DomainSpec,
    pub grid: GridSpec,
    pub model_ref: Model,
    pub model_alt: Model,
    pub sources: SourceTemplate,
    pub sites: Vec<Site>,
    pub probe: ProbeTemplate,
    /// Perturbation scales, strictly decreasing and nonnegative.
    pub delta_ladder: Vec<f64>,
    pub s: usize,
    /// Seeds the ray-sample jitter.
    pub seed: u64,
    #[serde(default)]
    pub rays: RaySampling,
    #[serde(default = "default_lipschitz_step")]
    pub lipschitz_step: f64,
    /// Reference source amplitude; defaults to [`default_eps`] per site.
    #[serde(default)]
    pub eps: Option<f64>,
    /// Sobolev order of the norms behind δ and ‖T − T̃‖. Finite-difference
    /// ℋ⁴ norms amplify roundoff by dx⁻⁴, which swamps the differences
    /// these experiments measure, so the default is 0.
    #[serde(default)]
    pub norm_order: usize,
}

fn default_lipschitz_step() -> f64 {
    0.02
}

fn cfg_err(what: &str, e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        e => Error::Config(format!("{what}: {e}")),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config does not parse: {e}")))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        ExperimentConfig::from_json(&text)
    }

    /// Load, apply dotted-key overrides (`grid.n_space=65`), parse.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("config is not JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        serde_json::from_value(v).map_err(|e| Error::Config(format!("config does not parse: {e}")))
    }

    /// The scaled alternative model `ref + c·(alt − ref)`.
    pub fn model_at(&self, c: f64) -> Model {
        let mix = |a: &Coef, b: &Coef| {
            if c == 0.0 || a == b {
                a.clone()
            } else if c == 1.0 {
                b.clone()
            } else {
                a.clone().plus(b.clone().scaled(c)).plus(a.clone().scaled(-c))
            }
        };
        Model {
            v: mix(&self.model_ref.v, &self.model_alt.v),
            h: mix(&self.model_ref.h, &self.model_alt.h),
            h_floor: self.model_ref.h_floor.min(self.model_alt.h_floor),
        }
    }

    /// Schema and invariant checks; no solves.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::Config(format!("unsupported schema {} (expected {SCHEMA})", self.schema)));
        }
        self.dom.validate().map_err(|e| cfg_err("dom", e))?;
        let grid = self.grid.build(&self.dom).map_err(|e| cfg_err("grid", e))?;
        grid.check_contains(&self.dom).map_err(|e| cfg_err("grid", e))?;
        self.model_ref.validate(&grid).map_err(|e| cfg_err("model_ref", e))?;
        self.model_alt.validate(&grid).map_err(|e| cfg_err("model_alt", e))?;
        if self.sites.is_empty() {
            return Err(Error::Config("at least one interaction site is required".into()));
        }
        for (i, s) in self.sites.iter().enumerate() {
            let what = format!("site {i}");
            let cfg = build_interaction(&self.dom, s.y, s.z, s.r, s.s_in).map_err(|e| cfg_err(&what, e))?;
            for spec in self.sources.specs(&cfg) {
                spec.validate(&self.dom).map_err(|e| cfg_err(&what, e))?;
            }
            // At least four grid points per carrier wavelength, in and out.
            let (lam, k_out) = self.sources.wavenumbers(&cfg);
            let spatial = |c: &Covector| c.euclid() / std::f64::consts::SQRT_2;
            let carrier = (0..3).map(|j| lam[j] * spatial(&cfg.xi[j])).fold(k_out * spatial(&cfg.eta), f64::max);
            if carrier * grid.dx() > std::f64::consts::FRAC_PI_2 {
                return Err(Error::Config(format!(
                    "{what}: carrier wavenumber {carrier:.1} is unresolved at dx = {:.3e} (needs k·dx <= pi/2)",
                    grid.dx()
                )));
            }
            self.probe_for(&cfg).validate(&grid, &self.dom).map_err(|e| cfg_err(&what, e))?;
        }
        if !(self.probe.width > 0.0) {
            return Err(Error::Config(format!("probe width must be positive, got {}", self.probe.width)));
        }
        let l = &self.delta_ladder;
        if l.is_empty() || l.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || l.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(format!("delta_ladder must be strictly decreasing and nonnegative: {l:?}")));
        }
        let r = &self.rays;
        if r.n_t == 0 || r.n_r == 0 || r.n_ang == 0 || r.n_dirs == 0 || !(r.max_step > 0.0) || !(self.lipschitz_step > 0.0) {
            return Err(Error::Config("ray sampling counts and steps must be positive".into()));
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("eps must be positive, got {e}")));
            }
        }
        self.check_agree_on_omega(&grid)
    }

    /// `model_ref = model_alt` on a lattice over Ω (at most ~1e6 points).
    fn check_agree_on_omega(&self, grid: &SpacetimeGrid) -> Result<()> {
        let dom = &self.dom;
        let h = grid.dx().max(2.0 * dom.rho / 128.0).max(dom.t_max / 64.0);
        let nx = (dom.rho / h).ceil() as i64;
        let nt = (dom.t_max / h).ceil() as usize;
        let third: Vec<i64> = if dom.d == 3 { (-nx..=nx).collect() } else { vec![0] };
        let mut pts = vec![];
        for k in 0..=nt {
            let t = (k as f64 * h).min(dom.t_max);
            for i in -nx..=nx {
                for j in -nx..=nx {
                    for &l in &third {
                        let x = [i as f64 * h, j as f64 * h, l as f64 * h];
                        let p = Event::new(t, &x[..dom.d]);
                        if in_cylinder(&p, dom, 0) {
                            pts.push(p);
                        }
                    }
                }
            }
        }
        let (a, b) = (&self.model_ref, &self.model_alt);
        let bad = par::map(&pts, |p| {
            let close = |u: f64, v: f64| (u - v).abs() <= 1e-12 * (1.0 + u.abs().max(v.abs()));
            !(close(a.v.eval(p), b.v.eval(p)) && close(a.h.eval(p), b.h.eval(p)))
        });
        match bad.iter().position(|&x| x) {
            Some(i) => Err(Error::Config(format!("model_ref and model_alt differ inside Omega at {:?}", pts[i].0))),
            None => Ok(()),
        }
    }

    pub fn probe_for(&self, cfg: &InteractionConfig) -> ProbeSpec {
        let (_, k_out) = self.sources.wavenumbers(cfg);
        ProbeSpec::for_config(cfg, k_out, self.probe.width, self.s)
    }

    pub fn ray_sampling(&self) -> RaySampling {
        RaySampling { seed: self.seed, keep_samples: false, ..self.rays.clone() }
    }
}

/// Set `key` (dotted path into the JSON object) to `raw`, parsed as JSON
/// when possible and as a string otherwise.
pub fn apply_override(v: &mut Value, kv: &str) -> Result<()> {
    let (key, raw) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override {kv:?} is not key=value")))?;
    let val: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = v;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(m) => {
                if last {
                    m.insert(p.to_string(), val);
                    return Ok(());
                }
                m.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(a) => {
                let idx: usize = p.parse().map_err(|_| Error::Config(format!("override key {key:?}: {p:?} is not an index")))?;
                let n = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| Error::Config(format!("override key {key:?}: index {idx} ≥ {n}")))?;
                if last {
                    *slot = val;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::Config(format!("override key {key:?}: {p:?} is not inside an object"))),
        };
    }
    Err(Error::Config(format!("empty override key in {kv:?}")))
}

/// Everything fixed per site: geometry, unit sources, probe, the
/// reference amplitude and the reference data norm.
pub struct PreparedSite {
    pub cfg: InteractionConfig,
    pub set: SourceSet,
    pub probe: ProbeSpec,
    pub obs: Observation,
    pub eps_ref: f64,
    /// `‖𝒫_ref(ε_ref Σ f_j)‖_{ℋˢ}` on the observation region.
    pub data_ref: f64,
    /// The reference model's seven polarization responses at `ε_ref`,
    /// shared by every row.
    ref_unit: Vec<Field>,
}

pub struct Prepared {
    pub grid: SpacetimeGrid,
    pub sites: Vec<PreparedSite>,
}

/// Geometry, unit sources, probe and reference amplitude of one site.
pub struct SiteSetup {
    pub cfg: InteractionConfig,
    pub set: SourceSet,
    pub probe: ProbeSpec,
    /// Probe support, compared on Ω.
    pub obs: Observation,
    pub eps_ref: f64,
}

/// [`SiteSetup`] for site `i` on `grid` (three linear solves unless the
/// config fixes `eps`).
pub fn site_setup(cfg: &ExperimentConfig, grid: &SpacetimeGrid, i: usize) -> Result<SiteSetup> {
    let s = cfg.sites.get(i).ok_or_else(|| Error::Config(format!("no site {i}")))?;
    let ic = build_interaction(&cfg.dom, s.y, s.z, s.r, s.s_in)?;
    let set = SourceSet::realize(&cfg.sources.specs(&ic), grid, &cfg.dom, cfg.s, [1.0; 3])?;
    let probe = cfg.probe_for(&ic);
    let obs = Observation::new(probe.window(grid), Region::omega(&cfg.dom));
    let eps_ref = match cfg.eps {
        Some(e) => e,
        None => {
            // Calibrate where the three incoming waves meet, not on the
            // probe support which only the interaction wave reaches.
            let r = set.specs.iter().map(|s| s.support_radius()).fold(0.0, f64::max);
            let y = ic.y;
            let win = Window::around(grid, y.t() - r, y.t() + r, &y.0[1..], r, 1);
            default_eps(&cfg.model_ref.v, &set, &Observation::new(win, Region::Full))?
        }
    };
    Ok(SiteSetup { cfg: ic, set, probe, obs, eps_ref })
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let grid = cfg.grid.build(&cfg.dom)?;
    let mut sites = vec![];
    for i in 0..cfg.sites.len() {
        let SiteSetup { cfg: ic, set, probe, obs, eps_ref } = site_setup(cfg, &grid, i)?;
        let ref_unit = polarization_responses(&cfg.model_ref, &set.with_eps([eps_ref; 3]), &obs)?;
        let data_ref = sobolev_norm(&ref_unit[0], cfg.norm_order, &obs.region)?;
        if !(data_ref > 0.0) {
            return Err(Error::NoSignal("reference data vanish on the observation region".into()));
        }
        sites.push(PreparedSite { cfg: ic, set, probe, obs, eps_ref, data_ref, ref_unit });
    }
    Ok(Prepared { grid, sites })
}

fn polarization_responses(m: &Model, set: &SourceSet, obs: &Observation) -> Result<Vec<Field>> {
    let mut out = Vec::with_capacity(POLARIZATION.len());
    let mut err = None;
    par::map_batched(&POLARIZATION, |(mask, _)| response(m, set, *mask, obs), |_, u| match u {
        Ok(u) => out.push(u),
        Err(e) => {
            err.get_or_insert(e);
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Both models' polarization outputs at amplitude `x·ε_ref`.
struct SiteEval {
    x: f64,
    delta: f64,
    ua: Field,
    ub: Field,
}

fn eval_site(ma: &Model, mb: &Model, site: &PreparedSite, x: f64, s: usize) -> Result<SiteEval> {
    let eps = x * site.eps_ref;
    let set = site.set.with_eps([eps; 3]);
    let same = ma == mb;
    // At ε_ref the reference responses are cached (`ma` is always the
    // reference model).
    let cached = x == 1.0;
    let jobs: Vec<(usize, bool)> = (0..POLARIZATION.len())
        .flat_map(|i| match (cached, same) {
            (true, true) => vec![],
            (true, false) => vec![(i, true)],
            (false, true) => vec![(i, false)],
            (false, false) => vec![(i, false), (i, true)],
        })
        .collect();
    let run = |i: usize, alt: bool| -> Result<Field> {
        if cached && !alt {
            Ok(site.ref_unit[i].clone())
        } else {
            response(if alt { mb } else { ma }, &set, POLARIZATION[i].0, &site.obs)
        }
    };
    let mut wa = Field::zeros(set.grid(), site.obs.window);
    let mut wb = wa.clone();
    let mut pending: Option<Field> = None;
    let mut delta = 0.0f64;
    let mut err = None;
    if cached {
        for (i, u) in site.ref_unit.iter().enumerate() {
            wa.accumulate(POLARIZATION[i].1, u);
        }
    }
    par::map_batched(
        &jobs,
        |&(i, alt)| run(i, alt),
        |j, u| {
            let (i, alt) = jobs[j];
            let sign = POLARIZATION[i].1;
            if cached && alt {
                pending = Some(site.ref_unit[i].clone());
            }
            match u {
                Err(e) => {
                    err.get_or_insert(e);
                }
                Ok(u) if !alt => {
                    wa.accumulate(sign, &u);
                    pending = Some(u);
                }
                Ok(u) => {
                    wb.accumulate(sign, &u);
                    if let Some(a) = pending.take() {
                        match Field::combine(&[(1.0, &a), (-1.0, &u)]).and_then(|d| sobolev_norm(&d, s, &site.obs.region)) {
                            Ok(n) => delta = delta.max(n),
                            Err(e) => {
                                err.get_or_insert(e);
                            }
                        }
                    }
                }
            }
        },
    );
    if let Some(e) = err {
        return Err(e);
    }
    let norm = -1.0 / (6.0 * eps * eps * eps);
    wa.scale(norm);
    let ua = restrict(&wa, &site.obs.region)?;
    let ub = if same {
        ua.clone()
    } else {
        wb.scale(norm);
        restrict(&wb, &site.obs.region)?
    };
    Ok(SiteEval { x, delta, ua, ub })
}

const X_MIN: f64 = 1e-4;

/// Amplitude with `ε = ε_ref·(δ(ε)/data_ref)^{1/5}`: one evaluation at
/// `ε_ref`, a step assuming `δ ∝ ε³`, and a correction with the observed
/// growth exponent when that assumption is off by more than 5%.
fn self_consistent(ma: &Model, mb: &Model, site: &PreparedSite, s: usize) -> Result<SiteEval> {
    let e0 = eval_site(ma, mb, site, 1.0, s)?;
    if e0.delta == 0.0 {
        return Ok(e0);
    }
    let b0 = e0.delta / site.data_ref;
    let x1 = b0.sqrt().clamp(X_MIN, 1.0);
    if x1 == 1.0 {
        return Ok(e0);
    }
    let e1 = eval_site(ma, mb, site, x1, s)?;
    if e1.delta == 0.0 {
        return Ok(e1);
    }
    let p = ((e1.delta / e0.delta).ln() / x1.ln()).clamp(0.5, 4.0);
    let x2 = ((e1.delta / site.data_ref) * x1.powf(-p)).powf(1.0 / (5.0 - p)).clamp(X_MIN, 1.0);
    if (x2 / x1 - 1.0).abs() <= 0.05 {
        return Ok(e1);
    }
    eval_site(ma, mb, site, x2, s)
}

/// Measured δ for the configured model pair: the largest ℋˢ output
/// discrepancy over the seven polarization inputs of every site at the
/// amplitudes `x·ε_ref` for each `x` in `xs`. A lower surrogate for the
/// supremum over the whole source ball.
pub fn measure_delta_with(cfg: &ExperimentConfig, prep: &Prepared, xs: &[f64]) -> Result<f64> {
    let mut d = 0.0f64;
    for site in &prep.sites {
        for &x in xs {
            d = d.max(eval_site(&cfg.model_ref, &cfg.model_alt, site, x, cfg.norm_order)?.delta);
        }
    }
    Ok(d)
}

/// [`measure_delta_with`] at the reference amplitude.
pub fn measure_delta(cfg: &ExperimentConfig) -> Result<f64> {
    let prep = prepare(cfg)?;
    measure_delta_with(cfg, &prep, &[1.0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteRow {
    pub eps: f64,
    /// `ε_ref·(δ/data_ref)^{1/5}` at the measured δ; equals `eps` at the fixed point.
    pub eps_target: f64,
    pub delta: f64,
    pub trilinear: f64,
    /// Recovered `(h_ref − h_alt)(y)`.
    pub h_recovered: f64,
    pub h_true: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowData {
    pub delta: f64,
    /// `‖T − T̃‖` surrogate: ℋˢ norm of the difference of the extracted
    /// trilinear terms (max over sites).
    pub trilinear: f64,
    /// `max |recovered (h − h̃)(y)|` over the sites.
    pub h_error: f64,
    pub h_true: f64,
    pub sup_i: f64,
    pub m: f64,
    pub v_bound: f64,
    /// `δ^{2/5} + h_error`.
    pub omega1: f64,
    /// `δ^{2/(15(s+2))}` and `ω₁^{1/((3s+7)(6s+5))}`, for comparison with
    /// the resolvable values actually used.
    pub tau_paper: f64,
    pub r_paper: f64,
    pub tau_used: Vec<f64>,
    pub r_used: Vec<f64>,
    pub sites: Vec<SiteRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        ErrorRecord { kind: e.kind().to_string(), message: e.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scale: f64,
    pub data: Option<RowData>,
    pub error: Option<ErrorRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Trilinear,
    HError,
    SupI,
    VBound,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Trilinear, Channel::HError, Channel::SupI, Channel::VBound];

    pub fn name(&self) -> &'static str {
        match self {
            Channel::Trilinear => "trilinear",
            Channel::HError => "h_error",
            Channel::SupI => "sup_i",
            Channel::VBound => "v_bound",
        }
    }

    pub fn value(&self, d: &RowData) -> f64 {
        match self {
            Channel::Trilinear => d.trilinear,
            Channel::HError => d.h_error,
            Channel::SupI => d.sup_i,
            Channel::VBound => d.v_bound,
        }
    }

    /// Hölder exponent of the theorem for this channel.
    pub fn target(&self, s: usize) -> f64 {
        let mu0 = mu0(s);
        match self {
            Channel::Trilinear => 0.4,
            Channel::HError => 2.0 / (15.0 * (s as f64 + 2.0)),
            Channel::SupI => mu0,
            Channel::VBound => mu0 / 2.0,
        }
    }
}

/// `μ₀ = 2/((3s+7)(6s+5))`.
pub fn mu0(s: usize) -> f64 {
    let s = s as f64;
    2.0 / ((3.0 * s + 7.0) * (6.0 * s + 5.0))
}

/// `err ≤ C δ^target` with a single `C`: the log-mean constant and the
/// spread of the rows around it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    pub channel: Channel,
    pub target: f64,
    pub n_rows: usize,
    pub exponent: Option<LineFit>,
    pub constant: Option<f64>,
    pub max_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
}

impl ChannelFit {
    /// Every row within `factor` of `C δ^target`.
    pub fn within(&self, factor: f64) -> bool {
        matches!((self.max_ratio, self.min_ratio), (Some(hi), Some(lo)) if hi <= factor && lo >= 1.0 / factor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub schema: u32,
    pub s: usize,
    pub rows: Vec<Row>,
    pub fits: Vec<ChannelFit>,
}

impl StabilityReport {
    pub fn fit(&self, c: Channel) -> &ChannelFit {
        self.fits.iter().find(|f| f.channel == c).expect("all channels are fitted")
    }
}

/// Wall-clock times, kept out of the report so reports stay reproducible.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Timings {
    pub prepare_ms: f64,
    pub rows: Vec<RowTiming>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RowTiming {
    pub scale: f64,
    pub solves_ms: f64,
    pub rays_ms: f64,
}

/// Least-squares slope of `log err` against `log δ`.
pub fn fit_exponent(rows: &[(f64, f64)]) -> Result<LineFit> {
    if rows.len() < 3 {
        return Err(Error::Invalid(format!("exponent fit needs at least 3 rows, got {}", rows.len())));
    }
    loglog(rows)
}

fn fit_channel(rows: &[Row], c: Channel, s: usize) -> ChannelFit {
    let target = c.target(s);
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.data.as_ref())
        .map(|d| (d.delta, c.value(d)))
        .filter(|p| p.0 > 0.0 && p.1 > 0.0)
        .collect();
    let mut f = ChannelFit { channel: c, target, n_rows: pts.len(), exponent: None, constant: None, max_ratio: None, min_ratio: None };
    if pts.is_empty() {
        return f;
    }
    f.exponent = fit_exponent(&pts).ok();
    let logs: Vec<f64> = pts.iter().map(|p| p.1.ln() - target * p.0.ln()).collect();
    let lc = logs.iter().sum::<f64>() / logs.len() as f64;
    f.constant = Some(lc.exp());
    f.max_ratio = Some(logs.iter().map(|l| (l - lc).exp()).fold(0.0, f64::max));
    f.min_ratio = Some(logs.iter().map(|l| (l - lc).exp()).fold(f64::INFINITY, f64::min));
    f
}

fn run_row(cfg: &ExperimentConfig, prep: &Prepared, c: f64, t: &mut RowTiming) -> Result<RowData> {
    let (ma, mb) = (&cfg.model_ref, &cfg.model_at(c));
    let start = Instant::now();
    let mut sites = vec![];
    for site in &prep.sites {
        let ev = self_consistent(ma, mb, site, cfg.norm_order)?;
        let d = Field::combine(&[(1.0, &ev.ua), (-1.0, &ev.ub)])?;
        let trilinear = sobolev_norm(&d, cfg.norm_order, &site.obs.region)?;
        let h_recovered = if ev.delta == 0.0 { 0.0 } else { recover_h_difference(ma, &site.cfg, &site.probe, &ev.ua, &ev.ub)?.value };
        let y = &site.cfg.y;
        let eps_target = site.eps_ref * (ev.delta / site.data_ref).powf(0.2);
        sites.push(SiteRow {
            eps: ev.x * site.eps_ref,
            eps_target,
            delta: ev.delta,
            trilinear,
            h_recovered,
            h_true: ma.h.eval(y) - mb.h.eval(y),
        });
    }
    t.solves_ms = start.elapsed().as_secs_f64() * 1e3;
    let start = Instant::now();
    let rep = sup_discrepancy(&ma.v, &mb.v, &cfg.dom, &cfg.ray_sampling())?;
    let m = lipschitz_bound(&ma.v, &cfg.dom, 2, cfg.lipschitz_step).max(lipschitz_bound(&mb.v, &cfg.dom, 2, cfg.lipschitz_step));
    let v_bound = pointwise_bound(rep.sup, m)?;
    t.rays_ms = start.elapsed().as_secs_f64() * 1e3;
    let max = |f: fn(&SiteRow) -> f64| sites.iter().map(f).fold(0.0, f64::max);
    let delta = max(|r| r.delta);
    let h_error = max(|r| r.h_recovered.abs());
    let omega1 = delta.powf(0.4) + h_error;
    let sf = cfg.s as f64;
    Ok(RowData {
        delta,
        trilinear: max(|r| r.trilinear),
        h_error,
        h_true: max(|r| r.h_true.abs()),
        sup_i: rep.sup,
        m,
        v_bound,
        omega1,
        tau_paper: delta.powf(2.0 / (15.0 * (sf + 2.0))),
        r_paper: omega1.powf(1.0 / ((3.0 * sf + 7.0) * (6.0 * sf + 5.0))),
        tau_used: prep.sites[0].probe.tau_ladder.clone(),
        r_used: prep.sites.iter().map(|s| s.cfg.r).collect(),
        sites,
    })
}

/// One row per ladder entry; a failing row records its error and the
/// sweep continues. Rows run one after another, each parallel inside.
pub fn run_stability_sweep(cfg: &ExperimentConfig) -> Result<(StabilityReport, Timings)> {
    let start = Instant::now();
    let prep = prepare(cfg)?;
    let mut timings = Timings { prepare_ms: start.elapsed().as_secs_f64() * 1e3, rows: vec![] };
    let mut rows = vec![];
    for &c in &cfg.delta_ladder {
        let mut t = RowTiming { scale: c, ..Default::default() };
        let row = match run_row(cfg, &prep, c, &mut t) {
            Ok(d) => Row { scale: c, data: Some(d), error: None },
            Err(e) => Row { scale: c, data: None, error: Some((&e).into()) },
        };
        rows.push(row);
        timings.rows.push(t);
    }
    let fits = Channel::ALL.iter().map(|&c| fit_channel(&rows, c, cfg.s)).collect();
    Ok((StabilityReport { schema: SCHEMA, s: cfg.s, rows, fits }, timings))
}

const CSV_HEADER: &str = "scale,delta,trilinear,h_error,h_true,sup_i,m,v_bound,omega1,tau_paper,r_paper,error";

pub fn write_csv(report: &StabilityReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &report.rows {
        match (&r.data, &r.error) {
            (Some(d), _) => writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},",
                r.scale, d.delta, d.trilinear, d.h_error, d.h_true, d.sup_i, d.m, d.v_bound, d.omega1, d.tau_paper, d.r_paper
            )?,
            (None, e) => {
                let msg = e.as_ref().map(|e| e.kind.as_str()).unwrap_or("unknown");
                writeln!(w, "{},,,,,,,,,,,{}", r.scale, msg)?
            }
        }
    }
    Ok(())
}

/// Gnuplot script: one log-log chart per channel against δ, with the
/// fitted `C δ^target` line.
pub fn write_gnuplot(report: &StabilityReport, w: &mut impl Write) -> Result<()> {
    writeln!(w, "set datafile separator ','")?;
    writeln!(w, "set logscale xy")?;
    writeln!(w, "set xlabel 'measured delta'")?;
    writeln!(w, "set key left top")?;
    writeln!(w, "set terminal pngcairo size 800,600")?;
    for (col, c) in [(3, Channel::Trilinear), (4, Channel::HError), (6, Channel::SupI), (8, Channel::VBound)] {
        let f = report.fit(c);
        writeln!(w, "set output '{}.png'", c.name())?;
        writeln!(w, "set ylabel '{}'", c.name())?;
        match f.constant {
            Some(k) => writeln!(
                w,
                "plot 'report.csv' every ::1 using 2:{col} with linespoints title '{}', {k:e}*x**{:.6} title 'C delta^{:.4}'",
                c.name(),
                f.target,
                f.target
            )?,
            None => writeln!(w, "plot 'report.csv' every ::1 using 2:{col} with linespoints title '{}'", c.name())?,
        }
    }
    Ok(())
}

/// `report.json`, `report.csv`, `plots.gp` and the `timings.json` sidecar.
pub fn write_outputs(report: &StabilityReport, timings: &Timings, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("report.csv"))?);
    write_csv(report, &mut csv)?;
    csv.flush()?;
    let mut gp = std::io::BufWriter::new(std::fs::File::create(dir.join("plots.gp"))?);
    write_gnuplot(report, &mut gp)?;
    gp.flush()?;
    std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(timings)?)?;
    Ok(())
}
