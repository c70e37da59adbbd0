//! Directional wave-packet sources and their ε-weighted composition.

use serde::{Deserialize, Serialize};

use crate::coef::taper;
use crate::error::{Error, Result};
use crate::geometry::{Covector, DomainSpec, Event, InteractionConfig};
use crate::grid::{sobolev_norm, Field, Region, SpacetimeGrid, Window};

/// Support radius in units of σ.
pub const SUPPORT_SIGMAS: f64 = 4.0;
/// The envelope is untouched up to this fraction of the support radius.
pub const TAPER_START: f64 = 0.25;
/// Extra cells kept around the support so edge stencils see zeros.
const PAD: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub center: Event,
    pub direction: Covector,
    pub sigma: f64,
    pub lambda: f64,
    pub k: usize,
}

impl SourceSpec {
    /// Order parameter `μ = −s − 3/2` of the idealized cutoff.
    pub fn mu(s: usize) -> f64 {
        -(s as f64) - 1.5
    }

    pub fn support_radius(&self) -> f64 {
        SUPPORT_SIGMAS * self.sigma
    }

    pub fn validate(&self, dom: &DomainSpec) -> Result<()> {
        if !(self.sigma > 0.0) || self.lambda * self.sigma < 4.0 {
            return Err(Error::Domain(format!(
                "source {}: lambda*sigma = {} must be at least 4",
                self.k,
                self.lambda * self.sigma
            )));
        }
        let r = self.support_radius();
        let c = &self.center;
        if c.t() - r <= 0.0 || c.t() + r >= dom.t_max || c.rad() + r >= dom.rho {
            return Err(Error::ConfigInfeasible(format!(
                "source {}: support ball of radius {r} around {:?} leaves the cylinder",
                self.k, c.0
            )));
        }
        Ok(())
    }

    /// Unnormalized packet value at `p`.
    pub fn shape(&self, p: &Event) -> f64 {
        let dp = p.sub(&self.center);
        let q = dp.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r = self.support_radius();
        if q >= r {
            return 0.0;
        }
        let env = (-(q * q) / (2.0 * self.sigma * self.sigma)).exp() * taper(q / r, TAPER_START);
        env * (self.lambda * self.direction.pair(&dp)).cos()
    }

    pub fn window(&self, grid: &SpacetimeGrid) -> Window {
        let r = self.support_radius();
        let c = self.center;
        Window::around(grid, c.t() - r, c.t() + r, &c.0[1..], r, PAD)
    }
}

/// Sample the packet and scale it to unit `ℋˢ(Ω)` norm.
pub fn realize_packet(spec: &SourceSpec, grid: &SpacetimeGrid, dom: &DomainSpec, s: usize) -> Result<Field> {
    spec.validate(dom)?;
    let win = spec.window(grid);
    let mut f = Field::from_fn(grid, win, |t, x| spec.shape(&Event::new(t, &x[..grid.d])));
    let n = sobolev_norm(&f, s, &Region::omega(dom))?;
    if !(n > 0.0) {
        return Err(Error::NoSignal(format!("source {} has no samples on the grid", spec.k)));
    }
    f.scale(1.0 / n);
    Ok(f)
}

/// How sources are derived from an interaction configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceTemplate {
    /// Wavenumber of the first (fastest-oscillating) source; the others
    /// follow the resonance condition `λ_j ∝ κ_j`.
    pub lambda: f64,
    /// Packet width; defaults to the smallest width with `λσ ≥ 4` for all three.
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl SourceTemplate {
    /// Resonant wavenumbers `λ_j = K κ_j / r²` with `λ_1 = lambda`, and the
    /// output carrier `K`.
    pub fn wavenumbers(&self, cfg: &InteractionConfig) -> ([f64; 3], f64) {
        let k_out = self.lambda * cfg.r * cfg.r / cfg.kappa[0];
        (cfg.kappa.map(|k| k_out * k / (cfg.r * cfg.r)), k_out)
    }

    pub fn specs(&self, cfg: &InteractionConfig) -> [SourceSpec; 3] {
        let (lam, _) = self.wavenumbers(cfg);
        let lmin = lam.iter().cloned().fold(f64::INFINITY, f64::min);
        let sigma = self.sigma.unwrap_or(4.0 / lmin * (1.0 + 1e-9));
        [0, 1, 2].map(|j| SourceSpec {
            center: cfg.x[j],
            direction: cfg.xi[j],
            sigma,
            lambda: lam[j],
            k: j + 1,
        })
    }
}

/// Three realized, normalized packets with their amplitudes.
#[derive(Clone, Debug)]
pub struct SourceSet {
    pub specs: Vec<SourceSpec>,
    pub fields: Vec<Field>,
    pub eps: [f64; 3],
}

impl SourceSet {
    pub fn realize(specs: &[SourceSpec], grid: &SpacetimeGrid, dom: &DomainSpec, s: usize, eps: [f64; 3]) -> Result<SourceSet> {
        if specs.len() != 3 {
            return Err(Error::Invalid(format!("expected 3 sources, got {}", specs.len())));
        }
        let fields = crate::par::map(specs, |sp| realize_packet(sp, grid, dom, s)).into_iter().collect::<Result<Vec<_>>>()?;
        Ok(SourceSet { specs: specs.to_vec(), fields, eps })
    }

    pub fn with_eps(&self, eps: [f64; 3]) -> SourceSet {
        SourceSet { eps, ..self.clone() }
    }

    /// `Σ ε_j f_j` over the sources selected by `mask`.
    pub fn compose_subset(&self, mask: [bool; 3]) -> Result<Field> {
        let terms: Vec<(f64, &Field)> =
            (0..3).map(|j| (if mask[j] { self.eps[j] } else { 0.0 }, &self.fields[j])).collect();
        Field::combine(&terms)
    }

    pub fn grid(&self) -> &SpacetimeGrid {
        &self.fields[0].grid
    }
}

/// `ε₁f₁ + ε₂f₂ + ε₃f₃`.
pub fn compose(set: &SourceSet) -> Result<Field> {
    set.compose_subset([true; 3])
}
