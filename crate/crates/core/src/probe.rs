//! Oscillatory-pairing probes of the interaction wave: amplitude ratios for
//! `h`, the remainder-to-antiderivative ratio for ray integrals of `V`, and
//! τ-scaling fits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coef::{taper, Coef};
use crate::error::{Error, Result};
use crate::fit;
use crate::geometry::{Covector, DomainSpec, Event, InteractionConfig};
use crate::grid::{Field, SpacetimeGrid, Window};
use crate::par;
use crate::raytransform::truncated_integral;
use crate::solver::Model;
use crate::sources::{SourceSpec, TAPER_START};

/// φ is cut off at this many widths.
pub const CUTOFF_WIDTHS: f64 = 4.0;
/// Default RMS log-residual above which a scaling fit is rejected.
pub const FIT_RESIDUAL_MAX: f64 = 0.25;
/// A reference pairing smaller than this fraction of `∫|w|φ` is noise.
pub const NOISE_REL: f64 = 1e-9;
/// Default ladder, in units of `1/K` for carrier wavenumber `K`.
pub const TAU_LADDER: [f64; 4] = [1.0, 1.5, 2.0, 3.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub z: Event,
    pub zeta: Covector,
    pub cutoff_width: f64,
    pub tau_ladder: Vec<f64>,
    pub s: usize,
}

impl ProbeSpec {
    /// Probe at the end of the out-ray of `cfg`, for an interaction wave
    /// with carrier wavenumber `k_out`; `width` is in units of `1/k_out`.
    pub fn for_config(cfg: &InteractionConfig, k_out: f64, width: f64, s: usize) -> ProbeSpec {
        ProbeSpec {
            z: cfg.z,
            zeta: cfg.eta,
            cutoff_width: width / k_out,
            tau_ladder: TAU_LADDER.iter().map(|t| t / k_out).collect(),
            s,
        }
    }

    pub fn support_radius(&self) -> f64 {
        CUTOFF_WIDTHS * self.cutoff_width
    }

    /// Cutoff `φ`, with `φ(z) = 1`.
    pub fn phi(&self, p: &Event) -> f64 {
        let q = p.sub(&self.z).iter().map(|v| v * v).sum::<f64>().sqrt();
        let w = self.cutoff_width;
        (-(q * q) / (2.0 * w * w)).exp() * taper(q / self.support_radius(), TAPER_START)
    }

    /// Phase `ψ(x) = ⟨x − z, ζ⟩`.
    pub fn psi(&self, p: &Event) -> f64 {
        self.zeta.pair(&p.sub(&self.z))
    }

    /// `‖φ‖_{L¹}` in `d + 1` dimensions (radial quadrature).
    pub fn l1_norm(&self, d: usize) -> f64 {
        let r = self.support_radius();
        let n = 4000;
        let h = r / n as f64;
        // |S^d| for the unit sphere in R^{d+1}
        let area = match d {
            1 => std::f64::consts::TAU,
            2 => 4.0 * std::f64::consts::PI,
            _ => 2.0 * std::f64::consts::PI * std::f64::consts::PI,
        };
        let w = self.cutoff_width;
        (1..n)
            .map(|k| {
                let q = k as f64 * h;
                (-(q * q) / (2.0 * w * w)).exp() * taper(q / r, TAPER_START) * q.powi(d as i32)
            })
            .sum::<f64>()
            * h
            * area
    }

    /// Expected τ-order of the principal probe, `−3μ + 1/2`.
    pub fn principal_order(&self) -> f64 {
        -3.0 * SourceSpec::mu(self.s) + 0.5
    }

    /// Expected τ-order of the remainder probe, `−3μ + 3/2`.
    pub fn remainder_order(&self) -> f64 {
        -3.0 * SourceSpec::mu(self.s) + 1.5
    }

    pub fn validate(&self, grid: &SpacetimeGrid, dom: &DomainSpec) -> Result<()> {
        if !(self.cutoff_width > 0.0) {
            return Err(Error::Invalid(format!("cutoff width {}", self.cutoff_width)));
        }
        if self.tau_ladder.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Invalid("tau ladder must be positive".into()));
        }
        let l1 = self.l1_norm(grid.d);
        if l1 > 1.0 {
            return Err(Error::Domain(format!("‖φ‖_L1 = {l1:.3e} exceeds 1; shrink the cutoff width")));
        }
        let r = self.support_radius();
        let z = &self.z;
        if z.t() - r <= 0.0 || z.t() + r >= dom.t_max || z.rad() + r >= dom.rho {
            return Err(Error::Domain(format!("probe support of radius {r} at {:?} leaves Ω", z.0)));
        }
        if z.t() + r > grid.t_max || z.rad() + r >= grid.l {
            return Err(Error::GridTooSmall(format!("probe support at {:?} leaves the grid", z.0)));
        }
        Ok(())
    }

    pub fn window(&self, grid: &SpacetimeGrid) -> Window {
        let r = self.support_radius();
        Window::around(grid, self.z.t() - r, self.z.t() + r, &self.z.0[1..], r, 1)
    }

    pub fn rotated(&self, theta: f64) -> ProbeSpec {
        ProbeSpec { z: self.z.rotated(theta), zeta: self.zeta.rotated(theta), ..self.clone() }
    }

    pub fn with_width(&self, w: f64) -> ProbeSpec {
        ProbeSpec { cutoff_width: w, ..self.clone() }
    }
}

/// Grid samples of `φ` and `ψ` over the probe support.
struct Prepared {
    pts: Vec<(usize, [usize; 3], f64, f64)>,
    vol: f64,
}

impl Prepared {
    fn new(p: &ProbeSpec, grid: &SpacetimeGrid) -> Prepared {
        let win = p.window(grid);
        let mut pts = vec![];
        for k in win.t0..win.t1 {
            for i in win.lo[0]..win.hi[0] {
                for j in win.lo[1]..win.hi[1] {
                    for l in win.lo[2]..win.hi[2] {
                        let idx = [i, j, l];
                        let x = Event::new(grid.t(k), &[grid.x(i), grid.x(j), grid.x(l)][..grid.d]);
                        let phi = p.phi(&x);
                        if phi > 0.0 {
                            pts.push((k, idx, phi, p.psi(&x)));
                        }
                    }
                }
            }
        }
        Prepared { pts, vol: grid.cell_volume() }
    }

    fn check_covered(&self, w: &Field) -> Result<()> {
        match self.pts.iter().find(|(k, i, _, _)| !w.win.contains_index(*k, *i)) {
            Some((k, i, _, _)) => Err(Error::GridMismatch(format!(
                "probe support point (k={k}, i={i:?}) outside the recorded window"
            ))),
            None => Ok(()),
        }
    }

    fn pair(&self, w: &Field, tau: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(k, i, phi, psi) in &self.pts {
            let v = w.get(k, i);
            if v != 0.0 {
                acc += Complex64::from_polar(v * phi, -psi / tau);
            }
        }
        acc * self.vol
    }

    fn abs_mass(&self, w: &Field) -> f64 {
        self.pts.iter().map(|&(k, i, phi, _)| w.get(k, i).abs() * phi).sum::<f64>() * self.vol
    }
}

fn check_tau(p: &ProbeSpec, grid: &SpacetimeGrid, tau: f64) -> Result<()> {
    let q = p.zeta.euclid() * grid.dx().max(grid.dt()) / tau;
    if !(tau > 0.0) || q > std::f64::consts::FRAC_PI_2 {
        return Err(Error::UnresolvedPhase(q));
    }
    Ok(())
}

/// `⟨w, φ e^{−iψ/τ}⟩` by trapezoidal quadrature (φ vanishes on the boundary
/// of its support, so the rule reduces to a plain sum).
pub fn oscillatory_pairing(w: &Field, p: &ProbeSpec, tau: f64) -> Result<Complex64> {
    check_tau(p, &w.grid, tau)?;
    let prep = Prepared::new(p, &w.grid);
    prep.check_covered(w)?;
    Ok(prep.pair(w, tau))
}

/// Pairings of `w` over the whole τ ladder.
pub fn pairings(w: &Field, p: &ProbeSpec) -> Result<Vec<Complex64>> {
    Ok(pairings_many(&[w], p)?.pop().expect("one field"))
}

/// Pairings of several fields over the ladder, sharing one φ tabulation.
pub fn pairings_many(ws: &[&Field], p: &ProbeSpec) -> Result<Vec<Vec<Complex64>>> {
    let Some(first) = ws.first() else { return Ok(vec![]) };
    for t in &p.tau_ladder {
        check_tau(p, &first.grid, *t)?;
    }
    let prep = Prepared::new(p, &first.grid);
    for w in ws {
        if w.grid != first.grid {
            return Err(Error::GridMismatch("probe fields on different grids".into()));
        }
        prep.check_covered(w)?;
    }
    let jobs: Vec<(usize, f64)> = (0..ws.len()).flat_map(|i| p.tau_ladder.iter().map(move |&t| (i, t))).collect();
    let vals = par::map(&jobs, |&(i, t)| prep.pair(ws[i], t));
    Ok(vals.chunks(p.tau_ladder.len()).map(|c| c.to_vec()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub taus: Vec<f64>,
    pub pairings: Vec<Complex64>,
    pub fitted_order: f64,
    pub fitted_amplitude: Complex64,
    pub fit_residual: f64,
}

/// Fit `P(τ) ≈ c τ^a` by least squares in `log|P|` vs `log τ`; the
/// amplitude is the mean of `P_k τ_k^{−a}`.
pub fn fit_scaling(taus: &[f64], pairings: &[Complex64]) -> Result<ProbeResult> {
    fit_scaling_with(taus, pairings, FIT_RESIDUAL_MAX)
}

pub fn fit_scaling_with(taus: &[f64], pairings: &[Complex64], max_residual: f64) -> Result<ProbeResult> {
    if taus.len() != pairings.len() {
        return Err(Error::Invalid("ladder and pairings differ in length".into()));
    }
    if taus.len() < 4 {
        return Err(Error::Invalid(format!("scaling fit needs at least 4 ladder points, got {}", taus.len())));
    }
    let pts: Vec<(f64, f64)> = taus.iter().zip(pairings).map(|(t, p)| (*t, p.norm())).collect();
    let lf = fit::loglog(&pts).map_err(|e| Error::UnstableFit(e.to_string()))?;
    if !(lf.residual <= max_residual) {
        return Err(Error::UnstableFit(format!("log residual {:.3e} above {max_residual}", lf.residual)));
    }
    let amp = taus.iter().zip(pairings).map(|(t, p)| p / t.powf(lf.slope)).sum::<Complex64>() / taus.len() as f64;
    Ok(ProbeResult {
        taus: taus.to_vec(),
        pairings: pairings.to_vec(),
        fitted_order: lf.slope,
        fitted_amplitude: amp,
        fit_residual: lf.residual,
    })
}

/// Pair `w` over the ladder and fit its scaling.
pub fn probe(w: &Field, p: &ProbeSpec) -> Result<ProbeResult> {
    fit_scaling(&p.tau_ladder, &pairings(w, p)?)
}

/// Least-squares complex ratio `β` minimizing `Σ|num_k − β den_k|²`.
pub fn ls_ratio(num: &[Complex64], den: &[Complex64]) -> Option<Complex64> {
    let d2: f64 = den.iter().map(|d| d.norm_sqr()).sum();
    if !(d2 > 0.0) {
        return None;
    }
    Some(num.iter().zip(den).map(|(n, d)| d.conj() * n).sum::<Complex64>() / d2)
}

fn reference_ratio(num: &[Complex64], den: &[Complex64], mass: f64, what: &str) -> Result<Complex64> {
    let dn = den.iter().map(|d| d.norm_sqr()).sum::<f64>().sqrt();
    if !(dn > NOISE_REL * mass) {
        return Err(Error::NoSignal(format!("{what}: reference pairing {dn:.3e} at noise level")));
    }
    ls_ratio(num, den).ok_or_else(|| Error::NoSignal(what.to_string()))
}

/// Output of the `h` channel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HRecovery {
    /// Leading-order `(h_A − h_B)(y)`.
    pub value: f64,
    /// `β = P(A − B) / P(A)` (least squares over the ladder).
    pub beta: Complex64,
    pub h_ref: f64,
    pub ref_pairings: Vec<Complex64>,
}

/// `(h_A − h_B)(y)` from the interaction waves of two models: the common
/// geometric factor cancels in the ratio of probe amplitudes.
pub fn recover_h_difference(ma: &Model, cfg: &InteractionConfig, p: &ProbeSpec, ua: &Field, ub: &Field) -> Result<HRecovery> {
    let diff = Field::combine(&[(1.0, ua), (-1.0, ub)])?;
    let pr = pairings_many(&[ua, &diff], p)?;
    let mass = Prepared::new(p, &ua.grid).abs_mass(ua);
    let beta = reference_ratio(&pr[1], &pr[0], mass, "h channel")?;
    let h_ref = ma.h.eval(&cfg.y);
    Ok(HRecovery { value: beta.re * h_ref, beta, h_ref, ref_pairings: pr[0].clone() })
}

/// `∂_t⁻¹ w`: cumulative trapezoid in time from the first recorded slice,
/// which must precede the signal.
pub fn time_antiderivative(w: &Field) -> Result<Field> {
    if w.win.t0 > 0 && w.slice(w.win.t0).iter().any(|v| *v != 0.0) {
        return Err(Error::Invalid("antiderivative needs a record starting before the signal".into()));
    }
    let dt = w.grid.dt();
    let mut out = Field::zeros(&w.grid, w.win);
    for k in w.win.t0 + 1..w.win.t1 {
        let (a, b) = (w.slice(k - 1), w.slice(k));
        let prev: Vec<f64> = out.slice(k - 1).to_vec();
        for (((o, p), x), y) in out.slice_mut(k).iter_mut().zip(prev).zip(a).zip(b) {
            *o = p + 0.5 * dt * (x + y);
        }
    }
    out.region = w.region.clone();
    Ok(out)
}

/// Output of the `V` channel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VRecovery {
    /// Estimate of `∫_{γout} V`, up to the `O(r²)` incoming-ray terms.
    pub estimate: f64,
    /// `β = P(u^rem) / P(∂_t⁻¹ u^fre)`.
    pub beta: Complex64,
    /// Incoming-ray integrals `∫_{γ_i} V` (verification mode).
    pub incoming: Option<[f64; 3]>,
    /// The `O(r²)` incoming-ray contribution that was subtracted.
    pub incoming_term: Option<f64>,
    /// `estimate` minus the incoming-ray contribution.
    pub corrected: Option<f64>,
}

/// Incoming-ray contribution `r²(−I₁/κ₁ + I₂/κ₂ + I₃/κ₃)` to the remainder
/// ratio, with `I_i = ∫_{x_i}^{y} V`.
pub fn incoming_term(v: &Coef, cfg: &InteractionConfig, step: f64) -> Result<([f64; 3], f64)> {
    let mut ii = [0.0; 3];
    for (k, x) in cfg.x.iter().enumerate() {
        ii[k] = truncated_integral(v, x, &cfg.y, step)?;
    }
    let r2 = cfg.r * cfg.r;
    let k = cfg.kappa;
    Ok((ii, r2 * (-ii[0] / k[0] + ii[1] / k[1] + ii[2] / k[2])))
}

/// `∫_{γout} V` from `u^rem = u₁₂₃ − u₁₂₃^fre`: at leading order
/// `u^rem ≈ −½ (∫V) ∂_t⁻¹u^fre` near `z`, so the estimate is
/// `−2 Re β`. With `verify = Some(V)`, the incoming-ray terms are computed
/// by quadrature on the known model and subtracted.
pub fn recover_v_line_integral(
    cfg: &InteractionConfig,
    p: &ProbeSpec,
    u123: &Field,
    u123_fre: &Field,
    verify: Option<&Coef>,
) -> Result<VRecovery> {
    let rem = Field::combine(&[(1.0, u123), (-1.0, u123_fre)])?;
    let big_f = time_antiderivative(u123_fre)?;
    let pr = pairings_many(&[&rem, &big_f], p)?;
    let mass = Prepared::new(p, &u123_fre.grid).abs_mass(&big_f);
    let beta = reference_ratio(&pr[0], &pr[1], mass, "V channel")?;
    let estimate = -2.0 * beta.re;
    let mut out = VRecovery { estimate, beta, incoming: None, incoming_term: None, corrected: None };
    if let Some(v) = verify {
        let step = 0.5 * u123.grid.dx();
        let (ii, term) = incoming_term(v, cfg, step)?;
        out.incoming = Some(ii);
        out.incoming_term = Some(term);
        out.corrected = Some(estimate - term);
    }
    Ok(out)
}

/// `∫_{γout}(V_A − V_B)` from two models' interaction waves:
/// `−2 Re LS[P(u_A − u_B) / P(∂_t⁻¹u_A)]`.
pub fn recover_v_difference(p: &ProbeSpec, ua: &Field, ub: &Field) -> Result<VRecovery> {
    let diff = Field::combine(&[(1.0, ua), (-1.0, ub)])?;
    let big_f = time_antiderivative(ua)?;
    let pr = pairings_many(&[&diff, &big_f], p)?;
    let mass = Prepared::new(p, &ua.grid).abs_mass(&big_f);
    let beta = reference_ratio(&pr[0], &pr[1], mass, "V channel")?;
    Ok(VRecovery { estimate: -2.0 * beta.re, beta, incoming: None, incoming_term: None, corrected: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    fn setup() -> (SpacetimeGrid, DomainSpec, ProbeSpec) {
        let g = SpacetimeGrid::new(2, 1.2, 97, 2.0, 0.5).unwrap();
        let dom = DomainSpec { d: 2, t_max: 2.0, rho: 1.0, rho1: 0.9, rho2: 0.8, t1: 0.05, t2: 0.1 };
        let p = ProbeSpec {
            z: Event::new(1.0, &[0.1, -0.1]),
            zeta: Covector::new(-1.0, &[-0.6, 0.8]),
            cutoff_width: 0.08,
            tau_ladder: vec![0.03, 0.045, 0.06, 0.09],
            s: 4,
        };
        (g, dom, p)
    }

    #[test]
    fn phi_normalization() {
        let (g, dom, p) = setup();
        assert_eq!(p.phi(&p.z), 1.0);
        let l1 = p.l1_norm(2);
        // Cartesian midpoint sum as the oracle
        let (r, n) = (p.support_radius(), 120);
        let h = 2.0 * r / n as f64;
        let mut cart = 0.0;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let q = |k: usize| -r + (k as f64 + 0.5) * h;
                    cart += p.phi(&Event(p.z.0).add_scaled(1.0, &[q(a), q(b), q(c), 0.0]));
                }
            }
        }
        cart *= h * h * h;
        assert!((l1 - cart).abs() < 1e-4 * cart, "{l1} vs {cart}");
        let gauss = (2.0 * std::f64::consts::PI).powf(1.5) * 0.08f64.powi(3);
        assert!(l1 < gauss);
        p.validate(&g, &dom).unwrap();
        assert!(p.with_width(0.5).validate(&g, &dom).is_err());
    }

    #[test]
    fn zero_field_and_resolution() {
        let (g, _, p) = setup();
        let w = Field::full_zeros(&g);
        assert_eq!(oscillatory_pairing(&w, &p, 0.05).unwrap(), Complex64::new(0.0, 0.0));
        assert!(matches!(oscillatory_pairing(&w, &p, 0.01), Err(Error::UnresolvedPhase(_))));
    }

    #[test]
    fn exact_power_law_fit() {
        let taus = [0.1f64, 0.15, 0.2, 0.3];
        let c = Complex64::new(0.3, -1.2);
        let ps: Vec<Complex64> = taus.iter().map(|t| c * t.powf(5.5)).collect();
        let r = fit_scaling(&taus, &ps).unwrap();
        assert!((r.fitted_order - 5.5).abs() < 1e-10);
        assert!((r.fitted_amplitude - c).norm() < 1e-10 * c.norm());
        assert!(fit_scaling(&[], &[]).is_err());
    }

    #[test]
    fn ls_ratio_exact() {
        let den = [Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.1)];
        let b = Complex64::new(0.2, -0.7);
        let num: Vec<_> = den.iter().map(|d| b * d).collect();
        assert!((ls_ratio(&num, &den).unwrap() - b).norm() < 1e-15);
        assert!(ls_ratio(&num, &[Complex64::new(0.0, 0.0); 2]).is_none());
    }

    #[test]
    fn antiderivative_of_linear_ramp() {
        let (g, _, _) = setup();
        let w = Field::from_fn(&g, g.full_window(), |t, _| t);
        let f = time_antiderivative(&w).unwrap();
        let k = g.nt() - 1;
        assert!((f.get(k, [3, 3, 0]) - 0.5 * g.t(k).powi(2)).abs() < 1e-12);
    }
}
