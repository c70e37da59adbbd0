//! Synthetic conormal waves for probe-order checks.

use waveinv::geometry::a_of;
use waveinv::probe::{fit_scaling_with, pairings, ProbeSpec};
use waveinv::{Covector, DomainSpec, Event, Field, SpacetimeGrid};

use super::DX;

/// Cylinder and grid just large enough for a probe of the given width at
/// the center.
pub fn setup(width: f64) -> (DomainSpec, SpacetimeGrid, Event) {
    let r = 4.0 * width + 4.0 * DX;
    let dom = DomainSpec { d: 2, t_max: 2.0 * r + 2.0 * DX, rho: 1.2 * r, rho1: r, rho2: 0.9 * r, t1: 0.05, t2: 0.1 };
    let half = (r / DX).ceil() as usize + 2;
    let grid = SpacetimeGrid::new(2, half as f64 * DX, 2 * half + 1, dom.t_max, 0.5).unwrap();
    let z = Event::new(0.5 * dom.t_max, &[0.0, 0.0]);
    (dom, grid, z)
}

pub fn out_covector(r0: f64) -> Covector {
    Covector::new(-1.0, &[-a_of(r0), r0])
}

pub fn spec(z: Event, width: f64, tau0: f64) -> ProbeSpec {
    ProbeSpec {
        z,
        zeta: out_covector(0.2),
        cutoff_width: width,
        tau_ladder: [1.0, 1.5, 2.0, 3.0].iter().map(|t| t * tau0).collect(),
        s: 4,
    }
}

/// `w(ψ) = ∫_{k0}^{k1} k^{−p} cos(kψ) dk` tabulated with its derivative and
/// evaluated by cubic Hermite interpolation.
pub struct ConormalProfile {
    h: f64,
    psi_max: f64,
    w: Vec<f64>,
    dw: Vec<f64>,
}

impl ConormalProfile {
    pub fn new(p: f64, k0: f64, k1: f64, psi_max: f64) -> Self {
        let h = 0.05 / k1;
        let n_psi = (2.0 * psi_max / h).ceil() as usize + 1;
        // Simpson in k, resolving the fastest phase k·psi_max.
        let mut nk = ((k1 - k0) * psi_max * 8.0).ceil() as usize;
        nk += nk % 2;
        let dk = (k1 - k0) / nk as f64;
        let nodes: Vec<(f64, f64)> = (0..=nk)
            .map(|i| {
                let wgt = if i == 0 || i == nk { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                let k = k0 + i as f64 * dk;
                // Smooth onset over [k0, 2k0].
                let on = waveinv::coef::taper(((2.0 * k0 - k) / k0).max(0.0), 0.0);
                (k, wgt * dk / 3.0 * k.powf(-p) * on)
            })
            .collect();
        let (mut w, mut dw) = (Vec::with_capacity(n_psi), Vec::with_capacity(n_psi));
        for j in 0..n_psi {
            let psi = -psi_max + j as f64 * h;
            let (mut a, mut b) = (0.0, 0.0);
            for &(k, c) in &nodes {
                let (s, co) = (k * psi).sin_cos();
                a += c * co;
                b -= c * k * s;
            }
            w.push(a);
            dw.push(b);
        }
        ConormalProfile { h, psi_max, w, dw }
    }

    pub fn eval(&self, psi: f64) -> f64 {
        let x = (psi + self.psi_max) / self.h;
        let j = (x.floor() as usize).min(self.w.len() - 2);
        let u = x - j as f64;
        let (h00, h10, h01, h11) =
            (2.0 * u.powi(3) - 3.0 * u * u + 1.0, u.powi(3) - 2.0 * u * u + u, -2.0 * u.powi(3) + 3.0 * u * u, u.powi(3) - u * u);
        h00 * self.w[j] + h10 * self.h * self.dw[j] + h01 * self.w[j + 1] + h11 * self.h * self.dw[j + 1]
    }
}

/// Fitted τ-order of a band-limited conormal wave whose symbol has the
/// probe's principal order; `k_on` is where the band's smooth onset begins,
/// in units of the finest ladder frequency.
pub fn conormal_fit(s: usize, k_on: f64) -> (f64, f64) {
    // τ₀ = dx is the finest resolvable scale for |ζ| = √2; the cutoff is
    // 30 τ₀ wide so that averaging the symbol over the cutoff's spectral
    // width biases the fitted order by well under 1.
    let (tau0, width) = (DX, 30.0 * DX);
    let (dom, grid, z) = setup(width);
    let p = ProbeSpec { s, ..spec(z, width, tau0) };
    p.validate(&grid, &dom).unwrap();
    let order = p.principal_order();
    let psi_max = p.zeta.euclid() * p.support_radius() * 1.01;
    let prof = ConormalProfile::new(order, k_on / tau0, 2.5 / tau0, psi_max);
    let w = Field::from_fn(&grid, p.window(&grid), |t, x| prof.eval(p.psi(&Event::new(t, &x[..2]))));
    let pr = pairings(&w, &p).unwrap();
    let res = fit_scaling_with(&p.tau_ladder, &pr, f64::INFINITY).unwrap();
    (order, res.fitted_order)
}

/// Band onset below the coarsest ladder frequency `1/(3τ₀)`, so the symbol
/// is a pure power on every frequency the ladder resolves.
pub const K_ON: f64 = 0.1;

