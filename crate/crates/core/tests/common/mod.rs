//! Shared experiment layouts. Lengths are designed in cells (dx = 1,
//! fastest source wavenumber 1) and scaled to physical units with
//! dx = 0.01 so that probe cutoffs have ‖φ‖_L1 ≤ 1.
#![allow(dead_code)]

pub mod conormal;
pub mod experiments;
pub mod oracles;
pub mod rays;

use waveinv::geometry::{a_of, build_interaction};
use waveinv::sources::SourceTemplate;
use waveinv::{DomainSpec, Event, InteractionConfig, SpacetimeGrid};

pub const DX: f64 = 0.01;

pub struct Layout {
    pub dom: DomainSpec,
    pub grid: SpacetimeGrid,
    pub cfg: InteractionConfig,
    pub template: SourceTemplate,
    pub k_out: f64,
    pub sigma: f64,
}

/// `rho`, `y_x1`, `s_in`, `s_out`, probe radius, all in cells.
pub fn layout(rho: f64, y_x1: f64, s_in: f64, s_out: f64, probe_r: f64, r: f64, r0: f64) -> Layout {
    layout_sigma(rho, y_x1, s_in, s_out, probe_r, r, r0, 8.0)
}

#[allow(clippy::too_many_arguments)]
pub fn layout_sigma(rho: f64, y_x1: f64, s_in: f64, s_out: f64, probe_r: f64, r: f64, r0: f64, sigma: f64) -> Layout {
    let t_y = s_in + 4.0 * sigma + 1.0;
    let t_z = t_y + s_out;
    let t_max = t_z + probe_r + 1.0;
    let c = DX;
    let dom = DomainSpec {
        d: 2,
        t_max: t_max * c,
        rho: rho * c,
        rho1: 0.8 * rho * c,
        rho2: 0.6 * rho * c,
        t1: 0.05 * t_max * c,
        t2: 0.1 * t_max * c,
    };
    let half = (rho + t_max).ceil() as usize + 2;
    let grid = SpacetimeGrid::new(2, half as f64 * c, 2 * half + 1, dom.t_max, 0.5).unwrap();
    let y = Event::new(t_y * c, &[y_x1 * c, 0.0]);
    let z = Event::new(t_z * c, &[(y_x1 - s_out * a_of(r0)) * c, s_out * r0 * c]);
    let cfg = build_interaction(&dom, y, z, r, s_in * c).unwrap();
    let template = SourceTemplate { lambda: 1.0 / c, sigma: Some(sigma * c) };
    let (_, k_out) = template.wavenumbers(&cfg);
    Layout { dom, grid, cfg, template, k_out, sigma: sigma * c }
}

/// Layout for the V channel (valid for r = 0.6 and r = 0.3).
pub fn v_layout(r: f64) -> Layout {
    layout(88.0, 90.0, 62.0, 28.0, 24.0, r, 0.2)
}

/// Layout for the h channel: y well outside Ω so a bump around y misses Ω.
pub fn h_layout(r: f64) -> Layout {
    layout(111.0, 127.0, 85.0, 44.0, 24.0, r, 0.2)
}

/// Smallest `ρ` (cells) with y just outside Ω that keeps every source
/// support and the probe support inside Ω.
pub fn auto_layout(r: f64, r0: f64, sigma: f64, s_in: f64, s_out: f64, probe_r: f64) -> Layout {
    let (a, a0) = (a_of(r), a_of(r0));
    let fits = |rho: f64| {
        let y = rho + 2.0;
        let xs = [(y - s_in, 0.0), (y - a * s_in, r * s_in)];
        let z = (y - a0 * s_out, r0 * s_out);
        xs.iter().all(|x| x.0.hypot(x.1) + 4.0 * sigma + 1.0 < rho) && z.0.hypot(z.1) + probe_r + 1.0 < rho
    };
    let mut rho = 4.0 * sigma;
    while !fits(rho) {
        rho += 1.0;
        assert!(rho < 2000.0, "no layout for r = {r}");
    }
    layout_sigma(rho, rho + 2.0, s_in, s_out, probe_r, r, r0, sigma)
}

/// Smallest grid (over `ρ` and `s_in`) with y just outside Ω, every source
/// support and the probe support inside Ω, and the incoming packets
/// separated by at least five widths at their sources.
pub fn compact_layout(r: f64, r0: f64, sigma: f64, s_out: f64, probe_r: f64) -> Layout {
    compact_layout_offset(r, r0, sigma, s_out, probe_r, 2.0)
}

/// As [`compact_layout`] with y placed `y_out` cells outside Ω.
pub fn compact_layout_offset(r: f64, r0: f64, sigma: f64, s_out: f64, probe_r: f64, y_out: f64) -> Layout {
    let (a, a0) = (a_of(r), a_of(r0));
    let sep = (1.0 - a).hypot(r).min(2.0 * r);
    let s_min = (5.0 * sigma / sep).max(4.0 * sigma + 2.0);
    let mut best: Option<(f64, f64, f64)> = None;
    let mut rho = 4.0 * sigma + 5.0;
    while rho < 2000.0 {
        if let Some((n, _, _)) = best {
            if 2.0 * rho > n {
                break;
            }
        }
        let (y, rr) = (rho + y_out, rho - 4.0 * sigma - 1.0);
        let z_ok = (y - a0 * s_out).hypot(r0 * s_out) + probe_r + 1.0 < rho;
        let mut s = s_min;
        while z_ok && s < s_min + 600.0 {
            if (y - s).abs() <= rr && (y - a * s).hypot(r * s) <= rr {
                let n = 2.0 * (rho + s + 4.0 * sigma + 1.0 + s_out + probe_r + 1.0) + 1.0;
                if best.is_none_or(|b| n < b.0) {
                    best = Some((n, rho, s));
                }
            }
            s += 1.0;
        }
        rho += 1.0;
    }
    let (_, rho, s_in) = best.unwrap_or_else(|| panic!("no layout for r = {r}"));
    layout_sigma(rho, rho + y_out, s_in, s_out, probe_r, r, r0, sigma)
}

/// A cheap converging triple for linearization checks: packets (about
/// six cells per wavelength) meet at a point inside Ω on a 289-point grid
/// with dx = 0.02.
pub struct Triple {
    pub dom: DomainSpec,
    pub grid: SpacetimeGrid,
    pub set: waveinv::SourceSet,
    pub meet: Event,
}

pub fn small_triple() -> Triple {
    use waveinv::geometry::{musical_raise, solve_kappa, standard_covectors};
    let (r, r0) = (0.6, 0.2);
    let (xi, _) = standard_covectors(r, r0).unwrap();
    let kappa = solve_kappa(r, r0).unwrap();
    let lambda1 = 50.0;
    let lam = kappa.map(|k| lambda1 * k / kappa[0]);
    let sigma = 4.0 / lam.iter().cloned().fold(f64::INFINITY, f64::min) * (1.0 + 1e-9);
    let s_in = 0.3;
    let support = 4.0 * sigma;
    let meet = Event::new(support + 0.02 + s_in, &[0.0, 0.0]);
    let dom = DomainSpec {
        d: 2,
        t_max: meet.t() + support + 0.05,
        rho: s_in + support + 0.04,
        rho1: 0.8 * (s_in + support),
        rho2: 0.6 * (s_in + support),
        t1: 0.05,
        t2: 0.1,
    };
    let grid = SpacetimeGrid::new(2, 2.88, 289, dom.t_max, 0.5).unwrap();
    let specs: Vec<_> = (0..3)
        .map(|k| waveinv::SourceSpec {
            center: meet.add_scaled(-s_in, &musical_raise(&xi[k]).unwrap()),
            direction: xi[k],
            sigma,
            lambda: lam[k],
            k: k + 1,
        })
        .collect();
    let set = waveinv::SourceSet::realize(&specs, &grid, &dom, 4, [1.0; 3]).unwrap();
    Triple { dom, grid, set, meet }
}
