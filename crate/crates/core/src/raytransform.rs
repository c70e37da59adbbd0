//! Truncated light-ray transform, its sampled discrepancy supremum and the
//! pointwise bound it certifies.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coef::{Diff, SpacetimeFn};
use crate::error::{Error, Result};
use crate::geometry::{in_cylinder, in_diamond, DomainSpec, Event, NULL_TOL};
use crate::par;

/// One ray integral between null-separated endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySample {
    pub y: Event,
    pub z: Event,
    pub n_quad: usize,
    pub value: f64,
}

fn null_parts(a: &Event, b: &Event) -> Result<(f64, [f64; 4])> {
    let d = b.sub(a);
    let dt = d[0];
    let dx = (d[1] * d[1] + d[2] * d[2] + d[3] * d[3]).sqrt();
    if (dt.abs() - dx).abs() > NULL_TOL * dt.abs().max(1.0) || dt == 0.0 {
        return Err(Error::NotNullSeparated(format!("Δt = {dt}, |Δx| = {dx}")));
    }
    Ok((dt, d))
}

/// `∫ f` along the null segment from `a` to `b`, parametrized by `|Δt|`
/// (unit time component, unit spatial speed); either orientation.
pub fn segment_integral<F: SpacetimeFn + ?Sized>(f: &F, a: &Event, b: &Event, max_step: f64) -> Result<RaySample> {
    if !(max_step > 0.0) {
        return Err(Error::Invalid(format!("quadrature step {max_step}")));
    }
    let (dt, d) = null_parts(a, b)?;
    let len = dt.abs();
    let n = (len / max_step).ceil().max(1.0) as usize;
    let mut acc = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * f.at(&a.add_scaled(k as f64 / n as f64, &d));
    }
    Ok(RaySample { y: *a, z: *b, n_quad: n + 1, value: acc * len / n as f64 })
}

/// `I_f(y, z)` for future-pointing null-separated `y`, `z`; composite
/// trapezoid with step at most `max_step`.
pub fn truncated_integral<F: SpacetimeFn + ?Sized>(f: &F, y: &Event, z: &Event, max_step: f64) -> Result<f64> {
    if z.t() <= y.t() {
        return Err(Error::NotNullSeparated("segment is not future-pointing".into()));
    }
    Ok(segment_integral(f, y, z, max_step)?.value)
}

/// How the admissible `(y, z)` pairs are sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySampling {
    /// Time levels for `y`.
    pub n_t: usize,
    /// Radial levels for `y` between `ρ` and the diamond boundary.
    pub n_r: usize,
    /// Angular positions for `y` (d = 2) or sphere points (d = 3).
    pub n_ang: usize,
    /// Ray directions per `y`.
    pub n_dirs: usize,
    pub max_step: f64,
    /// Relative jitter of the `y` lattice, seeded by `seed`.
    pub jitter: f64,
    pub seed: u64,
    /// Keep the per-ray argmax samples (for CSV export).
    #[serde(default)]
    pub keep_samples: bool,
}

impl Default for RaySampling {
    fn default() -> Self {
        RaySampling { n_t: 16, n_r: 4, n_ang: 48, n_dirs: 48, max_step: 0.01, jitter: 0.25, seed: 7, keep_samples: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SupReport {
    pub sup: f64,
    pub argmax: Option<(Event, Event)>,
    pub n_rays: usize,
    pub n_pairs: usize,
    /// Largest distance from an admissible `y` to the nearest sampled one.
    pub sample_gap: f64,
    /// Longest sampled ray parameter.
    pub max_length: f64,
    #[serde(skip)]
    pub samples: Vec<RaySample>,
}

impl SupReport {
    /// Worst-case change of `I` between a sampled start point and an
    /// unsampled one within `sample_gap`, for an integrand with spacetime
    /// Lipschitz constant `m`.
    pub fn gap_correction(&self, m: f64) -> f64 {
        std::f64::consts::SQRT_2 * m * self.sample_gap * self.max_length
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "y_t,y_x1,y_x2,y_x3,z_t,z_x1,z_x2,z_x3,I")?;
        for s in &self.samples {
            let (y, z) = (s.y.0, s.z.0);
            writeln!(w, "{},{},{},{},{},{},{},{},{}", y[0], y[1], y[2], y[3], z[0], z[1], z[2], z[3], s.value)?;
        }
        Ok(())
    }
}

fn unit_dirs(d: usize, n: usize, offset: f64) -> Vec<[f64; 3]> {
    match d {
        2 => (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * (k as f64 + offset) / n as f64;
                [a.cos(), a.sin(), 0.0]
            })
            .collect(),
        _ => {
            // Fibonacci sphere
            let g = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = g * (k as f64 + offset);
                    [r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
    }
}

/// Start points on a jittered polar lattice over `𝔻₂ \ Ω`, with the
/// lattice's covering radius.
pub fn sample_outer_points(dom: &DomainSpec, s: &RaySampling) -> (Vec<Event>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let (r2, t2) = dom.level(2);
    let ht = dom.t_max / s.n_t as f64;
    let dirs = unit_dirs(dom.d, s.n_ang, 0.0);
    let mut pts = vec![];
    let mut gap: f64 = 0.0;
    for i in 0..s.n_t {
        let t = (i as f64 + 0.5 + s.jitter * rng.gen_range(-0.5..0.5)) * ht;
        let rmax = (t - t2 + r2).min(r2 + dom.t_max - t2 - t);
        if rmax <= dom.rho {
            continue;
        }
        let hr = (rmax - dom.rho) / s.n_r as f64;
        let ang = match dom.d {
            2 => std::f64::consts::TAU * rmax / s.n_ang as f64,
            _ => rmax * (4.0 * std::f64::consts::PI / s.n_ang as f64).sqrt(),
        };
        gap = gap.max(0.5 * (ht * ht + hr * hr + ang * ang).sqrt() * (1.0 + s.jitter));
        for j in 0..s.n_r {
            let r = dom.rho + (j as f64 + 0.5 + s.jitter * rng.gen_range(-0.5..0.5)) * hr;
            for u in &dirs {
                let x = [r * u[0], r * u[1], r * u[2]];
                let p = Event::new(t, &x[..dom.d]);
                if in_diamond(&p, dom, 2) && !in_cylinder(&p, dom, 0) {
                    pts.push(p);
                }
            }
        }
    }
    (pts, gap)
}

/// `sup |I_{fA−fB}(y, z)|` over sampled `y ∈ 𝔻₂ \ Ω` and `z ∈ Ω₂` on the
/// future light rays from each `y`.
pub fn sup_discrepancy<A, B>(fa: &A, fb: &B, dom: &DomainSpec, s: &RaySampling) -> Result<SupReport>
where
    A: SpacetimeFn + ?Sized,
    B: SpacetimeFn + ?Sized,
{
    let diff = Diff(fa, fb);
    let (ys, gap) = sample_outer_points(dom, s);
    let dirs = unit_dirs(dom.d, s.n_dirs, 0.5);
    // (sup, argmax, rays, pairs, longest, kept)
    type Acc = (f64, Option<(Event, Event)>, usize, usize, f64, Vec<RaySample>);
    let per_y: Vec<Acc> = par::map(&ys, |y| {
        let mut acc: Acc = (0.0, None, 0, 0, 0.0, vec![]);
        for u in &dirs {
            let v = [1.0, u[0], u[1], u[2]];
            let len = dom.t_max - y.t();
            let n = (len / s.max_step).ceil().max(1.0) as usize;
            let h = len / n as f64;
            let (mut integral, mut prev) = (0.0, diff.at(y));
            let mut best: Option<RaySample> = None;
            let mut pairs = 0;
            for k in 1..=n {
                let p = y.add_scaled(k as f64 * h, &v);
                let cur = diff.at(&p);
                integral += 0.5 * h * (prev + cur);
                prev = cur;
                if in_cylinder(&p, dom, 2) {
                    pairs += 1;
                    if best.as_ref().is_none_or(|b| integral.abs() > b.value.abs()) {
                        best = Some(RaySample { y: *y, z: p, n_quad: k + 1, value: integral });
                    }
                }
            }
            if let Some(b) = best {
                acc.2 += 1;
                acc.3 += pairs;
                acc.4 = acc.4.max(b.z.t() - y.t());
                if b.value.abs() > acc.0 || acc.1.is_none() {
                    acc.0 = b.value.abs();
                    acc.1 = Some((b.y, b.z));
                }
                if s.keep_samples {
                    acc.5.push(b);
                }
            }
        }
        acc
    });
    let mut rep = SupReport { sup: 0.0, argmax: None, n_rays: 0, n_pairs: 0, sample_gap: gap, max_length: 0.0, samples: vec![] };
    for a in per_y {
        rep.n_rays += a.2;
        rep.n_pairs += a.3;
        rep.max_length = rep.max_length.max(a.4);
        if a.1.is_some() && (a.0 > rep.sup || rep.argmax.is_none()) {
            rep.sup = a.0;
            rep.argmax = a.1;
        }
        rep.samples.extend(a.5);
    }
    if rep.n_pairs == 0 {
        return Err(Error::EmptyPairSet);
    }
    Ok(rep)
}

/// Points of a regular spacetime lattice with spacing `h` inside `𝔻_level`.
pub fn diamond_lattice(dom: &DomainSpec, level: usize, h: f64) -> Vec<Event> {
    let (r, ti) = dom.level(level);
    let rmax = r + 0.5 * (dom.t_max - 2.0 * ti);
    let nt = (dom.t_max / h).floor() as usize;
    let nx = (rmax / h).floor() as i64;
    let mut pts = vec![];
    for k in 0..=nt {
        let t = k as f64 * h;
        for i in -nx..=nx {
            for j in -nx..=nx {
                let mut x = [i as f64 * h, j as f64 * h, 0.0];
                let planes: Vec<i64> = if dom.d == 3 { (-nx..=nx).collect() } else { vec![0] };
                for &l in &planes {
                    x[2] = l as f64 * h;
                    let p = Event::new(t, &x[..dom.d]);
                    if in_diamond(&p, dom, level) {
                        pts.push(p);
                    }
                }
            }
        }
    }
    pts
}

/// `max |f|` over the lattice of spacing `h` in `𝔻_level`.
pub fn sup_on_diamond<F: SpacetimeFn + ?Sized>(f: &F, dom: &DomainSpec, level: usize, h: f64) -> f64 {
    let pts = diamond_lattice(dom, level, h);
    par::map(&pts, |p| f.at(p).abs()).into_iter().fold(0.0, f64::max)
}

/// Spacetime gradient bound `M ≥ sup |∇f|` over `𝔻_level`: the largest
/// central-difference gradient on a lattice of spacing `h`, plus a margin
/// `h·(d+1)·max|∂²f|` covering both the difference error and the gaps
/// between lattice points.
pub fn lipschitz_bound<F: SpacetimeFn + ?Sized>(f: &F, dom: &DomainSpec, level: usize, h: f64) -> f64 {
    let pts = diamond_lattice(dom, level, h);
    let dims = dom.d + 1;
    let per: Vec<(f64, f64)> = par::map(&pts, |p| {
        let c = f.at(p);
        let (mut g2, mut hess) = (0.0, 0.0f64);
        for a in 0..dims {
            let mut e = [0.0; 4];
            e[a] = h;
            let fp = f.at(&p.add_scaled(1.0, &e));
            let fm = f.at(&p.add_scaled(-1.0, &e));
            let g = (fp - fm) / (2.0 * h);
            g2 += g * g;
            hess = hess.max(((fp - 2.0 * c + fm) / (h * h)).abs());
        }
        (g2.sqrt(), hess)
    });
    let (g, hs) = per.into_iter().fold((0.0f64, 0.0f64), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    g + h * dims as f64 * hs
}

/// `√(4√2 · M · sup_I)`: the pointwise bound on `|V − Ṽ|` over `𝔻₂`
/// certified by a line-integral discrepancy `sup_I`.
pub fn pointwise_bound(sup_i: f64, m: f64) -> Result<f64> {
    if !(sup_i >= 0.0) || !(m >= 0.0) {
        return Err(Error::Invalid(format!("pointwise bound needs sup_I ≥ 0 and M ≥ 0, got {sup_i}, {m}")));
    }
    Ok((4.0 * std::f64::consts::SQRT_2 * m * sup_i).sqrt())
}

/// JSON summary of one discrepancy evaluation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RaySummary {
    pub sup: f64,
    pub argmax: Option<(Event, Event)>,
    pub m: f64,
    pub bound: f64,
    pub gap_correction: f64,
    pub n_pairs: usize,
}

impl RaySummary {
    pub fn new(rep: &SupReport, m: f64) -> Result<RaySummary> {
        Ok(RaySummary {
            sup: rep.sup,
            argmax: rep.argmax,
            m,
            bound: pointwise_bound(rep.sup, m)?,
            gap_correction: rep.gap_correction(m),
            n_pairs: rep.n_pairs,
        })
    }
}
