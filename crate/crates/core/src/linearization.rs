//! Threefold linearization: polarization of nonlinear responses, the
//! direct cascade oracle for `u₁₂₃`, and the free/remainder splitting.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coef::Coef;
use crate::error::{Error, Result};
use crate::grid::{restrict, sobolev_norm, Field, Region, Window};
use crate::par;
use crate::solver::{solve_semilinear, Cascade, Model, Term};
use crate::sources::SourceSet;

/// The seven non-empty source subsets with their inclusion–exclusion sign
/// in `W(1,2,3) = P₁₂₃ − Σ P_ij + Σ P_k`.
pub const POLARIZATION: [([bool; 3], f64); 7] = [
    ([true, true, true], 1.0),
    ([true, true, false], -1.0),
    ([true, false, true], -1.0),
    ([false, true, true], -1.0),
    ([true, false, false], 1.0),
    ([false, true, false], 1.0),
    ([false, false, true], 1.0),
];

/// Where responses are stored and which region they are compared on.
#[derive(Clone, Debug)]
pub struct Observation {
    pub window: Window,
    pub region: Region,
}

impl Observation {
    pub fn new(window: Window, region: Region) -> Self {
        Observation { window, region }
    }
}

/// Peak of each first-order wave at the default amplitude.
pub const DEFAULT_EPS_PEAK: f64 = 0.1;

/// Default uniform amplitude: the largest first-order wave peaks at
/// [`DEFAULT_EPS_PEAK`] on the observation window, so for `|h| = O(1)` the
/// cubic term is about 1% of the linear one. Unit-norm sources in physical
/// units are tiny, so this is usually a large number.
pub fn default_eps(v: &Coef, set: &SourceSet, obs: &Observation) -> Result<f64> {
    let m = Model::linear(v.clone());
    let unit = set.with_eps([1.0; 3]);
    let masks = [[true, false, false], [false, true, false], [false, false, true]];
    let mut peak = 0.0f64;
    let mut err = None;
    par::map_batched(&masks, |mask| response(&m, &unit, *mask, obs), |_, u| match u {
        Ok(u) => peak = peak.max(u.max_abs()),
        Err(e) => {
            err.get_or_insert(e);
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    if !(peak > 0.0) {
        return Err(Error::NoSignal("first-order waves vanish on the observation window".into()));
    }
    Ok(DEFAULT_EPS_PEAK / peak)
}

/// Nonlinear response to the sources selected by `mask`.
pub fn response(m: &Model, set: &SourceSet, mask: [bool; 3], obs: &Observation) -> Result<Field> {
    let f = set.compose_subset(mask)?;
    solve_semilinear(m, &f, obs.window)
}

/// `W(1,2,3)` from exactly seven nonlinear solves (run concurrently in
/// bounded batches, combined in a fixed order).
pub fn polarization_w(m: &Model, set: &SourceSet, obs: &Observation) -> Result<Field> {
    signed_sum(m, set, &POLARIZATION, obs)
}

fn signed_sum(m: &Model, set: &SourceSet, parts: &[([bool; 3], f64)], obs: &Observation) -> Result<Field> {
    let mut w = Field::zeros(set.grid(), obs.window);
    let mut err = None;
    par::map_batched(parts, |(mask, _)| response(m, set, *mask, obs), |i, u| match u {
        Ok(u) => w.accumulate(parts[i].1, &u),
        Err(e) => {
            err.get_or_insert(e);
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(w),
    }
}

/// `W(i,j) = P_ij − P_i − P_j`; genuinely second-order content only.
pub fn polarization_w2(m: &Model, set: &SourceSet, i: usize, j: usize, obs: &Observation) -> Result<Field> {
    let mut mi = [false; 3];
    mi[i] = true;
    let mut mj = [false; 3];
    mj[j] = true;
    let mut mij = mi;
    mij[j] = true;
    signed_sum(m, set, &[(mij, 1.0), (mi, -1.0), (mj, -1.0)], obs)
}

/// `u₁₂₃ ≈ −W(1,2,3) / (6 ε₁ε₂ε₃)` on the observation region.
pub fn extract_u123(m: &Model, set: &SourceSet, obs: &Observation) -> Result<Field> {
    let e = set.eps;
    if e.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!("extraction needs positive amplitudes, got {e:?}")));
    }
    let mut w = polarization_w(m, set, obs)?;
    w.scale(-1.0 / (6.0 * e[0] * e[1] * e[2]));
    restrict(&w, &obs.region)
}

/// First-order fields and `u₁₂₃` from one lockstep cascade:
/// `(□+V)u_j = f_j`, `(□+V)u₁₂₃ = h u₁u₂u₃`.
pub fn u123_cascade(m: &Model, set: &SourceSet, obs: &Observation, keep_first: bool) -> Result<(Vec<Field>, Field)> {
    let mut c = Cascade::new(set.grid(), m);
    let rec_first = if keep_first { Some(obs.window) } else { None };
    for j in 0..3 {
        let s = c.source(&set.fields[j]);
        c.component(vec![Term::Source(s), Term::Potential(j)], rec_first);
    }
    c.component(vec![Term::Triple([0, 1, 2]), Term::Potential(3)], Some(obs.window));
    let mut out = c.run()?;
    let u123 = out.pop().flatten().expect("recorded");
    let first = out.into_iter().flatten().collect();
    Ok((first, restrict(&u123, &obs.region)?))
}

/// The independent oracle for [`extract_u123`].
pub fn u123_direct(m: &Model, set: &SourceSet, obs: &Observation) -> Result<Field> {
    Ok(u123_cascade(m, set, obs, false)?.1)
}

/// `u₁₂₃` with the model's `V` and its potential-free counterpart
/// `□u₁₂₃^fre = h u₁^fre u₂^fre u₃^fre`, from one eight-field cascade.
pub fn u123_split(m: &Model, set: &SourceSet, obs: &Observation) -> Result<(Field, Field)> {
    let mut c = Cascade::new(set.grid(), m);
    let src: Vec<usize> = (0..3).map(|j| c.source(&set.fields[j])).collect();
    for (j, &s) in src.iter().enumerate() {
        c.component(vec![Term::Source(s), Term::Potential(j)], None);
    }
    c.component(vec![Term::Triple([0, 1, 2]), Term::Potential(3)], Some(obs.window));
    for &s in &src {
        c.component(vec![Term::Source(s)], None);
    }
    c.component(vec![Term::Triple([4, 5, 6])], Some(obs.window));
    let out = c.run()?;
    let u = out[3].clone().expect("recorded");
    let fre = out[7].clone().expect("recorded");
    Ok((restrict(&u, &obs.region)?, restrict(&fre, &obs.region)?))
}

/// Free part, remainder and the identity residual of the splitting.
#[derive(Clone, Debug)]
pub struct FreeRemainder {
    pub free: Field,
    pub rem: Field,
    /// `‖u^rem − Q(−V u^fre)‖ / ‖u^rem‖` (sup norms).
    pub identity_residual: f64,
}

/// Relative tolerance of the splitting identity; it holds exactly for the
/// discrete operators, so anything above roundoff is an inconsistency.
pub const SPLIT_TOL: f64 = 1e-9;

/// `u^fre = □⁻¹f`, `u^rem = (□+V)⁻¹f − u^fre`, checked against
/// `(□+V)u^rem = −V u^fre` by one extra lockstep solve.
pub fn split_free_remainder(v: &Coef, f: &Field, rec: Window) -> Result<FreeRemainder> {
    let m = Model::linear(v.clone());
    let mut c = Cascade::new(&f.grid, &m);
    let s = c.source(f);
    c.component(vec![Term::Source(s)], Some(rec));
    c.component(vec![Term::Source(s), Term::Potential(1)], Some(rec));
    c.component(vec![Term::Potential(0), Term::Potential(2)], Some(rec));
    let mut out = c.run()?;
    let check = out.pop().flatten().expect("recorded");
    let lin = out.pop().flatten().expect("recorded");
    let free = out.pop().flatten().expect("recorded");
    let rem = Field::combine(&[(1.0, &lin), (-1.0, &free)])?;
    let scale = rem.max_abs().max(free.max_abs() * f64::EPSILON);
    let diff = rem.data.iter().zip(&check.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let identity_residual = if scale > 0.0 { diff / scale } else { 0.0 };
    if identity_residual > SPLIT_TOL && diff > 1e-300 {
        return Err(Error::IdentityCheck(format!("splitting residual {identity_residual:e}")));
    }
    Ok(FreeRemainder { free, rem, identity_residual })
}

/// Run diagnostics, emitted as one JSON record per linearization.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostics {
    pub eps: [f64; 3],
    pub w_norm: f64,
    pub u123_norm: f64,
    pub direct_norm: Option<f64>,
    pub rel_error: Option<f64>,
    pub timings_ms: Vec<(String, f64)>,
}

#[derive(Clone, Debug)]
pub struct LinearizationResult {
    pub u_first: Vec<Field>,
    pub u123: Field,
    pub u123_direct: Option<Field>,
    pub eps: [f64; 3],
    pub diagnostics: Diagnostics,
}

/// Extraction plus (optionally) the direct oracle and first-order fields.
pub fn linearize(m: &Model, set: &SourceSet, obs: &Observation, with_direct: bool) -> Result<LinearizationResult> {
    let mut timings = vec![];
    let t0 = Instant::now();
    let u123 = extract_u123(m, set, obs)?;
    timings.push(("polarization".to_string(), t0.elapsed().as_secs_f64() * 1e3));
    let e = set.eps;
    let u123_norm = sobolev_norm(&u123, 0, &obs.region)?;
    let w_norm = u123_norm * 6.0 * e[0] * e[1] * e[2];
    let (u_first, direct) = if with_direct {
        let t1 = Instant::now();
        let (first, d) = u123_cascade(m, set, obs, true)?;
        timings.push(("direct".to_string(), t1.elapsed().as_secs_f64() * 1e3));
        (first, Some(d))
    } else {
        (vec![], None)
    };
    let (direct_norm, rel_error) = match &direct {
        Some(d) => {
            let dn = sobolev_norm(d, 0, &obs.region)?;
            let diff = Field::combine(&[(1.0, &u123), (-1.0, d)])?;
            let en = sobolev_norm(&diff, 0, &obs.region)?;
            (Some(dn), Some(if dn > 0.0 { en / dn } else { en }))
        }
        None => (None, None),
    };
    Ok(LinearizationResult {
        u_first,
        u123,
        u123_direct: direct,
        eps: e,
        diagnostics: Diagnostics { eps: e, w_norm, u123_norm, direct_norm, rel_error, timings_ms: timings },
    })
}

/// Second-order content of pairwise polarizations over an ε ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SecondOrderReport {
    pub eps: Vec<f64>,
    /// `max_{i<j} ‖W(i,j)‖` per ladder value.
    pub w_norms: Vec<f64>,
    /// `max_{i<j} ‖W(i,j)‖ / (ε² max_k ‖u_k‖)`: the relative ε_iε_j coefficient.
    pub rel_coefficient: Vec<f64>,
    /// Log-log slope of `w_norms` against ε (absent when all vanish).
    pub slope: Option<f64>,
}

impl SecondOrderReport {
    pub fn max_rel_coefficient(&self) -> f64 {
        self.rel_coefficient.iter().cloned().fold(0.0, f64::max)
    }
}

/// Measure the ε_iε_j (i ≠ j) content of the response; it must vanish
/// identically, so what remains is cubic and higher.
pub fn second_order_vanishes(m: &Model, set: &SourceSet, ladder: &[f64], obs: &Observation) -> Result<SecondOrderReport> {
    let mut w_norms = vec![];
    let mut rel = vec![];
    for &e in ladder {
        let s = set.with_eps([e; 3]);
        let mut single = 0.0f64;
        for k in 0..3 {
            let mut mask = [false; 3];
            mask[k] = true;
            let u = response(m, &s, mask, obs)?;
            single = single.max(sobolev_norm(&u, 0, &obs.region)? / e);
        }
        let mut wmax = 0.0f64;
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            let w = polarization_w2(m, &s, i, j, obs)?;
            wmax = wmax.max(sobolev_norm(&w, 0, &obs.region)?);
        }
        w_norms.push(wmax);
        rel.push(if single > 0.0 { wmax / (e * e * single) } else { 0.0 });
    }
    let slope = if w_norms.iter().all(|&w| w > 0.0) && ladder.len() >= 2 {
        let pts: Vec<(f64, f64)> = ladder.iter().zip(&w_norms).map(|(&e, &w)| (e, w)).collect();
        Some(crate::fit::loglog(&pts)?.slope)
    } else {
        None
    };
    Ok(SecondOrderReport { eps: ladder.to_vec(), w_norms, rel_coefficient: rel, slope })
}

/// `‖extract_u123(A) − extract_u123(B)‖_{ℋˢ}` with `ε = δ^{1/5}` on all
/// three sources.
pub fn trilinear_discrepancy(
    ma: &Model,
    mb: &Model,
    set: &SourceSet,
    delta: f64,
    s: usize,
    obs: &Observation,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {delta}")));
    }
    let e = delta.powf(0.2);
    trilinear_discrepancy_at(ma, mb, &set.with_eps([e; 3]), s, obs)
}

/// Same as [`trilinear_discrepancy`] at the set's own amplitudes.
pub fn trilinear_discrepancy_at(ma: &Model, mb: &Model, set: &SourceSet, s: usize, obs: &Observation) -> Result<f64> {
    let both = par::map(&[ma, mb], |m| extract_u123(m, set, obs));
    let mut it = both.into_iter();
    let a = it.next().unwrap()?;
    let b = it.next().unwrap()?;
    let d = Field::combine(&[(1.0, &a), (-1.0, &b)])?;
    sobolev_norm(&d, s, &obs.region)
}
