//! Spacetime lattice, windowed field storage, regions and discrete ℋˢ norms.
//!
//! A [`Field`] stores samples only inside a rectangular spacetime
//! [`Window`]; it is identically zero outside. Solutions of the wave
//! equation are usually recorded on a box around Ω, sources on a box around
//! their support.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Event};
use crate::par;

pub const MAGIC: &[u8; 4] = b"WVF1";

/// Uniform lattice over `[0, n_time·dt] × [−L, L]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeGrid {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub n_space: usize,
    #[serde(rename = "T")]
    pub t_max: f64,
    /// Number of time steps; samples are `k = 0..=n_time`.
    pub n_time: usize,
    pub cfl: f64,
}

impl SpacetimeGrid {
    /// Build a grid; `n_time = ⌈T/dt⌉` so the last sample reaches `T`.
    pub fn new(d: usize, l: f64, n_space: usize, t_max: f64, cfl: f64) -> Result<Self> {
        if !(d == 2 || d == 3) {
            return Err(Error::Config(format!("d must be 2 or 3, got {d}")));
        }
        if n_space < 5 || !(l > 0.0) || !(t_max > 0.0) {
            return Err(Error::Config(format!("bad grid: n_space={n_space}, L={l}, T={t_max}")));
        }
        if !(cfl > 0.0) || cfl > 1.0 / (d as f64).sqrt() + 1e-12 {
            return Err(Error::CflViolation { cfl, d });
        }
        let dx = 2.0 * l / (n_space - 1) as f64;
        let n_time = (t_max / (cfl * dx) - 1e-9).ceil().max(1.0) as usize;
        Ok(SpacetimeGrid { d, l, n_space, t_max, n_time, cfl })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.l / (self.n_space - 1) as f64
    }
    pub fn dt(&self) -> f64 {
        self.cfl * self.dx()
    }
    pub fn nt(&self) -> usize {
        self.n_time + 1
    }
    pub fn x(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.dx()
    }
    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
    /// Spatial extents per axis (third axis is 1 in two dimensions).
    pub fn extents(&self) -> [usize; 3] {
        [self.n_space, self.n_space, if self.d == 3 { self.n_space } else { 1 }]
    }
    pub fn points_per_slice(&self) -> usize {
        self.n_space.pow(self.d as u32)
    }
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Check the box strictly contains the ball of radius `ρ + T`.
    pub fn check_contains(&self, dom: &DomainSpec) -> Result<()> {
        if dom.d != self.d {
            return Err(Error::Config(format!("domain d={} but grid d={}", dom.d, self.d)));
        }
        if self.l <= dom.rho + dom.t_max {
            return Err(Error::Config(format!(
                "box half-width L={} must exceed rho + T = {}",
                self.l,
                dom.rho + dom.t_max
            )));
        }
        Ok(())
    }

    pub fn full_window(&self) -> Window {
        let e = self.extents();
        Window { t0: 0, t1: self.nt(), lo: [0; 3], hi: e }
    }

    /// Index range `[lo, hi)` of grid coordinates within `[a, b]`, clamped.
    pub fn index_range(&self, a: f64, b: f64) -> (usize, usize) {
        let dx = self.dx();
        let lo = ((a + self.l) / dx - 1e-9).ceil().max(0.0) as usize;
        let hi = (((b + self.l) / dx + 1e-9).floor() + 1.0).max(0.0) as usize;
        (lo.min(self.n_space), hi.min(self.n_space))
    }

    pub fn time_range(&self, a: f64, b: f64) -> (usize, usize) {
        let dt = self.dt();
        let lo = (a / dt - 1e-9).ceil().max(0.0) as usize;
        let hi = ((b / dt + 1e-9).floor() + 1.0).max(0.0) as usize;
        (lo.min(self.nt()), hi.min(self.nt()))
    }
}

/// Rectangular index box `[t0,t1) × Π[lo_i, hi_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub t0: usize,
    pub t1: usize,
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl Window {
    pub fn shape(&self) -> [usize; 3] {
        [self.hi[0] - self.lo[0], self.hi[1] - self.lo[1], self.hi[2] - self.lo[2]]
    }
    pub fn slice_len(&self) -> usize {
        let s = self.shape();
        s[0] * s[1] * s[2]
    }
    pub fn nt(&self) -> usize {
        self.t1 - self.t0
    }
    pub fn len(&self) -> usize {
        self.nt() * self.slice_len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn contains_index(&self, k: usize, i: [usize; 3]) -> bool {
        k >= self.t0 && k < self.t1 && (0..3).all(|a| i[a] >= self.lo[a] && i[a] < self.hi[a])
    }
    pub fn union(&self, o: &Window) -> Window {
        if self.is_empty() {
            return *o;
        }
        if o.is_empty() {
            return *self;
        }
        Window {
            t0: self.t0.min(o.t0),
            t1: self.t1.max(o.t1),
            lo: [0, 1, 2].map(|a| self.lo[a].min(o.lo[a])),
            hi: [0, 1, 2].map(|a| self.hi[a].max(o.hi[a])),
        }
    }
    pub fn intersect(&self, o: &Window) -> Window {
        let t0 = self.t0.max(o.t0);
        let lo = [0, 1, 2].map(|a| self.lo[a].max(o.lo[a]));
        Window {
            t0,
            t1: self.t1.min(o.t1).max(t0),
            lo,
            hi: [0, 1, 2].map(|a| self.hi[a].min(o.hi[a]).max(lo[a])),
        }
    }

    /// Bounding window of the spacetime box `[ta,tb] × Π[c_i − r, c_i + r]`,
    /// padded by `pad` cells and clipped to the grid.
    pub fn around(g: &SpacetimeGrid, ta: f64, tb: f64, center: &[f64], r: f64, pad: usize) -> Window {
        let (t0, t1) = g.time_range(ta, tb);
        let mut lo = [0usize; 3];
        let mut hi = g.extents();
        for a in 0..g.d {
            let (l, h) = g.index_range(center[a] - r, center[a] + r);
            lo[a] = l.saturating_sub(pad);
            hi[a] = (h + pad).min(g.n_space);
        }
        Window { t0: t0.saturating_sub(pad), t1: (t1 + pad).min(g.nt()), lo, hi }
    }
}

/// Region selector for norms and restriction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    Full,
    Cylinder { dom: DomainSpec, level: usize },
    Diamond { dom: DomainSpec, level: usize },
}

/// Relative slack used when rounding region boundaries outward.
const REGION_SLACK: f64 = 1e-9;

impl Region {
    pub fn omega(dom: &DomainSpec) -> Region {
        Region::Cylinder { dom: dom.clone(), level: 0 }
    }

    /// Closed time interval of the region (closure of the open cylinder).
    pub fn time_interval(&self, g: &SpacetimeGrid) -> (f64, f64) {
        match self {
            Region::Full => (0.0, g.t(g.n_time)),
            Region::Cylinder { dom, level } | Region::Diamond { dom, level } => {
                let (_, ti) = dom.level(*level);
                match self {
                    Region::Cylinder { .. } => (ti, dom.t_max - ti),
                    _ => (0.0, dom.t_max),
                }
            }
        }
    }

    /// Spatial radius of the slice at time `t` (`None` = whole box).
    pub fn radius_at(&self, t: f64) -> Option<f64> {
        match self {
            Region::Full => None,
            Region::Cylinder { dom, level } => Some(dom.level(*level).0),
            Region::Diamond { dom, level } => {
                let (r, ti) = dom.level(*level);
                Some((t - ti + r).min(r + dom.t_max - ti - t))
            }
        }
    }

    pub fn contains(&self, g: &SpacetimeGrid, k: usize, i: [usize; 3]) -> bool {
        let t = g.t(k);
        let (ta, tb) = self.time_interval(g);
        let eps = REGION_SLACK * (1.0 + g.t_max);
        if t < ta - eps || t > tb + eps {
            return false;
        }
        match self.radius_at(t) {
            None => true,
            Some(r) => {
                let mut s = 0.0;
                for a in 0..g.d {
                    let x = g.x(i[a]);
                    s += x * x;
                }
                s.sqrt() <= r * (1.0 + REGION_SLACK) + REGION_SLACK
            }
        }
    }

    /// Smallest window holding every grid point of the region.
    pub fn window(&self, g: &SpacetimeGrid, pad: usize) -> Window {
        let (ta, tb) = self.time_interval(g);
        match self {
            Region::Full => g.full_window(),
            Region::Cylinder { dom, level } | Region::Diamond { dom, level } => {
                let r = match self {
                    Region::Cylinder { .. } => dom.level(*level).0,
                    _ => {
                        let (r, ti) = dom.level(*level);
                        r + 0.5 * (dom.t_max - 2.0 * ti)
                    }
                };
                let eps = REGION_SLACK * (1.0 + r);
                Window::around(g, ta - eps, tb + eps, &[0.0; 3], r + eps, pad)
            }
        }
    }
}

/// Real samples on a window of a spacetime grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: SpacetimeGrid,
    pub win: Window,
    pub data: Vec<f64>,
    /// Set by [`restrict`].
    pub region: Option<Region>,
}

impl Field {
    pub fn zeros(grid: &SpacetimeGrid, win: Window) -> Field {
        Field { grid: grid.clone(), win, data: vec![0.0; win.len()], region: None }
    }

    pub fn full_zeros(grid: &SpacetimeGrid) -> Field {
        Field::zeros(grid, grid.full_window())
    }

    /// Sample `f(t, x)` on every point of `win`.
    pub fn from_fn(grid: &SpacetimeGrid, win: Window, f: impl Fn(f64, &[f64; 3]) -> f64 + Sync) -> Field {
        let mut out = Field::zeros(grid, win);
        let sl = win.slice_len();
        let sh = win.shape();
        par::for_each_chunk(&mut out.data, sl, |kk, chunk| {
            let t = grid.t(win.t0 + kk);
            for (idx, v) in chunk.iter_mut().enumerate() {
                let i = unflatten(idx, &sh);
                let x = [
                    grid.x(win.lo[0] + i[0]),
                    if grid.d >= 2 { grid.x(win.lo[1] + i[1]) } else { 0.0 },
                    if grid.d == 3 { grid.x(win.lo[2] + i[2]) } else { 0.0 },
                ];
                *v = f(t, &x);
            }
        });
        out
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let sl = self.win.slice_len();
        let o = (k - self.win.t0) * sl;
        &self.data[o..o + sl]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let sl = self.win.slice_len();
        let o = (k - self.win.t0) * sl;
        &mut self.data[o..o + sl]
    }

    /// Value at a global index (zero outside the window).
    pub fn get(&self, k: usize, i: [usize; 3]) -> f64 {
        if !self.win.contains_index(k, i) {
            return 0.0;
        }
        self.data[self.offset(k, i)]
    }

    fn offset(&self, k: usize, i: [usize; 3]) -> usize {
        let s = self.win.shape();
        (((k - self.win.t0) * s[0] + i[0] - self.win.lo[0]) * s[1] + i[1] - self.win.lo[1]) * s[2] + i[2]
            - self.win.lo[2]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// Copy of this field on another window (zero-filled / cropped).
    pub fn on_window(&self, win: Window) -> Field {
        let mut out = Field::zeros(&self.grid, win);
        out.region = self.region.clone();
        out.accumulate(1.0, self);
        out
    }

    /// `self += a · other` on the overlap of the windows.
    pub fn accumulate(&mut self, a: f64, other: &Field) {
        let ov = self.win.intersect(&other.win);
        if ov.is_empty() {
            return;
        }
        for k in ov.t0..ov.t1 {
            for i0 in ov.lo[0]..ov.hi[0] {
                for i1 in ov.lo[1]..ov.hi[1] {
                    let a0 = self.offset(k, [i0, i1, ov.lo[2]]);
                    let b0 = other.offset(k, [i0, i1, ov.lo[2]]);
                    let n = ov.hi[2] - ov.lo[2];
                    for (x, y) in self.data[a0..a0 + n].iter_mut().zip(&other.data[b0..b0 + n]) {
                        *x += a * y;
                    }
                }
            }
        }
    }

    /// `Σ c_j f_j` on the union window.
    pub fn combine(terms: &[(f64, &Field)]) -> Result<Field> {
        let first = terms.first().ok_or_else(|| Error::Invalid("empty combination".into()))?;
        let mut win = first.1.win;
        for (_, f) in terms {
            if f.grid != first.1.grid {
                return Err(Error::GridMismatch("fields live on different grids".into()));
            }
            win = win.union(&f.win);
        }
        let mut out = Field::zeros(&first.1.grid, win);
        for (c, f) in terms {
            if *c != 0.0 {
                out.accumulate(*c, f);
            }
        }
        Ok(out)
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn coords(&self, k: usize, i: [usize; 3]) -> Event {
        let g = &self.grid;
        let mut x = [0.0; 3];
        for a in 0..g.d {
            x[a] = g.x(i[a]);
        }
        Event::new(g.t(k), &x)
    }

    /// Binary container: magic, d, n_space, n_time, L, T, then the full
    /// grid's samples in row-major (time, space…) order.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        let g = &self.grid;
        w.write_all(MAGIC)?;
        w.write_all(&(g.d as u64).to_le_bytes())?;
        w.write_all(&(g.n_space as u64).to_le_bytes())?;
        w.write_all(&(g.n_time as u64).to_le_bytes())?;
        w.write_all(&g.l.to_le_bytes())?;
        w.write_all(&g.t_max.to_le_bytes())?;
        let e = g.extents();
        let mut buf = Vec::with_capacity(8 * e[0] * e[1] * e[2]);
        for k in 0..g.nt() {
            buf.clear();
            for i0 in 0..e[0] {
                for i1 in 0..e[1] {
                    for i2 in 0..e[2] {
                        buf.extend_from_slice(&self.get(k, [i0, i1, i2]).to_le_bytes());
                    }
                }
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    /// Inverse of [`write_binary`]; the CFL ratio is recovered from the header.
    pub fn read_binary(r: &mut impl Read) -> Result<Field> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Invalid("bad magic".into()));
        }
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut b8)?;
            Ok(b8)
        };
        let d = u64::from_le_bytes(next(r)?) as usize;
        let n_space = u64::from_le_bytes(next(r)?) as usize;
        let n_time = u64::from_le_bytes(next(r)?) as usize;
        let l = f64::from_le_bytes(next(r)?);
        let t_max = f64::from_le_bytes(next(r)?);
        if !(d == 2 || d == 3) || n_space < 2 {
            return Err(Error::Invalid("bad header".into()));
        }
        let dx = 2.0 * l / (n_space - 1) as f64;
        // n_time = ceil(T/(cfl dx)); the smallest cfl reproducing it is exact
        // enough for all derived quantities in practice.
        let cfl = t_max / (n_time as f64 * dx);
        let grid = SpacetimeGrid { d, l, n_space, t_max, n_time, cfl };
        let win = grid.full_window();
        let mut bytes = vec![0u8; 8 * win.len()];
        r.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Field { grid, win, data, region: None })
    }

    /// CSV of the time slice `k`: columns `x1,x2[,x3],value`.
    pub fn write_slice_csv(&self, k: usize, w: &mut impl Write) -> Result<()> {
        let g = &self.grid;
        let e = g.extents();
        if g.d == 2 {
            writeln!(w, "x1,x2,value")?;
        } else {
            writeln!(w, "x1,x2,x3,value")?;
        }
        for i0 in 0..e[0] {
            for i1 in 0..e[1] {
                for i2 in 0..e[2] {
                    let v = self.get(k, [i0, i1, i2]);
                    if g.d == 2 {
                        writeln!(w, "{},{},{}", g.x(i0), g.x(i1), v)?;
                    } else {
                        writeln!(w, "{},{},{},{}", g.x(i0), g.x(i1), g.x(i2), v)?;
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn unflatten(idx: usize, sh: &[usize; 3]) -> [usize; 3] {
    let i2 = idx % sh[2];
    let r = idx / sh[2];
    [r / sh[1], r % sh[1], i2]
}

/// Copy with samples outside `region` zeroed; the region is recorded.
pub fn restrict(f: &Field, region: &Region) -> Result<Field> {
    let g = &f.grid;
    let rw = region.window(g, 0);
    if f.win.intersect(&rw).is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut out = f.clone();
    let sh = f.win.shape();
    let win = f.win;
    let sl = win.slice_len();
    par::for_each_chunk(&mut out.data, sl, |kk, chunk| {
        let k = win.t0 + kk;
        for (idx, v) in chunk.iter_mut().enumerate() {
            let i = unflatten(idx, &sh);
            if !region.contains(g, k, [i[0] + win.lo[0], i[1] + win.lo[1], i[2] + win.lo[2]]) {
                *v = 0.0;
            }
        }
    });
    out.region = Some(region.clone());
    Ok(out)
}

/// Finite-difference weights for the `m`-th derivative at `z` on `nodes`
/// (Fornberg's algorithm).
pub fn fd_weights(z: f64, nodes: &[f64], m: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; m + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[m]).collect()
}

/// Second-order stencils for the `m`-th derivative at every position of a
/// line of `n` samples: central where it fits, one-sided near the ends.
#[derive(Clone, Debug)]
pub struct StencilTable {
    pub start: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
}

impl StencilTable {
    pub fn new(n: usize, m: usize, h: f64) -> Result<StencilTable> {
        if m == 0 {
            return Ok(StencilTable { start: (0..n).collect(), weights: vec![vec![1.0]; n] });
        }
        let half = m.div_ceil(2).max(1);
        let one_sided = m + 2;
        if n < one_sided.max(2 * half + 1) {
            return Err(Error::StencilSupport(format!(
                "{n} samples cannot carry a second-order stencil for derivative order {m}"
            )));
        }
        let scale = h.powi(m as i32);
        let mut start = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut cache: std::collections::HashMap<(isize, usize), Vec<f64>> = Default::default();
        for p in 0..n {
            let (s, w) = if p >= half && p + half < n {
                (p - half, 2 * half + 1)
            } else {
                let s = (p as isize - (one_sided / 2) as isize).clamp(0, (n - one_sided) as isize) as usize;
                (s, one_sided)
            };
            let rel = p as isize - s as isize;
            let wts = cache
                .entry((rel, w))
                .or_insert_with(|| {
                    let nodes: Vec<f64> = (0..w).map(|j| j as f64).collect();
                    fd_weights(rel as f64, &nodes, m).into_iter().map(|v| v / scale).collect()
                })
                .clone();
            start.push(s);
            weights.push(wts);
        }
        Ok(StencilTable { start, weights })
    }
}

/// Apply a stencil table along `axis` of a `shape`-d array.
fn apply_axis(src: &[f64], dst: &mut [f64], shape: &[usize; 3], axis: usize, tab: &StencilTable) {
    let stride = match axis {
        0 => shape[1] * shape[2],
        1 => shape[2],
        _ => 1,
    };
    for (idx, out) in dst.iter_mut().enumerate() {
        let i = unflatten(idx, shape);
        let p = i[axis];
        let base = idx - p * stride;
        let s = tab.start[p];
        let mut acc = 0.0;
        for (j, w) in tab.weights[p].iter().enumerate() {
            acc += w * src[base + (s + j) * stride];
        }
        *out = acc;
    }
}

/// Multi-indices `α` over `d` axes with `|α| ≤ m`.
fn multi_indices(d: usize, m: usize) -> Vec<[usize; 3]> {
    let mut out = vec![];
    for a in 0..=m {
        for b in 0..=(if d >= 2 { m - a } else { 0 }) {
            for c in 0..=(if d == 3 { m - a - b } else { 0 }) {
                out.push([a, b, c]);
            }
        }
    }
    out
}

/// Discrete ℋˢ norm over `region`.
///
/// `max_{k ≤ s} max_n ‖∂_t^k f(t_n)‖_{H^{s−k}}`, derivatives by
/// second-order differences on the stored window (one-sided at its edges),
/// L² sums over the region's grid points.
pub fn sobolev_norm(f: &Field, s: usize, region: &Region) -> Result<f64> {
    let g = &f.grid;
    let win = f.win;
    let sh = win.shape();
    let (ta, tb) = region.time_interval(g);
    let eps = REGION_SLACK * (1.0 + g.t_max);
    let (k0, k1) = g.time_range(ta - eps, tb + eps);
    let (k0, k1) = (k0.max(win.t0), k1.min(win.t1));
    if k0 >= k1 || win.slice_len() == 0 {
        // Region has no stored samples: the field vanishes there.
        return Ok(0.0);
    }
    let mut ttabs = Vec::with_capacity(s + 1);
    let mut xtabs = Vec::with_capacity(s + 1);
    for m in 0..=s {
        ttabs.push(if m == 0 { None } else { Some(StencilTable::new(win.nt(), m, g.dt())?) });
        let mut per_axis = vec![];
        for a in 0..g.d {
            per_axis.push(if m == 0 { None } else { Some(StencilTable::new(sh[a], m, g.dx())?) });
        }
        xtabs.push(per_axis);
    }
    // Region weights per slice.
    let full_trap = matches!(region, Region::Full);
    let vol = g.cell_volume();
    let weight = |k: usize, idx: usize| -> f64 {
        let i = unflatten(idx, &sh);
        let gi = [i[0] + win.lo[0], i[1] + win.lo[1], i[2] + win.lo[2]];
        if full_trap {
            let mut w = vol;
            for a in 0..g.d {
                if gi[a] == 0 || gi[a] == g.n_space - 1 {
                    w *= 0.5;
                }
            }
            w
        } else if region.contains(g, k, gi) {
            vol
        } else {
            0.0
        }
    };
    let ks: Vec<usize> = (k0..k1).collect();
    let per_slice = par::map(&ks, |&k| -> f64 {
        let sl = win.slice_len();
        let w: Vec<f64> = (0..sl).map(|idx| weight(k, idx)).collect();
        let mut best: f64 = 0.0;
        let mut g0 = vec![0.0; sl];
        let mut tmp_a = vec![0.0; sl];
        let mut tmp_b = vec![0.0; sl];
        for kt in 0..=s {
            // k-th time difference of slice k.
            match &ttabs[kt] {
                None => g0.copy_from_slice(f.slice(k)),
                Some(tab) => {
                    let p = k - win.t0;
                    g0.iter_mut().for_each(|v| *v = 0.0);
                    let st = tab.start[p];
                    for (j, wt) in tab.weights[p].iter().enumerate() {
                        let src = f.slice(win.t0 + st + j);
                        for (o, v) in g0.iter_mut().zip(src) {
                            *o += wt * v;
                        }
                    }
                }
            }
            let m = s - kt;
            let mut acc = 0.0;
            for alpha in multi_indices(g.d, m) {
                tmp_a.copy_from_slice(&g0);
                for a in 0..g.d {
                    if alpha[a] > 0 {
                        let tab = xtabs[alpha[a]][a].as_ref().unwrap();
                        apply_axis(&tmp_a, &mut tmp_b, &sh, a, tab);
                        std::mem::swap(&mut tmp_a, &mut tmp_b);
                    }
                }
                acc += tmp_a.iter().zip(&w).map(|(v, wt)| v * v * wt).sum::<f64>();
            }
            best = best.max(acc.sqrt());
        }
        best
    });
    Ok(per_slice.into_iter().fold(0.0, f64::max))
}
