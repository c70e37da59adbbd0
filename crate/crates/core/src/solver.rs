//! Explicit leapfrog evolution of `□u + Vu + hu³ = f` with zero past data.
//!
//! Every solve is a [`Cascade`]: several fields stepped in lockstep, each
//! driven by external sources and by terms built from the current level of
//! the others (`−V u_k`, `−h u_k³`, `h u_a u_b u_c`). Plain semilinear,
//! linear and free solves are one-component cascades; the threefold
//! linearization oracle is a four-component one.
//!
//! Each component tracks the index box holding its nonzero samples, which
//! grows by one cell per step; work outside that box is skipped.

use serde::{Deserialize, Serialize};

use crate::coef::Coef;
use crate::error::{Error, Result};
use crate::geometry::DomainSpec;
use crate::grid::{restrict, unflatten, Field, Region, SpacetimeGrid, Window};
use crate::par;

/// Blow-up guard, as a multiple of the largest source sample.
pub const DEFAULT_GUARD: f64 = 1e6;

/// Coefficient pair of the equation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    #[serde(rename = "V")]
    pub v: Coef,
    pub h: Coef,
    /// Required lower bound on `|h|` over the grid; 0 disables the check
    /// (linear test models).
    #[serde(default)]
    pub h_floor: f64,
}

impl Model {
    pub fn new(v: Coef, h: Coef) -> Model {
        Model { v, h, h_floor: 0.0 }
    }
    pub fn linear(v: Coef) -> Model {
        Model::new(v, Coef::zero())
    }
    pub fn free() -> Model {
        Model::linear(Coef::zero())
    }

    /// Check `min |h| ≥ h_floor` on the spatial grid at a few time levels.
    pub fn validate(&self, grid: &SpacetimeGrid) -> Result<()> {
        if self.h_floor <= 0.0 {
            return Ok(());
        }
        let e = grid.extents();
        let n = grid.points_per_slice();
        for k in [0, grid.n_time / 2, grid.n_time] {
            let t = grid.t(k);
            let low = par::map_range(n, |idx| {
                let i = unflatten(idx, &e);
                let x = [grid.x(i[0]), grid.x(i[1]), if grid.d == 3 { grid.x(i[2]) } else { 0.0 }];
                self.h.eval(&crate::geometry::Event::new(t, &x[..grid.d])).abs()
            })
            .into_iter()
            .fold(f64::INFINITY, f64::min);
            if low < self.h_floor {
                return Err(Error::Domain(format!("min |h| = {low:e} below h_floor = {:e}", self.h_floor)));
            }
        }
        Ok(())
    }

    /// Spatial snapshots of `V` and `h` at time `t` as one-slice fields.
    pub fn snapshot(&self, grid: &SpacetimeGrid, t: f64) -> Result<(Field, Field)> {
        let g = SpacetimeGrid { n_time: 0, ..grid.clone() };
        let win = g.full_window();
        let v = Field::from_fn(&g, win, |_, x| self.v.eval(&crate::geometry::Event::new(t, &x[..g.d])));
        let h = Field::from_fn(&g, win, |_, x| self.h.eval(&crate::geometry::Event::new(t, &x[..g.d])));
        Ok((v, h))
    }
}

/// A coefficient laid out on the spatial lattice.
struct Sampled {
    coef: Coef,
    space: Vec<f64>,
    time: Vec<f64>,
    dynamic: bool,
}

impl Sampled {
    fn new(coef: &Coef, g: &SpacetimeGrid) -> Sampled {
        let dynamic = !coef.separable();
        let mut s = Sampled { coef: coef.clone(), space: vec![], time: vec![], dynamic };
        if dynamic {
            s.space = vec![0.0; g.points_per_slice()];
            s.time = vec![1.0; g.nt()];
        } else {
            s.space = sample_slice(g, |x| coef.eval_space(x));
            s.time = (0..g.nt()).map(|k| coef.eval_time(g.t(k))).collect();
        }
        s
    }

    fn refresh(&mut self, g: &SpacetimeGrid, k: usize) {
        if self.dynamic {
            let t = g.t(k);
            let c = &self.coef;
            self.space = sample_slice(g, |x| c.eval(&crate::geometry::Event::new(t, &x[..g.d])));
        }
    }
}

fn sample_slice(g: &SpacetimeGrid, f: impl Fn(&[f64]) -> f64 + Sync + Send) -> Vec<f64> {
    let e = g.extents();
    par::map_range(g.points_per_slice(), |idx| {
        let i = unflatten(idx, &e);
        let x = [g.x(i[0]), g.x(i[1]), if g.d == 3 { g.x(i[2]) } else { 0.0 }];
        f(&x)
    })
}

/// Right-hand-side contributions of a cascade component, evaluated at the
/// current time level.
#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    /// External source number `i`.
    Source(usize),
    /// `−V u_k`
    Potential(usize),
    /// `−h u_k³`
    Cubic(usize),
    /// `+h u_a u_b u_c`
    Triple([usize; 3]),
}

#[derive(Clone, Debug)]
pub struct Component {
    pub terms: Vec<Term>,
    /// Window to record; `None` steps the field without storing it.
    pub record: Option<Window>,
}

/// Index box of possibly-nonzero samples.
#[derive(Clone, Copy, Debug, PartialEq)]
struct IBox {
    lo: [usize; 3],
    hi: [usize; 3],
}

impl IBox {
    const EMPTY: IBox = IBox { lo: [0; 3], hi: [0; 3] };
    fn is_empty(&self) -> bool {
        (0..3).any(|a| self.lo[a] >= self.hi[a])
    }
    fn union(&self, o: &IBox) -> IBox {
        if self.is_empty() {
            return *o;
        }
        if o.is_empty() {
            return *self;
        }
        IBox { lo: [0, 1, 2].map(|a| self.lo[a].min(o.lo[a])), hi: [0, 1, 2].map(|a| self.hi[a].max(o.hi[a])) }
    }
    fn intersect(&self, o: &IBox) -> IBox {
        let b = IBox { lo: [0, 1, 2].map(|a| self.lo[a].max(o.lo[a])), hi: [0, 1, 2].map(|a| self.hi[a].min(o.hi[a])) };
        if b.is_empty() {
            IBox::EMPTY
        } else {
            b
        }
    }
    /// Grow by one cell and clip to the interior (edges stay zero).
    fn grow(&self, g: &SpacetimeGrid) -> IBox {
        if self.is_empty() {
            return *self;
        }
        let mut b = *self;
        for a in 0..g.d {
            b.lo[a] = b.lo[a].saturating_sub(1).max(1);
            b.hi[a] = (b.hi[a] + 1).min(g.n_space - 1);
        }
        b
    }
    fn clip(&self, g: &SpacetimeGrid) -> IBox {
        let mut b = *self;
        for a in 0..g.d {
            b.lo[a] = b.lo[a].max(1);
            b.hi[a] = b.hi[a].min(g.n_space - 1);
        }
        if b.is_empty() {
            IBox::EMPTY
        } else {
            b
        }
    }
}

/// Fields stepped in lockstep on one grid.
pub struct Cascade<'a> {
    pub grid: SpacetimeGrid,
    pub model: &'a Model,
    pub sources: Vec<&'a Field>,
    pub components: Vec<Component>,
    pub guard_factor: f64,
}

impl<'a> Cascade<'a> {
    pub fn new(grid: &SpacetimeGrid, model: &'a Model) -> Self {
        Cascade { grid: grid.clone(), model, sources: vec![], components: vec![], guard_factor: DEFAULT_GUARD }
    }

    pub fn source(&mut self, f: &'a Field) -> usize {
        self.sources.push(f);
        self.sources.len() - 1
    }

    pub fn component(&mut self, terms: Vec<Term>, record: Option<Window>) -> usize {
        self.components.push(Component { terms, record });
        self.components.len() - 1
    }

    pub fn run(&self) -> Result<Vec<Option<Field>>> {
        let g = &self.grid;
        for f in &self.sources {
            if f.grid != *g {
                return Err(Error::GridMismatch("source grid differs from solver grid".into()));
            }
            f.check_finite("source")?;
        }
        if g.cfl > 1.0 / (g.d as f64).sqrt() + 1e-12 {
            return Err(Error::CflViolation { cfl: g.cfl, d: g.d });
        }
        let nc = self.components.len();
        let np = g.points_per_slice();
        let e = g.extents();
        let strides = [e[1] * e[2], e[2], 1];
        let dt = g.dt();
        let dt2 = dt * dt;
        let inv_dx2 = 1.0 / (g.dx() * g.dx());

        let v_zero = self.model.v.is_zero();
        let h_zero = self.model.h.is_zero();
        let mut vs = if v_zero { None } else { Some(Sampled::new(&self.model.v, g)) };
        let mut hs = if h_zero { None } else { Some(Sampled::new(&self.model.h, g)) };
        // Drop terms whose coefficient vanishes identically.
        let terms: Vec<Vec<Term>> = self
            .components
            .iter()
            .map(|c| {
                c.terms
                    .iter()
                    .filter(|t| match t {
                        Term::Potential(_) => !v_zero,
                        Term::Cubic(_) | Term::Triple(_) => !h_zero,
                        Term::Source(_) => true,
                    })
                    .cloned()
                    .collect()
            })
            .collect();
        for (c, ts) in terms.iter().enumerate() {
            for t in ts {
                let bad = match t {
                    Term::Source(i) => *i >= self.sources.len(),
                    Term::Potential(k) | Term::Cubic(k) => *k >= nc,
                    Term::Triple(ks) => ks.iter().any(|k| *k >= nc),
                };
                if bad {
                    return Err(Error::Invalid(format!("component {c} references a missing input")));
                }
            }
        }

        let peak = self.sources.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
        let guard = if peak > 0.0 { self.guard_factor * peak } else { f64::INFINITY };

        let mut cur = vec![vec![0.0; np]; nc];
        let mut prev = vec![vec![0.0; np]; nc];
        let mut boxes = vec![IBox::EMPTY; nc];
        let mut out: Vec<Option<Field>> =
            self.components.iter().map(|c| c.record.map(|w| Field::zeros(g, w))).collect();

        let src_box = |i: usize, k: usize| -> IBox {
            let w = self.sources[i].win;
            if k < w.t0 || k >= w.t1 {
                IBox::EMPTY
            } else {
                IBox { lo: w.lo, hi: w.hi }.clip(g)
            }
        };

        for n in 0..g.n_time {
            if let Some(s) = vs.as_mut() {
                s.refresh(g, n);
            }
            if let Some(s) = hs.as_mut() {
                s.refresh(g, n);
            }
            let vt = vs.as_ref().map_or(0.0, |s| s.time[n]);
            let ht = hs.as_ref().map_or(0.0, |s| s.time[n]);
            let vsp: &[f64] = vs.as_ref().map_or(&[], |s| &s.space);
            let hsp: &[f64] = hs.as_ref().map_or(&[], |s| &s.space);

            let mut new_boxes = boxes.clone();
            for c in 0..nc {
                let mut b = boxes[c].grow(g);
                for t in &terms[c] {
                    let tb = match t {
                        Term::Source(i) => src_box(*i, n),
                        Term::Potential(k) | Term::Cubic(k) => boxes[*k],
                        Term::Triple([a, bb, cc]) => boxes[*a].intersect(&boxes[*bb]).intersect(&boxes[*cc]),
                    };
                    b = b.union(&tb);
                }
                new_boxes[c] = b;
            }

            for c in 0..nc {
                let b = new_boxes[c];
                if b.is_empty() {
                    continue;
                }
                let ts = &terms[c];
                let curs = &cur;
                let own = &cur[c];
                let sup = par::chunks_max(&mut prev[c], strides[0], b.lo[0], b.hi[0], |i0, plane| {
                    let mut m: f64 = 0.0;
                    let mut finite = true;
                    for i1 in b.lo[1]..b.hi[1] {
                        for i2 in b.lo[2]..b.hi[2] {
                            let loc = i1 * strides[1] + i2;
                            let idx = i0 * strides[0] + loc;
                            let u = own[idx];
                            let mut lap = own[idx + strides[0]] + own[idx - strides[0]];
                            lap += own[idx + strides[1]] + own[idx - strides[1]];
                            if g.d == 3 {
                                lap += own[idx + 1] + own[idx - 1];
                            }
                            let mut r = (lap - 2.0 * g.d as f64 * u) * inv_dx2;
                            for t in ts {
                                match *t {
                                    Term::Source(_) => {}
                                    Term::Potential(k) => r -= vsp[idx] * vt * curs[k][idx],
                                    Term::Cubic(k) => {
                                        let w = curs[k][idx];
                                        r -= hsp[idx] * ht * w * w * w;
                                    }
                                    Term::Triple([a, bb, cc]) => {
                                        r += hsp[idx] * ht * curs[a][idx] * curs[bb][idx] * curs[cc][idx]
                                    }
                                }
                            }
                            let nv = 2.0 * u - plane[loc] + dt2 * r;
                            plane[loc] = nv;
                            finite &= nv.is_finite();
                            m = m.max(nv.abs());
                        }
                    }
                    if finite {
                        m
                    } else {
                        f64::NAN
                    }
                });
                if sup.is_nan() {
                    return Err(Error::NonFinite(format!("component {c} at step {}", n + 1)));
                }
                if sup > guard {
                    return Err(Error::BlowUp { step: n + 1, sup, guard });
                }
                // External sources are added on their own windows.
                for t in ts {
                    if let Term::Source(i) = *t {
                        let f = self.sources[i];
                        let w = f.win;
                        if n < w.t0 || n >= w.t1 {
                            continue;
                        }
                        let sl = f.slice(n);
                        let ws = w.shape();
                        let p = &mut prev[c];
                        for i0 in w.lo[0]..w.hi[0] {
                            for i1 in w.lo[1]..w.hi[1] {
                                for i2 in w.lo[2]..w.hi[2] {
                                    let gi = [i0, i1, i2];
                                    if (0..g.d).any(|a| gi[a] == 0 || gi[a] == g.n_space - 1) {
                                        continue;
                                    }
                                    let li = ((i0 - w.lo[0]) * ws[1] + i1 - w.lo[1]) * ws[2] + i2 - w.lo[2];
                                    p[i0 * strides[0] + i1 * strides[1] + i2] += dt2 * sl[li];
                                }
                            }
                        }
                    }
                }
            }
            for c in 0..nc {
                if !new_boxes[c].is_empty() {
                    std::mem::swap(&mut cur[c], &mut prev[c]);
                }
                boxes[c] = new_boxes[c];
                if let Some(f) = out[c].as_mut() {
                    record(f, &cur[c], n + 1, &e);
                }
            }
        }
        Ok(out)
    }
}

fn record(f: &mut Field, data: &[f64], k: usize, e: &[usize; 3]) {
    let w = f.win;
    if k < w.t0 || k >= w.t1 {
        return;
    }
    let ws = w.shape();
    let dst = f.slice_mut(k);
    for i0 in w.lo[0]..w.hi[0] {
        for i1 in w.lo[1]..w.hi[1] {
            let s = (i0 * e[1] + i1) * e[2] + w.lo[2];
            let d = ((i0 - w.lo[0]) * ws[1] + i1 - w.lo[1]) * ws[2];
            dst[d..d + ws[2]].copy_from_slice(&data[s..s + ws[2]]);
        }
    }
}

fn single(grid: &SpacetimeGrid, model: &Model, f: &Field, terms: Vec<Term>, rec: Window) -> Result<Field> {
    let mut c = Cascade::new(grid, model);
    c.source(f);
    c.component(terms, Some(rec));
    Ok(c.run()?.remove(0).expect("recorded"))
}

/// `□u + Vu + hu³ = f`, recorded on `rec`.
pub fn solve_semilinear(m: &Model, f: &Field, rec: Window) -> Result<Field> {
    m.validate(&f.grid)?;
    single(&f.grid, m, f, vec![Term::Source(0), Term::Potential(0), Term::Cubic(0)], rec)
}

/// `(□ + V)u = f`.
pub fn solve_linear(v: &Coef, f: &Field, rec: Window) -> Result<Field> {
    let m = Model::linear(v.clone());
    single(&f.grid, &m, f, vec![Term::Source(0), Term::Potential(0)], rec)
}

/// `□u = f`.
pub fn solve_free(f: &Field, rec: Window) -> Result<Field> {
    single(&f.grid, &Model::free(), f, vec![Term::Source(0)], rec)
}

/// The measurement map `f ↦ u|_Ω`: the solution recorded on the bounding
/// window of Ω and zeroed outside it.
pub fn source_to_solution(m: &Model, f: &Field, dom: &DomainSpec) -> Result<Field> {
    let om = Region::omega(dom);
    let u = solve_semilinear(m, f, om.window(&f.grid, 0))?;
    restrict(&u, &om)
}
