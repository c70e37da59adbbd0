//! Independent oracles for the solver and the κ system.

use waveinv::coef::{taper, Coef};
use waveinv::geometry::{kappa_residual, solve_kappa, standard_covectors};
use waveinv::grid::{Field, SpacetimeGrid, Window};
use waveinv::solver::{solve_free, solve_linear, solve_semilinear, Model};

/// u*(t,x) = exp(−(t−t0)²/s²) · exp(−|x−c|²/w²) with its exact □u*.
struct Manufactured {
    t0: f64,
    s: f64,
    c: [f64; 3],
    w: f64,
}

impl Manufactured {
    fn u(&self, t: f64, x: &[f64; 3], d: usize) -> f64 {
        self.g(t) * self.phi(x, d)
    }
    fn g(&self, t: f64) -> f64 {
        (-(t - self.t0).powi(2) / (self.s * self.s)).exp()
    }
    fn g2(&self, t: f64) -> f64 {
        let q = t - self.t0;
        self.g(t) * (4.0 * q * q / self.s.powi(4) - 2.0 / (self.s * self.s))
    }
    fn r2(&self, x: &[f64; 3], d: usize) -> f64 {
        (0..d).map(|a| (x[a] - self.c[a]).powi(2)).sum()
    }
    fn phi(&self, x: &[f64; 3], d: usize) -> f64 {
        (-self.r2(x, d) / (self.w * self.w)).exp()
    }
    fn lap_phi(&self, x: &[f64; 3], d: usize) -> f64 {
        let w2 = self.w * self.w;
        self.phi(x, d) * (4.0 * self.r2(x, d) / (w2 * w2) - 2.0 * d as f64 / w2)
    }
    fn box_u(&self, t: f64, x: &[f64; 3], d: usize) -> f64 {
        self.g2(t) * self.phi(x, d) - self.g(t) * self.lap_phi(x, d)
    }
}

pub fn coords(x: &[f64; 3], d: usize) -> waveinv::Event {
    waveinv::Event::new(0.0, &x[..d])
}

/// L∞ error of the solver against u* for the given model.
pub fn manufactured_error(d: usize, n: usize, model: &Model, kind: &str) -> f64 {
    let m = Manufactured { t0: 0.5, s: 0.1, c: [0.1, -0.05, 0.0], w: 0.2 };
    let g = SpacetimeGrid::new(d, 1.0, n, 0.9, 0.5).unwrap();
    let f = Field::from_fn(&g, g.full_window(), |t, x| {
        let p = coords(x, d);
        let u = m.u(t, x, d);
        let v = model.v.eval(&p);
        let h = model.h.eval(&p);
        m.box_u(t, x, d) + v * u + h * u * u * u
    });
    let u = match kind {
        "semilinear" => solve_semilinear(model, &f, g.full_window()).unwrap(),
        "linear" => solve_linear(&model.v, &f, g.full_window()).unwrap(),
        _ => solve_free(&f, g.full_window()).unwrap(),
    };
    let exact = Field::from_fn(&g, g.full_window(), |t, x| m.u(t, x, d));
    u.data.iter().zip(&exact.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn models() -> [(&'static str, Model); 3] {
    let v = Coef::constant(0.5).plus(Coef::Poly { terms: vec![(0.3, vec![1, 0])] });
    let h = Coef::constant(1.0).plus(Coef::Poly { terms: vec![(0.2, vec![0, 1])] });
    [
        ("semilinear", Model::new(v.clone(), h)),
        ("linear", Model::linear(v)),
        ("free", Model::free()),
    ]
}

pub fn solve(kind: &str, model: &Model, f: &Field, win: Window) -> Field {
    match kind {
        "semilinear" => solve_semilinear(model, f, win).unwrap(),
        "linear" => solve_linear(&model.v, f, win).unwrap(),
        _ => solve_free(f, win).unwrap(),
    }
}

/// Error ratio between the n = 129 and n = 257 runs.
pub fn order_ratio(kind: &str, model: &Model) -> f64 {
    manufactured_error(2, 129, model, kind) / manufactured_error(2, 257, model, kind)
}

pub fn pulse(g: &SpacetimeGrid, t0: f64, c: [f64; 2], w: f64) -> Field {
    let r = 4.0 * w;
    let win = Window::around(g, t0 - r, t0 + r, &c, r, 2);
    Field::from_fn(g, win, |t, x| {
        let q = ((t - t0).powi(2) + (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
        (-(q * q) / (2.0 * w * w)).exp() * taper(q / r, 0.25)
    })
}

/// Largest `|u|/peak` outside the 2dx-fattened forward cone of a compact
/// spacetime pulse, and the number of points checked.
pub fn outside_cone(kind: &str, model: &Model) -> (f64, usize) {
    // The packet spans ~11 cells per width; the discrete stencil's tail
    // ahead of the physical front falls ~4x per cell.
    let g = SpacetimeGrid::new(2, 3.0, 193, 2.6, 0.5).unwrap();
    let (t0, c, w) = (1.45, [0.1, -0.2], 0.35);
    let f = pulse(&g, t0, c, w);
    let r = 4.0 * w;
    let dx = g.dx();
    let u = solve(kind, model, &f, g.full_window());
    let peak = u.max_abs();
    let (mut worst, mut checked) = (0.0f64, 0);
    for k in 0..g.nt() {
        for i in 0..g.n_space {
            for j in 0..g.n_space {
                let (t, x1, x2) = (g.t(k), g.x(i), g.x(j));
                let dist = ((x1 - c[0]).powi(2) + (x2 - c[1]).powi(2)).sqrt();
                let before = t < t0 - r - 2.0 * dx;
                if before || dist - (t - t0) > std::f64::consts::SQRT_2 * r + 2.0 * dx {
                    checked += 1;
                    worst = worst.max(u.get(k, [i, j, 0]).abs() / peak);
                }
            }
        }
    }
    (worst, checked)
}

pub struct KappaScan {
    pub max_residual: f64,
    pub min_kappa: f64,
    pub max_kappa: f64,
}

/// κ over the 50×50 grid `r, r0 ∈ {0.014, 0.028, …, 0.7}`.
pub fn kappa_scan() -> KappaScan {
    let mut s = KappaScan { max_residual: 0.0, min_kappa: f64::INFINITY, max_kappa: 0.0 };
    for i in 1..=50 {
        for j in 1..=50 {
            let (r, r0) = (0.7 * i as f64 / 50.0, 0.7 * j as f64 / 50.0);
            let k = solve_kappa(r, r0).unwrap();
            let (xi, eta) = standard_covectors(r, r0).unwrap();
            s.max_residual = s.max_residual.max(kappa_residual(r, &eta, &xi, &k));
            for v in k {
                s.min_kappa = s.min_kappa.min(v);
                s.max_kappa = s.max_kappa.max(v);
            }
        }
    }
    s
}
