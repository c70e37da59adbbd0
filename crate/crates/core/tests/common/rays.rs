//! Randomized synthetic coefficient pairs for the pointwise-bound chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use waveinv::coef::{Coef, Diff, SpacetimeFn, TimeProfile};
use waveinv::raytransform::{lipschitz_bound, sup_discrepancy, sup_on_diamond, RaySampling};
use waveinv::{DomainSpec, Event};

pub fn ray_domain() -> DomainSpec {
    DomainSpec { d: 2, t_max: 2.0, rho: 0.5, rho1: 0.4, rho2: 0.3, t1: 0.1, t2: 0.2 }
}

pub struct Pair {
    pub v: Coef,
    pub v_alt: Coef,
    pub center: Event,
    pub height: f64,
}

/// `V` a small static wave; `Ṽ = V + ` a spacetime bump centered in
/// `𝔻₂ \ Ω` whose support stays outside Ω.
pub fn random_pair(rng: &mut ChaCha8Rng, dom: &DomainSpec) -> Pair {
    let (r2, t2) = dom.level(2);
    let t_c = rng.gen_range(0.6..1.0);
    let rmax = (t_c - t2 + r2).min(r2 + dom.t_max - t2 - t_c);
    let rb = rng.gen_range(0.06..(rmax - dom.rho - 0.07).min(0.15));
    let rad = rng.gen_range(dom.rho + rb + 0.02..rmax - 0.05);
    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
    let x = [rad * ang.cos(), rad * ang.sin()];
    let ht = rng.gen_range(0.06..0.15);
    let height = rng.gen_range(0.05..0.3) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let k = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
    let v = Coef::Wave { k: k.to_vec(), phase: rng.gen_range(0.0..6.0), amplitude: 0.05 };
    let bump = Coef::TimeScaled { profile: TimeProfile::Pulse { t0: t_c - ht, t1: t_c + ht }, space: Box::new(Coef::bump(&x, rb, height)) };
    Pair { v_alt: v.clone().plus(bump), v, center: Event::new(t_c, &x), height }
}

pub struct ChainRow {
    /// `sup_{𝔻₂} |V − Ṽ|` (lattice plus the bump center).
    pub sup_diff: f64,
    pub m: f64,
    pub sup_i: f64,
}

impl ChainRow {
    pub fn lhs(&self) -> f64 {
        self.sup_diff * self.sup_diff
    }
    /// `4√2 · M · (2 sup_I) · 1.1`.
    pub fn rhs(&self) -> f64 {
        4.0 * std::f64::consts::SQRT_2 * self.m * 2.0 * self.sup_i * 1.1
    }
    pub fn holds(&self) -> bool {
        self.lhs() <= self.rhs()
    }
}

pub fn chain(n: usize, seed: u64) -> Vec<ChainRow> {
    let dom = ray_domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampling = RaySampling { max_step: 0.02, ..RaySampling::default() };
    (0..n)
        .map(|_| {
            let p = random_pair(&mut rng, &dom);
            let d = Diff(&p.v, &p.v_alt);
            let sup_diff = sup_on_diamond(&d, &dom, 2, 0.01).max(d.at(&p.center).abs());
            let m = lipschitz_bound(&p.v, &dom, 2, 0.02).max(lipschitz_bound(&p.v_alt, &dom, 2, 0.02));
            let sup_i = sup_discrepancy(&p.v, &p.v_alt, &dom, &sampling).unwrap().sup;
            ChainRow { sup_diff, m, sup_i }
        })
        .collect()
}
