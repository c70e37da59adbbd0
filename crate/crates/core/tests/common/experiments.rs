//! End-to-end channel experiments shared by the channel tests and the
//! acceptance report.

use waveinv::coef::{Coef, TimeProfile};
use waveinv::linearization::{u123_direct, u123_split, Observation};
use waveinv::probe::{recover_h_difference, recover_v_line_integral, ProbeSpec, VRecovery};
use waveinv::pipeline::{ExperimentConfig, GridSpec, ProbeTemplate, Site, SCHEMA};
use waveinv::raytransform::{truncated_integral, RaySampling};
use waveinv::sources::SourceSet;
use waveinv::{Model, Region, Window};

use super::{compact_layout, compact_layout_offset, Layout, DX};

/// Signals below this fraction of the one a perturbation would produce if
/// it sat on the rays count as absent.
pub const FLOOR_REL: f64 = 1e-3;

fn sources(lay: &Layout) -> SourceSet {
    let specs = lay.template.specs(&lay.cfg);
    SourceSet::realize(&specs, &lay.grid, &lay.dom, 4, [1.0; 3]).unwrap()
}

/// Probe of `width` cells at z, and an observation window from t = 0
/// (the time antiderivative needs the record to start before the signal).
fn probe_at_z(lay: &Layout, width: f64) -> (ProbeSpec, Observation) {
    let p = ProbeSpec::for_config(&lay.cfg, lay.k_out, width * lay.k_out * DX, 4);
    p.validate(&lay.grid, &lay.dom).unwrap();
    let win = Window { t0: 0, ..p.window(&lay.grid) };
    (p, Observation::new(win, Region::Full))
}

fn v_run(lay: &Layout, set: &SourceSet, p: &ProbeSpec, obs: &Observation, v: &Coef) -> VRecovery {
    let m = Model::new(v.clone(), Coef::constant(1.0));
    let (u, fre) = u123_split(&m, set, obs).unwrap();
    recover_v_line_integral(&lay.cfg, p, &u, &fre, Some(v)).unwrap()
}

pub struct VOutLeg {
    pub estimate: f64,
    pub oracle: f64,
    pub zero: f64,
    pub away: f64,
    pub floor: f64,
}

/// r = 0.6: a spacetime bump of V on the out-leg only (switched on after
/// the interaction, off before the probe), plus V ≡ 0 and a bump far from
/// every ray.
pub fn v_out_leg() -> VOutLeg {
    let w = 6.0;
    let lay = compact_layout(0.6, 0.2, 8.0, 90.0, 4.0 * w);
    let set = sources(&lay);
    let (p, obs) = probe_at_z(&lay, w);
    let (y, z) = (lay.cfg.y, lay.cfg.z);
    let mid = [(y.0[1] + z.0[1]) / 2.0, (y.0[2] + z.0[2]) / 2.0];
    let (height, radius) = (0.3, 0.5);
    let bump = Coef::TimeScaled {
        profile: TimeProfile::Pulse { t0: y.t() + 0.25, t1: z.t() - 0.25 },
        space: Box::new(Coef::plateau(&mid, radius, 0.6, height)),
    };
    let rec = v_run(&lay, &set, &p, &obs, &bump);
    let oracle = truncated_integral(&bump, &y, &z, DX / 2.0).unwrap();
    let zero = v_run(&lay, &set, &p, &obs, &Coef::zero()).estimate;
    let far = Coef::bump(&[-0.6 * lay.dom.rho, 0.0], 0.2, height);
    let away = v_run(&lay, &set, &p, &obs, &far).estimate;
    VOutLeg { estimate: rec.estimate, oracle, zero, away, floor: FLOOR_REL * height * 2.0 * 0.2 }
}

pub struct VHalving {
    pub r: [f64; 2],
    pub residual: [f64; 2],
    pub predicted: [f64; 2],
}

/// Residual of the out-leg estimate caused by V on the incoming legs only,
/// at r and r/2. The packet width and probe width scale with the output
/// carrier 1/K so both runs resolve the same number of output periods;
/// V is a pulse of fixed duration that ends before the interaction, so the
/// incoming-ray integrals are the same in both runs.
pub fn v_r_halving() -> VHalving {
    let runs = [(0.8, 8.0, 6.0, 40.0), (0.4, 20.0, 15.0, 70.0)];
    let mut out = VHalving { r: [0.8, 0.4], residual: [0.0; 2], predicted: [0.0; 2] };
    for (i, &(r, sigma, w, s_out)) in runs.iter().enumerate() {
        let lay = compact_layout(r, 0.2, sigma, s_out, 4.0 * w);
        let set = sources(&lay);
        let (p, obs) = probe_at_z(&lay, w);
        let off = lay.cfg.y.t() - 3.0 * lay.sigma;
        let v = Coef::TimeScaled { profile: TimeProfile::Pulse { t0: off - 0.3, t1: off }, space: Box::new(Coef::constant(0.3)) };
        let rec = v_run(&lay, &set, &p, &obs, &v);
        // Nothing of V lies on the out-leg, so the whole estimate is residual.
        out.residual[i] = rec.estimate;
        out.predicted[i] = rec.incoming_term.unwrap();
    }
    out
}

pub struct HChannel {
    /// Recovered `(h_A − h_B)(y)` at cutoff widths 0.75, 1, 1.25 × nominal.
    pub at_y: [f64; 3],
    pub expected: f64,
    pub miss: [f64; 3],
    pub floor: f64,
}

/// `h_B = h_A(1 + c·plateau)` with the plateau around y, outside Ω, and the
/// same plateau moved to the opposite side of Ω, away from every ray.
pub fn h_channel() -> HChannel {
    let (w, c) = (6.0, 0.1);
    // y sits 20 cells outside Ω; the plateau (radius 18 cells) stays outside.
    let lay = compact_layout_offset(0.6, 0.2, 8.0, 70.0, 5.0 * w, 20.0);
    let set = sources(&lay);
    let p = ProbeSpec::for_config(&lay.cfg, lay.k_out, w * lay.k_out * DX, 4);
    let wide = p.with_width(1.25 * p.cutoff_width);
    wide.validate(&lay.grid, &lay.dom).unwrap();
    let obs = Observation::new(wide.window(&lay.grid), Region::Full);
    let y = lay.cfg.y;
    let h = Coef::constant(1.0);
    let ma = Model::new(Coef::zero(), h.clone());
    let ua = u123_direct(&ma, &set, &obs).unwrap();
    let mut recs = [[0.0; 3]; 2];
    let yx = [y.0[1], y.0[2]];
    for (slot, center) in [yx, [-yx[0], -yx[1]]].iter().enumerate() {
        let bump = Coef::plateau(center, 0.18, 0.6, c);
        let hb = h.clone().times(Coef::constant(1.0).plus(bump));
        let ub = u123_direct(&Model::new(Coef::zero(), hb), &set, &obs).unwrap();
        for (i, f) in [0.75, 1.0, 1.25].iter().enumerate() {
            let pf = p.with_width(f * p.cutoff_width);
            recs[slot][i] = recover_h_difference(&ma, &lay.cfg, &pf, &ua, &ub).unwrap().value;
        }
    }
    let h_y = h.eval(&y);
    HChannel { at_y: recs[0], expected: -c * h_y, miss: recs[1], floor: FLOOR_REL * c * h_y.abs() }
}

/// Sweep configuration on the h-channel layout: `h̃ = h(1 + a·plateau)`
/// around y, outside Ω, for the given amplitudes `a` (largest first).
pub fn h_sweep_config(amplitudes: &[f64]) -> ExperimentConfig {
    let w = 6.0;
    let lay = compact_layout_offset(0.6, 0.2, 8.0, 70.0, 5.0 * w, 20.0);
    let y = lay.cfg.y;
    let a_max = amplitudes[0];
    let h = Coef::constant(1.0);
    let bump = Coef::plateau(&[y.0[1], y.0[2]], 0.18, 0.6, a_max);
    ExperimentConfig {
        schema: SCHEMA,
        dom: lay.dom.clone(),
        grid: GridSpec { l: lay.grid.l, n_space: lay.grid.n_space, cfl: lay.grid.cfl },
        model_ref: Model::new(Coef::zero(), h.clone()),
        model_alt: Model::new(Coef::zero(), h.times(Coef::constant(1.0).plus(bump))),
        sources: lay.template.clone(),
        sites: vec![Site { y, z: lay.cfg.z, r: lay.cfg.r, s_in: lay.cfg.s_in }],
        probe: ProbeTemplate { width: w * lay.k_out * DX },
        delta_ladder: amplitudes.iter().map(|a| a / a_max).collect(),
        s: 4,
        seed: 17,
        rays: RaySampling { n_t: 8, n_r: 2, n_ang: 16, n_dirs: 16, max_step: 0.02, ..RaySampling::default() },
        lipschitz_step: 0.05,
        eps: None,
        norm_order: 0,
    }
}

/// A small h-perturbation sweep (two rows) for plumbing and determinism checks.
pub fn tiny_sweep_config() -> ExperimentConfig {
    let w = 3.0;
    let lay = compact_layout_offset(0.6, 0.2, 8.0, 40.0, 5.0 * w, 10.0);
    let y = lay.cfg.y;
    let h = Coef::constant(1.0);
    let bump = Coef::plateau(&[y.0[1], y.0[2]], 0.09, 0.6, 0.2);
    ExperimentConfig {
        schema: SCHEMA,
        dom: lay.dom.clone(),
        grid: GridSpec { l: lay.grid.l, n_space: lay.grid.n_space, cfl: lay.grid.cfl },
        model_ref: Model::new(Coef::zero(), h.clone()),
        model_alt: Model::new(Coef::zero(), h.times(Coef::constant(1.0).plus(bump))),
        sources: lay.template.clone(),
        sites: vec![Site { y, z: lay.cfg.z, r: lay.cfg.r, s_in: lay.cfg.s_in }],
        probe: ProbeTemplate { width: w * lay.k_out * DX },
        delta_ladder: vec![1.0, 0.5],
        s: 4,
        seed: 5,
        rays: RaySampling { n_t: 4, n_r: 2, n_ang: 8, n_dirs: 8, max_step: 0.02, ..RaySampling::default() },
        lipschitz_step: 0.05,
        eps: None,
        norm_order: 0,
    }
}
