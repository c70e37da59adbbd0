//! Minkowski light-cone geometry: slab domains, light-like rays, the planar
//! three-wave interaction configuration and its κ coefficients.
//!
//! Spacetime points and covectors carry four slots `[t, x1, x2, x3]`; in two
//! spatial dimensions the last slot is zero. Signature is (+,−,…,−).

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance of the causal-independence and cone-membership tests.
pub const CONE_TOL: f64 = 1e-10;
/// Tolerance on `|t_z − t_y| = |z' − y'|` when reading a null pair.
pub const NULL_TOL: f64 = 1e-8;

fn ser4<S: Serializer>(c: &[f64; 4], s: S) -> std::result::Result<S::Ok, S::Error> {
    // Trailing zero third axis is dropped so 2-d configs stay 3-tuples.
    let n = if c[3] == 0.0 { 3 } else { 4 };
    c[..n].serialize(s)
}

fn de4<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<[f64; 4], D::Error> {
    let v = Vec::<f64>::deserialize(d)?;
    if !(v.len() == 3 || v.len() == 4) {
        return Err(serde::de::Error::custom(format!(
            "expected 3 or 4 components, got {}",
            v.len()
        )));
    }
    let mut c = [0.0; 4];
    c[..v.len()].copy_from_slice(&v);
    Ok(c)
}

/// A spacetime point `(t, x1, x2, x3)`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Event(pub [f64; 4]);

impl Event {
    pub fn new(t: f64, x: &[f64]) -> Self {
        let mut c = [t, 0.0, 0.0, 0.0];
        c[1..1 + x.len()].copy_from_slice(x);
        Event(c)
    }
    pub fn t(&self) -> f64 {
        self.0[0]
    }
    pub fn x(&self) -> [f64; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }
    /// Euclidean norm of the spatial part.
    pub fn rad(&self) -> f64 {
        let x = self.x();
        (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
    }
    pub fn add_scaled(&self, s: f64, v: &[f64; 4]) -> Event {
        let mut c = self.0;
        for i in 0..4 {
            c[i] += s * v[i];
        }
        Event(c)
    }
    pub fn sub(&self, o: &Event) -> [f64; 4] {
        let mut c = [0.0; 4];
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = self.0[i] - o.0[i];
        }
        c
    }
    /// Rotate the (x1, x2) plane by `theta` about the t-axis.
    pub fn rotated(&self, theta: f64) -> Event {
        let (s, c) = theta.sin_cos();
        let mut e = self.0;
        e[1] = c * self.0[1] - s * self.0[2];
        e[2] = s * self.0[1] + c * self.0[2];
        Event(e)
    }
}

impl Serialize for Event {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ser4(&self.0, s)
    }
}
impl<'de> Deserialize<'de> for Event {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        de4(d).map(Event)
    }
}

/// A covector `(ξ0, ξ1, ξ2, ξ3)`, time component first.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Covector(pub [f64; 4]);

impl Covector {
    pub fn new(c0: f64, c: &[f64]) -> Self {
        Covector(Event::new(c0, c).0)
    }
    /// ξ0² − |ξ'|²
    pub fn quad(&self) -> f64 {
        let c = &self.0;
        c[0] * c[0] - c[1] * c[1] - c[2] * c[2] - c[3] * c[3]
    }
    pub fn is_light_like(&self, tol: f64) -> bool {
        self.quad().abs() <= tol * self.0[0].powi(2).max(1.0)
    }
    pub fn euclid(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    pub fn scaled(&self, s: f64) -> Covector {
        Covector(self.0.map(|v| v * s))
    }
    /// Euclidean pairing with a displacement `p` (coordinate components).
    pub fn pair(&self, p: &[f64; 4]) -> f64 {
        self.0.iter().zip(p).map(|(a, b)| a * b).sum()
    }
    pub fn rotated(&self, theta: f64) -> Covector {
        Covector(Event(self.0).rotated(theta).0)
    }
}

impl Serialize for Covector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ser4(&self.0, s)
    }
}
impl<'de> Deserialize<'de> for Covector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        de4(d).map(Covector)
    }
}

fn default_d() -> usize {
    2
}

/// The slab `(0,T) × B(0,ρ)` and its two shrunken copies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(rename = "T")]
    pub t_max: f64,
    pub rho: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub t1: f64,
    pub t2: f64,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = (self.d == 2 || self.d == 3)
            && self.rho > self.rho1
            && self.rho1 > self.rho2
            && self.rho2 > 0.0
            && 0.0 < self.t1
            && self.t1 < self.t2
            && self.t2 < self.t_max / 2.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "domain needs d in {{2,3}}, rho > rho1 > rho2 > 0 and 0 < t1 < t2 < T/2: {self:?}"
            )))
        }
    }

    /// `(radius, temporal inset)` of the level-`level` cylinder/diamond.
    pub fn level(&self, level: usize) -> (f64, f64) {
        match level {
            0 => (self.rho, 0.0),
            1 => (self.rho1, self.t1),
            _ => (self.rho2, self.t2),
        }
    }
}

/// Strict membership in `Ω_level = (t_i, T − t_i) × B(ρ_i)`.
pub fn in_cylinder(p: &Event, dom: &DomainSpec, level: usize) -> bool {
    let (r, ti) = dom.level(level);
    let t = p.t();
    t > ti && t < dom.t_max - ti && p.rad() < r
}

/// Closed membership in the causal diamond of level `level`.
///
/// Times are confined to the closed slab `[0, T]`.
pub fn in_diamond(p: &Event, dom: &DomainSpec, level: usize) -> bool {
    let (r, ti) = dom.level(level);
    let t = p.t();
    let x = p.rad();
    (0.0..=dom.t_max).contains(&t) && x <= t - ti + r && x <= r + dom.t_max - ti - t
}

/// Raise a light-like covector to a future-pointing null velocity with unit
/// time component.
pub fn musical_raise(xi: &Covector) -> Result<[f64; 4]> {
    if !xi.is_light_like(1e-10) {
        return Err(Error::NotLightLike(format!("{:?}", xi.0)));
    }
    let c0 = xi.0[0];
    if c0 == 0.0 {
        return Err(Error::NotLightLike("zero time component".into()));
    }
    let v = [c0, -xi.0[1], -xi.0[2], -xi.0[3]];
    Ok(v.map(|a| a / c0))
}

/// `a(r) = √(1 − r²)`
pub fn a_of(r: f64) -> f64 {
    (1.0 - r * r).sqrt()
}

fn check_r(r: f64, r0: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) || !(0.0..1.0).contains(&r0) {
        return Err(Error::Domain(format!("need 0 < r < 1 and 0 <= r0 < 1, got r={r}, r0={r0}")));
    }
    Ok(())
}

/// ξ₍₁₎ = −ν₍₁₎, ξ₍₂₎ = ν₍₂₎, ξ₍₃₎ = ν₍₃₎ and η.
pub fn standard_covectors(r: f64, r0: f64) -> Result<([Covector; 3], Covector)> {
    check_r(r, r0)?;
    let a = a_of(r);
    let a0 = a_of(r0);
    Ok((
        [
            Covector([1.0, -1.0, 0.0, 0.0]),
            Covector([-1.0, a, r, 0.0]),
            Covector([-1.0, a, -r, 0.0]),
        ],
        Covector([-1.0, -a0, r0, 0.0]),
    ))
}

/// Gaussian elimination with partial pivoting on a 3×3 system.
pub(crate) fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Result<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[piv][col].abs() < 1e-300 {
            return Err(Error::Singular);
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Ok(x)
}

/// Solve `r² η = Σ κ_j ξ_j` in the (t, x1, x2) components.
pub fn solve_kappa(r: f64, r0: f64) -> Result<[f64; 3]> {
    let (xi, eta) = standard_covectors(r, r0)?;
    let mut m = [[0.0; 3]; 3];
    for (row, mrow) in m.iter_mut().enumerate() {
        for (j, x) in xi.iter().enumerate() {
            mrow[j] = x.0[row];
        }
    }
    let rhs = [r * r * eta.0[0], r * r * eta.0[1], r * r * eta.0[2]];
    let k = solve3(m, rhs)?;
    // One step of iterative refinement keeps the residual at roundoff level.
    let mut res = [0.0; 3];
    for row in 0..3 {
        res[row] = rhs[row] - (0..3).map(|j| m[row][j] * k[j]).sum::<f64>();
    }
    let dk = solve3(m, res)?;
    Ok([k[0] + dk[0], k[1] + dk[1], k[2] + dk[2]])
}

/// A segment `s ↦ base + s·velocity`, `s ∈ [0, s_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightRay {
    pub base: Event,
    pub velocity: Covector,
    pub s_max: f64,
}

impl LightRay {
    pub fn at(&self, s: f64) -> Event {
        self.base.add_scaled(s, &self.velocity.0)
    }
    pub fn end(&self) -> Event {
        self.at(self.s_max)
    }
    /// Lowered velocity; Euclidean norm √2 for unit-speed null rays.
    pub fn covector(&self) -> Covector {
        let v = self.velocity.0;
        Covector([v[0], -v[1], -v[2], -v[3]])
    }
}

/// The §3.1-style configuration: three sources focusing at `y`, one
/// outgoing ray from `y` to the observation point `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionConfig {
    pub x: [Event; 3],
    pub y: Event,
    pub z: Event,
    pub r: f64,
    pub r0: f64,
    pub xi: [Covector; 3],
    pub eta: Covector,
    pub kappa: [f64; 3],
    pub s_in: f64,
    pub s_out: f64,
    pub rays_in: [LightRay; 3],
    pub ray_out: LightRay,
}

/// Future-pointing null separation of `a → b` (with tolerance).
pub fn is_future_null(a: &Event, b: &Event, tol: f64) -> bool {
    let d = b.sub(a);
    let dt = d[0];
    let dx = (d[1] * d[1] + d[2] * d[2] + d[3] * d[3]).sqrt();
    dt > 0.0 && (dt - dx).abs() <= tol * dt.max(1.0)
}

/// `b` lies in the closed causal future of `a`.
pub fn in_causal_future(a: &Event, b: &Event, tol: f64) -> bool {
    let d = b.sub(a);
    let dx = (d[1] * d[1] + d[2] * d[2] + d[3] * d[3]).sqrt();
    d[0] >= -tol && dx <= d[0] + tol
}

/// Build the interaction configuration for a user-chosen `(y, z)` pair.
///
/// The lab frame is the paper's frame: wave 1 moves along +x1, and
/// `r0` is the x2-component of the outgoing spatial direction, which must
/// point into the half-plane x1 < 0.
pub fn build_interaction(
    dom: &DomainSpec,
    y: Event,
    z: Event,
    r: f64,
    s_in: f64,
) -> Result<InteractionConfig> {
    dom.validate()?;
    if !(s_in > 0.0) {
        return Err(Error::Domain(format!("s_in must be positive, got {s_in}")));
    }
    if !in_diamond(&y, dom, 0) || in_cylinder(&y, dom, 0) {
        return Err(Error::ConfigInfeasible("y must lie in the diamond but outside Omega".into()));
    }
    if !in_cylinder(&z, dom, 0) {
        return Err(Error::ConfigInfeasible("z must lie in Omega".into()));
    }
    if !is_future_null(&y, &z, NULL_TOL) {
        return Err(Error::ConfigInfeasible("(y, z) is not a future-pointing null pair".into()));
    }
    let s_out = z.t() - y.t();
    let dir = z.sub(&y).map(|v| v / s_out);
    if dir[3].abs() > NULL_TOL {
        return Err(Error::ConfigInfeasible("out-ray must lie in the (x1, x2) plane".into()));
    }
    let r0 = dir[2];
    if !(0.0..1.0).contains(&r0) || dir[1] >= 0.0 {
        return Err(Error::ConfigInfeasible(format!(
            "out direction ({:.4}, {:.4}) must be (-a(r0), r0) with 0 <= r0 < 1",
            dir[1], dir[2]
        )));
    }
    check_r(r, r0)?;
    let (xi, eta) = standard_covectors(r, r0)?;
    let kappa = solve_kappa(r, r0)?;
    let mut x = [Event::default(); 3];
    let mut rays_in = [LightRay { base: y, velocity: Covector::default(), s_max: s_in }; 3];
    for k in 0..3 {
        let v = musical_raise(&xi[k])?;
        x[k] = y.add_scaled(-s_in, &v);
        rays_in[k] = LightRay { base: x[k], velocity: Covector(v), s_max: s_in };
        if !in_cylinder(&x[k], dom, 0) {
            return Err(Error::ConfigInfeasible(format!("source point x{} leaves Omega", k + 1)));
        }
    }
    for j in 0..3 {
        for k in 0..3 {
            if j != k && in_causal_future(&x[k], &x[j], CONE_TOL) {
                return Err(Error::ConfigInfeasible(format!(
                    "x{} lies in the causal future of x{}",
                    j + 1,
                    k + 1
                )));
            }
        }
    }
    let ray_out = LightRay { base: y, velocity: Covector(dir), s_max: s_out };
    Ok(InteractionConfig { x, y, z, r, r0, xi, eta, kappa, s_in, s_out, rays_in, ray_out })
}

impl InteractionConfig {
    /// The same experiment rotated by `theta` about the t-axis.
    pub fn rotated(&self, theta: f64) -> InteractionConfig {
        let rot_ray = |l: &LightRay| LightRay {
            base: l.base.rotated(theta),
            velocity: l.velocity.rotated(theta),
            s_max: l.s_max,
        };
        InteractionConfig {
            x: self.x.map(|e| e.rotated(theta)),
            y: self.y.rotated(theta),
            z: self.z.rotated(theta),
            xi: self.xi.map(|c| c.rotated(theta)),
            eta: self.eta.rotated(theta),
            rays_in: [rot_ray(&self.rays_in[0]), rot_ray(&self.rays_in[1]), rot_ray(&self.rays_in[2])],
            ray_out: rot_ray(&self.ray_out),
            ..self.clone()
        }
    }

    /// Max-norm residual of `r² η − Σ κ_j ξ_j`.
    pub fn kappa_residual(&self) -> f64 {
        kappa_residual(self.r, &self.eta, &self.xi, &self.kappa)
    }
}

pub fn kappa_residual(r: f64, eta: &Covector, xi: &[Covector; 3], kappa: &[f64; 3]) -> f64 {
    (0..4)
        .map(|i| (r * r * eta.0[i] - (0..3).map(|j| kappa[j] * xi[j].0[i]).sum::<f64>()).abs())
        .fold(0.0, f64::max)
}

/// `(x, y, z) ∈ 𝕊⁺(Ω)`.
pub fn in_s_plus(x: &Event, y: &Event, z: &Event, dom: &DomainSpec) -> bool {
    is_future_null(x, y, NULL_TOL)
        && is_future_null(y, z, NULL_TOL)
        && [x, y, z].iter().all(|p| in_diamond(p, dom, 0))
        && in_cylinder(x, dom, 0)
        && in_cylinder(z, dom, 0)
        && !in_cylinder(y, dom, 0)
}
