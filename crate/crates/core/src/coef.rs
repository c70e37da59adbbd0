//! Analytic coefficient fields `V(t,x)`, `h(t,x)`.
//!
//! Coefficients are small expression trees so that the solver can sample
//! them on any grid while the ray transform evaluates them exactly.
//! Time dependence is restricted to a scalar profile multiplying a spatial
//! part (`TimeScaled`), which keeps the solver's per-step cost at one
//! multiply.

use serde::{Deserialize, Serialize};

use crate::geometry::Event;

/// Smooth compactly supported bump on `(-1, 1)`, equal to 1 at 0.
pub fn bump1(q: f64) -> f64 {
    if q.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - q * q)).exp()
    }
}

/// Planck-type taper: 1 on `[0, a]`, smooth decay to 0 at 1.
pub fn taper(q: f64, a: f64) -> f64 {
    if q >= 1.0 {
        0.0
    } else if q <= a {
        1.0
    } else {
        let s = (q - a) / (1.0 - a);
        1.0 / (1.0 + (1.0 / (1.0 - s) - 1.0 / s).exp())
    }
}

/// Scalar time profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    /// Smooth bump supported on `[t0, t1]`, peak 1 at the midpoint.
    Pulse { t0: f64, t1: f64 },
    /// 1 for `t ≤ t0`, smooth decay to 0 at `t1`.
    SwitchOff { t0: f64, t1: f64 },
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Pulse { t0, t1 } => {
                let mid = 0.5 * (t0 + t1);
                bump1((t - mid) / (0.5 * (t1 - t0)))
            }
            TimeProfile::SwitchOff { t0, t1 } => {
                if t <= t0 {
                    1.0
                } else {
                    taper((t - t0) / (t1 - t0), 0.0)
                }
            }
        }
    }
}

/// Coefficient expression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coef {
    Constant { value: f64 },
    /// `height · exp(−|x − center|²/(2 width²))`
    Gaussian { center: Vec<f64>, width: f64, height: f64 },
    /// `height · bump1(|x − center|/radius)`, compactly supported.
    Bump { center: Vec<f64>, radius: f64, height: f64 },
    /// Flat-top bump: `height` on `|x − center| ≤ flat·radius`, smooth decay to 0 at `radius`.
    Plateau { center: Vec<f64>, radius: f64, flat: f64, height: f64 },
    /// `amplitude · sin(k·x + phase)`
    Wave { k: Vec<f64>, phase: f64, amplitude: f64 },
    /// `Σ c · Π x_i^{p_i}`, for test fields.
    Poly { terms: Vec<(f64, Vec<u32>)> },
    Sum { parts: Vec<Coef> },
    Product { parts: Vec<Coef> },
    TimeScaled { profile: TimeProfile, space: Box<Coef> },
}

impl Coef {
    pub fn constant(value: f64) -> Coef {
        Coef::Constant { value }
    }
    pub fn zero() -> Coef {
        Coef::constant(0.0)
    }
    pub fn gaussian(center: &[f64], width: f64, height: f64) -> Coef {
        Coef::Gaussian { center: center.to_vec(), width, height }
    }
    pub fn bump(center: &[f64], radius: f64, height: f64) -> Coef {
        Coef::Bump { center: center.to_vec(), radius, height }
    }
    pub fn plateau(center: &[f64], radius: f64, flat: f64, height: f64) -> Coef {
        Coef::Plateau { center: center.to_vec(), radius, flat, height }
    }
    pub fn plus(self, other: Coef) -> Coef {
        match self {
            Coef::Sum { mut parts } => {
                parts.push(other);
                Coef::Sum { parts }
            }
            c => Coef::Sum { parts: vec![c, other] },
        }
    }
    pub fn times(self, other: Coef) -> Coef {
        Coef::Product { parts: vec![self, other] }
    }
    pub fn scaled(self, s: f64) -> Coef {
        Coef::Product { parts: vec![Coef::constant(s), self] }
    }

    /// Evaluate the spatial part at `x` (time profiles ignored).
    pub fn eval_space(&self, x: &[f64]) -> f64 {
        let dist2 = |c: &[f64]| -> f64 { c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum() };
        match self {
            Coef::Constant { value } => *value,
            Coef::Gaussian { center, width, height } => {
                height * (-dist2(center) / (2.0 * width * width)).exp()
            }
            Coef::Bump { center, radius, height } => height * bump1(dist2(center).sqrt() / radius),
            Coef::Plateau { center, radius, flat, height } => height * taper(dist2(center).sqrt() / radius, *flat),
            Coef::Wave { k, phase, amplitude } => {
                amplitude * (k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + phase).sin()
            }
            Coef::Poly { terms } => terms
                .iter()
                .map(|(c, p)| c * p.iter().zip(x).map(|(&e, &xi)| xi.powi(e as i32)).product::<f64>())
                .sum(),
            Coef::Sum { parts } => parts.iter().map(|p| p.eval_space(x)).sum(),
            Coef::Product { parts } => parts.iter().map(|p| p.eval_space(x)).product(),
            Coef::TimeScaled { space, .. } => space.eval_space(x),
        }
    }

    /// Time factor at `t`; 1 for time-independent expressions.
    ///
    /// Only meaningful when `separable()` holds.
    pub fn eval_time(&self, t: f64) -> f64 {
        match self {
            Coef::TimeScaled { profile, space } => profile.eval(t) * space.eval_time(t),
            Coef::Sum { .. } => 1.0,
            Coef::Product { parts } => parts.iter().map(|p| p.eval_time(t)).product(),
            _ => 1.0,
        }
    }

    /// Syntactically zero (constant 0, or a product with a zero factor).
    pub fn is_zero(&self) -> bool {
        match self {
            Coef::Constant { value } => *value == 0.0,
            Coef::Gaussian { height, .. } | Coef::Bump { height, .. } | Coef::Plateau { height, .. } => *height == 0.0,
            Coef::Wave { amplitude, .. } => *amplitude == 0.0,
            Coef::Poly { terms } => terms.iter().all(|(c, _)| *c == 0.0),
            Coef::Sum { parts } => parts.iter().all(Coef::is_zero),
            Coef::Product { parts } => parts.iter().any(Coef::is_zero),
            Coef::TimeScaled { space, .. } => space.is_zero(),
        }
    }

    pub fn is_static(&self) -> bool {
        match self {
            Coef::TimeScaled { .. } => false,
            Coef::Sum { parts } | Coef::Product { parts } => parts.iter().all(Coef::is_static),
            _ => true,
        }
    }

    /// Whether `c(t,x) = eval_time(t) · eval_space(x)` holds.
    pub fn separable(&self) -> bool {
        match self {
            Coef::Sum { parts } => parts.iter().all(Coef::is_static),
            Coef::Product { parts } => parts.iter().all(Coef::separable),
            Coef::TimeScaled { space, .. } => space.separable(),
            _ => true,
        }
    }

    /// Full spacetime evaluation.
    pub fn eval(&self, p: &Event) -> f64 {
        match self {
            Coef::TimeScaled { profile, space } => profile.eval(p.t()) * space.eval(p),
            Coef::Sum { parts } => parts.iter().map(|c| c.eval(p)).sum(),
            Coef::Product { parts } => parts.iter().map(|c| c.eval(p)).product(),
            _ => self.eval_space(&p.0[1..]),
        }
    }
}

/// Anything that can be evaluated at a spacetime point.
pub trait SpacetimeFn: Sync {
    fn at(&self, p: &Event) -> f64;
}

impl SpacetimeFn for Coef {
    fn at(&self, p: &Event) -> f64 {
        self.eval(p)
    }
}

impl<F: Fn(&Event) -> f64 + Sync> SpacetimeFn for F {
    fn at(&self, p: &Event) -> f64 {
        self(p)
    }
}

/// Pointwise difference `a − b`.
pub struct Diff<'a, A: ?Sized, B: ?Sized>(pub &'a A, pub &'a B);

impl<A: SpacetimeFn + ?Sized, B: SpacetimeFn + ?Sized> SpacetimeFn for Diff<'_, A, B> {
    fn at(&self, p: &Event) -> f64 {
        self.0.at(p) - self.1.at(p)
    }
}
