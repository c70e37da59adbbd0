use rustfft::{num_complex::Complex, FftPlanner};
use waveinv::grid::{sobolev_norm, Field, Region, SpacetimeGrid};
use waveinv::sources::{realize_packet, SourceSpec};
use waveinv::{Covector, DomainSpec, Event};

fn dom() -> DomainSpec {
    DomainSpec { d: 2, t_max: 4.0, rho: 1.8, rho1: 1.5, rho2: 1.2, t1: 0.2, t2: 0.4 }
}

fn fft_axis(data: &mut [Complex<f64>], shape: [usize; 3], axis: usize, planner: &mut FftPlanner<f64>) {
    let n = shape[axis];
    let fft = planner.plan_fft_forward(n);
    let strides = [shape[1] * shape[2], shape[2], 1];
    let s = strides[axis];
    let mut line = vec![Complex::new(0.0, 0.0); n];
    let total: usize = shape.iter().product();
    for base in 0..total {
        let pos = (base / s) % n;
        if pos != 0 {
            continue;
        }
        for (j, v) in line.iter_mut().enumerate() {
            *v = data[base + j * s];
        }
        fft.process(&mut line);
        for (j, v) in line.iter().enumerate() {
            data[base + j * s] = *v;
        }
    }
}

/// Fraction of spectral L² mass within `angle` of ±direction.
fn cone_fraction(f: &Field, dir: &Covector, angle: f64) -> f64 {
    let w = f.win;
    let shape = [w.nt(), w.shape()[0], w.shape()[1]];
    let mut data: Vec<Complex<f64>> = f.data.iter().map(|&v| Complex::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    for a in 0..3 {
        fft_axis(&mut data, shape, a, &mut planner);
    }
    let g = &f.grid;
    let freq = |m: usize, n: usize, h: f64| {
        let sm = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
        2.0 * std::f64::consts::PI * sm / (n as f64 * h)
    };
    let dn = dir.euclid();
    let (mut inside, mut total) = (0.0, 0.0);
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            for k in 0..shape[2] {
                let p = data[(i * shape[1] + j) * shape[2] + k].norm_sqr();
                let v = [freq(i, shape[0], g.dt()), freq(j, shape[1], g.dx()), freq(k, shape[2], g.dx())];
                let vn = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                total += p;
                if vn > 0.0 {
                    let c = (v[0] * dir.0[0] + v[1] * dir.0[1] + v[2] * dir.0[2]).abs() / (vn * dn);
                    if c.min(1.0).acos() <= angle {
                        inside += p;
                    }
                }
            }
        }
    }
    inside / total
}

fn packet(ls: f64) -> (SourceSpec, Field) {
    let g = SpacetimeGrid::new(2, 6.0, 257, 4.0, 0.5).unwrap();
    let sigma = 0.3;
    let sp = SourceSpec {
        center: Event::new(1.5, &[0.2, -0.1]),
        direction: Covector::new(-1.0, &[0.8, 0.6]),
        sigma,
        lambda: ls / sigma,
        k: 2,
    };
    let f = realize_packet(&sp, &g, &dom(), 2).unwrap();
    (sp, f)
}

#[test]
fn spectrum_concentrated_in_direction_cone() {
    let (sp, f) = packet(5.0);
    let frac = cone_fraction(&f, &sp.direction, 0.3);
    assert!(frac >= 0.8, "cone fraction {frac}");
}

#[test]
fn concentration_improves_with_lambda_sigma() {
    let fr: Vec<f64> = [4.0, 5.0, 6.5, 8.0]
        .iter()
        .map(|&ls| {
            let (sp, f) = packet(ls);
            cone_fraction(&f, &sp.direction, 0.3)
        })
        .collect();
    assert!(fr.windows(2).all(|w| w[1] > w[0]), "{fr:?}");
}

#[test]
fn translation_equivariance() {
    let g = SpacetimeGrid::new(2, 6.0, 193, 4.0, 0.5).unwrap();
    let d = dom();
    let base = SourceSpec {
        center: Event::new(g.t(40), &[g.x(90), g.x(100)]),
        direction: Covector::new(1.0, &[-1.0, 0.0]),
        sigma: 0.25,
        lambda: 20.0,
        k: 1,
    };
    let moved = SourceSpec { center: Event::new(g.t(52), &[g.x(97), g.x(95)]), ..base.clone() };
    let a = realize_packet(&base, &g, &d, 2).unwrap();
    let b = realize_packet(&moved, &g, &d, 2).unwrap();
    assert_eq!(a.win.shape(), b.win.shape());
    assert_eq!(b.win.t0 - a.win.t0, 12);
    let peak = a.max_abs();
    for (x, y) in a.data.iter().zip(&b.data) {
        assert!((x - y).abs() <= 1e-9 * peak);
    }
}

#[test]
fn normalization_stable_under_refinement() {
    let d = dom();
    let sp = SourceSpec {
        center: Event::new(2.0, &[0.1, 0.0]),
        direction: Covector::new(1.0, &[-1.0, 0.0]),
        sigma: 0.4,
        lambda: 10.5,
        k: 1,
    };
    // λ·dx ≈ 0.4 on the coarse grid.
    let scale = |n: usize| {
        let g = SpacetimeGrid::new(2, 2.4, n, 4.0, 0.5).unwrap();
        let f = realize_packet(&sp, &g, &d, 4).unwrap();
        // Peak of the unnormalized packet is 1 at the center.
        let raw = Field::from_fn(&g, f.win, |t, x| sp.shape(&Event::new(t, &x[..2])));
        assert!((sobolev_norm(&f, 4, &Region::omega(&d)).unwrap() - 1.0).abs() < 1e-10);
        f.max_abs() / raw.max_abs()
    };
    let (a, b) = (scale(129), scale(257));
    assert!((a / b - 1.0).abs() <= 0.05, "{a} vs {b}");
}
