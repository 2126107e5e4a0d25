//! Special functions and one-dimensional quadrature.

use std::f64::consts::PI;

use statrs::function::gamma::ln_gamma;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// eˣ E₁(x) for x > 0, where E₁ is the exponential integral of order one.
///
/// Power series below x = 1, Lentz continued fraction above.
pub fn exp_e1(x: f64) -> f64 {
    assert!(x > 0.0, "exp_e1 requires x > 0");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (-EULER_GAMMA - x.ln() - sum) * x.exp()
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h
    }
}

/// E₁(x) for x > 0.
pub fn e1(x: f64) -> f64 {
    exp_e1(x) * (-x).exp()
}

/// exp(z²/4) D_ν(z) for ν < 0 and z ≥ 0, where D_ν is the parabolic
/// cylinder function. Uses the integral representation
/// exp(z²/4) D_ν(z) = Γ(−ν)⁻¹ ∫₀^∞ t^{−ν−1} exp(−zt − t²/2) dt.
pub fn scaled_parabolic_cylinder_d(nu: f64, z: f64) -> f64 {
    assert!(nu < 0.0 && z >= 0.0, "requires nu < 0 and z >= 0");
    let a = -nu - 1.0;
    let lg = ln_gamma(-nu);
    integrate_half_line(|t| {
        if t <= 0.0 {
            return 0.0;
        }
        let e = a * t.ln() - z * t - 0.5 * t * t - lg;
        e.exp()
    })
}

/// ∫₀^∞ f(t) dt by exp-sinh quadrature. Suited to integrands that decay at
/// least exponentially and may have an integrable singularity at 0.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F) -> f64 {
    let mut prev = f64::NAN;
    let mut h = 0.5;
    for _ in 0..8 {
        let mut sum = 0.0;
        let n = (5.0 / h) as i64;
        for k in -n..=n {
            let s = k as f64 * h;
            let u = 0.5 * PI * s.sinh();
            let t = u.exp();
            let w = 0.5 * PI * s.cosh() * t;
            if !t.is_finite() || !w.is_finite() {
                continue;
            }
            let v = f(t);
            if v.is_finite() {
                sum += v * w;
            }
        }
        let val = sum * h;
        if (val - prev).abs() <= 1e-13 * val.abs() {
            return val;
        }
        prev = val;
        h *= 0.5;
    }
    prev
}

/// ∫ₐᵇ f(t) dt by tanh-sinh quadrature. Tolerates integrable endpoint
/// singularities.
pub fn integrate_interval<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let r = 0.5 * (b - a);
    let mut prev = f64::NAN;
    let mut h = 0.5;
    for _ in 0..10 {
        let mut sum = 0.0;
        let n = (4.0 / h) as i64;
        for k in -n..=n {
            let s = k as f64 * h;
            let u = 0.5 * PI * s.sinh();
            let x = u.tanh();
            let w = 0.5 * PI * s.cosh() / u.cosh().powi(2);
            // distance from the nearest endpoint, computed without cancellation
            let gap = 1.0 / (u.abs().exp() * u.cosh());
            if gap == 0.0 || w == 0.0 {
                continue;
            }
            let t = if x >= 0.0 { b - r * gap } else { a + r * gap };
            let v = f(t);
            if v.is_finite() {
                sum += v * w;
            }
        }
        let val = sum * h * r;
        if (val - prev).abs() <= 1e-12 * val.abs().max(1e-300) {
            return val;
        }
        prev = val;
        h *= 0.5;
    }
    prev
}
