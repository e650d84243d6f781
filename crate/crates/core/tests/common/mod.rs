#![allow(dead_code)] // helpers are shared across test binaries

//! Shared oracles for the integration suites. These deliberately avoid the
//! library's own quadrature/FFT code paths: the binomial tree, composite
//! trapezoid, and Fourier-quadrature pricer are independent routes.

use num_complex::Complex64;
use rbf_pide::models::JumpModel;

/// Cox-Ross-Rubinstein binomial American put (diffusion-only oracle).
/// The asset price at node (i, j) is s0 e^{(2j - i) sigma sqrt(dt)}, read
/// from a precomputed power table.
pub fn crr_american_put(s0: f64, k: f64, r: f64, q: f64, sigma: f64, t: f64, steps: usize) -> f64 {
    let dt = t / steps as f64;
    let up = sigma * dt.sqrt();
    let disc = (-r * dt).exp();
    let u = up.exp();
    let d = (-up).exp();
    let p = (((r - q) * dt).exp() - d) / (u - d);
    let pw: Vec<f64> = (0..=2 * steps)
        .map(|m| s0 * ((m as f64 - steps as f64) * up).exp())
        .collect();
    let mut values: Vec<f64> = (0..=steps).map(|j| (k - pw[2 * j]).max(0.0)).collect();
    for i in (0..steps).rev() {
        for j in 0..=i {
            let st = pw[2 * j + steps - i];
            let cont = disc * (p * values[j + 1] + (1.0 - p) * values[j]);
            values[j] = cont.max(k - st);
        }
    }
    values[0]
}

/// Composite trapezoid over [lo, hi] with panel edges at the integrand's
/// kinks and `points` samples in total, distributed proportionally. Panel
/// endpoint values are taken as one-sided limits from inside the panel
/// (the Kou density jumps at y = 0, so the two panels meeting there see
/// different endpoint values).
pub fn trapezoid_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    points: usize,
) -> f64 {
    let mut edges: Vec<f64> = vec![lo];
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|y| *y > lo && *y < hi).collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    edges.extend(cuts);
    edges.push(hi);

    let total_len = hi - lo;
    let mut acc = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = ((points as f64 * (b - a) / total_len) as usize).max(1000);
        let h = (b - a) / m as f64;
        let eps = (b - a) * 1e-13;
        let mut s = 0.5 * (f(a + eps) + f(b - eps));
        for i in 1..m {
            s += f(a + i as f64 * h);
        }
        acc += s * h;
    }
    acc
}

/// European call by Fourier quadrature of the Lewis (2001) integral, using
/// the model's characteristic exponent but none of the library's FFT or
/// adaptive-quadrature machinery. Composite Simpson over [0, u_max].
pub fn lewis_call(model: &JumpModel, s: f64, k: f64, tau: f64) -> f64 {
    let kbar = (s / k).ln() + (model.r - model.q) * tau;
    let integrand = |u: f64| -> f64 {
        let z = Complex64::new(u, -0.5);
        let phi = (model.characteristic_exponent(z) * tau).exp();
        // the drift-bearing exponent already carries (r - q); remove it so
        // phi is the cf of the driftless part, then recentre with kbar
        let phi_driftless = phi * (-Complex64::i() * z * (model.r - model.q) * tau).exp();
        ((Complex64::i() * u * kbar).exp() * phi_driftless).re / (u * u + 0.25)
    };
    let u_max = 400.0;
    let m = 200_000; // even
    let h = u_max / m as f64;
    let mut acc = integrand(1e-12) + integrand(u_max);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(i as f64 * h);
    }
    let integral = acc * h / 3.0;
    s * (-model.q * tau).exp()
        - (s * k).sqrt() / std::f64::consts::PI * (-0.5 * (model.r + model.q) * tau).exp()
            * integral
}

/// European put from the Lewis call by parity.
pub fn lewis_put(model: &JumpModel, s: f64, k: f64, tau: f64) -> f64 {
    lewis_call(model, s, k, tau) - s * (-model.q * tau).exp() + k * (-model.r * tau).exp()
}
