//! Ground-truth pricers: Black-Scholes closed form, the Merton analytic
//! series, and the FFT-based Fourier space time-stepping (FST) pricer for
//! European and American options under both jump models.

use num_complex::Complex64;
use rustfft::FftPlanner;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::models::{JumpModel, ModelKind};
use crate::stepper::{ContractSpec, ExerciseStyle, OptionSide};

/// Standard normal CDF via erfc (accurate to ~1e-15).
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Black-Scholes price for the side/strike of `contract`, with explicit
/// rates and volatility (preconditions: sigma > 0, tau > 0, s > 0).
pub fn black_scholes_price(
    r: f64,
    q: f64,
    sigma: f64,
    contract: &ContractSpec,
    s: f64,
    tau: f64,
) -> f64 {
    black_scholes_raw(r, q, sigma, contract.side, contract.strike, s, tau)
}

fn black_scholes_raw(
    r: f64,
    q: f64,
    sigma: f64,
    side: OptionSide,
    k: f64,
    s: f64,
    tau: f64,
) -> f64 {
    debug_assert!(sigma > 0.0 && tau > 0.0 && s > 0.0 && k > 0.0);
    let vol = sigma * tau.sqrt();
    let d_plus = ((s / k).ln() + (r - q + 0.5 * sigma * sigma) * tau) / vol;
    let d_minus = d_plus - vol;
    match side {
        OptionSide::Call => {
            s * (-q * tau).exp() * norm_cdf(d_plus) - k * (-r * tau).exp() * norm_cdf(d_minus)
        }
        OptionSide::Put => {
            k * (-r * tau).exp() * norm_cdf(-d_minus) - s * (-q * tau).exp() * norm_cdf(-d_plus)
        }
    }
}

/// Closed-form Black-Scholes (Delta, Gamma) for the given side.
pub fn black_scholes_greeks(
    r: f64,
    q: f64,
    sigma: f64,
    side: OptionSide,
    k: f64,
    s: f64,
    tau: f64,
) -> (f64, f64) {
    let vol = sigma * tau.sqrt();
    let d_plus = ((s / k).ln() + (r - q + 0.5 * sigma * sigma) * tau) / vol;
    let disc_q = (-q * tau).exp();
    let delta = match side {
        OptionSide::Call => disc_q * norm_cdf(d_plus),
        OptionSide::Put => -disc_q * norm_cdf(-d_plus),
    };
    let gamma = disc_q * norm_pdf(d_plus) / (s * vol);
    (delta, gamma)
}

/// Merton analytic series: a Poisson-weighted sum of Black-Scholes prices
/// with per-term volatility sigma_k^2 = sigma^2 + k sigma_j^2/tau and rate
/// r_k = r - lambda eta + k log(1 + eta)/tau. Terminates when a term falls
/// below `tol` times the running sum, or at `k_max` terms.
pub fn merton_series_price(
    model: &JumpModel,
    contract: &ContractSpec,
    s: f64,
    tau: f64,
    tol: f64,
    k_max: usize,
) -> Result<f64> {
    if model.kind() != ModelKind::Merton {
        return Err(Error::InvalidModel(format!(
            "Merton series needs a Merton model, got {:?}",
            model.kind()
        )));
    }
    if contract.exercise != ExerciseStyle::European {
        return Err(Error::InvalidModel(
            "Merton series prices European contracts only".into(),
        ));
    }
    let sigma_j2 = match model.law {
        crate::models::JumpLaw::Merton { sigma_j, .. } => sigma_j * sigma_j,
        _ => unreachable!("kind checked above"),
    };
    let eta = model.eta();
    if 1.0 + eta <= 0.0 {
        return Err(Error::SeriesUndefined(format!(
            "1 + eta = {} must be positive",
            1.0 + eta
        )));
    }
    let lam_prime = model.lambda * (1.0 + eta);
    let log1eta = (1.0 + eta).ln();

    let mut weight = (-lam_prime * tau).exp();
    let mut total = 0.0;
    for k in 0..k_max {
        let sigma_k = (model.sigma * model.sigma + k as f64 * sigma_j2 / tau).sqrt();
        let r_k = model.r - model.lambda * eta + k as f64 * log1eta / tau;
        let term = weight
            * black_scholes_raw(r_k, model.q, sigma_k, contract.side, contract.strike, s, tau);
        total += term;
        if k > 0 && term < tol * total.abs() {
            break;
        }
        weight *= lam_prime * tau / (k + 1) as f64;
    }
    Ok(total)
}

/// Periodic log-price grid for the FST pricer with its conjugate Fourier
/// frequencies. `size` must be a power of two, at least 2^10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FstGrid {
    size: usize,
    x_lo: f64,
    x_hi: f64,
}

impl FstGrid {
    pub fn new(size: usize, x_lo: f64, x_hi: f64) -> Result<Self> {
        if size < 1024 || !size.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "FST size must be a power of two >= 1024, got {size}"
            )));
        }
        if !(x_lo < x_hi) {
            return Err(Error::Domain(format!("empty FST domain [{x_lo}, {x_hi}]")));
        }
        Ok(FstGrid { size, x_lo, x_hi })
    }

    /// Default grid: 2^14 points on [log K - 10, log K + 10].
    pub fn for_strike(strike: f64) -> Result<Self> {
        let lk = strike.ln();
        Self::new(1 << 14, lk - 10.0, lk + 10.0)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    /// Node spacing; the grid is periodic with period x_hi - x_lo, so the
    /// last node sits one spacing short of x_hi.
    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.size as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.size).map(|j| self.x_lo + j as f64 * dx).collect()
    }

    /// Conjugate Fourier frequencies in FFT ordering; spacing
    /// 2 pi / (x_hi - x_lo).
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.size;
        let dw = 2.0 * std::f64::consts::PI / (self.x_hi - self.x_lo);
        (0..n)
            .map(|k| {
                if k <= n / 2 {
                    k as f64 * dw
                } else {
                    (k as f64 - n as f64) * dw
                }
            })
            .collect()
    }
}

/// A priced curve over the FST grid nodes.
pub struct FstCurve {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl FstCurve {
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Local 4-point Lagrange interpolation of the curve (the grid is far
    /// finer than any evaluation grid, so cubic accuracy is ample).
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let dx = self.xs[1] - self.xs[0];
        let t = (x - self.xs[0]) / dx;
        let i = (t.floor() as isize).clamp(1, n as isize - 3) as usize;
        let s = t - i as f64; // in [0,1) away from the edges
        let (f0, f1, f2, f3) = (
            self.values[i - 1],
            self.values[i],
            self.values[i + 1],
            self.values[i + 2],
        );
        // Lagrange basis on offsets {-1, 0, 1, 2}
        let a = -s * (s - 1.0) * (s - 2.0) / 6.0;
        let b = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
        let c = -(s + 1.0) * s * (s - 2.0) / 2.0;
        let d = (s + 1.0) * s * (s - 1.0) / 6.0;
        a * f0 + b * f1 + c * f2 + d * f3
    }

    pub fn values_at(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.value_at(x)).collect()
    }
}

fn payoff_on(grid: &FstGrid, contract: &ContractSpec, side: OptionSide) -> Vec<f64> {
    let k = contract.strike;
    grid.nodes()
        .iter()
        .map(|&x| match side {
            OptionSide::Call => (x.exp() - k).max(0.0),
            OptionSide::Put => (k - x.exp()).max(0.0),
        })
        .collect()
}

fn check_domain(grid: &FstGrid, contract: &ContractSpec) -> Result<()> {
    let lk = contract.strike_log();
    if !(grid.x_lo < lk && lk < grid.x_hi) {
        return Err(Error::DomainTooSmall(format!(
            "strike log-price {lk} outside FST domain [{}, {}]",
            grid.x_lo, grid.x_hi
        )));
    }
    // the vanishing side of the payoff must have decayed at its boundary
    let k = contract.strike;
    let boundary_payoff = match contract.side {
        OptionSide::Put => (k - grid.x_hi.exp()).max(0.0),
        OptionSide::Call => (grid.x_lo.exp() - k).max(0.0),
    };
    if boundary_payoff > 1e-6 * k {
        return Err(Error::DomainTooSmall(format!(
            "payoff at the decay boundary is {boundary_payoff:e}, above 1e-6 K"
        )));
    }
    Ok(())
}

/// Applies the Fourier-space propagator exp((psi(w) - r) dt) to the sampled
/// curve, in place. Returns the maximum imaginary residue of the transform.
fn propagate(
    values: &mut [f64],
    freqs: &[f64],
    model: &JumpModel,
    dt: f64,
    planner: &mut FftPlanner<f64>,
) -> f64 {
    let n = values.len();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.process(&mut buf);
    for (k, (b, &w)) in buf.iter_mut().zip(freqs).enumerate() {
        let psi = model.characteristic_exponent(Complex64::new(w, 0.0));
        let mut mult = ((psi - model.r) * dt).exp();
        if k == n / 2 {
            // the Nyquist bin is self-conjugate: keep the multiplier real so
            // the propagated signal stays real
            mult = Complex64::new(mult.re, 0.0);
        }
        *b *= mult;
    }
    ifft.process(&mut buf);
    let scale = 1.0 / n as f64;
    let mut imag_max = 0.0f64;
    for (v, b) in values.iter_mut().zip(&buf) {
        *v = b.re * scale;
        imag_max = imag_max.max((b.im * scale).abs());
    }
    imag_max
}

fn residue_check(imag_max: f64, values: &[f64]) -> Result<()> {
    let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if imag_max > 1e-8 * vmax.max(1e-300) {
        return Err(Error::NumericalFailure {
            what: format!("FST imaginary residue {imag_max:e} exceeds 1e-8 max|V|"),
            step: 0,
        });
    }
    Ok(())
}

/// One-step FST European pricing: V = IDFT[ DFT[payoff] e^{(psi - r) tau} ].
///
/// The put is priced directly. The call payoff grows like e^x and would wrap
/// around the periodic domain, so it is decomposed as
/// (e^x - K)^+ = (K - e^x)^+ + (e^x - K); the bounded part goes through the
/// transform and the linear part propagates in closed form to
/// s e^{-q tau} - K e^{-r tau} (put-call parity holds by construction).
pub fn fst_price_european(
    model: &JumpModel,
    contract: &ContractSpec,
    grid: &FstGrid,
) -> Result<FstCurve> {
    model.validate()?;
    contract.validate()?;
    check_domain(grid, contract)?;
    let tau = contract.maturity;
    let mut values = payoff_on(grid, contract, OptionSide::Put);
    let freqs = grid.frequencies();
    let mut planner = FftPlanner::new();
    let imag = propagate(&mut values, &freqs, model, tau, &mut planner);
    residue_check(imag, &values)?;
    let xs = grid.nodes();
    if contract.side == OptionSide::Call {
        let k = contract.strike;
        for (v, &x) in values.iter_mut().zip(&xs) {
            *v += (x - model.q * tau).exp() - k * (-model.r * tau).exp();
        }
    }
    Ok(FstCurve { xs, values })
}

/// Per-step FST American put: V_{m+1} = max(IDFT[DFT[V_m] e^{(psi - r) dt}],
/// payoff), for `steps` steps of dt = T/steps.
pub fn fst_price_american(
    model: &JumpModel,
    contract: &ContractSpec,
    grid: &FstGrid,
    steps: usize,
) -> Result<FstCurve> {
    model.validate()?;
    contract.validate()?;
    if contract.side != OptionSide::Put {
        return Err(Error::Domain("FST American supports puts only".into()));
    }
    if steps == 0 {
        return Err(Error::Domain("need at least one time step".into()));
    }
    check_domain(grid, contract)?;
    let g = payoff_on(grid, contract, OptionSide::Put);
    let mut values = g.clone();
    let freqs = grid.frequencies();
    let dt = contract.maturity / steps as f64;
    let mut planner = FftPlanner::new();
    let mut imag = 0.0f64;
    for _ in 0..steps {
        imag = imag.max(propagate(&mut values, &freqs, model, dt, &mut planner));
        for (v, &gi) in values.iter_mut().zip(&g) {
            if *v < gi {
                *v = gi;
            }
        }
    }
    residue_check(imag, &values)?;
    Ok(FstCurve {
        xs: grid.nodes(),
        values,
    })
}
