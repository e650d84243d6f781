//! Fixed-step stiff time integration of rho_tau = Theta rho: one implicit
//! Euler startup step followed by BDF2, with the per-step
//! projection-and-refit loop for American puts.

use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::collocation::ThetaOperator;
use crate::error::{Error, Result};
use crate::rbf::{evaluate_interpolant, CollocationGrid, SplineSystem};

type Lu = nalgebra::linalg::LU<f64, Dyn, Dyn>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionSide {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExerciseStyle {
    European,
    American,
}

/// Strike, maturity, payoff side, exercise style.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractSpec {
    pub strike: f64,
    pub maturity: f64,
    pub side: OptionSide,
    pub exercise: ExerciseStyle,
}

impl ContractSpec {
    pub fn new(strike: f64, maturity: f64, side: OptionSide, exercise: ExerciseStyle) -> Result<Self> {
        let c = ContractSpec {
            strike,
            maturity,
            side,
            exercise,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn european(strike: f64, maturity: f64, side: OptionSide) -> Result<Self> {
        Self::new(strike, maturity, side, ExerciseStyle::European)
    }

    pub fn american_put(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(strike, maturity, OptionSide::Put, ExerciseStyle::American)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0) || !self.strike.is_finite() {
            return Err(Error::Domain(format!("strike must be > 0, got {}", self.strike)));
        }
        if !(self.maturity > 0.0) || !self.maturity.is_finite() {
            return Err(Error::Domain(format!(
                "maturity must be > 0, got {}",
                self.maturity
            )));
        }
        if self.exercise == ExerciseStyle::American && self.side == OptionSide::Call {
            return Err(Error::Domain(
                "American exercise supports puts only".into(),
            ));
        }
        Ok(())
    }

    pub fn strike_log(&self) -> f64 {
        self.strike.ln()
    }
}

/// Terminal payoff in log-price coordinates.
pub fn payoff(contract: &ContractSpec, x: f64) -> f64 {
    match contract.side {
        OptionSide::Call => (x.exp() - contract.strike).max(0.0),
        OptionSide::Put => (contract.strike - x.exp()).max(0.0),
    }
}

/// Result of a time integration: the coefficient vector at tau = T with
/// evaluation and Greek accessors.
pub struct PricingSolution {
    grid: CollocationGrid,
    rho_final: DVector<f64>,
    steps: usize,
    /// Per-step highest node index at which the early-exercise constraint
    /// was active (American solves only; None within a step when the
    /// constraint never bound).
    exercise_boundary: Option<Vec<Option<usize>>>,
}

impl PricingSolution {
    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn rho_final(&self) -> &[f64] {
        self.rho_final.as_slice()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn exercise_boundary(&self) -> Option<&[Option<usize>]> {
        self.exercise_boundary.as_deref()
    }

    /// Interpolated option value at log-price x.
    pub fn value(&self, x: f64) -> f64 {
        evaluate_interpolant(self.grid.nodes(), self.rho_final.as_slice(), x, 0)
    }

    pub fn values(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.value(x)).collect()
    }

    /// d/dx and d2/dx2 of the interpolant at log-price x.
    pub fn derivatives(&self, x: f64) -> (f64, f64) {
        let ux = evaluate_interpolant(self.grid.nodes(), self.rho_final.as_slice(), x, 1);
        let uxx = evaluate_interpolant(self.grid.nodes(), self.rho_final.as_slice(), x, 2);
        (ux, uxx)
    }

    /// True when x lies outside the node span (the interpolant extrapolates).
    pub fn is_extrapolating(&self, x: f64) -> bool {
        !self.grid.contains(x)
    }
}

/// (Delta, Gamma) at spot price s: with x = log s, Delta = u_x / s and
/// Gamma = (u_xx - u_x) / s^2 by the chain rule from log-price to price.
pub fn greeks(solution: &PricingSolution, s: f64) -> Result<(f64, f64)> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!("spot must be > 0, got {s}")));
    }
    let x = s.ln();
    let (ux, uxx) = solution.derivatives(x);
    Ok((ux / s, (uxx - ux) / (s * s)))
}

struct StepMatrices {
    bdf1: Lu,
    bdf2: Lu,
}

fn factor_step_matrices(theta: &ThetaOperator, dt: f64) -> Result<StepMatrices> {
    let n = theta.n();
    let id = DMatrix::<f64>::identity(n, n);
    let m1 = &id - theta.matrix() * dt;
    let m2 = &id - theta.matrix() * (2.0 / 3.0 * dt);
    let bdf1 = m1.lu();
    if !bdf1.is_invertible() {
        return Err(Error::NumericalFailure {
            what: "implicit Euler step matrix is singular".into(),
            step: 0,
        });
    }
    let bdf2 = m2.lu();
    if !bdf2.is_invertible() {
        return Err(Error::NumericalFailure {
            what: "BDF2 step matrix is singular".into(),
            step: 0,
        });
    }
    Ok(StepMatrices { bdf1, bdf2 })
}

fn check_inputs(theta: &ThetaOperator, system: &SplineSystem, m0: usize) -> Result<()> {
    if m0 < 2 {
        return Err(Error::Domain(format!("need at least 2 time steps, got {m0}")));
    }
    if theta.n() != system.grid().len() {
        return Err(Error::LengthMismatch {
            expected: system.grid().len(),
            got: theta.n(),
        });
    }
    Ok(())
}

/// Straight-through European solve: rho(0) interpolates the payoff, then m0
/// fixed steps of dt = T/m0 (implicit Euler startup, BDF2 thereafter). The
/// two implicit-step matrices are LU-factorized once and reused.
pub fn solve_european(
    theta: &ThetaOperator,
    system: &SplineSystem,
    contract: &ContractSpec,
    m0: usize,
) -> Result<PricingSolution> {
    check_inputs(theta, system, m0)?;
    contract.validate()?;
    let grid = system.grid();
    let g: Vec<f64> = grid.nodes().iter().map(|&x| payoff(contract, x)).collect();
    let rho0 = system.solve_interpolation(&g)?;

    let dt = contract.maturity / m0 as f64;
    let mats = factor_step_matrices(theta, dt)?;

    let mut rho_prev = rho0;
    let mut rho = mats.bdf1.solve(&rho_prev).ok_or(Error::NumericalFailure {
        what: "implicit Euler solve failed".into(),
        step: 1,
    })?;
    for m in 1..m0 {
        let rhs = &rho * (4.0 / 3.0) - &rho_prev * (1.0 / 3.0);
        let next = mats.bdf2.solve(&rhs).ok_or(Error::NumericalFailure {
            what: "BDF2 solve failed".into(),
            step: m + 1,
        })?;
        rho_prev = std::mem::replace(&mut rho, next);
    }

    Ok(PricingSolution {
        grid: grid.clone(),
        rho_final: rho,
        steps: m0,
        exercise_boundary: None,
    })
}

/// Projects nodal values onto the payoff constraint and refits the
/// coefficients. Returns the refitted coefficients and the highest node
/// index at which the constraint was active. Applying it to an
/// already-dominating interpolant leaves the coefficients untouched.
pub fn project_and_refit(
    system: &SplineSystem,
    rho: &DVector<f64>,
    payoff_nodes: &[f64],
) -> Result<(DVector<f64>, Option<usize>)> {
    let u = system.a() * rho;
    let mut clipped = None;
    let mut proj = Vec::with_capacity(payoff_nodes.len());
    for (i, (&ui, &gi)) in u.iter().zip(payoff_nodes).enumerate() {
        if gi > ui {
            clipped = Some(i);
            proj.push(gi);
        } else {
            proj.push(ui);
        }
    }
    if clipped.is_none() {
        // already dominating: nodal values are untouched, keep coefficients
        return Ok((rho.clone(), None));
    }
    let refit = system.solve_interpolation(&proj)?;
    Ok((refit, clipped))
}

/// American put solve: advance one stiff step, set
/// u_i = max(K - e^{x_i}, interpolant at x_i) at every node, refit the
/// coefficients, and repeat to tau = T.
pub fn solve_american(
    theta: &ThetaOperator,
    system: &SplineSystem,
    contract: &ContractSpec,
    m0: usize,
) -> Result<PricingSolution> {
    check_inputs(theta, system, m0)?;
    contract.validate()?;
    if contract.exercise != ExerciseStyle::American {
        return Err(Error::Domain("contract is not American".into()));
    }
    let grid = system.grid();
    let g: Vec<f64> = grid.nodes().iter().map(|&x| payoff(contract, x)).collect();
    let rho0 = system.solve_interpolation(&g)?;

    let dt = contract.maturity / m0 as f64;
    let mats = factor_step_matrices(theta, dt)?;
    let mut boundary = Vec::with_capacity(m0);

    let mut rho_prev = rho0;
    let stepped = mats.bdf1.solve(&rho_prev).ok_or(Error::NumericalFailure {
        what: "implicit Euler solve failed".into(),
        step: 1,
    })?;
    let (mut rho, b0) = project_and_refit(system, &stepped, &g)?;
    boundary.push(b0);

    for m in 1..m0 {
        let rhs = &rho * (4.0 / 3.0) - &rho_prev * (1.0 / 3.0);
        let stepped = mats.bdf2.solve(&rhs).ok_or(Error::NumericalFailure {
            what: "BDF2 solve failed".into(),
            step: m + 1,
        })?;
        let (next, b) = project_and_refit(system, &stepped, &g)?;
        boundary.push(b);
        rho_prev = std::mem::replace(&mut rho, next);
    }

    Ok(PricingSolution {
        grid: grid.clone(),
        rho_final: rho,
        steps: m0,
        exercise_boundary: Some(boundary),
    })
}
