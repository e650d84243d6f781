//! Error metrics, convergence-rate fitting, experiment descriptors, and the
//! table runner that reproduces the convergence studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collocation::{
    assemble_jump_matrix, assemble_theta_with, ReactionSign, ThetaOperator,
};
use crate::config::{ContractConfig, ModelConfig};
use crate::error::{Error, Result};
use crate::models::JumpModel;
use crate::rbf::{CollocationGrid, SplineSystem};
use crate::reference::{
    black_scholes_price, fst_price_american, fst_price_european, merton_series_price, FstGrid,
};
use crate::stepper::{solve_american, solve_european, ContractSpec, ExerciseStyle, PricingSolution};

/// Equally spaced log-prices on the region of interest
/// [log(K/20), log(2K)].
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    points: Vec<f64>,
    strike_log: f64,
}

impl EvaluationGrid {
    pub fn new(strike: f64, count: usize) -> Result<Self> {
        if !(strike > 0.0) {
            return Err(Error::Domain(format!("strike must be > 0, got {strike}")));
        }
        if count < 2 {
            return Err(Error::Domain(format!("need at least 2 points, got {count}")));
        }
        let lo = (strike / 20.0).ln();
        let hi = (2.0 * strike).ln();
        let step = (hi - lo) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|j| lo + j as f64 * step).collect();
        points[count - 1] = hi;
        Ok(EvaluationGrid {
            points,
            strike_log: strike.ln(),
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the evaluation node nearest to the log-strike.
    pub fn atm_index(&self) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &x) in self.points.iter().enumerate() {
            let d = (x - self.strike_log).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }
}

/// Max, rms, and pointwise-relative errors at one refinement level.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ErrorReport {
    pub n: usize,
    pub m0: usize,
    pub e_inf: f64,
    pub e_2: f64,
    /// Relative error at the at-the-money evaluation node (absent when the
    /// exact value there is zero).
    pub e_rel: Option<f64>,
    pub rate_inf: Option<f64>,
    pub rate_2: Option<f64>,
    /// Errors did not decrease monotonically into this level.
    #[serde(default)]
    pub degraded: bool,
}

/// E_inf, E_2 over the evaluation grid and E_rel at the ATM node.
pub fn error_metrics(
    approx: &[f64],
    exact: &[f64],
    grid: &EvaluationGrid,
    n: usize,
    m0: usize,
) -> Result<ErrorReport> {
    if approx.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: approx.len(),
        });
    }
    if exact.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: exact.len(),
        });
    }
    let mut e_inf = 0.0f64;
    let mut sum_sq = 0.0f64;
    for (a, e) in approx.iter().zip(exact) {
        let d = (a - e).abs();
        e_inf = e_inf.max(d);
        sum_sq += d * d;
    }
    let e_2 = (sum_sq / grid.len() as f64).sqrt();
    let ia = grid.atm_index();
    let e_rel = if exact[ia] != 0.0 {
        Some((approx[ia] - exact[ia]).abs() / exact[ia].abs())
    } else {
        None
    };
    Ok(ErrorReport {
        n,
        m0,
        e_inf,
        e_2,
        e_rel,
        rate_inf: None,
        rate_2: None,
        degraded: false,
    })
}

/// Which refinement variable drives the convergence rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RateAxis {
    /// dx proportional to 1/n: rates from the n ratio.
    #[default]
    Space,
    /// n held fixed: rates from the m0 ratio.
    Time,
}

/// Fills pairwise rates R = log(E_prev / E_cur) / log(x_cur / x_prev) where
/// x is n (space) or m0 (time). Non-monotone errors set the degraded flag
/// rather than erroring.
pub fn fit_rate(reports: &mut [ErrorReport], axis: RateAxis) {
    for i in 1..reports.len() {
        let (prev, cur) = {
            let (a, b) = reports.split_at_mut(i);
            (&a[i - 1], &mut b[0])
        };
        let x_ratio = match axis {
            RateAxis::Space => cur.n as f64 / prev.n as f64,
            RateAxis::Time => cur.m0 as f64 / prev.m0 as f64,
        };
        if x_ratio <= 1.0 {
            cur.degraded = true;
            continue;
        }
        let lr = x_ratio.ln();
        if cur.e_inf > 0.0 && prev.e_inf > 0.0 {
            cur.rate_inf = Some((prev.e_inf / cur.e_inf).ln() / lr);
        }
        if cur.e_2 > 0.0 && prev.e_2 > 0.0 {
            cur.rate_2 = Some((prev.e_2 / cur.e_2).ln() / lr);
        }
        if cur.e_inf >= prev.e_inf || cur.e_2 >= prev.e_2 {
            cur.degraded = true;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// Closed form; diffusion-only models.
    BlackScholes,
    /// Analytic series; Merton European contracts.
    MertonSeries,
    /// FFT curve; any European contract.
    FstEuropean,
    /// Per-step projected FFT curve; American puts.
    FstAmerican,
    /// Reference is this solver itself at 4x the finest step count with n
    /// held fixed; isolates the temporal error component.
    SelfRichardson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    pub n: usize,
    pub m0: usize,
}

fn default_fst_size() -> usize {
    1 << 15
}

fn default_fst_steps() -> usize {
    4096
}

fn default_fst_half_width() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FstParams {
    #[serde(default = "default_fst_size")]
    pub size: usize,
    #[serde(default = "default_fst_steps")]
    pub steps: usize,
    #[serde(default = "default_fst_half_width")]
    pub half_width: f64,
}

impl Default for FstParams {
    fn default() -> Self {
        FstParams {
            size: default_fst_size(),
            steps: default_fst_steps(),
            half_width: default_fst_half_width(),
        }
    }
}

/// Pass/fail tolerances embedded in a descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Gates {
    /// E_2 at the last level must not exceed this.
    #[serde(default)]
    pub max_e2_last: Option<f64>,
    /// E_rel at the last level must not exceed this.
    #[serde(default)]
    pub max_e_rel_last: Option<f64>,
    /// Every fitted E_2 rate must fall in this closed range.
    #[serde(default)]
    pub rate2_range: Option<(f64, f64)>,
    /// Every fitted E_inf rate must fall in this closed range.
    #[serde(default)]
    pub rate_inf_range: Option<(f64, f64)>,
    /// Every per-level E_inf reduction factor must fall in this range.
    #[serde(default)]
    pub einf_ratio_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn default_n_eval() -> usize {
    1950
}

fn default_epsilon() -> f64 {
    crate::models::DEFAULT_EPSILON
}

fn default_quad_tol() -> f64 {
    crate::collocation::DEFAULT_QUAD_TOL
}

/// A full table reproduction: model, contract, grid/step schedule, oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDescriptor {
    pub name: String,
    pub model: ModelConfig,
    pub contract: ContractConfig,
    /// Collocation domain (log-price); defaults to log K -/+ 10.
    #[serde(default)]
    pub domain: Option<(f64, f64)>,
    pub levels: Vec<Level>,
    pub oracle: OracleKind,
    #[serde(default)]
    pub axis: RateAxis,
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    #[serde(default)]
    pub fst: FstParams,
    #[serde(default)]
    pub gates: Option<Gates>,
    /// Forensic switch: assemble Theta with the +(r+lambda) sign as printed.
    #[serde(default)]
    pub sign_as_printed: bool,
}

impl ExperimentDescriptor {
    pub fn from_json(text: &str) -> Result<Self> {
        let d: ExperimentDescriptor = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("descriptor parse error: {e}")))?;
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidConfig("descriptor has no levels".into()));
        }
        let model = self.model.build()?;
        let contract = self.contract.build()?;
        match self.oracle {
            OracleKind::BlackScholes => {
                if model.lambda != 0.0 {
                    return Err(Error::InvalidConfig(
                        "black-scholes oracle requires lambda = 0".into(),
                    ));
                }
                if contract.exercise != ExerciseStyle::European {
                    return Err(Error::InvalidConfig(
                        "black-scholes oracle requires a European contract".into(),
                    ));
                }
            }
            OracleKind::MertonSeries => {
                if model.kind() != crate::models::ModelKind::Merton
                    || contract.exercise != ExerciseStyle::European
                {
                    return Err(Error::InvalidConfig(
                        "merton-series oracle requires a European Merton contract".into(),
                    ));
                }
            }
            OracleKind::FstEuropean => {
                if contract.exercise != ExerciseStyle::European {
                    return Err(Error::InvalidConfig(
                        "fst-european oracle requires a European contract".into(),
                    ));
                }
            }
            OracleKind::FstAmerican => {
                if contract.exercise != ExerciseStyle::American {
                    return Err(Error::InvalidConfig(
                        "fst-american oracle requires an American contract".into(),
                    ));
                }
            }
            OracleKind::SelfRichardson => {
                let n0 = self.levels[0].n;
                if !self.levels.iter().all(|l| l.n == n0) {
                    return Err(Error::InvalidConfig(
                        "self-richardson studies hold n fixed across levels".into(),
                    ));
                }
            }
        }
        for l in &self.levels {
            if l.n < 4 || l.m0 < 2 {
                return Err(Error::InvalidConfig(format!(
                    "level (n={}, m0={}) below minimum (4, 2)",
                    l.n, l.m0
                )));
            }
        }
        if !(self.epsilon > 0.0) || !(self.quad_tol > 0.0) || self.n_eval < 2 {
            return Err(Error::InvalidConfig(
                "epsilon and quad_tol must be positive, n_eval >= 2".into(),
            ));
        }
        Ok(())
    }

    fn domain_for(&self, strike_log: f64) -> (f64, f64) {
        self.domain
            .unwrap_or((strike_log - 10.0, strike_log + 10.0))
    }
}

/// Rows plus gate outcomes for one executed descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableResult {
    pub descriptor: ExperimentDescriptor,
    pub rows: Vec<ErrorReport>,
    pub gates: Vec<GateOutcome>,
}

impl TableResult {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    /// CSV with the fixed header `n,m0,e_inf,rate_inf,e_2,rate_2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,m0,e_inf,rate_inf,e_2,rate_2\n");
        for r in &self.rows {
            let ri = r.rate_inf.map(|v| format!("{v:.3}")).unwrap_or_default();
            let r2 = r.rate_2.map(|v| format!("{v:.3}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{:.6e},{},{:.6e},{}\n",
                r.n, r.m0, r.e_inf, ri, r.e_2, r2
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

fn solve_level(
    model: &JumpModel,
    contract: &ContractSpec,
    n: usize,
    domain: (f64, f64),
    epsilon: f64,
    quad_tol: f64,
    sign: ReactionSign,
    m0: usize,
) -> Result<PricingSolution> {
    let (system, theta) = build_operator(model, contract, n, domain, epsilon, quad_tol, sign)?;
    run_solver(&theta, &system, contract, m0)
}

/// Grid + spline system + Theta for one (model, n, domain) combination.
pub fn build_operator(
    model: &JumpModel,
    contract: &ContractSpec,
    n: usize,
    domain: (f64, f64),
    epsilon: f64,
    quad_tol: f64,
    sign: ReactionSign,
) -> Result<(SplineSystem, ThetaOperator)> {
    let grid = CollocationGrid::uniform_anchored(n, domain.0, domain.1, contract.strike_log())?;
    let system = SplineSystem::new(grid)?;
    let theta = if model.lambda > 0.0 {
        let interval = model.truncation_bounds(epsilon)?;
        let jump = assemble_jump_matrix(system.grid(), model, &interval, quad_tol)?;
        assemble_theta_with(&system, Some(&jump), model, sign)?
    } else {
        assemble_theta_with(&system, None, model, sign)?
    };
    Ok((system, theta))
}

fn run_solver(
    theta: &ThetaOperator,
    system: &SplineSystem,
    contract: &ContractSpec,
    m0: usize,
) -> Result<PricingSolution> {
    match contract.exercise {
        ExerciseStyle::European => solve_european(theta, system, contract, m0),
        ExerciseStyle::American => solve_american(theta, system, contract, m0),
    }
}

fn oracle_values(
    desc: &ExperimentDescriptor,
    model: &JumpModel,
    contract: &ContractSpec,
    eval: &EvaluationGrid,
) -> Result<Vec<f64>> {
    match desc.oracle {
        OracleKind::BlackScholes => Ok(eval
            .points()
            .iter()
            .map(|&x| {
                black_scholes_price(model.r, model.q, model.sigma, contract, x.exp(), contract.maturity)
            })
            .collect()),
        OracleKind::MertonSeries => eval
            .points()
            .iter()
            .map(|&x| merton_series_price(model, contract, x.exp(), contract.maturity, 1e-12, 80))
            .collect(),
        OracleKind::FstEuropean | OracleKind::FstAmerican => {
            let lk = contract.strike_log();
            let grid = FstGrid::new(
                desc.fst.size,
                lk - desc.fst.half_width,
                lk + desc.fst.half_width,
            )?;
            let curve = if desc.oracle == OracleKind::FstEuropean {
                fst_price_european(model, contract, &grid)?
            } else {
                fst_price_american(model, contract, &grid, desc.fst.steps)?
            };
            Ok(curve.values_at(eval.points()))
        }
        OracleKind::SelfRichardson => unreachable!("handled by the temporal path"),
    }
}

/// Executes the descriptor: runs the full pipeline per level, measures
/// errors against the oracle, fits rates, and evaluates the gates.
/// Deterministic for a fixed descriptor.
pub fn run_table(desc: &ExperimentDescriptor) -> Result<TableResult> {
    desc.validate()?;
    let model = desc.model.build()?;
    let contract = desc.contract.build()?;
    let eval = EvaluationGrid::new(contract.strike, desc.n_eval)?;
    let domain = desc.domain_for(contract.strike_log());
    let sign = if desc.sign_as_printed {
        ReactionSign::AsPrinted
    } else {
        ReactionSign::Discounting
    };

    let mut rows: Vec<ErrorReport> = if desc.oracle == OracleKind::SelfRichardson {
        // fixed n: build the operator once, reference at 4x the finest m0
        let n = desc.levels[0].n;
        let (system, theta) =
            build_operator(&model, &contract, n, domain, desc.epsilon, desc.quad_tol, sign)?;
        let m0_ref = 4 * desc.levels.iter().map(|l| l.m0).max().unwrap();
        let reference = run_solver(&theta, &system, &contract, m0_ref)?.values(eval.points());
        desc.levels
            .iter()
            .map(|l| {
                let approx =
                    run_solver(&theta, &system, &contract, l.m0)?.values(eval.points());
                error_metrics(&approx, &reference, &eval, l.n, l.m0)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        let exact = oracle_values(desc, &model, &contract, &eval)?;
        desc.levels
            .par_iter()
            .map(|l| {
                let sol = solve_level(
                    &model,
                    &contract,
                    l.n,
                    domain,
                    desc.epsilon,
                    desc.quad_tol,
                    sign,
                    l.m0,
                )?;
                error_metrics(&sol.values(eval.points()), &exact, &eval, l.n, l.m0)
            })
            .collect::<Result<Vec<_>>>()?
    };

    fit_rate(&mut rows, desc.axis);
    let gates = evaluate_gates(desc.gates.as_ref(), &rows);
    Ok(TableResult {
        descriptor: desc.clone(),
        rows,
        gates,
    })
}

fn evaluate_gates(gates: Option<&Gates>, rows: &[ErrorReport]) -> Vec<GateOutcome> {
    let mut out = Vec::new();
    let Some(g) = gates else {
        return out;
    };
    let last = rows.last().expect("at least one level");
    if let Some(tol) = g.max_e2_last {
        out.push(GateOutcome {
            name: "max_e2_last".into(),
            passed: last.e_2 <= tol,
            detail: format!("E2 = {:.6e} vs {:.1e}", last.e_2, tol),
        });
    }
    if let Some(tol) = g.max_e_rel_last {
        let (passed, detail) = match last.e_rel {
            Some(e) => (e <= tol, format!("E_rel = {e:.6e} vs {tol:.1e}")),
            None => (false, "E_rel undefined (exact ATM value is zero)".into()),
        };
        out.push(GateOutcome {
            name: "max_e_rel_last".into(),
            passed,
            detail,
        });
    }
    if let Some((lo, hi)) = g.rate2_range {
        let rates: Vec<f64> = rows.iter().filter_map(|r| r.rate_2).collect();
        out.push(GateOutcome {
            name: "rate2_range".into(),
            passed: !rates.is_empty() && rates.iter().all(|r| *r >= lo && *r <= hi),
            detail: format!("R2 = {rates:.3?} vs [{lo}, {hi}]"),
        });
    }
    if let Some((lo, hi)) = g.rate_inf_range {
        let rates: Vec<f64> = rows.iter().filter_map(|r| r.rate_inf).collect();
        out.push(GateOutcome {
            name: "rate_inf_range".into(),
            passed: !rates.is_empty() && rates.iter().all(|r| *r >= lo && *r <= hi),
            detail: format!("Rinf = {rates:.3?} vs [{lo}, {hi}]"),
        });
    }
    if let Some((lo, hi)) = g.einf_ratio_range {
        let ratios: Vec<f64> = rows
            .windows(2)
            .map(|w| w[0].e_inf / w[1].e_inf)
            .collect();
        out.push(GateOutcome {
            name: "einf_ratio_range".into(),
            passed: !ratios.is_empty() && ratios.iter().all(|r| *r >= lo && *r <= hi),
            detail: format!("E_inf reduction factors {ratios:.2?} vs [{lo}, {hi}]"),
        });
    }
    out
}

/// Names of the descriptors shipped with the crate.
pub fn builtin_names() -> Vec<&'static str> {
    BUILTINS.iter().map(|(n, _)| *n).collect()
}

/// A built-in descriptor by name.
pub fn builtin_descriptor(name: &str) -> Option<ExperimentDescriptor> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ExperimentDescriptor::from_json(text).expect("built-in descriptor parses"))
}

static BUILTINS: &[(&str, &str)] = &[
    (
        "bs-put-table1",
        include_str!("../descriptors/bs-put-table1.json"),
    ),
    (
        "bs-put-time",
        include_str!("../descriptors/bs-put-time.json"),
    ),
    (
        "merton-call-table4",
        include_str!("../descriptors/merton-call-table4.json"),
    ),
    (
        "kou-put-table7",
        include_str!("../descriptors/kou-put-table7.json"),
    ),
    (
        "merton-table13",
        include_str!("../descriptors/merton-table13.json"),
    ),
    (
        "merton-table14",
        include_str!("../descriptors/merton-table14.json"),
    ),
    (
        "kou-table15",
        include_str!("../descriptors/kou-table15.json"),
    ),
    (
        "merton-amer-table16",
        include_str!("../descriptors/merton-amer-table16.json"),
    ),
    (
        "kou-amer-table19",
        include_str!("../descriptors/kou-amer-table19.json"),
    ),
    (
        "merton-amer-time",
        include_str!("../descriptors/merton-amer-time.json"),
    ),
    (
        "kou-amer-time",
        include_str!("../descriptors/kou-amer-time.json"),
    ),
];
