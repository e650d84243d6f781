//! Jump-integral matrix assembly by adaptive Gauss-Kronrod quadrature over
//! the truncated jump domain, reduction to the constant-coefficient ODE
//! operator Theta, and the stiffness diagnostic.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{JumpModel, ModelKind, TruncationInterval};
use crate::quad::adaptive_gk_with_breaks;
use crate::rbf::{kernel, CollocationGrid, SplineSystem};

/// Default absolute quadrature tolerance per jump-matrix entry.
pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

const MAX_SUBDIV: usize = 400;

/// Matrix of truncated jump integrals: entries[i][j] approximates
/// int_{y_lo}^{y_hi} phi(|x_i + y - x_j|) f(y) dy.
pub struct JumpMatrix {
    entries: DMatrix<f64>,
    interval: TruncationInterval,
    quad_tol: f64,
}

impl JumpMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn interval(&self) -> &TruncationInterval {
        &self.interval
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }
}

/// One entry as a function of the difference d = x_i - x_j. The integrand
/// kernel phi(|d + y|) has a discontinuous third derivative at y = -d, and
/// the Kou density a kink at y = 0; both become panel edges.
fn jump_entry(model: &JumpModel, interval: &TruncationInterval, d: f64, tol: f64) -> (f64, f64, bool) {
    let f = |y: f64| kernel((d + y).abs()) * model.jump_density(y).unwrap_or(0.0);
    let breaks: &[f64] = if model.kind() == ModelKind::Kou {
        &[-d, 0.0]
    } else {
        &[-d]
    };
    let out = adaptive_gk_with_breaks(&f, interval.y_lo, interval.y_hi, breaks, tol, MAX_SUBDIV);
    (out.value, out.abs_error, out.converged)
}

/// Assembles the jump matrix. On uniform grids every entry depends only on
/// (i - j) h, so just 2N - 1 quadratures are performed (in parallel); split
/// grids fall back to per-entry quadrature.
pub fn assemble_jump_matrix(
    grid: &CollocationGrid,
    model: &JumpModel,
    interval: &TruncationInterval,
    quad_tol: f64,
) -> Result<JumpMatrix> {
    if !(quad_tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "quad_tol must be > 0, got {quad_tol}"
        )));
    }
    if model.kind() == ModelKind::PureDiffusion {
        return Err(Error::InvalidModel(
            "pure-diffusion model has no jump matrix".into(),
        ));
    }
    let n = grid.len();
    if interval.is_degenerate() {
        return Ok(JumpMatrix {
            entries: DMatrix::zeros(n, n),
            interval: *interval,
            quad_tol,
        });
    }

    let entries = if let Some(h) = grid.h() {
        let ks: Vec<i64> = (-(n as i64 - 1)..=(n as i64 - 1)).collect();
        let table: Vec<(f64, f64, bool)> = ks
            .par_iter()
            .map(|&k| jump_entry(model, interval, k as f64 * h, quad_tol))
            .collect();
        if let Some(pos) = table.iter().position(|t| !t.2) {
            let k = ks[pos];
            let (i, j) = if k >= 0 { (k as usize, 0) } else { (0, (-k) as usize) };
            return Err(Error::QuadratureFailure {
                row: i,
                col: j,
                err_est: table[pos].1,
                tol: quad_tol,
            });
        }
        DMatrix::from_fn(n, n, |i, j| table[(i as i64 - j as i64 + n as i64 - 1) as usize].0)
    } else {
        assemble_entries_dense(grid.nodes(), model, interval, quad_tol)?
    };

    Ok(JumpMatrix {
        entries,
        interval: *interval,
        quad_tol,
    })
}

/// Per-entry assembly with no difference-class caching (any node layout).
pub(crate) fn assemble_entries_dense(
    nodes: &[f64],
    model: &JumpModel,
    interval: &TruncationInterval,
    quad_tol: f64,
) -> Result<DMatrix<f64>> {
    let n = nodes.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let (v, e, ok) = jump_entry(model, interval, nodes[i] - nodes[j], quad_tol);
                    if ok {
                        Ok(v)
                    } else {
                        Err(Error::QuadratureFailure {
                            row: i,
                            col: j,
                            err_est: e,
                            tol: quad_tol,
                        })
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Sign convention for the (r + lambda) u reaction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReactionSign {
    /// -(r + lambda) u: the discounting sign of the pricing equation.
    #[default]
    Discounting,
    /// +(r + lambda) u: reproduces the sign as printed in the reduced ODE
    /// system, for forensic comparison only.
    AsPrinted,
}

/// The reduced constant-coefficient operator rho_tau = Theta rho.
pub struct ThetaOperator {
    theta: DMatrix<f64>,
    model: JumpModel,
    grid: CollocationGrid,
}

impl ThetaOperator {
    /// Wraps an explicit matrix (diagnostic/test use).
    pub fn from_matrix(theta: DMatrix<f64>, model: JumpModel, grid: CollocationGrid) -> Self {
        ThetaOperator { theta, model, grid }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn model(&self) -> &JumpModel {
        &self.model
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.theta.nrows()
    }
}

/// Theta = A^-1 ((sigma^2/2) A_xx + (r - q - sigma^2/2 - lambda eta) A_x
///             - (r + lambda) A + lambda J),
/// with A^-1 applied through the F·C·F factorization on uniform grids.
pub fn assemble_theta(
    system: &SplineSystem,
    jump: Option<&JumpMatrix>,
    model: &JumpModel,
) -> Result<ThetaOperator> {
    assemble_theta_with(system, jump, model, ReactionSign::Discounting)
}

pub fn assemble_theta_with(
    system: &SplineSystem,
    jump: Option<&JumpMatrix>,
    model: &JumpModel,
    sign: ReactionSign,
) -> Result<ThetaOperator> {
    model.validate()?;
    let n = system.grid().len();
    let half_sigma2 = 0.5 * model.sigma * model.sigma;
    let convection = model.r - model.q - half_sigma2 - model.lambda * model.eta();
    let reaction = match sign {
        ReactionSign::Discounting => -(model.r + model.lambda),
        ReactionSign::AsPrinted => model.r + model.lambda,
    };

    let mut rhs = system.a_xx() * half_sigma2;
    rhs += system.a_x() * convection;
    rhs += system.a() * reaction;
    if model.lambda > 0.0 {
        let j = jump.ok_or_else(|| {
            Error::InvalidConfig("lambda > 0 requires an assembled jump matrix".into())
        })?;
        if j.entries().nrows() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: j.entries().nrows(),
            });
        }
        rhs += j.entries() * model.lambda;
    }

    let theta = system.solve_matrix(&rhs)?;
    Ok(ThetaOperator {
        theta,
        model: *model,
        grid: system.grid().clone(),
    })
}

/// |lambda|_max / |lambda|_min over the nonzero eigenvalues of Theta,
/// computed by a dense Schur decomposition. Dense-eigen budget: n <= 1024.
pub fn stiffness_ratio(theta: &ThetaOperator) -> Result<f64> {
    let n = theta.n();
    if n > 1024 {
        return Err(Error::DiagnosticUnavailable(format!(
            "dense eigen-estimation budget is n <= 1024, got {n}"
        )));
    }
    let schur = nalgebra::linalg::Schur::try_new(theta.theta.clone(), 1e-12, 100_000).ok_or_else(
        || Error::DiagnosticUnavailable("Schur iteration did not converge".into()),
    )?;
    let eigs = schur.complex_eigenvalues();
    let mut mags: Vec<f64> = eigs.iter().map(|z| z.norm()).collect();
    let max = mags.iter().cloned().fold(0.0f64, f64::max);
    if max == 0.0 {
        return Err(Error::DiagnosticUnavailable(
            "operator has an identically zero spectrum".into(),
        ));
    }
    // drop numerically-zero eigenvalues
    mags.retain(|m| *m > 1e-12 * max);
    let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max / min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::DEFAULT_EPSILON;
    use nalgebra::DVector;

    fn merton_std() -> JumpModel {
        // mu_j = 0, sigma_j = 1 for the absolute-third-moment check
        JumpModel::merton(0.0, 0.0, 0.2, 0.1, 0.0, 1.0).unwrap()
    }

    #[test]
    fn diagonal_entry_is_absolute_third_moment() {
        let m = merton_std();
        let g = CollocationGrid::uniform_anchored(8, -2.0, 2.0, 0.0).unwrap();
        let iv = m.truncation_bounds(DEFAULT_EPSILON).unwrap();
        let jm = assemble_jump_matrix(&g, &m, &iv, 1e-11).unwrap();
        // E|Z|^3 = 2 sqrt(2/pi)
        let expect = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
        for i in 0..8 {
            assert!(
                (jm.entries()[(i, i)] - expect).abs() < 1e-9,
                "entry ({i},{i}) = {}",
                jm.entries()[(i, i)]
            );
        }
    }

    #[test]
    fn degenerate_interval_gives_zero_matrix() {
        let m = merton_std();
        let g = CollocationGrid::uniform_anchored(6, -2.0, 2.0, 0.0).unwrap();
        let iv = TruncationInterval {
            y_lo: 0.7,
            y_hi: 0.7,
            epsilon: 1.0,
        };
        let jm = assemble_jump_matrix(&g, &m, &iv, 1e-10).unwrap();
        assert_eq!(jm.entries().amax(), 0.0);
    }

    #[test]
    fn pure_diffusion_rejected() {
        let m = JumpModel::pure_diffusion(0.05, 0.0, 0.2).unwrap();
        let g = CollocationGrid::uniform_anchored(6, -2.0, 2.0, 0.0).unwrap();
        let iv = TruncationInterval {
            y_lo: -1.0,
            y_hi: 1.0,
            epsilon: 1.0,
        };
        assert!(assemble_jump_matrix(&g, &m, &iv, 1e-10).is_err());
    }

    #[test]
    fn cached_and_dense_paths_agree() {
        // translation consistency: the per-entry path must reproduce the
        // difference-class table within twice the quadrature tolerance
        let m = JumpModel::kou(0.0, 0.0, 0.2, 0.2, 0.5, 3.0, 2.0).unwrap();
        let g = CollocationGrid::uniform_anchored(12, -3.0, 3.0, 0.0).unwrap();
        let iv = m.truncation_bounds(1e-12).unwrap();
        let tol = 1e-10;
        let cached = assemble_jump_matrix(&g, &m, &iv, tol).unwrap();
        let dense = assemble_entries_dense(g.nodes(), &m, &iv, tol).unwrap();
        assert!((cached.entries() - &dense).amax() <= 2.0 * tol);
    }

    #[test]
    fn entries_finite_and_rows_bounded() {
        let m = JumpModel::kou(0.05, 0.0, 0.15, 0.1, 0.3445, 3.0465, 3.0465).unwrap();
        let g = CollocationGrid::uniform_anchored(20, -6.0, 6.0, 0.0).unwrap();
        let iv = m.truncation_bounds(DEFAULT_EPSILON).unwrap();
        let jm = assemble_jump_matrix(&g, &m, &iv, 1e-10).unwrap();
        for v in jm.entries().iter() {
            assert!(v.is_finite() && *v >= 0.0);
        }
    }

    #[test]
    fn theta_vanishes_in_the_small_sigma_no_jump_limit() {
        let m = JumpModel::pure_diffusion(0.0, 0.0, 1e-10).unwrap();
        let g = CollocationGrid::uniform_anchored(16, -2.0, 2.0, 0.0).unwrap();
        let sys = SplineSystem::new(g).unwrap();
        let th = assemble_theta(&sys, None, &m).unwrap();
        assert!(th.matrix().amax() < 1e-12);
    }

    #[test]
    fn theta_matches_dense_pivoted_oracle() {
        let m = JumpModel::merton(0.05, 0.01, 0.3, 0.2, -0.5, 0.4).unwrap();
        let g = CollocationGrid::uniform_anchored(24, -4.0, 4.0, 0.0).unwrap();
        let sys = SplineSystem::new(g.clone()).unwrap();
        let iv = m.truncation_bounds(DEFAULT_EPSILON).unwrap();
        let jm = assemble_jump_matrix(&g, &m, &iv, 1e-11).unwrap();
        let th = assemble_theta(&sys, Some(&jm), &m).unwrap();

        // oracle: solve A w = B rho directly with a dense pivoted LU
        let eta = m.eta();
        let b = sys.a_xx() * (0.5 * m.sigma * m.sigma)
            + sys.a_x() * (m.r - m.q - 0.5 * m.sigma * m.sigma - m.lambda * eta)
            + sys.a() * (-(m.r + m.lambda))
            + jm.entries() * m.lambda;
        let rho = DVector::from_fn(24, |i, _| ((i * 37 + 11) % 17) as f64 / 17.0 - 0.4);
        let want = sys
            .a()
            .clone()
            .lu()
            .solve(&(&b * &rho))
            .expect("dense oracle solve");
        let got = th.matrix() * &rho;
        let rel = (&got - &want).amax() / want.amax();
        assert!(rel < 1e-8, "relative deviation {rel}");
    }

    #[test]
    fn theta_linear_in_lambda_at_fixed_eta() {
        // Theta(2 lambda) - Theta(lambda) == Theta(lambda) - Theta(0)
        let g = CollocationGrid::uniform_anchored(12, -3.0, 3.0, 0.0).unwrap();
        let sys = SplineSystem::new(g.clone()).unwrap();
        let mk = |lam: f64| JumpModel::merton(0.04, 0.0, 0.25, lam, -0.2, 0.5).unwrap();
        let m1 = mk(0.15);
        let m2 = mk(0.30);
        let m0 = JumpModel::pure_diffusion(0.04, 0.0, 0.25).unwrap();
        let iv = m1.truncation_bounds(DEFAULT_EPSILON).unwrap();
        let jm = assemble_jump_matrix(&g, &m1, &iv, 1e-11).unwrap();
        let t0 = assemble_theta(&sys, None, &m0).unwrap();
        let t1 = assemble_theta(&sys, Some(&jm), &m1).unwrap();
        let t2 = assemble_theta(&sys, Some(&jm), &m2).unwrap();
        let d21 = t2.matrix() - t1.matrix();
        let d10 = t1.matrix() - t0.matrix();
        assert!((d21 - d10).amax() < 1e-8 * t1.matrix().amax());
    }

    #[test]
    fn sign_as_printed_flips_reaction_term() {
        let m = JumpModel::pure_diffusion(0.05, 0.0, 0.2).unwrap();
        let g = CollocationGrid::uniform_anchored(10, -2.0, 2.0, 0.0).unwrap();
        let sys = SplineSystem::new(g).unwrap();
        let td = assemble_theta_with(&sys, None, &m, ReactionSign::Discounting).unwrap();
        let tp = assemble_theta_with(&sys, None, &m, ReactionSign::AsPrinted).unwrap();
        // difference is 2 r I (A^-1 A = I scaled)
        let diff = tp.matrix() - td.matrix();
        let expect = DMatrix::identity(10, 10) * (2.0 * m.r);
        assert!((diff - expect).amax() < 1e-9);
    }

    #[test]
    fn stiffness_scaled_identity_and_diag() {
        let m = JumpModel::pure_diffusion(0.05, 0.0, 0.2).unwrap();
        let g = CollocationGrid::equally_spaced(2, 0.0, 1.0).unwrap();
        let t = ThetaOperator::from_matrix(DMatrix::identity(2, 2) * 3.5, m, g.clone());
        assert!((stiffness_ratio(&t).unwrap() - 1.0).abs() < 1e-12);
        let t2 = ThetaOperator::from_matrix(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 10.0]),
            m,
            g,
        );
        assert!((stiffness_ratio(&t2).unwrap() - 10.0).abs() < 1e-10);
    }

    #[test]
    fn stiffness_budget_guard() {
        let m = JumpModel::pure_diffusion(0.05, 0.0, 0.2).unwrap();
        let g = CollocationGrid::equally_spaced(2, 0.0, 1.0).unwrap();
        let t = ThetaOperator::from_matrix(DMatrix::identity(1030, 1030), m, g);
        assert!(matches!(
            stiffness_ratio(&t),
            Err(Error::DiagnosticUnavailable(_))
        ));
    }
}
