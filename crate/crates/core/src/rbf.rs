//! Cubic-spline radial kernel, collocation grids, interpolation/derivative
//! matrix assembly, and the Bos-Salkauskas F·C·F factorization of the
//! interpolation matrix with its explicit F^-1.

use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

type Lu = nalgebra::linalg::LU<f64, Dyn, Dyn>;

/// phi(r) = r^3 for r >= 0.
#[inline]
pub fn kernel(r: f64) -> f64 {
    debug_assert!(r >= 0.0);
    r * r * r
}

/// d/dx phi(|x - x_j|) evaluated at signed difference d = x - x_j:
/// 3 d^2 for d > 0, -3 d^2 for d < 0, 0 at d = 0.
#[inline]
pub fn kernel_dx(d: f64) -> f64 {
    3.0 * d * d.abs()
}

/// d^2/dx^2 phi(|x - x_j|) = 6 |x - x_j|, taken at nonnegative distance r.
#[inline]
pub fn kernel_dxx(r: f64) -> f64 {
    debug_assert!(r >= 0.0);
    6.0 * r
}

/// Strike-centered collocation node sequence with spacing metadata.
///
/// Nodes are strictly increasing log-prices; the log-strike coincides with a
/// node so the payoff kink is never interior to a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    nodes: Vec<f64>,
    strike_log: f64,
    spacing_left: f64,
    spacing_right: f64,
    uniform: bool,
}

/// Two spacings agree (grid counts as uniform) when they differ by at most
/// this absolute amount.
const UNIFORM_TOL: f64 = 1e-14;

impl CollocationGrid {
    /// Split construction: the first n/2 nodes are equally spaced on
    /// [x_min, strike_log] (strike inclusive), the remaining n/2 on
    /// (strike_log, x_max] with the last node at x_max. Requires even n >= 4.
    ///
    /// The two half-spacings coincide only when the domain is proportioned
    /// as (x_max - strike) = (strike - x_min) * (n/2) / (n/2 - 1); otherwise
    /// the grid is flagged non-uniform and solves fall back to a pivoted
    /// dense decomposition.
    pub fn strike_split(n: usize, x_min: f64, x_max: f64, strike_log: f64) -> Result<Self> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::Domain(format!(
                "strike-split grid needs even n >= 4, got {n}"
            )));
        }
        if !(x_min < strike_log && strike_log < x_max) {
            return Err(Error::Domain(format!(
                "strike {strike_log} must lie strictly inside [{x_min}, {x_max}]"
            )));
        }
        let half = n / 2;
        let h_left = (strike_log - x_min) / (half - 1) as f64;
        let h_right = (x_max - strike_log) / half as f64;
        let mut nodes = Vec::with_capacity(n);
        for j in 0..half {
            nodes.push(x_min + j as f64 * h_left);
        }
        nodes[half - 1] = strike_log;
        for j in 1..=half {
            nodes.push(strike_log + j as f64 * h_right);
        }
        nodes[n - 1] = x_max;
        let uniform = (h_left - h_right).abs() <= UNIFORM_TOL;
        Ok(CollocationGrid {
            nodes,
            strike_log,
            spacing_left: h_left,
            spacing_right: h_right,
            uniform,
        })
    }

    /// Uniform grid of n nodes with common spacing h chosen so the strike is
    /// exactly a node and the first node is exactly x_min. The last node
    /// lands as close to x_max as the spacing allows (x_max is a target, not
    /// exact). This is the construction the convergence tables run on; it
    /// keeps the F·C·F factorization applicable.
    pub fn uniform_anchored(n: usize, x_min: f64, x_max: f64, strike_log: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::Domain(format!("grid needs n >= 4, got {n}")));
        }
        if !(x_min < strike_log && strike_log < x_max) {
            return Err(Error::Domain(format!(
                "strike {strike_log} must lie strictly inside [{x_min}, {x_max}]"
            )));
        }
        let frac = (strike_log - x_min) / (x_max - x_min);
        let n_left = ((frac * (n - 1) as f64) + 0.5).floor() as usize;
        let n_left = n_left.clamp(1, n - 2);
        let h = (strike_log - x_min) / n_left as f64;
        let nodes: Vec<f64> = (0..n)
            .map(|j| strike_log + (j as f64 - n_left as f64) * h)
            .collect();
        Ok(CollocationGrid {
            nodes,
            strike_log,
            spacing_left: h,
            spacing_right: h,
            uniform: true,
        })
    }

    /// Plain equally spaced nodes on [x_min, x_max] (no strike anchoring);
    /// the strike is snapped to the nearest node. Intended for operator
    /// diagnostics rather than pricing. Requires n >= 2.
    pub fn equally_spaced(n: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("grid needs n >= 2, got {n}")));
        }
        if !(x_min < x_max) {
            return Err(Error::Domain(format!("empty domain [{x_min}, {x_max}]")));
        }
        let h = (x_max - x_min) / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|j| x_min + j as f64 * h).collect();
        // snap: node nearest to zero log-price if inside, else the midpoint
        let anchor = if x_min < 0.0 && x_max > 0.0 {
            0.0
        } else {
            0.5 * (x_min + x_max)
        };
        let k = ((anchor - x_min) / h).round().clamp(0.0, (n - 1) as f64) as usize;
        let strike_log = nodes[k];
        Ok(CollocationGrid {
            nodes,
            strike_log,
            spacing_left: h,
            spacing_right: h,
            uniform: true,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn strike_log(&self) -> f64 {
        self.strike_log
    }

    pub fn spacing_left(&self) -> f64 {
        self.spacing_left
    }

    pub fn spacing_right(&self) -> f64 {
        self.spacing_right
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Common spacing on uniform grids.
    pub fn h(&self) -> Option<f64> {
        self.uniform.then_some(self.spacing_left)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min() && x <= self.x_max()
    }
}

/// Dense interpolation matrix A, first/second derivative matrices, and the
/// solver backend (F·C·F on uniform grids, pivoted LU otherwise).
pub struct SplineSystem {
    grid: CollocationGrid,
    a: DMatrix<f64>,
    a_x: DMatrix<f64>,
    a_xx: DMatrix<f64>,
    backend: SolveBackend,
}

enum SolveBackend {
    Fcf(Factorization),
    Dense(Lu),
}

/// A = F·C·F pieces on a uniform grid: the distance matrix F, the
/// near-tridiagonal factor C (LU-decomposed with partial pivoting), and the
/// explicit inverse of F.
pub struct Factorization {
    f: DMatrix<f64>,
    c: DMatrix<f64>,
    f_inv: DMatrix<f64>,
    c_lu: Lu,
    h: f64,
    s: f64,
    n: usize,
}

impl Factorization {
    /// Builds the factorization. Errors on non-uniform grids and on n < 3
    /// (the near-tridiagonal structure needs at least 3 rows).
    pub fn build(grid: &CollocationGrid) -> Result<Self> {
        if !grid.is_uniform() {
            return Err(Error::UnsupportedFactorization(format!(
                "grid spacings differ ({} vs {}); use the dense solve",
                grid.spacing_left(),
                grid.spacing_right()
            )));
        }
        let n = grid.len();
        if n < 3 {
            return Err(Error::UnsupportedFactorization(format!(
                "near-tridiagonal factor needs n >= 3, got {n}"
            )));
        }
        let h = grid.h().expect("uniform grid has h");
        // Span of the grid. The printed factor uses S = N h, but the printed
        // C and F^-1 only satisfy A = F C F and F F^-1 = I with the span
        // (N-1) h; re-derived from the source theorem.
        let s = (n - 1) as f64 * h;

        let nodes = grid.nodes();
        let f = DMatrix::from_fn(n, n, |i, j| (nodes[i] - nodes[j]).abs());

        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            c[(i, i)] = 2.0 * h;
        }
        for i in 0..n - 1 {
            c[(i, i + 1)] = 0.5 * h;
            c[(i + 1, i)] = 0.5 * h;
        }
        c[(0, 0)] = h - s;
        c[(n - 1, n - 1)] = h - s;
        c[(0, n - 1)] = 0.5 * s;
        c[(n - 1, 0)] = 0.5 * s;

        let mut f_inv = DMatrix::zeros(n, n);
        for i in 0..n {
            f_inv[(i, i)] = -1.0 / h;
        }
        for i in 0..n - 1 {
            f_inv[(i, i + 1)] = 0.5 / h;
            f_inv[(i + 1, i)] = 0.5 / h;
        }
        f_inv[(0, 0)] = (h - s) / (2.0 * h * s);
        f_inv[(n - 1, n - 1)] = (h - s) / (2.0 * h * s);
        f_inv[(0, n - 1)] = 0.5 / s;
        f_inv[(n - 1, 0)] = 0.5 / s;

        let c_lu = c.clone().lu();
        if !c_lu.is_invertible() {
            return Err(Error::NumericalFailure {
                what: "near-tridiagonal factor C is singular".into(),
                step: 0,
            });
        }
        Ok(Factorization {
            f,
            c,
            f_inv,
            c_lu,
            h,
            s,
            n,
        })
    }

    pub fn f_matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn c_matrix(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn f_inv_matrix(&self) -> &DMatrix<f64> {
        &self.f_inv
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn span(&self) -> f64 {
        self.s
    }

    /// F^-1 v through the banded-plus-corners structure, O(n).
    fn apply_f_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let d = -1.0 / self.h;
        let od = 0.5 / self.h;
        let c0 = (self.h - self.s) / (2.0 * self.h * self.s);
        let ac = 0.5 / self.s;
        let mut out = DVector::zeros(n);
        out[0] = c0 * v[0] + od * v[1] + ac * v[n - 1];
        for i in 1..n - 1 {
            out[i] = od * v[i - 1] + d * v[i] + od * v[i + 1];
        }
        out[n - 1] = ac * v[0] + od * v[n - 2] + c0 * v[n - 1];
        out
    }

    fn apply_f_inv_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, m.ncols());
        for j in 0..m.ncols() {
            let col = self.apply_f_inv(&DVector::from_column_slice(m.column(j).as_slice()));
            out.set_column(j, &col);
        }
        out
    }

    /// rho = F^-1 (C^-1 (F^-1 v)).
    fn solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let w = self.apply_f_inv(v);
        let z = self.c_lu.solve(&w).ok_or(Error::NumericalFailure {
            what: "C solve failed".into(),
            step: 0,
        })?;
        Ok(self.apply_f_inv(&z))
    }

    fn solve_mat(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let w = self.apply_f_inv_mat(m);
        let z = self.c_lu.solve(&w).ok_or(Error::NumericalFailure {
            what: "C solve failed".into(),
            step: 0,
        })?;
        Ok(self.apply_f_inv_mat(&z))
    }
}

/// Assembles A, A_x, A_xx from raw nodes (entries depend on x_i - x_j only).
pub fn interpolation_matrices(nodes: &[f64]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = nodes.len();
    let a = DMatrix::from_fn(n, n, |i, j| kernel((nodes[i] - nodes[j]).abs()));
    let a_x = DMatrix::from_fn(n, n, |i, j| kernel_dx(nodes[i] - nodes[j]));
    let a_xx = DMatrix::from_fn(n, n, |i, j| kernel_dxx((nodes[i] - nodes[j]).abs()));
    (a, a_x, a_xx)
}

/// Same, via the one-dimensional difference table valid on uniform grids.
fn assemble_matrices_uniform(n: usize, h: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let phi: Vec<f64> = (0..n).map(|k| kernel(k as f64 * h)).collect();
    let phi_x: Vec<f64> = (0..n).map(|k| kernel_dx(k as f64 * h)).collect();
    let phi_xx: Vec<f64> = (0..n).map(|k| kernel_dxx(k as f64 * h)).collect();
    let a = DMatrix::from_fn(n, n, |i, j| phi[i.abs_diff(j)]);
    let a_x = DMatrix::from_fn(n, n, |i, j| {
        if i >= j {
            phi_x[i - j]
        } else {
            -phi_x[j - i]
        }
    });
    let a_xx = DMatrix::from_fn(n, n, |i, j| phi_xx[i.abs_diff(j)]);
    (a, a_x, a_xx)
}

impl SplineSystem {
    /// Assembles the interpolation matrices and the solver backend: F·C·F on
    /// uniform grids, pivoted dense LU of A otherwise.
    pub fn new(grid: CollocationGrid) -> Result<Self> {
        let n = grid.len();
        let (a, a_x, a_xx) = match grid.h() {
            Some(h) => assemble_matrices_uniform(n, h),
            None => interpolation_matrices(grid.nodes()),
        };
        let backend = if grid.is_uniform() && n >= 3 {
            SolveBackend::Fcf(Factorization::build(&grid)?)
        } else {
            let lu = a.clone().lu();
            if !lu.is_invertible() {
                return Err(Error::NumericalFailure {
                    what: "interpolation matrix is numerically singular".into(),
                    step: 0,
                });
            }
            SolveBackend::Dense(lu)
        };
        Ok(SplineSystem {
            grid,
            a,
            a_x,
            a_xx,
            backend,
        })
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn a_x(&self) -> &DMatrix<f64> {
        &self.a_x
    }

    pub fn a_xx(&self) -> &DMatrix<f64> {
        &self.a_xx
    }

    /// The F·C·F pieces when the grid admits them.
    pub fn factorization(&self) -> Option<&Factorization> {
        match &self.backend {
            SolveBackend::Fcf(f) => Some(f),
            SolveBackend::Dense(_) => None,
        }
    }

    /// Solves A rho = values and checks the residual against
    /// 1e-8 * max|values|.
    pub fn solve_interpolation(&self, values: &[f64]) -> Result<DVector<f64>> {
        let n = self.grid.len();
        if values.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: values.len(),
            });
        }
        let v = DVector::from_column_slice(values);
        let rho = match &self.backend {
            SolveBackend::Fcf(f) => f.solve(&v)?,
            SolveBackend::Dense(lu) => lu.solve(&v).ok_or(Error::NumericalFailure {
                what: "dense solve failed".into(),
                step: 0,
            })?,
        };
        let vmax = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let resid = (&self.a * &rho - &v).amax();
        if resid > 1e-8 * vmax {
            return Err(Error::NumericalFailure {
                what: format!("interpolation residual {resid:e} exceeds {:e}", 1e-8 * vmax),
                step: 0,
            });
        }
        Ok(rho)
    }

    /// A^-1 applied to a matrix right-hand side, spot-checking the residual
    /// on the middle column.
    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.grid.len();
        if rhs.nrows() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: rhs.nrows(),
            });
        }
        let x = match &self.backend {
            SolveBackend::Fcf(f) => f.solve_mat(rhs)?,
            SolveBackend::Dense(lu) => lu.solve(rhs).ok_or(Error::NumericalFailure {
                what: "dense solve failed".into(),
                step: 0,
            })?,
        };
        let j = rhs.ncols() / 2;
        let col = DVector::from_column_slice(x.column(j).as_slice());
        let want = DVector::from_column_slice(rhs.column(j).as_slice());
        let resid = (&self.a * &col - &want).amax();
        let scale = want.amax().max(1e-300);
        if resid > 1e-7 * scale {
            return Err(Error::NumericalFailure {
                what: format!("matrix solve residual {resid:e} (column {j})"),
                step: 0,
            });
        }
        Ok(x)
    }
}

/// Evaluates the interpolant (or its first/second derivative) at any real x.
/// Extrapolation beyond the node span is permitted; use
/// [`CollocationGrid::contains`] to flag it.
///
/// `order` must be 0, 1, or 2.
pub fn evaluate_interpolant(nodes: &[f64], coeffs: &[f64], x: f64, order: u8) -> f64 {
    assert_eq!(nodes.len(), coeffs.len(), "coeffs must match nodes");
    assert!(order <= 2, "order must be 0, 1, or 2");
    let mut acc = 0.0;
    match order {
        0 => {
            for (xj, c) in nodes.iter().zip(coeffs) {
                acc += c * kernel((x - xj).abs());
            }
        }
        1 => {
            for (xj, c) in nodes.iter().zip(coeffs) {
                acc += c * kernel_dx(x - xj);
            }
        }
        _ => {
            for (xj, c) in nodes.iter().zip(coeffs) {
                acc += c * kernel_dxx((x - xj).abs());
            }
        }
    }
    acc
}
