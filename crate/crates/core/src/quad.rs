//! Adaptive Gauss-Kronrod quadrature (7-15 pair, worst-interval-first
//! bisection). Used to evaluate the jump-integral entries and the density
//! normalization checks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

// 15-point Kronrod abscissae on [-1, 1] (positive half) with the embedded
// 7-point Gauss rule. QUADPACK QK15 constants.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Kronrod panel: returns (integral, error estimate, resabs).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center);
    let mut result_gauss = WG[3] * fc;
    let mut result_kronrod = WGK[7] * fc;
    let mut result_abs = result_kronrod.abs();

    let mut fv = [0.0f64; 15];
    fv[7] = fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv[j] = f1;
        fv[14 - j] = f2;
        result_kronrod += WGK[j] * (f1 + f2);
        result_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            // odd-index Kronrod nodes coincide with the Gauss nodes
            result_gauss += WG[j / 2] * (f1 + f2);
        }
    }

    let mean = 0.5 * result_kronrod;
    let mut result_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        result_asc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }

    let result = result_kronrod * half;
    result_abs *= half.abs();
    result_asc *= half.abs();

    let mut err = ((result_kronrod - result_gauss) * half).abs();
    if result_asc != 0.0 && err != 0.0 {
        err = result_asc * 1.0f64.min((200.0 * err / result_asc).powf(1.5));
    }
    if result_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * result_abs);
    }
    (result, err, result_abs)
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    resabs: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

pub(crate) struct QuadOutcome {
    pub value: f64,
    pub abs_error: f64,
    pub converged: bool,
}

/// Integrate `f` over [a, b] to absolute tolerance `abs_tol`, bisecting the
/// worst interval first, with at most `max_subdiv` bisections.
///
/// Convergence also counts reaching the double-precision roundoff floor
/// 50 eps sum|f|: the error estimate cannot drop below it no matter how
/// many panels are spent.
pub(crate) fn adaptive_gk<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_subdiv: usize,
) -> QuadOutcome {
    if a == b {
        return QuadOutcome {
            value: 0.0,
            abs_error: 0.0,
            converged: true,
        };
    }
    let (v, e, ra) = gk15(f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v,
        error: e,
        resabs: ra,
    });
    let mut total_err = e;
    let mut total_resabs = ra;
    let mut splits = 0;
    let floor = |resabs: f64| 100.0 * f64::EPSILON * resabs;
    while total_err > abs_tol.max(floor(total_resabs)) && splits < max_subdiv {
        let worst = heap.pop().expect("heap nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at floating-point resolution; keep as is
            heap.push(worst);
            break;
        }
        total_err -= worst.error;
        total_resabs -= worst.resabs;
        let (v1, e1, r1) = gk15(f, worst.a, mid);
        let (v2, e2, r2) = gk15(f, mid, worst.b);
        total_err += e1 + e2;
        total_resabs += r1 + r2;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
            resabs: r1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
            resabs: r2,
        });
        splits += 1;
    }
    let value = heap.iter().map(|s| s.value).sum();
    QuadOutcome {
        value,
        abs_error: total_err,
        converged: total_err <= abs_tol.max(floor(total_resabs)),
    }
}

/// Integrate over [a, b] split at the interior `breaks` (kinks of the
/// integrand), each piece to a proportional share of `abs_tol`.
pub(crate) fn adaptive_gk_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    abs_tol: f64,
    max_subdiv: usize,
) -> QuadOutcome {
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|y| *y > a && *y < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);

    let pieces = edges.len() - 1;
    let tol_each = abs_tol / pieces as f64;
    let mut value = 0.0;
    let mut err = 0.0;
    let mut converged = true;
    for w in edges.windows(2) {
        let out = adaptive_gk(f, w[0], w[1], tol_each, max_subdiv);
        value += out.value;
        err += out.abs_error;
        converged &= out.converged;
    }
    QuadOutcome {
        value,
        abs_error: err,
        converged: converged || err <= abs_tol,
    }
}
