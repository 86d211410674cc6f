//! Adaptive Gauss–Kronrod (7/15) quadrature and a dyadic scheme for
//! integrals over half-lines.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{LabError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        QuadOptions {
            abs_tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 15-point Kronrod panel: (estimate, error estimate).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Kronrod nodes on `[a, b]` with Kronrod and embedded Gauss weights (Gauss
/// weight zero at Kronrod-only nodes), scaled to the interval.
pub fn kronrod_rule(a: f64, b: f64) -> [(f64, f64, f64); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut out = [(0.0, 0.0, 0.0); 15];
    out[0] = (c, WGK[7] * h, WG[3] * h);
    for i in 0..7 {
        let x = h * XGK[i];
        let wg = if i % 2 == 1 { WG[i / 2] * h } else { 0.0 };
        out[1 + 2 * i] = (c - x, WGK[i] * h, wg);
        out[2 + 2 * i] = (c + x, WGK[i] * h, wg);
    }
    out
}

/// Globally adaptive bisection until the summed error estimate is below
/// `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evals: 0,
        });
    }
    let (value, error) = gk15(&mut f, a, b);
    let mut evals = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    loop {
        if !total.is_finite() || !total_err.is_finite() {
            return Err(LabError::Quadrature(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if total_err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(LabError::Quadrature(format!(
                "no convergence on [{a}, {b}] after {} intervals (error {total_err:.3e})",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evals += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Piece {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // re-sum in interval order so the result does not depend on heap history
    let mut pieces: Vec<Piece> = heap.into_vec();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = crate::linalg::pairwise_sum(&pieces.iter().map(|p| p.value).collect::<Vec<_>>());
    let error = pieces.iter().map(|p| p.error).sum();
    Ok(QuadResult {
        value,
        error,
        evals,
    })
}

/// Result of [`dyadic_tail`].
#[derive(Clone, Copy, Debug)]
pub struct DyadicTail {
    pub value: f64,
    /// Geometric estimate of what lies beyond the last piece.
    pub remainder: f64,
    pub doublings: usize,
}

/// Integral of `f` over `[start, ∞)` for `start > 0` or `(−∞, start]` for
/// `start < 0`, accumulated over dyadic pieces `[2^k·start, 2^{k+1}·start]`.
/// Stops once a piece falls below `piece_tol` and extrapolates the rest
/// geometrically from the last two pieces.
pub fn dyadic_tail<F: FnMut(f64) -> f64>(
    mut f: F,
    start: f64,
    piece_tol: f64,
    max_doublings: usize,
    opts: &QuadOptions,
) -> Result<DyadicTail> {
    if start == 0.0 {
        return Err(LabError::Quadrature(
            "dyadic tail needs a nonzero start".into(),
        ));
    }
    let mut lo = start;
    let mut value = 0.0;
    let mut pieces = Vec::new();
    for k in 0..max_doublings {
        let hi = 2.0 * lo;
        let (x0, x1) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let q = integrate(&mut f, x0, x1, opts)?;
        let piece = q.value;
        value += piece;
        pieces.push(piece.abs());
        lo = hi;
        if piece.abs() <= piece_tol && k >= 1 {
            break;
        }
    }
    let n = pieces.len();
    let remainder = if n >= 2 && pieces[n - 2] > 0.0 {
        let rho = pieces[n - 1] / pieces[n - 2];
        if rho < 1.0 {
            pieces[n - 1] * rho / (1.0 - rho)
        } else {
            f64::INFINITY
        }
    } else {
        pieces.last().copied().unwrap_or(0.0)
    };
    Ok(DyadicTail {
        value,
        remainder,
        doublings: n,
    })
}
