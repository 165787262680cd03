//! Dense complex eigenvalues for small non-Hermitian matrices.
//!
//! Householder reduction to upper Hessenberg form followed by single-shift
//! complex QR sweeps (Wilkinson shift, Givens rotations). Only eigenvalues
//! are produced; no Schur vectors are accumulated.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Reduces `a` in place to upper Hessenberg form by unitary similarity.
pub fn hessenberg_in_place(a: &mut DMatrix<Complex64>) {
    let n = a.nrows();
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let norm: f64 = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { Complex64::new(1.0, 0.0) };
        let alpha = -phase * norm;
        let mut v: Vec<Complex64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vnorm;
        }
        // A <- (I - 2 v v^H) A
        for j in 0..n {
            let mut dot = Complex64::new(0.0, 0.0);
            for (idx, vi) in v.iter().enumerate() {
                dot += vi.conj() * a[(k + 1 + idx, j)];
            }
            for (idx, vi) in v.iter().enumerate() {
                a[(k + 1 + idx, j)] -= *vi * dot * 2.0;
            }
        }
        // A <- A (I - 2 v v^H)
        for i in 0..n {
            let mut dot = Complex64::new(0.0, 0.0);
            for (idx, vi) in v.iter().enumerate() {
                dot += a[(i, k + 1 + idx)] * *vi;
            }
            for (idx, vi) in v.iter().enumerate() {
                a[(i, k + 1 + idx)] -= dot * vi.conj() * 2.0;
            }
        }
        a[(k + 1, k)] = alpha;
        for i in k + 2..n {
            a[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }
}

#[derive(Clone, Copy)]
struct Givens {
    c: f64,
    s: Complex64,
}

impl Givens {
    /// Rotation with `[c s; -s̄ c] [x; y] = [r; 0]`.
    fn zeroing(x: Complex64, y: Complex64) -> Self {
        let ax = x.norm();
        let ay = y.norm();
        if ay == 0.0 {
            return Givens { c: 1.0, s: Complex64::new(0.0, 0.0) };
        }
        if ax == 0.0 {
            return Givens { c: 0.0, s: y.conj() / ay };
        }
        let rho = ax.hypot(ay);
        Givens { c: ax / rho, s: (x / ax) * y.conj() / rho }
    }
}

/// Eigenvalue of the 2×2 block `[a b; c d]` closest to `d`.
fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let half_tr = (a + d) * 0.5;
    let det = a * d - b * c;
    let disc = (half_tr * half_tr - det).sqrt();
    let l1 = half_tr + disc;
    let l2 = half_tr - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// All eigenvalues of a general complex square matrix, unordered.
pub fn eigenvalues_unordered(matrix: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::input("eigenvalues require a square matrix"));
    }
    if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = matrix.clone();
    hessenberg_in_place(&mut h);

    let scale = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let eps = f64::EPSILON;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut hi = n - 1;
    let mut sweeps = 0usize;
    let mut since_deflation = 0usize;
    let budget = MAX_SWEEPS_PER_EIGENVALUE * n;

    loop {
        if hi == 0 {
            out[0] = h[(0, 0)];
            break;
        }
        // locate the active block [lo, hi]
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo, lo)].norm() + h[(lo - 1, lo - 1)].norm();
            let tol = if diag > 0.0 { eps * diag } else { eps * scale };
            if sub <= tol {
                h[(lo, lo - 1)] = Complex64::new(0.0, 0.0);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            out[hi] = h[(hi, hi)];
            hi -= 1;
            since_deflation = 0;
            continue;
        }

        sweeps += 1;
        since_deflation += 1;
        if sweeps > budget {
            return Err(Error::numeric(format!(
                "complex QR did not converge after {sweeps} sweeps for {n}x{n} matrix {:?}",
                matrix.as_slice()
            )));
        }

        let mut mu = wilkinson_shift(
            h[(hi - 1, hi - 1)],
            h[(hi - 1, hi)],
            h[(hi, hi - 1)],
            h[(hi, hi)],
        );
        if since_deflation % 11 == 10 {
            // exceptional shift to break cycles
            mu = h[(hi, hi)] + Complex64::new(h[(hi, hi - 1)].norm() * 0.75, 0.0);
        }

        for i in lo..=hi {
            h[(i, i)] -= mu;
        }
        let mut rotations = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let g = Givens::zeroing(h[(k, k)], h[(k + 1, k)]);
            for j in k..=hi {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = x * g.c + g.s * y;
                h[(k + 1, j)] = -g.s.conj() * x + y * g.c;
            }
            h[(k + 1, k)] = Complex64::new(0.0, 0.0);
            rotations.push(g);
        }
        for (offset, g) in rotations.iter().enumerate() {
            let k = lo + offset;
            let last = (k + 2).min(hi);
            for i in lo..=last {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = x * g.c + y * g.s.conj();
                h[(i, k + 1)] = -x * g.s + y * g.c;
            }
        }
        for i in lo..=hi {
            h[(i, i)] += mu;
        }
    }
    Ok(out)
}

/// Sorts by descending modulus, ties broken by descending real part.
pub fn sort_descending_modulus(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))
    });
}
