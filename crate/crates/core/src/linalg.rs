//! Dense linear algebra behind the covariance flow: the vectorized Lyapunov
//! solve, the exact one-step propagator, and eigenvalue helpers.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::real::Real;

/// Largest quadrature dimension accepted by the dense Lyapunov solve; the
/// vectorized system is (n²)², which passes ~14 GB at the 51-bin ensemble.
pub const STEADY_STATE_DIM_LIMIT: usize = 64;

pub(crate) fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, v| acc.max(v.abs()))
}

/// Cyclic Jacobi eigendecomposition of a small symmetric matrix: returns
/// (eigenvalues, V) with M V = V diag(λ) and orthonormal columns. Pairing
/// of λ[i] with column i holds by construction, which the QR-based
/// routines do not guarantee for spectra holding near-degenerate pairs.
pub(crate) fn jacobi_symmetric_eigen<T: Real>(m: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<T>::identity(n, n);
    let eps = T::lit(f64::EPSILON);
    for _sweep in 0..64 {
        let mut off = T::zero();
        let mut scale = T::zero();
        for p in 0..n {
            scale = scale.max(a[(p, p)].abs());
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        if off <= eps * scale.max(off) || scale.max(off) == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (apq * T::lit(2.0));
                let sign = if tau >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (tau.abs() + (T::one() + tau * tau).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Eigenvalue of `a` with the largest real part.
pub fn dominant_eigenvalue<T: Real>(a: &DMatrix<T>) -> Complex<T> {
    a.complex_eigenvalues()
        .iter()
        .copied()
        .max_by(|x, y| x.re.partial_cmp(&y.re).expect("finite eigenvalues"))
        .expect("non-empty matrix")
}

/// Solves A X + X Aᵀ + D = 0 by column-stacking: (I⊗A + A⊗I) vec X = −vec D.
///
/// The caller is responsible for checking that A is Hurwitz; a singular
/// vectorized system (marginal drift) surfaces as a numerical error here.
pub fn solve_lyapunov<T: Real>(a: &DMatrix<T>, d: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n || d.nrows() != n || d.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: d.nrows().max(a.ncols()) });
    }
    if n > STEADY_STATE_DIM_LIMIT {
        return Err(Error::TooLarge { dim: n, limit: STEADY_STATE_DIM_LIMIT });
    }
    let id = DMatrix::<T>::identity(n, n);
    let m = id.kronecker(a) + a.kronecker(&id);
    let rhs = -DVector::<T>::from_column_slice(d.as_slice());
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Lyapunov system (marginal drift)".into()))?;
    let mut sol = DMatrix::from_column_slice(n, n, x.as_slice());
    symmetrize(&mut sol);
    Ok(sol)
}

/// Exact discrete propagator of dΣ/dt = AΣ + ΣAᵀ + D over a step h:
/// returns (E, Q) with E = exp(Ah) and Q = ∫₀ʰ exp(As) D exp(Aᵀs) ds, so
/// that Σ(t+h) = E Σ(t) Eᵀ + Q.
///
/// Scaling and doubling: the base step h₀ = h/2ᵏ keeps ‖A‖₁h₀ ≤ 1/16, the
/// base pair comes from Taylor series, and k doublings rebuild the full
/// step via Q ← E Q Eᵀ + Q, E ← E².
pub fn discrete_propagator<T: Real>(
    a: &DMatrix<T>,
    d: &DMatrix<T>,
    h: T,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let n = a.nrows();
    if a.ncols() != n || d.nrows() != n || d.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: d.nrows().max(a.ncols()) });
    }
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::InvalidParameter("propagator step must be positive".into()));
    }
    // 1-norm of A h decides the number of halvings.
    let norm1 = (0..n)
        .map(|j| (0..n).fold(T::zero(), |s, i| s + a[(i, j)].abs()))
        .fold(T::zero(), |m, v| m.max(v))
        * h;
    let theta = T::lit(1.0 / 16.0);
    let mut k = 0u32;
    let mut scale = T::one();
    while norm1 * scale > theta {
        k += 1;
        scale = scale * T::lit(0.5);
        if k > 60 {
            return Err(Error::Numerical("propagator step too stiff to scale".into()));
        }
    }
    let h0 = h * scale;

    // Taylor sums for the base step.
    let tiny = T::lit(f64::EPSILON * 1e-2);
    let mut e = DMatrix::<T>::identity(n, n);
    let mut term = DMatrix::<T>::identity(n, n);
    let mut q = d * h0;
    let mut tj = d.clone();
    let mut coeff = h0;
    for j in 1..=24 {
        term = a * &term * (h0 / T::from_usize(j).expect("small integer"));
        e += &term;
        // T_{j} = A T_{j-1} + T_{j-1} Aᵀ, weighted by h₀^{j+1}/(j+1)!.
        let at = a * &tj;
        tj = &at + at.transpose();
        coeff = coeff * h0 / T::from_usize(j + 1).expect("small integer");
        q += &tj * coeff;
        let done_e = max_abs(&term) <= tiny * max_abs(&e);
        let done_q = max_abs(&tj) * coeff <= tiny * max_abs(&q).max(T::lit(f64::MIN_POSITIVE));
        if done_e && done_q {
            break;
        }
    }
    symmetrize(&mut q);

    for _ in 0..k {
        let mut grown = &e * &q * e.transpose() + &q;
        symmetrize(&mut grown);
        q = grown;
        e = &e * &e;
    }
    Ok((e, q))
}
