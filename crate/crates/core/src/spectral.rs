//! Linearization at consensus and the spectrum of the mean-feedback closed loop.
//!
//! At consensus the interaction Jacobian is the consensus Laplacian
//! `A = −p̄ I + (p̄/N) 𝟙𝟙ᵀ`. Mean-state feedback `F = (k/N) 𝟙ᵀ` through the
//! channel `B` gives `A + BF` with
//!
//! * `λ₁ = (k/N) Σ b_j`, eigenvector `𝟙 + (k/p̄) B`;
//! * `λ = −p̄` with multiplicity `N − 1`, eigenvectors `e₁ − e_i`.
//!
//! The eigenpairs are taken from these closed forms and then checked by
//! residuals against the operator, not computed with a general eigensolver.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative residual tolerance for `‖(A+BF)v − λv‖∞ ≤ tol · ‖v‖∞`.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

pub fn build_laplacian(n: usize, p_bar: f64) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::invalid("n", format!("need at least 2 agents, got {n}")));
    }
    if !(p_bar.is_finite() && p_bar > 0.0) {
        return Err(Error::invalid("p_bar", format!("must be positive, got {p_bar}")));
    }
    let nf = n as f64;
    let diag = p_bar * (1.0 - nf) / nf;
    let off = p_bar / nf;
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { diag } else { off }))
}

/// `A + B (k/N) 𝟙ᵀ`: row `i` gains `k b_i / N` in every column.
pub fn closed_loop(a: &DMatrix<f64>, b: &[f64], k: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "square matrix columns",
            expected: n,
            actual: a.ncols(),
        });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "actuation vector",
            expected: n,
            actual: b.len(),
        });
    }
    let nf = n as f64;
    let mut out = a.clone();
    for i in 0..n {
        let gain = k * b[i] / nf;
        for j in 0..n {
            out[(i, j)] += gain;
        }
    }
    Ok(out)
}

/// Assumption of stabilizability: `Σ b_j ≠ 0`, exact on the input floats.
pub fn check_stabilizable(b: &[f64]) -> bool {
    b.iter().sum::<f64>() != 0.0
}

/// `k = −magnitude · sign(Σ b_j)`, which makes `λ₁ < 0`.
pub fn select_gain(b: &[f64], magnitude: f64) -> Result<f64> {
    if !(magnitude.is_finite() && magnitude > 0.0) {
        return Err(Error::invalid(
            "magnitude",
            format!("must be positive, got {magnitude}"),
        ));
    }
    if !check_stabilizable(b) {
        return Err(Error::NotStabilizable);
    }
    let sum: f64 = b.iter().sum();
    Ok(-magnitude * sum.signum())
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenCheck {
    pub eigenvalue: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub n: usize,
    pub p_bar: f64,
    pub k: f64,
    pub actuation_sum: f64,
    pub laplacian_eigenvalues: Vec<f64>,
    pub closed_loop_eigenvalues: Vec<f64>,
    pub lambda1_closed: f64,
    pub stabilizable: bool,
    pub asymptotically_stable: bool,
    /// Residuals of the Laplacian eigenpairs `(0, 𝟙)`, `(−p̄, e₁ − e_i)`.
    pub laplacian_residuals: Vec<EigenCheck>,
    /// Residuals of the closed-loop eigenpairs, `λ₁` first.
    pub closed_loop_residuals: Vec<EigenCheck>,
    pub max_residual: f64,
}

/// `(A + BF) v` in `O(N)` using the rank-one structure:
/// `−p̄ v + (p̄/N)(Σv) 𝟙 + (k/N)(Σv) B`.
pub fn apply_closed_loop(p_bar: f64, b: &[f64], k: f64, v: &[f64]) -> Vec<f64> {
    let nf = v.len() as f64;
    let s: f64 = v.iter().sum();
    let coupling = p_bar / nf * s;
    let control = k / nf * s;
    v.iter()
        .zip(b)
        .map(|(vi, bi)| -p_bar * vi + coupling + bi * control)
        .collect()
}

fn residual(p_bar: f64, b: &[f64], k: f64, lambda: f64, v: &[f64]) -> f64 {
    apply_closed_loop(p_bar, b, k, v)
        .iter()
        .zip(v)
        .map(|(av, vi)| (av - lambda * vi).abs())
        .fold(0.0, f64::max)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Eigenvector of `λ₁`. When `𝟙 + (k/p̄)B` vanishes (`B = −(p̄/k)𝟙`) the closed
/// loop is `−p̄ I` and `𝟙` is used instead.
pub fn lambda1_eigenvector(p_bar: f64, b: &[f64], k: f64) -> Vec<f64> {
    let v: Vec<f64> = b.iter().map(|bi| 1.0 + k / p_bar * bi).collect();
    if inf_norm(&v) == 0.0 {
        vec![1.0; b.len()]
    } else {
        v
    }
}

/// `e₁ − e_i`, `i = 2..N` (1-based); `index` runs over `1..N` zero-based.
pub fn consensus_mode(n: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    v[index] = -1.0;
    v
}

pub fn analytic_spectrum(n: usize, p_bar: f64, b: &[f64], k: f64) -> Result<SpectralReport> {
    if n < 2 {
        return Err(Error::invalid("n", format!("need at least 2 agents, got {n}")));
    }
    if !(p_bar.is_finite() && p_bar > 0.0) {
        return Err(Error::invalid("p_bar", format!("must be positive, got {p_bar}")));
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            what: "actuation vector",
            expected: n,
            actual: b.len(),
        });
    }
    let sum: f64 = b.iter().sum();
    let lambda1 = k * sum / n as f64;
    let zeros = vec![0.0; n];

    let mut checks = Vec::with_capacity(n);
    let mut lap_checks = Vec::with_capacity(n);
    let verify = |index: usize, lambda: f64, v: &[f64], b: &[f64], k: f64, out: &mut Vec<EigenCheck>| {
        let r = residual(p_bar, b, k, lambda, v);
        let tolerance = RESIDUAL_TOLERANCE * inf_norm(v);
        out.push(EigenCheck {
            eigenvalue: lambda,
            residual: r,
        });
        if r > tolerance {
            Err(Error::SpectralVerification {
                index,
                residual: r,
                tolerance,
            })
        } else {
            Ok(())
        }
    };

    verify(0, 0.0, &vec![1.0; n], &zeros, 0.0, &mut lap_checks)?;
    verify(0, lambda1, &lambda1_eigenvector(p_bar, b, k), b, k, &mut checks)?;
    for i in 1..n {
        let v = consensus_mode(n, i);
        verify(i, -p_bar, &v, &zeros, 0.0, &mut lap_checks)?;
        verify(i, -p_bar, &v, b, k, &mut checks)?;
    }

    let max_residual = checks
        .iter()
        .chain(&lap_checks)
        .map(|c| c.residual)
        .fold(0.0, f64::max);
    let stabilizable = check_stabilizable(b);

    let mut laplacian_eigenvalues = vec![0.0];
    laplacian_eigenvalues.extend(std::iter::repeat_n(-p_bar, n - 1));
    let mut closed_loop_eigenvalues = vec![lambda1];
    closed_loop_eigenvalues.extend(std::iter::repeat_n(-p_bar, n - 1));

    Ok(SpectralReport {
        n,
        p_bar,
        k,
        actuation_sum: sum,
        laplacian_eigenvalues,
        closed_loop_eigenvalues,
        lambda1_closed: lambda1,
        stabilizable,
        asymptotically_stable: stabilizable && lambda1 < 0.0,
        laplacian_residuals: lap_checks,
        closed_loop_residuals: checks,
        max_residual,
    })
}

/// Dense residual `‖M v − λ v‖∞`, for cross-checking the structured product.
pub fn dense_residual(m: &DMatrix<f64>, lambda: f64, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    (m * &v - v * lambda).amax()
}
