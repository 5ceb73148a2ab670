//! Density matrices in a truncated Fock basis.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

/// A Hermitian, unit-trace, positive semidefinite matrix over photon numbers
/// `0..dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    elements: DMatrix<Complex64>,
}

/// On-disk form: `{ "dim": d, "re": [[...]], "im": [[...]] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityMatrixJson {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl DensityMatrix {
    /// Validates all invariants before accepting `elements`.
    pub fn new(elements: DMatrix<Complex64>) -> Result<Self> {
        let rho = DensityMatrix { elements };
        rho.validate()?;
        Ok(rho)
    }

    /// Symmetrizes and renormalizes; the caller guarantees positivity.
    pub(crate) fn from_unnormalized(mut elements: DMatrix<Complex64>) -> Self {
        let adj = elements.adjoint();
        elements = (elements + adj).scale(0.5);
        let tr = elements.trace().re;
        elements.unscale_mut(tr);
        DensityMatrix { elements }
    }

    pub fn fock(n: usize, dim: usize) -> Self {
        assert!(n < dim, "photon number {n} outside cutoff {dim}");
        let mut m = DMatrix::zeros(dim, dim);
        m[(n, n)] = Complex64::new(1.0, 0.0);
        DensityMatrix { elements: m }
    }

    pub fn vacuum(dim: usize) -> Self {
        Self::fock(0, dim)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        let m = DMatrix::from_diagonal_element(dim, dim, Complex64::new(1.0 / dim as f64, 0.0));
        DensityMatrix { elements: m }
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.elements
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.elements[(m, n)]
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.elements;
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::InvariantViolation(format!(
                "matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvariantViolation("non-finite element".into()));
        }
        let d = m.nrows();
        for i in 0..d {
            for j in i..d {
                let dev = (m[(i, j)] - m[(j, i)].conj()).norm();
                if dev > HERMITIAN_TOL {
                    return Err(Error::InvariantViolation(format!(
                        "not Hermitian at ({i},{j}): deviation {dev:.3e}"
                    )));
                }
            }
        }
        let tr = m.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvariantViolation(format!(
                "trace is {tr}, expected 1"
            )));
        }
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::InvariantViolation(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let hermitian = (&self.elements + self.elements.adjoint()).scale(0.5);
        SymmetricEigen::new(hermitian)
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Tr(ρ²).
    pub fn purity(&self) -> f64 {
        self.elements.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`. Matrices of different cutoff are
    /// compared after zero-padding the smaller one.
    pub fn fidelity(&self, other: &DensityMatrix) -> f64 {
        let d = self.dim().max(other.dim());
        let a = self.padded(d);
        let b = other.padded(d);
        let sqrt_a = psd_sqrt(&a.elements);
        let inner = &sqrt_a * &b.elements * &sqrt_a;
        let s: f64 = psd_sqrt_eigenvalues(&inner).iter().sum();
        s * s
    }

    /// Embeds the state in a larger cutoff (new rows/columns are zero).
    pub fn padded(&self, dim: usize) -> DensityMatrix {
        assert!(dim >= self.dim());
        let mut m = DMatrix::zeros(dim, dim);
        m.view_mut((0, 0), (self.dim(), self.dim()))
            .copy_from(&self.elements);
        DensityMatrix { elements: m }
    }

    /// Applies the phase-space rotation `ρ_mn → e^{i(m−n)φ} ρ_mn`.
    pub fn rotated(&self, phi: f64) -> DensityMatrix {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| {
            self.elements[(i, j)] * Complex64::from_polar(1.0, (i as f64 - j as f64) * phi)
        });
        DensityMatrix { elements: m }
    }

    pub fn to_json(&self) -> DensityMatrixJson {
        let d = self.dim();
        DensityMatrixJson {
            dim: d,
            re: (0..d)
                .map(|i| (0..d).map(|j| self.elements[(i, j)].re).collect())
                .collect(),
            im: (0..d)
                .map(|i| (0..d).map(|j| self.elements[(i, j)].im).collect())
                .collect(),
        }
    }

    pub fn from_json(json: &DensityMatrixJson) -> Result<Self> {
        let d = json.dim;
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == d && rows.iter().all(|r| r.len() == d);
        if d == 0 || !rows_ok(&json.re) || !rows_ok(&json.im) {
            return Err(Error::InvariantViolation(format!(
                "re/im must both be {d}x{d} arrays"
            )));
        }
        let m = DMatrix::from_fn(d, d, |i, j| Complex64::new(json.re[i][j], json.im[i][j]));
        DensityMatrix::new(m)
    }
}

fn hermitian_eigen(m: &DMatrix<Complex64>) -> SymmetricEigen<Complex64, nalgebra::Dyn> {
    SymmetricEigen::new((m + m.adjoint()).scale(0.5))
}

fn psd_sqrt(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = hermitian_eigen(m);
    let d = m.nrows();
    let roots = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            Complex64::new(eig.eigenvalues[i].max(0.0).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    &eig.eigenvectors * roots * eig.eigenvectors.adjoint()
}

fn psd_sqrt_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    hermitian_eigen(m)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect()
}

impl DensityMatrix {
    /// Wraps a matrix without validation. Test-only escape hatch for kernel
    /// checks on operators that are not states.
    #[cfg(test)]
    pub(crate) fn from_unnormalized_unchecked(elements: DMatrix<Complex64>) -> Self {
        DensityMatrix { elements }
    }
}
