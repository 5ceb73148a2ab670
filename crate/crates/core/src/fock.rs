//! Quadrature wavefunctions, binned quadrature POVMs, and second moments in a
//! truncated Fock basis.
//!
//! Internally everything is in canonical units, `x = (a + a†)/√2`, where the
//! vacuum variance is 1/2. Reported variances are in shot-noise units (vacuum
//! variance 1); [`SHOT_NOISE_VARIANCE_FACTOR`] and [`SHOT_NOISE_AXIS_FACTOR`]
//! are the only conversion points.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::par::Parallelism;
use crate::quadrature;

/// Canonical variance → shot-noise variance.
pub const SHOT_NOISE_VARIANCE_FACTOR: f64 = 2.0;
/// Canonical quadrature value → shot-noise quadrature value.
pub const SHOT_NOISE_AXIS_FACTOR: f64 = std::f64::consts::SQRT_2;

const POVM_TOL: f64 = 1e-10;

/// Normalized Hermite function ψ_n(x) = (2ⁿ n! √π)^{-1/2} H_n(x) e^{-x²/2}.
pub fn hermite_psi(n: usize, x: f64) -> f64 {
    let mut buf = vec![0.0; n + 1];
    hermite_psi_all(x, &mut buf);
    buf[n]
}

/// Fills `out[n] = ψ_n(x)` for `n < out.len()` using the three-term
/// recurrence on normalized functions.
pub fn hermite_psi_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if out.len() > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for n in 1..out.len().saturating_sub(1) {
        let nf = n as f64;
        out[n + 1] = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
    }
}

/// Index of `(m, n)`, `m ≤ n`, in row-major packed upper-triangular storage.
#[inline]
pub(crate) fn packed_index(dim: usize, m: usize, n: usize) -> usize {
    debug_assert!(m <= n);
    m * dim - m * m.saturating_sub(1) / 2 + (n - m)
}

pub(crate) fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges[0] != f64::NEG_INFINITY || *edges.last().unwrap() != f64::INFINITY {
        return Err(Error::MissingTailBins);
    }
    for (i, w) in edges.windows(2).enumerate() {
        if !(w[1] > w[0]) || w[0].is_nan() {
            return Err(Error::NonMonotonicEdges { index: i + 1 });
        }
    }
    Ok(())
}

/// Angle-independent overlap integrals `∫_{bin k} ψ_m ψ_n dx`.
///
/// A rotated POVM element is `Π_k(θ)_mn = e^{i(m−n)θ} I_k[m][n]`, so one set
/// of integrals serves every measurement angle that shares the bin edges.
#[derive(Debug, Clone)]
pub struct BinIntegrals {
    dim: usize,
    edges: Vec<f64>,
    /// One packed upper triangle per bin.
    bins: Vec<Vec<f64>>,
}

impl BinIntegrals {
    /// `edges` are canonical quadrature values, first `-inf`, last `+inf`.
    pub fn new(edges: &[f64], dim: usize, par: Parallelism) -> Result<Self> {
        check_edges(edges)?;
        if dim == 0 {
            return Err(Error::InvalidInput("Fock cutoff must be at least 1".into()));
        }
        // ψ_n is negligible beyond its turning point √(2n+1) by a wide margin.
        let reach = (2.0 * dim as f64 + 1.0).sqrt() + 10.0;
        let len = packed_len(dim);
        let bins = par.map_indexed(edges.len() - 1, |k| {
            let lo = edges[k].max(-reach);
            let hi = edges[k + 1].min(reach);
            if !(hi > lo) {
                return vec![0.0; len];
            }
            quadrature::integrate(
                |x, out| {
                    let mut psi = vec![0.0; dim];
                    hermite_psi_all(x, &mut psi);
                    let mut idx = 0;
                    for m in 0..dim {
                        for n in m..dim {
                            out[idx] = psi[m] * psi[n];
                            idx += 1;
                        }
                    }
                },
                lo,
                hi,
                len,
                POVM_TOL,
            )
        });
        Ok(BinIntegrals {
            dim,
            edges: edges.to_vec(),
            bins,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub(crate) fn packed(&self, k: usize) -> &[f64] {
        &self.bins[k]
    }

    pub fn overlap(&self, k: usize, m: usize, n: usize) -> f64 {
        let (a, b) = if m <= n { (m, n) } else { (n, m) };
        self.bins[k][packed_index(self.dim, a, b)]
    }

    /// The POVM element for bin `k` at measurement angle `angle`.
    pub fn element(&self, k: usize, angle: f64) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.dim, self.dim, |m, n| {
            Complex64::from_polar(self.overlap(k, m, n), (m as f64 - n as f64) * angle)
        })
    }
}

/// Binned quadrature measurement at one angle.
#[derive(Debug, Clone)]
pub struct QuadraturePovm {
    pub angle: f64,
    pub bin_edges: Vec<f64>,
    pub elements: Vec<DMatrix<Complex64>>,
}

impl QuadraturePovm {
    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.elements
            .iter()
            .map(|pi| (pi * rho.matrix()).trace().re)
            .collect()
    }
}

pub fn quadrature_povm(angle: f64, bin_edges: &[f64], dim: usize) -> Result<QuadraturePovm> {
    let ints = BinIntegrals::new(bin_edges, dim, Parallelism::default())?;
    Ok(QuadraturePovm {
        angle,
        bin_edges: bin_edges.to_vec(),
        elements: (0..ints.n_bins()).map(|k| ints.element(k, angle)).collect(),
    })
}

/// Ladder moments `⟨a⟩`, `⟨a²⟩`, `⟨a†a⟩`.
fn ladder_moments(rho: &DensityMatrix) -> (Complex64, Complex64, f64) {
    let d = rho.dim();
    let mut a = Complex64::new(0.0, 0.0);
    let mut a2 = Complex64::new(0.0, 0.0);
    let mut n = 0.0;
    for k in 0..d {
        n += k as f64 * rho.get(k, k).re;
        if k + 1 < d {
            a += rho.get(k + 1, k) * ((k + 1) as f64).sqrt();
        }
        if k + 2 < d {
            a2 += rho.get(k + 2, k) * (((k + 1) * (k + 2)) as f64).sqrt();
        }
    }
    (a, a2, n)
}

/// Variance of `x_θ = x cos θ + p sin θ` in shot-noise units (vacuum → 1).
pub fn quadrature_variance(rho: &DensityMatrix, angle: f64) -> f64 {
    let (a, a2, n) = ladder_moments(rho);
    let phase = Complex64::from_polar(1.0, -angle);
    let mean = std::f64::consts::SQRT_2 * (phase * a).re;
    let second = (2.0 * (phase * phase * a2).re + 2.0 * n + 1.0) / 2.0;
    SHOT_NOISE_VARIANCE_FACTOR * (second - mean * mean)
}

/// Largest quadrature variance over all angles, shot-noise units.
pub fn max_quadrature_variance(rho: &DensityMatrix) -> f64 {
    let v0 = quadrature_variance(rho, 0.0);
    let v45 = quadrature_variance(rho, std::f64::consts::FRAC_PI_4);
    let v90 = quadrature_variance(rho, std::f64::consts::FRAC_PI_2);
    let mid = 0.5 * (v0 + v90);
    let b = 0.5 * (v0 - v90);
    let c = v45 - mid;
    mid + (b * b + c * c).sqrt()
}
