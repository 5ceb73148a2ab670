//! Zero-mean Gaussian model of the dark-plane quadratures.
//!
//! Variances are in shot-noise units. `n_lo` is the bright-mode detector scale:
//! the shot-noise variance seen by the detector at unit transmission.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::par::Parallelism;
use crate::rng::{self, Domain, CHUNK};

/// Largest photon-number probability allowed beyond the Fock cutoff.
pub const TAIL_LIMIT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDarkPlaneState {
    pub v_sq: f64,
    pub v_anti: f64,
    pub theta_sq: f64,
    pub n_lo: f64,
}

/// `{ "sq_dB": -2.4, "antisq_dB": 14.2, "theta_sq_deg": 0, "n_LO": 1.0 }`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    #[serde(rename = "sq_dB")]
    pub sq_db: f64,
    #[serde(rename = "antisq_dB")]
    pub antisq_db: f64,
    #[serde(default)]
    pub theta_sq_deg: f64,
    #[serde(rename = "n_LO", default = "default_n_lo")]
    pub n_lo: f64,
}

fn default_n_lo() -> f64 {
    1.0
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig {
            sq_db: -2.4,
            antisq_db: 14.2,
            theta_sq_deg: 0.0,
            n_lo: 1.0,
        }
    }
}

impl StateConfig {
    pub fn build(&self) -> Result<GaussianDarkPlaneState> {
        let mut s = GaussianDarkPlaneState::from_decibels(self.sq_db, self.antisq_db)?;
        s.theta_sq = self.theta_sq_deg.to_radians();
        s.n_lo = self.n_lo;
        s.validate()?;
        Ok(s)
    }
}

impl GaussianDarkPlaneState {
    pub fn new(v_sq: f64, v_anti: f64, theta_sq: f64, n_lo: f64) -> Result<Self> {
        let s = GaussianDarkPlaneState {
            v_sq,
            v_anti,
            theta_sq,
            n_lo,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn vacuum() -> Self {
        GaussianDarkPlaneState {
            v_sq: 1.0,
            v_anti: 1.0,
            theta_sq: 0.0,
            n_lo: 1.0,
        }
    }

    /// `V = 10^(dB/10)` for both axes; `theta_sq = 0`, `n_lo = 1`.
    pub fn from_decibels(sq_db: f64, antisq_db: f64) -> Result<Self> {
        if sq_db > antisq_db {
            return Err(Error::InvertedOrdering { sq_db, antisq_db });
        }
        Self::new(
            10f64.powf(sq_db / 10.0),
            10f64.powf(antisq_db / 10.0),
            0.0,
            1.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.v_sq, self.v_anti, self.theta_sq, self.n_lo]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidState("non-finite parameter".into()));
        }
        if !(self.v_sq > 0.0 && self.v_sq <= self.v_anti) {
            return Err(Error::InvalidState(format!(
                "need 0 < V_sq <= V_anti, got ({}, {})",
                self.v_sq, self.v_anti
            )));
        }
        if self.v_sq * self.v_anti < 1.0 - 1e-9 {
            return Err(Error::InvalidState(format!(
                "V_sq * V_anti = {} violates the uncertainty bound",
                self.v_sq * self.v_anti
            )));
        }
        if self.n_lo < 0.0 {
            return Err(Error::InvalidState("n_LO must be non-negative".into()));
        }
        Ok(())
    }

    pub fn is_squeezed(&self) -> bool {
        self.v_sq < 1.0
    }

    /// `V(θ) = V_sq cos²(θ − θ_sq) + V_anti sin²(θ − θ_sq)`.
    pub fn variance_at(&self, angle: f64) -> f64 {
        let (s, c) = (angle - self.theta_sq).sin_cos();
        self.v_sq * c * c + self.v_anti * s * s
    }

    /// Beamsplitter loss with vacuum in the open port.
    pub fn apply_loss(&self, t: f64) -> GaussianDarkPlaneState {
        debug_assert!((0.0..=1.0).contains(&t));
        GaussianDarkPlaneState {
            v_sq: t * self.v_sq + (1.0 - t),
            v_anti: t * self.v_anti + (1.0 - t),
            theta_sq: self.theta_sq,
            n_lo: t * self.n_lo,
        }
    }

    /// Gaussian purity `1/√(V_sq·V_anti)`.
    pub fn purity(&self) -> f64 {
        1.0 / (self.v_sq * self.v_anti).sqrt()
    }

    /// I.i.d. quadrature samples at `angle` in shot-noise units.
    pub fn sample_quadratures(
        &self,
        angle: f64,
        count: usize,
        seed: u64,
        par: Parallelism,
    ) -> Vec<f64> {
        let sd = self.variance_at(angle).sqrt();
        let mut out = vec![0.0; count];
        par.for_each_chunk_mut(&mut out, CHUNK, |chunk, slice| {
            let mut rng = rng::stream(seed, Domain::Quadrature, chunk as u64);
            for v in slice.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = sd * z;
            }
        });
        out
    }

    /// Fock-basis density matrix of this state, built as a numerically
    /// squeezed thermal state and truncated to `dim`.
    pub fn to_fock(&self, dim: usize) -> Result<DensityMatrix> {
        self.to_fock_with_tail_limit(dim, TAIL_LIMIT)
    }

    /// As [`to_fock`](Self::to_fock) with an explicit bound on the discarded
    /// photon-number probability.
    pub fn to_fock_with_tail_limit(&self, dim: usize, tail_limit: f64) -> Result<DensityMatrix> {
        if dim == 0 {
            return Err(Error::InvalidInput("Fock cutoff must be at least 1".into()));
        }
        let work = 2 * dim + 40;
        let nbar = (((self.v_sq * self.v_anti).sqrt() - 1.0) / 2.0).max(0.0);
        let r = 0.25 * (self.v_anti / self.v_sq).ln();

        let thermal = DMatrix::from_fn(work, work, |i, j| {
            if i == j {
                thermal_population(nbar, i)
            } else {
                0.0
            }
        });
        let mut generator = DMatrix::<f64>::zeros(work, work);
        for n in 0..work - 2 {
            let amp = 0.5 * r * (((n + 1) * (n + 2)) as f64).sqrt();
            generator[(n, n + 2)] = amp; // (r/2) a²
            generator[(n + 2, n)] = -amp; // −(r/2) a†²
        }
        let squeeze = generator.exp();
        let full = &squeeze * thermal * squeeze.transpose();

        let block = full.view((0, 0), (dim, dim)).into_owned();
        let tail = 1.0 - block.trace();
        if tail > tail_limit {
            return Err(Error::TruncationTooSmall { dim, tail });
        }
        let rho = DensityMatrix::from_unnormalized(block.map(|v| Complex64::new(v, 0.0)));
        Ok(if self.theta_sq == 0.0 {
            rho
        } else {
            rho.rotated(self.theta_sq)
        })
    }
}

/// Free-function form of [`GaussianDarkPlaneState::to_fock`].
pub fn gaussian_to_fock(state: &GaussianDarkPlaneState, dim: usize) -> Result<DensityMatrix> {
    state.to_fock(dim)
}

fn thermal_population(nbar: f64, n: usize) -> f64 {
    if nbar == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let ratio = nbar / (1.0 + nbar);
    ratio.powi(n as i32) / (1.0 + nbar)
}
