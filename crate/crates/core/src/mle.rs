//! Iterative maximum-likelihood reconstruction of a density matrix from
//! binned quadrature tomograms, plus diagnostics on the result.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::fock::{packed_len, BinIntegrals};
use crate::par::Parallelism;
use crate::tomography::Tomogram;

const MIN_PROBABILITY: f64 = 1e-300;
const MONOTONE_SLACK: f64 = 1e-12;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleConfig {
    pub dim: usize,
    pub max_iterations: usize,
    /// Minimum per-sample log-likelihood gain to keep iterating.
    pub tolerance: f64,
    /// Step weight λ ∈ (0, 1]; 1 is the undiluted `RρR` update.
    pub dilution: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            dim: 54,
            max_iterations: 2000,
            tolerance: 1e-10,
            dilution: 1.0,
        }
    }
}

impl MleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::BadParameters(format!(
                "Fock cutoff must be at least 2, got {}",
                self.dim
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::BadParameters(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.dilution > 0.0 && self.dilution <= 1.0) {
            return Err(Error::BadParameters(format!(
                "dilution must lie in (0, 1], got {}",
                self.dilution
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::BadParameters(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Measurement angles and observed relative frequencies on one shared set of
/// bin edges. Frequencies are normalized over the whole data set.
#[derive(Debug, Clone)]
pub struct MleProblem {
    angles: Vec<f64>,
    freqs: Vec<Vec<f64>>,
    integrals: BinIntegrals,
    par: Parallelism,
}

impl MleProblem {
    /// `edges` include the infinite tails; `weights[a][k]` need not be
    /// normalized.
    pub fn new(
        angles: Vec<f64>,
        edges: &[f64],
        weights: Vec<Vec<f64>>,
        dim: usize,
        par: Parallelism,
    ) -> Result<Self> {
        if angles.is_empty() || angles.len() != weights.len() {
            return Err(Error::InvalidInput(
                "need one weight vector per angle".into(),
            ));
        }
        let integrals = BinIntegrals::new(edges, dim, par)?;
        if let Some(w) = weights.iter().find(|w| w.len() != integrals.n_bins()) {
            return Err(Error::InvalidInput(format!(
                "expected {} bins per angle, got {}",
                integrals.n_bins(),
                w.len()
            )));
        }
        if weights
            .iter()
            .flatten()
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(Error::InvalidInput(
                "frequencies must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().flatten().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("tomograms contain no samples".into()));
        }
        let freqs = weights
            .into_iter()
            .map(|w| w.into_iter().map(|x| x / total).collect())
            .collect();
        Ok(MleProblem {
            angles,
            freqs,
            integrals,
            par,
        })
    }

    pub fn from_tomograms(tomograms: &[Tomogram], dim: usize, par: Parallelism) -> Result<Self> {
        let first = tomograms
            .first()
            .ok_or_else(|| Error::InvalidInput("empty tomogram set".into()))?;
        if tomograms.iter().any(|t| t.edges != first.edges) {
            return Err(Error::InvalidInput("tomograms must share bin edges".into()));
        }
        Self::new(
            tomograms.iter().map(|t| t.angle).collect(),
            &first.full_edges(),
            tomograms
                .iter()
                .map(|t| t.counts.iter().map(|&c| c as f64).collect())
                .collect(),
            dim,
            par,
        )
    }

    /// Noiseless data: the frequencies are the exact bin probabilities of
    /// `rho` at each angle, evaluated at `dim`.
    pub fn exact(
        rho: &DensityMatrix,
        angles: Vec<f64>,
        edges: &[f64],
        dim: usize,
        par: Parallelism,
    ) -> Result<Self> {
        let source = BinIntegrals::new(edges, rho.dim(), par)?;
        let weights = par.map_indexed(angles.len(), |a| bin_probabilities(&source, rho, angles[a]));
        let weights = weights
            .into_iter()
            .map(|w| w.into_iter().map(|p| p.max(0.0)).collect())
            .collect();
        Self::new(angles, edges, weights, dim, par)
    }

    pub fn dim(&self) -> usize {
        self.integrals.dim()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<Vec<f64>> {
        self.par.map_indexed(self.angles.len(), |a| {
            bin_probabilities(&self.integrals, rho, self.angles[a])
        })
    }

    /// Per-sample log-likelihood `Σ_j f_j ln p_j`.
    pub fn log_likelihood(&self, probs: &[Vec<f64>]) -> Result<f64> {
        let mut ll = 0.0;
        for (a, (f, p)) in self.freqs.iter().zip(probs).enumerate() {
            for (k, (&f, &p)) in f.iter().zip(p).enumerate() {
                if f > 0.0 {
                    if !(p >= MIN_PROBABILITY) {
                        return Err(Error::ZeroProbabilityBin {
                            angle_deg: self.angles[a].to_degrees(),
                            bin: k,
                        });
                    }
                    ll += f * p.ln();
                }
            }
        }
        Ok(ll)
    }

    /// `R = Σ_j (f_j / p_j) Π_j`.
    pub fn r_operator(&self, probs: &[Vec<f64>]) -> DMatrix<Complex64> {
        let dim = self.dim();
        let len = packed_len(dim);
        let weighted = self.par.map_indexed(self.angles.len(), |a| {
            let mut acc = vec![0.0; len];
            for (k, (&f, &p)) in self.freqs[a].iter().zip(&probs[a]).enumerate() {
                if f > 0.0 {
                    let w = f / p;
                    for (o, &i) in acc.iter_mut().zip(self.integrals.packed(k)) {
                        *o += w * i;
                    }
                }
            }
            acc
        });
        let mut r = DMatrix::<Complex64>::zeros(dim, dim);
        for (theta, m_a) in self.angles.iter().zip(&weighted) {
            let mut idx = 0;
            for m in 0..dim {
                for n in m..dim {
                    let v = Complex64::from_polar(m_a[idx], (m as f64 - n as f64) * theta);
                    r[(m, n)] += v;
                    if m != n {
                        r[(n, m)] += v.conj();
                    }
                    idx += 1;
                }
            }
        }
        r
    }

    /// `max |Rρ − ρ|`; zero at an interior likelihood maximum.
    pub fn fixed_point_residual(&self, rho: &DensityMatrix) -> f64 {
        let r = self.r_operator(&self.probabilities(rho));
        (r * rho.matrix() - rho.matrix()).camax()
    }
}

/// `p_k = Tr(Π_k(θ) ρ)` from the packed angle-free integrals.
fn bin_probabilities(ints: &BinIntegrals, rho: &DensityMatrix, theta: f64) -> Vec<f64> {
    let dim = ints.dim();
    let mut y = Vec::with_capacity(packed_len(dim));
    for m in 0..dim {
        for n in m..dim {
            let v = rho.get(m, n);
            y.push(if m == n {
                v.re
            } else {
                2.0 * (Complex64::from_polar(1.0, (n as f64 - m as f64) * theta) * v).re
            });
        }
    }
    (0..ints.n_bins())
        .map(|k| ints.packed(k).iter().zip(&y).map(|(a, b)| a * b).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// No dilution produced a non-decreasing step.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct MleResult {
    pub rho: DensityMatrix,
    /// Per-sample log-likelihood of the start and of every accepted iterate.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub final_dilution: f64,
}

impl MleResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn final_log_likelihood(&self) -> f64 {
        *self
            .log_likelihood
            .last()
            .expect("trace holds the starting point")
    }

    /// Whether every recorded step gained at least `−1e−12`.
    pub fn is_monotone(&self) -> bool {
        self.log_likelihood
            .windows(2)
            .all(|w| w[1] - w[0] >= -MONOTONE_SLACK)
    }

    /// Turns a non-converged run into `NoConvergence`.
    pub fn require_converged(self) -> Result<Self> {
        if self.converged() {
            return Ok(self);
        }
        let n = self.log_likelihood.len();
        let last_gain = if n >= 2 {
            self.log_likelihood[n - 1] - self.log_likelihood[n - 2]
        } else {
            f64::NAN
        };
        Err(Error::NoConvergence {
            iterations: self.iterations,
            last_gain,
        })
    }
}

pub fn mle_reconstruct(
    tomograms: &[Tomogram],
    config: &MleConfig,
    par: Parallelism,
) -> Result<MleResult> {
    config.validate()?;
    let problem = MleProblem::from_tomograms(tomograms, config.dim, par)?;
    mle_solve(&problem, config)
}

/// Runs the diluted `RρR` iteration from the maximally mixed state.
pub fn mle_solve(problem: &MleProblem, config: &MleConfig) -> Result<MleResult> {
    config.validate()?;
    if problem.dim() != config.dim {
        return Err(Error::BadParameters(format!(
            "problem built at dim {} but config asks for {}",
            problem.dim(),
            config.dim
        )));
    }
    let dim = config.dim;
    let identity = DMatrix::<Complex64>::identity(dim, dim);
    let mut rho = DensityMatrix::maximally_mixed(dim);
    let mut probs = problem.probabilities(&rho);
    let mut ll = problem.log_likelihood(&probs)?;
    let mut trace = vec![ll];
    let mut lambda = config.dilution;
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        let r = problem.r_operator(&probs);
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let rt = if lambda == 1.0 {
                r.clone()
            } else {
                identity.scale(1.0 - lambda) + r.scale(lambda)
            };
            let next = DensityMatrix::from_unnormalized(&rt * rho.matrix() * &rt);
            let next_probs = problem.probabilities(&next);
            let next_ll = problem.log_likelihood(&next_probs)?;
            if next_ll - ll >= -MONOTONE_SLACK {
                accepted = Some((next, next_probs, next_ll));
                break;
            }
            lambda *= 0.5;
        }
        let Some((next, next_probs, next_ll)) = accepted else {
            termination = Termination::Stalled;
            break;
        };
        if cfg!(debug_assertions) {
            next.validate().map_err(|e| {
                Error::InvariantViolation(format!("iteration {}: {e}", iterations + 1))
            })?;
        }
        iterations += 1;
        let gain = next_ll - ll;
        rho = next;
        probs = next_probs;
        ll = next_ll;
        trace.push(ll);
        if gain < config.tolerance {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(MleResult {
        rho,
        log_likelihood: trace,
        iterations,
        termination,
        final_dilution: lambda,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub pass: bool,
    pub ratio: f64,
    pub photon_cut: usize,
    pub threshold: f64,
}

/// Largest `|ρ_mn|` with `m` or `n` at or above `photon_cut`, relative to the
/// largest element overall.
pub fn truncation_check(
    rho: &DensityMatrix,
    photon_cut: usize,
    threshold: f64,
) -> Result<TruncationReport> {
    let dim = rho.dim();
    if photon_cut >= dim {
        return Err(Error::BadParameters(format!(
            "photon cut {photon_cut} must be below the cutoff {dim}"
        )));
    }
    let mut high = 0.0f64;
    let mut all = 0.0f64;
    for m in 0..dim {
        for n in 0..dim {
            let v = rho.get(m, n).norm();
            all = all.max(v);
            if m >= photon_cut || n >= photon_cut {
                high = high.max(v);
            }
        }
    }
    let ratio = high / all;
    Ok(TruncationReport {
        pass: ratio < threshold,
        ratio,
        photon_cut,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityWeights {
    pub even_even_weight: f64,
    pub odd_odd_weight: f64,
    pub mixed_parity_weight: f64,
}

impl ParityWeights {
    pub fn total(&self) -> f64 {
        self.even_even_weight + self.odd_odd_weight + self.mixed_parity_weight
    }

    pub fn mixed_fraction(&self) -> f64 {
        self.mixed_parity_weight / self.total()
    }
}

/// Sums `|ρ_mn|` by index parity class, skipping entries below `floor`.
pub fn parity_diagnostic(rho: &DensityMatrix, floor: f64) -> ParityWeights {
    let mut w = ParityWeights {
        even_even_weight: 0.0,
        odd_odd_weight: 0.0,
        mixed_parity_weight: 0.0,
    };
    for m in 0..rho.dim() {
        for n in 0..rho.dim() {
            let v = rho.get(m, n).norm();
            if v < floor {
                continue;
            }
            match (m % 2, n % 2) {
                (0, 0) => w.even_even_weight += v,
                (1, 1) => w.odd_odd_weight += v,
                _ => w.mixed_parity_weight += v,
            }
        }
    }
    w
}
