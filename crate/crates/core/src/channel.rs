//! Transmission statistics of the fading link and synthesis of detector
//! records.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::gaussian::GaussianDarkPlaneState;
use crate::par::Parallelism;
use crate::rng::{self, Domain, CHUNK};

/// Distribution of the channel transmittance.
///
/// JSON form is tagged by `kind`, e.g.
/// `{ "kind": "beta", "alpha": 8, "beta": 6, "t_max": 0.7 }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransmissionModel {
    Constant {
        value: f64,
    },
    /// `t_max · Beta(alpha, beta)`.
    Beta {
        alpha: f64,
        beta: f64,
        t_max: f64,
    },
    /// Log-normal in T, truncated to `(0, t_max]`.
    TruncatedLognormal {
        mu: f64,
        sigma: f64,
        t_max: f64,
    },
    /// Digitized histogram: point masses at `values`.
    EmpiricalHistogram {
        values: Vec<f64>,
        probabilities: Vec<f64>,
        #[serde(default = "one")]
        t_max: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for TransmissionModel {
    fn default() -> Self {
        TransmissionModel::Beta {
            alpha: 8.0,
            beta: 6.0,
            t_max: 0.7,
        }
    }
}

fn check_t_max(t_max: f64) -> Result<()> {
    if t_max > 0.0 && t_max <= 1.0 {
        Ok(())
    } else {
        Err(Error::BadParameters(format!(
            "t_max must lie in (0, 1], got {t_max}"
        )))
    }
}

impl TransmissionModel {
    pub fn t_max(&self) -> f64 {
        match self {
            TransmissionModel::Constant { value } => *value,
            TransmissionModel::Beta { t_max, .. }
            | TransmissionModel::TruncatedLognormal { t_max, .. }
            | TransmissionModel::EmpiricalHistogram { t_max, .. } => *t_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TransmissionModel::Constant { value } => {
                if !(0.0..=1.0).contains(value) {
                    return Err(Error::BadParameters(format!(
                        "constant transmission {value} outside [0, 1]"
                    )));
                }
            }
            TransmissionModel::Beta { alpha, beta, t_max } => {
                check_t_max(*t_max)?;
                if !(*alpha > 0.0 && *beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
                    return Err(Error::BadParameters(format!(
                        "beta shape parameters must be positive, got ({alpha}, {beta})"
                    )));
                }
            }
            TransmissionModel::TruncatedLognormal { mu, sigma, t_max } => {
                check_t_max(*t_max)?;
                if !(*sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
                    return Err(Error::BadParameters(format!(
                        "log-normal needs finite mu and sigma > 0, got ({mu}, {sigma})"
                    )));
                }
                if self.lognormal_mass_below_t_max() < 1e-12 {
                    return Err(Error::BadParameters(
                        "log-normal has no mass below t_max".into(),
                    ));
                }
            }
            TransmissionModel::EmpiricalHistogram {
                values,
                probabilities,
                t_max,
            } => {
                check_t_max(*t_max)?;
                if values.is_empty() || values.len() != probabilities.len() {
                    return Err(Error::BadParameters(
                        "histogram needs matching, nonempty values and probabilities".into(),
                    ));
                }
                if values.iter().any(|v| !(0.0..=*t_max).contains(v)) {
                    return Err(Error::BadParameters(
                        "histogram value outside [0, t_max]".into(),
                    ));
                }
                if probabilities.iter().any(|p| !(*p >= 0.0)) {
                    return Err(Error::BadParameters(
                        "negative histogram probability".into(),
                    ));
                }
                let total: f64 = probabilities.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::BadParameters(format!(
                        "histogram probabilities sum to {total}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn lognormal_mass_below_t_max(&self) -> f64 {
        match self {
            TransmissionModel::TruncatedLognormal { mu, sigma, t_max } => Normal::new(*mu, *sigma)
                .map(|n| n.cdf(t_max.ln()))
                .unwrap_or(0.0),
            _ => 1.0,
        }
    }

    /// Mean transmittance of the model.
    pub fn mean(&self) -> f64 {
        match self {
            TransmissionModel::Constant { value } => *value,
            TransmissionModel::Beta { alpha, beta, t_max } => t_max * alpha / (alpha + beta),
            TransmissionModel::TruncatedLognormal { mu, sigma, t_max } => {
                // E[X; X ≤ c] = e^{μ+σ²/2} Φ((ln c − μ − σ²)/σ)
                let std = Normal::new(0.0, 1.0).unwrap();
                let z = (t_max.ln() - mu - sigma * sigma) / sigma;
                (mu + 0.5 * sigma * sigma).exp() * std.cdf(z) / self.lognormal_mass_below_t_max()
            }
            TransmissionModel::EmpiricalHistogram {
                values,
                probabilities,
                ..
            } => values.iter().zip(probabilities).map(|(v, p)| v * p).sum(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            TransmissionModel::Constant { value } => *value,
            TransmissionModel::Beta { alpha, beta, t_max } => {
                t_max * Beta::new(*alpha, *beta).expect("validated").sample(rng)
            }
            TransmissionModel::TruncatedLognormal { mu, sigma, t_max } => {
                let normal = Normal::new(*mu, *sigma).expect("validated");
                let top = normal.cdf(t_max.ln());
                let u: f64 = rng.random::<f64>() * top;
                normal
                    .inverse_cdf(u.max(f64::MIN_POSITIVE))
                    .exp()
                    .min(*t_max)
            }
            TransmissionModel::EmpiricalHistogram {
                values,
                probabilities,
                ..
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probabilities) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
        }
    }
}

pub fn sample_transmission(
    model: &TransmissionModel,
    count: usize,
    seed: u64,
    par: Parallelism,
) -> Result<Vec<f64>> {
    model.validate()?;
    let mut out = vec![0.0; count];
    par.for_each_chunk_mut(&mut out, CHUNK, |chunk, slice| {
        let mut rng = rng::stream(seed, Domain::Transmission, chunk as u64);
        slice.iter_mut().for_each(|t| *t = model.draw(&mut rng));
    });
    Ok(out)
}

/// One detector sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementRecord {
    /// True channel transmittance.
    pub t: f64,
    /// Measurement angle in the dark plane, radians.
    pub theta: f64,
    /// Dark-plane Stokes sample (difference of the ac signals).
    pub ac_diff: f64,
    /// Total-intensity sample (sum of the ac signals), the shot-noise reference.
    pub ac_sum: f64,
    /// Transmission side information from the dc signals.
    pub dc_sum: f64,
}

/// Additive detector noise. Both default to zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorNoise {
    /// Electronic variance added to both ac channels.
    #[serde(default)]
    pub electronic_var: f64,
    /// Readout variance of the dc transmission estimate.
    #[serde(default)]
    pub readout_var: f64,
}

/// Records for each transmission in order, `samples_per_t` per value.
///
/// Quadrature law at transmission `T`: `Var(ac_diff) = T·n_LO·(1 + T(V(θ) − 1))`
/// and `Var(ac_sum) = T·n_LO`.
pub fn synthesize_records(
    state: &GaussianDarkPlaneState,
    angle: f64,
    transmissions: &[f64],
    samples_per_t: usize,
    seed: u64,
    noise: DetectorNoise,
    par: Parallelism,
) -> Result<Vec<MeasurementRecord>> {
    if let Some(t) = transmissions.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::InvalidInput(format!(
            "transmission {t} outside [0, 1]"
        )));
    }
    if noise.electronic_var < 0.0 || noise.readout_var < 0.0 {
        return Err(Error::InvalidInput(
            "noise variances must be non-negative".into(),
        ));
    }
    let v = state.variance_at(angle);
    let chunks_per_t = samples_per_t.div_ceil(CHUNK).max(1);
    let blocks = par.map_indexed(transmissions.len() * chunks_per_t, |job| {
        let (ti, chunk) = (job / chunks_per_t, job % chunks_per_t);
        let t = transmissions[ti];
        let start = chunk * CHUNK;
        let len = samples_per_t.saturating_sub(start).min(CHUNK);
        let sd_diff = (t * state.n_lo * (1.0 + t * (v - 1.0)) + noise.electronic_var).sqrt();
        let sd_sum = (t * state.n_lo + noise.electronic_var).sqrt();
        let sd_dc = noise.readout_var.sqrt();
        let mut rng = rng::stream(seed, Domain::Record, ((ti as u64) << 24) | chunk as u64);
        (0..len)
            .map(|_| {
                let z: [f64; 3] = [
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                ];
                MeasurementRecord {
                    t,
                    theta: angle,
                    ac_diff: sd_diff * z[0],
                    ac_sum: sd_sum * z[1],
                    dc_sum: t + sd_dc * z[2],
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(blocks.into_iter().flatten().collect())
}

/// Full sweep over a transmission grid, as produced by adding attenuation at
/// the receiver.
pub fn artificial_attenuation_sweep(
    state: &GaussianDarkPlaneState,
    angle: f64,
    t_grid: &[f64],
    samples_per_t: usize,
    seed: u64,
    par: Parallelism,
) -> Result<Vec<MeasurementRecord>> {
    synthesize_records(
        state,
        angle,
        t_grid,
        samples_per_t,
        seed,
        DetectorNoise::default(),
        par,
    )
}
