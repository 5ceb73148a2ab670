//! Experiment configuration: one JSON document covering every stage.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sqlink::channel::{DetectorNoise, TransmissionModel};
use sqlink::mle::MleConfig;
use sqlink::postselect::ProtocolConfig;
use sqlink::StateConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub state: StateConfig,
    pub channel: TransmissionModel,
    pub simulation: SimulationConfig,
    pub protocol: ProtocolConfig,
    pub tomography: TomographyConfig,
    pub wigner: WignerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            state: StateConfig::default(),
            channel: TransmissionModel::default(),
            simulation: SimulationConfig::default(),
            protocol: ProtocolConfig::default(),
            tomography: TomographyConfig::default(),
            wigner: WignerConfig::default(),
        }
    }
}

/// Channel-stream simulation: each angle gets `draws` transmissions, and each
/// transmission holds for `samples_per_T` consecutive records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub draws: usize,
    #[serde(rename = "samples_per_T")]
    pub samples_per_t: usize,
    /// Relative to the squeezed axis.
    pub angles_deg: Vec<f64>,
    pub noise: DetectorNoise,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            draws: 40,
            samples_per_t: 50_000,
            angles_deg: vec![0.0],
            noise: DetectorNoise::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomographyConfig {
    /// Transmission of the postselected state.
    pub select_t: f64,
    /// Relative to the squeezed axis, within [0, 90].
    pub angles_deg: Vec<f64>,
    pub samples_per_angle: usize,
    pub n_bins: usize,
    pub range_sigmas: f64,
    pub dim: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub dilution: f64,
    pub photon_cut: usize,
    pub truncation_threshold: f64,
    pub parity_floor: f64,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        let mle = MleConfig::default();
        TomographyConfig {
            select_t: 0.552,
            angles_deg: (0..29).map(|i| 90.0 * i as f64 / 28.0).collect(),
            samples_per_angle: 315_000,
            n_bins: 251,
            range_sigmas: 6.0,
            dim: mle.dim,
            max_iterations: mle.max_iterations,
            tolerance: mle.tolerance,
            dilution: mle.dilution,
            photon_cut: 53,
            truncation_threshold: 1e-3,
            parity_floor: 1e-6,
        }
    }
}

impl TomographyConfig {
    pub fn mle(&self) -> MleConfig {
        MleConfig {
            dim: self.dim,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            dilution: self.dilution,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WignerConfig {
    pub points: usize,
    /// Grid half-width in units of the largest quadrature standard deviation.
    pub sigmas: f64,
}

impl Default for WignerConfig {
    fn default() -> Self {
        WignerConfig {
            points: 201,
            sigmas: 6.0,
        }
    }
}

impl ExperimentConfig {
    /// Every problem found, each prefixed with its field path.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &str, msg: String| {
            if !ok {
                out.push(format!("{field}: {msg}"));
            }
        };
        if let Err(e) = self.state.build() {
            check(false, "state", e.to_string());
        }
        if let Err(e) = self.channel.validate() {
            check(false, "channel", e.to_string());
        }
        let sim = &self.simulation;
        check(
            sim.draws > 0,
            "simulation.draws",
            "must be at least 1".into(),
        );
        check(
            sim.samples_per_t > 0,
            "simulation.samples_per_T",
            "must be at least 1".into(),
        );
        check(
            !sim.angles_deg.is_empty(),
            "simulation.angles_deg",
            "must not be empty".into(),
        );
        check(
            sim.angles_deg.iter().all(|a| a.is_finite()),
            "simulation.angles_deg",
            "must be finite".into(),
        );
        check(
            sim.noise.electronic_var >= 0.0 && sim.noise.readout_var >= 0.0,
            "simulation.noise",
            "variances must be non-negative".into(),
        );
        if let Err(e) = self.protocol.validate() {
            check(false, "protocol", e.to_string());
        }
        let tomo = &self.tomography;
        check(
            tomo.select_t > 0.0 && tomo.select_t <= 1.0,
            "tomography.select_t",
            format!("must lie in (0, 1], got {}", tomo.select_t),
        );
        check(
            !tomo.angles_deg.is_empty(),
            "tomography.angles_deg",
            "must not be empty".into(),
        );
        check(
            tomo.angles_deg.iter().all(|a| (0.0..=90.0).contains(a)),
            "tomography.angles_deg",
            "must lie in [0, 90]".into(),
        );
        check(
            tomo.samples_per_angle > 0,
            "tomography.samples_per_angle",
            "must be at least 1".into(),
        );
        check(
            tomo.n_bins > 0,
            "tomography.n_bins",
            "must be at least 1".into(),
        );
        check(
            tomo.range_sigmas > 0.0 && tomo.range_sigmas.is_finite(),
            "tomography.range_sigmas",
            "must be positive".into(),
        );
        if let Err(e) = tomo.mle().validate() {
            check(false, "tomography", e.to_string());
        }
        check(
            tomo.photon_cut < tomo.dim,
            "tomography.photon_cut",
            format!("must be below dim {}", tomo.dim),
        );
        check(
            tomo.truncation_threshold > 0.0,
            "tomography.truncation_threshold",
            "must be positive".into(),
        );
        check(
            tomo.parity_floor >= 0.0,
            "tomography.parity_floor",
            "must be non-negative".into(),
        );
        check(
            self.wigner.points >= sqlink::wigner::MIN_GRID_POINTS,
            "wigner.points",
            format!("must be at least {}", sqlink::wigner::MIN_GRID_POINTS),
        );
        check(
            self.wigner.sigmas > 0.0,
            "wigner.sigmas",
            "must be positive".into(),
        );
        out
    }

    /// SHA-256 of the canonical JSON form, seed excluded so that one
    /// configuration can be rerun under several seeds.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value
            .as_object_mut()
            .expect("config is an object")
            .remove("seed");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        format!("{:x}", Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(ExperimentConfig::default().problems().is_empty());
    }

    #[test]
    fn defaults_carry_protocol_constants() {
        let c = ExperimentConfig::default();
        assert_eq!(c.protocol.bin_width, 0.0019);
        assert_eq!(c.protocol.block_size, 10_000);
        assert_eq!(c.protocol.min_samples, 50_000);
        assert_eq!(c.tomography.angles_deg.len(), 29);
        assert_eq!(c.tomography.samples_per_angle, 315_000);
        assert_eq!(c.tomography.n_bins, 251);
        assert_eq!(c.tomography.dim, 54);
    }

    #[test]
    fn problems_name_fields() {
        let mut c = ExperimentConfig::default();
        c.simulation.samples_per_t = 0;
        c.tomography.photon_cut = 60;
        let p = c.problems();
        assert!(p.iter().any(|m| m.starts_with("simulation.samples_per_T")));
        assert!(p.iter().any(|m| m.starts_with("tomography.photon_cut")));
    }

    #[test]
    fn hash_ignores_seed_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            seed: 99,
            ..a.clone()
        };
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.tomography.dim = 40;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"simulation": {"samples_per_T": 10}}"#).unwrap();
        assert_eq!(c.simulation.samples_per_t, 10);
        assert_eq!(c.simulation.draws, 40);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
