//! Quadrature histograms (tomograms) per measurement angle, and their
//! mirroring across the antisqueezed axis.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::channel::MeasurementRecord;
use crate::error::{Error, Result};

const ANGLE_EPS: f64 = 1e-9;

/// Histogram of canonical quadrature values at one angle.
///
/// `edges` holds the finite edges of the interior bins. `counts` has two more
/// entries than there are interior bins: the open lower tail first and the
/// open upper tail last.
#[derive(Debug, Clone, PartialEq)]
pub struct Tomogram {
    /// Radians, measured from the squeezed axis.
    pub angle: f64,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Tomogram {
    pub fn n_interior(&self) -> usize {
        self.edges.len() - 1
    }

    /// Edge list with the infinite tails attached.
    pub fn full_edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.edges.len() + 2);
        e.push(f64::NEG_INFINITY);
        e.extend_from_slice(&self.edges);
        e.push(f64::INFINITY);
        e
    }

    /// `x → −x`. Requires edges symmetric about zero.
    pub fn reflected(&self) -> Result<Tomogram> {
        let n = self.edges.len();
        let symmetric = (0..n).all(|i| {
            (self.edges[i] + self.edges[n - 1 - i]).abs() <= 1e-12 * (1.0 + self.edges[i].abs())
        });
        if !symmetric {
            return Err(Error::AsymmetricEdges);
        }
        let mut counts = self.counts.clone();
        counts.reverse();
        Ok(Tomogram {
            angle: self.angle,
            edges: self.edges.clone(),
            counts,
            total: self.total,
        })
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

/// Samples of one measurement angle, with that group's shot-noise variance.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGroup {
    /// Lab-frame angle, radians.
    pub angle: f64,
    pub samples: Vec<f64>,
    pub shot_variance: f64,
}

/// Splits records by measurement angle (ascending) and calibrates each group
/// against the variance of its total-intensity channel.
pub fn group_by_angle(records: &[MeasurementRecord]) -> Vec<AngleGroup> {
    let mut groups: BTreeMap<u64, (f64, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        // theta ≥ 0 in practice; total_cmp-ordered bits keep negative angles sorted too
        let key = r.theta.to_bits()
            ^ if r.theta.is_sign_negative() {
                u64::MAX
            } else {
                1 << 63
            };
        let g = groups
            .entry(key)
            .or_insert_with(|| (r.theta, Vec::new(), Vec::new()));
        g.1.push(r.ac_diff);
        g.2.push(r.ac_sum);
    }
    groups
        .into_values()
        .map(|(angle, diff, sum)| {
            let n = sum.len() as f64;
            let mean = sum.iter().sum::<f64>() / n;
            let var = sum.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            AngleGroup {
                angle,
                samples: diff,
                shot_variance: var,
            }
        })
        .collect()
}

/// Half-width of the binned range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    /// `k·√(largest group variance)`, canonical units.
    Sigmas(f64),
    Fixed(f64),
}

impl Default for RangePolicy {
    fn default() -> Self {
        RangePolicy::Sigmas(6.0)
    }
}

/// Converts each group to canonical units and histograms it on a shared set
/// of `n_bins` equal-width bins over `[−R, R]` plus two open tails.
pub fn build_tomograms(
    groups: &[AngleGroup],
    theta_sq: f64,
    n_bins: usize,
    range: RangePolicy,
) -> Result<Vec<Tomogram>> {
    if n_bins == 0 {
        return Err(Error::InvalidInput("need at least one bin".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.samples.is_empty()) {
        return Err(Error::EmptyAngleGroup {
            angle_deg: g.angle.to_degrees(),
        });
    }
    if let Some(g) = groups.iter().find(|g| !(g.shot_variance > 0.0)) {
        return Err(Error::NonPositiveVariance(g.shot_variance));
    }
    let canonical: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let scale = 1.0 / (g.shot_variance.sqrt() * SQRT_2);
            g.samples.iter().map(|x| x * scale).collect()
        })
        .collect();
    let half_width = match range {
        RangePolicy::Fixed(r) => r,
        RangePolicy::Sigmas(k) => {
            let max_var = canonical
                .iter()
                .map(|xs| {
                    let n = xs.len() as f64;
                    let m = xs.iter().sum::<f64>() / n;
                    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
                })
                .fold(0.0, f64::max);
            k * max_var.sqrt()
        }
    };
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "tomogram range must be positive, got {half_width}"
        )));
    }
    let width = 2.0 * half_width / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| {
            if i == n_bins {
                half_width
            } else {
                -half_width + width * i as f64
            }
        })
        .collect();
    Ok(groups
        .iter()
        .zip(&canonical)
        .map(|(g, xs)| {
            let mut counts = vec![0u64; n_bins + 2];
            for &x in xs {
                let slot = if x < -half_width {
                    0
                } else if x >= half_width {
                    n_bins + 1
                } else {
                    let mut k = ((x + half_width) / width).floor() as usize;
                    k = k.min(n_bins - 1);
                    // floor() can land one bin off next to an edge
                    if x < edges[k] {
                        k -= 1;
                    } else if k + 1 < n_bins && x >= edges[k + 1] {
                        k += 1;
                    }
                    k + 1
                };
                counts[slot] += 1;
            }
            Tomogram {
                angle: g.angle - theta_sq,
                edges: edges.clone(),
                counts,
                total: xs.len() as u64,
            }
        })
        .collect())
}

/// Completes a scan over `[0, π/2]` to `[0, π)` by emitting the x-reflected
/// tomogram at `π − θ` for every interior angle.
pub fn mirror_tomograms(tomograms: &[Tomogram]) -> Result<Vec<Tomogram>> {
    for t in tomograms {
        if t.angle < -ANGLE_EPS || t.angle > FRAC_PI_2 + ANGLE_EPS {
            return Err(Error::AngleOutOfRange {
                angle_deg: t.angle.to_degrees(),
            });
        }
    }
    let mut out = tomograms.to_vec();
    for t in tomograms {
        if t.angle > ANGLE_EPS && t.angle < FRAC_PI_2 - ANGLE_EPS {
            let mut m = t.reflected()?;
            m.angle = PI - t.angle;
            out.push(m);
        }
    }
    out.sort_by(|a, b| a.angle.total_cmp(&b.angle));
    if let Some(w) = out
        .windows(2)
        .find(|w| w[1].angle - w[0].angle <= ANGLE_EPS)
    {
        return Err(Error::InvalidInput(format!(
            "duplicate tomogram angle {} deg",
            w[0].angle.to_degrees()
        )));
    }
    Ok(out)
}

/// Tomogram set on disk:
/// `{ "theta_sq_deg", "angles_deg": [...], "edges": [...], "counts": [[...]] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomogramSetJson {
    pub theta_sq_deg: f64,
    pub angles_deg: Vec<f64>,
    pub edges: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
}

impl TomogramSetJson {
    pub fn from_tomograms(tomograms: &[Tomogram], theta_sq: f64) -> Result<Self> {
        let edges = tomograms
            .first()
            .map(|t| t.edges.clone())
            .ok_or_else(|| Error::InvalidInput("empty tomogram set".into()))?;
        if tomograms.iter().any(|t| t.edges != edges) {
            return Err(Error::InvalidInput("tomograms must share bin edges".into()));
        }
        Ok(TomogramSetJson {
            theta_sq_deg: theta_sq.to_degrees(),
            angles_deg: tomograms.iter().map(|t| t.angle.to_degrees()).collect(),
            edges,
            counts: tomograms.iter().map(|t| t.counts.clone()).collect(),
        })
    }

    pub fn to_tomograms(&self) -> Result<Vec<Tomogram>> {
        if self.angles_deg.len() != self.counts.len() {
            return Err(Error::InvalidInput(
                "angles_deg and counts differ in length".into(),
            ));
        }
        if self.edges.len() < 2 {
            return Err(Error::InvalidInput("need at least two edges".into()));
        }
        if let Some(i) = self.edges.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotonicEdges { index: i + 1 });
        }
        self.angles_deg
            .iter()
            .zip(&self.counts)
            .map(|(&a, c)| {
                if c.len() != self.edges.len() + 1 {
                    return Err(Error::InvalidInput(format!(
                        "angle {a} deg: expected {} counts (interior bins plus two tails), got {}",
                        self.edges.len() + 1,
                        c.len()
                    )));
                }
                Ok(Tomogram {
                    angle: a.to_radians(),
                    edges: self.edges.clone(),
                    counts: c.clone(),
                    total: c.iter().sum(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianDarkPlaneState;
    use crate::par::Parallelism;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

    fn group(angle: f64, samples: Vec<f64>) -> AngleGroup {
        AngleGroup {
            angle,
            samples,
            shot_variance: 1.0,
        }
    }

    fn scan(n: usize) -> Vec<Tomogram> {
        (0..n)
            .map(|i| Tomogram {
                angle: FRAC_PI_2 * i as f64 / (n - 1) as f64,
                edges: vec![-1.0, 0.0, 1.0],
                counts: vec![i as u64, 1, 2, 3],
                total: i as u64 + 6,
            })
            .collect()
    }

    #[test]
    fn one_tomogram_per_group() {
        let groups: Vec<_> = (0..29)
            .map(|i| group(i as f64 * 0.05, vec![0.1, -0.2, 0.3]))
            .collect();
        let t = build_tomograms(&groups, 0.0, 251, RangePolicy::default()).unwrap();
        assert_eq!(t.len(), 29);
        assert!(t
            .iter()
            .all(|t| t.counts.len() == 253 && t.edges.len() == 252 && t.total == 3));
    }

    #[test]
    fn point_mass_lands_in_one_bin() {
        let v = 0.37;
        let t = build_tomograms(
            &[group(0.0, vec![v; 100])],
            0.0,
            10,
            RangePolicy::Fixed(1.0),
        )
        .unwrap();
        let x = v / SQRT_2;
        let k = t[0]
            .edges
            .windows(2)
            .position(|w| w[0] <= x && x < w[1])
            .unwrap();
        assert_eq!(t[0].counts[k + 1], 100);
        assert_eq!(t[0].counts.iter().sum::<u64>(), 100);
    }

    #[test]
    fn samples_at_edges_are_half_open() {
        // canonical x = sample/√2; place samples exactly on edges −1, 0 and +1
        let t = build_tomograms(
            &[group(0.0, vec![-SQRT_2, 0.0, SQRT_2])],
            0.0,
            2,
            RangePolicy::Fixed(1.0),
        )
        .unwrap();
        assert_eq!(t[0].counts, vec![0, 1, 1, 1]);
    }

    #[test]
    fn empty_group_named() {
        let e = build_tomograms(&[group(0.5, vec![])], 0.0, 5, RangePolicy::default()).unwrap_err();
        assert!(
            matches!(e, Error::EmptyAngleGroup { angle_deg } if (angle_deg - 0.5f64.to_degrees()).abs() < 1e-9)
        );
    }

    #[test]
    fn vacuum_tomogram_passes_chi_square() {
        let n = 315_000;
        let samples =
            GaussianDarkPlaneState::vacuum().sample_quadratures(0.0, n, 17, Parallelism::Parallel);
        let t = build_tomograms(&[group(0.0, samples)], 0.0, 251, RangePolicy::default()).unwrap();
        let full = t[0].full_edges();
        let law = Normal::new(0.0, 0.5f64.sqrt()).unwrap();
        let mut chi2 = 0.0;
        let mut dof = 0usize;
        // pool sparse bins so every expected count is at least 5
        let (mut obs, mut exp) = (0.0, 0.0);
        for k in 0..t[0].counts.len() {
            obs += t[0].counts[k] as f64;
            exp += n as f64 * (law.cdf(full[k + 1]) - law.cdf(full[k]));
            if exp >= 5.0 {
                chi2 += (obs - exp).powi(2) / exp;
                dof += 1;
                obs = 0.0;
                exp = 0.0;
            }
        }
        let crit = ChiSquared::new((dof - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 {chi2} over {dof} cells, critical {crit}");
    }

    #[test]
    fn mirroring_counts() {
        let m = mirror_tomograms(&scan(29)).unwrap();
        assert_eq!(m.len(), 56);
        assert!(m.windows(2).all(|w| w[1].angle > w[0].angle));
        assert!(m.last().unwrap().angle < PI);
        // an interior angle maps to its reflection at π − θ
        let src = &scan(29)[3];
        let img = m
            .iter()
            .find(|t| (t.angle - (PI - src.angle)).abs() < 1e-12)
            .unwrap();
        let mut rev = src.counts.clone();
        rev.reverse();
        assert_eq!(img.counts, rev);
    }

    #[test]
    fn reflection_is_an_involution() {
        let t = &scan(5)[2];
        assert_eq!(&t.reflected().unwrap().reflected().unwrap(), t);
        let sym = Tomogram {
            counts: vec![1, 4, 4, 1],
            ..t.clone()
        };
        assert_eq!(sym.reflected().unwrap().counts, sym.counts);
    }

    #[test]
    fn mirror_rejects_out_of_range_and_asymmetric() {
        let mut s = scan(3);
        s[1].angle = 2.0;
        assert!(matches!(
            mirror_tomograms(&s),
            Err(Error::AngleOutOfRange { .. })
        ));
        let mut s = scan(3);
        s[1].edges = vec![-1.0, 0.2, 1.0];
        assert_eq!(mirror_tomograms(&s).unwrap_err(), Error::AsymmetricEdges);
    }

    #[test]
    fn json_round_trip() {
        let set = TomogramSetJson::from_tomograms(&scan(4), 0.1).unwrap();
        let back = set.to_tomograms().unwrap();
        for (a, b) in back.iter().zip(scan(4)) {
            assert!((a.angle - b.angle).abs() < 1e-15);
            assert_eq!(a.counts, b.counts);
        }
    }
}
