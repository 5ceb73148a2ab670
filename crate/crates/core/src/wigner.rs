//! Wigner functions of Fock-basis density matrices and their 1/e level sets.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::fock::{max_quadrature_variance, SHOT_NOISE_AXIS_FACTOR};
use crate::par::Parallelism;

pub const MIN_GRID_POINTS: usize = 32;

/// Rectangular grid in shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn symmetric(half_width: f64, points: usize) -> Self {
        GridSpec {
            x_min: -half_width,
            x_max: half_width,
            p_min: -half_width,
            p_max: half_width,
            points,
        }
    }

    /// `±sigmas·√V_max` around the origin, where `V_max` is the state's
    /// largest quadrature variance.
    pub fn for_state(rho: &DensityMatrix, sigmas: f64, points: usize) -> Self {
        let v = max_quadrature_variance(rho).max(1.0);
        Self::symmetric(sigmas * v.sqrt(), points)
    }

    fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let step = (hi - lo) / (n - 1) as f64;
        (0..n).map(|i| lo + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    /// `values[i][j] = W(x_axis[i], p_axis[j])`.
    pub values: Vec<Vec<f64>>,
}

impl WignerGrid {
    pub fn dx(&self) -> f64 {
        self.x_axis[1] - self.x_axis[0]
    }

    pub fn dp(&self) -> f64 {
        self.p_axis[1] - self.p_axis[0]
    }

    pub fn riemann_sum(&self) -> f64 {
        let s: f64 = self.values.iter().flatten().sum();
        s * self.dx() * self.dp()
    }

    /// `∫ W dp` at every `x` on the grid.
    pub fn x_marginal(&self) -> Vec<f64> {
        let dp = self.dp();
        self.values
            .iter()
            .map(|row| row.iter().sum::<f64>() * dp)
            .collect()
    }

    /// Largest value and its grid index.
    pub fn maximum(&self) -> (f64, usize, usize) {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for (i, row) in self.values.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if w > best.0 {
                    best = (w, i, j);
                }
            }
        }
        best
    }
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    for k in 1..=n {
        out[k] = out[k - 1] + (k as f64).ln();
    }
    out
}

/// Evaluates W at canonical `(x, p)`; the vacuum peaks at 1/π.
///
/// Uses `W_{mn} = (−1)^m/π √(m!/n!) (2α)^{n−m} e^{−2|α|²} L_m^{(n−m)}(4|α|²)`
/// for `m ≤ n`, `α = (x + ip)/√2`, with the prefactor in log form.
pub fn wigner_canonical(rho: &DensityMatrix, x: f64, p: f64) -> f64 {
    let lnf = ln_factorials(rho.dim());
    wigner_point(rho, &lnf, x, p)
}

fn wigner_point(rho: &DensityMatrix, lnf: &[f64], x: f64, p: f64) -> f64 {
    let d = rho.dim();
    let r2 = 0.5 * (x * x + p * p); // |α|²
    let y = 4.0 * r2;
    let ln_two_r = (4.0 * r2).sqrt().ln();
    let phi = p.atan2(x);
    let mut lag = vec![0.0; d];
    let mut total = 0.0;
    for k in 0..d {
        if k > 0 && r2 == 0.0 {
            break;
        }
        let count = d - k;
        let kf = k as f64;
        lag[0] = 1.0;
        if count > 1 {
            lag[1] = 1.0 + kf - y;
        }
        for m in 1..count.saturating_sub(1) {
            let mf = m as f64;
            lag[m + 1] = ((2.0 * mf + 1.0 + kf - y) * lag[m] - (mf + kf) * lag[m - 1]) / (mf + 1.0);
        }
        let rot = Complex64::from_polar(1.0, kf * phi);
        for m in 0..count {
            let n = m + k;
            let rho_mn = rho.get(m, n);
            if rho_mn.norm() == 0.0 {
                continue;
            }
            let ln_pref =
                0.5 * (lnf[m] - lnf[n]) + if k > 0 { kf * ln_two_r } else { 0.0 } - 2.0 * r2;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let mag = sign * ln_pref.exp() * lag[m];
            let term = (rho_mn * rot).re * mag;
            total += if k == 0 { term } else { 2.0 * term };
        }
    }
    total / PI
}

/// Wigner function on a shot-noise-unit grid. Values are rescaled so the
/// grid integrates to one in shot-noise area.
pub fn wigner(rho: &DensityMatrix, spec: &GridSpec, par: Parallelism) -> Result<WignerGrid> {
    if spec.points < MIN_GRID_POINTS {
        return Err(Error::GridTooCoarse(spec.points));
    }
    if !(spec.x_max > spec.x_min && spec.p_max > spec.p_min) {
        return Err(Error::InvalidInput("grid ranges must be increasing".into()));
    }
    let x_axis = GridSpec::axis(spec.x_min, spec.x_max, spec.points);
    let p_axis = GridSpec::axis(spec.p_min, spec.p_max, spec.points);
    let lnf = ln_factorials(rho.dim());
    let scale = SHOT_NOISE_AXIS_FACTOR;
    let values = par.map_indexed(x_axis.len(), |i| {
        p_axis
            .iter()
            .map(|&p| wigner_point(rho, &lnf, x_axis[i] / scale, p / scale) / (scale * scale))
            .collect()
    });
    Ok(WignerGrid {
        x_axis,
        p_axis,
        values,
    })
}

/// A level-set polyline in grid coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

impl Contour {
    /// Distance of each vertex from the origin.
    pub fn radii(&self) -> Vec<f64> {
        self.points.iter().map(|(x, p)| x.hypot(*p)).collect()
    }

    /// Largest |coordinate| reached along each axis.
    pub fn half_extents(&self) -> (f64, f64) {
        self.points.iter().fold((0.0, 0.0), |(ax, ap), (x, p)| {
            (ax.max(x.abs()), ap.max(p.abs()))
        })
    }

    pub fn contains(&self, x: f64, p: f64) -> bool {
        let pts = &self.points;
        let mut inside = false;
        let mut j = pts.len() - 1;
        for i in 0..pts.len() {
            let (xi, pi) = pts[i];
            let (xj, pj) = pts[j];
            if (pi > p) != (pj > p) && x < (xj - xi) * (p - pi) / (pj - pi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

/// Grid edge identity: horizontal edges run along x, vertical along p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum EdgeKey {
    AlongX(usize, usize),
    AlongP(usize, usize),
}

/// Marching squares with linear interpolation.
pub fn level_set(grid: &WignerGrid, level: f64) -> Vec<Contour> {
    let v = &grid.values;
    let (nx, np) = (grid.x_axis.len(), grid.p_axis.len());
    let point_on = |e: EdgeKey| -> (f64, f64) {
        let (a, b, pa, pb) = match e {
            EdgeKey::AlongX(i, j) => (
                v[i][j],
                v[i + 1][j],
                (grid.x_axis[i], grid.p_axis[j]),
                (grid.x_axis[i + 1], grid.p_axis[j]),
            ),
            EdgeKey::AlongP(i, j) => (
                v[i][j],
                v[i][j + 1],
                (grid.x_axis[i], grid.p_axis[j]),
                (grid.x_axis[i], grid.p_axis[j + 1]),
            ),
        };
        let t = (level - a) / (b - a);
        (pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1))
    };

    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..np - 1 {
            // corners counter-clockwise from (i,j)
            let c = [v[i][j], v[i + 1][j], v[i + 1][j + 1], v[i][j + 1]];
            let mask = c
                .iter()
                .enumerate()
                .fold(0u8, |m, (k, &w)| if w > level { m | (1 << k) } else { m });
            let bottom = EdgeKey::AlongX(i, j);
            let right = EdgeKey::AlongP(i + 1, j);
            let top = EdgeKey::AlongX(i, j + 1);
            let left = EdgeKey::AlongP(i, j);
            let center_above = c.iter().sum::<f64>() / 4.0 > level;
            match mask {
                0 | 15 => {}
                1 | 14 => segments.push((left, bottom)),
                2 | 13 => segments.push((bottom, right)),
                3 | 12 => segments.push((left, right)),
                4 | 11 => segments.push((right, top)),
                6 | 9 => segments.push((bottom, top)),
                7 | 8 => segments.push((left, top)),
                5 => {
                    if center_above {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    } else {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    }
                }
                10 => {
                    if center_above {
                        segments.push((left, bottom));
                        segments.push((right, top));
                    } else {
                        segments.push((left, top));
                        segments.push((bottom, right));
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    let mut incident: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, (a, b)) in segments.iter().enumerate() {
        incident.entry(*a).or_default().push(s);
        incident.entry(*b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut contours = Vec::new();
    // Open chains first start from edges with one incident segment.
    let mut starts: Vec<usize> = (0..segments.len())
        .filter(|&s| {
            let (a, b) = segments[s];
            incident[&a].len() == 1 || incident[&b].len() == 1
        })
        .collect();
    starts.extend(0..segments.len());
    for s0 in starts {
        if used[s0] {
            continue;
        }
        let (a, b) = segments[s0];
        let (first, mut cur) = if incident[&a].len() == 1 {
            (a, b)
        } else if incident[&b].len() == 1 {
            (b, a)
        } else {
            (a, b)
        };
        used[s0] = true;
        let mut keys = vec![first, cur];
        loop {
            let next = incident[&cur].iter().copied().find(|&s| !used[s]);
            match next {
                Some(s) => {
                    used[s] = true;
                    let (p, q) = segments[s];
                    cur = if p == cur { q } else { p };
                    keys.push(cur);
                }
                None => break,
            }
        }
        let closed = keys.len() > 2 && keys.first() == keys.last();
        if closed {
            keys.pop();
        }
        contours.push(Contour {
            points: keys.into_iter().map(point_on).collect(),
            closed,
        });
    }
    contours
}

/// The `W_max/e` level set around the grid maximum.
pub fn contour_1e(grid: &WignerGrid) -> Result<Contour> {
    let (w_max, i, j) = grid.maximum();
    if !(w_max > 0.0) {
        return Err(Error::NoContour);
    }
    let contours = level_set(grid, w_max / std::f64::consts::E);
    let peak = (grid.x_axis[i], grid.p_axis[j]);
    let around_peak = contours
        .iter()
        .filter(|c| c.closed && c.points.len() > 2 && c.contains(peak.0, peak.1))
        .max_by_key(|c| c.points.len());
    match around_peak {
        Some(c) => Ok(c.clone()),
        None => contours
            .into_iter()
            .max_by_key(|c| c.points.len())
            .ok_or(Error::NoContour),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::hermite_psi;
    use crate::quadrature;
    use nalgebra::DMatrix;

    /// Defining integral W(x,p) = (1/π) ∫ ⟨x+y|ρ|x−y⟩ e^{−2ipy} dy for the
    /// Hermitian operator c|m⟩⟨n| + c*|n⟩⟨m|.
    fn wigner_by_integral(m: usize, n: usize, c: Complex64, x: f64, p: f64) -> f64 {
        let r = quadrature::integrate(
            |y, out| {
                let k1 = hermite_psi(m, x + y) * hermite_psi(n, x - y);
                let k2 = hermite_psi(n, x + y) * hermite_psi(m, x - y);
                let ph = Complex64::from_polar(1.0, -2.0 * p * y);
                let v = if m == n {
                    c * k1 * ph
                } else {
                    (c * k1 + c.conj() * k2) * ph
                };
                out[0] = v.re;
            },
            -15.0,
            15.0,
            1,
            1e-12,
        );
        r[0] / PI
    }

    fn operator(m: usize, n: usize, c: Complex64, dim: usize) -> DensityMatrix {
        // Wraps a Hermitian (not necessarily valid) operator for kernel checks.
        let mut mat = DMatrix::zeros(dim, dim);
        mat[(m, n)] += c;
        if m != n {
            mat[(n, m)] += c.conj();
        }
        DensityMatrix::from_unnormalized_unchecked(mat)
    }

    #[test]
    fn vacuum_and_one_photon_at_origin() {
        assert!((wigner_canonical(&DensityMatrix::vacuum(3), 0.0, 0.0) - 1.0 / PI).abs() < 1e-15);
        assert!((wigner_canonical(&DensityMatrix::fock(1, 3), 0.0, 0.0) + 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn kernels_match_defining_integral() {
        let cases = [
            (0, 0, Complex64::new(1.0, 0.0)),
            (3, 3, Complex64::new(1.0, 0.0)),
            (0, 2, Complex64::new(0.7, 0.0)),
            (1, 3, Complex64::new(0.0, 0.5)),
            (2, 7, Complex64::new(0.3, -0.4)),
            (5, 6, Complex64::new(-0.2, 0.1)),
        ];
        for &(m, n, c) in &cases {
            let op = operator(m, n, c, 8);
            for &(x, p) in &[(0.0, 0.0), (0.4, -1.1), (-1.3, 0.8), (2.0, 1.5)] {
                let closed = wigner_canonical(&op, x, p);
                let direct = wigner_by_integral(m, n, c, x, p);
                assert!(
                    (closed - direct).abs() < 1e-10,
                    "({m},{n}) at ({x},{p}): {closed} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn high_photon_kernels_stay_finite() {
        let w = wigner_canonical(&operator(0, 53, Complex64::new(0.5, 0.0), 54), 9.0, -7.0);
        assert!(w.is_finite());
        let w = wigner_canonical(&DensityMatrix::fock(53, 54), 12.0, 3.0);
        assert!(w.is_finite());
    }

    #[test]
    fn vacuum_grid_normalization_and_contour() {
        let grid = wigner(
            &DensityMatrix::vacuum(4),
            &GridSpec::symmetric(6.0, 121),
            Parallelism::Sequential,
        )
        .unwrap();
        assert!((grid.riemann_sum() - 1.0).abs() < 1e-4);
        let c = contour_1e(&grid).unwrap();
        assert!(c.closed);
        let step = grid.dx();
        // shot-noise vacuum variance 1 → W falls to W_max/e at radius √2
        for r in c.radii() {
            assert!((r - 2f64.sqrt()).abs() <= 2.0 * step, "radius {r}");
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        let e = wigner(
            &DensityMatrix::vacuum(2),
            &GridSpec::symmetric(5.0, 31),
            Parallelism::Sequential,
        );
        assert_eq!(e.unwrap_err(), Error::GridTooCoarse(31));
    }

    #[test]
    fn zero_grid_has_no_contour() {
        let grid = WignerGrid {
            x_axis: (0..40).map(|i| i as f64).collect(),
            p_axis: (0..40).map(|i| i as f64).collect(),
            values: vec![vec![0.0; 40]; 40],
        };
        assert_eq!(contour_1e(&grid).unwrap_err(), Error::NoContour);
    }

    #[test]
    fn parallel_grid_is_bitwise_sequential() {
        let rho = DensityMatrix::maximally_mixed(6).rotated(0.2);
        let spec = GridSpec::symmetric(5.0, 48);
        let a = wigner(&rho, &spec, Parallelism::Sequential).unwrap();
        let b = wigner(&rho, &spec, Parallelism::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
