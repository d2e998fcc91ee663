//! Probabilistic isosurface crossing for lossy data.
//!
//! Compression errors near the isovalue are modelled as i.i.d. Gaussian
//! noise `N(mu, sigma^2)`. For a cell with corner values `v_i` let
//! `q_i = P(v_i + e < iso)`. The isosurface crosses the cell unless all
//! corners lie on the same side:
//!
//! ```text
//! p = 1 - prod(q_i) - prod(1 - q_i)
//! ```

use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::grid::{linear_index, min_max, Volume};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Fitted error distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorModel {
    pub mu: f64,
    pub sigma2: f64,
    pub isovalue: f64,
    /// Window half-width as a fraction of the value range, after widening.
    pub window: f64,
    pub n_samples: usize,
    /// True when no window held enough samples and every sample was used.
    pub fallback: bool,
}

impl ErrorModel {
    pub fn new(mu: f64, sigma2: f64, isovalue: f64) -> Result<Self> {
        if !(mu.is_finite() && isovalue.is_finite() && sigma2.is_finite() && sigma2 >= 0.0) {
            bail!(Parameter, "invalid error model mu={mu} sigma2={sigma2} iso={isovalue}");
        }
        Ok(Self {
            mu,
            sigma2,
            isovalue,
            window: 0.0,
            n_samples: 0,
            fallback: false,
        })
    }

    /// `P(v + e < iso)`.
    pub fn below(&self, v: f64) -> f64 {
        let shifted = v + self.mu;
        if self.sigma2 == 0.0 {
            return if shifted < self.isovalue { 1.0 } else { 0.0 };
        }
        normal_cdf((self.isovalue - shifted) / libm::sqrt(self.sigma2))
    }
}

/// Pointwise `decomp - orig`.
pub fn sample_errors(orig: &[f64], decomp: &[f64]) -> Result<Vec<f64>> {
    if orig.len() != decomp.len() {
        bail!(Shape, "{} original values against {} decompressed", orig.len(), decomp.len());
    }
    Ok(decomp.iter().zip(orig).map(|(d, o)| d - o).collect())
}

pub const WINDOW_DOUBLINGS: u32 = 4;

/// Fits mean and unbiased variance of `errors` restricted to samples whose
/// `values` lie within `window * range` of the isovalue. The window doubles
/// up to [`WINDOW_DOUBLINGS`] times while fewer than two samples qualify,
/// then every sample is used and `fallback` is set.
pub fn fit_model(errors: &[f64], values: &[f64], isovalue: f64, window: f64) -> Result<ErrorModel> {
    if errors.len() != values.len() {
        bail!(Shape, "{} errors against {} values", errors.len(), values.len());
    }
    if !(window > 0.0 && window.is_finite()) || !isovalue.is_finite() {
        bail!(Parameter, "window must be positive and the isovalue finite");
    }
    if errors.len() < 2 {
        bail!(Sampling, "need at least two error samples, got {}", errors.len());
    }
    let (lo, hi) = min_max(values);
    let range = hi - lo;
    let mut w = window;
    for _ in 0..=WINDOW_DOUBLINGS {
        let sel: Vec<f64> = errors
            .iter()
            .zip(values)
            .filter(|&(_, v)| (v - isovalue).abs() <= w * range)
            .map(|(e, _)| *e)
            .collect();
        if sel.len() >= 2 {
            return Ok(moments(&sel, isovalue, w, false));
        }
        w *= 2.0;
    }
    Ok(moments(errors, isovalue, w / 2.0, true))
}

fn moments(e: &[f64], isovalue: f64, window: f64, fallback: bool) -> ErrorModel {
    let n = e.len() as f64;
    let mu = e.iter().sum::<f64>() / n;
    let sigma2 = e.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0);
    ErrorModel {
        mu,
        sigma2,
        isovalue,
        window,
        n_samples: e.len(),
        fallback,
    }
}

/// Crossing probability of one cell. Corner order does not matter.
pub fn cell_crossing_probability(corners: &[f64; 8], model: &ErrorModel) -> f64 {
    let mut all_below = 1.0;
    let mut all_above = 1.0;
    for &v in corners {
        let q = model.below(v);
        all_below *= q;
        all_above *= 1.0 - q;
    }
    (1.0 - all_below - all_above).clamp(0.0, 1.0)
}

/// Marching-cubes case index: bit `i` set when corner `i` is below the
/// isovalue. Cases 0 and 255 do not cross.
pub fn cube_case(corners: &[f64; 8], isovalue: f64) -> u8 {
    corners
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &v)| if v < isovalue { acc | (1 << i) } else { acc })
}

/// Per-cell values over a grid of `(nx-1, ny-1, nz-1)` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    pub dims: [usize; 3],
    pub p: Vec<f64>,
}

fn cell_corners(v: &Volume, x: usize, y: usize, z: usize) -> [f64; 8] {
    [
        v.get(x, y, z),
        v.get(x + 1, y, z),
        v.get(x + 1, y + 1, z),
        v.get(x, y + 1, z),
        v.get(x, y, z + 1),
        v.get(x + 1, y, z + 1),
        v.get(x + 1, y + 1, z + 1),
        v.get(x, y + 1, z + 1),
    ]
}

fn cell_dims(v: &Volume) -> Result<[usize; 3]> {
    let d = v.dims();
    if d.iter().any(|&n| n < 2) {
        bail!(Dimension, "need at least two samples per axis for cells, got {d:?}");
    }
    Ok(d.map(|n| n - 1))
}

/// Crossing probability for every cell of `decomp`.
pub fn probability_field(decomp: &Volume, model: &ErrorModel) -> Result<ProbabilityField> {
    let dims = cell_dims(decomp)?;
    let mut p = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                p.push(cell_crossing_probability(&cell_corners(decomp, x, y, z), model));
            }
        }
    }
    Ok(ProbabilityField { dims, p })
}

/// Deterministic crossing mask (`1.0` where the isosurface crosses).
pub fn crossing_mask(v: &Volume, isovalue: f64) -> Result<ProbabilityField> {
    let dims = cell_dims(v)?;
    let mut p = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let case = cube_case(&cell_corners(v, x, y, z), isovalue);
                p.push(if case == 0 || case == 255 { 0.0 } else { 1.0 });
            }
        }
    }
    Ok(ProbabilityField { dims, p })
}

impl ProbabilityField {
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.p[linear_index(self.dims, x, y, z)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn model(mu: f64, sigma2: f64, iso: f64) -> ErrorModel {
        ErrorModel::new(mu, sigma2, iso).unwrap()
    }

    #[test]
    fn cdf_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-1.959_963_984_540_054) - 0.025).abs() < 1e-15);
        assert!(normal_cdf(-40.0) >= 0.0);
    }

    #[test]
    fn straddling_corners_give_one_half() {
        let corners = [-1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        // With sigma -> 0 every corner is decided; straddling means certain.
        assert_eq!(cell_crossing_probability(&corners, &model(0.0, 0.0, 0.0)), 1.0);
        // Corners exactly at the isovalue: q = 1/2, p = 1 - 2 / 256.
        let at_iso = [0.0; 8];
        let p = cell_crossing_probability(&at_iso, &model(0.0, 1.0, 0.0));
        assert!((p - (1.0 - 2.0 / 256.0)).abs() < 1e-15);
    }

    #[test]
    fn far_from_isovalue_is_tiny() {
        let corners = [10.0; 8];
        let p = cell_crossing_probability(&corners, &model(0.0, 1.0, 0.0));
        assert!(p < 1e-12);
        let p = cell_crossing_probability(&[-10.0; 8], &model(0.0, 1.0, 0.0));
        assert!(p < 1e-12);
    }

    #[test]
    fn zero_variance_matches_indicator() {
        let v = Volume::from_fn([6, 5, 4], |x, y, z| (x as f64 - 2.5) * (y as f64 - 1.7) + z as f64 * 0.3).unwrap();
        let field = probability_field(&v, &model(0.0, 0.0, 0.4)).unwrap();
        let mask = crossing_mask(&v, 0.4).unwrap();
        assert_eq!(field, mask);
    }

    #[test]
    fn translation_invariance() {
        let corners = [0.25, -0.5, 1.0, 0.75, -0.25, 0.5, 0.0, 1.25];
        let m = model(0.125, 0.5, 0.3125);
        let p0 = cell_crossing_probability(&corners, &m);
        for c in [1.0, -4.0, 64.0] {
            let shifted = corners.map(|v| v + c);
            let p1 = cell_crossing_probability(&shifted, &model(0.125, 0.5, 0.3125 + c));
            assert!((p0 - p1).abs() < 1e-12, "{p0} {p1}");
        }
    }

    #[test]
    fn matches_monte_carlo() {
        let corners = [0.1, -0.2, 0.3, 0.05, -0.15, 0.25, 0.0, 0.4];
        let m = model(0.02, 0.04, 0.1);
        let p = cell_crossing_probability(&corners, &m);
        let normal = Normal::new(m.mu, libm::sqrt(m.sigma2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let trials = 200_000;
        let mut hits = 0;
        for _ in 0..trials {
            let case = cube_case(&corners.map(|v| v + normal.sample(&mut rng)), m.isovalue);
            if case != 0 && case != 255 {
                hits += 1;
            }
        }
        let est = f64::from(hits) / f64::from(trials);
        let se = libm::sqrt(p * (1.0 - p) / f64::from(trials));
        assert!((est - p).abs() < 5.0 * se + 1e-4, "{est} vs {p}");
    }

    #[test]
    fn fit_window_and_fallback() {
        let values: Vec<f64> = (0..100).map(f64::from).collect();
        let errors: Vec<f64> = values.iter().map(|v| if *v < 50.0 { 0.1 } else { -0.1 }).collect();
        // 5% of a range of 99 around 20 keeps 16..=24, all positive errors.
        let m = fit_model(&errors, &values, 20.0, 0.05).unwrap();
        assert!(!m.fallback);
        assert!((m.mu - 0.1).abs() < 1e-15);
        assert!(m.sigma2 < 1e-30);
        assert_eq!(m.n_samples, 9);
        // An isovalue far outside the data forces the fallback.
        let m = fit_model(&errors, &values, 1e6, 0.01).unwrap();
        assert!(m.fallback);
        assert_eq!(m.n_samples, 100);
        assert!(m.mu.abs() < 1e-15);
        // Unbiased: 50 at +0.1, 50 at -0.1, sum of squares 1.0 over 99.
        assert!((m.sigma2 - 1.0 / 99.0).abs() < 1e-15);
    }

    #[test]
    fn fit_widens_window() {
        let values = [0.0, 10.0, 10.5, 100.0];
        let errors = [1.0, 2.0, 4.0, 8.0];
        // Window 0.001 * 100 = 0.1 holds only 10.0; doubling to 0.8 reaches 10.5.
        let m = fit_model(&errors, &values, 10.0, 0.001).unwrap();
        assert!(!m.fallback);
        assert_eq!(m.n_samples, 2);
        assert!((m.mu - 3.0).abs() < 1e-15);
        assert!((m.window - 0.008).abs() < 1e-15);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_model(&[1.0], &[1.0], 0.0, 0.1).is_err());
        assert!(fit_model(&[1.0, 2.0], &[1.0], 0.0, 0.1).is_err());
        assert!(fit_model(&[1.0, 2.0], &[1.0, 2.0], 0.0, 0.0).is_err());
        assert!(sample_errors(&[1.0], &[]).is_err());
        assert!(ErrorModel::new(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn field_shape() {
        let v = Volume::filled([3, 4, 5], 1.0).unwrap();
        let f = probability_field(&v, &model(0.0, 1.0, 1.0)).unwrap();
        assert_eq!(f.dims, [2, 3, 4]);
        assert_eq!(f.p.len(), 24);
        assert!(probability_field(&Volume::filled([1, 4, 4], 0.0).unwrap(), &model(0.0, 1.0, 0.0)).is_err());
    }
}
