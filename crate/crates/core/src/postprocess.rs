//! Error-bounded Bezier smoothing across compression-block boundaries.
//!
//! Along each axis, the last point `d4` of every block that has a following
//! block is replaced by the midpoint of the quadratic Bezier curve through
//! `d3` (its in-block neighbour), `d4` (control point) and `d5` (first point
//! of the next block), clamped to `d4 +- a eb`. The clamp keeps the result
//! within `(1 + a) eb` of the original data.
//!
//! The intensity `a` is picked per axis from a small candidate set by
//! evaluating every candidate on sampled regions where the originals are
//! known, one axis at a time (x, then y, then z), keeping the candidate with
//! the smallest L2 error.

use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};
use crate::grid::{linear_index, Volume};

/// Candidate set tuned to the codec family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum IntensityFamily {
    /// 0.05, 0.10, ..., 0.50.
    SzLike,
    /// 0.005, 0.010, ..., 0.050; ZFP-style codecs undershoot their bound.
    ZfpLike,
}

impl IntensityFamily {
    pub fn candidates(self) -> Vec<f64> {
        let step = match self {
            IntensityFamily::SzLike => 0.05,
            IntensityFamily::ZfpLike => 0.005,
        };
        (1..=10).map(|k| f64::from(k) * step).collect()
    }

    pub fn id(self) -> u8 {
        match self {
            IntensityFamily::SzLike => 1,
            IntensityFamily::ZfpLike => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Option<Self>> {
        match id {
            0 => Ok(None),
            1 => Ok(Some(IntensityFamily::SzLike)),
            2 => Ok(Some(IntensityFamily::ZfpLike)),
            _ => bail!(Format, "unknown intensity family {id}"),
        }
    }
}

/// Chosen per-axis intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityConfig {
    pub family: IntensityFamily,
    pub candidates: Vec<f64>,
    /// `(a_x, a_y, a_z)`, each in `(0, 1]`.
    pub chosen: [f64; 3],
}

impl IntensityConfig {
    /// Same intensity on every axis.
    pub fn fixed(family: IntensityFamily, a: f64) -> Self {
        Self {
            family,
            candidates: family.candidates(),
            chosen: [a; 3],
        }
    }

    /// Smallest candidate on every axis.
    pub fn gentlest(family: IntensityFamily) -> Self {
        let c = family.candidates();
        Self {
            family,
            chosen: [c[0]; 3],
            candidates: c,
        }
    }
}

/// `B(0.5)` of the quadratic Bezier curve with endpoints `d3`, `d5` and
/// control point `d4`.
#[inline]
pub fn bezier_mid(d3: f64, d4: f64, d5: f64) -> f64 {
    0.25 * d3 + 0.5 * d4 + 0.25 * d5
}

/// Clamps `b_mid` to `d4 +- a eb`. The result satisfies
/// `|r - d4| <= a eb` as evaluated in floating point.
#[inline]
pub fn clamp_to_band(b_mid: f64, d4: f64, a: f64, eb: f64) -> f64 {
    let w = a * eb;
    let mut r = b_mid.min(d4 + w).max(d4 - w);
    while (r - d4).abs() > w {
        r = if r > d4 { r.next_down() } else { r.next_up() };
    }
    r
}

fn check_params(eb: f64, blocksize: usize, a: &[f64]) -> Result<()> {
    if !(eb > 0.0 && eb.is_finite()) {
        bail!(Parameter, "error bound must be positive, got {eb}");
    }
    if blocksize < 2 {
        bail!(Shape, "block size {blocksize} has no in-block neighbour");
    }
    if let Some(x) = a.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        bail!(Parameter, "intensity {x} outside (0, 1]");
    }
    Ok(())
}

/// One axis pass in place; `anchor` holds the decompressed values the band
/// is centred on. Returns the number of boundary points visited. With a
/// mask, a point is adjusted only if `d3`, `d4` and `d5` are all covered.
#[allow(clippy::too_many_arguments)]
fn axis_pass(
    values: &mut [f64],
    anchor: &[f64],
    dims: [usize; 3],
    axis: usize,
    eb: f64,
    blocksize: usize,
    a: f64,
    covered: Option<&[bool]>,
) -> usize {
    let n = dims[axis];
    let step = [1, dims[0], dims[0] * dims[1]][axis];
    let (o1, o2) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut visited = 0;
    for j in 0..dims[o2] {
        for i in 0..dims[o1] {
            let mut c = [0; 3];
            c[o1] = i;
            c[o2] = j;
            let base = linear_index(dims, c[0], c[1], c[2]);
            let mut p = blocksize - 1;
            while p + 1 < n {
                let i3 = base + (p - 1) * step;
                let i4 = base + p * step;
                let i5 = i4 + step;
                let ok = covered.is_none_or(|m| m[i3] && m[i4] && m[i5]);
                if ok {
                    let b = bezier_mid(values[i3], values[i4], values[i5]);
                    values[i4] = clamp_to_band(b, anchor[i4], a, eb);
                    visited += 1;
                }
                p += blocksize;
            }
        }
    }
    visited
}

/// Smooths block boundaries of a decompressed volume, axes x, y, z in turn.
pub fn apply_postprocess(decomp: &Volume, eb: f64, blocksize: usize, cfg: &IntensityConfig) -> Result<Volume> {
    apply_with_mask(decomp, None, eb, blocksize, cfg.chosen)
}

/// As [`apply_postprocess`], but only across boundaries whose three points
/// are all flagged in `covered` (used for sparse resolution levels).
pub fn apply_postprocess_masked(
    decomp: &Volume,
    covered: &[bool],
    eb: f64,
    blocksize: usize,
    chosen: [f64; 3],
) -> Result<Volume> {
    if covered.len() != decomp.len() {
        bail!(Shape, "mask of {} cells for a volume of {}", covered.len(), decomp.len());
    }
    apply_with_mask(decomp, Some(covered), eb, blocksize, chosen)
}

fn apply_with_mask(
    decomp: &Volume,
    covered: Option<&[bool]>,
    eb: f64,
    blocksize: usize,
    chosen: [f64; 3],
) -> Result<Volume> {
    check_params(eb, blocksize, &chosen)?;
    let dims = decomp.dims();
    let mut values = decomp.values().to_vec();
    for (axis, &a) in chosen.iter().enumerate() {
        axis_pass(&mut values, decomp.values(), dims, axis, eb, blocksize, a, covered);
    }
    Volume::new(dims, values)
}

/// Number of boundary points one axis pass visits on an unmasked volume.
pub fn boundary_points(dims: [usize; 3], axis: usize, blocksize: usize) -> usize {
    let cross: usize = dims.iter().enumerate().filter(|&(a, _)| a != axis).map(|(_, &d)| d).product();
    let interior = if dims[axis] == 0 { 0 } else { (dims[axis] - 1) / blocksize };
    interior * cross
}

/// An axis-aligned sampled region. `size` includes a one-cell halo on the
/// high side where the volume allows it; statistics use only the `core`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub origin: [usize; 3],
    pub core: [usize; 3],
    pub size: [usize; 3],
}

/// `i^3` block-aligned regions of edge `j * blocksize`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub i: usize,
    pub j: usize,
    pub blocksize: usize,
    pub seed: u64,
    pub regions: Vec<Region>,
    pub achieved_rate: f64,
}

pub const MAX_SAMPLING_RATE: f64 = 0.05;

/// Draws a sampling plan. `j` is the preferred region multiplier; smaller
/// multipliers are tried when no region of that size fits. With `covered`,
/// only regions whose core is fully covered are eligible and the rate is
/// measured against the covered cell count.
pub fn plan_sampling(
    dims: [usize; 3],
    blocksize: usize,
    j: usize,
    max_rate: f64,
    seed: u64,
    covered: Option<&[bool]>,
) -> Result<SamplingPlan> {
    if blocksize == 0 || j == 0 {
        bail!(Parameter, "block size and region multiplier must be positive");
    }
    if !(max_rate > 0.0 && max_rate <= MAX_SAMPLING_RATE) {
        bail!(Parameter, "sampling rate must be in (0, {MAX_SAMPLING_RATE}], got {max_rate}");
    }
    let population = match covered {
        Some(m) => m.iter().filter(|&&c| c).count(),
        None => dims.iter().product(),
    };
    for j in (1..=j).rev() {
        let edge = j * blocksize;
        let slots_per_axis = dims.map(|d| d / edge);
        let slots: Vec<[usize; 3]> = (0..slots_per_axis.iter().product())
            .map(|s| {
                let (x, y, z) = crate::grid::coords_of(slots_per_axis, s);
                [x * edge, y * edge, z * edge]
            })
            .filter(|o| covered.is_none_or(|m| region_covered(m, dims, *o, edge)))
            .collect();
        let cube = edge * edge * edge;
        let budget = max_rate * population as f64;
        let mut i = 0;
        while ((i + 1) * (i + 1) * (i + 1) * cube) as f64 <= budget && (i + 1).pow(3) <= slots.len() {
            i += 1;
        }
        if i == 0 {
            continue;
        }
        let count = i * i * i;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, slots.len(), count).into_vec();
        picked.sort_unstable();
        let regions = picked
            .into_iter()
            .map(|s| {
                let origin = slots[s];
                let size = [0, 1, 2].map(|a| (origin[a] + edge + 1).min(dims[a]) - origin[a]);
                Region {
                    origin,
                    core: [edge; 3],
                    size,
                }
            })
            .collect();
        return Ok(SamplingPlan {
            i,
            j,
            blocksize,
            seed,
            regions,
            achieved_rate: (count * cube) as f64 / population as f64,
        });
    }
    bail!(
        Sampling,
        "no block-aligned region fits a {max_rate} sampling budget in {dims:?}"
    )
}

fn region_covered(mask: &[bool], dims: [usize; 3], o: [usize; 3], edge: usize) -> bool {
    (o[2]..o[2] + edge).all(|z| {
        (o[1]..o[1] + edge).all(|y| {
            let s = linear_index(dims, o[0], y, z);
            mask[s..s + edge].iter().all(|&c| c)
        })
    })
}

/// Original and decompressed values over one sampled region.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub region: Region,
    pub orig: Volume,
    pub decomp: Volume,
    pub covered: Option<Vec<bool>>,
}

impl SamplePair {
    /// Squared error over the core cells of `values` against the original.
    fn core_sq_error(&self, values: &[f64]) -> f64 {
        let dims = self.region.size;
        let core = self.region.core;
        let mut sum = 0.0;
        for z in 0..core[2] {
            for y in 0..core[1] {
                let s = linear_index(dims, 0, y, z);
                for x in 0..core[0] {
                    let d = values[s + x] - self.orig.values()[s + x];
                    sum += d * d;
                }
            }
        }
        sum
    }
}

/// Cuts the plan's regions out of both volumes.
pub fn extract_samples(
    plan: &SamplingPlan,
    orig: &Volume,
    decomp: &Volume,
    covered: Option<&[bool]>,
) -> Result<Vec<SamplePair>> {
    if orig.dims() != decomp.dims() {
        bail!(Shape, "original {:?} and decompressed {:?} differ", orig.dims(), decomp.dims());
    }
    plan.regions
        .iter()
        .map(|r| {
            let mask = covered.map(|m| {
                let mut out = Vec::with_capacity(r.size.iter().product());
                for z in r.origin[2]..r.origin[2] + r.size[2] {
                    for y in r.origin[1]..r.origin[1] + r.size[1] {
                        let s = linear_index(orig.dims(), r.origin[0], y, z);
                        out.extend_from_slice(&m[s..s + r.size[0]]);
                    }
                }
                out
            });
            Ok(SamplePair {
                region: *r,
                orig: orig.sub_volume(r.origin, r.size)?,
                decomp: decomp.sub_volume(r.origin, r.size)?,
                covered: mask,
            })
        })
        .collect()
}

/// Coordinate-descent choice of `(a_x, a_y, a_z)` minimising the sampled
/// L2 error. Ties go to the smaller candidate.
pub fn select_intensity(
    samples: &[SamplePair],
    eb: f64,
    blocksize: usize,
    family: IntensityFamily,
) -> Result<IntensityConfig> {
    if samples.is_empty() {
        bail!(Sampling, "no sampled regions to evaluate intensities on");
    }
    let candidates = family.candidates();
    check_params(eb, blocksize, &candidates)?;
    let mut state: Vec<Vec<f64>> = samples.iter().map(|s| s.decomp.values().to_vec()).collect();
    let mut chosen = [candidates[0]; 3];
    for axis in 0..3 {
        let mut best: Option<(f64, Vec<Vec<f64>>, f64)> = None;
        for &a in &candidates {
            let mut trial = state.clone();
            let mut err = 0.0;
            for (s, vals) in samples.iter().zip(trial.iter_mut()) {
                axis_pass(vals, s.decomp.values(), s.region.size, axis, eb, blocksize, a, s.covered.as_deref());
                err += s.core_sq_error(vals);
            }
            if best.as_ref().is_none_or(|b| err < b.0) {
                best = Some((err, trial, a));
            }
        }
        let (_, next, a) = best.unwrap();
        state = next;
        chosen[axis] = a;
    }
    Ok(IntensityConfig {
        family,
        candidates,
        chosen,
    })
}

/// Empirical view of the trade-off the intensity search optimises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainModel {
    /// Share of boundary points where the Bezier midpoint moves toward the
    /// original value.
    pub hit_rate: f64,
    /// Sampled L2 error before and after post-processing.
    pub err_before: f64,
    pub err_after: f64,
}

/// Measures [`GainModel`] on samples for the given intensities.
pub fn measure_gain(samples: &[SamplePair], eb: f64, blocksize: usize, chosen: [f64; 3]) -> Result<GainModel> {
    check_params(eb, blocksize, &chosen)?;
    let (mut hits, mut total) = (0usize, 0usize);
    let (mut before, mut after) = (0.0, 0.0);
    for s in samples {
        let dims = s.region.size;
        let vals = s.decomp.values();
        let orig = s.orig.values();
        before += s.core_sq_error(vals);
        let mut out = vals.to_vec();
        for (axis, &a) in chosen.iter().enumerate() {
            let step = [1, dims[0], dims[0] * dims[1]][axis];
            for idx in 0..out.len() {
                let c = crate::grid::coords_of(dims, idx);
                let p = [c.0, c.1, c.2][axis];
                if p == 0 || (p + 1) % blocksize != 0 || p + 1 >= dims[axis] {
                    continue;
                }
                let b = bezier_mid(out[idx - step], out[idx], out[idx + step]);
                if (b - out[idx]) * (orig[idx] - out[idx]) > 0.0 {
                    hits += 1;
                }
                total += 1;
            }
            axis_pass(&mut out, vals, dims, axis, eb, blocksize, a, s.covered.as_deref());
        }
        after += s.core_sq_error(&out);
    }
    Ok(GainModel {
        hit_rate: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
        err_before: libm::sqrt(before),
        err_after: libm::sqrt(after),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn candidate_sets() {
        let sz = IntensityFamily::SzLike.candidates();
        assert_eq!(sz.len(), 10);
        assert!((sz[0] - 0.05).abs() < 1e-15 && (sz[9] - 0.5).abs() < 1e-15);
        let zfp = IntensityFamily::ZfpLike.candidates();
        assert!((zfp[0] - 0.005).abs() < 1e-15 && (zfp[9] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn clamp_is_exact_at_large_magnitude() {
        let d4 = 1000.0 + 1.0 / 3.0;
        for k in 1..200 {
            let eb = 1e-7 * f64::from(k);
            let r = clamp_to_band(d4 + 1.0, d4, 0.35, eb);
            assert!((r - d4).abs() <= 0.35 * eb);
            let r = clamp_to_band(d4 - 1.0, d4, 0.35, eb);
            assert!((r - d4).abs() <= 0.35 * eb);
        }
    }

    #[test]
    fn bezier_examples() {
        assert_eq!(bezier_mid(0.0, 0.0, 0.0), 0.0);
        assert_eq!(bezier_mid(0.0, 1.0, 0.0), 0.5);
        assert_eq!(bezier_mid(1.0, 2.0, 3.0), 2.0);
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_to_band(1.05, 1.0, 1.0, 0.2), 1.05);
        assert!((clamp_to_band(1.3, 1.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clamp_to_band(0.1, 1.0, 1.0, 0.2) - 0.8).abs() < 1e-15);
        assert!((clamp_to_band(1.3, 1.0, 0.5, 0.4) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn line_matches_hand_computation() {
        // One x-line of 12 values in blocks of 4. Boundaries at p = 3 and 7.
        let vals: Vec<f64> = vec![0.0, 0.0, 0.0, 1.0, 3.0, 3.0, 3.0, 3.0, 2.0, 2.0, 2.0, 2.0];
        let v = Volume::new([12, 1, 1], vals.clone()).unwrap();
        let cfg = IntensityConfig::fixed(IntensityFamily::SzLike, 0.5);
        let out = apply_postprocess(&v, 1.0, 4, &cfg).unwrap();
        let mut expect = vals;
        // p = 3: B = 0.25 * 0 + 0.5 * 1 + 0.25 * 3 = 1.25, within 1 +- 0.5.
        expect[3] = 1.25;
        // p = 7: B = 0.25 * 3 + 0.5 * 3 + 0.25 * 2 = 2.75, within 3 +- 0.5.
        expect[7] = 2.75;
        assert_eq!(out.values(), &expect[..]);
        // Smaller band clamps p = 7 to 3 - 0.1.
        let out = apply_postprocess(&v, 1.0, 4, &IntensityConfig::fixed(IntensityFamily::SzLike, 0.1)).unwrap();
        assert!((out.values()[7] - 2.9).abs() < 1e-15);
        assert!((out.values()[3] - 1.1).abs() < 1e-15);
    }

    #[test]
    fn constant_field_is_untouched() {
        let v = Volume::filled([8, 8, 8], 1.5).unwrap();
        let out = apply_postprocess(&v, 0.1, 4, &IntensityConfig::gentlest(IntensityFamily::SzLike)).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn only_boundary_points_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = Volume::from_fn([9, 8, 7], |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
        let out = apply_postprocess(&v, 0.3, 4, &IntensityConfig::fixed(IntensityFamily::SzLike, 0.5)).unwrap();
        for z in 0..7 {
            for y in 0..8 {
                for x in 0..9 {
                    let on_boundary = |p: usize, n: usize| (p + 1) % 4 == 0 && p + 1 < n;
                    let passes = [on_boundary(x, 9), on_boundary(y, 8), on_boundary(z, 7)]
                        .iter()
                        .filter(|&&b| b)
                        .count();
                    if passes == 0 {
                        assert_eq!(out.get(x, y, z), v.get(x, y, z));
                    }
                    let band = if passes == 0 { 0.0 } else { 0.5 * 0.3 };
                    assert!((out.get(x, y, z) - v.get(x, y, z)).abs() <= band + 1e-15);
                }
            }
        }
        let mut vals = v.values().to_vec();
        assert_eq!(axis_pass(&mut vals, v.values(), v.dims(), 0, 0.3, 4, 0.5, None), boundary_points(v.dims(), 0, 4));
        assert_eq!(boundary_points([9, 8, 7], 0, 4), 2 * 56);
        assert_eq!(boundary_points([9, 8, 7], 2, 4), 72);
    }

    #[test]
    fn masked_pass_skips_uncovered() {
        let v = Volume::from_fn([8, 1, 1], |x, _, _| x as f64).unwrap();
        let mut covered = vec![true; 8];
        covered[4] = false;
        let out = apply_postprocess_masked(&v, &covered, 1.0, 4, [1.0; 3]).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn bad_parameters() {
        let v = Volume::filled([4, 4, 4], 0.0).unwrap();
        assert!(matches!(
            apply_postprocess(&v, 1.0, 1, &IntensityConfig::fixed(IntensityFamily::SzLike, 0.5)),
            Err(crate::Error::Shape(_))
        ));
        assert!(apply_postprocess(&v, 1.0, 4, &IntensityConfig::fixed(IntensityFamily::SzLike, 1.5)).is_err());
        assert!(apply_postprocess(&v, 0.0, 4, &IntensityConfig::fixed(IntensityFamily::SzLike, 0.5)).is_err());
    }

    #[test]
    fn sampling_plan_respects_budget() {
        let plan = plan_sampling([64, 64, 64], 4, 2, MAX_SAMPLING_RATE, 9, None).unwrap();
        assert_eq!(plan.i, 2);
        assert_eq!(plan.regions.len(), 8);
        assert!(plan.achieved_rate <= MAX_SAMPLING_RATE);
        for r in &plan.regions {
            assert!(r.origin.iter().all(|o| o % 4 == 0));
            for a in 0..3 {
                let expect = if r.origin[a] + 8 < 64 { 9 } else { 8 };
                assert_eq!(r.size[a], expect);
            }
        }
        let again = plan_sampling([64, 64, 64], 4, 2, MAX_SAMPLING_RATE, 9, None).unwrap();
        assert_eq!(plan, again);
        // Too small for j = 2, falls back to single-block regions.
        let small = plan_sampling([16, 16, 16], 4, 2, MAX_SAMPLING_RATE, 1, None).unwrap();
        assert_eq!(small.j, 1);
        assert!(plan_sampling([8, 8, 8], 4, 2, MAX_SAMPLING_RATE, 1, None).is_err());
        assert!(plan_sampling([64; 3], 4, 2, 0.2, 1, None).is_err());
    }

    /// Piecewise-linear ramp reconstructed as per-block constants: the
    /// Bezier midpoint always moves toward the original.
    #[test]
    fn monotone_case_picks_largest() {
        let dims = [32, 32, 32];
        let orig = Volume::from_fn(dims, |x, y, z| (x + y + z) as f64).unwrap();
        let decomp = Volume::from_fn(dims, |x, y, z| ((x / 4) * 4 + (y / 4) * 4 + (z / 4) * 4) as f64 + 1.5).unwrap();
        // eb covers the 3 * 1.5 worst error; boundary gain exceeds a_max * eb.
        let eb = 1.5;
        let plan = plan_sampling(dims, 4, 2, MAX_SAMPLING_RATE, 3, None).unwrap();
        let samples = extract_samples(&plan, &orig, &decomp, None).unwrap();
        let cfg = select_intensity(&samples, eb, 4, IntensityFamily::SzLike).unwrap();
        assert_eq!(cfg.chosen, [0.5; 3]);
    }

    /// Original has jumps exactly at block boundaries, decomp matches it
    /// up to a small offset, so smoothing always hurts.
    #[test]
    fn adversarial_case_picks_smallest() {
        let dims = [32, 32, 32];
        let orig = Volume::from_fn(dims, |x, y, z| if (x / 4 + y / 4 + z / 4) % 2 == 0 { 0.0 } else { 10.0 }).unwrap();
        let decomp = Volume::new(dims, orig.values().iter().map(|v| v + 0.01).collect()).unwrap();
        let plan = plan_sampling(dims, 4, 2, MAX_SAMPLING_RATE, 3, None).unwrap();
        let samples = extract_samples(&plan, &orig, &decomp, None).unwrap();
        let cfg = select_intensity(&samples, 1.0, 4, IntensityFamily::SzLike).unwrap();
        assert_eq!(cfg.chosen, [0.05; 3]);
        let gain = measure_gain(&samples, 1.0, 4, cfg.chosen).unwrap();
        assert!(gain.hit_rate < 0.6);
        assert!(gain.err_after >= gain.err_before);
    }

    #[test]
    fn lossless_input_ties_to_smallest() {
        let dims = [32, 32, 32];
        let orig = Volume::from_fn(dims, |x, y, z| (x * y + z) as f64).unwrap();
        let plan = plan_sampling(dims, 4, 2, MAX_SAMPLING_RATE, 3, None).unwrap();
        let samples = extract_samples(&plan, &orig, &orig, None).unwrap();
        // Every candidate moves boundary points away from the exact data;
        // a curved field still has at least one zero-change tie per axis.
        let cfg = select_intensity(&samples, 1e-9, 4, IntensityFamily::SzLike).unwrap();
        assert_eq!(cfg.chosen, [0.05; 3]);
    }

    #[test]
    fn empty_samples_error() {
        assert!(matches!(
            select_intensity(&[], 1.0, 4, IntensityFamily::SzLike),
            Err(crate::Error::Sampling(_))
        ));
    }
}
