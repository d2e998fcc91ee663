//! Level-by-level linear interpolation order along one axis, and its
//! composition into a 3D traversal.
//!
//! Along an axis of `n` points (0-based here): level 0 predicts point 0
//! from zero, level 1 predicts point `n - 1` from point 0, and every later
//! level halves the stride `s = 2^k` (largest first, `2^k < n - 1`),
//! predicting each not-yet-known odd multiple of `s`. A target with a known
//! right neighbour `i + s` is the mean of `i - s` and `i + s`; otherwise it
//! copies `i - s`.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predictor {
    /// Predicted from the constant zero.
    SeedZero,
    /// Last point predicted from the first.
    Endpoint,
    /// Mean of the two stride neighbours.
    InterpTwoSided,
    /// Copy of the left stride neighbour.
    ExtrapOneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    pub index: usize,
    pub predictor: Predictor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleLevel {
    pub level: usize,
    /// Distance to the neighbours used by the predictor; 0 for the seed.
    pub stride: usize,
    pub targets: Vec<Target>,
}

/// One-axis schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterpolationSchedule {
    pub n_points: usize,
    pub levels: Vec<ScheduleLevel>,
}

impl InterpolationSchedule {
    /// Index of the last level.
    pub fn maxlevel(&self) -> usize {
        self.levels.len() - 1
    }

    /// 0-based indices of inner points (neither first nor last) that are
    /// extrapolated from one side.
    pub fn one_sided_inner(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .levels
            .iter()
            .flat_map(|l| l.targets.iter())
            .filter(|t| {
                t.predictor == Predictor::ExtrapOneSided && t.index > 0 && t.index + 1 < self.n_points
            })
            .map(|t| t.index)
            .collect();
        out.sort_unstable();
        out
    }

    /// Exponent of the first stride level, if the axis has one.
    fn top_exponent(&self) -> Option<u32> {
        self.levels.get(2).map(|l| l.stride.trailing_zeros())
    }
}

/// Builds the schedule for an axis of `n >= 1` points.
pub fn build_schedule(n: usize) -> InterpolationSchedule {
    assert!(n >= 1, "an axis needs at least one point");
    let mut levels = vec![ScheduleLevel {
        level: 0,
        stride: 0,
        targets: vec![Target {
            index: 0,
            predictor: Predictor::SeedZero,
        }],
    }];
    if n >= 2 {
        levels.push(ScheduleLevel {
            level: 1,
            stride: n - 1,
            targets: vec![Target {
                index: n - 1,
                predictor: Predictor::Endpoint,
            }],
        });
    }
    let mut stride = 1usize;
    while n >= 3 && stride * 2 < n - 1 {
        stride *= 2;
    }
    if n >= 3 {
        loop {
            let mut targets = Vec::new();
            let mut i = stride;
            while i < n - 1 {
                let predictor = if i + stride < n {
                    Predictor::InterpTwoSided
                } else {
                    Predictor::ExtrapOneSided
                };
                targets.push(Target { index: i, predictor });
                i += 2 * stride;
            }
            levels.push(ScheduleLevel {
                level: levels.len(),
                stride,
                targets,
            });
            if stride == 1 {
                break;
            }
            stride /= 2;
        }
    }
    InterpolationSchedule { n_points: n, levels }
}

/// How one point is predicted, as flat indices into the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Zero,
    Copy(usize),
    Mean(usize, usize),
}

impl Prediction {
    #[inline]
    pub fn eval(self, recon: &[f64]) -> f64 {
        match self {
            Prediction::Zero => 0.0,
            Prediction::Copy(a) => recon[a],
            Prediction::Mean(a, b) => (recon[a] + recon[b]) * 0.5,
        }
    }
}

/// Per-axis lookup built from a schedule, with levels mapped onto the
/// global level counter shared by all three axes.
#[derive(Debug, Clone)]
struct AxisPlan {
    /// Global level of each index.
    level: Vec<usize>,
    /// Stride neighbour offsets (in index units) for each index.
    rule: Vec<AxisRule>,
}

#[derive(Debug, Clone, Copy)]
enum AxisRule {
    Zero,
    Copy(usize),
    Mean(usize, usize),
}

/// The 3D traversal: one global level counter; within a level the x, y
/// and z passes run in that order.
///
/// Stride levels are aligned across axes by stride, so every axis reaches
/// stride 1 on the last level. Seed and endpoint levels are 0 and 1 on all
/// axes. A point is predicted at the maximum of its three axis levels, in
/// the pass of the last axis attaining that maximum, along that axis.
#[derive(Debug, Clone)]
pub struct Traversal {
    dims: [usize; 3],
    axes: [AxisPlan; 3],
    maxlevel: usize,
}

impl Traversal {
    pub fn new(dims: [usize; 3]) -> Self {
        let schedules = dims.map(build_schedule);
        let top = schedules.iter().filter_map(|s| s.top_exponent()).max();
        let maxlevel = match top {
            Some(k) => 2 + k as usize,
            None if dims.iter().any(|&n| n >= 2) => 1,
            None => 0,
        };
        let axes = [0, 1, 2].map(|a| {
            let s = &schedules[a];
            let n = s.n_points;
            let mut level = vec![0; n];
            let mut rule = vec![AxisRule::Zero; n];
            for lvl in &s.levels {
                let global = match lvl.level {
                    0 | 1 => lvl.level,
                    _ => 2 + (top.unwrap() - lvl.stride.trailing_zeros()) as usize,
                };
                for t in &lvl.targets {
                    level[t.index] = global;
                    rule[t.index] = match t.predictor {
                        Predictor::SeedZero => AxisRule::Zero,
                        Predictor::Endpoint => AxisRule::Copy(0),
                        Predictor::ExtrapOneSided => AxisRule::Copy(t.index - lvl.stride),
                        Predictor::InterpTwoSided => {
                            AxisRule::Mean(t.index - lvl.stride, t.index + lvl.stride)
                        }
                    };
                }
            }
            AxisPlan { level, rule }
        });
        Self {
            dims,
            axes,
            maxlevel,
        }
    }

    pub fn maxlevel(&self) -> usize {
        self.maxlevel
    }

    /// Calls `f(level, flat_index, prediction)` for every point, in the
    /// order shared by encoder and decoder.
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, Prediction)) {
        let [nx, ny, _] = self.dims;
        let strides = [1, nx, nx * ny];
        for level in 0..=self.maxlevel {
            for a in 0..3 {
                let lists: [Vec<usize>; 3] = [0, 1, 2].map(|b| {
                    let plan = &self.axes[b].level;
                    (0..plan.len())
                        .filter(|&i| match b.cmp(&a) {
                            core::cmp::Ordering::Less => plan[i] <= level,
                            core::cmp::Ordering::Equal => plan[i] == level,
                            core::cmp::Ordering::Greater => plan[i] < level,
                        })
                        .collect()
                });
                if lists.iter().any(Vec::is_empty) {
                    continue;
                }
                let step = strides[a];
                let coord_of = |x: usize, y: usize, z: usize| [x, y, z][a];
                for &z in &lists[2] {
                    for &y in &lists[1] {
                        for &x in &lists[0] {
                            let idx = x + nx * (y + ny * z);
                            let i = coord_of(x, y, z);
                            let base = idx - i * step;
                            let p = match self.axes[a].rule[i] {
                                AxisRule::Zero => Prediction::Zero,
                                AxisRule::Copy(j) => Prediction::Copy(base + j * step),
                                AxisRule::Mean(j, k) => {
                                    Prediction::Mean(base + j * step, base + k * step)
                                }
                            };
                            f(level, idx, p);
                        }
                    }
                }
            }
        }
    }
}
