//! Haar wavelets on the real line, the finite index grid used by the
//! estimator, and the cascade that computes `S_r(φ_λ) = Σ_i φ_λ(· - U_i)`
//! for every index at once.
//!
//! Father translates are written `(-1, k)` and equal `1_[k, k+1)`. The mother
//! at `(j, k)` is `2^{j/2} ψ(2^j x - k)` with `ψ = 1_[1/2, 1) - 1_[0, 1/2)`.

use std::fmt;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::stepfn::{PiecewiseLinear, StepFunction};

/// Wavelet index `λ = (j, k)`; `j = -1` marks the father translate `φ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HaarIndex {
    pub level: i32,
    pub shift: i64,
}

impl HaarIndex {
    pub const FATHER_LEVEL: i32 = -1;

    pub fn father(shift: i64) -> Self {
        Self {
            level: Self::FATHER_LEVEL,
            shift,
        }
    }

    pub fn mother(level: i32, shift: i64) -> Self {
        debug_assert!(level >= 0);
        Self { level, shift }
    }

    pub fn is_father(&self) -> bool {
        self.level == Self::FATHER_LEVEL
    }

    /// Left end of the support.
    pub fn left(&self) -> f64 {
        self.shift as f64 * self.width()
    }

    /// Length of the support.
    pub fn width(&self) -> f64 {
        dyadic(-self.level.max(0))
    }
}

impl fmt::Display for HaarIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.level, self.shift)
    }
}

/// `2^e` for small integer exponents, exact.
pub(crate) fn dyadic(e: i32) -> f64 {
    2f64.powi(e)
}

/// `2^{j/2}`, the L2 normalisation of level-`j` functions.
pub fn level_scale(level: i32) -> f64 {
    if level % 2 == 0 {
        dyadic(level / 2)
    } else {
        std::f64::consts::SQRT_2 * dyadic((level - 1) / 2)
    }
}

/// The finest mother level kept in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MotherLevels {
    /// Mothers for `0 ≤ j ≤ j0 - 1`: what the cascade produces when it starts
    /// from fathers at level `j0`.
    #[default]
    BelowMax,
    /// Mothers for `0 ≤ j ≤ j0`.
    ThroughMax,
}

/// The finite set of indices whose wavelets meet `[-A, A]`, up to a maximum
/// level.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexGrid {
    max_level: u32,
    half_width: u32,
    mothers: MotherLevels,
    indices: Vec<HaarIndex>,
}

impl IndexGrid {
    /// Fathers first, then mothers level by level, translates ascending.
    pub fn new(max_level: u32, half_width: u32, mothers: MotherLevels) -> Result<Self> {
        if max_level == 0 {
            return Err(invalid("j0", "maximum level must be a positive integer"));
        }
        if max_level > 24 {
            return Err(invalid("j0", format!("{max_level} is too fine to tabulate")));
        }
        if half_width == 0 {
            return Err(invalid("A", "support half-width must be a positive integer"));
        }
        let a = i64::from(half_width);
        let mut indices: Vec<HaarIndex> = (-a..a).map(HaarIndex::father).collect();
        let top = match mothers {
            MotherLevels::BelowMax => max_level as i32 - 1,
            MotherLevels::ThroughMax => max_level as i32,
        };
        for j in 0..=top {
            let r = a << j;
            indices.extend((-r..r).map(|k| HaarIndex::mother(j, k)));
        }
        Ok(Self {
            max_level,
            half_width,
            mothers,
            indices,
        })
    }

    /// `j0`.
    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// `A`.
    pub fn half_width(&self) -> u32 {
        self.half_width
    }

    pub fn mothers(&self) -> MotherLevels {
        self.mothers
    }

    pub fn finest_mother_level(&self) -> i32 {
        match self.mothers {
            MotherLevels::BelowMax => self.max_level as i32 - 1,
            MotherLevels::ThroughMax => self.max_level as i32,
        }
    }

    /// Level `J` of the father functions the grid spans: every function in
    /// the span is constant on cells of width `2^{-J}`.
    pub fn resolution_level(&self) -> i32 {
        self.finest_mother_level() + 1
    }

    pub fn resolution(&self) -> f64 {
        dyadic(-self.resolution_level())
    }

    pub fn indices(&self) -> &[HaarIndex] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn position(&self, index: HaarIndex) -> Option<usize> {
        let a = i64::from(self.half_width);
        let (offset, range) = if index.is_father() {
            (0, a)
        } else {
            if index.level < 0 || index.level > self.finest_mother_level() {
                return None;
            }
            // 2A fathers plus 2A·(2^j - 1) mothers on coarser levels.
            (2 * a * (1i64 << index.level), a << index.level)
        };
        if index.shift < -range || index.shift >= range {
            return None;
        }
        Some((offset + range + index.shift) as usize)
    }
}

/// The wavelet `φ_λ` as an exact step function.
pub fn wavelet_fn(index: HaarIndex) -> StepFunction {
    if index.is_father() {
        let k = index.shift as f64;
        return StepFunction::from_parts(vec![k, k + 1.0], vec![1.0]);
    }
    let half = dyadic(-(index.level + 1));
    let m = 2 * index.shift;
    let s = level_scale(index.level);
    StepFunction::from_parts(
        vec![m as f64 * half, (m + 1) as f64 * half, (m + 2) as f64 * half],
        vec![-s, s],
    )
}

/// Exact coefficients of a known signal on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueCoefficients {
    /// `β_λ = ∫ h φ_λ`, aligned with the grid order.
    pub betas: Vec<f64>,
    /// `‖h - Π h‖²` where `Π` averages over the grid's finest dyadic cells.
    pub tail_energy: f64,
}

pub fn true_coeffs(signal: &StepFunction, grid: &IndexGrid) -> Result<TrueCoefficients> {
    let a = f64::from(grid.half_width());
    if let Some((left, right)) = signal.support() {
        if left < -a || right > a {
            return Err(Error::SupportOutsideGrid {
                left,
                right,
                half_width: grid.half_width(),
            });
        }
    }
    let betas = grid
        .indices()
        .iter()
        .map(|&idx| signal.inner(&wavelet_fn(idx)))
        .collect();
    let projected = cell_average(signal, grid);
    let tail_energy = crate::stepfn::l2_dist_sq(signal, &projected);
    Ok(TrueCoefficients { betas, tail_energy })
}

fn cell_average(signal: &StepFunction, grid: &IndexGrid) -> StepFunction {
    let width = grid.resolution();
    let cells = ((2 * grid.half_width()) as i64) << grid.resolution_level();
    let first = -i64::from(grid.half_width()) << grid.resolution_level();
    let primitive = signal.antiderivative();
    let breaks: Vec<f64> = (0..=cells).map(|c| (first + c) as f64 * width).collect();
    let values = breaks
        .windows(2)
        .map(|w| (primitive.eval(w[1]) - primitive.eval(w[0])) / width)
        .collect();
    StepFunction::from_parts(breaks, values)
}

/// `t ↦ E φ_λ(t - U)` for `U` uniform on `[0, T]`, i.e.
/// `(F(t) - F(t - T)) / T` with `F` the primitive of `φ_λ`.
pub fn mean_shift(index: HaarIndex, horizon: f64) -> PiecewiseLinear {
    debug_assert!(horizon > 0.0);
    let primitive = wavelet_fn(index).antiderivative();
    let delayed = primitive.shift(horizon);
    let w = 1.0 / horizon;
    PiecewiseLinear::combine(&[(w, &primitive), (-w, &delayed)])
}

/// An integer-valued step function: the number of parents whose translated
/// lattice cell covers `t`, or a signed difference of two such counts.
#[derive(Debug, Clone, Default)]
struct CountStep {
    breaks: Vec<f64>,
    counts: Vec<i64>,
}

impl CountStep {
    /// Sweeps `(position, increment)` events into a canonical count function.
    fn sweep(mut events: Vec<(f64, i64)>) -> Self {
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut breaks = Vec::with_capacity(events.len());
        let mut counts = Vec::with_capacity(events.len());
        let mut level = 0i64;
        let mut i = 0;
        while i < events.len() {
            let x = events[i].0;
            while i < events.len() && events[i].0 == x {
                level += events[i].1;
                i += 1;
            }
            if counts.last() == Some(&level) || (counts.is_empty() && level == 0) {
                continue;
            }
            breaks.push(x);
            counts.push(level);
        }
        debug_assert_eq!(counts.last().copied().unwrap_or(0), 0);
        counts.pop();
        if counts.is_empty() {
            breaks.clear();
        }
        Self { breaks, counts }
    }

    /// `self + sign · other`, exact.
    fn add(&self, other: &Self, sign: i64) -> Self {
        let mut breaks = Vec::with_capacity(self.breaks.len() + other.breaks.len());
        let mut counts = Vec::with_capacity(breaks.capacity());
        let (mut i, mut j) = (0, 0);
        let value = |f: &Self, next: usize| -> i64 {
            if next == 0 || next == f.breaks.len() {
                0
            } else {
                f.counts[next - 1]
            }
        };
        while i < self.breaks.len() || j < other.breaks.len() {
            let x = match (self.breaks.get(i), other.breaks.get(j)) {
                (Some(&a), Some(&b)) => a.min(b),
                (Some(&a), None) => a,
                (None, Some(&b)) => b,
                (None, None) => unreachable!(),
            };
            while i < self.breaks.len() && self.breaks[i] == x {
                i += 1;
            }
            while j < other.breaks.len() && other.breaks[j] == x {
                j += 1;
            }
            let v = value(self, i) + sign * value(other, j);
            if counts.last() == Some(&v) || (counts.is_empty() && v == 0) {
                continue;
            }
            breaks.push(x);
            counts.push(v);
        }
        counts.pop();
        if counts.is_empty() {
            breaks.clear();
        }
        Self { breaks, counts }
    }

    fn to_step(&self, scale: f64) -> StepFunction {
        StepFunction::from_parts(
            self.breaks.clone(),
            self.counts.iter().map(|&c| c as f64 * scale).collect(),
        )
    }
}

/// Position of lattice point `m` at level `level` relative to a parent.
///
/// Every breakpoint of every `S_r` function is computed through this one
/// expression, so a point shared by two functions is bitwise the same float.
#[inline]
fn lattice_point(parent: f64, m: i64, cell: f64) -> f64 {
    parent + m as f64 * cell
}

/// Count function of `Σ_i 1_[k 2^-J, (k+1) 2^-J)(t - U_i)`.
fn finest_counts(parents: &[f64], shift: i64, cell: f64) -> CountStep {
    let mut events = Vec::with_capacity(2 * parents.len());
    for &u in parents {
        events.push((lattice_point(u, shift, cell), 1));
        events.push((lattice_point(u, shift + 1, cell), -1));
    }
    CountStep::sweep(events)
}

/// `S_r(φ_λ) = Σ_i φ_λ(· - U_i)` for every index of the grid, aligned with
/// the grid order.
///
/// Starts from the fathers at the resolution level `J`, built directly from
/// the parents, and walks down one level at a time with
/// `ψ_{j,k} = (φ_{j+1,2k+1} - φ_{j+1,2k}) / √2` and
/// `φ_{j,k} = (φ_{j+1,2k} + φ_{j+1,2k+1}) / √2`.
/// The recursion is carried on integer parent counts with the `2^{j/2}`
/// normalisation applied once at the end, which keeps it exact.
pub fn cascade(parents: &[f64], grid: &IndexGrid) -> Vec<StepFunction> {
    let top = grid.resolution_level();
    let a = i64::from(grid.half_width());
    let cell = grid.resolution();
    let mut fathers: Vec<CountStep> = (-(a << top)..(a << top))
        .into_par_iter()
        .map(|k| finest_counts(parents, k, cell))
        .collect();

    let mut out = vec![StepFunction::zero(); grid.len()];
    for j in (0..top).rev() {
        let (coarse, mothers): (Vec<CountStep>, Vec<CountStep>) = (0..(2 * a) << j)
            .into_par_iter()
            .map(|slot| {
                let even = &fathers[2 * slot as usize];
                let odd = &fathers[2 * slot as usize + 1];
                (even.add(odd, 1), odd.add(even, -1))
            })
            .unzip();
        let scale = level_scale(j);
        let first = grid
            .position(HaarIndex::mother(j, -(a << j)))
            .expect("level inside grid");
        out[first..first + mothers.len()]
            .par_iter_mut()
            .zip(mothers.par_iter())
            .for_each(|(slot, counts)| *slot = counts.to_step(scale));
        fathers = coarse;
    }
    out[..fathers.len()]
        .par_iter_mut()
        .zip(fathers.par_iter())
        .for_each(|(slot, counts)| *slot = counts.to_step(1.0));
    out
}

/// `S_r(φ_λ)` for one index, built straight from the parents without the
/// cascade. Bitwise equal to the matching cascade output.
pub fn random_part(parents: &[f64], index: HaarIndex) -> StepFunction {
    let mut events = Vec::with_capacity(3 * parents.len());
    if index.is_father() {
        for &u in parents {
            events.push((lattice_point(u, index.shift, 1.0), 1));
            events.push((lattice_point(u, index.shift + 1, 1.0), -1));
        }
        return CountStep::sweep(events).to_step(1.0);
    }
    let half = dyadic(-(index.level + 1));
    let m = 2 * index.shift;
    for &u in parents {
        events.push((lattice_point(u, m, half), -1));
        events.push((lattice_point(u, m + 1, half), 2));
        events.push((lattice_point(u, m + 2, half), -1));
    }
    CountStep::sweep(events).to_step(level_scale(index.level))
}
