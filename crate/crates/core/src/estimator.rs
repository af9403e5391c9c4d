//! Coefficient estimates, data-driven thresholds and the thresholded
//! reconstruction `h̃`.
//!
//! Everything the estimator needs is a functional of the centred field
//!
//! ```text
//! S(φ_λ)(t) = Σ_i φ_λ(t - U_i) - (n - 1) · E φ_λ(t - U),   U ~ Uniform[0, T]
//! ```
//!
//! which is a step function minus a continuous piecewise-affine ramp:
//!
//! * `β̂_λ = (1/n) Σ_X S(φ_λ)(X)` over the children `X`,
//! * `B(φ_λ) = sup_t |S(φ_λ)(t)|`,
//! * `V̂(φ_λ) = Σ_X S(φ_λ)(X)²`.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::haar::{self, HaarIndex, IndexGrid, MotherLevels};
use crate::stepfn::{linear_combine, PiecewiseLinear, StepFunction};

/// Observed parents and children on a horizon `[0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSample {
    parents: Vec<f64>,
    children: Vec<f64>,
    horizon: f64,
}

impl ProcessSample {
    /// Sorts both position lists. Parents must lie in `[0, T]`; children may
    /// fall anywhere on the line.
    pub fn new(mut parents: Vec<f64>, mut children: Vec<f64>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid("T", format!("horizon must be positive, got {horizon}")));
        }
        if parents.iter().chain(&children).any(|x| !x.is_finite()) {
            return Err(invalid("positions", "non-finite position"));
        }
        parents.sort_unstable_by(f64::total_cmp);
        children.sort_unstable_by(f64::total_cmp);
        if let (Some(&lo), Some(&hi)) = (parents.first(), parents.last()) {
            if lo < 0.0 || hi > horizon {
                return Err(invalid(
                    "parents",
                    format!("parents must lie in [0, {horizon}], found [{lo}, {hi}]"),
                ));
            }
        }
        Ok(Self {
            parents,
            children,
            horizon,
        })
    }

    pub fn parents(&self) -> &[f64] {
        &self.parents
    }

    pub fn children(&self) -> &[f64] {
        &self.children
    }

    /// `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `n`.
    pub fn n_parents(&self) -> usize {
        self.parents.len()
    }

    /// `N_ℝ`, every child including those outside `[0, T]`.
    pub fn n_children(&self) -> usize {
        self.children.len()
    }
}

/// Which variance statistic enters the first threshold term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMode {
    /// `V̂(φ_λ/n)`.
    Empirical,
    /// `Ṽ(φ_λ/n)`, the inflated upper estimate.
    Inflated,
}

/// The additive `Δ · N_ℝ / n` threshold term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    /// `Δ = δ / √T`.
    Practical { delta: f64 },
    /// `Δ = d · (j0² 2^{j0/2} / n + j0 / √T + √(j0 n) / T)`.
    Theoretical { d_const: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// `j0`.
    pub max_level: u32,
    /// `A`: the estimate lives on `[-A, A]`.
    pub half_width: u32,
    pub mothers: MotherLevels,
    pub gamma: f64,
    pub threshold: ThresholdMode,
    pub variance: VarianceMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_level: 5,
            half_width: 10,
            mothers: MotherLevels::BelowMax,
            gamma: 0.18,
            threshold: ThresholdMode::Practical { delta: 2.4 },
            variance: VarianceMode::Empirical,
        }
    }
}

impl EstimatorConfig {
    pub fn practical(gamma: f64, delta: f64) -> Self {
        Self {
            gamma,
            threshold: ThresholdMode::Practical { delta },
            ..Self::default()
        }
    }

    /// Theoretical threshold with the inflated variance and mothers through
    /// level `j0`.
    pub fn theoretical(gamma: f64, d_const: f64) -> Self {
        Self {
            gamma,
            threshold: ThresholdMode::Theoretical { d_const },
            variance: VarianceMode::Inflated,
            mothers: MotherLevels::ThroughMax,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(invalid("gamma", format!("must be non-negative, got {}", self.gamma)));
        }
        match self.threshold {
            ThresholdMode::Practical { delta } if !(delta.is_finite() && delta >= 0.0) => {
                Err(invalid("delta", format!("must be non-negative, got {delta}")))
            }
            ThresholdMode::Theoretical { d_const } if !(d_const.is_finite() && d_const >= 0.0) => {
                Err(invalid("d_const", format!("must be non-negative, got {d_const}")))
            }
            _ => Ok(()),
        }
    }

    pub fn grid(&self) -> Result<IndexGrid> {
        IndexGrid::new(self.max_level, self.half_width, self.mothers)
    }
}

/// Per-index statistics and, once thresholded, the keep/kill decision.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientRow {
    pub index: HaarIndex,
    /// `β̂_λ`.
    pub beta_hat: f64,
    /// `B(φ_λ) / n`.
    pub b_stat: f64,
    /// `V̂(φ_λ) / n²`.
    pub v_hat: f64,
    /// `Ṽ(φ_λ) / n²` for the table's `γ`.
    pub v_tilde: f64,
    /// `η_λ`, once thresholds have been applied.
    pub eta: Option<f64>,
    pub kept: bool,
    /// `β̃_λ`.
    pub beta_tilde: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    pub rows: Vec<CoefficientRow>,
    pub n_parents: usize,
    pub n_children: usize,
    pub horizon: f64,
    /// `γ` and `j0` used for `v_tilde`.
    pub gamma: f64,
    pub max_level: u32,
}

impl CoefficientTable {
    pub fn row(&self, index: HaarIndex) -> Option<&CoefficientRow> {
        self.rows.iter().find(|r| r.index == index)
    }

    pub fn kept_count(&self) -> usize {
        self.rows.iter().filter(|r| r.kept).count()
    }

    /// `j,k,beta_hat,b_stat,v_hat,v_tilde,eta,kept,beta_tilde`; `eta` is
    /// empty before thresholding and `kept` is 0 or 1.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "j", "k", "beta_hat", "b_stat", "v_hat", "v_tilde", "eta", "kept", "beta_tilde",
        ])?;
        for r in &self.rows {
            wtr.write_record([
                r.index.level.to_string(),
                r.index.shift.to_string(),
                r.beta_hat.to_string(),
                r.b_stat.to_string(),
                r.v_hat.to_string(),
                r.v_tilde.to_string(),
                r.eta.map(|e| e.to_string()).unwrap_or_default(),
                u8::from(r.kept).to_string(),
                r.beta_tilde.to_string(),
            ])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// `S(φ_λ)` as an exact piecewise-affine function.
pub fn s_lambda(sample: &ProcessSample, index: HaarIndex) -> PiecewiseLinear {
    centred_field(sample, index, &haar::random_part(sample.parents(), index))
}

fn centred_field(sample: &ProcessSample, index: HaarIndex, random: &StepFunction) -> PiecewiseLinear {
    let n = sample.n_parents();
    if n == 0 {
        return PiecewiseLinear::zero();
    }
    let random = random.to_piecewise_linear();
    if n == 1 {
        return random;
    }
    let drift = haar::mean_shift(index, sample.horizon());
    PiecewiseLinear::combine(&[(1.0, &random), (-((n - 1) as f64), &drift)])
}

/// `Ṽ/n²` from the scaled statistics `V̂/n²` and `B/n`.
pub fn tilde_variance(v_hat: f64, b_stat: f64, gamma: f64, max_level: u32) -> f64 {
    let a = gamma * f64::from(max_level);
    let b2 = b_stat * b_stat;
    v_hat + (2.0 * a * v_hat * b2).sqrt() + 3.0 * a * b2
}

fn row_stats(
    sample: &ProcessSample,
    index: HaarIndex,
    random: &StepFunction,
    gamma: f64,
    max_level: u32,
) -> CoefficientRow {
    let field = centred_field(sample, index, random);
    let n = sample.n_parents() as f64;
    // Left-to-right over sorted children, so the sums do not depend on how
    // indices are scheduled across threads.
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for v in field.eval_sorted(sample.children()) {
        sum += v;
        sum_sq += v * v;
    }
    let beta_hat = sum / n;
    let b_stat = field.sup_abs() / n;
    let v_hat = sum_sq / (n * n);
    CoefficientRow {
        index,
        beta_hat,
        b_stat,
        v_hat,
        v_tilde: tilde_variance(v_hat, b_stat, gamma, max_level),
        eta: None,
        kept: false,
        beta_tilde: 0.0,
    }
}

/// `β̂`, `B/n`, `V̂/n²` and `Ṽ/n²` for every index of the grid.
pub fn coefficient_stats(
    sample: &ProcessSample,
    grid: &IndexGrid,
    gamma: f64,
) -> Result<CoefficientTable> {
    if sample.n_parents() == 0 {
        return Err(Error::NoParents);
    }
    let random = haar::cascade(sample.parents(), grid);
    let rows = grid
        .indices()
        .par_iter()
        .zip(random.par_iter())
        .map(|(&idx, s_r)| row_stats(sample, idx, s_r, gamma, grid.max_level()))
        .collect();
    Ok(table(sample, rows, gamma, grid.max_level()))
}

/// Same statistics for an arbitrary list of indices, each built directly
/// from the parents instead of through the cascade.
pub fn coefficient_stats_at(
    sample: &ProcessSample,
    indices: &[HaarIndex],
    gamma: f64,
    max_level: u32,
) -> Result<CoefficientTable> {
    if sample.n_parents() == 0 {
        return Err(Error::NoParents);
    }
    let rows = indices
        .iter()
        .map(|&idx| {
            let s_r = haar::random_part(sample.parents(), idx);
            row_stats(sample, idx, &s_r, gamma, max_level)
        })
        .collect();
    Ok(table(sample, rows, gamma, max_level))
}

fn table(sample: &ProcessSample, rows: Vec<CoefficientRow>, gamma: f64, max_level: u32) -> CoefficientTable {
    CoefficientTable {
        rows,
        n_parents: sample.n_parents(),
        n_children: sample.n_children(),
        horizon: sample.horizon(),
        gamma,
        max_level,
    }
}

/// `η_λ` for every row.
pub fn thresholds(table: &CoefficientTable, config: &EstimatorConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let j0 = f64::from(config.max_level);
    let n = table.n_parents as f64;
    let t = table.horizon;
    let delta = match config.threshold {
        ThresholdMode::Practical { delta } => delta / t.sqrt(),
        ThresholdMode::Theoretical { d_const } => {
            let level_term = j0 * j0 * haar::level_scale(config.max_level as i32) / n;
            d_const * (level_term + j0 / t.sqrt() + (j0 * n).sqrt() / t)
        }
    };
    let additive = delta * table.n_children as f64 / n;
    let gj = config.gamma * j0;
    Ok(table
        .rows
        .iter()
        .map(|r| {
            let variance = match config.variance {
                VarianceMode::Empirical => r.v_hat,
                VarianceMode::Inflated => {
                    tilde_variance(r.v_hat, r.b_stat, config.gamma, config.max_level)
                }
            };
            (2.0 * gj * variance).sqrt() + gj / 3.0 * r.b_stat + additive
        })
        .collect())
}

/// Keeps `β̂_λ` when `|β̂_λ| ≥ η_λ` (ties kept) and zeroes it otherwise.
pub fn apply_threshold(mut table: CoefficientTable, eta: &[f64]) -> CoefficientTable {
    assert_eq!(table.rows.len(), eta.len(), "one threshold per coefficient");
    for (row, &e) in table.rows.iter_mut().zip(eta) {
        row.eta = Some(e);
        row.kept = row.beta_hat.abs() >= e;
        row.beta_tilde = if row.kept { row.beta_hat } else { 0.0 };
    }
    table
}

/// `h̃ = Σ β̃_λ φ_λ`.
pub fn reconstruct(table: &CoefficientTable) -> StepFunction {
    let kept: Vec<(f64, StepFunction)> = table
        .rows
        .iter()
        .filter(|r| r.beta_tilde != 0.0)
        .map(|r| (r.beta_tilde, haar::wavelet_fn(r.index)))
        .collect();
    let terms: Vec<(f64, &StepFunction)> = kept.iter().map(|(c, f)| (*c, f)).collect();
    linear_combine(&terms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub table: CoefficientTable,
    pub reconstruction: StepFunction,
}

/// Statistics, thresholds, keep/kill and reconstruction in one call.
pub fn estimate(sample: &ProcessSample, config: &EstimatorConfig) -> Result<Estimate> {
    config.validate()?;
    let grid = config.grid()?;
    let stats = coefficient_stats(sample, &grid, config.gamma)?;
    let eta = thresholds(&stats, config)?;
    let table = apply_threshold(stats, &eta);
    let reconstruction = reconstruct(&table);
    Ok(Estimate {
        table,
        reconstruction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_small() -> IndexGrid {
        IndexGrid::new(2, 2, MotherLevels::BelowMax).unwrap()
    }

    #[test]
    fn single_parent_field_is_the_wavelet() {
        let sample = ProcessSample::new(vec![3.0], vec![], 10.0).unwrap();
        let idx = HaarIndex::mother(1, 0);
        let s = s_lambda(&sample, idx);
        let expect = haar::wavelet_fn(idx).shift(3.0).to_piecewise_linear();
        assert_eq!(s, expect);
    }

    #[test]
    fn no_parents_field_is_zero() {
        let sample = ProcessSample::new(vec![], vec![1.0], 10.0).unwrap();
        assert!(s_lambda(&sample, HaarIndex::father(0)).is_zero());
        assert!(matches!(
            coefficient_stats(&sample, &grid_small(), 0.18),
            Err(Error::NoParents)
        ));
    }

    #[test]
    fn two_parent_field_subtracts_drift() {
        let t = 10.0;
        let sample = ProcessSample::new(vec![0.0, t / 2.0], vec![], t).unwrap();
        let s = s_lambda(&sample, HaarIndex::father(0));
        // At t = 3 neither parent's box covers it; the drift is 1/T.
        assert!((s.eval(3.0) + 1.0 / t).abs() < 1e-15);
        // At t = 0.5 the first parent's box contributes 1.
        assert!((s.eval(0.5) - (1.0 - 0.5 / t)).abs() < 1e-15);
    }

    #[test]
    fn single_child_statistics() {
        let sample = ProcessSample::new(vec![0.0], vec![0.25], 10.0).unwrap();
        let t = coefficient_stats_at(&sample, &[HaarIndex::father(0)], 0.18, 5).unwrap();
        let r = &t.rows[0];
        assert_eq!((r.beta_hat, r.b_stat, r.v_hat), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_children_statistics() {
        let sample = ProcessSample::new(vec![1.0, 4.0, 6.0], vec![], 10.0).unwrap();
        let t = coefficient_stats(&sample, &grid_small(), 0.18).unwrap();
        for r in &t.rows {
            assert_eq!(r.beta_hat, 0.0);
            assert_eq!(r.v_hat, 0.0);
            assert!(r.b_stat > 0.0, "{}", r.index);
        }
    }

    #[test]
    fn cascade_and_direct_statistics_agree() {
        let sample = ProcessSample::new(
            vec![0.3, 1.7, 2.2, 5.9],
            vec![0.5, 0.9, 1.71, 2.0, 2.4, 6.3, 6.8, 7.7],
            8.0,
        )
        .unwrap();
        let grid = grid_small();
        let a = coefficient_stats(&sample, &grid, 0.5).unwrap();
        let b = coefficient_stats_at(&sample, grid.indices(), 0.5, grid.max_level()).unwrap();
        assert_eq!(a, b);
        for r in &a.rows {
            let s = s_lambda(&sample, r.index);
            let direct: f64 = sample.children().iter().map(|&x| s.eval(x)).sum::<f64>() / 4.0;
            assert!((direct - r.beta_hat).abs() < 1e-12);
            assert!(r.v_tilde >= r.v_hat);
        }
    }

    fn one_row_table(v_hat: f64, b_stat: f64, beta_hat: f64, n: usize, nr: usize, t: f64) -> CoefficientTable {
        CoefficientTable {
            rows: vec![CoefficientRow {
                index: HaarIndex::father(0),
                beta_hat,
                b_stat,
                v_hat,
                v_tilde: tilde_variance(v_hat, b_stat, 0.18, 5),
                eta: None,
                kept: false,
                beta_tilde: 0.0,
            }],
            n_parents: n,
            n_children: nr,
            horizon: t,
            gamma: 0.18,
            max_level: 5,
        }
    }

    #[test]
    fn practical_threshold_arithmetic() {
        let table = one_row_table(1.0, 1.0, 2.6, 10, 40, 100.0);
        let eta = thresholds(&table, &EstimatorConfig::practical(0.18, 2.4)).unwrap();
        let expect = 1.8f64.sqrt() + 0.3 + 0.96;
        assert!((eta[0] - expect).abs() < 1e-12);
        assert!((eta[0] - 2.601_640_786_499_874).abs() < 1e-12);
        let kept = apply_threshold(table, &eta);
        assert!(!kept.rows[0].kept);
        assert_eq!(kept.rows[0].beta_tilde, 0.0);
    }

    #[test]
    fn degenerate_thresholds() {
        let table = one_row_table(1.0, 1.0, 0.0, 10, 40, 100.0);
        let eta = thresholds(&table, &EstimatorConfig::practical(0.0, 0.0)).unwrap();
        assert_eq!(eta, vec![0.0]);
        assert!(apply_threshold(table, &eta).rows[0].kept);

        let empty = one_row_table(0.0, 0.5, 0.0, 10, 0, 100.0);
        let eta = thresholds(&empty, &EstimatorConfig::practical(0.18, 2.4)).unwrap();
        assert!((eta[0] - 0.3 * 0.5).abs() < 1e-15);

        assert!(thresholds(&empty, &EstimatorConfig::practical(-1.0, 2.4)).is_err());
        assert!(thresholds(&empty, &EstimatorConfig::practical(0.1, -2.4)).is_err());
    }

    #[test]
    fn ties_are_kept() {
        let table = one_row_table(1.0, 1.0, 1.25, 10, 40, 100.0);
        let kept = apply_threshold(table, &[1.25]);
        assert!(kept.rows[0].kept);
        assert_eq!(kept.rows[0].beta_tilde, 1.25);
    }

    #[test]
    fn theoretical_threshold_arithmetic() {
        let table = one_row_table(1.0, 1.0, 0.0, 10, 40, 100.0);
        let config = EstimatorConfig::theoretical(0.18, 0.5);
        let eta = thresholds(&table, &config).unwrap();
        let v_tilde = 1.0 + 1.8f64.sqrt() + 3.0 * 0.9;
        let delta = 0.5 * (25.0 * 2f64.powf(2.5) / 10.0 + 5.0 / 10.0 + 50f64.sqrt() / 100.0);
        let expect = (1.8 * v_tilde).sqrt() + 0.3 + delta * 4.0;
        assert!((eta[0] - expect).abs() < 1e-12, "{} vs {expect}", eta[0]);
    }

    #[test]
    fn reconstruction_from_kept_rows() {
        let mut table = one_row_table(0.0, 0.0, 4.0, 1, 0, 1.0);
        let t = apply_threshold(table.clone(), &[0.0]);
        assert_eq!(reconstruct(&t), StepFunction::boxcar(0.0, 1.0, 4.0).unwrap());
        table.rows[0].index = HaarIndex::mother(0, 0);
        table.rows[0].beta_hat = 1.0;
        let t = apply_threshold(table.clone(), &[0.0]);
        let h = reconstruct(&t);
        assert_eq!(h.values(), &[-1.0, 1.0]);
        assert_eq!(h.breakpoints(), &[0.0, 0.5, 1.0]);
        assert!(reconstruct(&apply_threshold(table, &[10.0])).is_zero());
    }

    #[test]
    fn empty_children_estimate_is_zero() {
        let sample = ProcessSample::new(vec![1.0, 50.0, 70.0], vec![], 100.0).unwrap();
        let est = estimate(&sample, &EstimatorConfig::default()).unwrap();
        assert!(est.reconstruction.is_zero());
        assert!(est.table.rows.iter().all(|r| r.eta.unwrap() > 0.0));
    }

    #[test]
    fn single_parent_estimate_runs() {
        let sample = ProcessSample::new(vec![5.0], vec![5.1, 5.2, 5.7], 10.0).unwrap();
        let est = estimate(&sample, &EstimatorConfig::default()).unwrap();
        let row = est.table.row(HaarIndex::father(0)).unwrap();
        assert_eq!(row.beta_hat, 3.0);
    }

    #[test]
    fn sample_validation() {
        assert!(ProcessSample::new(vec![1.0], vec![], 0.0).is_err());
        assert!(ProcessSample::new(vec![11.0], vec![], 10.0).is_err());
        assert!(ProcessSample::new(vec![-1.0], vec![], 10.0).is_err());
        let s = ProcessSample::new(vec![2.0, 1.0], vec![30.0, -4.0], 10.0).unwrap();
        assert_eq!(s.parents(), &[1.0, 2.0]);
        assert_eq!(s.children(), &[-4.0, 30.0]);
    }

    #[test]
    fn coefficient_csv_header() {
        let table = apply_threshold(one_row_table(1.0, 1.0, 2.0, 10, 40, 100.0), &[1.0]);
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "j,k,beta_hat,b_stat,v_hat,v_tilde,eta,kept,beta_tilde"
        );
        assert!(lines.next().unwrap().starts_with("-1,0,2,1,1,"));
    }
}
