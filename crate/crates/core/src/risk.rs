//! Quadratic risk, Monte Carlo risk surfaces over `(γ, δ)`, the oracle risk
//! benchmark and Monte Carlo checks of the coefficient estimator.
//!
//! Replications run in parallel, one ChaCha stream each, and are reduced in
//! replication order, so every number here depends only on the master seed.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::estimator::{
    apply_threshold, coefficient_stats, coefficient_stats_at, reconstruct, thresholds,
    CoefficientTable, EstimatorConfig, ThresholdMode,
};
use crate::haar::{self, HaarIndex, IndexGrid};
use crate::simulate::{simulate_replication, SimConfig};
use crate::stepfn::{l2_dist_sq, StepFunction};

/// `‖h̃ - h‖²`, exact.
pub fn l2_risk(h_tilde: &StepFunction, h: &StepFunction) -> f64 {
    l2_dist_sq(h_tilde, h)
}

/// Neumaier-compensated sum, accumulated in iteration order.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Sample mean and unbiased sample variance (zero for a single value).
pub(crate) fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, ss / (n - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskCell {
    pub gamma: f64,
    /// `δ` in practical mode, the constant `d` in theoretical mode.
    pub delta: f64,
    pub mean_risk: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskSurface {
    pub gamma_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub reps: usize,
    /// `γ`-major: cell `(g, d)` sits at `g * delta_grid.len() + d`.
    pub cells: Vec<RiskCell>,
}

impl RiskSurface {
    pub fn cell(&self, gamma_idx: usize, delta_idx: usize) -> &RiskCell {
        &self.cells[gamma_idx * self.delta_grid.len() + delta_idx]
    }

    /// The cell with the smallest mean risk (first one on ties).
    pub fn best(&self) -> &RiskCell {
        self.cells
            .iter()
            .reduce(|a, b| if b.mean_risk < a.mean_risk { b } else { a })
            .expect("surfaces are never empty")
    }

    /// `gamma,delta,mean_risk,stderr,reps`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["gamma", "delta", "mean_risk", "stderr", "reps"])?;
        for c in &self.cells {
            wtr.write_record([
                c.gamma.to_string(),
                c.delta.to_string(),
                c.mean_risk.to_string(),
                c.stderr.to_string(),
                self.reps.to_string(),
            ])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// `start, start + step, …` up to `stop` inclusive, rounded to 12 decimals
/// so that `0.1 + 2 · 0.1` prints as `0.3`.
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step.is_finite() && step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start
    {
        return Err(invalid("grid", format!("bad range {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

/// `γ ∈ {0.02, 0.04, …, 1.0}`.
pub fn default_gamma_grid() -> Vec<f64> {
    linear_grid(0.02, 1.0, 0.02).expect("valid range")
}

/// `δ ∈ {0, 0.2, …, 4.0}`.
pub fn default_delta_grid() -> Vec<f64> {
    linear_grid(0.0, 4.0, 0.2).expect("valid range")
}

fn cell_config(base: &EstimatorConfig, gamma: f64, delta: f64) -> EstimatorConfig {
    let threshold = match base.threshold {
        ThresholdMode::Practical { .. } => ThresholdMode::Practical { delta },
        ThresholdMode::Theoretical { .. } => ThresholdMode::Theoretical { d_const: delta },
    };
    EstimatorConfig {
        gamma,
        threshold,
        ..base.clone()
    }
}

/// Risk of every `(γ, δ)` cell for one set of statistics.
///
/// Only the thresholds change between cells, and the risk depends only on
/// which coefficients survive, so reconstructions are memoised by kept set.
fn replication_risks(
    stats: &CoefficientTable,
    truth: &StepFunction,
    base: &EstimatorConfig,
    gammas: &[f64],
    deltas: &[f64],
) -> Result<Vec<f64>> {
    let mut memo: HashMap<Vec<u64>, f64> = HashMap::new();
    let mut out = Vec::with_capacity(gammas.len() * deltas.len());
    for &g in gammas {
        for &d in deltas {
            let eta = thresholds(stats, &cell_config(base, g, d))?;
            let mut key = vec![0u64; stats.rows.len().div_ceil(64)];
            for (i, (row, e)) in stats.rows.iter().zip(&eta).enumerate() {
                if row.beta_hat.abs() >= *e {
                    key[i / 64] |= 1 << (i % 64);
                }
            }
            let risk = match memo.get(&key) {
                Some(&r) => r,
                None => {
                    let table = apply_threshold(stats.clone(), &eta);
                    let r = l2_risk(&reconstruct(&table), truth);
                    memo.insert(key, r);
                    r
                }
            };
            out.push(risk);
        }
    }
    Ok(out)
}

/// Monte Carlo mean risk and its standard error on a `(γ, δ)` grid.
///
/// Statistics are computed once per replication and shared by every cell.
/// In theoretical mode the `δ` axis is the constant `d`.
pub fn risk_surface(
    sim: &SimConfig,
    est_base: &EstimatorConfig,
    gammas: &[f64],
    deltas: &[f64],
    reps: usize,
) -> Result<RiskSurface> {
    if gammas.is_empty() || deltas.is_empty() {
        return Err(invalid("grid", "gamma and delta grids must be non-empty"));
    }
    if reps == 0 {
        return Err(invalid("reps", "need at least one replication"));
    }
    est_base.validate()?;
    for &g in gammas {
        cell_config(est_base, g, 0.0).validate()?;
    }
    for &d in deltas {
        cell_config(est_base, est_base.gamma, d).validate()?;
    }
    let grid = est_base.grid()?;
    let truth = sim.signal.function();
    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sample = simulate_replication(sim, r)?;
            let stats = coefficient_stats(&sample, &grid, est_base.gamma)?;
            replication_risks(&stats, &truth, est_base, gammas, deltas)
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(gammas.len() * deltas.len());
    let mut column = vec![0.0; reps];
    for (gi, &gamma) in gammas.iter().enumerate() {
        for (di, &delta) in deltas.iter().enumerate() {
            let c = gi * deltas.len() + di;
            for (slot, risks) in column.iter_mut().zip(&per_rep) {
                *slot = risks[c];
            }
            let (mean, var) = mean_var(&column);
            cells.push(RiskCell {
                gamma,
                delta,
                mean_risk: mean,
                stderr: (var / reps as f64).sqrt(),
            });
        }
    }
    Ok(RiskSurface {
        gamma_grid: gammas.to_vec(),
        delta_grid: deltas.to_vec(),
        reps,
        cells,
    })
}

/// Per-index Monte Carlo summary of `β̂_λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub index: HaarIndex,
    pub true_beta: f64,
    pub mean: f64,
    /// Standard error of `mean`.
    pub stderr: f64,
    /// Empirical variance of `β̂_λ` across replications.
    pub variance: f64,
    pub reps: usize,
}

pub const MIN_VALIDATION_REPS: usize = 100;

/// Replays the simulation `reps` times and summarises `β̂_λ` for each index
/// against the exact coefficient of the simulated signal.
pub fn mc_validate(
    sim: &SimConfig,
    indices: &[HaarIndex],
    reps: usize,
) -> Result<Vec<ValidationRow>> {
    if reps < MIN_VALIDATION_REPS {
        return Err(invalid(
            "reps",
            format!("validation needs at least {MIN_VALIDATION_REPS} replications, got {reps}"),
        ));
    }
    let truth = sim.signal.function();
    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sample = simulate_replication(sim, r)?;
            let t = coefficient_stats_at(&sample, indices, 0.0, 1)?;
            Ok(t.rows.iter().map(|row| row.beta_hat).collect())
        })
        .collect::<Result<_>>()?;
    Ok(indices
        .iter()
        .enumerate()
        .map(|(i, &index)| {
            let draws: Vec<f64> = per_rep.iter().map(|v| v[i]).collect();
            let (mean, variance) = mean_var(&draws);
            ValidationRow {
                index,
                true_beta: truth.inner(&haar::wavelet_fn(index)),
                mean,
                stderr: (variance / reps as f64).sqrt(),
                variance,
                reps,
            }
        })
        .collect())
}

/// `j,k,true_beta,mean_beta_hat,mc_stderr,empirical_var,reps`.
pub fn write_validation_csv<W: Write>(rows: &[ValidationRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record([
        "j", "k", "true_beta", "mean_beta_hat", "mc_stderr", "empirical_var", "reps",
    ])?;
    for r in rows {
        wtr.write_record([
            r.index.level.to_string(),
            r.index.shift.to_string(),
            r.true_beta.to_string(),
            r.mean.to_string(),
            r.stderr.to_string(),
            r.variance.to_string(),
            r.reps.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Monte Carlo estimate of the oracle risk
/// `Σ_Γ min(var β̂_λ, β_λ²) + Σ_{λ ∉ Γ} β_λ²`.
///
/// Only available in simulation, where `h` is known and supported in
/// `[-A, A]`.
pub fn oracle_risk(sim: &SimConfig, grid: &IndexGrid, reps: usize) -> Result<f64> {
    if reps < 2 {
        return Err(invalid("reps", "the oracle risk needs at least two replications"));
    }
    let truth = haar::true_coeffs(&sim.signal.function(), grid)?;
    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let sample = simulate_replication(sim, r)?;
            let t = coefficient_stats(&sample, grid, 0.0)?;
            Ok(t.rows.iter().map(|row| row.beta_hat).collect())
        })
        .collect::<Result<_>>()?;
    let terms = truth.betas.iter().enumerate().map(|(i, &beta)| {
        let draws: Vec<f64> = per_rep.iter().map(|v| v[i]).collect();
        let (_, var) = mean_var(&draws);
        var.min(beta * beta)
    });
    Ok(compensated_sum(terms) + truth.tail_energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::estimate;
    use crate::haar::MotherLevels;
    use crate::simulate::{ParentMode, Signal, SignalSpec};

    fn small_config() -> EstimatorConfig {
        EstimatorConfig {
            max_level: 3,
            half_width: 2,
            ..EstimatorConfig::default()
        }
    }

    #[test]
    fn l2_risk_values() {
        let s1 = Signal::Signal1.with_amplitude(4.0);
        let s2 = Signal::Signal2.with_amplitude(4.0);
        assert_eq!(l2_risk(&s1, &s1), 0.0);
        assert_eq!(l2_risk(&StepFunction::zero(), &s1), 16.0);
        assert!((l2_risk(&StepFunction::zero(), &s2) - 128.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn grids() {
        let g = default_gamma_grid();
        assert_eq!(g.len(), 50);
        assert_eq!((g[0], g[49]), (0.02, 1.0));
        let d = default_delta_grid();
        assert_eq!(d.len(), 21);
        assert_eq!(d[3], 0.6);
        assert!(linear_grid(1.0, 0.0, 0.1).is_err());
        assert!(linear_grid(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(v), 1.0);
    }

    #[test]
    fn cached_surface_matches_naive_recomputation() {
        let sim = SimConfig::poisson(Signal::Signal2, 4.0, 300.0, 0.2, 17);
        let base = small_config();
        let gammas = [0.0, 0.1, 0.5];
        let deltas = [0.0, 1.0, 2.4, 50.0];
        let reps = 3;
        let surface = risk_surface(&sim, &base, &gammas, &deltas, reps).unwrap();
        let truth = sim.signal.function();
        for (gi, &g) in gammas.iter().enumerate() {
            for (di, &d) in deltas.iter().enumerate() {
                let risks: Vec<f64> = (0..reps as u64)
                    .map(|r| {
                        let sample = simulate_replication(&sim, r).unwrap();
                        let config = EstimatorConfig {
                            gamma: g,
                            threshold: ThresholdMode::Practical { delta: d },
                            ..base.clone()
                        };
                        let est = estimate(&sample, &config).unwrap();
                        l2_risk(&est.reconstruction, &truth)
                    })
                    .collect();
                let (mean, var) = mean_var(&risks);
                let cell = surface.cell(gi, di);
                assert_eq!(cell.mean_risk, mean, "({g},{d})");
                assert_eq!(cell.stderr, (var / reps as f64).sqrt());
            }
        }
    }

    #[test]
    fn huge_delta_kills_everything() {
        let sim = SimConfig::poisson(Signal::Signal1, 4.0, 500.0, 0.1, 3);
        let s = risk_surface(&sim, &small_config(), &[0.18], &[1e6], 4).unwrap();
        assert_eq!(s.cells[0].mean_risk, 16.0);
        assert_eq!(s.cells[0].stderr, 0.0);
    }

    #[test]
    fn single_rep_surface_is_deterministic() {
        let sim = SimConfig::poisson(Signal::Signal1, 4.0, 500.0, 0.1, 3);
        let a = risk_surface(&sim, &small_config(), &[0.1, 0.2], &[1.0, 2.0], 1).unwrap();
        let b = risk_surface(&sim, &small_config(), &[0.1, 0.2], &[1.0, 2.0], 1).unwrap();
        assert_eq!(a, b);
        assert!(a.cells.iter().all(|c| c.mean_risk >= 0.0 && c.stderr == 0.0));
    }

    #[test]
    fn cell_is_independent_of_grid_shape() {
        let sim = SimConfig::poisson(Signal::Signal2, 4.0, 400.0, 0.1, 8);
        let big = risk_surface(&sim, &small_config(), &[0.05, 0.18, 0.4], &[0.0, 2.4], 3).unwrap();
        let one = risk_surface(&sim, &small_config(), &[0.18], &[2.4], 3).unwrap();
        assert_eq!(big.cell(1, 1), one.cell(0, 0));
    }

    #[test]
    fn surface_input_validation() {
        let sim = SimConfig::poisson(Signal::Signal1, 4.0, 100.0, 0.1, 3);
        assert!(risk_surface(&sim, &small_config(), &[], &[1.0], 1).is_err());
        assert!(risk_surface(&sim, &small_config(), &[0.1], &[1.0], 0).is_err());
        assert!(risk_surface(&sim, &small_config(), &[-0.1], &[1.0], 1).is_err());
    }

    #[test]
    fn zero_signal_validation_and_oracle() {
        let sim = SimConfig::new(
            200.0,
            ParentMode::Fixed(20),
            SignalSpec::Builtin {
                signal: Signal::Signal1,
                amplitude: 0.0,
            },
            1,
        );
        let rows = mc_validate(&sim, &[HaarIndex::father(0), HaarIndex::mother(1, 0)], 100).unwrap();
        for r in rows {
            assert_eq!((r.mean, r.variance, r.true_beta), (0.0, 0.0, 0.0));
        }
        let grid = IndexGrid::new(2, 2, MotherLevels::BelowMax).unwrap();
        assert_eq!(oracle_risk(&sim, &grid, 5).unwrap(), 0.0);
        assert!(mc_validate(&sim, &[HaarIndex::father(0)], 10).is_err());
    }

    #[test]
    fn oracle_risk_signal1_is_father_variance() {
        let sim = SimConfig::poisson(Signal::Signal1, 4.0, 500.0, 0.1, 21);
        let grid = IndexGrid::new(2, 2, MotherLevels::BelowMax).unwrap();
        let reps = 100;
        let risk = oracle_risk(&sim, &grid, reps).unwrap();
        let rows = mc_validate(&sim, &[HaarIndex::father(0)], reps).unwrap();
        assert!((risk - rows[0].variance.min(16.0)).abs() < 1e-12, "{risk} vs {}", rows[0].variance);
        assert!(risk <= 16.0);
    }
}
