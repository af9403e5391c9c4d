//! Exact simulation of the parent/child model.
//!
//! Parents are uniform on `[0, T]` (a fixed number of them, or a Poisson
//! number with mean `μT`). Each parent `U` spawns a Poisson process with
//! intensity `h(· - U)`; since `h` is a non-negative step function this is
//! sampled piece by piece (a Poisson count, then uniform positions), so
//! there is no thinning and no rejection loop. Orphans are an optional
//! homogeneous Poisson process on `[0, T + 1]`.
//!
//! Randomness comes from ChaCha8 streams: replication `r` of a run with
//! master seed `s` always draws from stream `r` of the generator seeded with
//! `s`, whatever thread executes it.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::ProcessSample;
use crate::stepfn::StepFunction;

/// The three test signals used for calibration and robustness runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    /// `ν · 1_[0, 1)`.
    Signal1,
    /// `ν · (8/3) · (1_[0.5, 0.625) + 1_[1, 1.25))`.
    Signal2,
    /// `ν · (1/4) · (1_[-0.75, -0.5) + 1_[4.25, 8))`.
    Signal3,
}

impl Signal {
    pub fn with_amplitude(self, nu: f64) -> StepFunction {
        let (breaks, values) = match self {
            Signal::Signal1 => (vec![0.0, 1.0], vec![nu]),
            Signal::Signal2 => {
                let v = nu * 8.0 / 3.0;
                (vec![0.5, 0.625, 1.0, 1.25], vec![v, 0.0, v])
            }
            Signal::Signal3 => {
                let v = nu / 4.0;
                (vec![-0.75, -0.5, 4.25, 8.0], vec![v, 0.0, v])
            }
        };
        StepFunction::from_parts(breaks, values)
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "signal1" => Ok(Signal::Signal1),
            "signal2" => Ok(Signal::Signal2),
            "signal3" => Ok(Signal::Signal3),
            _ => Err(Error::UnknownSignal(s.to_string())),
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signal::Signal1 => "signal1",
            Signal::Signal2 => "signal2",
            Signal::Signal3 => "signal3",
        })
    }
}

pub fn builtin_signal(name: &str, nu: f64) -> Result<StepFunction> {
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(invalid("nu", format!("amplitude must be non-negative, got {nu}")));
    }
    Ok(name.parse::<Signal>()?.with_amplitude(nu))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalSpec {
    Builtin { signal: Signal, amplitude: f64 },
    Custom(StepFunction),
}

impl SignalSpec {
    pub fn function(&self) -> StepFunction {
        match self {
            SignalSpec::Builtin { signal, amplitude } => signal.with_amplitude(*amplitude),
            SignalSpec::Custom(f) => f.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            SignalSpec::Builtin { signal, amplitude } => format!("{signal}(nu={amplitude})"),
            SignalSpec::Custom(_) => "custom".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParentMode {
    Fixed(usize),
    /// Homogeneous Poisson parents with intensity `μ`.
    Poisson(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: f64,
    pub parents: ParentMode,
    pub signal: SignalSpec,
    /// Orphan intensity on `[0, T + 1]`.
    pub orphan_intensity: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(horizon: f64, parents: ParentMode, signal: SignalSpec, seed: u64) -> Self {
        Self {
            horizon,
            parents,
            signal,
            orphan_intensity: 0.0,
            seed,
        }
    }

    pub fn poisson(signal: Signal, nu: f64, horizon: f64, mu: f64, seed: u64) -> Self {
        Self::new(
            horizon,
            ParentMode::Poisson(mu),
            SignalSpec::Builtin {
                signal,
                amplitude: nu,
            },
            seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("T", format!("must be positive, got {}", self.horizon)));
        }
        if let ParentMode::Poisson(mu) = self.parents {
            if !(mu.is_finite() && mu > 0.0) {
                return Err(invalid("mu", format!("must be positive, got {mu}")));
            }
        }
        if !(self.orphan_intensity.is_finite() && self.orphan_intensity >= 0.0) {
            return Err(invalid("orphans", "intensity must be non-negative"));
        }
        if let SignalSpec::Builtin { amplitude, .. } = self.signal {
            if !(amplitude.is_finite() && amplitude >= 0.0) {
                return Err(invalid("nu", "amplitude must be non-negative"));
            }
        }
        Ok(())
    }
}

/// The generator for replication `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A Poisson draw; a zero mean gives zero.
pub fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("finite positive mean");
    dist.sample(rng) as u64
}

pub fn gen_parents<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Vec<f64> {
    let t = config.horizon;
    let n = match config.parents {
        ParentMode::Fixed(n) => n,
        ParentMode::Poisson(mu) => poisson_count(mu * t, rng) as usize,
    };
    let mut out: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..t)).collect();
    out.sort_unstable_by(f64::total_cmp);
    out
}

/// Children of every parent, merged and sorted.
pub fn gen_children<R: Rng + ?Sized>(
    parents: &[f64],
    h: &StepFunction,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if h.values().iter().any(|v| *v < 0.0) {
        return Err(invalid("signal", "a reproduction function must be non-negative"));
    }
    let mut out = Vec::new();
    for &u in parents {
        for (a, b, c) in h.pieces() {
            let k = poisson_count(c * (b - a), rng);
            let (lo, hi) = (u + a, u + b);
            out.extend((0..k).map(|_| rng.random_range(lo..hi)));
        }
    }
    out.sort_unstable_by(f64::total_cmp);
    Ok(out)
}

/// Homogeneous Poisson points on `[0, T + 1]`.
pub fn gen_orphans<R: Rng + ?Sized>(horizon: f64, intensity: f64, rng: &mut R) -> Vec<f64> {
    let span = horizon + 1.0;
    let k = poisson_count(intensity * span, rng);
    let mut out: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..span)).collect();
    out.sort_unstable_by(f64::total_cmp);
    out
}

/// One realization on stream 0.
pub fn simulate(config: &SimConfig) -> Result<ProcessSample> {
    simulate_replication(config, 0)
}

/// Replication `replication` of the run, drawn from its own stream.
pub fn simulate_replication(config: &SimConfig, replication: u64) -> Result<ProcessSample> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, replication);
    let parents = gen_parents(config, &mut rng);
    let h = config.signal.function();
    let mut children = gen_children(&parents, &h, &mut rng)?;
    let orphans = gen_orphans(config.horizon, config.orphan_intensity, &mut rng);
    if !orphans.is_empty() {
        children.extend(orphans);
        children.sort_unstable_by(f64::total_cmp);
    }
    ProcessSample::new(parents, children, config.horizon)
}

/// Sidecar metadata written next to a sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n: usize,
    pub seed: Option<u64>,
    pub signal: Option<String>,
}

/// `role,position` CSV, parents first.
pub fn write_sample_csv<W: Write>(sample: &ProcessSample, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["role", "position"])?;
    for &p in sample.parents() {
        wtr.write_record(["parent", &p.to_string()])?;
    }
    for &c in sample.children() {
        wtr.write_record(["child", &c.to_string()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Parses the `role,position` CSV into `(parents, children)`.
pub fn read_sample_csv<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(input);
    let (mut parents, mut children) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        let pos: f64 = rec[1].trim().parse().map_err(|e| Error::Parse {
            line,
            message: format!("`{}`: {e}", &rec[1]),
        })?;
        match rec[0].trim() {
            "parent" => parents.push(pos),
            "child" => children.push(pos),
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown role `{other}`"),
                })
            }
        }
    }
    Ok((parents, children))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_values() {
        let s1 = builtin_signal("signal1", 4.0).unwrap();
        assert_eq!(s1.eval(0.5), 4.0);
        let s2 = builtin_signal("Signal2", 4.0).unwrap();
        assert_eq!(s2.values(), &[32.0 / 3.0, 0.0, 32.0 / 3.0]);
        let s3 = builtin_signal("signal3", 4.0).unwrap();
        assert_eq!(s3.values(), &[1.0, 0.0, 1.0]);
        assert!((s2.integral() - 4.0).abs() < 1e-12);
        assert!((s3.integral() - 4.0).abs() < 1e-12);
        assert!(matches!(builtin_signal("signal9", 4.0), Err(Error::UnknownSignal(_))));
        assert!(builtin_signal("signal1", -1.0).is_err());
    }

    #[test]
    fn fixed_parents() {
        let sig = SignalSpec::Builtin {
            signal: Signal::Signal1,
            amplitude: 4.0,
        };
        let mut rng = stream_rng(1, 0);
        let none = SimConfig::new(10.0, ParentMode::Fixed(0), sig.clone(), 1);
        assert!(gen_parents(&none, &mut rng).is_empty());
        let some = SimConfig::new(10.0, ParentMode::Fixed(500), sig, 1);
        let p = gen_parents(&some, &mut rng);
        assert_eq!(p.len(), 500);
        assert!(p.windows(2).all(|w| w[0] <= w[1]));
        assert!(p.iter().all(|&x| (0.0..=10.0).contains(&x)));
    }

    #[test]
    fn poisson_parent_count_mean() {
        let config = SimConfig::poisson(Signal::Signal1, 4.0, 10_000.0, 0.1, 7);
        let reps = 200;
        let total: usize = (0..reps)
            .map(|r| gen_parents(&config, &mut stream_rng(7, r)).len())
            .sum();
        let mean = total as f64 / reps as f64;
        // sd of the mean is sqrt(1000/200) ≈ 2.24.
        assert!((mean - 1000.0).abs() < 4.0 * (1000.0f64 / 200.0).sqrt(), "{mean}");
    }

    #[test]
    fn children_respect_support() {
        let h = builtin_signal("signal1", 4.0).unwrap();
        let mut rng = stream_rng(3, 0);
        assert!(gen_children(&[1.0, 2.0], &StepFunction::zero(), &mut rng)
            .unwrap()
            .is_empty());
        for _ in 0..100 {
            let c = gen_children(&[10.0], &h, &mut rng).unwrap();
            assert!(c.iter().all(|&x| (10.0..11.0).contains(&x)));
        }
        let negative = StepFunction::boxcar(0.0, 1.0, -1.0).unwrap();
        assert!(gen_children(&[1.0], &negative, &mut rng).is_err());
    }

    #[test]
    fn single_parent_counts_are_poisson() {
        // Chi-square goodness of fit of 10^4 counts against Poisson(4).
        let h = builtin_signal("signal1", 4.0).unwrap();
        let mut rng = stream_rng(11, 0);
        let draws = 10_000;
        let bins = 11;
        let mut observed = vec![0usize; bins];
        for _ in 0..draws {
            let k = gen_children(&[10.0], &h, &mut rng).unwrap().len();
            observed[k.min(bins - 1)] += 1;
        }
        let mut pmf = vec![0.0; bins];
        let mut p = (-4.0f64).exp();
        for (k, slot) in pmf.iter_mut().enumerate().take(bins - 1) {
            *slot = p;
            p *= 4.0 / (k + 1) as f64;
        }
        pmf[bins - 1] = 1.0 - pmf[..bins - 1].iter().sum::<f64>();
        let chi2: f64 = observed
            .iter()
            .zip(&pmf)
            .map(|(&o, &q)| {
                let e = q * draws as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        // 99.9% quantile of chi-square with 10 degrees of freedom.
        assert!(chi2 < 29.59, "chi2 = {chi2}");
    }

    #[test]
    fn orphan_counts() {
        let mut rng = stream_rng(5, 0);
        assert!(gen_orphans(10_000.0, 0.0, &mut rng).is_empty());
        for (intensity, expect) in [(0.1, 1000.1), (0.3, 3000.3)] {
            let reps = 100;
            let total: usize = (0..reps)
                .map(|_| gen_orphans(10_000.0, intensity, &mut rng).len())
                .sum();
            let mean = total as f64 / reps as f64;
            let se = (expect / reps as f64).sqrt();
            assert!((mean - expect).abs() < 4.0 * se, "{mean} vs {expect}");
        }
        let o = gen_orphans(5.0, 3.0, &mut rng);
        assert!(o.iter().all(|&x| (0.0..=6.0).contains(&x)));
    }

    #[test]
    fn simulation_is_deterministic() {
        let mut config = SimConfig::poisson(Signal::Signal1, 3.0, 2000.0, 0.1, 42);
        config.orphan_intensity = 0.1;
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_replication(&config, 1).unwrap());
    }

    #[test]
    fn single_fixed_parent() {
        let config = SimConfig::new(
            50.0,
            ParentMode::Fixed(1),
            SignalSpec::Builtin {
                signal: Signal::Signal1,
                amplitude: 4.0,
            },
            9,
        );
        let s = simulate(&config).unwrap();
        assert_eq!(s.n_parents(), 1);
        let u = s.parents()[0];
        assert!(s.children().iter().all(|&x| x >= u && x < u + 1.0));
    }

    #[test]
    fn sample_csv_round_trip() {
        let config = SimConfig::poisson(Signal::Signal2, 4.0, 200.0, 0.1, 1);
        let s = simulate(&config).unwrap();
        let mut buf = Vec::new();
        write_sample_csv(&s, &mut buf).unwrap();
        assert!(buf.starts_with(b"role,position\n"));
        let (p, c) = read_sample_csv(buf.as_slice()).unwrap();
        assert_eq!(ProcessSample::new(p, c, 200.0).unwrap(), s);
        assert!(read_sample_csv("role,position\nuncle,3\n".as_bytes()).is_err());
    }
}
