//! Exact algebra on compactly supported piecewise-constant and
//! piecewise-affine functions of one real variable.
//!
//! Every function here uses the half-open convention: a piece `[a, b)` owns
//! its left endpoint and not its right one. Breakpoints are merged by exact
//! floating-point comparison after sorting, never snapped to a tolerance, so
//! dyadic breakpoints (which are exactly representable) line up perfectly
//! while nearby non-dyadic ones stay distinct.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// A compactly supported piecewise-constant function.
///
/// The function equals `values[i]` on `[breaks[i], breaks[i + 1])` and zero
/// outside `[breaks[0], breaks[m])`. Values are kept canonical: adjacent
/// pieces never share a value and there are no leading or trailing zero
/// pieces, so the zero function has no breakpoints at all.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepFunction {
    breaks: Vec<f64>,
    values: Vec<f64>,
}

impl StepFunction {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds a step function from explicit breakpoints and piece values.
    ///
    /// `breaks` must be finite and strictly increasing and `values` must have
    /// exactly one fewer element (or both may be empty).
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.is_empty() && values.is_empty() {
            return Ok(Self::zero());
        }
        if values.len() + 1 != breaks.len() {
            return Err(Error::InvalidFunction(format!(
                "{} breakpoints need {} values, got {}",
                breaks.len(),
                breaks.len().saturating_sub(1),
                values.len()
            )));
        }
        if breaks.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::InvalidFunction("non-finite breakpoint or value".into()));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidFunction(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self::from_parts(breaks, values))
    }

    /// `value` on `[left, right)`, zero elsewhere.
    pub fn boxcar(left: f64, right: f64, value: f64) -> Result<Self> {
        Self::new(vec![left, right], vec![value])
    }

    /// Canonicalizes already-validated parts.
    pub(crate) fn from_parts(mut breaks: Vec<f64>, mut values: Vec<f64>) -> Self {
        if values.is_empty() {
            return Self::zero();
        }
        debug_assert_eq!(breaks.len(), values.len() + 1);
        // Drop interior breakpoints between equal neighbours.
        let mut w = 0;
        for r in 1..values.len() {
            if values[r] == values[w] {
                continue;
            }
            w += 1;
            values[w] = values[r];
            breaks[w] = breaks[r];
        }
        if !values.is_empty() {
            let last = *breaks.last().unwrap();
            values.truncate(w + 1);
            breaks.truncate(w + 1);
            breaks.push(last);
        }
        // Trim zero pieces at both ends.
        let lead = values.iter().take_while(|v| **v == 0.0).count();
        if lead == values.len() {
            return Self::zero();
        }
        let trail = values.iter().rev().take_while(|v| **v == 0.0).count();
        values.truncate(values.len() - trail);
        breaks.truncate(breaks.len() - trail);
        values.drain(..lead);
        breaks.drain(..lead);
        Self { breaks, values }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates over `(left, right, value)` for every piece, including
    /// interior zero gaps.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.breaks[i], self.breaks[i + 1], v))
    }

    pub fn is_zero(&self) -> bool {
        self.values.is_empty()
    }

    /// The smallest interval `[left, right)` outside which the function
    /// vanishes, or `None` for the zero function.
    pub fn support(&self) -> Option<(f64, f64)> {
        Some((*self.breaks.first()?, *self.breaks.last()?))
    }

    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.breaks.partition_point(|&x| x <= t);
        if idx == 0 || idx == self.breaks.len() {
            0.0
        } else {
            self.values[idx - 1]
        }
    }

    /// `lim_{s ↑ t} f(s)`.
    pub fn left_limit(&self, t: f64) -> f64 {
        let idx = self.breaks.partition_point(|&x| x < t);
        if idx == 0 || idx > self.values.len() {
            0.0
        } else {
            self.values[idx - 1]
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_parts(
            self.breaks.clone(),
            self.values.iter().map(|v| v * factor).collect(),
        )
    }

    /// `t ↦ f(t - offset)`.
    pub fn shift(&self, offset: f64) -> Self {
        Self {
            breaks: self.breaks.iter().map(|x| x + offset).collect(),
            values: self.values.clone(),
        }
    }

    pub fn integral(&self) -> f64 {
        self.pieces().map(|(a, b, v)| v * (b - a)).sum()
    }

    pub fn l1_norm(&self) -> f64 {
        self.pieces().map(|(a, b, v)| v.abs() * (b - a)).sum()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.pieces().map(|(a, b, v)| v * v * (b - a)).sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ f g` over the real line.
    pub fn inner(&self, other: &StepFunction) -> f64 {
        let breaks = merged_breaks(&[self, other]);
        let mut a = PieceCursor::new(self);
        let mut b = PieceCursor::new(other);
        let mut acc = 0.0;
        for w in breaks.windows(2) {
            let va = a.value_at(w[0]);
            let vb = b.value_at(w[0]);
            acc += va * vb * (w[1] - w[0]);
        }
        acc
    }

    /// The continuous primitive `F(t) = ∫_{-∞}^t f`.
    ///
    /// `F` vanishes left of the support and is constant (the total integral)
    /// right of it.
    pub fn antiderivative(&self) -> PiecewiseLinear {
        let mut starts = Vec::with_capacity(self.values.len());
        let mut acc = 0.0;
        for (a, b, v) in self.pieces() {
            starts.push(acc);
            acc += v * (b - a);
        }
        PiecewiseLinear::from_parts(self.breaks.clone(), starts, self.values.clone(), acc)
    }

    pub fn to_piecewise_linear(&self) -> PiecewiseLinear {
        PiecewiseLinear::from_parts(
            self.breaks.clone(),
            self.values.clone(),
            vec![0.0; self.values.len()],
            0.0,
        )
    }

    /// Writes the `left,right,value` CSV form, one row per piece.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["left", "right", "value"])?;
        for (a, b, v) in self.pieces() {
            wtr.write_record([a.to_string(), b.to_string(), v.to_string()])?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads the `left,right,value` CSV form. Pieces must be sorted and
    /// non-overlapping; gaps between them are zero.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut breaks: Vec<f64> = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 3 fields, found {}", rec.len()),
                });
            }
            let field = |k: usize| -> Result<f64> {
                rec[k].trim().parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("`{}`: {e}", &rec[k]),
                })
            };
            let (a, b, v) = (field(0)?, field(1)?, field(2)?);
            match breaks.last() {
                Some(&last) if a < last => {
                    return Err(Error::Parse {
                        line,
                        message: "pieces overlap or are out of order".into(),
                    })
                }
                Some(&last) if a > last => {
                    values.push(0.0);
                    breaks.push(a);
                }
                Some(_) => {}
                None => breaks.push(a),
            }
            values.push(v);
            breaks.push(b);
        }
        Self::new(breaks, values).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })
    }
}

/// Exact pointwise linear combination `Σ coef · f`.
pub fn linear_combine(terms: &[(f64, &StepFunction)]) -> StepFunction {
    let fns: Vec<&StepFunction> = terms.iter().map(|(_, f)| *f).collect();
    let breaks = merged_breaks(&fns);
    if breaks.len() < 2 {
        return StepFunction::zero();
    }
    let mut values = vec![0.0; breaks.len() - 1];
    for &(coef, f) in terms {
        if f.is_zero() {
            continue;
        }
        let mut cell = breaks.partition_point(|&x| x < f.breaks[0]);
        for (piece, &v) in f.values.iter().enumerate() {
            let right = f.breaks[piece + 1];
            while breaks[cell] < right {
                values[cell] += coef * v;
                cell += 1;
            }
        }
    }
    StepFunction::from_parts(breaks, values)
}

/// `∫ (f - g)²` over the real line.
pub fn l2_dist_sq(f: &StepFunction, g: &StepFunction) -> f64 {
    linear_combine(&[(1.0, f), (-1.0, g)]).l2_norm_sq()
}

fn merged_breaks(fns: &[&StepFunction]) -> Vec<f64> {
    let mut all: Vec<f64> = fns.iter().flat_map(|f| f.breaks.iter().copied()).collect();
    all.sort_unstable_by(f64::total_cmp);
    all.dedup();
    all
}

/// Evaluates a step function at a non-decreasing sequence of points.
struct PieceCursor<'a> {
    f: &'a StepFunction,
    next: usize,
}

impl<'a> PieceCursor<'a> {
    fn new(f: &'a StepFunction) -> Self {
        Self { f, next: 0 }
    }

    fn value_at(&mut self, t: f64) -> f64 {
        let b = &self.f.breaks;
        while self.next < b.len() && b[self.next] <= t {
            self.next += 1;
        }
        if self.next == 0 || self.next == b.len() {
            0.0
        } else {
            self.f.values[self.next - 1]
        }
    }
}

/// A piecewise-affine function, zero left of its first node and equal to the
/// constant `tail` from its last node on.
///
/// On segment `i` the value is `starts[i] + slopes[i] · (t - nodes[i])`.
/// Continuity is not required, so the type also carries differences between
/// step functions and continuous ramps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PiecewiseLinear {
    nodes: Vec<f64>,
    starts: Vec<f64>,
    slopes: Vec<f64>,
    tail: f64,
}

impl PiecewiseLinear {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(nodes: Vec<f64>, starts: Vec<f64>, slopes: Vec<f64>, tail: f64) -> Result<Self> {
        if nodes.is_empty() {
            if !starts.is_empty() || !slopes.is_empty() || tail != 0.0 {
                return Err(Error::InvalidFunction(
                    "a function without nodes must be identically zero".into(),
                ));
            }
            return Ok(Self::zero());
        }
        if starts.len() + 1 != nodes.len() || slopes.len() != starts.len() {
            return Err(Error::InvalidFunction(
                "need one start value and one slope per segment".into(),
            ));
        }
        if nodes
            .iter()
            .chain(&starts)
            .chain(&slopes)
            .chain(std::iter::once(&tail))
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidFunction("non-finite node, value or slope".into()));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidFunction("nodes must be strictly increasing".into()));
        }
        Ok(Self::from_parts(nodes, starts, slopes, tail))
    }

    pub(crate) fn from_parts(
        mut nodes: Vec<f64>,
        mut starts: Vec<f64>,
        mut slopes: Vec<f64>,
        tail: f64,
    ) -> Self {
        if nodes.is_empty() {
            return Self::zero();
        }
        // Merge collinear, continuous neighbours.
        let mut w = 0;
        for r in 1..starts.len() {
            let joined = slopes[r] == slopes[w]
                && starts[w] + slopes[w] * (nodes[r] - nodes[w]) == starts[r];
            if joined {
                continue;
            }
            w += 1;
            starts[w] = starts[r];
            slopes[w] = slopes[r];
            nodes[w] = nodes[r];
        }
        if !starts.is_empty() {
            let last = *nodes.last().unwrap();
            starts.truncate(w + 1);
            slopes.truncate(w + 1);
            nodes.truncate(w + 1);
            nodes.push(last);
        }
        // Flat segments that merge into the zero left side or into the tail.
        let lead = starts
            .iter()
            .zip(&slopes)
            .take_while(|(s, m)| **s == 0.0 && **m == 0.0)
            .count();
        starts.drain(..lead);
        slopes.drain(..lead);
        nodes.drain(..lead);
        let trail = starts
            .iter()
            .zip(&slopes)
            .rev()
            .take_while(|(s, m)| **s == tail && **m == 0.0)
            .count();
        starts.truncate(starts.len() - trail);
        slopes.truncate(slopes.len() - trail);
        nodes.truncate(nodes.len() - trail);
        if starts.is_empty() && tail == 0.0 {
            return Self::zero();
        }
        Self {
            nodes,
            starts,
            slopes,
            tail,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn is_zero(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Iterates over `(left, right, start, slope)` for every segment.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        (0..self.starts.len()).map(move |i| {
            (
                self.nodes[i],
                self.nodes[i + 1],
                self.starts[i],
                self.slopes[i],
            )
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.nodes.partition_point(|&x| x <= t);
        if idx == 0 {
            0.0
        } else if idx == self.nodes.len() {
            self.tail
        } else {
            let i = idx - 1;
            self.starts[i] + self.slopes[i] * (t - self.nodes[i])
        }
    }

    /// Evaluates at every point of a non-decreasing slice in one sweep.
    pub fn eval_sorted(&self, ts: &[f64]) -> Vec<f64> {
        debug_assert!(ts.windows(2).all(|w| w[0] <= w[1]));
        let mut cursor = LinearCursor::new(self);
        ts.iter().map(|&t| cursor.at(t).0).collect()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self::from_parts(
            self.nodes.clone(),
            self.starts.iter().map(|v| v * factor).collect(),
            self.slopes.iter().map(|v| v * factor).collect(),
            self.tail * factor,
        )
    }

    /// `t ↦ g(t - offset)`.
    pub fn shift(&self, offset: f64) -> Self {
        Self {
            nodes: self.nodes.iter().map(|x| x + offset).collect(),
            ..self.clone()
        }
    }

    /// Exact supremum of `|g|` over the real line.
    ///
    /// An affine piece reaches its extremes at its ends, so it is enough to
    /// look at every start value, every right-hand limit and the tail.
    pub fn sup_abs(&self) -> f64 {
        self.segments()
            .flat_map(|(a, b, s, m)| [s.abs(), (s + m * (b - a)).abs()])
            .fold(self.tail.abs(), f64::max)
    }

    /// `∫ g` over the real line. Infinite when the tail is non-zero.
    pub fn integral(&self) -> f64 {
        if self.tail != 0.0 {
            return f64::INFINITY * self.tail.signum();
        }
        self.segments()
            .map(|(a, b, s, m)| (b - a) * (s + 0.5 * m * (b - a)))
            .sum()
    }

    /// Exact pointwise linear combination `Σ coef · g`.
    pub fn combine(terms: &[(f64, &PiecewiseLinear)]) -> Self {
        let mut nodes: Vec<f64> = terms
            .iter()
            .flat_map(|(_, g)| g.nodes.iter().copied())
            .collect();
        nodes.sort_unstable_by(f64::total_cmp);
        nodes.dedup();
        if nodes.is_empty() {
            return Self::zero();
        }
        let cells = nodes.len() - 1;
        let mut starts = vec![0.0; cells];
        let mut slopes = vec![0.0; cells];
        let mut tail = 0.0;
        for &(coef, g) in terms {
            if g.is_zero() {
                continue;
            }
            let mut cursor = LinearCursor::new(g);
            for c in 0..cells {
                let (v, m) = cursor.at(nodes[c]);
                starts[c] += coef * v;
                slopes[c] += coef * m;
            }
            tail += coef * g.tail;
        }
        Self::from_parts(nodes, starts, slopes, tail)
    }
}

/// Value and slope of a piecewise-linear function along non-decreasing points.
struct LinearCursor<'a> {
    g: &'a PiecewiseLinear,
    next: usize,
}

impl<'a> LinearCursor<'a> {
    fn new(g: &'a PiecewiseLinear) -> Self {
        Self { g, next: 0 }
    }

    fn at(&mut self, t: f64) -> (f64, f64) {
        let n = &self.g.nodes;
        while self.next < n.len() && n[self.next] <= t {
            self.next += 1;
        }
        if self.next == 0 {
            (0.0, 0.0)
        } else if self.next == n.len() {
            (self.g.tail, 0.0)
        } else {
            let i = self.next - 1;
            (self.g.starts[i] + self.g.slopes[i] * (t - n[i]), self.g.slopes[i])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> StepFunction {
        StepFunction::boxcar(0.0, 1.0, 1.0).unwrap()
    }

    fn signal1() -> StepFunction {
        StepFunction::boxcar(0.0, 1.0, 4.0).unwrap()
    }

    fn signal2() -> StepFunction {
        let v = 4.0 * 8.0 / 3.0;
        StepFunction::new(vec![0.5, 0.625, 1.0, 1.25], vec![v, 0.0, v]).unwrap()
    }

    #[test]
    fn eval_half_open() {
        let f = signal1();
        assert_eq!(f.eval(0.5), 4.0);
        assert_eq!(f.eval(-0.1), 0.0);
        assert_eq!(f.eval(1.0), 0.0);
        assert_eq!(f.eval(0.0), 4.0);
    }

    #[test]
    fn canonical_form_merges_and_trims() {
        let f = StepFunction::new(vec![-1.0, 0.0, 0.5, 1.0, 2.0], vec![0.0, 3.0, 3.0, 0.0])
            .unwrap();
        assert_eq!(f.breakpoints(), &[0.0, 1.0]);
        assert_eq!(f.values(), &[3.0]);
        let z = StepFunction::new(vec![0.0, 1.0], vec![0.0]).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(StepFunction::new(vec![1.0, 0.0], vec![1.0]).is_err());
        assert!(StepFunction::new(vec![0.0, 1.0], vec![]).is_err());
        assert!(StepFunction::new(vec![0.0, 1.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn combine_overlapping_boxes() {
        let a = unit();
        let b = StepFunction::boxcar(0.5, 1.5, 1.0).unwrap();
        let f = linear_combine(&[(2.0, &a), (-1.0, &b)]);
        assert_eq!(f.breakpoints(), &[0.0, 0.5, 1.0, 1.5]);
        assert_eq!(f.values(), &[2.0, 1.0, -1.0]);
    }

    #[test]
    fn combine_cancels() {
        let f = signal2();
        assert!(linear_combine(&[(1.0, &f), (-1.0, &f)]).is_zero());
    }

    #[test]
    fn combine_halves_into_mother() {
        let h = std::f64::consts::SQRT_2 / 2.0;
        let right = StepFunction::boxcar(0.5, 1.0, 1.0).unwrap();
        let left = StepFunction::boxcar(0.0, 0.5, 1.0).unwrap();
        let f = linear_combine(&[(h, &right), (-h, &left)]);
        assert_eq!(f.values(), &[-h, h]);
        assert_eq!(f.breakpoints(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn antiderivative_values() {
        let f = unit().antiderivative();
        assert_eq!(f.eval(0.5), 0.5);
        assert_eq!(f.eval(2.0), 1.0);
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(signal1().antiderivative().eval(1.0), 4.0);
        let total = signal2().antiderivative().eval(1e9);
        assert!((total - 4.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn sup_abs_uses_right_limits() {
        let g = PiecewiseLinear::new(vec![0.0, 1.0], vec![-1.0], vec![4.0], 0.0).unwrap();
        assert_eq!(g.sup_abs(), 3.0);
        assert_eq!(PiecewiseLinear::zero().sup_abs(), 0.0);
        let ramp = PiecewiseLinear::new(vec![0.0, 4.0], vec![0.0], vec![0.25], 0.0).unwrap();
        let diff = PiecewiseLinear::combine(&[(1.0, &unit().to_piecewise_linear()), (-0.25, &ramp)]);
        assert_eq!(diff.sup_abs(), 1.0);
    }

    #[test]
    fn l2_distances() {
        assert_eq!(l2_dist_sq(&signal1(), &StepFunction::zero()), 16.0);
        assert_eq!(l2_dist_sq(&signal2(), &signal2()), 0.0);
        let v = 32.0 / 3.0;
        let expected = v * v * 0.375;
        assert!((l2_dist_sq(&signal2(), &StepFunction::zero()) - expected).abs() < 1e-12);
        assert!((expected - 42.666_666_666_666_664).abs() < 1e-12);
    }

    #[test]
    fn piecewise_linear_tail_and_jump() {
        let g = PiecewiseLinear::new(vec![2.0], vec![], vec![], 5.0).unwrap();
        assert_eq!(g.eval(1.9), 0.0);
        assert_eq!(g.eval(2.0), 5.0);
        assert_eq!(g.sup_abs(), 5.0);
        assert!(PiecewiseLinear::new(vec![], vec![], vec![], 1.0).is_err());
    }

    #[test]
    fn csv_round_trip_with_gap() {
        let f = signal2();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("left,right,value\n"));
        assert_eq!(StepFunction::read_csv(buf.as_slice()).unwrap(), f);

        let gapped = "left,right,value\n0,1,2\n3,4,5\n";
        let g = StepFunction::read_csv(gapped.as_bytes()).unwrap();
        assert_eq!(g.values(), &[2.0, 0.0, 5.0]);
        let overlap = "left,right,value\n0,2,2\n1,4,5\n";
        assert!(StepFunction::read_csv(overlap.as_bytes()).is_err());
    }

    fn arb_step() -> impl Strategy<Value = StepFunction> {
        prop::collection::vec((0.01f64..2.0, -5.0f64..5.0), 0..8).prop_flat_map(|pieces| {
            (-5.0f64..5.0).prop_map(move |start| {
                let mut breaks = vec![start];
                let mut values = Vec::new();
                for (w, v) in &pieces {
                    breaks.push(breaks.last().unwrap() + w);
                    values.push(*v);
                }
                if values.is_empty() {
                    StepFunction::zero()
                } else {
                    StepFunction::new(breaks, values).unwrap()
                }
            })
        })
    }

    proptest! {
        #[test]
        fn combine_is_pointwise(f in arb_step(), g in arb_step(), a in -3.0f64..3.0, b in -3.0f64..3.0,
                                ts in prop::collection::vec(-12.0f64..12.0, 1000)) {
            let h = linear_combine(&[(a, &f), (b, &g)]);
            for t in ts {
                let expect = a * f.eval(t) + b * g.eval(t);
                prop_assert!((h.eval(t) - expect).abs() <= 1e-12, "t={t}");
            }
        }

        #[test]
        fn antiderivative_slope_matches(f in arb_step()) {
            let big = f.antiderivative();
            for (a, b, v) in f.pieces() {
                let mid = 0.5 * (a + b);
                let eps = 1e-4 * (b - a);
                let slope = (big.eval(mid + eps) - big.eval(mid - eps)) / (2.0 * eps);
                prop_assert!((slope - v).abs() < 1e-6 * (1.0 + v.abs()), "{slope} vs {v}");
            }
        }

        #[test]
        fn sup_abs_dominates(f in arb_step(), g in arb_step(), c in -2.0f64..2.0) {
            let pl = PiecewiseLinear::combine(&[(1.0, &f.to_piecewise_linear()), (c, &g.antiderivative())]);
            let sup = pl.sup_abs();
            let mut grid_max: f64 = 0.0;
            for i in 0..=20_000 {
                let t = -15.0 + 30.0 * i as f64 / 20_000.0;
                let v = pl.eval(t).abs();
                prop_assert!(v <= sup + 1e-12);
                grid_max = grid_max.max(v);
            }
            // Grid step 1.5e-3 times the largest slope (|c| · 5 ≤ 10) bounds the gap.
            prop_assert!(sup - grid_max <= 1e-12 + 1.5e-3 * 10.0);
        }

        #[test]
        fn l2_symmetric(f in arb_step(), g in arb_step()) {
            prop_assert_eq!(l2_dist_sq(&f, &g), l2_dist_sq(&g, &f));
            prop_assert_eq!(l2_dist_sq(&f, &f), 0.0);
        }
    }
}
