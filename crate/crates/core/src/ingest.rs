//! Loading occurrence positions: plain position lists, exact motif scans of
//! FASTA sequences on both strands, and rescaling to analysis units.
//!
//! A genome of length `L` is scanned as one virtual sequence of length
//! `2L + spacer`: the forward strand, then `spacer` sentinel bases that never
//! match anything, then the reverse complement read 5'→3'. Positions are
//! 1-based coordinates of the first motif base in that virtual sequence.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::estimator::ProcessSample;

/// Sentinel for spacer bases and for any letter outside `acgt`.
const SENTINEL: u8 = b'n';

/// Sorted, non-negative occurrence positions.
#[derive(Debug, Clone, PartialEq)]
pub struct OccurrenceSet {
    positions: Vec<f64>,
    /// How many bases one position unit stands for: 1 for raw bases, 1000
    /// after a 1:1000 rescale.
    bases_per_unit: f64,
    source: String,
}

impl OccurrenceSet {
    pub fn new(mut positions: Vec<f64>, bases_per_unit: f64, source: impl Into<String>) -> Result<Self> {
        if positions.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(invalid("positions", "positions must be finite and non-negative"));
        }
        if !(bases_per_unit.is_finite() && bases_per_unit > 0.0) {
            return Err(invalid("unit", "bases per unit must be positive"));
        }
        positions.sort_unstable_by(f64::total_cmp);
        Ok(Self {
            positions,
            bases_per_unit,
            source: source.into(),
        })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn bases_per_unit(&self) -> f64 {
        self.bases_per_unit
    }

    pub fn unit_label(&self) -> String {
        let u = self.bases_per_unit;
        if u == 1.0 {
            "bases".to_string()
        } else if u == 1000.0 {
            "kilobases".to_string()
        } else {
            format!("{u} bases")
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// One position per line, the format [`read_positions`] accepts.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# {} ({})", self.source, self.unit_label())?;
        for p in &self.positions {
            writeln!(out, "{p}")?;
        }
        Ok(())
    }
}

/// Parses one decimal per line. Blank lines and anything after `#` are
/// ignored. Positions are taken to be in bases.
pub fn read_positions(text: &str, source: &str) -> Result<OccurrenceSet> {
    let mut positions = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let x: f64 = line.parse().map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("`{line}`: {e}"),
        })?;
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("position {x} must be finite and non-negative"),
            });
        }
        positions.push(x);
    }
    OccurrenceSet::new(positions, 1.0, source)
}

/// Concatenates every record of a FASTA text, lowercased, skipping `>`
/// header lines. Text without headers is read as one bare sequence.
pub fn parse_fasta(text: &str) -> Vec<u8> {
    text.lines()
        .filter(|l| !l.starts_with('>') && !l.starts_with(';'))
        .flat_map(|l| l.bytes().filter(|b| !b.is_ascii_whitespace()))
        .map(normalize_base)
        .collect()
}

fn normalize_base(b: u8) -> u8 {
    match b.to_ascii_lowercase() {
        c @ (b'a' | b'c' | b'g' | b't') => c,
        _ => SENTINEL,
    }
}

fn complement(b: u8) -> u8 {
    match b {
        b'a' => b't',
        b't' => b'a',
        b'c' => b'g',
        b'g' => b'c',
        _ => SENTINEL,
    }
}

pub fn reverse_complement(seq: &[u8]) -> Vec<u8> {
    seq.iter().rev().map(|&b| complement(normalize_base(b))).collect()
}

/// Forward strand, `spacer_len` sentinels, reverse complement.
pub fn virtual_sequence(seq: &[u8], spacer_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(2 * seq.len() + spacer_len);
    out.extend(seq.iter().map(|&b| normalize_base(b)));
    out.extend(std::iter::repeat_n(SENTINEL, spacer_len));
    out.extend(reverse_complement(seq));
    out
}

fn validate_motif(motif: &str) -> Result<Vec<u8>> {
    let m: Vec<u8> = motif.bytes().map(|b| b.to_ascii_lowercase()).collect();
    if m.is_empty() || m.iter().any(|b| !matches!(b, b'a' | b'c' | b'g' | b't')) {
        return Err(Error::InvalidMotif(motif.to_string()));
    }
    Ok(m)
}

/// Start offsets (0-based) of every possibly overlapping occurrence of
/// `pattern` in `text`, by Knuth–Morris–Pratt.
fn find_all(text: &[u8], pattern: &[u8]) -> Vec<usize> {
    let m = pattern.len();
    let mut fail = vec![0usize; m];
    let mut k = 0;
    for i in 1..m {
        while k > 0 && pattern[i] != pattern[k] {
            k = fail[k - 1];
        }
        if pattern[i] == pattern[k] {
            k += 1;
        }
        fail[i] = k;
    }
    let mut hits = Vec::new();
    let mut q = 0;
    for (i, &c) in text.iter().enumerate() {
        while q > 0 && c != pattern[q] {
            q = fail[q - 1];
        }
        if c == pattern[q] {
            q += 1;
        }
        if q == m {
            hits.push(i + 1 - m);
            q = fail[q - 1];
        }
    }
    hits
}

/// Exact motif occurrences on both strands of `seq`, in base units.
pub fn scan_sequence(seq: &[u8], motif: &str, spacer_len: usize) -> Result<OccurrenceSet> {
    let pattern = validate_motif(motif)?;
    let text = virtual_sequence(seq, spacer_len);
    let positions = find_all(&text, &pattern)
        .into_iter()
        .map(|i| (i + 1) as f64)
        .collect();
    OccurrenceSet::new(positions, 1.0, motif)
}

/// [`scan_sequence`] over the concatenated records of a FASTA text.
pub fn scan_fasta(fasta: &str, motif: &str, spacer_len: usize) -> Result<OccurrenceSet> {
    scan_sequence(&parse_fasta(fasta), motif, spacer_len)
}

/// Divides every position by `factor`.
pub fn rescale(occ: &OccurrenceSet, factor: f64) -> Result<OccurrenceSet> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(invalid("factor", format!("must be positive, got {factor}")));
    }
    Ok(OccurrenceSet {
        positions: occ.positions.iter().map(|x| x / factor).collect(),
        bases_per_unit: occ.bases_per_unit * factor,
        source: occ.source.clone(),
    })
}

/// Pairs a parent set with a child set on the horizon `[0, T]`.
pub fn to_sample(parents: &OccurrenceSet, children: &OccurrenceSet, horizon: f64) -> Result<ProcessSample> {
    if parents.bases_per_unit != children.bases_per_unit {
        return Err(Error::UnitMismatch {
            parents: parents.bases_per_unit,
            children: children.bases_per_unit,
        });
    }
    if let Some(&max) = parents.positions.last() {
        if horizon <= max {
            return Err(Error::HorizonTooShort {
                horizon,
                max_parent: max,
            });
        }
    }
    ProcessSample::new(parents.positions.clone(), children.positions.clone(), horizon)
}
