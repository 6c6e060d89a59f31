//! Spectrum traces, their text format, and topographic peak finding.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Normalization {
    Raw,
    UnitMax,
}

impl Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Raw => "raw",
            Normalization::UnitMax => "unit_max",
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Normalization::Raw),
            "unit_max" => Ok(Normalization::UnitMax),
            other => Err(Error::param("normalization", format!("unknown normalization `{other}`"))),
        }
    }
}

/// Intensity against frequency at one readout time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTrace {
    readout_time: f64,
    omegas: Vec<f64>,
    intensities: Vec<f64>,
    normalization: Normalization,
    meta: BTreeMap<String, String>,
}

impl SpectrumTrace {
    pub fn new(readout_time: f64, omegas: Vec<f64>, intensities: Vec<f64>, normalization: Normalization) -> Result<Self> {
        if omegas.len() != intensities.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} frequencies but {} intensities",
                omegas.len(),
                intensities.len()
            )));
        }
        check_increasing(&omegas)?;
        if let Some(bad) = intensities.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::param("intensity", format!("{bad} is not a finite nonnegative value")));
        }
        Ok(Self { readout_time, omegas, intensities, normalization, meta: BTreeMap::new() })
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.meta.insert(key.into(), value.to_string());
        self
    }

    pub fn readout_time(&self) -> f64 {
        self.readout_time
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn intensities(&self) -> &[f64] {
        &self.intensities
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.omegas.iter().copied().zip(self.intensities.iter().copied())
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensities.iter().copied().fold(0.0, f64::max)
    }

    /// Scaled so the largest intensity is 1; an all-zero trace stays zero.
    pub fn to_unit_max(&self) -> Self {
        let max = self.max_intensity();
        let intensities = if max > 0.0 {
            self.intensities.iter().map(|v| v / max).collect()
        } else {
            self.intensities.clone()
        };
        Self { intensities, normalization: Normalization::UnitMax, ..self.clone() }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# readout_time: {}", self.readout_time).unwrap();
        writeln!(out, "# normalization: {}", self.normalization.as_str()).unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "# {k}: {v}").unwrap();
        }
        out.push_str("omega\tintensity\n");
        for (w, s) in self.points() {
            writeln!(out, "{w}\t{s}").unwrap();
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut readout = None;
        let mut norm = Normalization::Raw;
        let mut meta = BTreeMap::new();
        let mut omegas = Vec::new();
        let mut intensities = Vec::new();
        let mut seen_header = false;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(rest) = line.strip_prefix("# ") {
                let (k, v) = rest
                    .split_once(": ")
                    .ok_or_else(|| Error::Parse { line: lineno, reason: "metadata without `: `".into() })?;
                match k {
                    "readout_time" => readout = Some(parse_f64(v, lineno)?),
                    "normalization" => norm = v.parse()?,
                    _ => {
                        meta.insert(k.to_string(), v.to_string());
                    }
                }
            } else if line == "omega\tintensity" {
                seen_header = true;
            } else if !line.is_empty() {
                let (w, s) = line
                    .split_once('\t')
                    .ok_or_else(|| Error::Parse { line: lineno, reason: "expected two columns".into() })?;
                omegas.push(parse_f64(w, lineno)?);
                intensities.push(parse_f64(s, lineno)?);
            }
        }
        if !seen_header {
            return Err(Error::Parse { line: 0, reason: "missing column header".into() });
        }
        let readout = readout.ok_or_else(|| Error::Parse { line: 0, reason: "missing readout_time".into() })?;
        let mut trace = Self::new(readout, omegas, intensities, norm)?;
        trace.meta = meta;
        Ok(trace)
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse().map_err(|e| Error::Parse { line, reason: format!("`{s}`: {e}") })
}

pub(crate) fn check_increasing(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("omegas", "frequencies must be finite and strictly increasing"));
    }
    Ok(())
}

/// `count` evenly spaced values from `min` to `max` inclusive.
pub fn linspace(min: f64, max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..count).map(|k| min + (max - min) * k as f64 / (count - 1) as f64).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub index: usize,
    pub omega: f64,
    pub intensity: f64,
    pub prominence: f64,
    /// Vertex of the parabola through the peak sample and its neighbours.
    pub refined_omega: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeakList {
    peaks: Vec<Peak>,
}

impl PeakList {
    pub fn peaks(&self) -> &[Peak] {
        &self.peaks
    }

    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.omega).collect()
    }

    pub fn refined_omegas(&self) -> Vec<f64> {
        self.peaks.iter().map(|p| p.refined_omega).collect()
    }

    /// The `n` most prominent peaks, in frequency order.
    pub fn top_n(&self, n: usize) -> PeakList {
        let mut by_prom = self.peaks.clone();
        by_prom.sort_by(|a, b| b.prominence.total_cmp(&a.prominence).then(a.index.cmp(&b.index)));
        by_prom.truncate(n);
        by_prom.sort_by_key(|p| p.index);
        PeakList { peaks: by_prom }
    }
}

/// Local maxima whose topographic prominence is at least
/// `min_prominence_frac` times the largest intensity.
pub fn find_peaks(trace: &SpectrumTrace, min_prominence_frac: f64) -> PeakList {
    find_peaks_in(trace.omegas(), trace.intensities(), min_prominence_frac)
}

pub fn find_peaks_in(xs: &[f64], ys: &[f64], min_prominence_frac: f64) -> PeakList {
    let n = ys.len();
    let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let threshold = min_prominence_frac * max;
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if ys[i - 1] < ys[i] {
            // Walk across a flat top; the peak sits at its middle.
            let mut j = i;
            while j + 1 < n && ys[j + 1] == ys[i] {
                j += 1;
            }
            if j + 1 < n && ys[j + 1] < ys[i] {
                let idx = (i + j) / 2;
                let prominence = prominence(ys, idx);
                if prominence > 0.0 && prominence >= threshold {
                    peaks.push(Peak {
                        index: idx,
                        omega: xs[idx],
                        intensity: ys[idx],
                        prominence,
                        refined_omega: refine(xs, ys, idx),
                    });
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    PeakList { peaks }
}

fn prominence(ys: &[f64], idx: usize) -> f64 {
    let top = ys[idx];
    let mut left_min = top;
    for k in (0..idx).rev() {
        if ys[k] > top {
            break;
        }
        left_min = left_min.min(ys[k]);
    }
    let mut right_min = top;
    for &y in &ys[idx + 1..] {
        if y > top {
            break;
        }
        right_min = right_min.min(y);
    }
    top - left_min.max(right_min)
}

fn refine(xs: &[f64], ys: &[f64], idx: usize) -> f64 {
    let (a, b, c) = (ys[idx - 1], ys[idx], ys[idx + 1]);
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return xs[idx];
    }
    let delta = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
    let step = if delta >= 0.0 { xs[idx + 1] - xs[idx] } else { xs[idx] - xs[idx - 1] };
    xs[idx] + delta * step
}

/// Largest distance between positions paired in sorted order; `None` when
/// the lists differ in length.
pub fn max_pairwise_deviation(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Some(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}
