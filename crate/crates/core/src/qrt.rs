//! Two-time correlations by the quantum regression theorem, the stationary
//! Wiener–Khintchine spectrum, and the two-time correlation grid.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lindblad::{steady_state, steps_for, unvectorize, vectorize, Frame, LindbladModel, Propagator, ThreeLevelParams};
use crate::quantum::{CMatrix, CVector, DensityMatrix, HilbertSpace, Operator, C64, ZERO};
use crate::spectrum::{check_increasing, parse_f64, Normalization, SpectrumTrace};

/// Conjugate-symmetry tolerance of a correlation grid.
pub const GRID_SYMMETRY_TOL: f64 = 1e-7;

/// The observed source operator, `O(t) = Σₐ Oₐ e^{−iνₐt}`.
///
/// In the rotating frame each decay channel keeps its optical carrier νₐ so
/// that spectra come out at absolute frequencies; in the lab frame the
/// operator is a single static term.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionOperator {
    components: Vec<(Operator, f64)>,
}

impl DetectionOperator {
    pub fn new(op: Operator) -> Self {
        Self { components: vec![(op, 0.0)] }
    }

    pub fn with_carriers(components: Vec<(Operator, f64)>) -> Result<Self> {
        let Some((first, _)) = components.first() else {
            return Err(Error::param("detection", "no components"));
        };
        if components.iter().any(|(op, _)| op.space() != first.space()) {
            return Err(Error::DimensionMismatch("detection components on different spaces".into()));
        }
        Ok(Self { components })
    }

    /// `Γ₁|1⟩⟨2| + Γ₂|1⟩⟨3|`, carriers attached in the rotating frame.
    pub fn for_source(params: &ThreeLevelParams, frame: Frame) -> Result<Self> {
        let space = HilbertSpace::single(3)?;
        let a = &Operator::transition(&space, 0, 1)? * params.decays[0];
        let b = &Operator::transition(&space, 0, 2)? * params.decays[1];
        match frame {
            Frame::Lab => Ok(Self::new(&a + &b)),
            Frame::Rotating => {
                let [w12, w13] = params.transition_frequencies();
                Self::with_carriers(vec![(a, w12), (b, w13)])
            }
        }
    }

    pub fn components(&self) -> &[(Operator, f64)] {
        &self.components
    }

    pub fn space(&self) -> &HilbertSpace {
        self.components[0].0.space()
    }

    /// Components with equal carriers summed, sorted by carrier.
    pub fn carrier_groups(&self) -> Vec<(f64, CMatrix)> {
        let mut groups: Vec<(f64, CMatrix)> = Vec::new();
        for (op, nu) in &self.components {
            match groups.iter_mut().find(|(g, _)| (g - nu).abs() <= 1e-12 * nu.abs().max(1.0)) {
                Some((_, m)) => *m += op.matrix(),
                None => groups.push((*nu, op.matrix().clone())),
            }
        }
        groups.sort_by(|a, b| a.0.total_cmp(&b.0));
        groups
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|(op, _)| op.matrix().iter().all(|z| *z == ZERO))
    }
}

fn require_static(model: &LindbladModel) -> Result<()> {
    if model.is_time_dependent() {
        return Err(Error::TimeDependent);
    }
    Ok(())
}

fn check_space(model: &LindbladModel, space: &HilbertSpace, what: &str) -> Result<()> {
    if space != model.space() {
        return Err(Error::DimensionMismatch(format!("{what} on {space} but model on {}", model.space())));
    }
    Ok(())
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if let Some(&neg) = taus.iter().find(|t| **t < 0.0) {
        return Err(Error::NegativeDelay(neg));
    }
    if taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::UnsortedDelays);
    }
    Ok(())
}

/// `Tr(A·X)` for a row-major vectorised `X`.
fn trace_with(a_dagger_vec: &CVector, x: &CVector) -> C64 {
    a_dagger_vec.dotc(x)
}

fn march(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    t: f64,
    taus: &[f64],
    dt: f64,
    seed: impl Fn(&CMatrix) -> CMatrix,
    o2: &Operator,
) -> Result<Vec<C64>> {
    require_static(model)?;
    check_space(model, rho0.space(), "initial state")?;
    check_space(model, o2.space(), "operator")?;
    check_taus(taus)?;
    if t < 0.0 {
        return Err(Error::param("t", format!("{t} is negative")));
    }
    let d = model.dim();
    let prop = Propagator::new(model, dt)?;
    let mut v = vectorize(rho0.matrix());
    prop.advance(&mut v, 0.0, t);
    let mut x = vectorize(&seed(&unvectorize(&v, d)));
    let probe = vectorize(&o2.matrix().adjoint());
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        prop.advance(&mut x, t + prev, t + tau);
        prev = tau;
        out.push(trace_with(&probe, &x));
    }
    Ok(out)
}

/// `⟨O₂(t+τ) O₁(t)⟩` for each τ, starting from `rho0` at time 0.
pub fn qrt_two_time(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    o1: &Operator,
    o2: &Operator,
    t: f64,
    taus: &[f64],
    dt: f64,
) -> Result<Vec<C64>> {
    check_space(model, o1.space(), "operator")?;
    march(model, rho0, t, taus, dt, |rho| o1.matrix() * rho, o2)
}

/// `⟨O₁(t) O₂(t+τ) O₃(t)⟩` for each τ, starting from `rho0` at time 0.
pub fn qrt_sandwich(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    o1: &Operator,
    o2: &Operator,
    o3: &Operator,
    t: f64,
    taus: &[f64],
    dt: f64,
) -> Result<Vec<C64>> {
    check_space(model, o1.space(), "operator")?;
    check_space(model, o3.space(), "operator")?;
    march(model, rho0, t, taus, dt, |rho| o3.matrix() * rho * o1.matrix(), o2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Taper {
    None,
    /// `1 − τ/T_max`, the weight of a finite record of length `T_max`.
    #[default]
    Triangular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WkOptions {
    pub taper: Taper,
    /// Remove the coherent part `|⟨O⟩|²` before transforming and report it
    /// as delta lines instead.
    pub subtract_elastic: bool,
}

impl Default for WkOptions {
    fn default() -> Self {
        Self { taper: Taper::Triangular, subtract_elastic: true }
    }
}

impl WkOptions {
    /// The bare truncated transform of the full correlation.
    pub fn untapered() -> Self {
        Self { taper: Taper::None, subtract_elastic: false }
    }
}

/// A coherent line `weight · δ(ω − omega)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElasticLine {
    pub omega: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WkSpectrum {
    pub trace: SpectrumTrace,
    pub elastic: Vec<ElasticLine>,
}

/// Stationary correlation `g(τ) = ⟨O†(t)O(t+τ)⟩` sampled at `k·T_max/n`,
/// together with the coherent lines.
pub fn stationary_correlation(
    model: &LindbladModel,
    det: &DetectionOperator,
    t_max: f64,
    dtau: f64,
    subtract_elastic: bool,
) -> Result<(Vec<f64>, Vec<C64>, Vec<ElasticLine>)> {
    check_space(model, det.space(), "detection operator")?;
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::param("t_max", format!("{t_max} must be finite and > 0")));
    }
    let n = steps_for(t_max, dtau);
    let h = t_max / n as f64;
    let taus: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
    let mut g = vec![ZERO; n + 1];
    let mut elastic = Vec::new();
    if det.is_zero() {
        return Ok((taus, g, elastic));
    }
    let ss = steady_state(model)?;
    let prop = Propagator::new(model, h)?;
    for (nu, o) in det.carrier_groups() {
        // g(τ) = Tr[O Λ_τ(ρ O†)], regression on the right-hand operator.
        let mut x = vectorize(&(ss.matrix() * o.adjoint()));
        let probe = vectorize(&o.adjoint());
        let mean = (ss.matrix() * &o).trace();
        let coherent = mean.norm_sqr();
        elastic.push(ElasticLine { omega: nu, weight: 2.0 * PI * coherent });
        let shift = if subtract_elastic { coherent } else { 0.0 };
        for (k, gk) in g.iter_mut().enumerate() {
            if k > 0 {
                prop.advance(&mut x, 0.0, h);
            }
            let value = trace_with(&probe, &x) - shift;
            *gk += value * C64::from_polar(1.0, -nu * taus[k]);
        }
    }
    Ok((taus, g, elastic))
}

/// `2 Re Σₖ wₖ a(τₖ) g(τₖ) e^{iωτₖ}` on a uniform τ grid starting at 0:
/// trapezoid weights and an optional taper `a`.
pub fn wk_transform(taus: &[f64], g: &[C64], omegas: &[f64], taper: Taper) -> Vec<f64> {
    let n = taus.len();
    if n < 2 {
        return vec![0.0; omegas.len()];
    }
    let h = taus[1] - taus[0];
    let t_max = taus[n - 1];
    let coeffs: Vec<C64> = g
        .iter()
        .zip(taus)
        .enumerate()
        .map(|(k, (gk, tau))| {
            let w = if k == 0 || k == n - 1 { 0.5 * h } else { h };
            let a = match taper {
                Taper::None => 1.0,
                Taper::Triangular => 1.0 - tau / t_max,
            };
            gk * (w * a)
        })
        .collect();
    omegas
        .par_iter()
        .map(|&w| {
            let step = C64::from_polar(1.0, w * h);
            let mut phase = C64::from_polar(1.0, w * taus[0]);
            let mut acc = ZERO;
            for (k, c) in coeffs.iter().enumerate() {
                if k % 256 == 0 {
                    phase = C64::from_polar(1.0, w * taus[k]);
                }
                acc += c * phase;
                phase *= step;
            }
            2.0 * acc.re
        })
        .collect()
}

/// Unclipped stationary spectrum values.
pub fn wk_raw(
    model: &LindbladModel,
    det: &DetectionOperator,
    omegas: &[f64],
    t_max: f64,
    dtau: f64,
    opts: WkOptions,
) -> Result<Vec<f64>> {
    check_increasing(omegas)?;
    let (taus, g, _) = stationary_correlation(model, det, t_max, dtau, opts.subtract_elastic)?;
    Ok(wk_transform(&taus, &g, omegas, opts.taper))
}

/// Stationary Wiener–Khintchine spectrum, negative values clipped to zero.
pub fn wk_spectrum(
    model: &LindbladModel,
    det: &DetectionOperator,
    omegas: &[f64],
    t_max: f64,
    dtau: f64,
    opts: WkOptions,
) -> Result<WkSpectrum> {
    check_increasing(omegas)?;
    let (taus, g, elastic) = stationary_correlation(model, det, t_max, dtau, opts.subtract_elastic)?;
    let values: Vec<f64> = wk_transform(&taus, &g, omegas, opts.taper).into_iter().map(|v| v.max(0.0)).collect();
    let mut trace = SpectrumTrace::new(f64::INFINITY, omegas.to_vec(), values, Normalization::Raw)?
        .with_meta("route", "wk")
        .with_meta("t_max", t_max)
        .with_meta("dtau", dtau)
        .with_meta("taper", format!("{:?}", opts.taper).to_lowercase())
        .with_meta("subtract_elastic", opts.subtract_elastic);
    if opts.subtract_elastic {
        for line in &elastic {
            trace = trace.with_meta(format!("elastic_w{}", line.omega), line.weight);
        }
    }
    Ok(WkSpectrum { trace, elastic })
}

/// `⟨O†(t₁)O(t₂)⟩` on the nodes `k·T/N`, `k = 0..=N`, of both axes.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationGrid {
    t_final: f64,
    n: usize,
    values: CMatrix,
}

impl CorrelationGrid {
    pub fn new(t_final: f64, n: usize, values: CMatrix) -> Result<Self> {
        if n < 1 || !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::param("grid", format!("T = {t_final}, N = {n}")));
        }
        if values.nrows() != n + 1 || values.ncols() != n + 1 {
            return Err(Error::DimensionMismatch(format!(
                "grid with N = {n} needs {0}x{0} values, got {1}x{2}",
                n + 1,
                values.nrows(),
                values.ncols()
            )));
        }
        Ok(Self { t_final, n, values })
    }

    /// Fills the grid from `f(t₁, t₂)`.
    pub fn from_fn(t_final: f64, n: usize, f: impl Fn(f64, f64) -> C64) -> Result<Self> {
        let dt = t_final / n as f64;
        let values = CMatrix::from_fn(n + 1, n + 1, |m, k| f(m as f64 * dt, k as f64 * dt));
        Self::new(t_final, n, values)
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.t_final / self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|k| k as f64 * self.spacing()).collect()
    }

    pub fn values(&self) -> &CMatrix {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut CMatrix {
        &mut self.values
    }

    pub fn check(&self) -> Result<()> {
        let dt = self.spacing();
        for m in 0..=self.n {
            let d = self.values[(m, m)];
            if d.im.abs() > GRID_SYMMETRY_TOL || d.re < -1e-9 {
                return Err(Error::Invariant { time: m as f64 * dt, detail: format!("diagonal entry {d}") });
            }
            for k in 0..m {
                let gap = (self.values[(m, k)] - self.values[(k, m)].conj()).norm();
                if gap > GRID_SYMMETRY_TOL {
                    return Err(Error::Invariant {
                        time: m as f64 * dt,
                        detail: format!("conjugate symmetry broken by {gap:e} at ({m}, {k})"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let dt = self.spacing();
        let mut out = String::new();
        writeln!(out, "# T: {}", self.t_final).unwrap();
        writeln!(out, "# N: {}", self.n).unwrap();
        out.push_str("t1\tt2\tre\tim\n");
        for m in 0..=self.n {
            for k in 0..=self.n {
                let z = self.values[(m, k)];
                writeln!(out, "{}\t{}\t{}\t{}", m as f64 * dt, k as f64 * dt, z.re, z.im).unwrap();
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut t_final = None;
        let mut n = None;
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(v) = line.strip_prefix("# T: ") {
                t_final = Some(parse_f64(v, lineno)?);
            } else if let Some(v) = line.strip_prefix("# N: ") {
                n = Some(v.trim().parse::<usize>().map_err(|e| Error::Parse { line: lineno, reason: e.to_string() })?);
            } else if line.starts_with('#') || line.starts_with("t1") || line.is_empty() {
                continue;
            } else {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 4 {
                    return Err(Error::Parse { line: lineno, reason: "expected four columns".into() });
                }
                entries.push(C64::new(parse_f64(cols[2], lineno)?, parse_f64(cols[3], lineno)?));
            }
        }
        let (t_final, n) = match (t_final, n) {
            (Some(t), Some(n)) => (t, n),
            _ => return Err(Error::Parse { line: 0, reason: "missing T or N header".into() }),
        };
        if entries.len() != (n + 1) * (n + 1) {
            return Err(Error::Parse { line: 0, reason: format!("{} entries for N = {n}", entries.len()) });
        }
        Self::new(t_final, n, CMatrix::from_row_slice(n + 1, n + 1, &entries))
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }
}

/// Fills `t₁ ≥ t₂` by regression from each `t₂` node and mirrors the rest.
pub fn correlation_grid(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    det: &DetectionOperator,
    t_final: f64,
    n: usize,
    dt: f64,
) -> Result<CorrelationGrid> {
    require_static(model)?;
    check_space(model, rho0.space(), "initial state")?;
    check_space(model, det.space(), "detection operator")?;
    if n < 2 {
        return Err(Error::param("n", format!("{n} grid intervals; need at least 2")));
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(Error::param("t_final", format!("{t_final} must be finite and > 0")));
    }
    let d = model.dim();
    let spacing = t_final / n as f64;
    let prop = Propagator::new(model, dt)?;
    let step = prop.transfer_matrix(0.0, spacing);
    let groups = det.carrier_groups();
    let probes: Vec<(f64, CVector)> = groups.iter().map(|(nu, o)| (*nu, vectorize(o))).collect();

    let mut states = Vec::with_capacity(n + 1);
    let mut v = vectorize(rho0.matrix());
    for _ in 0..=n {
        states.push(v.clone());
        v = &step * v;
    }

    let columns: Vec<Vec<C64>> = (0..=n)
        .into_par_iter()
        .map(|col| {
            let t2 = col as f64 * spacing;
            let rho = unvectorize(&states[col], d);
            let mut seed = CMatrix::zeros(d, d);
            for (nu, o) in &groups {
                seed += (o * &rho) * C64::from_polar(1.0, -nu * t2);
            }
            let mut y = vectorize(&seed);
            let mut scratch = CVector::zeros(y.len());
            let mut out = Vec::with_capacity(n + 1 - col);
            for row in col..=n {
                if row > col {
                    scratch.gemv(C64::new(1.0, 0.0), &step, &y, ZERO);
                    std::mem::swap(&mut y, &mut scratch);
                }
                let t1 = row as f64 * spacing;
                let mut acc = ZERO;
                for (nu, probe) in &probes {
                    // Tr(Oₐ† Y) is the Frobenius product ⟨Oₐ, Y⟩.
                    acc += probe.dotc(&y) * C64::from_polar(1.0, nu * t1);
                }
                out.push(acc);
            }
            out
        })
        .collect();

    let mut values = CMatrix::zeros(n + 1, n + 1);
    for (col, entries) in columns.iter().enumerate() {
        for (offset, z) in entries.iter().enumerate() {
            let row = col + offset;
            values[(row, col)] = *z;
            values[(col, row)] = z.conj();
        }
    }
    for k in 0..=n {
        values[(k, k)] = C64::new(values[(k, k)].re, 0.0);
    }
    CorrelationGrid::new(t_final, n, values)
}
