//! A two-level analyzer atom driven by a small fraction of the source's
//! fluorescence, with the source feeding the analyzer but not the reverse.
//!
//! The joint space is `[3, 2]`: source first, analyzer second with basis
//! `|g⟩ = 0`, `|e⟩ = 1`. The source sits in its resonant rotating frame and
//! the analyzer in a frame at zero frequency, so every operator that links a
//! source decay channel to the analyzer carries that channel's carrier.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lindblad::{
    evolve_sampled, three_level_model, vectorize, CollapseOperator, DriveTerm, Frame, LindbladModel, ThreeLevelParams,
};
use crate::quantum::{lift, tensor, CMatrix, CVector, DensityMatrix, HilbertSpace, Operator, StateVector, C64, I, ZERO};
use crate::spectrum::{check_increasing, linspace, parse_f64, Normalization, SpectrumTrace};

/// Largest accepted total jump probability in one step.
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CascadedParams {
    pub source: ThreeLevelParams,
    pub omega_b: f64,
    pub p: f64,
    pub gamma_b: f64,
}

impl Default for CascadedParams {
    fn default() -> Self {
        Self { source: ThreeLevelParams::default(), omega_b: 4.0, p: 0.005, gamma_b: 0.001 }
    }
}

impl CascadedParams {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::param("p", format!("{} is outside [0, 1]", self.p)));
        }
        if !(self.gamma_b > 0.0 && self.gamma_b.is_finite()) {
            return Err(Error::param("gamma_b", format!("{} must be finite and > 0", self.gamma_b)));
        }
        if !self.omega_b.is_finite() {
            return Err(Error::param("omega_b", "must be finite"));
        }
        Ok(())
    }

    pub fn with_omega_b(self, omega_b: f64) -> Self {
        Self { omega_b, ..self }
    }
}

#[derive(Clone, Debug)]
pub struct CascadedModel {
    params: CascadedParams,
    model: LindbladModel,
    excited: Operator,
}

impl CascadedModel {
    pub fn params(&self) -> &CascadedParams {
        &self.params
    }

    pub fn model(&self) -> &LindbladModel {
        &self.model
    }

    /// `I ⊗ |e⟩⟨e|`.
    pub fn analyzer_excited(&self) -> &Operator {
        &self.excited
    }

    pub fn space(&self) -> &HilbertSpace {
        self.model.space()
    }

    /// The source on its own, in the same rotating frame.
    pub fn source_model(&self) -> Result<LindbladModel> {
        three_level_model(&self.params.source, Frame::Rotating)
    }

    /// `|level⟩ ⊗ |g⟩` with the source level 0-based.
    pub fn initial_state(&self, level: usize) -> Result<StateVector> {
        let a = StateVector::basis(&HilbertSpace::single(3)?, level)?;
        let b = StateVector::basis(&HilbertSpace::single(2)?, 0)?;
        Ok(a.tensor(&b))
    }
}

pub fn build_cascaded(cp: &CascadedParams) -> Result<CascadedModel> {
    cp.validate()?;
    let s3 = HilbertSpace::single(3)?;
    let s2 = HilbertSpace::single(2)?;
    let joint = HilbertSpace::new(vec![3, 2])?;
    let id2 = Operator::identity(&s2);
    let sigma_minus = Operator::transition(&s2, 0, 1)?;
    let b = lift(&sigma_minus, 1, &joint)?;
    let excited = lift(&Operator::projector(&s2, 1)?, 1, &joint)?;

    let source = three_level_model(&cp.source, Frame::Rotating)?;
    let h_a = tensor(source.h_static(), &id2);
    let h_b = &excited * cp.omega_b;
    let h = &h_a + &h_b;

    let [g1, g2] = cp.source.decays;
    let [nu1, nu2] = cp.source.transition_frequencies();
    let a1 = tensor(&Operator::transition(&s3, 0, 1)?, &id2);
    let a2 = tensor(&Operator::transition(&s3, 0, 2)?, &id2);
    let kb = (0.5 * cp.gamma_b).sqrt();

    // H_C = (κ/2)(X e^{iνt} + h.c.), X = i|k⟩⟨1| ⊗ σ₋, κ = √(Γ p)·√(Γ_B/2):
    // the product of the two amplitudes sharing a collapse operator below.
    let mut drives = Vec::new();
    for (gamma, nu, level) in [(g1, nu1, 1), (g2, nu2, 2)] {
        let x = tensor(&Operator::transition(&s3, level, 0)?, &sigma_minus).scaled(I);
        let kappa = (gamma * cp.p).sqrt() * kb;
        drives.push(DriveTerm::new(x, 0.5 * kappa, nu)?);
    }

    let collapse = vec![
        CollapseOperator::phased(vec![(&a1 * (g1 * (1.0 - cp.p)).sqrt(), nu1)])?,
        CollapseOperator::phased(vec![(&a2 * (g2 * (1.0 - cp.p)).sqrt(), nu2)])?,
        CollapseOperator::phased(vec![(&a1 * (g1 * cp.p).sqrt(), nu1), (&b * kb, 0.0)])?,
        CollapseOperator::phased(vec![(&a2 * (g2 * cp.p).sqrt(), nu2), (&b * kb, 0.0)])?,
    ];
    let model = LindbladModel::new(h, drives, collapse, Frame::Rotating)?;
    Ok(CascadedModel { params: *cp, model, excited })
}

/// Record times `k·record_interval` up to `t_final`, integrated with step `dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub t_final: f64,
    pub dt: f64,
    pub record_interval: f64,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", format!("{} must be finite and > 0", self.dt)));
        }
        if !(self.record_interval >= self.dt) {
            return Err(Error::param("record_interval", "must be at least dt"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::param("t_final", format!("{} must be finite and > 0", self.t_final)));
        }
        let r = self.record_interval / self.dt;
        if (r - r.round()).abs() > 1e-6 {
            return Err(Error::param("record_interval", "must be a whole number of steps"));
        }
        let k = self.t_final / self.record_interval;
        if (k - k.round()).abs() > 1e-6 {
            return Err(Error::param("t_final", "must be a whole number of record intervals"));
        }
        Ok(())
    }

    fn steps_per_record(&self) -> usize {
        (self.record_interval / self.dt).round() as usize
    }

    fn n_records(&self) -> usize {
        (self.t_final / self.record_interval).round() as usize
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_records()).map(|k| k as f64 * self.record_interval).collect()
    }
}

/// Analyzer excitation against time for one analyzer frequency.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationRecord {
    pub omega_b: f64,
    pub times: Vec<f64>,
    pub p_excited: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl ExcitationRecord {
    pub fn new(omega_b: f64, times: Vec<f64>, p_excited: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if times.len() != p_excited.len() || times.len() != stderr.len() {
            return Err(Error::DimensionMismatch("record columns differ in length".into()));
        }
        if let Some(p) = p_excited.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param("p_excited", format!("{p} is outside [0, 1]")));
        }
        Ok(Self { omega_b, times, p_excited, stderr })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# omega_b: {}", self.omega_b).unwrap();
        out.push_str("time\tp_excited\tstderr\n");
        for ((t, p), e) in self.times.iter().zip(&self.p_excited).zip(&self.stderr) {
            writeln!(out, "{t}\t{p}\t{e}").unwrap();
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut omega_b = None;
        let (mut times, mut ps, mut errs) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if let Some(v) = line.strip_prefix("# omega_b: ") {
                omega_b = Some(parse_f64(v, lineno)?);
            } else if line.starts_with('#') || line.starts_with("time") || line.is_empty() {
                continue;
            } else {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 3 {
                    return Err(Error::Parse { line: lineno, reason: "expected three columns".into() });
                }
                times.push(parse_f64(cols[0], lineno)?);
                ps.push(parse_f64(cols[1], lineno)?);
                errs.push(parse_f64(cols[2], lineno)?);
            }
        }
        let omega_b = omega_b.ok_or_else(|| Error::Parse { line: 0, reason: "missing omega_b".into() })?;
        Self::new(omega_b, times, ps, errs)
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn read_tsv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the frequency stream `freq_index` under `base_seed`.
pub fn frequency_seed(base_seed: u64, freq_index: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ freq_index)
}

/// Seed of trajectory `traj_index` at frequency `freq_index`.
pub fn trajectory_seed(base_seed: u64, freq_index: u64, traj_index: u64) -> u64 {
    splitmix64(frequency_seed(base_seed, freq_index) ^ splitmix64(traj_index))
}

/// Reusable buffers for a quantum-jump trajectory.
struct JumpStepper<'a> {
    heff: &'a [(f64, CMatrix)],
    jumps: Vec<Vec<(f64, &'a CMatrix)>>,
    k: [CVector; 4],
    tmp: CVector,
    phis: Vec<CVector>,
}

impl<'a> JumpStepper<'a> {
    fn new(model: &'a LindbladModel) -> Self {
        let d = model.dim();
        let jumps = model
            .collapse_ops()
            .iter()
            .map(|c| c.terms().iter().map(|(op, nu)| (*nu, op.matrix())).collect())
            .collect::<Vec<_>>();
        let n_jumps = model.collapse_ops().len();
        Self {
            heff: model.heff_components(),
            jumps,
            k: std::array::from_fn(|_| CVector::zeros(d)),
            tmp: CVector::zeros(d),
            phis: vec![CVector::zeros(d); n_jumps],
        }
    }

    /// `out = −i K(t) ψ`.
    fn deriv(heff: &[(f64, CMatrix)], t: f64, psi: &CVector, out: &mut CVector) {
        out.fill(ZERO);
        for (nu, m) in heff {
            out.gemv(C64::from_polar(1.0, nu * t) * (-I), m, psi, C64::new(1.0, 0.0));
        }
    }

    fn no_jump(&mut self, psi: &mut CVector, t: f64, h: f64) {
        let half = C64::new(0.5 * h, 0.0);
        let [k1, k2, k3, k4] = &mut self.k;
        Self::deriv(self.heff, t, psi, k1);
        self.tmp.copy_from(psi);
        self.tmp.axpy(half, k1, C64::new(1.0, 0.0));
        Self::deriv(self.heff, t + 0.5 * h, &self.tmp, k2);
        self.tmp.copy_from(psi);
        self.tmp.axpy(half, k2, C64::new(1.0, 0.0));
        Self::deriv(self.heff, t + 0.5 * h, &self.tmp, k3);
        self.tmp.copy_from(psi);
        self.tmp.axpy(C64::new(h, 0.0), k3, C64::new(1.0, 0.0));
        Self::deriv(self.heff, t + h, &self.tmp, k4);
        let sixth = C64::new(h / 6.0, 0.0);
        psi.axpy(sixth, k1, C64::new(1.0, 0.0));
        psi.axpy(sixth * 2.0, k2, C64::new(1.0, 0.0));
        psi.axpy(sixth * 2.0, k3, C64::new(1.0, 0.0));
        psi.axpy(sixth, k4, C64::new(1.0, 0.0));
        let norm = psi.norm();
        *psi /= C64::new(norm, 0.0);
    }

    fn step(&mut self, psi: &mut CVector, t: f64, h: f64, rng: &mut ChaCha8Rng) -> Result<()> {
        let mut total = 0.0;
        let mut dps = [0.0f64; 16];
        for (k, terms) in self.jumps.iter().enumerate() {
            let phi = &mut self.phis[k];
            phi.fill(ZERO);
            for (nu, a) in terms {
                phi.gemv(C64::from_polar(1.0, -nu * t), a, psi, C64::new(1.0, 0.0));
            }
            let dp = h * phi.norm_squared();
            dps[k] = dp;
            total += dp;
        }
        if total > MAX_JUMP_PROBABILITY {
            return Err(Error::StepTooLarge { dp: total, time: t });
        }
        let r: f64 = rng.gen();
        if r < total {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = self.jumps.len() - 1;
            for (k, dp) in dps.iter().enumerate().take(self.jumps.len()) {
                acc += dp;
                if target < acc {
                    chosen = k;
                    break;
                }
            }
            let phi = &self.phis[chosen];
            let norm = phi.norm();
            psi.copy_from(phi);
            *psi /= C64::new(norm, 0.0);
        } else {
            self.no_jump(psi, t, h);
        }
        Ok(())
    }
}

/// One quantum-jump trajectory of a general model, recording `⟨ψ|A|ψ⟩`.
pub fn jump_trajectory(
    model: &LindbladModel,
    observable: &Operator,
    psi0: &StateVector,
    schedule: &Schedule,
    seed: u64,
) -> Result<Vec<f64>> {
    schedule.validate()?;
    if psi0.space() != model.space() || observable.space() != model.space() {
        return Err(Error::DimensionMismatch("state, observable and model spaces differ".into()));
    }
    if model.collapse_ops().len() > 16 {
        return Err(Error::param("collapse_ops", "at most 16 jump channels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stepper = JumpStepper::new(model);
    let mut psi = psi0.amplitudes().clone();
    let a = observable.matrix();
    let measure = |psi: &CVector| psi.dotc(&(a * psi)).re;
    let per = schedule.steps_per_record();
    let mut out = Vec::with_capacity(schedule.n_records() + 1);
    out.push(measure(&psi));
    let mut step = 0usize;
    for _ in 0..schedule.n_records() {
        for _ in 0..per {
            let t = step as f64 * schedule.dt;
            stepper.step(&mut psi, t, schedule.dt, &mut rng)?;
            step += 1;
        }
        out.push(measure(&psi));
    }
    Ok(out)
}

/// A single trajectory of the analyzer excitation.
pub fn mcwf_trajectory(
    model: &CascadedModel,
    psi0: &StateVector,
    schedule: &Schedule,
    seed: u64,
) -> Result<ExcitationRecord> {
    let p = jump_trajectory(&model.model, &model.excited, psi0, schedule, seed)?;
    let n = p.len();
    ExcitationRecord::new(model.params.omega_b, schedule.times(), p, vec![0.0; n])
}

/// Which trajectories an ensemble averages over.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub base_seed: u64,
    pub freq_index: u64,
    pub schedule: Schedule,
}

/// Mean and standard error of the analyzer excitation over seeded trajectories.
pub fn ensemble_excitation(model: &CascadedModel, psi0: &StateVector, spec: &EnsembleSpec) -> Result<ExcitationRecord> {
    if spec.n_traj == 0 {
        return Err(Error::param("n_traj", "need at least one trajectory"));
    }
    let runs = (0..spec.n_traj as u64)
        .into_par_iter()
        .map(|j| {
            let seed = trajectory_seed(spec.base_seed, spec.freq_index, j);
            jump_trajectory(&model.model, &model.excited, psi0, &spec.schedule, seed)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let (mean, stderr) = mean_and_stderr(&runs);
    ExcitationRecord::new(model.params.omega_b, spec.schedule.times(), mean, stderr)
}

/// Column means and `sample std / √n` (zero for a single run).
pub fn mean_and_stderr(runs: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = runs.len();
    let len = runs.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; len];
    let mut stderr = vec![0.0; len];
    for i in 0..len {
        let m = runs.iter().map(|r| r[i]).sum::<f64>() / n as f64;
        mean[i] = m;
        if n > 1 {
            let var = runs.iter().map(|r| (r[i] - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            stderr[i] = (var / n as f64).sqrt();
        }
    }
    (mean, stderr)
}

/// The analyzer excitation from the joint master equation.
pub fn me_excitation(model: &CascadedModel, rho0: &DensityMatrix, times: &[f64], dt: f64) -> Result<ExcitationRecord> {
    let series = evolve_sampled(&model.model, rho0, 0.0, times, dt)?;
    let probe = vectorize(model.excited.matrix());
    let mut p = Vec::with_capacity(times.len());
    for (t, rho) in series.iter() {
        let v = probe.dotc(&vectorize(rho.matrix())).re;
        if v < -1e-9 || v > 1.0 + 1e-9 {
            return Err(Error::Invariant { time: t, detail: format!("analyzer excitation {v}") });
        }
        p.push(v.clamp(0.0, 1.0));
    }
    let n = p.len();
    ExcitationRecord::new(model.params.omega_b, times.to_vec(), p, vec![0.0; n])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BankMethod {
    Trajectories,
    MasterEquation,
}

impl BankMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BankMethod::Trajectories => "mcwf",
            BankMethod::MasterEquation => "master_equation",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzerBankConfig {
    pub omegas: Vec<f64>,
    pub n_traj: usize,
    pub t_final: f64,
    pub dt: f64,
    pub record_interval: f64,
    pub base_seed: u64,
}

impl Default for AnalyzerBankConfig {
    fn default() -> Self {
        Self {
            omegas: linspace(0.0, 12.0, 128),
            n_traj: 300,
            t_final: 200.0,
            dt: 0.01,
            record_interval: 1.0,
            base_seed: 1,
        }
    }
}

impl AnalyzerBankConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule { t_final: self.t_final, dt: self.dt, record_interval: self.record_interval }
    }

    pub fn validate(&self) -> Result<()> {
        check_increasing(&self.omegas)?;
        if self.n_traj == 0 {
            return Err(Error::param("n_traj", "need at least one trajectory"));
        }
        self.schedule().validate()
    }
}

/// Runs every analyzer frequency of the bank, starting from `|level⟩⊗|g⟩`.
pub fn run_bank(
    params: &CascadedParams,
    cfg: &AnalyzerBankConfig,
    method: BankMethod,
    level: usize,
) -> Result<Vec<ExcitationRecord>> {
    cfg.validate()?;
    let schedule = cfg.schedule();
    let times = schedule.times();
    cfg.omegas
        .par_iter()
        .enumerate()
        .map(|(idx, &w)| {
            let model = build_cascaded(&params.with_omega_b(w))?;
            let psi0 = model.initial_state(level)?;
            match method {
                BankMethod::Trajectories => {
                    let spec = EnsembleSpec {
                        n_traj: cfg.n_traj,
                        base_seed: cfg.base_seed,
                        freq_index: idx as u64,
                        schedule,
                    };
                    ensemble_excitation(&model, &psi0, &spec)
                }
                BankMethod::MasterEquation => me_excitation(&model, &DensityMatrix::pure(&psi0), &times, cfg.dt),
            }
        })
        .collect()
}

/// Plain-text description of a bank run, sufficient to repeat it exactly.
pub fn bank_manifest(params: &CascadedParams, cfg: &AnalyzerBankConfig, method: BankMethod) -> String {
    let mut out = String::new();
    writeln!(out, "# method: {}", method.as_str()).unwrap();
    writeln!(out, "# energies: {:?}", params.source.energies).unwrap();
    writeln!(out, "# decays: {:?}", params.source.decays).unwrap();
    writeln!(out, "# rabi: {:?}", params.source.rabi).unwrap();
    writeln!(out, "# p: {}", params.p).unwrap();
    writeln!(out, "# gamma_b: {}", params.gamma_b).unwrap();
    writeln!(out, "# t_final: {}", cfg.t_final).unwrap();
    writeln!(out, "# dt: {}", cfg.dt).unwrap();
    writeln!(out, "# record_interval: {}", cfg.record_interval).unwrap();
    writeln!(out, "# n_traj: {}", cfg.n_traj).unwrap();
    writeln!(out, "# base_seed: {}", cfg.base_seed).unwrap();
    writeln!(out, "# trajectory seed: splitmix64(frequency_seed ^ splitmix64(traj_index))").unwrap();
    out.push_str("index\tomega_b\tfrequency_seed\n");
    for (idx, w) in cfg.omegas.iter().enumerate() {
        writeln!(out, "{idx}\t{w}\t{}", frequency_seed(cfg.base_seed, idx as u64)).unwrap();
    }
    out
}

/// Excitation against analyzer frequency at each readout time, scaled to unit maximum.
pub fn analyzer_spectrum(records: &[ExcitationRecord], readout_times: &[f64]) -> Result<Vec<SpectrumTrace>> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    for r in records {
        if r.times.len() != first.times.len()
            || r.times.iter().zip(&first.times).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
        {
            return Err(Error::MismatchedGrids);
        }
    }
    let omegas: Vec<f64> = records.iter().map(|r| r.omega_b).collect();
    let spacing = if first.times.len() > 1 { first.times[1] - first.times[0] } else { 0.0 };
    readout_times
        .iter()
        .map(|&t| {
            let idx = first
                .times
                .iter()
                .position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
                .ok_or(Error::OffGrid { time: t, spacing })?;
            let values = records.iter().map(|r| r.p_excited[idx]).collect();
            Ok(SpectrumTrace::new(t, omegas.clone(), values, Normalization::Raw)?
                .to_unit_max()
                .with_meta("route", "analyzer"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::partial_trace;

    fn source_part(op: &CMatrix) -> CMatrix {
        // Tr_B of a joint operator.
        let joint = Operator::new(HilbertSpace::new(vec![3, 2]).unwrap(), op.clone()).unwrap();
        crate::quantum::partial_trace_operator(&joint, 0).unwrap().into_matrix()
    }

    #[test]
    fn uncoupled_when_p_is_zero() {
        let cp = CascadedParams { p: 0.0, ..Default::default() };
        let m = build_cascaded(&cp).unwrap();
        assert!(m.model().drives().iter().all(|d| d.amplitude == 0.0));
        assert!(!m.model().is_time_dependent());
        let l3 = m.model().collapse_ops()[2].terms();
        assert!(l3[0].0.matrix().iter().all(|z| *z == ZERO));
        let analyzer_rate: f64 =
            m.model().collapse_ops()[2..].iter().map(|c| c.terms()[1].0.matrix().norm_squared()).sum::<f64>() / 3.0;
        assert!((analyzer_rate - cp.gamma_b).abs() < 1e-15);
    }

    #[test]
    fn coupling_amplitudes() {
        let m = build_cascaded(&CascadedParams::default()).unwrap();
        let l3 = m.model().collapse_ops()[2].terms();
        let source_amp = l3[0].0.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let analyzer_amp = l3[1].0.matrix().iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!((source_amp - 5e-4f64.sqrt()).abs() < 1e-15);
        assert!((analyzer_amp - 5e-4f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn source_decay_rate_is_independent_of_p() {
        for p in [0.0, 0.005, 0.1, 1.0] {
            let m = build_cascaded(&CascadedParams { p, ..Default::default() }).unwrap();
            let mut sum = CMatrix::zeros(6, 6);
            for c in m.model().collapse_ops() {
                for (a, _) in c.terms() {
                    if a.matrix().iter().any(|z| z.norm() > 0.0) {
                        sum += a.matrix().adjoint() * a.matrix();
                    }
                }
            }
            let reduced = source_part(&sum);
            // Source diagonal carries Γ₁, Γ₂ twice (Tr_B I₂ = 2); the analyzer
            // part adds Γ_B·Tr(σ₊σ₋) = Γ_B to every source level.
            let gb = 0.001;
            assert!((reduced[(1, 1)].re - (2.0 * 0.1 + gb)).abs() < 1e-14, "p = {p}");
            assert!((reduced[(2, 2)].re - (2.0 * 0.1 + gb)).abs() < 1e-14);
            assert!((reduced[(0, 0)].re - gb).abs() < 1e-14);
        }
    }

    #[test]
    fn coupling_hamiltonian_is_hermitian() {
        let m = build_cascaded(&CascadedParams::default()).unwrap();
        for t in [0.0, 0.3, 1.7] {
            assert!(m.model().hamiltonian_at(t).hermiticity_defect() < 1e-15);
        }
    }

    #[test]
    fn jump_free_evolution_keeps_norm() {
        let s = HilbertSpace::single(2).unwrap();
        let sx = &Operator::transition(&s, 0, 1).unwrap() + &Operator::transition(&s, 1, 0).unwrap();
        let m = LindbladModel::new(sx, vec![], vec![], Frame::Rotating).unwrap();
        let psi0 = StateVector::basis(&s, 0).unwrap();
        let schedule = Schedule { t_final: 3.0, dt: 0.01, record_interval: 0.5 };
        let p1 = Operator::projector(&s, 1).unwrap();
        let p = jump_trajectory(&m, &p1, &psi0, &schedule, 7).unwrap();
        for (k, v) in p.iter().enumerate() {
            let t = 0.5 * k as f64;
            assert!((v - t.sin().powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let m = build_cascaded(&CascadedParams::default()).unwrap();
        let psi0 = m.initial_state(1).unwrap();
        let schedule = Schedule { t_final: 20.0, dt: 0.01, record_interval: 1.0 };
        let a = mcwf_trajectory(&m, &psi0, &schedule, 99).unwrap();
        let b = mcwf_trajectory(&m, &psi0, &schedule, 99).unwrap();
        assert_eq!(a, b);
        let c = mcwf_trajectory(&m, &psi0, &schedule, 100).unwrap();
        assert_ne!(a.p_excited, c.p_excited);
    }

    #[test]
    fn single_trajectory_ensemble_matches_trajectory() {
        let m = build_cascaded(&CascadedParams::default()).unwrap();
        let psi0 = m.initial_state(1).unwrap();
        let schedule = Schedule { t_final: 10.0, dt: 0.01, record_interval: 1.0 };
        let spec = EnsembleSpec { n_traj: 1, base_seed: 5, freq_index: 3, schedule };
        let ens = ensemble_excitation(&m, &psi0, &spec).unwrap();
        let one = mcwf_trajectory(&m, &psi0, &schedule, trajectory_seed(5, 3, 0)).unwrap();
        assert_eq!(ens.p_excited, one.p_excited);
        assert!(ens.stderr.iter().all(|e| *e == 0.0));
    }

    #[test]
    fn decaying_qubit_ensemble_follows_exponential() {
        let s = HilbertSpace::single(2).unwrap();
        let gamma: f64 = 0.5;
        let l = &Operator::transition(&s, 0, 1).unwrap() * gamma.sqrt();
        let m = LindbladModel::new(Operator::zeros(&s), vec![], vec![l.into()], Frame::Rotating).unwrap();
        let psi0 = StateVector::basis(&s, 1).unwrap();
        let pe = Operator::projector(&s, 1).unwrap();
        let schedule = Schedule { t_final: 4.0, dt: 0.01, record_interval: 0.5 };
        let runs: Vec<Vec<f64>> =
            (0..2000).map(|j| jump_trajectory(&m, &pe, &psi0, &schedule, trajectory_seed(11, 0, j)).unwrap()).collect();
        let (mean, stderr) = mean_and_stderr(&runs);
        for (k, (m, e)) in mean.iter().zip(&stderr).enumerate().skip(1) {
            let exact = (-gamma * 0.5 * k as f64).exp();
            assert!((m - exact).abs() <= 3.0 * e + 1e-3, "k = {k}: {m} vs {exact} ± {e}");
        }
    }

    #[test]
    fn step_too_large_is_reported() {
        let s = HilbertSpace::single(2).unwrap();
        let l = &Operator::transition(&s, 0, 1).unwrap() * 10.0;
        let m = LindbladModel::new(Operator::zeros(&s), vec![], vec![l.into()], Frame::Rotating).unwrap();
        let psi0 = StateVector::basis(&s, 1).unwrap();
        let schedule = Schedule { t_final: 1.0, dt: 0.01, record_interval: 0.1 };
        let pe = Operator::projector(&s, 1).unwrap();
        assert!(matches!(jump_trajectory(&m, &pe, &psi0, &schedule, 0), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn stderr_of_known_sample() {
        let runs = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let (mean, err) = mean_and_stderr(&runs);
        assert_eq!(mean, vec![2.5]);
        assert!((err[0] - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_records_give_zero_traces() {
        let rec = |w: f64| ExcitationRecord::new(w, vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let traces = analyzer_spectrum(&[rec(1.0), rec(2.0)], &[1.0]).unwrap();
        assert_eq!(traces[0].intensities(), &[0.0, 0.0]);
        assert!(matches!(analyzer_spectrum(&[rec(1.0)], &[0.5]), Err(Error::OffGrid { .. })));
        let other = ExcitationRecord::new(3.0, vec![0.0, 2.0], vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(analyzer_spectrum(&[rec(1.0), other], &[0.0]), Err(Error::MismatchedGrids)));
    }

    #[test]
    fn record_tsv_round_trip() {
        let r = ExcitationRecord::new(4.25, vec![0.0, 1.0, 2.0], vec![0.0, 1e-4, 3.5e-4], vec![0.0, 1e-6, 2e-6]).unwrap();
        assert_eq!(ExcitationRecord::from_tsv(&r.to_tsv()).unwrap(), r);
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(build_cascaded(&CascadedParams { p: 1.5, ..Default::default() }).is_err());
        assert!(build_cascaded(&CascadedParams { gamma_b: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn unidirectional_on_a_short_run() {
        let cp = CascadedParams { p: 0.1, omega_b: 5.4, ..Default::default() };
        let m = build_cascaded(&cp).unwrap();
        let rho0 = DensityMatrix::pure(&m.initial_state(1).unwrap());
        let times: Vec<f64> = (1..=10).map(f64::from).collect();
        let joint = evolve_sampled(m.model(), &rho0, 0.0, &times, 0.01).unwrap();
        let alone = evolve_sampled(&m.source_model().unwrap(), &partial_trace(&rho0, 0).unwrap(), 0.0, &times, 0.01)
            .unwrap();
        for (a, b) in joint.states.iter().zip(&alone.states) {
            let reduced = partial_trace(a, 0).unwrap();
            assert!(reduced.as_operator().max_abs_diff(b.as_operator()) < 1e-12);
        }
    }
}
