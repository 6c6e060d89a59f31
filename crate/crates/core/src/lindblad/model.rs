use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quantum::{CMatrix, CVector, DensityMatrix, HilbertSpace, Operator, C64, I, ZERO};

/// Tolerance on the Hermiticity of `h_static`.
const HAMILTONIAN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Frame {
    Lab,
    Rotating,
}

impl Frame {
    /// Default RK4 step. The lab frame has to resolve the fastest bare
    /// oscillation (period 2π/8).
    pub fn default_dt(self) -> f64 {
        match self {
            Frame::Lab => 0.005,
            Frame::Rotating => 0.02,
        }
    }
}

/// `amplitude · (X e^{iνt} + X† e^{−iνt})` with `X = coupling`.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveTerm {
    pub coupling: Operator,
    pub amplitude: f64,
    pub phase_frequency: f64,
}

impl DriveTerm {
    pub fn new(coupling: Operator, amplitude: f64, phase_frequency: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(Error::param("amplitude", format!("{amplitude} must be finite and ≥ 0")));
        }
        if !phase_frequency.is_finite() {
            return Err(Error::param("phase_frequency", "must be finite"));
        }
        Ok(Self { coupling, amplitude, phase_frequency })
    }

    pub fn at(&self, t: f64) -> CMatrix {
        let x = self.coupling.matrix();
        let ph = C64::from_polar(self.amplitude, self.phase_frequency * t);
        x * ph + x.adjoint() * ph.conj()
    }
}

/// A rate-absorbed collapse operator `L(t) = Σⱼ Aⱼ e^{−iνⱼt}`.
///
/// A single term is time independent as far as the dissipator goes; several
/// terms with different phases produce beating cross terms.
#[derive(Clone, Debug, PartialEq)]
pub struct CollapseOperator {
    terms: Vec<(Operator, f64)>,
}

impl CollapseOperator {
    pub fn new(op: Operator) -> Self {
        Self { terms: vec![(op, 0.0)] }
    }

    pub fn phased(terms: Vec<(Operator, f64)>) -> Result<Self> {
        let Some((first, _)) = terms.first() else {
            return Err(Error::param("collapse_ops", "collapse operator without terms"));
        };
        if terms.iter().any(|(op, _)| op.space() != first.space()) {
            return Err(Error::DimensionMismatch("collapse terms on different spaces".into()));
        }
        if terms.iter().any(|(_, nu)| !nu.is_finite()) {
            return Err(Error::param("collapse_ops", "non-finite phase frequency"));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[(Operator, f64)] {
        &self.terms
    }

    pub fn space(&self) -> &HilbertSpace {
        self.terms[0].0.space()
    }

    pub fn at(&self, t: f64) -> CMatrix {
        let mut out = self.terms[0].0.matrix() * C64::from_polar(1.0, -self.terms[0].1 * t);
        for (op, nu) in &self.terms[1..] {
            out += op.matrix() * C64::from_polar(1.0, -nu * t);
        }
        out
    }
}

impl From<Operator> for CollapseOperator {
    fn from(op: Operator) -> Self {
        Self::new(op)
    }
}

/// Matrices tagged by angular frequency, `M(t) = Σ e^{iνt} M_ν`.
#[derive(Clone, Debug, Default)]
pub(crate) struct FourierSum {
    terms: Vec<(f64, CMatrix)>,
}

impl FourierSum {
    pub(crate) fn add(&mut self, freq: f64, m: CMatrix) {
        let tol = 1e-12 * freq.abs().max(1.0);
        match self.terms.iter_mut().find(|(f, _)| (f - freq).abs() <= tol) {
            Some((_, acc)) => *acc += m,
            None => self.terms.push((freq, m)),
        }
    }

    /// Sorted by frequency; oscillating terms that cancelled exactly are dropped.
    pub(crate) fn finish(mut self) -> Vec<(f64, CMatrix)> {
        self.terms.retain(|(f, m)| *f == 0.0 || m.iter().any(|z| *z != ZERO));
        self.terms.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.terms
    }
}

/// Superoperator of `X ↦ A X B` for row-major vectorisation.
pub(crate) fn sandwich(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(&b.transpose())
}

fn hamiltonian_super(h: &CMatrix) -> CMatrix {
    let id = CMatrix::identity(h.nrows(), h.nrows());
    (sandwich(h, &id) - sandwich(&id, h)) * (-I)
}

fn dissipator_super(a_j: &CMatrix, a_k: &CMatrix) -> CMatrix {
    let id = CMatrix::identity(a_j.nrows(), a_j.nrows());
    let kd = a_k.adjoint();
    let kj = &kd * a_j;
    sandwich(a_j, &kd) - (sandwich(&kj, &id) + sandwich(&id, &kj)) * C64::new(0.5, 0.0)
}

#[derive(Clone, Debug)]
pub struct LindbladModel {
    space: HilbertSpace,
    h_static: Operator,
    drives: Vec<DriveTerm>,
    collapse_ops: Vec<CollapseOperator>,
    frame: Frame,
    generator: Vec<(f64, CMatrix)>,
    heff: Vec<(f64, CMatrix)>,
}

impl LindbladModel {
    pub fn new(
        h_static: Operator,
        drives: Vec<DriveTerm>,
        collapse_ops: Vec<CollapseOperator>,
        frame: Frame,
    ) -> Result<Self> {
        let space = h_static.space().clone();
        let defect = h_static.hermiticity_defect();
        if defect > HAMILTONIAN_TOL {
            return Err(Error::param("h_static", format!("not Hermitian (defect {defect:e})")));
        }
        if drives.iter().any(|d| d.coupling.space() != &space) {
            return Err(Error::DimensionMismatch("drive coupling on a different space".into()));
        }
        if collapse_ops.iter().any(|c| c.space() != &space) {
            return Err(Error::DimensionMismatch("collapse operator on a different space".into()));
        }

        let mut gen = FourierSum::default();
        let mut heff = FourierSum::default();
        gen.add(0.0, hamiltonian_super(h_static.matrix()));
        heff.add(0.0, h_static.matrix().clone());
        for d in &drives {
            let x = d.coupling.matrix() * C64::new(d.amplitude, 0.0);
            let xd = x.adjoint();
            gen.add(d.phase_frequency, hamiltonian_super(&x));
            gen.add(-d.phase_frequency, hamiltonian_super(&xd));
            heff.add(d.phase_frequency, x);
            heff.add(-d.phase_frequency, xd);
        }
        let half_i = C64::new(0.0, -0.5);
        for c in &collapse_ops {
            for (a_j, nu_j) in c.terms() {
                for (a_k, nu_k) in c.terms() {
                    let freq = nu_k - nu_j;
                    gen.add(freq, dissipator_super(a_j.matrix(), a_k.matrix()));
                    heff.add(freq, (a_k.matrix().adjoint() * a_j.matrix()) * half_i);
                }
            }
        }

        Ok(Self {
            space,
            h_static,
            drives,
            collapse_ops,
            frame,
            generator: gen.finish(),
            heff: heff.finish(),
        })
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn h_static(&self) -> &Operator {
        &self.h_static
    }

    pub fn drives(&self) -> &[DriveTerm] {
        &self.drives
    }

    pub fn collapse_ops(&self) -> &[CollapseOperator] {
        &self.collapse_ops
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// Fourier components of the vectorised generator, `G(t) = Σ e^{iνt} G_ν`.
    pub fn generator(&self) -> &[(f64, CMatrix)] {
        &self.generator
    }

    /// Fourier components of `H(t) − (i/2) Σ L†L`.
    pub fn heff_components(&self) -> &[(f64, CMatrix)] {
        &self.heff
    }

    pub fn is_time_dependent(&self) -> bool {
        self.generator.iter().any(|(f, _)| *f != 0.0)
    }

    /// Shortest period shared by every oscillating generator term, if the
    /// frequencies are commensurate.
    pub fn period(&self) -> Option<f64> {
        let freqs: Vec<f64> = self.generator.iter().map(|(f, _)| f.abs()).filter(|f| *f > 0.0).collect();
        common_period(&freqs)
    }

    pub fn hamiltonian_at(&self, t: f64) -> Operator {
        let mut m = self.h_static.matrix().clone();
        for d in &self.drives {
            m += d.at(t);
        }
        Operator::new(self.space.clone(), m).expect("same space")
    }

    pub fn default_dt(&self) -> f64 {
        self.frame.default_dt()
    }
}

fn common_period(freqs: &[f64]) -> Option<f64> {
    let (&first, rest) = freqs.split_first()?;
    let mut g = first;
    for &f in rest {
        let (mut a, mut b) = (g.max(f), g.min(f));
        let tol = 1e-9 * a;
        let mut iter = 0;
        while b > tol {
            (a, b) = (b, a % b);
            iter += 1;
            if iter > 64 {
                return None;
            }
        }
        g = a;
    }
    let ok = freqs.iter().all(|f| {
        let r = f / g;
        r <= 1024.0 && (r - r.round()).abs() <= 1e-9 * r.max(1.0)
    });
    ok.then(|| 2.0 * PI / g)
}

/// Source parameters: bare energies, the two decay rates into |1⟩, and the
/// two Rabi frequencies (|1⟩↔|2⟩ and |2⟩↔|3⟩).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreeLevelParams {
    pub energies: [f64; 3],
    pub decays: [f64; 2],
    pub rabi: [f64; 2],
}

impl Default for ThreeLevelParams {
    fn default() -> Self {
        Self { energies: [0.0, 4.0, 8.0], decays: [0.1, 0.1], rabi: [2.0, 2.0] }
    }
}

impl ThreeLevelParams {
    pub fn with_rabi(self, omega1: f64, omega2: f64) -> Self {
        Self { rabi: [omega1, omega2], ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::param("energies", "must be finite"));
        }
        if self.decays.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::param("decays", format!("{:?} must be finite and ≥ 0", self.decays)));
        }
        if self.rabi.iter().any(|o| !(*o >= 0.0 && o.is_finite())) {
            return Err(Error::param("rabi", format!("{:?} must be finite and ≥ 0", self.rabi)));
        }
        Ok(())
    }

    /// Transition frequencies ω₂−ω₁ and ω₃−ω₁ of the two decay channels.
    pub fn transition_frequencies(&self) -> [f64; 2] {
        [self.energies[1] - self.energies[0], self.energies[2] - self.energies[0]]
    }
}

/// The driven three-level atom. Level |k⟩ is basis index k−1.
pub fn three_level_model(params: &ThreeLevelParams, frame: Frame) -> Result<LindbladModel> {
    params.validate()?;
    let space = HilbertSpace::single(3)?;
    let t12 = Operator::transition(&space, 0, 1)?;
    let t13 = Operator::transition(&space, 0, 2)?;
    let t23 = Operator::transition(&space, 1, 2)?;
    let [w1, w2, w3] = params.energies;
    let [o1, o2] = params.rabi;

    let (h_static, drives) = match frame {
        Frame::Lab => {
            let mut h = CMatrix::zeros(3, 3);
            for (k, w) in params.energies.iter().enumerate() {
                h[(k, k)] = C64::new(*w, 0.0);
            }
            let drives = vec![
                DriveTerm::new(t12.clone(), o1 / 2.0, w2 - w1)?,
                DriveTerm::new(t23.clone(), o2 / 2.0, w3 - w2)?,
            ];
            (Operator::new(space.clone(), h)?, drives)
        }
        Frame::Rotating => {
            let h = &(&(&t12 + &t12.dagger()) * (o1 / 2.0)) + &(&(&t23 + &t23.dagger()) * (o2 / 2.0));
            (h, Vec::new())
        }
    };
    let collapse = vec![
        CollapseOperator::new(&t12 * params.decays[0].sqrt()),
        CollapseOperator::new(&t13 * params.decays[1].sqrt()),
    ];
    LindbladModel::new(h_static, drives, collapse, frame)
}

/// `dρ/dt` in matrix form at time `t`; works on any operator, not only states.
pub(crate) fn apply_rhs(model: &LindbladModel, x: &CMatrix, t: f64) -> CMatrix {
    let h = model.hamiltonian_at(t);
    let h = h.matrix();
    let mut out = (h * x - x * h) * (-I);
    for c in &model.collapse_ops {
        let l = c.at(t);
        let ld = l.adjoint();
        let ldl = &ld * &l;
        out += &l * x * &ld - (&ldl * x + x * &ldl) * C64::new(0.5, 0.0);
    }
    out
}

/// Right-hand side of the master equation at time `t`.
pub fn rhs(model: &LindbladModel, rho: &DensityMatrix, t: f64) -> Result<Operator> {
    if rho.space() != model.space() {
        return Err(Error::DimensionMismatch(format!(
            "state on {} but model on {}",
            rho.space(),
            model.space()
        )));
    }
    Operator::new(model.space.clone(), apply_rhs(model, rho.matrix(), t))
}

/// Time-independent superoperator `G` with `vec(dρ/dt) = G·vec(ρ)`.
pub fn build_superoperator(model: &LindbladModel) -> Result<CMatrix> {
    if model.is_time_dependent() {
        return Err(Error::TimeDependent);
    }
    let d2 = model.dim() * model.dim();
    Ok(model.generator.first().map(|(_, g)| g.clone()).unwrap_or_else(|| CMatrix::zeros(d2, d2)))
}

/// Row-major vectorisation.
pub fn vectorize(m: &CMatrix) -> CVector {
    let d = m.nrows();
    CVector::from_fn(d * m.ncols(), |k, _| m[(k / d, k % d)])
}

pub fn unvectorize(v: &CVector, d: usize) -> CMatrix {
    CMatrix::from_row_slice(d, d, v.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_density(vals: &[(f64, f64)], d: usize) -> DensityMatrix {
        let a = CMatrix::from_row_iterator(d, d, vals.iter().map(|&(r, i)| C64::new(r, i)));
        let m = &a * a.adjoint();
        let tr = m.trace();
        DensityMatrix::new(Operator::new(HilbertSpace::single(d).unwrap(), m / tr).unwrap()).unwrap()
    }

    fn count_nonzero(m: &CMatrix) -> usize {
        m.iter().filter(|z| z.norm() > 0.0).count()
    }

    #[test]
    fn undriven_rotating_hamiltonian_vanishes() {
        let p = ThreeLevelParams::default().with_rabi(0.0, 0.0);
        let m = three_level_model(&p, Frame::Rotating).unwrap();
        assert_eq!(count_nonzero(m.h_static().matrix()), 0);
        assert_eq!(m.collapse_ops().len(), 2);
        assert!(!m.is_time_dependent());
    }

    #[test]
    fn rotating_hamiltonian_entries() {
        for (omega, mag) in [(0.2, 0.1), (2.0, 1.0)] {
            let p = ThreeLevelParams::default().with_rabi(omega, omega);
            let h = three_level_model(&p, Frame::Rotating).unwrap().h_static().matrix().clone();
            assert_eq!(count_nonzero(&h), 4);
            for (r, c) in [(0, 1), (1, 0), (1, 2), (2, 1)] {
                assert!((h[(r, c)].norm() - mag).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lab_model_is_periodic() {
        let m = three_level_model(&ThreeLevelParams::default(), Frame::Lab).unwrap();
        assert!(m.is_time_dependent());
        assert!((m.period().unwrap() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn common_period_of_commensurate_set() {
        assert!((common_period(&[4.0, 6.0]).unwrap() - PI).abs() < 1e-12);
        assert!(common_period(&[1.0, 2f64.sqrt()]).is_none());
    }

    #[test]
    fn free_model_has_zero_rhs() {
        let s = HilbertSpace::single(3).unwrap();
        let m = LindbladModel::new(Operator::zeros(&s), vec![], vec![], Frame::Rotating).unwrap();
        let vals: Vec<(f64, f64)> = (0..9).map(|k| (k as f64 * 0.3 - 1.0, 0.2 * k as f64)).collect();
        let r = rhs(&m, &random_density(&vals, 3), 0.0).unwrap();
        assert_eq!(count_nonzero(r.matrix()), 0);
        assert_eq!(count_nonzero(&build_superoperator(&m).unwrap()), 0);
    }

    #[test]
    fn pure_decay_rates() {
        let s = HilbertSpace::single(3).unwrap();
        let l = &Operator::transition(&s, 0, 1).unwrap() * 0.1f64.sqrt();
        let m = LindbladModel::new(Operator::zeros(&s), vec![], vec![l.into()], Frame::Rotating).unwrap();
        let r = rhs(&m, &DensityMatrix::basis(&s, 1).unwrap(), 0.0).unwrap();
        assert!((r.matrix()[(1, 1)] - C64::new(-0.1, 0.0)).norm() < 1e-15);
        assert!((r.matrix()[(0, 0)] - C64::new(0.1, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn qubit_decay_spectrum() {
        let s = HilbertSpace::single(2).unwrap();
        let gamma: f64 = 0.3;
        let l = &Operator::transition(&s, 0, 1).unwrap() * gamma.sqrt();
        let m = LindbladModel::new(Operator::zeros(&s), vec![], vec![l.into()], Frame::Rotating).unwrap();
        let g = build_superoperator(&m).unwrap();
        let mut eig: Vec<C64> = g.schur().eigenvalues().expect("triangular Schur form").iter().copied().collect();
        eig.sort_by(|a, b| a.re.total_cmp(&b.re));
        let expected = [-gamma, -gamma / 2.0, -gamma / 2.0, 0.0];
        for (e, x) in eig.iter().zip(expected) {
            assert!((e - C64::new(x, 0.0)).norm() < 1e-12, "{eig:?}");
        }
    }

    #[test]
    fn rejects_non_hermitian_hamiltonian() {
        let s = HilbertSpace::single(2).unwrap();
        let h = Operator::transition(&s, 0, 1).unwrap();
        assert!(LindbladModel::new(h, vec![], vec![], Frame::Rotating).is_err());
    }

    #[test]
    fn vectorize_round_trip() {
        let m = CMatrix::from_fn(3, 3, |r, c| C64::new(r as f64, c as f64));
        let v = vectorize(&m);
        assert_eq!(v[1], m[(0, 1)]);
        assert_eq!(unvectorize(&v, 3), m);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn superoperator_matches_rhs(vals in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 9), omega in 0.0..3.0f64) {
            let p = ThreeLevelParams::default().with_rabi(omega, 0.7 * omega);
            let m = three_level_model(&p, Frame::Rotating).unwrap();
            let rho = random_density(&vals, 3);
            let g = build_superoperator(&m).unwrap();
            let via_g = unvectorize(&(&g * vectorize(rho.matrix())), 3);
            let direct = rhs(&m, &rho, 0.0).unwrap();
            prop_assert!((via_g - direct.matrix()).norm() < 1e-12);
        }

        #[test]
        fn rhs_is_traceless_and_hermitian(vals in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 9), t in 0.0..10.0f64) {
            let m = three_level_model(&ThreeLevelParams::default(), Frame::Lab).unwrap();
            let r = rhs(&m, &random_density(&vals, 3), t).unwrap();
            prop_assert!(r.trace().norm() < 1e-12);
            prop_assert!(r.hermiticity_defect() < 1e-12);
        }

        #[test]
        fn fourier_generator_matches_rhs(vals in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 9), t in 0.0..10.0f64) {
            let m = three_level_model(&ThreeLevelParams::default(), Frame::Lab).unwrap();
            let rho = random_density(&vals, 3);
            let v = vectorize(rho.matrix());
            let mut acc = CVector::zeros(9);
            for (nu, g) in m.generator() {
                acc += (g * &v) * C64::from_polar(1.0, nu * t);
            }
            let direct = apply_rhs(&m, rho.matrix(), t);
            prop_assert!((unvectorize(&acc, 3) - direct).norm() < 1e-12);
        }
    }
}
