use crate::error::{Error, Result};
use crate::quantum::{DensityMatrix, Operator, C64};

use super::model::{build_superoperator, unvectorize, vectorize, LindbladModel};

/// Relative singular-value threshold for the null space of `G`.
pub const NULL_THRESHOLD: f64 = 1e-10;
/// Largest accepted `‖G·vec(ρ_ss)‖`.
pub const STEADY_RESIDUAL: f64 = 1e-9;

/// The unique fixed point of a time-independent model, found from the
/// singular value decomposition of its superoperator.
pub fn steady_state(model: &LindbladModel) -> Result<DensityMatrix> {
    let g = build_superoperator(model)?;
    let d = model.dim();
    let scale = g.norm().max(f64::MIN_POSITIVE);
    let threshold = NULL_THRESHOLD * scale;
    let svd = g.clone().svd(false, true);
    let sigma = &svd.singular_values;
    let small = sigma.iter().filter(|s| **s <= threshold).count();
    if small > 1 {
        return Err(Error::DegenerateSteadyState(small));
    }
    let (idx, &smallest) = sigma
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    if small == 0 {
        return Err(Error::NoSteadyState { sigma: smallest, threshold });
    }
    let v_t = svd.v_t.expect("requested V^H");
    let null = v_t.row(idx).adjoint();
    let m = unvectorize(&null, d);
    let m = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    let tr = m.trace();
    let m = m / tr;
    let residual = (&g * vectorize(&m)).norm();
    if residual > STEADY_RESIDUAL {
        return Err(Error::SteadyStateResidual(residual));
    }
    DensityMatrix::new(Operator::new(model.space().clone(), m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{evolve_to, three_level_model, Frame, ThreeLevelParams};
    use crate::quantum::{HilbertSpace, ONE};

    #[test]
    fn decay_relaxes_to_ground() {
        let p = ThreeLevelParams::default().with_rabi(0.0, 0.0);
        let m = three_level_model(&p, Frame::Rotating).unwrap();
        let ss = steady_state(&m).unwrap();
        let ground = DensityMatrix::basis(&HilbertSpace::single(3).unwrap(), 0).unwrap();
        assert!(ss.as_operator().max_abs_diff(ground.as_operator()) < 1e-10);
    }

    #[test]
    fn strong_drive_matches_long_evolution() {
        let m = three_level_model(&ThreeLevelParams::default(), Frame::Rotating).unwrap();
        let ss = steady_state(&m).unwrap();
        let start = DensityMatrix::basis(m.space(), 1).unwrap();
        let late = evolve_to(&m, &start, 0.0, 200.0, 0.02).unwrap();
        assert!(ss.as_operator().max_abs_diff(late.as_operator()) < 1e-4);
        assert!((ss.as_operator().trace() - ONE).norm() < 1e-12);
        assert!(ss.as_operator().min_hermitian_eigenvalue() >= -1e-10);
    }

    #[test]
    fn weak_drive_is_unique() {
        let p = ThreeLevelParams::default().with_rabi(0.2, 0.2);
        let m = three_level_model(&p, Frame::Rotating).unwrap();
        let ss = steady_state(&m).unwrap();
        let g = build_superoperator(&m).unwrap();
        assert!((&g * vectorize(ss.matrix())).norm() < STEADY_RESIDUAL);
        let pops: Vec<f64> = (0..3).map(|k| ss.matrix()[(k, k)].re).collect();
        assert!(pops[0] > pops[2] && pops[2] > pops[1], "{pops:?}");
    }

    #[test]
    fn degenerate_without_dissipation() {
        let p = ThreeLevelParams { decays: [0.0, 0.0], rabi: [0.0, 0.0], ..Default::default() };
        let m = three_level_model(&p, Frame::Rotating).unwrap();
        assert!(matches!(steady_state(&m), Err(Error::DegenerateSteadyState(_))));
    }

    #[test]
    fn rejects_time_dependent() {
        let m = three_level_model(&ThreeLevelParams::default(), Frame::Lab).unwrap();
        assert!(matches!(steady_state(&m), Err(Error::TimeDependent)));
    }
}
