//! Fixtures shared by the benchmarks.

use tdspectra::{three_level_model, DensityMatrix, DetectionOperator, Frame, LindbladModel, ThreeLevelParams};

pub struct Source {
    pub params: ThreeLevelParams,
    pub model: LindbladModel,
    pub detector: DetectionOperator,
    pub rho0: DensityMatrix,
}

/// The three-level source at Rabi frequency `rabi` on both transitions,
/// starting in level 2.
pub fn source(rabi: f64) -> Source {
    let params = ThreeLevelParams::default().with_rabi(rabi, rabi);
    let model = three_level_model(&params, Frame::Rotating).expect("valid parameters");
    let detector = DetectionOperator::for_source(&params, Frame::Rotating).expect("valid parameters");
    let rho0 = DensityMatrix::basis(model.space(), 1).expect("level exists");
    Source { params, model, detector, rho0 }
}
