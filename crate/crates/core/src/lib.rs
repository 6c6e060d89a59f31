//! Stationary and time-dependent emission spectra of a driven, dissipative
//! three-level atom.
//!
//! Three routes are provided: the Wiener–Khintchine transform of a
//! regression-theorem correlation ([`qrt`]), the filtered physical spectrum
//! ([`physical`]), and a two-level analyzer atom cascaded after the source
//! ([`cascaded`]).

pub mod cascaded;
pub mod error;
pub mod lindblad;
pub mod physical;
pub mod qrt;
pub mod quantum;
pub mod spectrum;

pub use cascaded::{
    analyzer_spectrum, build_cascaded, ensemble_excitation, mcwf_trajectory, me_excitation, run_bank,
    AnalyzerBankConfig, BankMethod, CascadedModel, CascadedParams, EnsembleSpec, ExcitationRecord, Schedule,
};
pub use error::{Error, Result};
pub use lindblad::{
    evolve, steady_state, three_level_model, CollapseOperator, DriveTerm, Frame, LindbladModel, ThreeLevelParams,
    TimeSeries,
};
pub use physical::{filter_response, physical_spectrum, physical_spectrum_scan, FilterParams};
pub use quantum::{
    expectation, lift, partial_trace, tensor, DensityMatrix, HilbertSpace, Operator, StateVector, C64,
};
pub use qrt::{
    correlation_grid, qrt_sandwich, qrt_two_time, wk_spectrum, CorrelationGrid, DetectionOperator, Taper, WkOptions,
    WkSpectrum,
};
pub use spectrum::{find_peaks, linspace, Normalization, Peak, PeakList, SpectrumTrace};
