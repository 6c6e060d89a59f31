//! Time-dependent physical spectrum seen through a Fabry–Perot filter.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qrt::CorrelationGrid;
use crate::quantum::{CVector, C64, ZERO};
use crate::spectrum::{check_increasing, Normalization, SpectrumTrace};

/// Relative floor below which a negative quadrature result is an error
/// rather than rounding noise.
pub const NEGATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterParams {
    pub omega_f: f64,
    pub gamma_f: f64,
}

impl FilterParams {
    pub fn new(omega_f: f64, gamma_f: f64) -> Result<Self> {
        if !(gamma_f > 0.0 && gamma_f.is_finite()) {
            return Err(Error::param("gamma_f", format!("{gamma_f} must be finite and > 0")));
        }
        if !omega_f.is_finite() {
            return Err(Error::param("omega_f", "must be finite"));
        }
        Ok(Self { omega_f, gamma_f })
    }
}

/// `Θ(t) Γ_f e^{−(Γ_f + iω_f)t}` with `Θ(0) = 1`.
pub fn filter_response(t: f64, f: &FilterParams) -> C64 {
    if t < 0.0 {
        return ZERO;
    }
    C64::new(-f.gamma_f * t, -f.omega_f * t).exp() * f.gamma_f
}

/// Index of the grid node at `t`.
fn node_index(grid: &CorrelationGrid, t: f64) -> Result<usize> {
    let horizon = grid.t_final();
    if !(0.0..=horizon * (1.0 + 1e-12)).contains(&t) {
        return Err(Error::BeyondHorizon { time: t, horizon });
    }
    let spacing = grid.spacing();
    let k = (t / spacing).round();
    if (t - k * spacing).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::OffGrid { time: t, spacing });
    }
    Ok((k as usize).min(grid.n()))
}

/// Filter weights `wₙ e^{−(Γ_f + iω_f)(t − tₙ)}` over nodes `0..=k`.
fn weights(grid: &CorrelationGrid, k: usize, f: &FilterParams) -> CVector {
    let dt = grid.spacing();
    let t = k as f64 * dt;
    CVector::from_fn(k + 1, |n, _| {
        let w = if n == 0 || n == k { 0.5 * dt } else { dt };
        let lag = t - n as f64 * dt;
        C64::new(-f.gamma_f * lag, -f.omega_f * lag).exp() * w
    })
}

fn quadratic_form(grid: &CorrelationGrid, k: usize, f: &FilterParams) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    let a = weights(grid, k, f);
    let c = grid.values().view((0, 0), (k + 1, k + 1));
    let s = a.dotc(&(c * &a)) * (f.gamma_f * f.gamma_f);
    if s.re >= 0.0 {
        return Ok(s.re);
    }
    // Cauchy–Schwarz bound on |S| for a positive kernel.
    let diag = (0..=k).map(|n| grid.values()[(n, n)].re).fold(0.0, f64::max);
    let l1: f64 = a.iter().map(|z| z.norm()).sum();
    let scale = f.gamma_f * f.gamma_f * l1 * l1 * diag;
    if s.re < -NEGATIVE_FLOOR * scale {
        return Err(Error::NegativeSpectrum { value: s.re, max: scale });
    }
    Ok(0.0)
}

/// Physical spectrum at readout time `t`, which must be a grid node.
pub fn physical_spectrum(grid: &CorrelationGrid, t: f64, f: &FilterParams) -> Result<f64> {
    let k = node_index(grid, t)?;
    quadratic_form(grid, k, f)
}

/// One trace per readout time over the filter centres `omegas`.
pub fn physical_spectrum_scan(
    grid: &CorrelationGrid,
    times: &[f64],
    omegas: &[f64],
    gamma_f: f64,
) -> Result<Vec<SpectrumTrace>> {
    check_increasing(omegas)?;
    FilterParams::new(0.0, gamma_f)?;
    times
        .iter()
        .map(|&t| {
            let k = node_index(grid, t)?;
            let values = omegas
                .par_iter()
                .map(|&w| quadratic_form(grid, k, &FilterParams { omega_f: w, gamma_f }))
                .collect::<Result<Vec<f64>>>()?;
            Ok(SpectrumTrace::new(t, omegas.to_vec(), values, Normalization::Raw)?
                .with_meta("route", "physical")
                .with_meta("gamma_f", gamma_f)
                .with_meta("grid_n", grid.n())
                .with_meta("grid_t", grid.t_final()))
        })
        .collect()
}
