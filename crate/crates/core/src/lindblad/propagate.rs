use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::quantum::{CMatrix, CVector, DensityMatrix, Operator, C64, ONE};

use super::model::{unvectorize, vectorize, LindbladModel};

/// Number of equal steps no longer than `dt` covering `interval`.
pub fn steps_for(interval: f64, dt: f64) -> usize {
    if interval <= 0.0 {
        return 0;
    }
    ((interval / dt) - 1e-9).ceil().max(1.0) as usize
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("{dt} must be finite and > 0")));
    }
    Ok(())
}

/// Classical RK4 propagation of vectorised operators under a model's generator.
///
/// For a time-independent generator a step is one multiplication by the
/// degree-4 Taylor polynomial of `hG`, which is exactly what RK4 computes for
/// a linear system. Periodic generators reuse a one-period transfer matrix
/// when an interval spans several periods.
pub struct Propagator<'a> {
    model: &'a LindbladModel,
    dt: f64,
    period: Option<f64>,
    static_step: Option<CMatrix>,
    // One-period transfer matrices keyed by the start phase within a period.
    floquet: RefCell<Vec<(f64, CMatrix)>>,
}

impl<'a> Propagator<'a> {
    pub fn new(model: &'a LindbladModel, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let static_step = (!model.is_time_dependent()).then(|| taylor_step(&static_generator(model), dt));
        Ok(Self { model, dt, period: model.period(), static_step, floquet: RefCell::new(Vec::new()) })
    }

    pub fn model(&self) -> &LindbladModel {
        self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `v` from `t0` to `t1` in equal steps no longer than `dt`.
    pub fn advance(&self, v: &mut CVector, t0: f64, t1: f64) {
        let n = steps_for(t1 - t0, self.dt);
        if n == 0 {
            return;
        }
        let h = (t1 - t0) / n as f64;
        if let Some(step) = &self.static_step {
            let local;
            let p = if (h - self.dt).abs() <= 1e-12 * self.dt {
                step
            } else {
                local = taylor_step(&static_generator(self.model), h);
                &local
            };
            let mut scratch = CVector::zeros(v.len());
            for _ in 0..n {
                scratch.gemv(ONE, p, v, C64::new(0.0, 0.0));
                std::mem::swap(v, &mut scratch);
            }
            return;
        }
        if let Some(period) = self.period {
            let cycles = ((t1 - t0) / period).floor() as usize;
            if cycles >= 2 {
                let m = self.period_matrix(t0, period);
                let mut scratch = CVector::zeros(v.len());
                for _ in 0..cycles {
                    scratch.gemv(ONE, &m, v, C64::new(0.0, 0.0));
                    std::mem::swap(v, &mut scratch);
                }
                let start = t0 + cycles as f64 * period;
                self.advance_stepwise(v, start, t1);
                return;
            }
        }
        self.advance_stepwise(v, t0, t1);
    }

    fn period_matrix(&self, t0: f64, period: f64) -> CMatrix {
        let phase = t0.rem_euclid(period);
        let mut cache = self.floquet.borrow_mut();
        if let Some((_, m)) = cache.iter().find(|(p, _)| (p - phase).abs() <= 1e-9 * period) {
            return m.clone();
        }
        let m = self.transfer_matrix(phase, phase + period);
        cache.push((phase, m.clone()));
        m
    }

    fn advance_stepwise(&self, v: &mut CVector, t0: f64, t1: f64) {
        let n = steps_for(t1 - t0, self.dt);
        if n == 0 {
            return;
        }
        let h = (t1 - t0) / n as f64;
        for k in 0..n {
            let t = t0 + k as f64 * h;
            let k1 = self.apply(t, v);
            let k2 = self.apply(t + 0.5 * h, &(&*v + &k1 * C64::new(0.5 * h, 0.0)));
            let k3 = self.apply(t + 0.5 * h, &(&*v + &k2 * C64::new(0.5 * h, 0.0)));
            let k4 = self.apply(t + h, &(&*v + &k3 * C64::new(h, 0.0)));
            *v += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
        }
    }

    fn apply(&self, t: f64, v: &CVector) -> CVector {
        let mut out = CVector::zeros(v.len());
        for (nu, g) in self.model.generator() {
            out.gemv(C64::from_polar(1.0, nu * t), g, v, ONE);
        }
        out
    }

    fn generator_at(&self, t: f64) -> CMatrix {
        let gen = self.model.generator();
        let mut out = CMatrix::zeros(gen[0].1.nrows(), gen[0].1.ncols());
        for (nu, g) in gen {
            out += g * C64::from_polar(1.0, nu * t);
        }
        out
    }

    /// Matrix `M` with `v(t1) = M·v(t0)`, integrated with the same RK4 steps
    /// `advance` would take.
    pub fn transfer_matrix(&self, t0: f64, t1: f64) -> CMatrix {
        let d2 = self.model.dim() * self.model.dim();
        let n = steps_for(t1 - t0, self.dt);
        if n == 0 {
            return CMatrix::identity(d2, d2);
        }
        let h = (t1 - t0) / n as f64;
        if self.static_step.is_some() {
            let p = if (h - self.dt).abs() <= 1e-12 * self.dt {
                self.static_step.clone().unwrap()
            } else {
                taylor_step(&static_generator(self.model), h)
            };
            let mut m = CMatrix::identity(d2, d2);
            for _ in 0..n {
                m = &p * m;
            }
            return m;
        }
        let mut m = CMatrix::identity(d2, d2);
        for k in 0..n {
            let t = t0 + k as f64 * h;
            let g0 = self.generator_at(t);
            let gh = self.generator_at(t + 0.5 * h);
            let g1 = self.generator_at(t + h);
            let k1 = &g0 * &m;
            let k2 = &gh * (&m + &k1 * C64::new(0.5 * h, 0.0));
            let k3 = &gh * (&m + &k2 * C64::new(0.5 * h, 0.0));
            let k4 = &g1 * (&m + &k3 * C64::new(h, 0.0));
            m += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
        }
        m
    }
}

fn static_generator(model: &LindbladModel) -> CMatrix {
    let d2 = model.dim() * model.dim();
    model.generator().first().map(|(_, g)| g.clone()).unwrap_or_else(|| CMatrix::zeros(d2, d2))
}

/// `I + A + A²/2 + A³/6 + A⁴/24` with `A = hG`.
fn taylor_step(g: &CMatrix, h: f64) -> CMatrix {
    let n = g.nrows();
    let a = g * C64::new(h, 0.0);
    let id = CMatrix::identity(n, n);
    let mut p = &id + &a * C64::new(0.25, 0.0);
    p = &id + (&a * p) * C64::new(1.0 / 3.0, 0.0);
    p = &id + (&a * p) * C64::new(0.5, 0.0);
    &id + &a * p
}

#[derive(Clone, Debug)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&DensityMatrix> {
        self.states.last()
    }

    /// `ρ_kk(t)` along the series.
    pub fn population(&self, k: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.matrix()[(k, k)].re).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &DensityMatrix)> {
        self.times.iter().copied().zip(self.states.iter())
    }
}

fn checked_state(model: &LindbladModel, v: &CVector, t: f64) -> Result<DensityMatrix> {
    let d = model.dim();
    let op = Operator::new(model.space().clone(), unvectorize(v, d))?;
    let rho = DensityMatrix::new_unchecked(op);
    rho.check_at(t)?;
    Ok(rho)
}

fn check_start(model: &LindbladModel, rho0: &DensityMatrix) -> Result<()> {
    if rho0.space() != model.space() {
        return Err(Error::DimensionMismatch(format!(
            "initial state on {} but model on {}",
            rho0.space(),
            model.space()
        )));
    }
    Ok(())
}

/// Integrates from `t0` to `t1`, storing every RK4 step.
pub fn evolve(model: &LindbladModel, rho0: &DensityMatrix, t0: f64, t1: f64, dt: f64) -> Result<TimeSeries> {
    check_start(model, rho0)?;
    check_dt(dt)?;
    if t1 < t0 {
        return Err(Error::param("t1", format!("{t1} precedes t0 = {t0}")));
    }
    let n = steps_for(t1 - t0, dt);
    let times: Vec<f64> = (0..=n).map(|k| if n == 0 { t0 } else { t0 + (t1 - t0) * k as f64 / n as f64 }).collect();
    evolve_sampled(model, rho0, t0, &times, dt)
}

/// Integrates from `t0`, returning the state at each of `sample_times`.
pub fn evolve_sampled(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    t0: f64,
    sample_times: &[f64],
    dt: f64,
) -> Result<TimeSeries> {
    check_start(model, rho0)?;
    if sample_times.first().is_some_and(|&t| t < t0) || sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("sample_times", "must be nondecreasing and not before t0"));
    }
    let prop = Propagator::new(model, dt)?;
    let mut v = vectorize(rho0.matrix());
    let mut now = t0;
    let mut states = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        prop.advance(&mut v, now, t);
        now = t;
        states.push(checked_state(model, &v, t)?);
    }
    Ok(TimeSeries { times: sample_times.to_vec(), states })
}

/// The state at `t1`.
pub fn evolve_to(model: &LindbladModel, rho0: &DensityMatrix, t0: f64, t1: f64, dt: f64) -> Result<DensityMatrix> {
    let series = evolve_sampled(model, rho0, t0, &[t1], dt)?;
    Ok(series.states.into_iter().next().expect("one sample"))
}
