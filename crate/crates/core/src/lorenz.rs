//! Lorenz '63 trajectories integrated with classical fourth-order Runge–Kutta.

use alloc::format;
use alloc::vec::Vec;

use crate::data::{scale_01, Dataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Any coordinate beyond this magnitude aborts integration.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LorenzParams {
    pub sigma: f64,
    pub r: f64,
    pub b: f64,
    pub dt: f64,
    pub initial: [f64; 3],
    pub transient_steps: usize,
    pub total_steps: usize,
}

impl Default for LorenzParams {
    fn default() -> Self {
        LorenzParams::benchmark()
    }
}

impl LorenzParams {
    /// σ = 10, r = 28, b = 8/3, dt = 0.0025 from (1, 0, 1); 1000 transient
    /// steps dropped, 100000 kept.
    pub fn benchmark() -> Self {
        LorenzParams {
            sigma: 10.0,
            r: 28.0,
            b: 8.0 / 3.0,
            dt: 0.0025,
            initial: [1.0, 0.0, 1.0],
            transient_steps: 1000,
            total_steps: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        if !(self.sigma.is_finite() && self.r.is_finite() && self.b.is_finite())
            || self.initial.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Config("Lorenz parameters must be finite".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn lorenz_rhs(s: [f64; 3], p: &LorenzParams) -> [f64; 3] {
    let [x, y, z] = s;
    [p.sigma * (y - x), x * (p.r - z) - y, x * y - p.b * z]
}

#[inline]
fn axpy(s: [f64; 3], a: f64, k: [f64; 3]) -> [f64; 3] {
    [s[0] + a * k[0], s[1] + a * k[1], s[2] + a * k[2]]
}

/// One classical RK4 step.
pub fn rk4_step(state: [f64; 3], dt: f64, p: &LorenzParams) -> Result<[f64; 3]> {
    if !(dt >= 0.0) {
        return Err(Error::Config(format!("dt must be non-negative, got {dt}")));
    }
    let k1 = lorenz_rhs(state, p);
    let k2 = lorenz_rhs(axpy(state, dt / 2.0, k1), p);
    let k3 = lorenz_rhs(axpy(state, dt / 2.0, k2), p);
    let k4 = lorenz_rhs(axpy(state, dt, k3), p);
    let mut next = [0.0; 3];
    for i in 0..3 {
        next[i] = state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    for (stage, k) in [k1, k2, k3, k4].iter().enumerate() {
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                context: format!("RK4 stage {}", stage + 1),
                index: 0,
            });
        }
    }
    Ok(next)
}

/// Integrates the system, drops the transient and returns the retained
/// states (one row per step, unscaled).
pub fn integrate(p: &LorenzParams) -> Result<Matrix> {
    p.validate()?;
    let mut state = p.initial;
    let mut data = Vec::with_capacity(p.total_steps * 3);
    for step in 0..p.transient_steps + p.total_steps {
        state = rk4_step(state, p.dt, p).map_err(|e| match e {
            Error::Divergence { context, .. } => Error::Divergence { context, index: step },
            other => other,
        })?;
        if state.iter().any(|v| !(v.abs() <= DIVERGENCE_LIMIT)) {
            return Err(Error::Divergence {
                context: format!("Lorenz trajectory exceeded {DIVERGENCE_LIMIT:e}"),
                index: step,
            });
        }
        if step >= p.transient_steps {
            data.extend_from_slice(&state);
        }
    }
    Matrix::from_vec(p.total_steps, 3, data)
}

/// Integrates, scales every feature to [0,1] over all retained points and
/// splits 80/10/10 in temporal order.
pub fn generate_dataset(p: &LorenzParams) -> Result<Dataset> {
    let raw = integrate(p)?;
    let n = raw.rows();
    let (data, scaling) = if n >= 2 {
        let (s, meta) = scale_01(&raw)?;
        (s, Some(meta))
    } else {
        // A single point has no spread; keep it raw and unscaled.
        (raw, None)
    };
    let train = n * 8 / 10;
    let validation = n / 10;
    let mut ds = Dataset {
        data,
        scaling,
        splits: Vec::new(),
        provenance: format!(
            "lorenz63 rk4 sigma={} r={} b={} dt={} initial={:?} transient={} steps={}",
            p.sigma, p.r, p.b, p.dt, p.initial, p.transient_steps, p.total_steps
        ),
    };
    ds.assign_splits(train, validation, n - train - validation)?;
    Ok(ds)
}
