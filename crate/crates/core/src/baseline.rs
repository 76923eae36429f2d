//! Euler–Maruyama baseline, `X_{k+1} = X_k + σ(k/n, X_k) ΔW_k`.
//!
//! The driver is a [`BrownianPath`] read in SDE time, so a fine driver and its
//! subsamples give coupled EM paths at several step sizes.

use std::io::Write;

use crate::brownian::BrownianPath;
use crate::diffusion::DiffusionCoefficient;
use crate::error::{Error, Result};
use crate::grid;

#[derive(Debug, Clone, PartialEq)]
pub struct EmPath {
    n: usize,
    values: Vec<f64>,
    horizon: f64,
}

/// Runs `ceil(n T)` EM steps driven by the increments of `driver`.
pub fn em_simulate(
    sigma: &DiffusionCoefficient,
    driver: &BrownianPath,
    horizon: f64,
    x0: f64,
) -> Result<EmPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "SDE horizon must be positive and finite, got {horizon}"
        )));
    }
    let n = driver.n();
    let steps = (n as f64 * horizon).ceil() as usize;
    let w = driver.values();
    if w.len() <= steps {
        return Err(Error::PathExhausted {
            needed: steps as f64 / n as f64,
            available: driver.last_time(),
        });
    }
    let nf = n as f64;
    let mut values = Vec::with_capacity(steps + 1);
    let mut x = x0;
    values.push(x);
    for k in 0..steps {
        let s = sigma.evaluate_checked(k as f64 / nf, x)?;
        x += s * (w[k + 1] - w[k]);
        values.push(x);
    }
    Ok(EmPath { n, values, horizon })
}

impl EmPath {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Linear interpolation between EM knots, for `t` in `[0, T]`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        let out_of_range = Error::OutOfRange {
            what: "SDE time",
            value: t,
            lo: 0.0,
            hi: self.horizon,
        };
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(out_of_range);
        }
        grid::interpolate(&self.values, self.n, t).ok_or(out_of_range)
    }

    /// Knot times `k/n` inside `[0, T]`, plus `T`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let n = self.n as f64;
        let mut out: Vec<f64> = (0..self.values.len())
            .map(|k| k as f64 / n)
            .take_while(|&t| t <= self.horizon)
            .collect();
        if out.last() != Some(&self.horizon) {
            out.push(self.horizon);
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x_hat")?;
        for t in self.breakpoints() {
            writeln!(out, "{t},{}", self.evaluate(t)?)?;
        }
        Ok(())
    }
}
