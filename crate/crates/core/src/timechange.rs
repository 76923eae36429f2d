//! The time-change scheme.
//!
//! Given knot values ξ(k/n) of a Brownian path, the time change φₙ is the
//! Euler solution of `φ' = σ(φ, ξ)^-2`:
//!
//! ```text
//! φₙ((k+1)/n) = φₙ(k/n) + (1/n) / σ²(φₙ(k/n), ξ(k/n)),   φₙ(0) = 0,
//! ```
//!
//! linear between knots. Its inverse τₙ is piecewise linear with knots
//! `(φₙ(k/n), k/n)`, and the approximate solution is `X̂(t) = ξ⁽ⁿ⁾(τₙ(t))`.
//! Since both ξ⁽ⁿ⁾ and τₙ are piecewise linear and τₙ maps φ-knots onto
//! ξ-knots, X̂ is piecewise linear in `t` with breakpoints `{φₙ(k/n)}`.

use std::io::Write;

use crate::brownian::BrownianPath;
use crate::diffusion::DiffusionCoefficient;
use crate::error::{Error, Result};
use crate::grid;

const MIN_STEP: f64 = 1e-300;

/// Position of an SDE time inside the knot sequence: `τₙ(t) = (k + weight) / n`
/// with `weight` in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub knot: usize,
    pub weight: f64,
}

/// Knots `(k/n, φₙ(k/n))` of the Euler time change.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangePath {
    n: usize,
    phi: Vec<f64>,
    sde_horizon: f64,
}

impl TimeChangePath {
    /// Integrates φₙ from 0 and stops at the first knot `K` with
    /// `φₙ(K/n) >= horizon`.
    pub fn build(xi: &BrownianPath, sigma: &DiffusionCoefficient, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "SDE horizon must be positive and finite, got {horizon}"
            )));
        }
        let phi = integrate(xi, sigma, |_, phi| phi >= horizon, horizon)?;
        Ok(Self {
            n: xi.n(),
            phi,
            sde_horizon: horizon,
        })
    }

    /// Integrates φₙ over every knot up to the first one at or beyond
    /// Brownian time `brownian_time`, regardless of the SDE time reached.
    pub fn build_through(
        xi: &BrownianPath,
        sigma: &DiffusionCoefficient,
        brownian_time: f64,
    ) -> Result<Self> {
        if !(brownian_time >= 0.0 && brownian_time.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "brownian time must be non-negative and finite, got {brownian_time}"
            )));
        }
        let n = xi.n() as f64;
        let last = (brownian_time * n).ceil() as usize;
        let phi = integrate(xi, sigma, |k, _| k >= last, f64::INFINITY)?;
        let sde_horizon = *phi.last().expect("at least one knot");
        Ok(Self {
            n: xi.n(),
            phi,
            sde_horizon,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// φₙ at knots `0, 1/n, ..., K/n`.
    pub fn knots_phi(&self) -> &[f64] {
        &self.phi
    }

    /// Index `K` of the last knot.
    pub fn last_knot(&self) -> usize {
        self.phi.len() - 1
    }

    /// The SDE horizon the construction was asked to reach.
    pub fn sde_horizon(&self) -> f64 {
        self.sde_horizon
    }

    pub fn last_brownian_time(&self) -> f64 {
        self.last_knot() as f64 / self.n as f64
    }

    /// Locates `t` with a binary search over the φ-knots.
    pub fn locate(&self, t: f64) -> Result<Segment> {
        let top = self.phi[self.last_knot()];
        if !(t >= 0.0 && t <= top) {
            return Err(Error::OutOfRange {
                what: "SDE time",
                value: t,
                lo: 0.0,
                hi: top,
            });
        }
        let knot = self.phi.partition_point(|&p| p <= t) - 1;
        self.segment_at(knot, t)
    }

    #[inline]
    fn segment_at(&self, knot: usize, t: f64) -> Result<Segment> {
        if knot == self.last_knot() {
            return Ok(Segment { knot, weight: 0.0 });
        }
        let lo = self.phi[knot];
        let step = self.phi[knot + 1] - lo;
        if !(step >= MIN_STEP) {
            return Err(Error::DegenerateStep { knot, step });
        }
        Ok(Segment {
            knot,
            weight: (t - lo) / step,
        })
    }

    /// τₙ(t): the Brownian time at which φₙ reaches `t`.
    pub fn invert(&self, t: f64) -> Result<f64> {
        let seg = self.locate(t)?;
        Ok(self.segment_time(seg))
    }

    #[inline]
    fn segment_time(&self, seg: Segment) -> f64 {
        let n = self.n as f64;
        seg.knot as f64 / n + seg.weight / n
    }

    /// φₙ(s) for Brownian time `s` within the constructed knots.
    pub fn phi_at(&self, s: f64) -> Result<f64> {
        grid::interpolate(&self.phi, self.n, s).ok_or(Error::OutOfRange {
            what: "brownian time",
            value: s,
            lo: 0.0,
            hi: self.last_brownian_time(),
        })
    }

    /// Inverse evaluator specialised for non-decreasing query sequences.
    pub fn cursor(&self) -> InverseCursor<'_> {
        InverseCursor { path: self, knot: 0 }
    }
}

fn integrate(
    xi: &BrownianPath,
    sigma: &DiffusionCoefficient,
    done: impl Fn(usize, f64) -> bool,
    sde_target: f64,
) -> Result<Vec<f64>> {
    let values = xi.values();
    let n = xi.n() as f64;
    let c1_sq = sigma.lower_bound() * sigma.lower_bound();
    let mut phi = Vec::with_capacity(values.len());
    phi.push(0.0);
    let mut k = 0;
    loop {
        let current = phi[k];
        if done(k, current) {
            return Ok(phi);
        }
        if k + 1 >= values.len() {
            let remaining = if sde_target.is_finite() {
                (sde_target - current) * c1_sq
            } else {
                1.0 / n
            };
            return Err(Error::PathExhausted {
                needed: xi.last_time() + remaining,
                available: xi.last_time(),
            });
        }
        let s = sigma.evaluate_checked(current, values[k])?;
        let step = 1.0 / (n * s * s);
        if !(step >= MIN_STEP) {
            return Err(Error::DegenerateStep { knot: k, step });
        }
        phi.push(current + step);
        k += 1;
    }
}

/// Amortised O(1) inversion for sorted queries; falls back to a binary
/// search when a query moves backwards.
pub struct InverseCursor<'a> {
    path: &'a TimeChangePath,
    knot: usize,
}

impl InverseCursor<'_> {
    pub fn locate(&mut self, t: f64) -> Result<Segment> {
        let phi = &self.path.phi;
        let last = self.path.last_knot();
        if !(t >= phi[self.knot] && t <= phi[last]) {
            let seg = self.path.locate(t)?;
            self.knot = seg.knot;
            return Ok(seg);
        }
        while self.knot < last && phi[self.knot + 1] <= t {
            self.knot += 1;
        }
        self.path.segment_at(self.knot, t)
    }

    pub fn invert(&mut self, t: f64) -> Result<f64> {
        let seg = self.locate(t)?;
        Ok(self.path.segment_time(seg))
    }
}

/// The approximate solution `t -> ξ⁽ⁿ⁾(τₙ(t))` on `[0, T]`.
#[derive(Debug, Clone)]
pub struct SamplePath {
    xi: BrownianPath,
    phi: TimeChangePath,
}

impl SamplePath {
    /// Builds the time change on `xi`, extending `xi` from its own stream if
    /// it is too short to reach `horizon`.
    pub fn build(mut xi: BrownianPath, sigma: &DiffusionCoefficient, horizon: f64) -> Result<Self> {
        loop {
            match TimeChangePath::build(&xi, sigma, horizon) {
                Ok(phi) => return Ok(Self { xi, phi }),
                Err(Error::PathExhausted { needed, available }) => {
                    let target = needed.max(2.0 * available) + 2.0 / xi.n() as f64;
                    xi.extend_to(target)?;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Pairs an existing time change with the path it was built from.
    pub fn from_parts(xi: BrownianPath, phi: TimeChangePath) -> Result<Self> {
        if xi.n() != phi.n() || xi.values().len() <= phi.last_knot() {
            return Err(Error::InvalidArgument(
                "time change was not built from this brownian path".into(),
            ));
        }
        Ok(Self { xi, phi })
    }

    pub fn xi(&self) -> &BrownianPath {
        &self.xi
    }

    pub fn time_change(&self) -> &TimeChangePath {
        &self.phi
    }

    pub fn horizon(&self) -> f64 {
        self.phi.sde_horizon
    }

    #[inline]
    fn value_at(&self, seg: Segment) -> f64 {
        let v = self.xi.values();
        if seg.weight == 0.0 {
            v[seg.knot]
        } else {
            v[seg.knot] + seg.weight * (v[seg.knot + 1] - v[seg.knot])
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t >= 0.0 && t <= self.horizon() {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                what: "SDE time",
                value: t,
                lo: 0.0,
                hi: self.horizon(),
            })
        }
    }

    /// X̂(t) = ξ⁽ⁿ⁾(τₙ(t)) for `t` in `[0, T]`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        let seg = self.phi.locate(t)?;
        Ok(self.value_at(seg))
    }

    /// Evaluator for non-decreasing query times.
    pub fn cursor(&self) -> SolutionCursor<'_> {
        SolutionCursor {
            path: self,
            inner: self.phi.cursor(),
        }
    }

    /// `{0} ∪ {φₙ(k/n) <= T} ∪ {T}`, sorted and deduplicated. X̂ is affine
    /// between consecutive entries.
    pub fn breakpoints(&self) -> Vec<f64> {
        let horizon = self.horizon();
        let mut out: Vec<f64> = self
            .phi
            .phi
            .iter()
            .copied()
            .take_while(|&p| p <= horizon)
            .collect();
        if out.last() != Some(&horizon) {
            out.push(horizon);
        }
        out
    }

    /// Writes `t,x_hat` rows over [`SamplePath::breakpoints`].
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x_hat")?;
        let mut cursor = self.cursor();
        for t in self.breakpoints() {
            writeln!(out, "{t},{}", cursor.evaluate(t)?)?;
        }
        Ok(())
    }
}

pub struct SolutionCursor<'a> {
    path: &'a SamplePath,
    inner: InverseCursor<'a>,
}

impl SolutionCursor<'_> {
    pub fn evaluate(&mut self, t: f64) -> Result<f64> {
        self.path.check_time(t)?;
        let seg = self.inner.locate(t)?;
        Ok(self.path.value_at(seg))
    }
}

/// Merges two sorted sequences, dropping exact duplicates.
pub(crate) fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = if j == b.len() || (i < a.len() && a[i] <= b[j]) {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        if out.last() != Some(&next) {
            out.push(next);
        }
    }
    out
}

/// `sup_{t <= T} |τ_a(t) - τ_b(t)|`, exact for the piecewise-linear inverses
/// (evaluated on the union of both φ-knot sets).
pub fn sup_inverse_gap(a: &TimeChangePath, b: &TimeChangePath, horizon: f64) -> Result<f64> {
    let grid_a: Vec<f64> = a.phi.iter().copied().take_while(|&p| p <= horizon).collect();
    let grid_b: Vec<f64> = b.phi.iter().copied().take_while(|&p| p <= horizon).collect();
    let mut points = merge_sorted(&grid_a, &grid_b);
    if points.last() != Some(&horizon) {
        points.push(horizon);
    }
    let (mut ca, mut cb) = (a.cursor(), b.cursor());
    let mut sup = 0.0f64;
    for t in points {
        sup = sup.max((ca.invert(t)? - cb.invert(t)?).abs());
    }
    Ok(sup)
}

/// `sup_{s <= s_max} |φ_a(s) - φ_b(s)|` over the union of both knot grids.
/// Both paths must be constructed through `s_max`.
pub fn sup_phi_gap(a: &TimeChangePath, b: &TimeChangePath, s_max: f64) -> Result<f64> {
    let knots = |p: &TimeChangePath| -> Vec<f64> {
        let n = p.n as f64;
        (0..=p.last_knot())
            .map(|k| k as f64 / n)
            .take_while(|&s| s <= s_max)
            .collect()
    };
    let mut points = merge_sorted(&knots(a), &knots(b));
    if points.last() != Some(&s_max) {
        points.push(s_max);
    }
    let mut sup = 0.0f64;
    for s in points {
        sup = sup.max((a.phi_at(s)? - b.phi_at(s)?).abs());
    }
    Ok(sup)
}
