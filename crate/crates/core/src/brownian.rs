//! Seeded Brownian paths on a uniform grid.
//!
//! Increment `j` of sample `i` at the base resolution is drawn from the
//! ChaCha8 stream keyed by `master_seed`, stream id `i`, word position `2j`,
//! then mapped to a standard normal by the inverse CDF. A sample therefore
//! depends only on `(master_seed, sample_index)`, never on scheduling, and a
//! path can be extended without disturbing its prefix.
//!
//! Coarser resolutions are obtained with [`BrownianPath::subsample`], which
//! keeps every `factor`-th knot of the same realization.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::grid;

/// Standard normal quantile.
#[inline]
pub fn standard_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// Maps a raw 64-bit word to the open interval (0, 1).
#[inline]
fn open_unit(word: u64) -> f64 {
    ((word >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Counter-addressable source of standard normals for one sample.
#[derive(Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(master_seed: u64, sample_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(sample_index);
        Self { rng }
    }

    /// Positions the stream so the next draw is draw number `index`.
    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(2 * index as u128);
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        standard_normal_quantile(open_unit(self.rng.next_u64()))
    }
}

/// ξ sampled at Brownian times `k / n`, with linear interpolation between
/// knots.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    n: usize,
    horizon: f64,
    values: Vec<f64>,
    /// `(master_seed, sample_index)` of the generating stream; `None` for
    /// paths built from explicit values.
    origin: Option<(u64, u64)>,
    /// Base-resolution increments per knot step (`n * stride` is the
    /// resolution the stream was drawn at).
    stride: usize,
}

fn knot_count(n: usize, horizon: f64) -> usize {
    (n as f64 * horizon).floor() as usize + 1
}

impl BrownianPath {
    /// Draws a path with `floor(n * horizon) + 1` knots starting at `x0`.
    pub fn generate(
        n: usize,
        horizon: f64,
        x0: f64,
        master_seed: u64,
        sample_index: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("resolution n must be at least 1".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "brownian horizon must be positive and finite, got {horizon}"
            )));
        }
        if !x0.is_finite() {
            return Err(Error::InvalidArgument(format!("x0 must be finite, got {x0}")));
        }
        let mut path = Self {
            n,
            horizon,
            values: vec![x0],
            origin: Some((master_seed, sample_index)),
            stride: 1,
        };
        path.fill_to(knot_count(n, horizon));
        Ok(path)
    }

    /// Wraps explicit knot values at resolution `n`. Such a path has no
    /// generating stream and cannot be extended.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() < 2 {
            return Err(Error::InvalidArgument(
                "need n >= 1 and at least two knot values".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("knot values must be finite".into()));
        }
        Ok(Self {
            n,
            horizon: (values.len() - 1) as f64 / n as f64,
            values,
            origin: None,
            stride: 1,
        })
    }

    /// Appends knots until `len` are stored, continuing the same stream.
    fn fill_to(&mut self, len: usize) {
        let have = self.values.len();
        let Some((master_seed, sample_index)) = self.origin else {
            return;
        };
        if len <= have {
            return;
        }
        let scale = 1.0 / ((self.n * self.stride) as f64).sqrt();
        let mut stream = NormalStream::new(master_seed, sample_index);
        stream.seek(((have - 1) * self.stride) as u64);
        self.values.reserve(len - have);
        let mut x = self.values[have - 1];
        for _ in have..len {
            // Same summation order as the base-resolution path, so subsampled
            // and extended paths agree bit-exactly with their fine parent.
            for _ in 0..self.stride {
                x += stream.next_normal() * scale;
            }
            self.values.push(x);
        }
    }

    /// Extends the path to a longer Brownian horizon. Existing knots are left
    /// untouched; new knots continue the same counter sequence.
    pub fn extend_to(&mut self, horizon: f64) -> Result<()> {
        if !(horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be finite, got {horizon}")));
        }
        if horizon > self.horizon {
            if self.origin.is_none() {
                return Err(Error::PathExhausted {
                    needed: horizon,
                    available: self.last_time(),
                });
            }
            self.horizon = horizon;
            self.fill_to(knot_count(self.n, horizon));
        }
        Ok(())
    }

    /// Keeps every `factor`-th knot, giving the same realization at
    /// resolution `n / factor`.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "subsample factor {factor} does not divide resolution {}",
                self.n
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        Ok(Self {
            n: self.n / factor,
            horizon: self.horizon,
            values: self.values.iter().step_by(factor).copied().collect(),
            origin: self.origin,
            stride: self.stride * factor,
        })
    }

    /// Linear interpolant ξ⁽ⁿ⁾ at Brownian time `t`.
    pub fn interpolate(&self, t: f64) -> Result<f64> {
        grid::interpolate(&self.values, self.n, t).ok_or(Error::OutOfRange {
            what: "brownian time",
            value: t,
            lo: 0.0,
            hi: self.last_time(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    /// `(master_seed, sample_index)` of the generating stream.
    pub fn origin(&self) -> Option<(u64, u64)> {
        self.origin
    }

    /// Brownian time of the last stored knot.
    pub fn last_time(&self) -> f64 {
        (self.values.len() - 1) as f64 / self.n as f64
    }

    /// Writes `knot_index,time,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "knot_index,time,value")?;
        let n = self.n as f64;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{k},{},{v}", k as f64 / n)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knot_count_and_initial_value() {
        let p = BrownianPath::generate(4, 1.0, 3.5, 1, 0).unwrap();
        assert_eq!(p.values().len(), 5);
        assert_eq!(p.values()[0], 3.5);
        let p = BrownianPath::generate(16, 2.3, 0.0, 1, 0).unwrap();
        assert_eq!(p.values().len(), (16.0f64 * 2.3).floor() as usize + 1);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(BrownianPath::generate(0, 1.0, 0.0, 1, 0).is_err());
        assert!(BrownianPath::generate(4, 0.0, 0.0, 1, 0).is_err());
        assert!(BrownianPath::generate(4, -1.0, 0.0, 1, 0).is_err());
        assert!(BrownianPath::generate(4, f64::INFINITY, 0.0, 1, 0).is_err());
    }

    #[test]
    fn deterministic_per_sample() {
        let a = BrownianPath::generate(64, 3.0, 0.0, 42, 17).unwrap();
        let b = BrownianPath::generate(64, 3.0, 0.0, 42, 17).unwrap();
        let c = BrownianPath::generate(64, 3.0, 0.0, 42, 18).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn interpolation_examples() {
        let p = BrownianPath::generate(8, 1.0, 0.0, 5, 0).unwrap();
        for (k, v) in p.values().iter().enumerate() {
            assert_eq!(p.interpolate(k as f64 / 8.0).unwrap(), *v);
        }
        let v = p.values();
        let mid = p.interpolate(2.5 / 8.0).unwrap();
        assert_eq!(mid, (v[2] + v[3]) / 2.0);
        assert!(p.interpolate(1.01).is_err());
        assert!(p.interpolate(-1e-9).is_err());
    }

    #[test]
    fn subsample_examples() {
        let p = BrownianPath::generate(8, 2.0, 0.0, 3, 1).unwrap();
        assert_eq!(p.subsample(1).unwrap(), p);
        let q = p.subsample(2).unwrap();
        assert_eq!(q.n(), 4);
        for (k, v) in q.values().iter().enumerate() {
            assert_eq!(*v, p.values()[2 * k]);
        }
        assert_eq!(q.subsample(2).unwrap(), p.subsample(4).unwrap());
        assert!(p.subsample(3).is_err());
        assert!(p.subsample(0).is_err());
    }

    #[test]
    fn extension_preserves_prefix_and_matches_longer_draw() {
        let mut short = BrownianPath::generate(32, 1.0, 0.5, 9, 4).unwrap();
        let long = BrownianPath::generate(32, 3.0, 0.5, 9, 4).unwrap();
        let prefix = short.values().to_vec();
        short.extend_to(3.0).unwrap();
        assert_eq!(&short.values()[..prefix.len()], &prefix[..]);
        assert_eq!(short.values(), long.values());
    }

    #[test]
    fn extension_of_subsampled_path_stays_coupled() {
        let fine = BrownianPath::generate(64, 4.0, 0.0, 2, 8).unwrap();
        let mut coarse = BrownianPath::generate(64, 1.0, 0.0, 2, 8)
            .unwrap()
            .subsample(4)
            .unwrap();
        coarse.extend_to(4.0).unwrap();
        assert_eq!(coarse, fine.subsample(4).unwrap());
    }

    #[test]
    fn explicit_values() {
        let p = BrownianPath::from_values(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(p.interpolate(0.25).unwrap(), 0.25);
        let mut q = p.clone();
        assert!(q.extend_to(2.0).is_err());
        assert!(BrownianPath::from_values(1, vec![0.0]).is_err());
    }

    #[test]
    fn csv_dump() {
        let p = BrownianPath::generate(2, 1.0, 0.0, 1, 0).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "knot_index,time,value");
        assert_eq!(lines[1], "0,0,0");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("1,0.5,"));
    }

    #[test]
    fn quantile_is_symmetric_and_accurate() {
        assert_eq!(standard_normal_quantile(0.5), 0.0);
        assert!((standard_normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((standard_normal_quantile(0.025) + 1.959963984540054).abs() < 1e-12);
    }
}
