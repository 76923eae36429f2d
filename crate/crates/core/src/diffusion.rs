//! Diffusion coefficients σ(t, x) for dX = σ(t, X) dW.
//!
//! A [`DiffusionCoefficient`] carries its evaluation function together with
//! the declared bounds `C1 <= σ <= C2` and regularity metadata. The scheme
//! itself only ever evaluates σ pointwise; the metadata is used for path
//! provisioning, contract checks and for labelling theoretical rates.

use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type Sigma = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// Whether the coefficient claims the C^{2,2}-type smoothness needed for the
/// improved rate, or only Hölder regularity in space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothnessClass {
    Holder,
    LipschitzSmooth,
}

/// An immutable, shareable σ(t, x) with declared bounds and regularity.
#[derive(Clone)]
pub struct DiffusionCoefficient {
    label: String,
    sigma: Arc<Sigma>,
    lower: f64,
    upper: f64,
    holder_beta: f64,
    holder_constant: Option<f64>,
    time_lipschitz: f64,
    smoothness: SmoothnessClass,
}

impl fmt::Debug for DiffusionCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionCoefficient")
            .field("label", &self.label)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("holder_beta", &self.holder_beta)
            .field("holder_constant", &self.holder_constant)
            .field("time_lipschitz", &self.time_lipschitz)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl DiffusionCoefficient {
    /// Wraps a user supplied σ. Bounds and metadata are validated, the
    /// function itself is only checked by [`check_contract`].
    pub fn new<F>(
        label: impl Into<String>,
        sigma: F,
        lower: f64,
        upper: f64,
        holder_beta: f64,
        time_lipschitz: f64,
        smoothness: SmoothnessClass,
    ) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        let label = label.into();
        let bad = |reason: &str| Error::InvalidParameters {
            name: label.clone(),
            reason: reason.to_string(),
        };
        if !(lower > 0.0 && lower.is_finite()) {
            return Err(bad("lower bound C1 must be positive and finite"));
        }
        if !(upper >= lower && upper.is_finite()) {
            return Err(bad("upper bound C2 must be finite and at least C1"));
        }
        if !(holder_beta > 0.0 && holder_beta <= 1.0) {
            return Err(bad("holder exponent must lie in (0, 1]"));
        }
        if !(time_lipschitz >= 0.0 && time_lipschitz.is_finite()) {
            return Err(bad("time Lipschitz constant must be non-negative"));
        }
        Ok(Self {
            label,
            sigma: Arc::new(sigma),
            lower,
            upper,
            holder_beta,
            holder_constant: None,
            time_lipschitz,
            smoothness,
        })
    }

    /// Declares the spatial Hölder constant C_β, enabling the ratio check in
    /// [`check_contract`].
    pub fn with_holder_constant(mut self, constant: f64) -> Self {
        self.holder_constant = Some(constant);
        self
    }

    #[inline]
    pub fn evaluate(&self, t: f64, x: f64) -> f64 {
        (self.sigma)(t, x)
    }

    /// Evaluates σ and fails if the value leaves `[C1, C2]`.
    #[inline]
    pub fn evaluate_checked(&self, t: f64, x: f64) -> Result<f64> {
        let value = self.evaluate(t, x);
        if value >= self.lower && value <= self.upper {
            Ok(value)
        } else {
            Err(Error::ContractBreach {
                label: self.label.clone(),
                t,
                x,
                value,
                lower: self.lower,
                upper: self.upper,
            })
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower
    }

    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    pub fn holder_beta(&self) -> f64 {
        self.holder_beta
    }

    pub fn holder_constant(&self) -> Option<f64> {
        self.holder_constant
    }

    pub fn time_lipschitz(&self) -> f64 {
        self.time_lipschitz
    }

    pub fn smoothness(&self) -> SmoothnessClass {
        self.smoothness
    }
}

/// Names accepted by [`builtin_coefficient`].
pub const CORPUS: &[&str] = &[
    "constant",
    "smooth-sin",
    "time-smooth",
    "holder-root",
    "step-mollified",
];

/// Builds a corpus coefficient by name.
///
/// | name             | params                    | σ(t, x)                                   |
/// |------------------|---------------------------|-------------------------------------------|
/// | `constant`       | `[c]`                     | `c`                                       |
/// | `smooth-sin`     | `[a, b]`, `a > b > 0`     | `a + b sin x`                             |
/// | `time-smooth`    | `[a, b]`, `a > b > 0`     | `a + b sin(x + t)`                        |
/// | `holder-root`    | `[a, b, beta, k]`         | `a + min(abs(x - k)^beta, b)`             |
/// | `step-mollified` | `[lo, hi, center, width]` | linear ramp from `lo` to `hi` over `[center - width/2, center + width/2]` |
pub fn builtin_coefficient(name: &str, params: &[f64]) -> Result<DiffusionCoefficient> {
    let invalid = |reason: &str| Error::InvalidParameters {
        name: name.to_string(),
        reason: reason.to_string(),
    };
    let arity = |n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(invalid(&format!("expected {n} parameters, got {}", params.len())))
        }
    };
    if params.iter().any(|p| !p.is_finite()) {
        return Err(invalid("parameters must be finite"));
    }

    match name {
        "constant" => {
            arity(1)?;
            let c = params[0];
            if c <= 0.0 {
                return Err(invalid("c must be positive"));
            }
            Ok(DiffusionCoefficient::new(
                "constant",
                move |_, _| c,
                c,
                c,
                1.0,
                0.0,
                SmoothnessClass::LipschitzSmooth,
            )?
            .with_holder_constant(0.0))
        }
        "smooth-sin" => {
            arity(2)?;
            let (a, b) = (params[0], params[1]);
            if !(a > b && b > 0.0) {
                return Err(invalid("need a > b > 0"));
            }
            Ok(DiffusionCoefficient::new(
                "smooth-sin",
                move |_, x: f64| a + b * x.sin(),
                a - b,
                a + b,
                1.0,
                0.0,
                SmoothnessClass::LipschitzSmooth,
            )?
            .with_holder_constant(b))
        }
        "time-smooth" => {
            arity(2)?;
            let (a, b) = (params[0], params[1]);
            if !(a > b && b > 0.0) {
                return Err(invalid("need a > b > 0"));
            }
            Ok(DiffusionCoefficient::new(
                "time-smooth",
                move |t, x: f64| a + b * (x + t).sin(),
                a - b,
                a + b,
                1.0,
                b,
                SmoothnessClass::LipschitzSmooth,
            )?
            .with_holder_constant(b))
        }
        "holder-root" => {
            arity(4)?;
            let (a, b, beta, k) = (params[0], params[1], params[2], params[3]);
            if !(a > 0.0 && b > 0.0) {
                return Err(invalid("need a > 0 and b > 0"));
            }
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(invalid("beta must lie in (0, 1]"));
            }
            // min(u^beta, b) is beta-Hölder with constant 1 on u >= 0, and
            // u = |x - k| is 1-Lipschitz.
            Ok(DiffusionCoefficient::new(
                "holder-root",
                move |_, x: f64| a + (x - k).abs().powf(beta).min(b),
                a,
                a + b,
                beta,
                0.0,
                SmoothnessClass::Holder,
            )?
            .with_holder_constant(1.0))
        }
        "step-mollified" => {
            arity(4)?;
            let (lo, hi, center, width) = (params[0], params[1], params[2], params[3]);
            if !(lo > 0.0 && hi > 0.0) {
                return Err(invalid("levels must be positive"));
            }
            if width <= 0.0 {
                return Err(invalid("width must be positive"));
            }
            let start = center - 0.5 * width;
            Ok(DiffusionCoefficient::new(
                "step-mollified",
                move |_, x: f64| {
                    let w = ((x - start) / width).clamp(0.0, 1.0);
                    lo + (hi - lo) * w
                },
                lo.min(hi),
                lo.max(hi),
                1.0,
                0.0,
                SmoothnessClass::Holder,
            )?
            .with_holder_constant((hi - lo).abs() / width))
        }
        _ => Err(Error::UnknownCoefficient {
            name: name.to_string(),
            available: CORPUS.iter().map(|s| s.to_string()).collect(),
        }),
    }
}

/// Closed rectangle `[t_min, t_max] x [x_min, x_max]` sampled by
/// [`check_contract`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub t_min: f64,
    pub t_max: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl Domain {
    pub fn new(t: (f64, f64), x: (f64, f64)) -> Self {
        Self {
            t_min: t.0,
            t_max: t.1,
            x_min: x.0,
            x_max: x.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundViolation {
    pub t: f64,
    pub x: f64,
    pub value: f64,
    /// Distance outside `[C1, C2]`; non-finite values report infinity.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractReport {
    pub samples: usize,
    /// Number of points where σ fell outside `[C1, C2]`.
    pub bound_violations: usize,
    pub worst_bound_violation: Option<BoundViolation>,
    /// Largest `|σ(t,x) - σ(t,y)| / |x - y|^β` over sampled pairs.
    pub worst_holder_ratio: f64,
    /// Number of pairs whose ratio exceeded the declared C_β.
    pub holder_violations: usize,
}

impl ContractReport {
    pub fn is_clean(&self) -> bool {
        self.bound_violations == 0 && self.holder_violations == 0
    }
}

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Randomized check of the boundedness and Hölder contracts of `coeff`.
///
/// Each sample draws `(t, x, y)` in `domain` and evaluates σ at `(t, x)` and
/// `(t, y)`. Every sample also visits the grid point `x = 0` on its first
/// iteration so that singular behaviour at the origin is always probed.
pub fn check_contract(
    coeff: &DiffusionCoefficient,
    samples: usize,
    seed: u64,
    domain: Domain,
) -> ContractReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c1, c2) = (coeff.lower_bound(), coeff.upper_bound());
    let beta = coeff.holder_beta();
    let holder_tol = coeff.holder_constant().map(|c| c * (1.0 + 1e-9) + 1e-12);

    let mut report = ContractReport {
        samples,
        bound_violations: 0,
        worst_bound_violation: None,
        worst_holder_ratio: 0.0,
        holder_violations: 0,
    };

    let check_bound = |t: f64, x: f64, value: f64, report: &mut ContractReport| {
        let excess = if !value.is_finite() {
            f64::INFINITY
        } else if value < c1 {
            c1 - value
        } else if value > c2 {
            value - c2
        } else {
            return;
        };
        report.bound_violations += 1;
        if report
            .worst_bound_violation
            .map_or(true, |w| excess > w.excess)
        {
            report.worst_bound_violation = Some(BoundViolation { t, x, value, excess });
        }
    };

    for i in 0..samples {
        let t = domain.t_min + (domain.t_max - domain.t_min) * unit(&mut rng);
        let x = if i == 0 && domain.x_min <= 0.0 && domain.x_max >= 0.0 {
            0.0
        } else {
            domain.x_min + (domain.x_max - domain.x_min) * unit(&mut rng)
        };
        let y = domain.x_min + (domain.x_max - domain.x_min) * unit(&mut rng);

        let sx = coeff.evaluate(t, x);
        let sy = coeff.evaluate(t, y);
        check_bound(t, x, sx, &mut report);
        check_bound(t, y, sy, &mut report);

        let dx = (x - y).abs();
        if dx > 0.0 && sx.is_finite() && sy.is_finite() {
            let ratio = (sx - sy).abs() / dx.powf(beta);
            if ratio > report.worst_holder_ratio {
                report.worst_holder_ratio = ratio;
            }
            if let Some(tol) = holder_tol {
                if ratio > tol {
                    report.holder_violations += 1;
                }
            }
        }
    }
    report
}
