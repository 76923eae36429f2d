//! Linear interpolation on the uniform grid `k / n`.

/// Interpolates `values` (knots at `k / n`) at time `t`.
///
/// Times that round-trip to a knot (`k as f64 / n as f64 == t`) return the
/// stored value exactly, even when `t * n` is not exactly `k`. Returns `None`
/// for `t` outside `[0, (len - 1) / n]`.
pub(crate) fn interpolate(values: &[f64], n: usize, t: f64) -> Option<f64> {
    let last = values.len().checked_sub(1)?;
    let nf = n as f64;
    if !(t >= 0.0) {
        return None;
    }
    let scaled = t * nf;
    let nearest = scaled.round();
    if nearest <= last as f64 && nearest / nf == t {
        return Some(values[nearest as usize]);
    }
    if scaled > last as f64 {
        return None;
    }
    let k = (scaled.floor() as usize).min(last.saturating_sub(1));
    if k == last {
        return Some(values[last]);
    }
    let frac = scaled - k as f64;
    Some(values[k] + frac * (values[k + 1] - values[k]))
}
