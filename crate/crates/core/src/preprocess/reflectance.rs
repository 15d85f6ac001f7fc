use serde::{Deserialize, Serialize};

use crate::pcdata::is_missing;

/// Which minimum the robust normalization subtracts after scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormVariant {
    /// `(x - median) / IQR - min(x)` with the raw channel minimum.
    #[default]
    Literal,
    /// `(x - median) / IQR` shifted so its own minimum is zero.
    ScaledMin,
}

/// Non-fatal conditions raised while normalizing a channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormWarning {
    /// IQR was zero; the scale fell back to 1.
    ZeroIqr,
    /// Every entry was missing; the channel is returned unchanged.
    AllMissing,
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Outlier-robust normalization of one reflectance channel, computed over the
/// observed entries only; missing entries stay missing.
///
/// A channel with zero interquartile range is centered on its median and
/// shifted to a zero minimum, with [`NormWarning::ZeroIqr`].
pub fn normalize_reflectance(values: &[f32], variant: NormVariant) -> (Vec<f32>, Option<NormWarning>) {
    let mut observed: Vec<f64> = values.iter().filter(|v| !is_missing(**v)).map(|&v| v as f64).collect();
    if observed.is_empty() {
        return (values.to_vec(), Some(NormWarning::AllMissing));
    }
    observed.sort_by(f64::total_cmp);
    let median = quantile_sorted(&observed, 0.5);
    let iqr = quantile_sorted(&observed, 0.75) - quantile_sorted(&observed, 0.25);
    let raw_min = observed[0];

    let (scale, shift, warning) = if iqr > 0.0 {
        let shift = match variant {
            NormVariant::Literal => raw_min,
            NormVariant::ScaledMin => (raw_min - median) / iqr,
        };
        (iqr, shift, None)
    } else {
        (1.0, raw_min - median, Some(NormWarning::ZeroIqr))
    };
    let out = values
        .iter()
        .map(|&v| {
            if is_missing(v) {
                v
            } else {
                ((v as f64 - median) / scale - shift) as f32
            }
        })
        .collect();
    (out, warning)
}
