use super::FeatureError;

/// Length of the moving window, seconds.
pub const WINDOW_S: f64 = 10.0;
/// Trailing sub-window used for the second peak count, seconds.
pub const HALF_WINDOW_S: f64 = 5.0;
pub const N_FEATURES: usize = 14;

/// Short names, in output order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "mean",
    "max",
    "min",
    "argmin",
    "argmax",
    "amplitude",
    "n_beyond_std",
    "n_below_std",
    "n_above_std",
    "n_peaks",
    "n_peaks_half",
    "n_peaks_above_std",
    "peak_distance",
    "slope",
];

/// The 14 window statistics of `values` sampled at `times`.
///
/// Positions are 0-based indices (first occurrence on ties). The standard
/// deviation is the population one. A peak is a strict local maximum among
/// interior samples; the half-window count keeps peaks later than
/// `t_last - HALF_WINDOW_S`. Peak distance is the mean gap in seconds
/// between consecutive peaks, 0 with fewer than two. Slope is the OLS
/// coefficient against time.
pub fn window_features(times: &[f64], values: &[f64]) -> Result<[f64; N_FEATURES], FeatureError> {
    if values.is_empty() {
        return Err(FeatureError::EmptyWindow);
    }
    if times.len() != values.len() {
        return Err(FeatureError::Length { times: times.len(), values: values.len() });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut argmin, mut argmax) = (0, 0);
    for (i, &v) in values.iter().enumerate() {
        if v < values[argmin] {
            argmin = i;
        }
        if v > values[argmax] {
            argmax = i;
        }
    }
    let (min, max) = (values[argmin], values[argmax]);
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let below = values.iter().filter(|&&v| v < mean - std).count();
    let above = values.iter().filter(|&&v| v > mean + std).count();
    let beyond = values.iter().filter(|&&v| (v - mean).abs() > std).count();

    let peaks: Vec<usize> = (1..values.len().saturating_sub(1))
        .filter(|&i| values[i] > values[i - 1] && values[i] > values[i + 1])
        .collect();
    let t_last = times[times.len() - 1];
    let peaks_half = peaks.iter().filter(|&&i| times[i] > t_last - HALF_WINDOW_S).count();
    let peaks_above = peaks.iter().filter(|&&i| values[i] > mean + std).count();
    let peak_distance = if peaks.len() < 2 {
        0.0
    } else {
        (times[peaks[peaks.len() - 1]] - times[peaks[0]]) / (peaks.len() - 1) as f64
    };

    let t_mean = times.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (&t, &v) in times.iter().zip(values) {
        sxy += (t - t_mean) * (v - mean);
        sxx += (t - t_mean) * (t - t_mean);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    Ok([
        mean,
        max,
        min,
        argmin as f64,
        argmax as f64,
        max - min,
        beyond as f64,
        below as f64,
        above as f64,
        peaks.len() as f64,
        peaks_half as f64,
        peaks_above as f64,
        peak_distance,
        slope,
    ])
}

/// Start index of the trailing window ending at each sample.
pub(crate) fn window_starts(times: &[f64]) -> Vec<usize> {
    let mut starts = Vec::with_capacity(times.len());
    let mut lo = 0;
    for &t in times {
        while times[lo] <= t - WINDOW_S {
            lo += 1;
        }
        starts.push(lo);
    }
    starts
}
