//! Small statistics used by the experiment summaries.

use serde::{Deserialize, Serialize};

/// Pool-adjacent-violators fit of a non-decreasing sequence, equal weights.
pub fn isotonic_increasing(values: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, c1) = blocks[blocks.len() - 1];
            let (s0, c0) = blocks[blocks.len() - 2];
            if s0 / c0 as f64 > s1 / c1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, c0 + c1);
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, c)| std::iter::repeat(s / c as f64).take(c))
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    crate::concentration::deviation::quantile(&v, 0.5)
}

/// Least-squares fit of `log dist_t` against `t` over the iterations whose
/// relative distance lies in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `exp(slope)`: fitted per-iteration contraction factor.
    pub rate: f64,
    pub window_start: usize,
    pub window_end: usize,
    /// Largest `dist_{t+1} / dist_t` over steps starting inside the window.
    pub max_step_ratio: f64,
}

pub const RATE_WINDOW: (f64, f64) = (1e-10, 1e-2);

/// Uses the contiguous stretch from the first to the last iteration inside
/// the window. Needs at least two points.
pub fn fit_rate(dist_history: &[f64], scale: f64, lo: f64, hi: f64) -> Option<RateFit> {
    let inside = |d: f64| d >= lo * scale && d <= hi * scale;
    let start = dist_history.iter().position(|&d| inside(d))?;
    let end = dist_history.iter().rposition(|&d| inside(d))?;
    if end <= start {
        return None;
    }
    let pts: Vec<(f64, f64)> = (start..=end)
        .filter(|&t| dist_history[t] > 0.0)
        .map(|t| (t as f64, dist_history[t].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(t, l)| (t - mt) * (l - ml)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    let max_step_ratio = (start..end.min(dist_history.len() - 1))
        .map(|t| dist_history[t + 1] / dist_history[t])
        .fold(0.0, f64::max);
    Some(RateFit {
        rate: (sxy / sxx).exp(),
        window_start: start,
        window_end: end,
        max_step_ratio,
    })
}

/// Steps `t → t+1` with `dist_t` inside the window that break
/// `dist_{t+1} ≤ factor · dist_t + abs_slack`.
pub fn window_step_violations(
    dist_history: &[f64],
    scale: f64,
    lo: f64,
    hi: f64,
    factor: f64,
    abs_slack: f64,
) -> usize {
    dist_history
        .windows(2)
        .filter(|w| w[0] >= lo * scale && w[0] <= hi * scale)
        .filter(|w| w[1] > factor * w[0] + abs_slack)
        .count()
}
