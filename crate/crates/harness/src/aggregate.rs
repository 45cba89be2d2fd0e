//! Per-method summaries across seeds.

use crate::experiment::RunTrace;

/// Mean and population standard deviation of the optimality gap at each
/// trial, truncated to the shortest run.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub label: String,
    pub runs: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl AggregateSeries {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

pub fn aggregate<'a>(label: &str, runs: impl IntoIterator<Item = &'a RunTrace>) -> AggregateSeries {
    let gaps: Vec<Vec<f64>> = runs.into_iter().map(|r| r.trace.gaps()).collect();
    let n = gaps.iter().map(Vec::len).min().unwrap_or(0);
    let k = gaps.len() as f64;
    let mut mean = Vec::with_capacity(n);
    let mut std = Vec::with_capacity(n);
    for t in 0..n {
        let m = gaps.iter().map(|g| g[t]).sum::<f64>() / k;
        let v = gaps.iter().map(|g| (g[t] - m) * (g[t] - m)).sum::<f64>() / k;
        mean.push(m);
        std.push(v.sqrt());
    }
    AggregateSeries {
        label: label.to_string(),
        runs: gaps.len(),
        mean,
        std,
    }
}

/// Median with the midpoint convention for even counts. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Gap after trial `t` (1-based) of every run that reached it.
pub fn gaps_at<'a>(runs: impl IntoIterator<Item = &'a RunTrace>, t: usize) -> Vec<f64> {
    runs.into_iter()
        .filter_map(|r| r.trace.gaps().get(t.wrapping_sub(1)).copied())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
