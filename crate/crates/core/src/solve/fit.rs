use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::linalg::SparseMatrix;
use crate::{Error, Result};

/// `sqrt(v^T M_1 v + v^T K_1 v)` with unit-coefficient matrices.
pub fn discrete_h1_norm(k1: &SparseMatrix, m1: &SparseMatrix, v: &[f64]) -> f64 {
    (m1.quad_form(v) + k1.quad_form(v)).max(0.0).sqrt()
}

/// Closed time interval used by a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub t_start: f64,
    pub t_end: f64,
}

impl FitWindow {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start - 1e-12 && t <= self.t_end + 1e-12
    }
}

/// Exponential rate fitted to `log |u(t) - u_eq - m|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub window: FitWindow,
    /// RMS residual of the log-linear least-squares fit.
    pub fit_residual: f64,
    /// Constant added to the equilibrium (the weighted initial average).
    pub offset: f64,
    pub n_points: usize,
}

/// Least-squares rate of `norms(t) ~ C exp(-rate t)` over the window.
pub fn fit_log_linear(times: &[f64], norms: &[f64], window: FitWindow, offset: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|(t, _)| window.contains(**t))
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 5 {
        return Err(Error::DecayFit(format!(
            "need at least 5 samples in [{}, {}], got {}",
            window.t_start,
            window.t_end,
            pts.len()
        )));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 1e-14)) {
        return Err(Error::DecayFit(format!(
            "distance to equilibrium is {v:e} at t = {t}; the run has already converged, use a shorter window"
        )));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1.ln() - ym)).sum();
    if sxx <= 0.0 {
        return Err(Error::DecayFit("window contains a single time".into()));
    }
    let slope = sxy / sxx;
    let icpt = ym - slope * tm;
    let fit_residual = (pts
        .iter()
        .map(|p| (p.1.ln() - icpt - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let rate = -slope;
    if !(rate > 0.0) {
        return Err(Error::DecayFit(format!("fitted rate {rate:e} is not positive")));
    }
    Ok(DecayFit {
        rate,
        window,
        fit_residual,
        offset,
        n_points: pts.len(),
    })
}

/// Fits the decay of `|u(t) - equilibrium - offset|_{H^1}` over a stored series.
pub fn fit_decay(
    series: &TimeSeries,
    equilibrium: &[f64],
    offset: f64,
    k1: &SparseMatrix,
    m1: &SparseMatrix,
    window: FitWindow,
) -> Result<DecayFit> {
    let mut norms = Vec::with_capacity(series.len());
    for snap in &series.snapshots {
        if snap.len() != equilibrium.len() || snap.len() != k1.dim() {
            return Err(Error::DimensionMismatch {
                expected: k1.dim(),
                got: snap.len(),
            });
        }
        let d: Vec<f64> = snap.iter().zip(equilibrium).map(|(u, e)| u - e - offset).collect();
        norms.push(discrete_h1_norm(k1, m1, &d));
    }
    fit_log_linear(&series.times, &norms, window, offset)
}

/// Start of the first stretch where a series stops moving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plateau {
    pub index: usize,
    pub time: f64,
    /// Mean of the values from `index` to the end.
    pub value: f64,
}

/// First `i` with `max - min <= rel_tol |v_i|` over `v_i ..= v_{i+span}`.
pub fn detect_plateau(times: &[f64], values: &[f64], span: usize, rel_tol: f64) -> Option<Plateau> {
    if values.len() != times.len() || values.len() <= span {
        return None;
    }
    (0..values.len() - span).find_map(|i| {
        let w = &values[i..=i + span];
        let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let scale = values[i].abs();
        (scale > 0.0 && hi - lo <= rel_tol * scale && w.iter().all(|v| v.is_finite())).then(|| {
            let tail = &values[i..];
            Plateau {
                index: i,
                time: times[i],
                value: tail.iter().sum::<f64>() / tail.len() as f64,
            }
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_exponential_is_recovered() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-0.7 * t).exp()).collect();
        let f = fit_log_linear(&t, &v, FitWindow { t_start: 1.0, t_end: 4.0 }, 0.25).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-12);
        assert!(f.fit_residual < 1e-12);
        assert_eq!(f.offset, 0.25);
        assert_eq!(f.n_points, 31);
    }

    #[test]
    fn converged_window_is_flagged() {
        let t: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let v = vec![0.0; 10];
        assert!(matches!(
            fit_log_linear(&t, &v, FitWindow { t_start: 0.0, t_end: 9.0 }, 0.0),
            Err(Error::DecayFit(_))
        ));
        let short = fit_log_linear(&t, &[1.0; 10], FitWindow { t_start: 0.0, t_end: 2.0 }, 0.0);
        assert!(matches!(short, Err(Error::DecayFit(_))));
    }

    #[test]
    fn plateau_of_saturating_curve() {
        let t: Vec<f64> = (0..200).map(|i| i as f64 * 0.5).collect();
        let v: Vec<f64> = t.iter().map(|t| 8.0 * (1.0 - (-0.2 * t).exp())).collect();
        let p = detect_plateau(&t, &v, 10, 0.005).unwrap();
        // 8 e^{-0.2 t} (1 - e^{-1}) <= 0.005 * v_i first holds near t = 24.2.
        assert_eq!(p.time, 24.5);
        assert!((p.value - 8.0).abs() < 0.05);
        assert!(detect_plateau(&t[..5], &v[..5], 10, 0.005).is_none());
    }

    proptest! {
        #[test]
        fn plateau_detection_is_idempotent(vals in proptest::collection::vec(0.1f64..10.0, 12..60)) {
            let t: Vec<f64> = (0..vals.len()).map(|i| i as f64).collect();
            let a = detect_plateau(&t, &vals, 10, 0.005);
            let b = detect_plateau(&t, &vals, 10, 0.005);
            prop_assert_eq!(a, b);
            if let Some(p) = a {
                let again = detect_plateau(&t[p.index..], &vals[p.index..], 10, 0.005).unwrap();
                prop_assert_eq!(again.index, 0);
            }
        }

        #[test]
        fn fitted_rate_matches_generated(rate in 0.01f64..5.0, c in 0.1f64..100.0) {
            let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
            let v: Vec<f64> = t.iter().map(|t| c * (-rate * t).exp()).collect();
            let f = fit_log_linear(&t, &v, FitWindow { t_start: 0.0, t_end: 2.0 }, 0.0).unwrap();
            prop_assert!((f.rate - rate).abs() < 1e-9 * rate.max(1.0));
        }
    }
}
