//! Accuracy, disparate impact, the loss-gap diagnostic and confidence
//! intervals over repeated runs.

use serde::Serialize;

use crate::data::{Dataset, Task};
use crate::error::{check_len, Error, Result};
use crate::loss::sigmoid_scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub accuracy: f64,
    /// Favorable rate of the protected group over that of the unprotected
    /// group. `None` when the unprotected rate is zero or a group is empty.
    pub disparate_impact: Option<f64>,
    pub n: usize,
    pub favorable_rate_protected: f64,
    pub favorable_rate_unprotected: f64,
}

/// Predicted label for a logit: 1 iff the logit is positive (probability above 0.5).
pub fn predict_label(logit: f64) -> u8 {
    (logit > 0.0) as u8
}

pub fn disparate_impact(rate_protected: f64, rate_unprotected: f64) -> Option<f64> {
    if rate_unprotected > 0.0 {
        Some(rate_protected / rate_unprotected)
    } else {
        None
    }
}

pub fn evaluate_parts(logits: &[f64], labels: &[f64], protected: &[u8], favorable: u8) -> Result<EvalResult> {
    check_len(logits.len(), labels.len())?;
    check_len(logits.len(), protected.len())?;
    let n = logits.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot evaluate zero rows".into()));
    }
    let mut correct = 0usize;
    let (mut fav1, mut n1, mut fav0, mut n0) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..n {
        let pred = predict_label(logits[i]);
        if pred as f64 == labels[i] {
            correct += 1;
        }
        let fav = (pred == favorable) as usize;
        if protected[i] == 1 {
            n1 += 1;
            fav1 += fav;
        } else {
            n0 += 1;
            fav0 += fav;
        }
    }
    let rate = |f: usize, m: usize| if m == 0 { 0.0 } else { f as f64 / m as f64 };
    let (r1, r0) = (rate(fav1, n1), rate(fav0, n0));
    Ok(EvalResult {
        accuracy: correct as f64 / n as f64,
        disparate_impact: if n1 == 0 { None } else { disparate_impact(r1, r0) },
        n,
        favorable_rate_protected: r1,
        favorable_rate_unprotected: r0,
    })
}

/// Scores `logits` against a classification dataset.
pub fn evaluate(logits: &[f64], ds: &Dataset) -> Result<EvalResult> {
    if ds.task() != Task::Classification {
        return Err(Error::InvalidArgument("evaluate needs a classification dataset".into()));
    }
    evaluate_parts(logits, ds.labels(), ds.protected(), ds.favorable_label())
}

/// `(1/n) (sigmoid(f) - y)^T (g - (h - f))` on logits.
pub fn delta_loss(f: &[f64], h: &[f64], g: &[f64], y: &[f64]) -> Result<f64> {
    let n = f.len();
    check_len(n, h.len())?;
    check_len(n, g.len())?;
    check_len(n, y.len())?;
    if n == 0 {
        return Err(Error::InvalidArgument("delta loss over zero rows".into()));
    }
    let s: f64 = (0..n)
        .map(|i| (sigmoid_scalar(f[i]) - y[i]) * (g[i] - (h[i] - f[i])))
        .sum();
    Ok(s / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateRow {
    pub mean: f64,
    pub std: f64,
    /// `1.96 * std / sqrt(n_runs)`
    pub ci95_halfwidth: f64,
    pub n_runs: usize,
}

/// Mean, sample standard deviation and normal-approximation 95% interval.
pub fn aggregate(values: &[f64]) -> Result<AggregateRow> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewValues { needed: 2, got: n });
    }
    // two passes on values shifted by the first one, so constant input is exact
    let k = values[0];
    let shift = values.iter().map(|v| v - k).sum::<f64>() / n as f64;
    let mean = k + shift;
    let ss: f64 = values
        .iter()
        .map(|v| {
            let d = (v - k) - shift;
            d * d
        })
        .sum();
    let std = (ss / (n - 1) as f64).sqrt();
    Ok(AggregateRow {
        mean,
        std,
        ci95_halfwidth: 1.96 * std / (n as f64).sqrt(),
        n_runs: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_favorable_gives_parity() {
        let r = evaluate_parts(&[1.0, 2.0, 3.0, 0.5], &[1.0, 0.0, 1.0, 1.0], &[1, 1, 0, 0], 1).unwrap();
        assert_eq!(r.disparate_impact, Some(1.0));
        assert_eq!(r.accuracy, 0.75);
    }

    #[test]
    fn rate_ratio() {
        // protected: 1 of 2 favorable; unprotected: 3 of 4
        let logits = [1.0, -1.0, 1.0, 1.0, 1.0, -1.0];
        let r = evaluate_parts(&logits, &[1.0; 6], &[1, 1, 0, 0, 0, 0], 1).unwrap();
        assert!((r.disparate_impact.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // favorable outcome 0 counts negative predictions
        let r0 = evaluate_parts(&logits, &[1.0; 6], &[1, 1, 0, 0, 0, 0], 0).unwrap();
        assert_eq!(r0.disparate_impact, Some(2.0));
    }

    #[test]
    fn zero_numerator_and_denominator() {
        let r = evaluate_parts(&[-1.0, 1.0], &[0.0, 1.0], &[1, 0], 1).unwrap();
        assert_eq!(r.disparate_impact, Some(0.0));
        let r = evaluate_parts(&[1.0, -1.0], &[0.0, 1.0], &[1, 0], 1).unwrap();
        assert_eq!(r.disparate_impact, None);
        let r = evaluate_parts(&[1.0, 1.0], &[0.0, 1.0], &[0, 0], 1).unwrap();
        assert_eq!(r.disparate_impact, None);
    }

    #[test]
    fn perfect_predictions() {
        let y = [1.0, 0.0, 0.0, 1.0];
        let logits: Vec<f64> = y.iter().map(|v| if *v == 1.0 { 2.0 } else { -2.0 }).collect();
        assert_eq!(evaluate_parts(&logits, &y, &[1, 0, 1, 0], 1).unwrap().accuracy, 1.0);
    }

    #[test]
    fn delta_loss_zero_cases() {
        let f = [0.3, -1.0, 2.0];
        let h = [0.1, 0.4, -0.2];
        let g: Vec<f64> = h.iter().zip(&f).map(|(h, f)| h - f).collect();
        assert_eq!(delta_loss(&f, &h, &g, &[1.0, 0.0, 1.0]).unwrap(), 0.0);
        let y: Vec<f64> = f.iter().map(|&v| sigmoid_scalar(v)).collect();
        assert_eq!(delta_loss(&f, &h, &[5.0, 5.0, 5.0], &y).unwrap(), 0.0);
        assert!(delta_loss(&f, &h, &g, &[1.0]).is_err());
    }

    #[test]
    fn aggregate_closed_forms() {
        let c = aggregate(&[0.4; 7]).unwrap();
        assert_eq!(c.ci95_halfwidth, 0.0);
        let r = aggregate(&[0.0, 1.0]).unwrap();
        assert_eq!(r.mean, 0.5);
        assert!((r.ci95_halfwidth - 1.96 * 0.5f64.sqrt() / 2f64.sqrt()).abs() < 1e-15);
        assert!((r.ci95_halfwidth - 0.98).abs() < 1e-12);
        assert!(matches!(aggregate(&[1.0]), Err(Error::TooFewValues { .. })));
    }

    #[test]
    fn aggregate_matches_two_pass_oracle() {
        // independent oracle: Welford's single-pass recurrence
        let values: Vec<f64> = (0..250).map(|i| ((i * 37 % 101) as f64).sqrt() * 0.01 + 0.6).collect();
        let (mut m, mut s2) = (0.0, 0.0);
        for (k, &v) in values.iter().enumerate() {
            let d = v - m;
            m += d / (k + 1) as f64;
            s2 += d * (v - m);
        }
        let sd = (s2 / 249.0).sqrt();
        let r = aggregate(&values).unwrap();
        assert!((r.mean - m).abs() < 1e-12);
        assert!((r.std - sd).abs() < 1e-12);
        assert!((r.ci95_halfwidth - 1.96 * sd / 250f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn swapping_groups_inverts_di(
            logits in prop::collection::vec(-3.0f64..3.0, 4..60),
            seed in any::<u64>(),
        ) {
            let n = logits.len();
            let p: Vec<u8> = (0..n).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            let y = vec![1.0; n];
            let a = evaluate_parts(&logits, &y, &p, 1).unwrap();
            let q: Vec<u8> = p.iter().map(|v| 1 - v).collect();
            let b = evaluate_parts(&logits, &y, &q, 1).unwrap();
            if a.favorable_rate_protected > 0.0 && a.favorable_rate_unprotected > 0.0 {
                let (da, db) = (a.disparate_impact.unwrap(), b.disparate_impact.unwrap());
                prop_assert!((da * db - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn accuracy_invariant_under_monotone_maps(
            logits in prop::collection::vec(-5.0f64..5.0, 1..60),
            scale in 0.1f64..10.0,
        ) {
            let n = logits.len();
            let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
            let p: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
            let a = evaluate_parts(&logits, &y, &p, 1).unwrap();
            let mapped: Vec<f64> = logits.iter().map(|v| (scale * v).powi(3)).collect();
            let b = evaluate_parts(&mapped, &y, &p, 1).unwrap();
            prop_assert_eq!(a.accuracy, b.accuracy);
        }
    }
}
