//! Mean, standard error and two-sided t confidence intervals over folds.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Two-sided 95% critical values t(0.975, dof) for dof = 1..=120.
const T_975: [f64; 120] = [
    12.7062, 4.3027, 3.1824, 2.7764, 2.5706, 2.4469, 2.3646, 2.3060, //
    2.2622, 2.2281, 2.2010, 2.1788, 2.1604, 2.1448, 2.1314, 2.1199, //
    2.1098, 2.1009, 2.0930, 2.0860, 2.0796, 2.0739, 2.0687, 2.0639, //
    2.0595, 2.0555, 2.0518, 2.0484, 2.0452, 2.0423, 2.0395, 2.0369, //
    2.0345, 2.0322, 2.0301, 2.0281, 2.0262, 2.0244, 2.0227, 2.0211, //
    2.0195, 2.0181, 2.0167, 2.0154, 2.0141, 2.0129, 2.0117, 2.0106, //
    2.0096, 2.0086, 2.0076, 2.0066, 2.0057, 2.0049, 2.0040, 2.0032, //
    2.0025, 2.0017, 2.0010, 2.0003, 1.9996, 1.9990, 1.9983, 1.9977, //
    1.9971, 1.9966, 1.9960, 1.9955, 1.9949, 1.9944, 1.9939, 1.9935, //
    1.9930, 1.9925, 1.9921, 1.9917, 1.9913, 1.9908, 1.9905, 1.9901, //
    1.9897, 1.9893, 1.9890, 1.9886, 1.9883, 1.9879, 1.9876, 1.9873, //
    1.9870, 1.9867, 1.9864, 1.9861, 1.9858, 1.9855, 1.9853, 1.9850, //
    1.9847, 1.9845, 1.9842, 1.9840, 1.9837, 1.9835, 1.9833, 1.9830, //
    1.9828, 1.9826, 1.9824, 1.9822, 1.9820, 1.9818, 1.9816, 1.9814, //
    1.9812, 1.9810, 1.9808, 1.9806, 1.9804, 1.9803, 1.9801, 1.9799, //
];

/// Normal-limit critical value used beyond the table.
const Z_975: f64 = 1.9600;

pub const DEFAULT_LEVEL: f64 = 0.95;

/// Two-sided critical value at 95% for `dof` degrees of freedom.
pub fn t_critical_95(dof: usize) -> f64 {
    match dof {
        0 => f64::NAN,
        1..=120 => T_975[dof - 1],
        _ => Z_975,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub mean: f64,
    pub standard_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    pub dof: usize,
    /// Set when there is a single value: SE is 0 and the interval collapses.
    pub degenerate: bool,
}

pub fn summarize_folds(values: &[f64], level: f64) -> Result<IntervalSummary, EvalError> {
    if values.is_empty() {
        return Err(EvalError::EmptyValues);
    }
    if level != DEFAULT_LEVEL {
        return Err(EvalError::UnsupportedLevel(level));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(IntervalSummary {
            mean,
            standard_error: 0.0,
            ci_low: mean,
            ci_high: mean,
            level,
            dof: 0,
            degenerate: true,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let half = t_critical_95(n - 1) * se;
    Ok(IntervalSummary {
        mean,
        standard_error: se,
        ci_low: mean - half,
        ci_high: mean + half,
        level,
        dof: n - 1,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance() {
        let s = summarize_folds(&[1.0, 1.0, 1.0], 0.95).unwrap();
        assert_eq!((s.mean, s.standard_error, s.ci_low, s.ci_high), (1.0, 0.0, 1.0, 1.0));
        assert_eq!(s.dof, 2);
    }

    #[test]
    fn five_fold_example() {
        let s = summarize_folds(&[0.8, 0.9, 1.0, 0.7, 0.6], 0.95).unwrap();
        assert!((s.mean - 0.8).abs() < 1e-12);
        // sample sd = sqrt(0.025), SE = sqrt(0.005)
        assert!((s.standard_error - 0.005f64.sqrt()).abs() < 1e-12);
        assert!((s.ci_low - 0.6037).abs() < 1e-3);
        assert!((s.ci_high - 0.9963).abs() < 1e-3);
        assert_eq!(s.dof, 4);
        assert!(((s.mean - s.ci_low) - (s.ci_high - s.mean)).abs() < 1e-15);
    }

    #[test]
    fn single_value_is_degenerate() {
        let s = summarize_folds(&[0.75], 0.95).unwrap();
        assert_eq!((s.mean, s.standard_error, s.ci_low, s.ci_high), (0.75, 0.0, 0.75, 0.75));
        assert_eq!(s.dof, 0);
        assert!(s.degenerate);
    }

    #[test]
    fn errors() {
        assert!(matches!(summarize_folds(&[], 0.95), Err(EvalError::EmptyValues)));
        assert!(matches!(
            summarize_folds(&[1.0, 2.0], 0.9),
            Err(EvalError::UnsupportedLevel(_))
        ));
    }

    #[test]
    fn table_is_monotone_and_meets_normal_limit() {
        for w in T_975.windows(2) {
            assert!(w[0] > w[1]);
        }
        assert!(T_975[119] > Z_975);
        assert_eq!(t_critical_95(121), Z_975);
        assert_eq!(t_critical_95(4), 2.7764);
    }
}
