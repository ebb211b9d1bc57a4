//! Rank correlation, calibration and agreement statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{CredalError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: f64,
    /// Two-sided.
    pub p: f64,
}

impl Correlation {
    pub const NONE: Correlation = Correlation { rho: 0.0, p: 1.0 };
}

/// Fractional ranks starting at 1; tied values share the average of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a correlation coefficient from `t = r·√((n−2)/(1−r²))`
/// with `n − 2` degrees of freedom.
pub fn correlation_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Spearman's rank correlation with a t-approximation p-value. A constant
/// input gives `ρ = 0, p = 1`.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() != b.len() {
        return Err(CredalError::DimensionMismatch {
            context: "spearman inputs",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 3 {
        return Err(CredalError::InvalidArgument(format!(
            "spearman needs at least 3 pairs, got {}",
            a.len()
        )));
    }
    match pearson(&average_ranks(a), &average_ranks(b)) {
        None => Ok(Correlation::NONE),
        Some(rho) => Ok(Correlation {
            rho,
            p: correlation_p_value(rho, a.len()),
        }),
    }
}

/// Expected calibration error over `bins` equal-width confidence bins.
/// A confidence of exactly 1 falls in the top bin; empty bins are skipped.
pub fn ece(confidences: &[f64], correct: &[bool], bins: usize) -> Result<f64> {
    if confidences.len() != correct.len() {
        return Err(CredalError::DimensionMismatch {
            context: "ece inputs",
            expected: confidences.len(),
            got: correct.len(),
        });
    }
    if bins == 0 {
        return Err(CredalError::InvalidArgument("ece needs at least one bin".into()));
    }
    if confidences.is_empty() {
        return Ok(0.0);
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        if !(0.0..=1.0).contains(&c) {
            return Err(CredalError::InvalidArgument(format!("confidence {c} outside [0, 1]")));
        }
        let b = ((c * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf_sum[b] += c;
        hits[b] += usize::from(ok);
    }
    let n = confidences.len() as f64;
    Ok((0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n) * (hits[b] as f64 / nb - conf_sum[b] / nb).abs()
        })
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub value: f64,
    /// Chance agreement (or expected disagreement) left no room to measure
    /// anything: both coders used a single category.
    pub degenerate: bool,
}

fn check_pair(a: &[bool], b: &[bool]) -> Result<()> {
    if a.len() != b.len() {
        return Err(CredalError::DimensionMismatch {
            context: "agreement inputs",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(CredalError::InvalidArgument("agreement needs at least 2 units".into()));
    }
    Ok(())
}

/// Cohen's κ for two coders on binary labels.
pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<Agreement> {
    check_pair(a, b)?;
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let pa = a.iter().filter(|&&x| x).count() as f64 / n;
    let pb = b.iter().filter(|&&x| x).count() as f64 / n;
    let p_o = agree / n;
    let p_e = pa * pb + (1.0 - pa) * (1.0 - pb);
    if 1.0 - p_e == 0.0 {
        let value = if p_o == 1.0 { 1.0 } else { 0.0 };
        return Ok(Agreement { value, degenerate: true });
    }
    Ok(Agreement {
        value: (p_o - p_e) / (1.0 - p_e),
        degenerate: false,
    })
}

/// Krippendorff's α for two coders, nominal binary data, no missing values.
///
/// From the coincidence matrix: `α = 1 − (n − 1) · Σ_{c≠c′} o_cc′ / Σ_{c≠c′} n_c n_c′`
/// with `n = 2N` pairable values.
pub fn krippendorff_alpha(a: &[bool], b: &[bool]) -> Result<Agreement> {
    check_pair(a, b)?;
    let n = 2.0 * a.len() as f64;
    let disagreements = a.iter().zip(b).filter(|(x, y)| x != y).count() as f64;
    let ones = a.iter().chain(b).filter(|&&x| x).count() as f64;
    let zeros = n - ones;
    // off-diagonal coincidences: each disagreeing unit adds (0,1) and (1,0)
    let observed = 2.0 * disagreements;
    let expected = 2.0 * ones * zeros;
    if expected == 0.0 {
        let value = if observed == 0.0 { 1.0 } else { 0.0 };
        return Ok(Agreement { value, degenerate: true });
    }
    Ok(Agreement {
        value: 1.0 - (n - 1.0) * observed / expected,
        degenerate: false,
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

/// `true` for values strictly above the median.
pub fn binarize_at_median(values: &[f64]) -> Vec<bool> {
    match median(values) {
        Some(m) => values.iter().map(|&v| v > m).collect(),
        None => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn monotone_and_antitone() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 4.0, 8.0, 16.0, 32.0];
        let up = spearman(&a, &b).unwrap();
        assert!((up.rho - 1.0).abs() < 1e-12 && up.p < 1e-9);
        let rev: Vec<f64> = b.iter().rev().copied().collect();
        assert!((spearman(&a, &rev).unwrap().rho + 1.0).abs() < 1e-12);
    }

    #[test]
    fn tied_ranks_against_hand_pearson() {
        let a = [1.0, 2.0, 2.0, 3.0];
        let b = [1.0, 3.0, 2.0, 4.0];
        assert_eq!(average_ranks(&a), vec![1.0, 2.5, 2.5, 4.0]);
        // Pearson of (1, 2.5, 2.5, 4) and (1, 3, 2, 4): means 2.5 and 2.5,
        // cross sum 4.5, squares 4.5 and 5
        let oracle = 4.5 / (4.5f64.sqrt() * 5.0f64.sqrt());
        assert!((spearman(&a, &b).unwrap().rho - oracle).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_uncorrelated() {
        let c = spearman(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(c, Correlation::NONE);
        assert!(spearman(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn p_value_matches_reference_t_tail() {
        // n = 10, r = 0.5: t = 0.5·√(8/0.75) = 1.63299, two-sided tail with 8 df
        let p = correlation_p_value(0.5, 10);
        assert!((p - 0.141_113_281_25).abs() < 1e-9, "{p}");
    }

    #[test]
    fn ece_extremes_and_hand_bins() {
        assert_eq!(ece(&[1.0; 4], &[true; 4], 10).unwrap(), 0.0);
        assert_eq!(ece(&[1.0; 4], &[false; 4], 10).unwrap(), 1.0);
        let conf = [0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.95, 0.92, 1.0];
        let ok = [false, true, false, false, true, true, true, true, false, true];
        // one point per bin for bins 0..=6, three points in bin 9
        let mut oracle = 0.0;
        for i in 0..7 {
            oracle += 0.1 * (f64::from(u8::from(ok[i])) - conf[i]).abs();
        }
        oracle += 0.3 * (2.0 / 3.0 - (0.95 + 0.92 + 1.0) / 3.0f64).abs();
        assert!((ece(&conf, &ok, 10).unwrap() - oracle).abs() < 1e-15);
    }

    fn bits(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn kappa_hand_table() {
        let a = bits(&[1, 1, 0, 0, 1]);
        let b = bits(&[1, 0, 0, 0, 1]);
        // p_o = 4/5; marginals 3/5 and 2/5 → p_e = 0.6·0.4 + 0.4·0.6 = 0.48
        let p_e = 0.6 * 0.4 + 0.4 * 0.6;
        let oracle = (0.8 - p_e) / (1.0 - p_e);
        let k = cohen_kappa(&a, &b).unwrap();
        assert!((k.value - oracle).abs() < 1e-15);
        assert!((k.value - 0.615_384_6).abs() < 1e-7);
        // 10 values, five ones, one disagreeing unit: 1 − 9·2/(2·5·5)
        let alpha = krippendorff_alpha(&a, &b).unwrap();
        assert!((alpha.value - 0.64).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_opposite_agreement() {
        let a = bits(&[1, 0, 1, 0, 1, 0]);
        let inv: Vec<bool> = a.iter().map(|x| !x).collect();
        assert_eq!(cohen_kappa(&a, &a).unwrap().value, 1.0);
        assert_eq!(krippendorff_alpha(&a, &a).unwrap().value, 1.0);
        assert_eq!(cohen_kappa(&a, &inv).unwrap().value, -1.0);
        let constant = [true; 4];
        let k = cohen_kappa(&constant, &constant).unwrap();
        assert!(k.degenerate && k.value == 1.0);
        let al = krippendorff_alpha(&constant, &constant).unwrap();
        assert!(al.degenerate && al.value == 1.0);
        assert!(cohen_kappa(&[true], &[true]).is_err());
    }

    #[test]
    fn medians_and_binarization() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(binarize_at_median(&[1.0, 2.0, 2.0, 5.0]), vec![false, false, false, true]);
    }

    proptest! {
        #[test]
        fn spearman_ignores_increasing_transforms(
            pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40),
            scale in 0.1f64..10.0,
            shift in -3.0f64..3.0,
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let base = spearman(&a, &b).unwrap();
            let ea: Vec<f64> = a.iter().map(|x| x.exp()).collect();
            let fb: Vec<f64> = b.iter().map(|x| scale * x + shift).collect();
            let t = spearman(&ea, &fb).unwrap();
            prop_assert!((base.rho - t.rho).abs() < 1e-12);
        }
    }
}
