use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// One-tailed Welch t-test of `mean(a) > mean(b)`; returns the p-value.
///
/// With zero variance on both sides the statistic is degenerate: equal means
/// give 0.5, otherwise 0 or 1 depending on the direction.
pub fn welch_one_tailed(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Precondition(format!(
            "t-test needs at least 2 runs per side, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Precondition("t-test inputs must be finite".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        return Ok(match ma.partial_cmp(&mb) {
            Some(std::cmp::Ordering::Greater) => 0.0,
            Some(std::cmp::Ordering::Less) => 1.0,
            _ => 0.5,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Precondition(e.to_string()))?;
    Ok(dist.sf(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(welch_one_tailed(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        let p = welch_one_tailed(&[1.0, 1.001, 0.999], &[0.0, 0.001, -0.001]).unwrap();
        assert!(p < 1e-6);
        let q = welch_one_tailed(&[0.0, 0.001, -0.001], &[1.0, 1.001, 0.999]).unwrap();
        assert!(q > 1.0 - 1e-6);
        assert!(welch_one_tailed(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn matches_reference_value() {
        // scipy.stats.ttest_ind(a, b, equal_var=False, alternative="greater")
        let a = [0.42, 0.45, 0.44, 0.47, 0.43];
        let b = [0.40, 0.41, 0.43, 0.39, 0.42];
        let p = welch_one_tailed(&a, &b).unwrap();
        assert!((p - 0.010_762_002).abs() < 1e-8, "{p}");
    }
}
