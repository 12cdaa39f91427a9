use super::{MetricError, Result};

/// Dynamic time warping cost with `|a_i - b_j|` local cost and
/// match/insert/delete steps, unnormalised. With `band`, cells with
/// `|i - j| > band` are excluded (Sakoe-Chiba).
pub fn dtw(a: &[f64], b: &[f64], band: Option<usize>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let (n, m) = (a.len(), b.len());
    let w = band.unwrap_or(n.max(m));
    let diff = n.abs_diff(m);
    if w < diff {
        return Err(MetricError::InfeasibleBand { band: w, diff });
    }
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..n {
        let lo = i.saturating_sub(w);
        let hi = (i + w).min(m - 1);
        cur.fill(f64::INFINITY);
        for j in lo..=hi {
            let c = (a[i] - b[j]).abs();
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let mut best = f64::INFINITY;
                if i > 0 {
                    best = best.min(prev[j]);
                    if j > 0 {
                        best = best.min(prev[j - 1]);
                    }
                }
                if j > 0 {
                    best = best.min(cur[j - 1]);
                }
                best
            };
            cur[j] = best + c;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let a = [0.3, -1.0, 2.0];
        assert_eq!(dtw(&a, &a, None).unwrap(), 0.0);
        assert_eq!(dtw(&[0.0], &[-2.5], None).unwrap(), 2.5);
        assert_eq!(dtw(&[1.0, 2.0, 3.0], &[1.0, 3.0], None).unwrap(), 1.0);
    }

    #[test]
    fn band_errors() {
        assert!(matches!(
            dtw(&[1.0, 2.0, 3.0], &[1.0], Some(1)),
            Err(MetricError::InfeasibleBand { band: 1, diff: 2 })
        ));
        assert!(matches!(
            dtw(&[], &[1.0], None),
            Err(MetricError::EmptyInput)
        ));
    }

    #[test]
    fn zero_band_is_pointwise_sum() {
        let a = [1.0, 4.0, -2.0];
        let b = [0.0, 5.0, 1.0];
        assert_eq!(dtw(&a, &b, Some(0)).unwrap(), 1.0 + 1.0 + 3.0);
    }
}
