//! Kolmogorov-Smirnov lack-of-fit between two survival curves.

use serde::{Deserialize, Serialize};

use super::CalibrateError;

const SERIES_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
}

/// Largest absolute difference between two curves sampled on the same grid.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64, CalibrateError> {
    if a.is_empty() || a.len() != b.len() {
        return Err(CalibrateError::Grid(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Upper tail of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 0.5 {
        // the alternating series converges too slowly here; use the dual form
        let c = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let mut cdf = 0.0;
        for k in 1.. {
            let j = (2 * k - 1) as f64;
            let term = c * (-(j * j) * std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
            cdf += term;
            if term < SERIES_CUTOFF {
                break;
            }
        }
        1.0 - cdf
    } else {
        let mut sum = 0.0;
        for k in 1.. {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < SERIES_CUTOFF {
                break;
            }
        }
        2.0 * sum
    };
    q.clamp(0.0, 1.0)
}

/// D over the shared grid and its asymptotic p-value at `sqrt(n_eff) * D`.
pub fn ks_lack_of_fit(s_mod: &[f64], s_tgt: &[f64], n_eff: f64) -> Result<KsResult, CalibrateError> {
    if !(n_eff >= 1.0) {
        return Err(CalibrateError::EffectiveN(n_eff));
    }
    let d = ks_statistic(s_mod, s_tgt)?;
    Ok(KsResult {
        d,
        p: kolmogorov_q(n_eff.sqrt() * d),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let a = [1.0, 0.8, 0.5];
        assert_eq!(ks_lack_of_fit(&a, &a, 50.0).unwrap(), KsResult { d: 0.0, p: 1.0 });
        let r = ks_lack_of_fit(&[1.0; 4], &[0.0; 4], 10.0).unwrap();
        assert_eq!(r.d, 1.0);
        assert!(r.p < 1e-6);
    }

    #[test]
    fn q_at_one() {
        // 2 * sum (-1)^(k-1) exp(-2 k^2), evaluated to 12 digits elsewhere
        assert!((kolmogorov_q(1.0) - 0.269_999_671_677).abs() < 1e-9);
        let r = ks_lack_of_fit(&[0.9], &[0.8], 100.0).unwrap();
        assert!((r.p - 0.27).abs() < 1e-3);
    }

    #[test]
    fn both_branches_agree_at_the_switch() {
        let below = kolmogorov_q(0.5 - 1e-12);
        let above = kolmogorov_q(0.5);
        assert!((below - above).abs() < 1e-9, "{below} {above}");
    }

    #[test]
    fn monotone_in_lambda() {
        let mut prev = 1.0;
        for i in 0..400 {
            let q = kolmogorov_q(i as f64 * 0.01);
            assert!(q <= prev + 1e-12);
            prev = q;
        }
    }

    #[test]
    fn errors() {
        assert!(ks_lack_of_fit(&[], &[], 10.0).is_err());
        assert!(ks_lack_of_fit(&[1.0], &[1.0, 0.5], 10.0).is_err());
        assert!(ks_lack_of_fit(&[1.0], &[1.0], 0.0).is_err());
    }
}
