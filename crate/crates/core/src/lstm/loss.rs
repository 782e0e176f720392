use crate::error::{NilmError, Result};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before taking logs.
pub const BCE_EPS: f64 = 1e-7;

/// Mean binary cross-entropy over all elements and its gradient with respect to `pred`.
pub fn bce_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(NilmError::LengthMismatch(pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(NilmError::EmptyInput);
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(target) {
        let q = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        grad.push((q - y) / (q * (1.0 - q)) / n);
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_costs_ln2() {
        let (l, g) = bce_loss(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g[0] + 1.0).abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_predictions_stay_finite() {
        let (l, g) = bce_loss(&[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!(l.is_finite() && g.iter().all(|v| v.is_finite()));
        assert!((l + BCE_EPS.ln()).abs() < 1e-6);
        let (l, _) = bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(l < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let p = [0.2, 0.7, 0.9];
        let y = [0.0, 1.0, 1.0];
        let (_, g) = bce_loss(&p, &y).unwrap();
        for k in 0..3 {
            let mut a = p;
            let mut b = p;
            a[k] += 1e-6;
            b[k] -= 1e-6;
            let fd = (bce_loss(&a, &y).unwrap().0 - bce_loss(&b, &y).unwrap().0) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(bce_loss(&[0.5], &[]), Err(NilmError::LengthMismatch(1, 0))));
        assert!(matches!(bce_loss(&[], &[]), Err(NilmError::EmptyInput)));
    }
}
