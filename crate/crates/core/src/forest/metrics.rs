use super::ForestError;

/// Unweighted mean of per-class F1. Classes that never occur in either
/// `y_true` or `y_pred` are left out; 0/0 precision or recall counts as 0.
pub fn f1_macro(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<f64, ForestError> {
    if y_true.len() != y_pred.len() {
        return Err(ForestError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let k = n_classes
        .max(y_true.iter().chain(y_pred).map(|&c| c + 1).max().unwrap_or(0));
    let mut tp = vec![0usize; k];
    let mut n_true = vec![0usize; k];
    let mut n_pred = vec![0usize; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        n_true[t] += 1;
        n_pred[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut counted = 0;
    for c in 0..k {
        if n_true[c] == 0 && n_pred[c] == 0 {
            continue;
        }
        counted += 1;
        let precision = if n_pred[c] > 0 { tp[c] as f64 / n_pred[c] as f64 } else { 0.0 };
        let recall = if n_true[c] > 0 { tp[c] as f64 / n_true[c] as f64 } else { 0.0 };
        if precision + recall > 0.0 {
            sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    Ok(if counted == 0 { 0.0 } else { sum / counted as f64 })
}

pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64, ForestError> {
    if y_true.len() != y_pred.len() {
        return Err(ForestError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Ok(0.0);
    }
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect() {
        assert_eq!(f1_macro(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).unwrap(), 1.0);
    }

    #[test]
    fn hand_confusion_matrix() {
        // A: 1 TP, 1 FN; B: 1 TP, 1 FP
        let f = f1_macro(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor() {
        // predicting A for 2 A and 2 B: P_A = 0.5, R_A = 1, F1_A = 2/3; F1_B = 0
        let f = f1_macro(&[0, 0, 1, 1], &[0, 0, 0, 0], 2).unwrap();
        assert!((f - 0.5 * 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_is_skipped() {
        assert_eq!(f1_macro(&[0, 1], &[0, 1], 5).unwrap(), 1.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(f1_macro(&[0], &[0, 1], 2), Err(ForestError::LengthMismatch(1, 2))));
    }
}
