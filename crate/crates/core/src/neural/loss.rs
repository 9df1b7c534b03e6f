use serde::{Deserialize, Serialize};

use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    /// Mean absolute error.
    L1,
    /// Mean squared error.
    L2,
    /// Mean absolute percentage error.
    Ape,
}

/// Space in which targets are compared. In `Log` space the target `y` is
/// replaced by `ln y` and the network output is already a log-mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossSpace {
    Linear,
    Log,
}

fn transform_targets(space: LossSpace, y: &[f64]) -> Result<Vec<f64>, NeuralError> {
    match space {
        LossSpace::Linear => Ok(y.to_vec()),
        LossSpace::Log => y
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    Ok(v.ln())
                } else {
                    Err(NeuralError::NonPositiveTargetInLogSpace(v))
                }
            })
            .collect(),
    }
}

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<(), NeuralError> {
    if y.is_empty() || y.len() != y_hat.len() {
        return Err(NeuralError::ShapeMismatch(format!(
            "loss over {} targets and {} outputs",
            y.len(),
            y_hat.len()
        )));
    }
    Ok(())
}

/// Per-sample loss on already transformed targets.
#[inline]
fn pointwise(kind: LossKind, t: f64, out: f64) -> f64 {
    match kind {
        LossKind::L1 => (t - out).abs(),
        LossKind::L2 => (t - out).powi(2),
        LossKind::Ape => (t - out).abs() / t.abs(),
    }
}

#[inline]
fn pointwise_grad(kind: LossKind, t: f64, out: f64) -> f64 {
    let d = out - t;
    let sign = if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    };
    match kind {
        LossKind::L1 => sign,
        LossKind::L2 => 2.0 * d,
        LossKind::Ape => sign / t.abs(),
    }
}

/// Batch-mean loss of raw network outputs `y_hat` against masses `y`.
pub fn loss(kind: LossKind, space: LossSpace, y: &[f64], y_hat: &[f64]) -> Result<f64, NeuralError> {
    check_lengths(y, y_hat)?;
    let t = transform_targets(space, y)?;
    Ok(t.iter().zip(y_hat).map(|(&t, &o)| pointwise(kind, t, o)).sum::<f64>() / y.len() as f64)
}

/// Batch-mean loss and its gradient with respect to each output.
pub fn loss_and_grad(
    kind: LossKind,
    space: LossSpace,
    y: &[f64],
    y_hat: &[f64],
) -> Result<(f64, Vec<f64>), NeuralError> {
    check_lengths(y, y_hat)?;
    let t = transform_targets(space, y)?;
    let n = y.len() as f64;
    let value = t.iter().zip(y_hat).map(|(&t, &o)| pointwise(kind, t, o)).sum::<f64>() / n;
    let grad = t
        .iter()
        .zip(y_hat)
        .map(|(&t, &o)| pointwise_grad(kind, t, o) / n)
        .collect();
    Ok((value, grad))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Cross-entropy of one sample's logits against a class index, with the
/// gradient `softmax - onehot` scaled by `scale`.
pub fn cross_entropy(logits: &[f64], class: usize, scale: f64) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let value = -p[class].max(f64::MIN_POSITIVE).ln();
    let grad = p
        .iter()
        .enumerate()
        .map(|(i, &pi)| scale * (pi - if i == class { 1.0 } else { 0.0 }))
        .collect();
    (value, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        let y = [1.0, 2.0, 4.0];
        let y_hat = [2.0, 2.0, 2.0];
        assert_eq!(loss(LossKind::L1, LossSpace::Linear, &y, &y_hat).unwrap(), 1.0);
        assert_eq!(loss(LossKind::Ape, LossSpace::Linear, &y, &y_hat).unwrap(), 0.5);
        assert_eq!(loss(LossKind::L2, LossSpace::Linear, &y, &y_hat).unwrap(), 5.0 / 3.0);
    }

    #[test]
    fn log_space_identity() {
        let y = [0.3, 2.0, 17.0, 400.0];
        let out = [0.1, 0.5, 3.0, 5.5];
        let ln_y: Vec<f64> = y.iter().map(|v: &f64| v.ln()).collect();
        for kind in [LossKind::L1, LossKind::L2] {
            assert_eq!(
                loss(kind, LossSpace::Log, &y, &out).unwrap(),
                loss(kind, LossSpace::Linear, &ln_y, &out).unwrap()
            );
        }
        assert!(matches!(
            loss(LossKind::L1, LossSpace::Log, &[0.0], &[1.0]),
            Err(NeuralError::NonPositiveTargetInLogSpace(_))
        ));
    }

    #[test]
    fn l2_gradient_closed_form() {
        // y_hat = w x: dL/dw = 2 mean((y_hat - y) x)
        let x = [1.0, 2.0, 3.0];
        let y = [2.0, 3.0, 7.0];
        let w = 1.5;
        let y_hat: Vec<f64> = x.iter().map(|v| w * v).collect();
        let (_, g) = loss_and_grad(LossKind::L2, LossSpace::Linear, &y, &y_hat).unwrap();
        let dw: f64 = g.iter().zip(&x).map(|(a, b)| a * b).sum();
        let expected = 2.0 * (0..3).map(|i| (y_hat[i] - y[i]) * x[i]).sum::<f64>() / 3.0;
        assert!((dw - expected).abs() < 1e-12);
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[0.7, 0.7, 0.7, 0.7]);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let p = softmax(&[3.0f64.ln(), 0.0]);
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
        let a = softmax(&[1.0, -2.0, 0.5]);
        let b = softmax(&[101.0, 98.0, 100.5]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
