//! Training and analysis losses. Each returns the loss and its gradient with
//! respect to the inputs.

/// Mean binary cross-entropy on `sigmoid(score)`, computed in the
/// log-sum-exp form so large logits neither overflow nor lose the gradient.
pub fn loss_bce(scores: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(scores.len(), labels.len());
    if scores.is_empty() {
        return (0.0, Vec::new());
    }
    let b = scores.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(scores.len());
    for (&s, &y) in scores.iter().zip(labels) {
        loss += s.max(0.0) - y * s + (-s.abs()).exp().ln_1p();
        grad.push((sigmoid(s) - y) / b);
    }
    (loss / b, grad)
}

/// `0.5 * ||y - z||^2`, summed.
pub fn loss_l2(z: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(z.len(), y.len());
    let mut loss = 0.0;
    let grad = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| {
            loss += 0.5 * (y - z) * (y - z);
            z - y
        })
        .collect();
    (loss, grad)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
