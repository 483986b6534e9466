use ndarray::{Array1, Array2, ArrayView2, Axis};

/// Multinomial logistic classifier: `logits = X W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeModel {
    /// `C x p`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradient with the same shape as [`ProbeModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ProbeModel {
    pub fn zeros(classes: usize, p: usize) -> Self {
        Self {
            weights: Array2::zeros((classes, p)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weights.t());
        z += &self.bias;
        z
    }

    /// Predicted class per row; ties go to the smallest class index.
    pub fn predict(&self, x: ArrayView2<f64>) -> Vec<usize> {
        self.logits(x)
            .axis_iter(Axis(0))
            .map(|row| {
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Mean softmax cross-entropy over the batch and its gradient.
///
/// Weight decay is not part of the loss; the optimizer applies it.
pub fn probe_loss_and_grad(model: &ProbeModel, x: ArrayView2<f64>, y: &[usize]) -> (f64, ProbeGrad) {
    let b = x.nrows();
    let mut probs = model.logits(x);
    let mut loss = 0.0;
    for (mut row, &label) in probs.axis_iter_mut(Axis(0)).zip(y) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        loss += total.ln() - (row[label].ln());
        row /= total;
        // row now holds softmax; turn it into d loss / d logits (unscaled)
        row[label] -= 1.0;
    }
    let scale = 1.0 / b as f64;
    probs *= scale;
    let weights = probs.t().dot(&x);
    let bias = probs.sum_axis(Axis(0));
    (loss * scale, ProbeGrad { weights, bias })
}

/// Fraction of rows whose predicted class equals the label. Zero for no rows.
pub fn evaluate_top1(model: &ProbeModel, x: ArrayView2<f64>, y: &[usize]) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let correct = model
        .predict(x)
        .iter()
        .zip(y)
        .filter(|(p, l)| p == l)
        .count();
    correct as f64 / y.len() as f64
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use ndarray::{concatenate, Axis};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_instance(seed: u64, n: usize, p: usize, c: usize) -> (ProbeModel, Array2<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = ProbeModel {
            weights: Array2::from_shape_fn((c, p), |_| rng.gen_range(-1.0..1.0)),
            bias: Array1::from_shape_fn(c, |_| rng.gen_range(-1.0..1.0)),
        };
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-1.0..1.0));
        let y = (0..n).map(|_| rng.gen_range(0..c)).collect();
        (model, x, y)
    }

    /// Central-difference gradient, one parameter at a time.
    pub(crate) fn numeric_grad(model: &ProbeModel, x: &Array2<f64>, y: &[usize], h: f64) -> ProbeGrad {
        let loss = |m: &ProbeModel| probe_loss_and_grad(m, x.view(), y).0;
        let mut gw = Array2::zeros(model.weights.raw_dim());
        for idx in ndarray::indices(model.weights.raw_dim()) {
            let mut plus = model.clone();
            plus.weights[idx] += h;
            let mut minus = model.clone();
            minus.weights[idx] -= h;
            gw[idx] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
        let mut gb = Array1::zeros(model.bias.len());
        for c in 0..model.bias.len() {
            let mut plus = model.clone();
            plus.bias[c] += h;
            let mut minus = model.clone();
            minus.bias[c] -= h;
            gb[c] = (loss(&plus) - loss(&minus)) / (2.0 * h);
        }
        ProbeGrad { weights: gw, bias: gb }
    }

    pub(crate) fn max_rel_err(a: &ProbeGrad, b: &ProbeGrad) -> f64 {
        a.weights
            .iter()
            .chain(a.bias.iter())
            .zip(b.weights.iter().chain(b.bias.iter()))
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
            .fold(0.0, f64::max)
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let m = ProbeModel::zeros(5, 3);
        let x = Array2::from_elem((4, 3), 0.7);
        let (loss, _) = probe_loss_and_grad(&m, x.view(), &[0, 1, 2, 4]);
        assert!((loss - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (m, x, y) = random_instance(1, 12, 7, 5);
        let (_, g) = probe_loss_and_grad(&m, x.view(), &y);
        let num = numeric_grad(&m, &x, &y, 1e-6);
        assert!(max_rel_err(&g, &num) < 1e-5);
    }

    #[test]
    fn duplicating_batch_keeps_loss_and_grad() {
        let (m, x, y) = random_instance(2, 9, 4, 3);
        let (l1, g1) = probe_loss_and_grad(&m, x.view(), &y);
        let x2 = concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2: Vec<usize> = y.iter().chain(&y).copied().collect();
        let (l2, g2) = probe_loss_and_grad(&m, x2.view(), &y2);
        assert!((l1 - l2).abs() < 1e-14);
        assert!(max_rel_err(&g1, &g2) < 1e-12);
    }

    #[test]
    fn top1_and_tie_rule() {
        let m = ProbeModel::zeros(3, 2);
        let x = Array2::zeros((4, 2));
        // all logits equal -> class 0
        assert_eq!(m.predict(x.view()), vec![0; 4]);
        assert_eq!(evaluate_top1(&m, x.view(), &[0, 0, 0, 0]), 1.0);
        assert_eq!(evaluate_top1(&m, x.view(), &[1, 2, 1, 2]), 0.0);
        assert_eq!(evaluate_top1(&m, x.view(), &[0, 1, 0, 2]), 0.5);
        assert_eq!(evaluate_top1(&m, Array2::zeros((0, 2)).view(), &[]), 0.0);
    }

    #[test]
    fn random_labels_give_chance_accuracy() {
        let (m, x, _) = random_instance(3, 20_000, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<usize> = (0..20_000).map(|_| rng.gen_range(0..2)).collect();
        let acc = evaluate_top1(&m, x.view(), &y);
        assert!((acc - 0.5).abs() < 0.05, "{acc}");
    }
}
