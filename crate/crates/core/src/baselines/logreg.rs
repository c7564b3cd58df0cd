use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::labels::NUM_LABELS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegHyper {
    pub l2_lambda: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub tol: f64,
}

impl Default for LogRegHyper {
    fn default() -> Self {
        LogRegHyper {
            l2_lambda: 1e-4,
            learning_rate: 1.0,
            max_epochs: 500,
            tol: 1e-6,
        }
    }
}

/// Multinomial logistic regression over sparse features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// Label code of each class row.
    pub classes: Vec<usize>,
    pub dim: usize,
    /// Row-major `classes.len() x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub hyper: LogRegHyper,
    pub epochs_run: usize,
    pub final_loss: f64,
    pub final_grad_norm: f64,
    pub converged: bool,
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

struct Problem<'a> {
    x: &'a [SparseVector],
    y: &'a [usize],
    k: usize,
    dim: usize,
    lambda: f64,
}

impl Problem<'_> {
    fn logits(&self, w: &[f64], b: &[f64], x: &SparseVector, out: &mut [f64]) {
        for c in 0..self.k {
            out[c] = b[c] + x.dot_dense(&w[c * self.dim..(c + 1) * self.dim]);
        }
    }

    fn loss(&self, w: &[f64], b: &[f64]) -> f64 {
        let mut z = vec![0.0; self.k];
        let mut total = 0.0;
        for (x, &y) in self.x.iter().zip(self.y) {
            self.logits(w, b, x, &mut z);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - z[y];
        }
        let reg: f64 = w.iter().map(|v| v * v).sum();
        total / self.x.len() as f64 + 0.5 * self.lambda * reg
    }

    fn loss_and_grad(&self, w: &[f64], b: &[f64], gw: &mut [f64], gb: &mut [f64]) -> f64 {
        gw.iter_mut().for_each(|g| *g = 0.0);
        gb.iter_mut().for_each(|g| *g = 0.0);
        let n = self.x.len() as f64;
        let mut z = vec![0.0; self.k];
        let mut total = 0.0;
        for (x, &y) in self.x.iter().zip(self.y) {
            self.logits(w, b, x, &mut z);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - z[y];
            for c in 0..self.k {
                let p = (z[c] - lse).exp();
                let r = (p - if c == y { 1.0 } else { 0.0 }) / n;
                gb[c] += r;
                let row = &mut gw[c * self.dim..(c + 1) * self.dim];
                for &(i, v) in &x.entries {
                    row[i] += r * v;
                }
            }
        }
        let mut reg = 0.0;
        for (g, v) in gw.iter_mut().zip(w) {
            *g += self.lambda * v;
            reg += v * v;
        }
        total / n + 0.5 * self.lambda * reg
    }
}

/// Fits `classes.len()` classes by full-batch gradient descent on mean
/// softmax cross-entropy plus `(l2_lambda / 2) * ||W||^2`.
///
/// Each step starts from twice the last accepted step size (the first from
/// `learning_rate`) and is halved until the Armijo condition holds, so the
/// training loss never increases. Training stops once the gradient norm
/// falls below `tol`, the loss stops improving, or `max_epochs` is reached.
pub fn train_logreg(x: &[SparseVector], y: &[usize], classes: &[usize], hyper: LogRegHyper) -> Result<LogRegModel> {
    if x.is_empty() {
        return Err(Error::InvalidInput("no training data".into()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let k = classes.len();
    if k < 2 {
        return Err(Error::InvalidInput("need at least two classes".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= k) {
        return Err(Error::InvalidInput(format!("class index {bad} out of range 0..{k}")));
    }
    if !(hyper.learning_rate > 0.0 && hyper.tol > 0.0 && hyper.l2_lambda >= 0.0) {
        return Err(Error::InvalidInput(format!("invalid hyperparameters {hyper:?}")));
    }
    let dim = x[0].dim;
    if let Some(v) = x.iter().find(|v| v.dim != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.dim,
        });
    }

    let p = Problem {
        x,
        y,
        k,
        dim,
        lambda: hyper.l2_lambda,
    };
    let mut w = vec![0.0; k * dim];
    let mut b = vec![0.0; k];
    let mut gw = vec![0.0; k * dim];
    let mut gb = vec![0.0; k];
    let mut trial_w = w.clone();
    let mut trial_b = b.clone();
    let mut loss = p.loss_and_grad(&w, &b, &mut gw, &mut gb);
    let mut step = hyper.learning_rate;
    let mut epochs = 0;
    let mut converged = false;
    let mut grad_norm = norm2(&gw, &gb);

    while epochs < hyper.max_epochs {
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("loss became {loss} at epoch {epochs}")));
        }
        if grad_norm < hyper.tol {
            converged = true;
            break;
        }
        epochs += 1;
        let sq = grad_norm * grad_norm;
        let mut accepted = None;
        while step > 1e-20 {
            for ((t, v), g) in trial_w.iter_mut().zip(&w).zip(&gw) {
                *t = v - step * g;
            }
            for ((t, v), g) in trial_b.iter_mut().zip(&b).zip(&gb) {
                *t = v - step * g;
            }
            let trial = p.loss(&trial_w, &trial_b);
            if trial.is_finite() && trial <= loss - 1e-4 * step * sq {
                accepted = Some(trial);
                break;
            }
            step *= 0.5;
        }
        let Some(new_loss) = accepted else {
            // no descent step left at machine precision
            converged = true;
            break;
        };
        std::mem::swap(&mut w, &mut trial_w);
        std::mem::swap(&mut b, &mut trial_b);
        let improvement = loss - new_loss;
        loss = p.loss_and_grad(&w, &b, &mut gw, &mut gb);
        grad_norm = norm2(&gw, &gb);
        if improvement <= f64::EPSILON * loss.abs().max(1.0) {
            converged = grad_norm < hyper.tol;
            break;
        }
        step *= 2.0;
    }
    if grad_norm < hyper.tol {
        converged = true;
    }
    if !loss.is_finite() {
        return Err(Error::Numerical(format!("loss became {loss}")));
    }
    Ok(LogRegModel {
        classes: classes.to_vec(),
        dim,
        weights: w,
        bias: b,
        hyper,
        epochs_run: epochs,
        final_loss: loss,
        final_grad_norm: grad_norm,
        converged,
    })
}

fn norm2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().chain(b).map(|v| v * v).sum::<f64>().sqrt()
}

impl LogRegModel {
    pub fn logits(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim,
            });
        }
        Ok((0..self.classes.len())
            .map(|c| self.bias[c] + x.dot_dense(&self.weights[c * self.dim..(c + 1) * self.dim]))
            .collect())
    }

    /// Class probabilities in class-row order.
    pub fn class_proba(&self, x: &SparseVector) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Probabilities scattered into the 9-label layout.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<[f64; NUM_LABELS]> {
        let p = self.class_proba(x)?;
        let mut out = [0.0; NUM_LABELS];
        for (c, &code) in self.classes.iter().enumerate() {
            out[code] += p[c];
        }
        Ok(out)
    }

    /// Mean loss and gradient norm on the given data, as used in training.
    pub fn objective(&self, x: &[SparseVector], y: &[usize]) -> (f64, f64) {
        let p = Problem {
            x,
            y,
            k: self.classes.len(),
            dim: self.dim,
            lambda: self.hyper.l2_lambda,
        };
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.bias.len()];
        let loss = p.loss_and_grad(&self.weights, &self.bias, &mut gw, &mut gb);
        (loss, norm2(&gw, &gb))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sv(dim: usize, pairs: &[(usize, f64)]) -> SparseVector {
        SparseVector::from_pairs(dim, pairs.iter().copied()).unwrap()
    }

    fn toy() -> (Vec<SparseVector>, Vec<usize>) {
        let x = vec![
            sv(2, &[(0, 1.0)]),
            sv(2, &[(0, 0.9), (1, 0.1)]),
            sv(2, &[(1, 1.0)]),
            sv(2, &[(0, 0.2), (1, 0.8)]),
        ];
        (x, vec![0, 0, 1, 1])
    }

    #[test]
    fn separable_toy_set_is_fit_exactly() {
        let (x, y) = toy();
        let m = train_logreg(&x, &y, &[0, 1], LogRegHyper::default()).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            let z = m.logits(xi).unwrap();
            let pred = if z[1] > z[0] { 1 } else { 0 };
            assert_eq!(pred, yi);
        }
    }

    #[test]
    fn converged_model_is_stationary() {
        let (x, y) = toy();
        let hyper = LogRegHyper {
            l2_lambda: 0.1,
            max_epochs: 10_000,
            ..LogRegHyper::default()
        };
        let m = train_logreg(&x, &y, &[0, 1], hyper).unwrap();
        assert!(m.converged);
        let (_, g) = m.objective(&x, &y);
        assert!(g < 10.0 * hyper.tol, "gradient norm {g}");
    }

    #[test]
    fn heavy_regularization_drives_weights_to_zero() {
        let (x, y) = toy();
        let hyper = LogRegHyper {
            l2_lambda: 1e6,
            max_epochs: 2000,
            learning_rate: 1e-6,
            ..LogRegHyper::default()
        };
        let m = train_logreg(&x, &y, &[0, 1], hyper).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-6));
        // balanced classes: bias stays symmetric so predictions are uniform
        let p = m.class_proba(&x[0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = LogRegModel {
            classes: (0..9).collect(),
            dim: 3,
            weights: vec![0.0; 27],
            bias: vec![0.0; 9],
            hyper: LogRegHyper::default(),
            epochs_run: 0,
            final_loss: 0.0,
            final_grad_norm: 0.0,
            converged: false,
        };
        let p = m.predict_proba(&sv(3, &[(1, 1.0)])).unwrap();
        for v in p {
            assert!((v - 1.0 / 9.0).abs() < 1e-15);
        }
        assert!(m.predict_proba(&sv(4, &[])).is_err());
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let mut a = vec![0.3, -1.2, 2.0];
        let mut b: Vec<f64> = a.iter().map(|v| v + 17.5).collect();
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors_on_empty_or_mismatched_input() {
        assert!(train_logreg(&[], &[], &[0, 1], LogRegHyper::default()).is_err());
        let (x, _) = toy();
        assert!(train_logreg(&x, &[0, 1], &[0, 1], LogRegHyper::default()).is_err());
    }

    #[test]
    fn loss_is_non_increasing_along_training() {
        let (x, y) = toy();
        let mut last = f64::INFINITY;
        for epochs in [0, 1, 2, 5, 10, 50] {
            let hyper = LogRegHyper {
                max_epochs: epochs,
                ..LogRegHyper::default()
            };
            let m = train_logreg(&x, &y, &[0, 1], hyper).unwrap();
            assert!(m.final_loss <= last + 1e-15);
            last = m.final_loss;
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let (k, dim, n) = (3, 4, 6);
            let x: Vec<SparseVector> = (0..n)
                .map(|_| SparseVector::from_pairs(dim, (0..dim).map(|i| (i, rng.random_range(-1.0..1.0)))).unwrap())
                .collect();
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let p = Problem {
                x: &x,
                y: &y,
                k,
                dim,
                lambda: 0.05,
            };
            let w: Vec<f64> = (0..k * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut gw = vec![0.0; k * dim];
            let mut gb = vec![0.0; k];
            p.loss_and_grad(&w, &b, &mut gw, &mut gb);
            let h = 1e-5;
            for i in 0..w.len() {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[i] += h;
                wm[i] -= h;
                let fd = (p.loss(&wp, &b) - p.loss(&wm, &b)) / (2.0 * h);
                let rel = (fd - gw[i]).abs() / fd.abs().max(gw[i].abs()).max(1e-8);
                assert!(rel < 1e-5, "w[{i}]: fd {fd} analytic {}", gw[i]);
            }
            for i in 0..k {
                let (mut bp, mut bm) = (b.clone(), b.clone());
                bp[i] += h;
                bm[i] -= h;
                let fd = (p.loss(&w, &bp) - p.loss(&w, &bm)) / (2.0 * h);
                let rel = (fd - gb[i]).abs() / fd.abs().max(gb[i].abs()).max(1e-8);
                assert!(rel < 1e-5, "b[{i}]: fd {fd} analytic {}", gb[i]);
            }
        }
    }
}
