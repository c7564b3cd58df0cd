//! One-vs-rest kernel SVM with a sigmoid kernel, trained by SMO with
//! second-order working-set selection.
//!
//! The sigmoid kernel `tanh(gamma * <x, z> + coef0)` is not positive
//! semi-definite. A pair whose curvature along the constraint line is not
//! positive gets a tiny positive curvature instead, and a machine that
//! hits the iteration cap is kept with `converged = false`.

use serde::{Deserialize, Serialize};

use super::logreg::softmax_in_place;
use crate::error::{Error, Result};
use crate::features::SparseVector;
use crate::labels::NUM_LABELS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidKernel {
    pub gamma: f64,
    pub coef0: f64,
}

impl SigmoidKernel {
    pub fn eval(&self, x: &SparseVector, z: &SparseVector) -> f64 {
        self.from_dot(x.dot(z))
    }

    #[inline]
    pub fn from_dot(&self, dot: f64) -> f64 {
        (self.gamma * dot + self.coef0).tanh()
    }

    /// `gamma = 1 / (V * Var(X))` over every entry of the training matrix,
    /// the usual "scale" heuristic; `coef0 = 0`.
    pub fn scaled_for(x: &[SparseVector]) -> SigmoidKernel {
        let dim = x.first().map_or(1, |v| v.dim).max(1);
        let cells = x.len() as f64 * dim as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x {
            for &(_, e) in &v.entries {
                s1 += e;
                s2 += e * e;
            }
        }
        let mean = s1 / cells;
        let var = s2 / cells - mean * mean;
        let gamma = if var > 0.0 { 1.0 / (dim as f64 * var) } else { 1.0 };
        SigmoidKernel { gamma, coef0: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmHyper {
    pub c: f64,
    /// Stop once the maximal KKT violation falls below this.
    pub tol: f64,
    /// Iteration cap per machine; `None` means `max(10^7, 100 n)`.
    pub max_iter: Option<usize>,
}

impl Default for SvmHyper {
    fn default() -> Self {
        SvmHyper {
            c: 1.0,
            tol: 1e-3,
            max_iter: None,
        }
    }
}

impl SvmHyper {
    fn iteration_cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or_else(|| 10_000_000usize.max(100 * n))
    }
}

/// One binary "class k vs rest" machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    #[serde(with = "triplets")]
    pub support: Vec<SparseVector>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl BinarySvm {
    pub fn decision(&self, kernel: &SigmoidKernel, x: &SparseVector) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(s, c)| c * kernel.eval(s, x))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Label code per machine.
    pub classes: Vec<usize>,
    pub dim: usize,
    pub machines: Vec<BinarySvm>,
    pub kernel: SigmoidKernel,
    pub hyper: SvmHyper,
}

impl SvmModel {
    /// True unless some machine hit its iteration cap.
    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    pub fn decisions(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.dim,
            });
        }
        Ok(self.machines.iter().map(|m| m.decision(&self.kernel, x)).collect())
    }

    /// Label code with the largest decision value (lowest code on ties).
    pub fn predict(&self, x: &SparseVector) -> Result<usize> {
        let d = self.decisions(x)?;
        let mut best = 0;
        for (i, v) in d.iter().enumerate() {
            if *v > d[best] {
                best = i;
            }
        }
        Ok(self.classes[best])
    }

    /// Softmax over decision values, scattered into the 9-label layout.
    pub fn predict_proba(&self, x: &SparseVector) -> Result<[f64; NUM_LABELS]> {
        let mut d = self.decisions(x)?;
        softmax_in_place(&mut d);
        let mut out = [0.0; NUM_LABELS];
        for (c, &code) in self.classes.iter().enumerate() {
            out[code] += d[c];
        }
        Ok(out)
    }
}

/// Row-major f32 kernel matrix, shared by every one-vs-rest machine.
pub(crate) struct KernelMatrix {
    n: usize,
    values: Vec<f32>,
}

impl KernelMatrix {
    pub(crate) fn sigmoid(x: &[SparseVector], kernel: &SigmoidKernel) -> Self {
        Self::from_fn(x.len(), |i, j| kernel.eval(&x[i], &x[j]))
    }

    /// Symmetric matrix from `f(i, j)` evaluated for `i <= j`.
    pub(crate) fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0f32; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j) as f32;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        KernelMatrix { n, values }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Trains one machine per class in `classes` (labels in `y` are indices
/// into `classes`). Machines train on separate threads and are merged in
/// class order.
pub fn train_svm_ovr(
    x: &[SparseVector],
    y: &[usize],
    classes: &[usize],
    hyper: SvmHyper,
    kernel: SigmoidKernel,
) -> Result<SvmModel> {
    if x.is_empty() {
        return Err(Error::InvalidInput("no training data".into()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if !(hyper.c > 0.0) || !(hyper.tol > 0.0) {
        return Err(Error::InvalidInput(format!("invalid hyperparameters {hyper:?}")));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= classes.len()) {
        return Err(Error::InvalidInput(format!("class index {bad} out of range")));
    }
    let dim = x[0].dim;
    let km = KernelMatrix::sigmoid(x, &kernel);
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut machines = Vec::with_capacity(classes.len());
    let ks: Vec<usize> = (0..classes.len()).collect();
    for batch in ks.chunks(threads) {
        let solved: Vec<BinarySvm> = std::thread::scope(|s| {
            let handles: Vec<_> = batch
                .iter()
                .map(|&k| {
                    let km = &km;
                    s.spawn(move || {
                        let targets: Vec<f64> = y.iter().map(|&c| if c == k { 1.0 } else { -1.0 }).collect();
                        let dual = solve_dual(km, &targets, hyper.c, hyper.tol, hyper.iteration_cap(x.len()));
                        machine(x, &targets, dual)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("SMO worker panicked"))
                .collect()
        });
        machines.extend(solved);
    }
    Ok(SvmModel {
        classes: classes.to_vec(),
        dim,
        machines,
        kernel,
        hyper,
    })
}

fn machine(x: &[SparseVector], y: &[f64], dual: Dual) -> BinarySvm {
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (i, &a) in dual.alpha.iter().enumerate() {
        if a > 0.0 {
            support.push(x[i].clone());
            coef.push(a * y[i]);
        }
    }
    BinarySvm {
        support,
        coef,
        bias: -dual.rho,
        converged: dual.converged,
        iterations: dual.iterations,
    }
}

/// Curvature used when a pair's second derivative is not positive, as
/// happens with the indefinite sigmoid kernel.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct Dual {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// SMO on `min 1/2 a'Qa - e'a`, `0 <= a <= C`, `y'a = 0`, with
/// `Q_ij = y_i y_j K_ij`: maximal-violating first index, second-order
/// choice of the second, stop when the violation drops below `eps`.
pub(crate) fn solve_dual(k: &KernelMatrix, y: &[f64], c: f64, eps: f64, max_iter: usize) -> Dual {
    let n = y.len();
    let mut alpha = vec![0.0f64; n];
    // gradient of the dual objective
    let mut g = vec![-1.0f64; n];
    let kd: Vec<f64> = (0..n).map(|i| f64::from(k.row(i)[i])).collect();
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], y[t]) && -y[t] * g[t] > gmax {
                gmax = -y[t] * g[t];
                i = t;
            }
        }
        if i == usize::MAX {
            converged = true;
            break;
        }
        let ki = k.row(i);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !in_low(alpha[t], y[t]) {
                continue;
            }
            let v = y[t] * g[t];
            gmax2 = gmax2.max(v);
            let b = gmax + v;
            if b > 0.0 {
                let mut a = kd[i] + kd[t] - 2.0 * f64::from(ki[t]);
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best {
                    best = obj;
                    j = t;
                }
            }
        }
        if gmax + gmax2 < eps || j == usize::MAX {
            converged = true;
            break;
        }
        iterations += 1;

        let kj = k.row(j);
        let mut quad = kd[i] + kd[j] - 2.0 * f64::from(ki[j]);
        if quad <= 0.0 {
            quad = TAU;
        }
        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        let (mut ai, mut aj);
        if y[i] != y[j] {
            let delta = (-g[i] - g[j]) / quad;
            let diff = ai_old - aj_old;
            ai = ai_old + delta;
            aj = aj_old + delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (g[i] - g[j]) / quad;
            let sum = ai_old + aj_old;
            ai = ai_old - delta;
            aj = aj_old + delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (y[i] * (ai - ai_old), y[j] * (aj - aj_old));
        for t in 0..n {
            g[t] += y[t] * (f64::from(ki[t]) * di + f64::from(kj[t]) * dj);
        }
    }

    // rho: mean over free variables, else the midpoint of the feasible range
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0f64);
    for t in 0..n {
        let yg = y[t] * g[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        (ub + lb) / 2.0
    };
    Dual {
        alpha,
        rho,
        iterations,
        converged,
    }
}

/// Support vectors stored as `{dim, triplets: [[row, col, value], ...]}`.
mod triplets {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::features::SparseVector;

    #[derive(Serialize, Deserialize)]
    struct Wire {
        dim: usize,
        rows: usize,
        triplets: Vec<(usize, usize, f64)>,
    }

    pub fn serialize<S: Serializer>(rows: &[SparseVector], s: S) -> Result<S::Ok, S::Error> {
        let wire = Wire {
            dim: rows.first().map_or(0, |r| r.dim),
            rows: rows.len(),
            triplets: rows
                .iter()
                .enumerate()
                .flat_map(|(r, v)| v.entries.iter().map(move |&(c, x)| (r, c, x)))
                .collect(),
        };
        wire.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<SparseVector>, D::Error> {
        let wire = Wire::deserialize(d)?;
        let mut rows = vec![Vec::new(); wire.rows];
        for (r, c, x) in wire.triplets {
            let row = rows
                .get_mut(r)
                .ok_or_else(|| serde::de::Error::custom(format!("triplet row {r} out of range")))?;
            row.push((c, x));
        }
        rows.into_iter()
            .map(|pairs| SparseVector::from_pairs(wire.dim, pairs).map_err(serde::de::Error::custom))
            .collect()
    }
}
