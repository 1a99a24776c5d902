//! Binary linear SVM trained in the dual with sequential minimal
//! optimisation (second-order working-set selection, as in LIBSVM).
//!
//! The primal problem is
//! `min 1/2 |w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))`
//! with an unregularised bias `b`.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::knn::dot;

/// Above this many training rows the Gram matrix is not materialised and
/// kernel columns are computed on demand.
const GRAM_LIMIT: usize = 2500;
const TAU: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub eps: f64,
    pub max_iter: usize,
}

impl SvmParams {
    pub fn new(c: f64) -> Self {
        Self {
            c,
            eps: 1e-3,
            max_iter: 10_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
}

impl SvmModel {
    pub fn decision_value(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(x)
            .map(|(w, &v)| w * v as f64)
            .sum::<f64>()
            + self.bias)
    }

    /// Primal objective on a data set.
    pub fn objective(&self, x: &[&[f32]], y: &[bool]) -> Result<f64> {
        let reg = 0.5 * self.weights.iter().map(|w| w * w).sum::<f64>();
        let mut loss = 0.0;
        for (row, &label) in x.iter().zip(y) {
            let s = if label { 1.0 } else { -1.0 };
            loss += (1.0 - s * self.decision_value(row)?).max(0.0);
        }
        Ok(reg + self.c * loss)
    }
}

/// `w.x + b` for every row.
pub fn decision_values(model: &SvmModel, x: &[&[f32]]) -> Result<Vec<f64>> {
    x.iter().map(|row| model.decision_value(row)).collect()
}

enum Kernel<'a> {
    Gram { n: usize, values: Vec<f64> },
    Lazy { x: &'a [&'a [f32]] },
}

impl<'a> Kernel<'a> {
    fn new(x: &'a [&'a [f32]]) -> Self {
        let n = x.len();
        if n > GRAM_LIMIT {
            return Kernel::Lazy { x };
        }
        let mut values = vec![0f64; n * n];
        for i in 0..n {
            for j in i..n {
                let k = dot(x[i], x[j]);
                values[i * n + j] = k;
                values[j * n + i] = k;
            }
        }
        Kernel::Gram { n, values }
    }

    fn column(&self, i: usize) -> Cow<'_, [f64]> {
        match self {
            Kernel::Gram { n, values } => Cow::Borrowed(&values[i * n..(i + 1) * n]),
            Kernel::Lazy { x } => Cow::Owned(x.iter().map(|row| dot(row, x[i])).collect()),
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        match self {
            Kernel::Gram { n, values } => (0..*n).map(|i| values[i * n + i]).collect(),
            Kernel::Lazy { x } => x.iter().map(|row| dot(row, row)).collect(),
        }
    }
}

pub fn train_svm(x: &[&[f32]], y: &[bool], c: f64) -> Result<SvmModel> {
    train_svm_with(x, y, SvmParams::new(c))
}

pub fn train_svm_with(x: &[&[f32]], y: &[bool], params: SvmParams) -> Result<SvmModel> {
    let c = params.c;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::invalid(
            "svm",
            format!("C must be positive, got {c}"),
        ));
    }
    if x.len() != y.len() {
        return Err(Error::invalid(
            "svm",
            format!("{} rows but {} labels", x.len(), y.len()),
        ));
    }
    if !y.iter().any(|&l| l) || y.iter().all(|&l| l) {
        return Err(Error::Evaluation(
            "svm training data needs both positive and negative examples".into(),
        ));
    }
    let dim = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: row.len(),
        });
    }

    let n = x.len();
    let ys: Vec<f64> = y.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let kernel = Kernel::new(x);
    let diag = kernel.diagonal();
    let mut alpha = vec![0f64; n];
    // gradient of 1/2 a'Qa - e'a
    let mut grad = vec![-1f64; n];

    let in_up = |a: f64, s: f64| (s > 0.0 && a < c) || (s < 0.0 && a > 0.0);
    let in_low = |a: f64, s: f64| (s > 0.0 && a > 0.0) || (s < 0.0 && a < c);

    let mut iter = 0;
    while iter < params.max_iter {
        iter += 1;

        // i: maximal violating index from the "up" set
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            if in_up(alpha[t], ys[t]) {
                let v = -ys[t] * grad[t];
                if v > g_max {
                    g_max = v;
                    i_sel = t;
                }
            }
        }
        if i_sel == usize::MAX {
            break;
        }
        let i = i_sel;
        let k_i = kernel.column(i);

        // j: second-order choice from the "low" set
        let mut g_min = f64::INFINITY;
        let mut best_obj = f64::INFINITY;
        let mut j_sel = usize::MAX;
        for t in 0..n {
            if !in_low(alpha[t], ys[t]) {
                continue;
            }
            let v = -ys[t] * grad[t];
            g_min = g_min.min(v);
            let b = g_max - v;
            if b > 0.0 {
                let mut a = diag[i] + diag[t] - 2.0 * k_i[t];
                if a <= 0.0 {
                    a = TAU;
                }
                let obj = -(b * b) / a;
                if obj < best_obj {
                    best_obj = obj;
                    j_sel = t;
                }
            }
        }
        if g_max - g_min < params.eps || j_sel == usize::MAX {
            break;
        }
        let j = j_sel;
        let k_j = kernel.column(j);

        let (yi, yj) = (ys[i], ys[j]);
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let mut quad = diag[i] + diag[j] - 2.0 * k_i[j];
        if quad <= 0.0 {
            quad = TAU;
        }
        // two-variable sub-problem, clipped to the box (LIBSVM's update rules)
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            grad[t] += ys[t] * (yi * k_i[t] * di + yj * k_j[t] * dj);
        }
    }
    if iter >= params.max_iter {
        log::warn!(
            "svm reached the iteration limit ({}) before converging",
            params.max_iter
        );
    }

    // bias from free support vectors, or the middle of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_n) = (0.0, 0usize);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_n += 1;
        }
    }
    let rho = if free_n > 0 {
        free_sum / free_n as f64
    } else {
        (ub + lb) / 2.0
    };

    let mut weights = vec![0f64; dim];
    for t in 0..n {
        if alpha[t] != 0.0 {
            let coef = alpha[t] * ys[t];
            for (w, &v) in weights.iter_mut().zip(x[t]) {
                *w += coef * v as f64;
            }
        }
    }
    Ok(SvmModel {
        weights,
        bias: -rho,
        c,
    })
}
