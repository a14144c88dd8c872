//! Minimal dense-layer plumbing shared by the aspect and CTR models:
//! affine maps, a two-layer tanh MLP, stable sigmoid/BCE, log-sum-exp, and
//! flat parameter-vector access used by gradient checking.
//!
//! Everything is `f64` and allocation-light; backward passes accumulate
//! into caller-owned gradient buffers so batches can share one accumulator.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense affine map `y = W x + b` with `W` stored row-major (`rows x cols`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Affine {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    /// Variance-scaled uniform init: `U(-s, s)` with `s = sqrt(6 / (rows + cols))`.
    pub fn variance_scaled(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let mut a = Affine::zeros(rows, cols);
        for w in a.w.iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
        a
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = self.b.clone();
        for (r, y_r) in y.iter_mut().enumerate() {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            *y_r += acc;
        }
        y
    }

    /// Accumulates `dW += dy x^T`, `db += dy`, and (when given) `dx += W^T dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut AffineGrad, dx: Option<&mut [f64]>) {
        debug_assert_eq!(dy.len(), self.rows);
        for (r, &dy_r) in dy.iter().enumerate() {
            grad.b[r] += dy_r;
            let grow = &mut grad.w[r * self.cols..(r + 1) * self.cols];
            for (g, xv) in grow.iter_mut().zip(x) {
                *g += dy_r * xv;
            }
        }
        if let Some(dx) = dx {
            debug_assert_eq!(dx.len(), self.cols);
            for (r, &dy_r) in dy.iter().enumerate() {
                let row = &self.w[r * self.cols..(r + 1) * self.cols];
                for (dxv, w) in dx.iter_mut().zip(row) {
                    *dxv += dy_r * w;
                }
            }
        }
    }

    pub fn sgd_step(&mut self, grad: &AffineGrad, lr: f64) {
        for (w, g) in self.w.iter_mut().zip(&grad.w) {
            *w -= lr * g;
        }
        for (b, g) in self.b.iter_mut().zip(&grad.b) {
            *b -= lr * g;
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.b);
    }

    pub fn read_params(&mut self, cursor: &mut ParamCursor) {
        cursor.take_into(&mut self.w);
        cursor.take_into(&mut self.b);
    }
}

/// Gradient buffer shaped like an [`Affine`].
#[derive(Debug, Clone)]
pub struct AffineGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl AffineGrad {
    pub fn zeros_like(a: &Affine) -> Self {
        AffineGrad {
            w: vec![0.0; a.w.len()],
            b: vec![0.0; a.b.len()],
        }
    }

    pub fn clear(&mut self) {
        self.w.fill(0.0);
        self.b.fill(0.0);
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.b);
    }
}

/// Two affine layers with a tanh in between; the caller applies whatever
/// output nonlinearity it needs to the returned logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Affine,
    pub out: Affine,
}

impl Mlp {
    pub fn variance_scaled(in_dim: usize, hidden_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Mlp {
            hidden: Affine::variance_scaled(hidden_dim, in_dim, rng),
            out: Affine::variance_scaled(out_dim, hidden_dim, rng),
        }
    }

    pub fn zeros(in_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        Mlp {
            hidden: Affine::zeros(hidden_dim, in_dim),
            out: Affine::zeros(out_dim, hidden_dim),
        }
    }

    /// Returns `(tanh(hidden(x)), logits)`; the activation is needed again
    /// by [`Mlp::backward`].
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut h = self.hidden.forward(x);
        for v in h.iter_mut() {
            *v = v.tanh();
        }
        let logits = self.out.forward(&h);
        (h, logits)
    }

    /// Backward through both layers given the cached activation `h`.
    pub fn backward(
        &self,
        x: &[f64],
        h: &[f64],
        dlogits: &[f64],
        grad: &mut MlpGrad,
        dx: Option<&mut [f64]>,
    ) {
        let mut dh = vec![0.0; h.len()];
        self.out.backward(h, dlogits, &mut grad.out, Some(&mut dh));
        for (dv, &hv) in dh.iter_mut().zip(h) {
            *dv *= 1.0 - hv * hv;
        }
        self.hidden.backward(x, &dh, &mut grad.hidden, dx);
    }

    pub fn sgd_step(&mut self, grad: &MlpGrad, lr: f64) {
        self.hidden.sgd_step(&grad.hidden, lr);
        self.out.sgd_step(&grad.out, lr);
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.hidden.write_params(out);
        self.out.write_params(out);
    }

    pub fn read_params(&mut self, cursor: &mut ParamCursor) {
        self.hidden.read_params(cursor);
        self.out.read_params(cursor);
    }
}

/// Gradient buffer shaped like an [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpGrad {
    pub hidden: AffineGrad,
    pub out: AffineGrad,
}

impl MlpGrad {
    pub fn zeros_like(m: &Mlp) -> Self {
        MlpGrad {
            hidden: AffineGrad::zeros_like(&m.hidden),
            out: AffineGrad::zeros_like(&m.out),
        }
    }

    pub fn clear(&mut self) {
        self.hidden.clear();
        self.out.clear();
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        self.hidden.write_params(out);
        self.out.write_params(out);
    }
}

/// Sequential reader used to load a flat parameter vector back into model
/// structs in the same order `write_params` emitted it.
pub struct ParamCursor<'a> {
    data: &'a [f64],
    pos: usize,
}

impl<'a> ParamCursor<'a> {
    pub fn new(data: &'a [f64]) -> Self {
        ParamCursor { data, pos: 0 }
    }

    pub fn take_into(&mut self, dst: &mut [f64]) {
        let end = self.pos + dst.len();
        dst.copy_from_slice(&self.data[self.pos..end]);
        self.pos = end;
    }

    pub fn finished(&self) -> bool {
        self.pos == self.data.len()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy evaluated from the logit (softplus form), returning
/// the loss and its gradient with respect to the logit.
pub fn bce_with_logit(logit: f64, target: f64) -> (f64, f64) {
    let loss = logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p();
    let dlogit = sigmoid(logit) - target;
    (loss, dlogit)
}

/// `log(sum(exp(xs)))` with the usual max shift.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_forward_matches_manual() {
        let a = Affine {
            rows: 2,
            cols: 3,
            w: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            b: vec![0.5, -0.5],
        };
        let y = a.forward(&[1.0, 0.0, -1.0]);
        assert_eq!(y, vec![1.0 - 3.0 + 0.5, 4.0 - 6.0 - 0.5]);
    }

    #[test]
    fn affine_backward_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Affine::variance_scaled(3, 4, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Loss: 0.5 * ||y - t||^2 so dy = y - t.
        let loss = |aff: &Affine, x: &[f64]| -> f64 {
            aff.forward(x)
                .iter()
                .zip(&target)
                .map(|(y, t)| 0.5 * (y - t) * (y - t))
                .sum()
        };
        let y = a.forward(&x);
        let dy: Vec<f64> = y.iter().zip(&target).map(|(y, t)| y - t).collect();
        let mut grad = AffineGrad::zeros_like(&a);
        let mut dx = vec![0.0; 4];
        a.backward(&x, &dy, &mut grad, Some(&mut dx));

        let mut flat = Vec::new();
        a.write_params(&mut flat);
        let mut gflat = Vec::new();
        grad.write_params(&mut gflat);
        let h = 1e-6;
        for k in 0..flat.len() {
            let mut plus = flat.clone();
            plus[k] += h;
            let mut minus = flat.clone();
            minus[k] -= h;
            let mut ap = a.clone();
            ap.read_params(&mut ParamCursor::new(&plus));
            let mut am = a.clone();
            am.read_params(&mut ParamCursor::new(&minus));
            let fd = (loss(&ap, &x) - loss(&am, &x)) / (2.0 * h);
            assert!((fd - gflat[k]).abs() < 1e-6, "param {k}: {fd} vs {}", gflat[k]);
        }
        // Input gradient.
        for k in 0..x.len() {
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (loss(&a, &xp) - loss(&a, &xm)) / (2.0 * h);
            assert!((fd - dx[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn sigmoid_is_stable_and_centered() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bce_with_logit_matches_direct_form() {
        for &(z, t) in &[(0.3, 1.0), (-2.0, 0.0), (5.0, 1.0), (-7.0, 1.0)] {
            let (loss, dz) = bce_with_logit(z, t);
            let p: f64 = sigmoid(z);
            let direct = -(t * p.ln() + (1.0 - t) * (1.0 - p).ln());
            assert!((loss - direct).abs() < 1e-12);
            assert!((dz - (p - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn logsumexp_handles_extremes() {
        assert!((logsumexp(&[0.0, 0.0]) - 2.0f64.ln()).abs() < 1e-15);
        let shifted = logsumexp(&[1000.0, 1000.0]);
        assert!((shifted - (1000.0 + 2.0f64.ln())).abs() < 1e-9);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn param_round_trip_preserves_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Mlp::variance_scaled(3, 4, 2, &mut rng);
        let mut flat = Vec::new();
        m.write_params(&mut flat);
        let mut copy = Mlp::zeros(3, 4, 2);
        let mut cursor = ParamCursor::new(&flat);
        copy.read_params(&mut cursor);
        assert!(cursor.finished());
        assert_eq!(copy, m);
    }
}
