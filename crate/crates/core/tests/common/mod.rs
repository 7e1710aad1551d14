//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls into the network or monitor code under test: weights are
//! copied out into plain row-major vectors and every quantity is recomputed
//! with explicit loops.

#![allow(dead_code)]

pub mod criteria;

use kneetune::dhdp::{ActorNet, CriticNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub v: Vec<f64>,
}

impl Mat {
    pub fn from_dmatrix(m: &nalgebra::DMatrix<f64>) -> Self {
        let mut v = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                v.push(m[(i, j)]);
            }
        }
        Mat { rows: m.nrows(), cols: m.ncols(), v }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.v[i * self.cols + j]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.at(i, j) * x[j]).sum()).collect()
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_row_slice(self.rows, self.cols, &self.v)
    }
}

/// `(1 - e^-x) / (1 + e^-x)` written out directly.
pub fn bipolar(x: f64) -> f64 {
    (1.0 - (-x).exp()) / (1.0 + (-x).exp())
}

pub fn bipolar_slope(y: f64) -> f64 {
    0.5 * (1.0 - y * y)
}

#[derive(Debug, Clone)]
pub struct CriticWeights {
    pub w1: Mat,
    pub w2: Mat,
}

#[derive(Debug, Clone)]
pub struct ActorWeights {
    pub w1: Mat,
    pub w2: Mat,
}

impl CriticWeights {
    pub fn of(c: &CriticNet) -> Self {
        CriticWeights { w1: Mat::from_dmatrix(&c.w1), w2: Mat::from_dmatrix(&c.w2) }
    }

    pub fn hidden(&self, z: &[f64]) -> Vec<f64> {
        self.w1.mul_vec(z).into_iter().map(bipolar).collect()
    }

    pub fn q(&self, s: [f64; 2], u: [f64; 3]) -> f64 {
        let z = [s[0], s[1], u[0], u[1], u[2]];
        let h = self.hidden(&z);
        self.w2.mul_vec(&h)[0]
    }
}

impl ActorWeights {
    pub fn of(a: &ActorNet) -> Self {
        ActorWeights { w1: Mat::from_dmatrix(&a.w1), w2: Mat::from_dmatrix(&a.w2) }
    }

    pub fn hidden(&self, s: [f64; 2]) -> Vec<f64> {
        self.w1.mul_vec(&s).into_iter().map(bipolar).collect()
    }

    pub fn u(&self, s: [f64; 2]) -> [f64; 3] {
        let out: Vec<f64> = self.w2.mul_vec(&self.hidden(s)).into_iter().map(bipolar).collect();
        [out[0], out[1], out[2]]
    }
}

/// Central difference extrapolated once (Richardson), error O(h⁴).
pub fn derivative(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

/// Gradient of `f` with respect to every entry of `m`.
pub fn numeric_gradient(m: &Mat, f: impl Fn(&Mat) -> f64) -> Mat {
    let mut g = m.clone();
    for idx in 0..m.v.len() {
        let x0 = m.v[idx];
        let h = 1e-3 * x0.abs().max(1.0);
        g.v[idx] = derivative(
            |x| {
                let mut p = m.clone();
                p.v[idx] = x;
                f(&p)
            },
            x0,
            h,
        );
    }
    g
}

pub fn close(a: f64, b: f64, rtol: f64, atol: f64) -> bool {
    (a - b).abs() <= atol + rtol * b.abs()
}

/// Largest violation of `close` over two matrices, as a multiple of the allowance.
pub fn worst_ratio(found: &Mat, expected: &Mat, rtol: f64, atol: f64) -> f64 {
    assert_eq!((found.rows, found.cols), (expected.rows, expected.cols));
    found.v.iter().zip(&expected.v).map(|(a, b)| (a - b).abs() / (atol + rtol * b.abs())).fold(0.0, f64::max)
}

/// Learning-rate limits recomputed from the weights alone.
///
/// `A = ½(1−φ_c²)⊙W_c2`, `C = diag(½(1−φ_c²)) W_cu diag(½(1−u²))`,
/// `Dᵀ = W_a2 diag(½(1−φ_a²))`.
pub fn monitor_bounds(
    critic: &CriticWeights,
    actor: &ActorWeights,
    s: [f64; 2],
    alphas: [f64; 3],
    gamma: f64,
) -> (f64, f64) {
    let [a1, a2, a3] = alphas;
    let phi_a = actor.hidden(s);
    let u = actor.u(s);
    let z = [s[0], s[1], u[0], u[1], u[2]];
    let phi_c = critic.hidden(&z);
    let hc = phi_c.len();
    let ha = phi_a.len();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();

    let a: Vec<f64> = (0..hc).map(|i| bipolar_slope(phi_c[i]) * critic.w2.at(0, i)).collect();
    let den_c = gamma * gamma * a1 * (sq(&phi_c) + sq(&a) * sq(&z) / a1);
    let lc = if den_c > 0.0 { (a1 - gamma) / den_c } else { f64::INFINITY };

    // row vector W_c2 C, length 3
    let mut wc = [0.0; 3];
    for (j, w) in wc.iter_mut().enumerate() {
        for i in 0..hc {
            *w += critic.w2.at(0, i) * bipolar_slope(phi_c[i]) * critic.w1.at(i, 2 + j) * bipolar_slope(u[j]);
        }
    }
    // row vector W_c2 C Dᵀ, length hidden_a
    let wcd: Vec<f64> = (0..ha).map(|h| (0..3).map(|j| wc[j] * actor.w2.at(j, h) * bipolar_slope(phi_a[h])).sum()).collect();
    let den_a = a3 * sq(&wc) * sq(&phi_a) + a2 * sq(&wcd) * sq(&s);
    let la = if den_a > 0.0 { (a3 - a2) / den_a } else { f64::INFINITY };
    (lc, la)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    rng.random_range(-half..=half)
}

pub fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half: f64) -> Mat {
    Mat { rows, cols, v: (0..rows * cols).map(|_| uniform(rng, half)).collect() }
}
