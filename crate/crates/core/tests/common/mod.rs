//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's matrix code paths.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn gauss(x: &[f64], y: &[f64], sigma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

pub fn random_points<R: Rng>(rng: &mut R, n: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| rng.random_range(-spread..spread))
                .collect()
        })
        .collect()
}

pub fn random_coeffs<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `Σ_ij a_i a_j k_σ(x_i, x_j)`.
pub fn norm_sq(x: &[Vec<f64>], a: &[f64], sigma: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            s += a[i] * a[j] * gauss(&x[i], &x[j], sigma);
        }
    }
    s
}

/// Quadruple sum `Σ a_i a_i' b_j b_j' K̃_ii' K̃_ij' K̃_ji' K̃_jj'` with
/// `K̃ = k_{√2σ}`, for `f` anchored at `x` and `g` anchored at `y`.
pub fn product_norm_sq_quad(
    x: &[Vec<f64>],
    a: &[f64],
    y: &[Vec<f64>],
    b: &[f64],
    sigma: f64,
) -> f64 {
    let w = sigma * 2f64.sqrt();
    let mut s = 0.0;
    for i in 0..x.len() {
        for ip in 0..x.len() {
            let kii = gauss(&x[i], &x[ip], w);
            for j in 0..y.len() {
                let kji = gauss(&y[j], &x[ip], w);
                for jp in 0..y.len() {
                    s += a[i]
                        * a[ip]
                        * b[j]
                        * b[jp]
                        * kii
                        * gauss(&x[i], &y[jp], w)
                        * kji
                        * gauss(&y[j], &y[jp], w);
                }
            }
        }
    }
    s
}

/// `‖fg‖²_{σ/√2}` through the explicit expansion of `fg` over midpoints.
pub fn product_norm_sq_midpoints(
    x: &[Vec<f64>],
    a: &[f64],
    y: &[Vec<f64>],
    b: &[f64],
    sigma: f64,
) -> f64 {
    let w = sigma * 2f64.sqrt();
    let mut anchors = Vec::new();
    let mut coeffs = Vec::new();
    for (xi, ai) in x.iter().zip(a) {
        for (yj, bj) in y.iter().zip(b) {
            anchors.push(
                xi.iter()
                    .zip(yj)
                    .map(|(p, q)| 0.5 * (p + q))
                    .collect::<Vec<_>>(),
            );
            coeffs.push(ai * bj * gauss(xi, yj, w));
        }
    }
    norm_sq(&anchors, &coeffs, sigma / 2f64.sqrt())
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn random_psd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let rank = rng.random_range(1..=n);
    let g = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    let m = &g * g.transpose();
    (&m + m.transpose()) * 0.5
}

/// Orthonormal basis of `{v : 1ᵀv = 0}` as the columns of an `n × (n−1)` matrix.
fn sum_zero_basis(n: usize) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for k in 0..n - 1 {
        // Helmert contrast
        let mut v = DVector::zeros(n);
        for i in 0..=k {
            v[i] = 1.0;
        }
        v[k + 1] = -((k + 1) as f64);
        cols.push(v.normalize());
    }
    DMatrix::from_columns(&cols)
}

/// Maximizes `wᵀℓ` over `{w ≥ 0, 1ᵀw = 1, (w − 1/n)ᵀ K (w − 1/n) ≤ ε²}` by
/// searching directions in the sum-zero subspace. Along each direction the
/// objective is linear, so the best step is the largest feasible one; the
/// direction itself is refined by random hill climbing with a shrinking radius.
pub fn simplex_brute_force<R: Rng>(loss: &[f64], k: &DMatrix<f64>, eps: f64, rng: &mut R) -> f64 {
    let n = loss.len();
    let u = 1.0 / n as f64;
    let base: f64 = loss.iter().sum::<f64>() * u;
    if n == 1 {
        return base;
    }
    let q = sum_zero_basis(n);
    let m = q.transpose() * k * &q;
    let l = DVector::from_column_slice(loss);
    let ql = q.transpose() * &l;
    let value = |d: &DVector<f64>| -> f64 {
        let quad = d.dot(&(&m * d));
        if quad <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let v = &q * d;
        let mut step = eps / quad.sqrt();
        for i in 0..n {
            if v[i] < 0.0 {
                step = step.min(u / -v[i]);
            }
        }
        base + step * ql.dot(d)
    };
    let dim = n - 1;
    let random_dir =
        |rng: &mut R| DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)).normalize();
    let mut best_d = random_dir(rng);
    let mut best = value(&best_d);
    for _ in 0..4000 {
        let d = random_dir(rng);
        let v = value(&d);
        if v > best {
            best = v;
            best_d = d;
        }
    }
    let mut radius = 0.5;
    while radius > 1e-9 {
        let mut improved = false;
        for _ in 0..200 {
            let d = (&best_d + random_dir(rng) * radius).normalize();
            let v = value(&d);
            if v > best {
                best = v;
                best_d = d;
                improved = true;
            }
        }
        if !improved {
            radius *= 0.5;
        }
    }
    best
}

/// Minimizes `(1/n)‖Ka − y‖² + λ aᵀKa` by exact cyclic coordinate minimization.
pub fn ridge_coordinate_descent(
    k: &DMatrix<f64>,
    y: &[f64],
    lambda: f64,
    sweeps: usize,
) -> Vec<f64> {
    let n = y.len();
    let nf = n as f64;
    let mut a = vec![0.0; n];
    for _ in 0..sweeps {
        for j in 0..n {
            // objective restricted to a_j is quadratic: c2 t² + c1 t + const
            let kj = k.column(j);
            let mut c2 = 0.0;
            let mut c1 = 0.0;
            for i in 0..n {
                let rest: f64 = (0..n).filter(|&m| m != j).map(|m| k[(i, m)] * a[m]).sum();
                c2 += kj[i] * kj[i] / nf;
                c1 += 2.0 * kj[i] * (rest - y[i]) / nf;
            }
            let cross: f64 = (0..n).filter(|&m| m != j).map(|m| k[(j, m)] * a[m]).sum();
            c2 += lambda * k[(j, j)];
            c1 += 2.0 * lambda * cross;
            a[j] = -c1 / (2.0 * c2);
        }
    }
    a
}

/// `(1/n) Σ (f(x_i) − y_i)² + λ √(‖f²‖² + floor)`, with the penalty through the quadruple sum.
pub fn product_objective_naive(
    x: &[Vec<f64>],
    y: &[f64],
    a: &[f64],
    lambda: f64,
    sigma: f64,
    floor: f64,
) -> f64 {
    let n = y.len() as f64;
    let mut data = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        let fx: f64 = x
            .iter()
            .zip(a)
            .map(|(xj, aj)| aj * gauss(xj, xi, sigma))
            .sum();
        data += (fx - yi) * (fx - yi);
    }
    data / n + lambda * (product_norm_sq_quad(x, a, x, a, sigma) + floor).sqrt()
}

/// Compass search from `start` until the step falls below `min_step`.
pub fn pattern_search(
    f: impl Fn(&[f64]) -> f64,
    start: &[f64],
    mut step: f64,
    min_step: f64,
) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = f(&x);
    while step > min_step {
        let mut moved = false;
        for i in 0..x.len() {
            for sign in [1.0, -1.0] {
                let old = x[i];
                x[i] = old + sign * step;
                let v = f(&x);
                if v < fx {
                    fx = v;
                    moved = true;
                } else {
                    x[i] = old;
                }
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (x, fx)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
