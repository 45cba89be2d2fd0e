//! Test objectives with exact value and gradient access.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{self, Matrix};
use crate::math;
use crate::rng::{self, streams};
use crate::{Error, Result};

/// Convex quadratic `½xᵀQx + bᵀx` with `b = −Qx*`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct QuadraticSpec {
    pub d: usize,
    #[cfg_attr(feature = "serde", serde(rename = "L"))]
    pub l: f64,
    pub seed: u64,
    /// `0` gives eigenvalues linearly spaced in `[0, L]` with the smallest
    /// `⌊d/10⌋` set to zero. A positive value gives eigenvalues linearly
    /// spaced in `[min_eigenvalue, L]`, so the problem is strongly convex.
    #[cfg_attr(feature = "serde", serde(default))]
    pub min_eigenvalue: f64,
}

impl QuadraticSpec {
    pub fn new(d: usize, l: f64, seed: u64) -> Self {
        QuadraticSpec {
            d,
            l,
            seed,
            min_eigenvalue: 0.0,
        }
    }

    pub fn strongly_convex(d: usize, mu: f64, l: f64, seed: u64) -> Self {
        QuadraticSpec {
            d,
            l,
            seed,
            min_eigenvalue: mu,
        }
    }

    pub fn zero_count(&self) -> usize {
        if self.min_eigenvalue > 0.0 {
            0
        } else {
            self.d / 10
        }
    }

    /// Spectrum in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.d;
        let lo = self.min_eigenvalue;
        let z = self.zero_count();
        (0..d)
            .map(|i| {
                if i < z {
                    0.0
                } else if d == 1 {
                    self.l
                } else {
                    lo + (self.l - lo) * i as f64 / (d - 1) as f64
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::config(format!("quadratic: L must be positive, got {}", self.l)));
        }
        if self.min_eigenvalue > 0.0 {
            if self.d < 1 {
                return Err(Error::config("quadratic: d must be at least 1"));
            }
            if self.min_eigenvalue > self.l {
                return Err(Error::config("quadratic: min_eigenvalue exceeds L"));
            }
        } else {
            if self.min_eigenvalue < 0.0 {
                return Err(Error::config("quadratic: min_eigenvalue must be nonnegative"));
            }
            if self.d < 10 {
                return Err(Error::config(format!(
                    "quadratic: d must be at least 10, got {}",
                    self.d
                )));
            }
        }
        Ok(())
    }
}

/// ℓ2-regularized binary logistic regression on synthetic Gaussian data.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct LogisticSpec {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl LogisticSpec {
    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::config("logistic: n and d must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "logistic: lambda must be positive, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// `Q = Σ λ_i v_i v_iᵀ`; only the nonzero part of the spectrum is kept.
    Quadratic {
        eigenvectors: Matrix,
        eigenvalues: Vec<f64>,
    },
    Logistic {
        features: Matrix,
        labels: Vec<f64>,
        lambda: f64,
    },
}

/// A smooth convex objective with its constants and reference optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    d: usize,
    mu: f64,
    l: f64,
    x_star: Vec<f64>,
    phi_star: f64,
    objective: Objective,
    reference_converged: bool,
}

impl Problem {
    pub fn dimension(&self) -> usize {
        self.d
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn x_star(&self) -> &[f64] {
        &self.x_star
    }

    pub fn phi_star(&self) -> f64 {
        self.phi_star
    }

    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    /// False when the reference solver hit its iteration cap.
    pub fn reference_converged(&self) -> bool {
        self.reference_converged
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Quadratic { .. } => self.phi_star + self.gap(x),
            Objective::Logistic {
                features,
                labels,
                lambda,
            } => {
                let margins = features.mul_vec(x);
                let n = labels.len() as f64;
                let loss: f64 = margins.iter().zip(labels).map(|(m, y)| math::softplus(-y * m)).sum();
                loss / n + 0.5 * lambda * linalg::norm_sq(x)
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.objective {
            Objective::Quadratic {
                eigenvectors,
                eigenvalues,
            } => {
                let e = linalg::sub(x, &self.x_star);
                let mut w = eigenvectors.mul_vec(&e);
                for (wi, li) in w.iter_mut().zip(eigenvalues) {
                    *wi *= li;
                }
                eigenvectors.tr_mul_vec(&w)
            }
            Objective::Logistic {
                features,
                labels,
                lambda,
            } => {
                let margins = features.mul_vec(x);
                let n = labels.len() as f64;
                let weights: Vec<f64> = margins
                    .iter()
                    .zip(labels)
                    .map(|(m, y)| -y * math::sigmoid(-y * m) / n)
                    .collect();
                let mut g = features.tr_mul_vec(&weights);
                linalg::axpy(*lambda, x, &mut g);
                g
            }
        }
    }

    /// `φ(x) − φ*`. For the quadratic this is evaluated in the eigenbasis and
    /// is therefore never negative.
    pub fn gap(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Quadratic {
                eigenvectors,
                eigenvalues,
            } => {
                let e = linalg::sub(x, &self.x_star);
                let w = eigenvectors.mul_vec(&e);
                0.5 * w.iter().zip(eigenvalues).map(|(wi, li)| li * wi * wi).sum::<f64>()
            }
            Objective::Logistic { .. } => self.value(x) - self.phi_star,
        }
    }
}

/// Builds the quadratic test problem.
pub fn make_quadratic(spec: &QuadraticSpec) -> Result<Problem> {
    spec.validate()?;
    let d = spec.d;
    let mut rng = rng::seeded_rng(spec.seed, streams::QUADRATIC_BASIS);
    let gaussian: Vec<f64> = (0..d * d).map(|_| rng::standard_normal(&mut rng)).collect();
    let q = linalg::orthogonal_factor(&Matrix::from_row_major(d, d, gaussian));

    let spectrum = spec.eigenvalues();
    let z = spec.zero_count();
    // Row i of the stored factor is the eigenvector for spectrum[z + i].
    let mut rows = Vec::with_capacity((d - z) * d);
    for j in z..d {
        rows.extend((0..d).map(|i| q[(i, j)]));
    }
    let eigenvectors = Matrix::from_row_major(d - z, d, rows);
    let eigenvalues = spectrum[z..].to_vec();

    let mut mrng = rng::seeded_rng(spec.seed, streams::QUADRATIC_MINIMIZER);
    let x_star: Vec<f64> = (0..d).map(|_| rng::standard_normal(&mut mrng)).collect();

    let w = eigenvectors.mul_vec(&x_star);
    let curvature: f64 = w.iter().zip(&eigenvalues).map(|(wi, li)| li * wi * wi).sum();

    Ok(Problem {
        d,
        mu: spec.min_eigenvalue,
        l: spec.l,
        x_star,
        phi_star: -0.5 * curvature,
        objective: Objective::Quadratic {
            eigenvectors,
            eigenvalues,
        },
        reference_converged: true,
    })
}

/// Builds the logistic-regression test problem and solves it to high accuracy.
pub fn make_logistic(spec: &LogisticSpec) -> Result<Problem> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);

    let mut frng = rng::seeded_rng(spec.seed, streams::LOGISTIC_FEATURES);
    let data: Vec<f64> = (0..n * d).map(|_| rng::standard_normal(&mut frng)).collect();
    let features = Matrix::from_row_major(n, d, data);

    let mut trng = rng::seeded_rng(spec.seed, streams::LOGISTIC_TRUTH);
    let mut truth: Vec<f64> = (0..d).map(|_| rng::standard_normal(&mut trng)).collect();
    let tn = linalg::norm(&truth);
    truth.iter_mut().for_each(|t| *t /= tn);

    let mut lrng = rng::seeded_rng(spec.seed, streams::LOGISTIC_LABELS);
    let margins = features.mul_vec(&truth);
    let labels: Vec<f64> = margins
        .iter()
        .map(|m| {
            let u: f64 = rand::Rng::random(&mut lrng);
            // Logistic noise by inversion; u = 0 has probability 2^-53.
            let u = u.max(f64::MIN_POSITIVE);
            let noise = math::ln(u) - math::ln_1p(-u);
            if m + noise >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();

    let mut prng = rng::seeded_rng(spec.seed, streams::POWER_START);
    let start: Vec<f64> = (0..d).map(|_| rng::standard_normal(&mut prng)).collect();
    let top = linalg::power_iteration(
        |v| {
            let av = features.mul_vec(v);
            linalg::scale(&features.tr_mul_vec(&av), 1.0 / n as f64)
        },
        start,
        1e-10,
        100_000,
    )?;

    let mut problem = Problem {
        d,
        mu: spec.lambda,
        l: 0.25 * top + spec.lambda,
        x_star: vec![0.0; d],
        phi_star: 0.0,
        objective: Objective::Logistic {
            features,
            labels,
            lambda: spec.lambda,
        },
        reference_converged: false,
    };
    let reference = reference_minimize(&problem, &vec![0.0; d])?;
    problem.x_star = reference.x;
    problem.phi_star = reference.value;
    problem.reference_converged = reference.converged;
    Ok(problem)
}

/// Output of [`reference_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// False when the iteration cap was reached first; `x` is then the
    /// iterate with the smallest gradient norm seen.
    pub converged: bool,
}

pub const REFERENCE_MAX_ITER: usize = 100_000;

/// Deterministic accelerated gradient method with exact oracles.
///
/// The step is `1/L_k` where `L_k` is found by backtracking on the local
/// gradient Lipschitz estimate, momentum is `(√L_k − √μ)/(√L_k + √μ)` and is
/// reset whenever it points uphill. Stops once
/// `‖∇φ‖ ≤ 1e-12·max(1, ‖∇φ(x₀)‖)`.
pub fn reference_minimize(problem: &Problem, x0: &[f64]) -> Result<ReferenceSolution> {
    let mu = problem.mu();
    if !(mu > 0.0) {
        return Err(Error::config("reference_minimize needs a strongly convex problem"));
    }
    let mut x = x0.to_vec();
    let mut gx = problem.gradient(&x);
    let g0 = linalg::norm(&gx);
    let target = 1e-12 * g0.max(1.0);

    let mut best = (g0, x.clone());
    if g0 <= target {
        return Ok(ReferenceSolution {
            value: problem.value(&x),
            x,
            grad_norm: g0,
            iterations: 0,
            converged: true,
        });
    }

    let mut x_prev = x.clone();
    let mut l_est = problem.l();
    for iter in 1..=REFERENCE_MAX_ITER {
        let beta = (math::sqrt(l_est) - math::sqrt(mu)) / (math::sqrt(l_est) + math::sqrt(mu));
        let mut y = x.clone();
        for i in 0..y.len() {
            y[i] += beta * (x[i] - x_prev[i]);
        }
        let gy = problem.gradient(&y);

        let mut l_try = (0.9 * l_est).max(mu);
        let (x_next, g_next) = loop {
            let cand = linalg::add_scaled(&y, -1.0 / l_try, &gy);
            let gc = problem.gradient(&cand);
            let step = linalg::dist(&cand, &y);
            let change = linalg::dist(&gc, &gy);
            if change <= l_try * step * (1.0 + 1e-12) || step == 0.0 {
                break (cand, gc);
            }
            l_try *= 2.0;
            if !l_try.is_finite() {
                return Err(Error::Numeric("reference_minimize: step size underflow".into()));
            }
        };
        l_est = l_try;

        // Restart when the step opposes the gradient at the new point.
        let restart = linalg::dot(&g_next, &linalg::sub(&x_next, &x)) > 0.0;
        x_prev = if restart { x_next.clone() } else { x };
        x = x_next;
        gx = g_next;

        let gn = linalg::norm(&gx);
        if !gn.is_finite() {
            return Err(Error::Numeric("reference_minimize: non-finite gradient".into()));
        }
        if gn < best.0 {
            best = (gn, x.clone());
        }
        if gn <= target {
            return Ok(ReferenceSolution {
                value: problem.value(&x),
                x,
                grad_norm: gn,
                iterations: iter,
                converged: true,
            });
        }
    }
    let (grad_norm, x) = best;
    Ok(ReferenceSolution {
        value: problem.value(&x),
        x,
        grad_norm,
        iterations: REFERENCE_MAX_ITER,
        converged: false,
    })
}

/// Starting point `x₀ ~ N(0, I)`.
pub fn initial_point(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::seeded_rng(seed, streams::INITIAL_POINT);
    (0..d).map(|_| rng::standard_normal(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_q(p: &Problem) -> Matrix {
        let Objective::Quadratic {
            eigenvectors,
            eigenvalues,
        } = p.objective()
        else {
            unreachable!()
        };
        let d = p.dimension();
        let mut q = Matrix::zeros(d, d);
        for (k, lk) in eigenvalues.iter().enumerate() {
            let v = eigenvectors.row(k);
            for i in 0..d {
                for j in 0..d {
                    q[(i, j)] += lk * v[i] * v[j];
                }
            }
        }
        q
    }

    fn naive_value(q: &Matrix, b: &[f64], x: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                s += 0.5 * x[i] * q[(i, j)] * x[j];
            }
        }
        s + linalg::dot(b, x)
    }

    #[test]
    fn paper_sized_quadratic_spectrum() {
        let spec = QuadraticSpec::new(1000, 5.0, 7);
        let ev = spec.eigenvalues();
        assert_eq!(ev.iter().filter(|&&l| l == 0.0).count(), 100);
        assert_eq!(*ev.last().unwrap(), 5.0);
        assert!(ev.iter().all(|&l| (0.0..=5.0).contains(&l)));
    }

    #[test]
    fn quadratic_rejects_bad_specs() {
        assert!(make_quadratic(&QuadraticSpec::new(9, 1.0, 0)).is_err());
        assert!(make_quadratic(&QuadraticSpec::new(10, 0.0, 0)).is_err());
    }

    #[test]
    fn quadratic_optimum_matches_dense_evaluation() {
        let p = make_quadratic(&QuadraticSpec::new(10, 1.0, 3)).unwrap();
        let q = dense_q(&p);
        let xs = p.x_star();
        let qx = q.mul_vec(xs);
        let b: Vec<f64> = qx.iter().map(|v| -v).collect();
        let dense_star = -0.5 * linalg::dot(xs, &qx);
        assert!((p.phi_star() - dense_star).abs() <= 1e-12 * dense_star.abs().max(1.0));
        assert!((naive_value(&q, &b, xs) - dense_star).abs() < 1e-12);
        assert!(linalg::norm(&p.gradient(xs)) <= 1e-8 * linalg::norm(xs).max(1.0));
    }

    #[test]
    fn factored_evaluation_matches_dense() {
        let p = make_quadratic(&QuadraticSpec::new(60, 5.0, 11)).unwrap();
        let q = dense_q(&p);
        let b: Vec<f64> = q.mul_vec(p.x_star()).iter().map(|v| -v).collect();
        let mut rng = rng::seeded_rng(0, 0);
        for _ in 0..20 {
            let x: Vec<f64> = (0..60).map(|_| 3.0 * rng::standard_normal(&mut rng)).collect();
            let want = naive_value(&q, &b, &x);
            assert!((p.value(&x) - want).abs() <= 1e-10 * want.abs().max(1.0));
            let g_dense = linalg::add_scaled(&q.mul_vec(&x), 1.0, &b);
            let err = linalg::dist(&p.gradient(&x), &g_dense);
            assert!(err <= 1e-10 * linalg::norm(&g_dense).max(1.0));
        }
    }

    fn sandwich(p: &Problem, pairs: usize, scale: f64) {
        let mut rng = rng::seeded_rng(5, 5);
        let d = p.dimension();
        for _ in 0..pairs {
            let x: Vec<f64> = (0..d).map(|_| scale * rng::standard_normal(&mut rng)).collect();
            let y: Vec<f64> = (0..d).map(|_| scale * rng::standard_normal(&mut rng)).collect();
            let r2 = linalg::dist_sq(&x, &y);
            let bregman = p.value(&y) - p.value(&x) - linalg::dot(&p.gradient(&x), &linalg::sub(&y, &x));
            let slack = 1e-9 * (p.value(&x).abs() + p.value(&y).abs() + r2).max(1.0);
            assert!(bregman >= 0.5 * p.mu() * r2 - slack, "lower: {bregman}");
            assert!(bregman <= 0.5 * p.l() * r2 + slack, "upper: {bregman}");
        }
    }

    #[test]
    fn quadratic_sandwich() {
        sandwich(&make_quadratic(&QuadraticSpec::new(50, 5.0, 1)).unwrap(), 1000, 1.0);
        sandwich(
            &make_quadratic(&QuadraticSpec::strongly_convex(30, 0.5, 5.0, 1)).unwrap(),
            1000,
            1.0,
        );
    }

    #[test]
    fn logistic_sandwich_and_optimum() {
        let p = make_logistic(&LogisticSpec {
            n: 50,
            d: 5,
            lambda: 0.1,
            seed: 9,
        })
        .unwrap();
        assert!(p.reference_converged());
        assert_eq!(p.mu(), 0.1);
        assert!(p.l() > p.mu());
        assert!(linalg::norm(&p.gradient(p.x_star())) <= 1e-10);
        sandwich(&p, 1000, 1.0);
    }

    #[test]
    fn logistic_matches_independent_gradient_descent() {
        let p = make_logistic(&LogisticSpec {
            n: 50,
            d: 5,
            lambda: 0.1,
            seed: 21,
        })
        .unwrap();
        // Plain gradient descent with step 1/L, run to a tight tolerance.
        let mut x = vec![0.0; 5];
        for _ in 0..200_000 {
            let g = p.gradient(&x);
            if linalg::norm(&g) < 1e-13 {
                break;
            }
            linalg::axpy(-1.0 / p.l(), &g, &mut x);
        }
        assert!((p.value(&x) - p.phi_star()).abs() < 1e-8);
        assert!(linalg::dist(&x, p.x_star()) < 1e-8);
    }

    #[test]
    fn dominant_ridge_drives_minimizer_to_zero() {
        let p = make_logistic(&LogisticSpec {
            n: 20,
            d: 3,
            lambda: 1e6,
            seed: 2,
        })
        .unwrap();
        assert!(linalg::norm(p.x_star()) < 1e-6);
        assert!((p.phi_star() - core::f64::consts::LN_2).abs() < 1e-6);
    }

    #[test]
    fn reference_solver_on_one_dimensional_quadratic() {
        let p = make_quadratic(&QuadraticSpec::strongly_convex(1, 0.7, 0.7, 0)).unwrap();
        // Shift so that the minimizer is at the origin.
        let p = Problem {
            x_star: vec![0.0],
            phi_star: 0.0,
            ..p
        };
        let sol = reference_minimize(&p, &[1.0]).unwrap();
        assert!(sol.converged);
        assert!(sol.x[0].abs() < 1e-12 && sol.value.abs() < 1e-12);
    }

    #[test]
    fn reference_solver_matches_closed_form_minimizer() {
        let p = make_quadratic(&QuadraticSpec::strongly_convex(20, 0.05, 5.0, 8)).unwrap();
        let sol = reference_minimize(&p, &[0.0; 20]).unwrap();
        assert!(sol.converged);
        // Closed form x* = −Q⁻¹b solved independently by Gaussian elimination.
        let q = dense_q(&p);
        let b: Vec<f64> = q.mul_vec(p.x_star()).iter().map(|v| -v).collect();
        let closed = solve_dense(&q, &b.iter().map(|v| -v).collect::<Vec<_>>());
        assert!(linalg::dist(&sol.x, &closed) < 1e-8);
    }

    #[allow(clippy::needless_range_loop)]
    fn solve_dense(a: &Matrix, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut m: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut r = a.row(i).to_vec();
                r.push(rhs[i]);
                r
            })
            .collect();
        for k in 0..n {
            let piv = (k..n)
                .max_by(|&i, &j| m[i][k].abs().partial_cmp(&m[j][k].abs()).unwrap())
                .unwrap();
            m.swap(k, piv);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (m[i][n] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn generation_is_deterministic() {
        let a = make_quadratic(&QuadraticSpec::new(20, 2.0, 4)).unwrap();
        let b = make_quadratic(&QuadraticSpec::new(20, 2.0, 4)).unwrap();
        assert_eq!(a, b);
        let spec = LogisticSpec {
            n: 30,
            d: 4,
            lambda: 0.1,
            seed: 4,
        };
        assert_eq!(make_logistic(&spec).unwrap(), make_logistic(&spec).unwrap());
    }
}
