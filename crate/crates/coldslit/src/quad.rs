//! Quadrature rules used across the pipeline: composite Simpson for the
//! oscillatory slit integrals, Gauss–Legendre for bounded averages,
//! Gauss–Hermite for expectations against Gaussian measures.
//!
//! Node/weight sets are computed by Newton iteration on the classical
//! three-term recurrences and mirrored about zero, so symmetric rules are
//! symmetric to the last bit.

use std::f64::consts::PI;

/// Round up to the next odd count, as composite Simpson needs an even number
/// of intervals.
#[inline]
pub fn next_odd(n: usize) -> usize {
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Composite Simpson weights applied to `f` sampled on `n` uniform nodes over
/// [a, b]. `n` must be odd and ≥ 3.
pub fn simpson<T, F>(a: f64, b: f64, n: usize, mut f: F) -> T
where
    T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default + Copy,
    F: FnMut(f64) -> T,
{
    assert!(n >= 3 && n % 2 == 1, "simpson needs an odd node count >= 3, got {n}");
    let h = (b - a) / (n - 1) as f64;
    let mut acc = f(a) + f(b);
    let mut odd = T::default();
    let mut even = T::default();
    for i in 1..n - 1 {
        let x = a + h * i as f64;
        if i % 2 == 1 {
            odd = odd + f(x);
        } else {
            even = even + f(x);
        }
    }
    acc = acc + odd * 4.0 + even * 2.0;
    acc * (h / 3.0)
}

/// A rule as plain nodes and weights.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            pp = dp;
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Hermite rule for ∫ f(x) e^{−x²} dx; weights sum to √π.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    let nf = n as f64;
    let mut x = 0.0;
    for i in 0..m {
        // Stroud & Secrest initial guesses for the largest roots downward.
        x = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => x - 1.14 * nf.powf(0.426) / x,
            2 => 1.86 * x - 0.86 * nodes_guess(&nodes, n, 0),
            3 => 1.91 * x - 0.91 * nodes_guess(&nodes, n, 1),
            _ => 2.0 * x - nodes_guess(&nodes, n, i - 2),
        };
        let mut dp = 0.0;
        for _ in 0..200 {
            let (p, d) = hermite_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-14 * (1.0 + x.abs()) {
                break;
            }
        }
        // weight for the orthonormal recurrence: w = 2 / dp^2
        let w = 2.0 / (dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
}

fn nodes_guess(nodes: &[f64], n: usize, i: usize) -> f64 {
    nodes[n - 1 - i]
}

/// Orthonormalized Hermite function value and derivative at `x`.
fn hermite_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = PI.powf(-0.25);
    let mut p1 = 2.0_f64.sqrt() * x * p0;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = x * (2.0 / kf).sqrt() * p1 - ((kf - 1.0) / kf).sqrt() * p0;
        p0 = p1;
        p1 = p2;
    }
    let dp = (2.0 * n as f64).sqrt() * p0;
    (p1, dp)
}

/// Expectation of `f` under N(mean, sigma²) via an `n`-node Gauss–Hermite rule.
pub fn gauss_hermite_expectation<F: FnMut(f64) -> f64>(
    rule: &Rule,
    mean: f64,
    sigma: f64,
    mut f: F,
) -> f64 {
    let norm = PI.sqrt();
    let scale = std::f64::consts::SQRT_2 * sigma;
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| w * f(mean + scale * x))
        .sum::<f64>()
        / norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_for_cubics() {
        let v = simpson(0.0, 2.0, 5, |x| x * x * x - x + 1.0);
        assert!((v - (4.0 - 2.0 + 2.0)).abs() < 1e-13);
    }

    #[test]
    fn simpson_oscillatory_converges() {
        // integral of cos(40 x) over [0, 1] = sin(40)/40; composite error
        // bound (kappa h)^4/180 puts 801 nodes near 4e-8
        let v = simpson(0.0, 1.0, 801, |x| (40.0 * x).cos());
        assert!((v - (40.0_f64).sin() / 40.0).abs() < 1e-7);
        let v2 = simpson(0.0, 1.0, 6401, |x| (40.0 * x).cos());
        assert!((v2 - (40.0_f64).sin() / 40.0).abs() < 1e-11);
    }

    #[test]
    fn gauss_legendre_polynomial_exactness() {
        let r = gauss_legendre(8);
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree-15 monomial is integrated exactly by an 8-node rule
        let v = r.integrate(|x| x.powi(14));
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
        let odd = r.integrate(|x| x.powi(13));
        assert!(odd.abs() < 1e-16);
    }

    #[test]
    fn gauss_legendre_nodes_symmetric() {
        for n in [5, 20, 33, 64] {
            let r = gauss_legendre(n);
            for i in 0..n {
                assert_eq!(r.nodes[i], -r.nodes[n - 1 - i]);
                assert_eq!(r.weights[i], r.weights[n - 1 - i]);
            }
        }
    }

    #[test]
    fn gauss_hermite_moments() {
        for n in [4, 16, 20, 64] {
            let r = gauss_hermite(n);
            let s: f64 = r.weights.iter().sum();
            assert!((s - PI.sqrt()).abs() < 1e-12 * PI.sqrt(), "n={n}: {s}");
            // second moment of e^{-x^2} is sqrt(pi)/2
            let m2 = r.integrate(|x| x * x);
            assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-12, "n={n}: {m2}");
        }
    }

    #[test]
    fn gauss_hermite_expectation_of_gaussian_moments() {
        let r = gauss_hermite(16);
        let mean = 1.5;
        let sigma = 0.7;
        let m1 = gauss_hermite_expectation(&r, mean, sigma, |v| v);
        let m2 = gauss_hermite_expectation(&r, mean, sigma, |v| (v - mean) * (v - mean));
        assert!((m1 - mean).abs() < 1e-13);
        assert!((m2 - sigma * sigma).abs() < 1e-13);
    }

    #[test]
    fn hermite_high_order_is_stable() {
        let r = gauss_hermite(128);
        let s: f64 = r.weights.iter().sum();
        assert!((s / PI.sqrt() - 1.0).abs() < 1e-10);
        // fourth moment: 3 sqrt(pi) / 4
        let m4 = r.integrate(|x| x.powi(4));
        assert!((m4 / (0.75 * PI.sqrt()) - 1.0).abs() < 1e-10);
    }
}
