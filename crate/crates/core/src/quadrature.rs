//! Gauss rules used by the variance kernel and the orthonormality checks.

use nalgebra::DMatrix;

use crate::basis::hermite_functions;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 1 {
        return (x, 1.0);
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p0) / (x * x - 1.0))
}

/// Integrates `f` over `[a, b]` with `panels` equal Gauss–Legendre panels.
pub fn composite_gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let mut s = 0.0;
        for (x, w) in rule.0.iter().zip(&rule.1) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

/// Gauss–Hermite rule for integrals `∫ f(x) dx` where `f` decays like
/// `e^{-x²}` (for instance products of two Hermite functions).
///
/// Returns nodes and *scaled* weights `w_i e^{x_i²} = 1 / Σ_{j<n} h_j(x_i)²`,
/// so that `∫ g(x) e^{-x²} dx ≈ Σ_i w_i g(x_i)` becomes
/// `∫ f(x) dx ≈ Σ_i scaled_i f(x_i)` with `f = g e^{-x²}`.
pub fn gauss_hermite_scaled(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss–Hermite needs at least one node");
    // Jacobi matrix of the orthonormal Hermite polynomials.
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for j in 1..n {
        let b = (j as f64 / 2.0).sqrt();
        jacobi[(j, j - 1)] = b;
        jacobi[(j - 1, j)] = b;
    }
    let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    let mut buf = vec![0.0; n + 1];
    for x in nodes.iter_mut() {
        // Newton polish on h_n, using h_n' = sqrt(2n) h_{n-1} - x h_n.
        for _ in 0..3 {
            hermite_functions(*x, &mut buf);
            let hn = buf[n];
            let dhn = (2.0 * n as f64).sqrt() * buf[n - 1] - *x * hn;
            if dhn == 0.0 {
                break;
            }
            let step = hn / dhn;
            *x -= step;
            if step.abs() < 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            hermite_functions(x, &mut buf[..n]);
            1.0 / buf[..n].iter().map(|h| h * h).sum::<f64>()
        })
        .collect();
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = gauss_legendre(10);
        let s: f64 = rule.0.iter().zip(&rule.1).map(|(x, w)| w * x.powi(18)).sum();
        assert_relative_eq!(s, 2.0 / 19.0, max_relative = 1e-13);
        let total: f64 = rule.1.iter().sum();
        assert_relative_eq!(total, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn legendre_odd_order_has_zero_node() {
        let (x, w) = gauss_legendre(5);
        assert!(x[2].abs() < 1e-15);
        assert_relative_eq!(w[2], 128.0 / 225.0, max_relative = 1e-13);
    }

    #[test]
    fn composite_rule_on_exponential() {
        let rule = gauss_legendre(8);
        let v = composite_gauss(f64::exp, 0.0, 2.0, 4, &rule);
        assert_relative_eq!(v, 2f64.exp() - 1.0, max_relative = 1e-14);
    }

    #[test]
    fn hermite_rule_gaussian_moments() {
        let (x, w) = gauss_hermite_scaled(40);
        // ∫ x² e^{-x²} dx = √π / 2
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x * (-x * x).exp()).sum();
        assert_relative_eq!(s, std::f64::consts::PI.sqrt() / 2.0, max_relative = 1e-12);
    }
}
