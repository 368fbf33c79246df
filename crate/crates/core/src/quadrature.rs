//! Gauss–Legendre and Gauss–Hermite rules.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a one-dimensional rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Affine image of a rule on `[-1, 1]` onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule {
            nodes: self.nodes.iter().map(|x| mid + half * x).collect(),
            weights: self.weights.iter().map(|w| w * half).collect(),
        }
    }

    pub fn scaled(mut self, factor: f64) -> Rule {
        for w in &mut self.weights {
            *w *= factor;
        }
        self
    }
}

/// Gauss–Legendre rule with `n` nodes on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Rule {
    assert!(n > 0, "Gauss-Legendre order must be positive");
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
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Rule { nodes, weights }
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
    let (pn, pm) = if n == 1 { (x, 1.0) } else { (p1, p0) };
    let d = n as f64 * (x * pn - pm) / (x * x - 1.0);
    (pn, d)
}

/// Gauss–Legendre rule on `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> Rule {
    gauss_legendre(n).mapped(a, b)
}

/// Composite Gauss–Legendre rule over the given breakpoints.
pub fn composite_legendre(breaks: &[f64], panels_per_piece: usize, order: usize) -> Rule {
    let base = gauss_legendre(order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for win in breaks.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b <= a {
            continue;
        }
        let h = (b - a) / panels_per_piece as f64;
        for k in 0..panels_per_piece {
            let r = base.mapped(a + k as f64 * h, a + (k + 1) as f64 * h);
            nodes.extend(r.nodes);
            weights.extend(r.weights);
        }
    }
    Rule { nodes, weights }
}

/// Composite rule on `[lo, hi]` split at every cut strictly inside the interval.
pub fn composite_between(lo: f64, hi: f64, cuts: &[f64], panels_per_piece: usize, order: usize) -> Rule {
    let mut breaks = vec![lo, hi];
    breaks.extend(cuts.iter().copied().filter(|c| *c > lo && *c < hi));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    composite_legendre(&breaks, panels_per_piece, order)
}

/// Gauss–Hermite rule for the standard normal density: `Σ w_i f(x_i) ≈ E f(N)`.
///
/// Nodes come from the Golub–Welsch eigenproblem and are polished by Newton
/// steps on the normalised Hermite recurrence; weights use the Christoffel
/// formula `w_i = 1 / Σ_k ψ_k(x_i)²`.
pub fn gauss_hermite(n: usize) -> Rule {
    assert!(n > 0, "Gauss-Hermite order must be positive");
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64).sqrt();
        jac[(k - 1, k)] = b;
        jac[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jac);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for x in nodes.iter_mut() {
        for _ in 0..5 {
            let (psi_n, psi_nm1) = normalized_hermite_pair(n, *x);
            let d = (n as f64).sqrt() * psi_nm1;
            if d == 0.0 {
                break;
            }
            let step = psi_n / d;
            *x -= step;
            if step.abs() < 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let mut s = 0.0;
            let mut p0 = 0.0;
            let mut p1 = 1.0;
            for k in 0..n {
                s += p1 * p1;
                let kf = k as f64;
                let p2 = (x * p1 - kf.sqrt() * p0) / (kf + 1.0).sqrt();
                p0 = p1;
                p1 = p2;
            }
            1.0 / s
        })
        .collect();
    Rule { nodes, weights }
}

/// `(ψ_n(x), ψ_{n-1}(x))` with `ψ_k = He_k / √k!`.
fn normalized_hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 0.0;
    let mut p1 = 1.0;
    for k in 0..n {
        let kf = k as f64;
        let p2 = (x * p1 - kf.sqrt() * p0) / (kf + 1.0).sqrt();
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}
