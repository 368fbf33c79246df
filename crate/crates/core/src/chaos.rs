//! `K`-valued chaos functionals and their Malliavin calculus.
//!
//! A [`ChaosFunctional`] is `F = E[F] + Σ_{n=1}^{N} I_n(f_n)` with every
//! `f_n` a [`SymmetricKernel`]. The value slot has dimension `dim_v`; for
//! derivatives it is the flattened `ℌ^{⊗k} ⊗ K` with the `K` index last.
//! Every operation here acts exactly on kernels.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;

use crate::error::check_dim;
use crate::quadrature::gauss_hermite;
use crate::rng::{normal_vec, StreamKey};
use crate::tensor::{KOperator, MultiIndexSet, SymmetricKernel};
use crate::{Error, Result};

/// Probabilists' Hermite polynomial `H_q(x)`.
pub fn hermite_eval(q: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if q == 0 {
        return 1.0;
    }
    for p in 1..q {
        let next = x * cur - p as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_0(x), …, H_q(x)` written into `out`.
pub fn hermite_table(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for p in 1..out.len().saturating_sub(1) {
        out[p + 1] = x * out[p] - p as f64 * out[p - 1];
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermiteCoefficients {
    /// `c_q = E[f(N) H_q(N)] / q!` for `q = 0..=Q`.
    pub c: Vec<f64>,
    /// `E[f(N)²]` under the same quadrature.
    pub second_moment: f64,
}

impl HermiteCoefficients {
    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    /// `E[f²] - Σ c_q² q!`, nonnegative up to rounding.
    pub fn bessel_defect(&self) -> f64 {
        let mut fact = 1.0;
        let mut captured = 0.0;
        for (q, c) in self.c.iter().enumerate() {
            if q > 0 {
                fact *= q as f64;
            }
            captured += c * c * fact;
        }
        self.second_moment - captured
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut h = vec![0.0; self.c.len()];
        hermite_table(x, &mut h);
        self.c.iter().zip(&h).map(|(c, h)| c * h).sum()
    }
}

/// Hermite coefficients up to order `q_max` by Gauss–Hermite quadrature.
pub fn hermite_expand(
    f: impl Fn(f64) -> f64,
    q_max: usize,
    quad_order: usize,
) -> Result<HermiteCoefficients> {
    if quad_order < q_max + 1 {
        return Err(Error::InvalidArgument(format!(
            "quadrature order {quad_order} is too small for Hermite order {q_max}"
        )));
    }
    let rule = gauss_hermite(quad_order);
    let mut c = vec![0.0; q_max + 1];
    let mut h = vec![0.0; q_max + 1];
    let mut second_moment = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let fx = f(x);
        if !fx.is_finite() {
            return Err(Error::NonFinite(format!("f({x})")));
        }
        hermite_table(x, &mut h);
        for q in 0..=q_max {
            c[q] += w * fx * h[q];
        }
        second_moment += w * fx * fx;
    }
    let mut fact = 1.0;
    for (q, cq) in c.iter_mut().enumerate() {
        if q > 0 {
            fact *= q as f64;
        }
        *cq /= fact;
    }
    Ok(HermiteCoefficients { c, second_moment })
}

/// One realization of `(W(h_1), …, W(h_m))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDraw {
    pub g: Vec<f64>,
    pub replicate: u64,
}

impl GaussianDraw {
    pub fn new(g: Vec<f64>) -> Self {
        Self { g, replicate: 0 }
    }

    pub fn sample(key: &StreamKey, replicate: u64, m: usize) -> Self {
        let mut rng = key.rng(replicate);
        Self {
            g: normal_vec(&mut rng, m),
            replicate,
        }
    }
}

/// `e^{-t} g + √(1 - e^{-2t}) g'` with `g'` drawn from `key` at the draw's replicate.
pub fn mehler_coupled_draw(draw: &GaussianDraw, key: &StreamKey, t: f64) -> Result<GaussianDraw> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("Mehler time {t} must be nonnegative")));
    }
    let a = (-t).exp();
    let b = (-(-2.0 * t).exp_m1()).sqrt();
    let fresh = normal_vec(&mut key.rng(draw.replicate), draw.g.len());
    Ok(GaussianDraw {
        g: draw.g.iter().zip(&fresh).map(|(x, y)| a * x + b * y).collect(),
        replicate: draw.replicate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosFunctional {
    dim_h: usize,
    dim_v: usize,
    mean: Vec<f64>,
    /// `kernels[n - 1]` has order `n`.
    kernels: Vec<SymmetricKernel>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl ChaosFunctional {
    pub fn new(
        dim_h: usize,
        dim_v: usize,
        mean: Vec<f64>,
        kernels: Vec<SymmetricKernel>,
    ) -> Result<Self> {
        check_dim(dim_v, mean.len())?;
        for (k, f) in kernels.iter().enumerate() {
            if f.order() != k + 1 {
                return Err(Error::InvalidArgument(format!(
                    "kernel in slot {} has order {}",
                    k + 1,
                    f.order()
                )));
            }
            check_dim(dim_h, f.dim_h())?;
            check_dim(dim_v, f.dim_v())?;
        }
        Ok(Self {
            dim_h,
            dim_v,
            mean,
            kernels,
        })
    }

    /// The zero functional with room for orders `1..=n_max`.
    pub fn zero(dim_h: usize, dim_v: usize, n_max: usize) -> Self {
        Self {
            dim_h,
            dim_v,
            mean: vec![0.0; dim_v],
            kernels: (1..=n_max)
                .map(|n| SymmetricKernel::zeros(n, dim_h, dim_v))
                .collect(),
        }
    }

    /// `I_n(f)` for a single kernel.
    pub fn pure(f: SymmetricKernel) -> Self {
        let n = f.order();
        let mut out = Self::zero(f.dim_h(), f.dim_v(), n);
        if n == 0 {
            out.mean = f.coeffs().to_vec();
        } else {
            out.kernels[n - 1] = f;
        }
        out
    }

    /// Random centered functional with orders `1..=n_max`, each order
    /// carrying variance `scale² / n_max` in total.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        dim_h: usize,
        dim_v: usize,
        n_max: usize,
        scale: f64,
    ) -> Self {
        let mut out = Self::zero(dim_h, dim_v, n_max);
        for (k, f) in out.kernels.iter_mut().enumerate() {
            let n = k + 1;
            let len = f.coeffs().len();
            f.coeffs_mut().copy_from_slice(&normal_vec(rng, len));
            let v = factorial(n) * f.norm_sq();
            let c = scale / (v * n_max as f64).sqrt();
            f.coeffs_mut().iter_mut().for_each(|x| *x *= c);
        }
        out
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn dim_v(&self) -> usize {
        self.dim_v
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn set_mean(&mut self, mean: Vec<f64>) -> Result<()> {
        check_dim(self.dim_v, mean.len())?;
        self.mean = mean;
        Ok(())
    }

    pub fn max_order(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernels(&self) -> &[SymmetricKernel] {
        &self.kernels
    }

    /// Kernel of order `n ≥ 1`, if present.
    pub fn kernel(&self, n: usize) -> Option<&SymmetricKernel> {
        n.checked_sub(1).and_then(|k| self.kernels.get(k))
    }

    pub fn kernel_mut(&mut self, n: usize) -> Option<&mut SymmetricKernel> {
        n.checked_sub(1).and_then(move |k| self.kernels.get_mut(k))
    }

    /// Grows the kernel list so that orders up to `n_max` exist.
    pub fn pad_to(&mut self, n_max: usize) {
        for n in self.kernels.len() + 1..=n_max {
            self.kernels
                .push(SymmetricKernel::zeros(n, self.dim_h, self.dim_v));
        }
    }

    pub fn centered(&self) -> Self {
        let mut out = self.clone();
        out.mean.iter_mut().for_each(|x| *x = 0.0);
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim_h: self.dim_h,
            dim_v: self.dim_v,
            mean: self.mean.iter().map(|x| c * x).collect(),
            kernels: self.kernels.iter().map(|f| f.scaled(c)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim_h, other.dim_h)?;
        check_dim(self.dim_v, other.dim_v)?;
        let mut out = self.clone();
        out.pad_to(other.max_order());
        for (a, b) in out.mean.iter_mut().zip(&other.mean) {
            *a += b;
        }
        for (a, b) in out.kernels.iter_mut().zip(&other.kernels) {
            a.add_assign(b);
        }
        Ok(out)
    }

    /// True when every kernel vanishes, so `F = E[F]` almost surely.
    pub fn is_deterministic(&self) -> bool {
        self.kernels.iter().all(|f| f.is_zero())
    }

    /// `E‖F - E[F]‖²_V = Σ n! ‖f_n‖²`.
    pub fn variance(&self) -> f64 {
        self.kernels
            .iter()
            .map(|f| factorial(f.order()) * f.norm_sq())
            .sum()
    }

    /// `E‖F‖²_V`.
    pub fn expected_norm_sq(&self) -> f64 {
        self.mean.iter().map(|x| x * x).sum::<f64>() + self.variance()
    }

    /// Largest coefficient difference against `other`, padding missing orders with zeros.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut d = self
            .mean
            .iter()
            .zip(&other.mean)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let n = self.max_order().max(other.max_order());
        for k in 1..=n {
            match (self.kernel(k), other.kernel(k)) {
                (Some(a), Some(b)) => {
                    for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
                        d = d.max((x - y).abs());
                    }
                }
                (Some(a), None) | (None, Some(a)) => {
                    for x in a.coeffs() {
                        d = d.max(x.abs());
                    }
                }
                (None, None) => {}
            }
        }
        d
    }

    pub fn evaluator(&self) -> ChaosEvaluator {
        ChaosEvaluator::new(self.clone())
    }

    /// Writes the kernel dump: `order, multi-index, k-index, coefficient` per line.
    /// Order 0 lines carry the mean with an empty multi-index.
    pub fn dump(&self) -> String {
        let mut s = format!("# dim_h {} dim_v {} max_order {}\n", self.dim_h, self.dim_v, self.max_order());
        for (i, x) in self.mean.iter().enumerate() {
            if *x != 0.0 {
                writeln!(s, "0, , {i}, {x:e}").unwrap();
            }
        }
        for f in &self.kernels {
            let basis = f.basis();
            for k in 0..basis.len() {
                let idx = basis
                    .index(k)
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                for i in 0..self.dim_v {
                    let x = f.at(k, i);
                    if x != 0.0 {
                        writeln!(s, "{}, {idx}, {i}, {x:e}", f.order()).unwrap();
                    }
                }
            }
        }
        s
    }

    /// Inverse of [`ChaosFunctional::dump`].
    pub fn load(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: &str| Error::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty input"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 7 || h[0] != "#" || h[1] != "dim_h" || h[3] != "dim_v" || h[5] != "max_order" {
            return Err(perr(1, "malformed header"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| perr(1, "malformed header"));
        let (dim_h, dim_v, n_max) = (num(h[2])?, num(h[4])?, num(h[6])?);
        if dim_h == 0 || dim_v == 0 {
            return Err(perr(1, "dimensions must be positive"));
        }
        let mut out = Self::zero(dim_h, dim_v, n_max);
        for (ln, line) in lines {
            let ln = ln + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 4 {
                return Err(perr(ln, "expected four comma-separated fields"));
            }
            let order: usize = parts[0].parse().map_err(|_| perr(ln, "bad order"))?;
            let idx: Vec<usize> = parts[1]
                .split_whitespace()
                .map(|v| v.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| perr(ln, "bad multi-index"))?;
            let i: usize = parts[2].parse().map_err(|_| perr(ln, "bad k-index"))?;
            let x: f64 = parts[3].parse().map_err(|_| perr(ln, "bad coefficient"))?;
            if idx.len() != order || order > n_max || i >= dim_v || idx.iter().any(|&v| v >= dim_h) {
                return Err(perr(ln, "index out of range"));
            }
            if order == 0 {
                out.mean[i] = x;
            } else {
                out.kernels[order - 1].set(&idx, i, x);
            }
        }
        Ok(out)
    }
}

/// Precomputed evaluation plan for a functional.
#[derive(Debug, Clone)]
pub struct ChaosEvaluator {
    f: ChaosFunctional,
    /// Per order, per basis element: `(h index, power)` runs and the multiplicity.
    runs: Vec<Vec<(Vec<(u16, u8)>, f64)>>,
    active: Vec<bool>,
}

impl ChaosEvaluator {
    fn new(f: ChaosFunctional) -> Self {
        let runs = f
            .kernels
            .iter()
            .map(|k| {
                let b = k.basis();
                (0..b.len())
                    .map(|j| {
                        let mut r: Vec<(u16, u8)> = Vec::new();
                        for &v in b.index(j) {
                            match r.last_mut() {
                                Some((last, c)) if *last == v => *c += 1,
                                _ => r.push((v, 1)),
                            }
                        }
                        (r, b.multiplicity(j))
                    })
                    .collect()
            })
            .collect();
        let active = f.kernels.iter().map(|k| !k.is_zero()).collect();
        Self { f, runs, active }
    }

    /// `F(g)` written into `out`.
    pub fn eval_into(&self, g: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.f.dim_h, g.len())?;
        check_dim(self.f.dim_v, out.len())?;
        out.copy_from_slice(&self.f.mean);
        let n_max = self.f.max_order();
        let mut h = vec![0.0; g.len() * (n_max + 1)];
        for (j, &x) in g.iter().enumerate() {
            hermite_table(x, &mut h[j * (n_max + 1)..(j + 1) * (n_max + 1)]);
        }
        let d = self.f.dim_v;
        for (k, kern) in self.f.kernels.iter().enumerate() {
            if !self.active[k] {
                continue;
            }
            let coeffs = kern.coeffs();
            for (b, (runs, mult)) in self.runs[k].iter().enumerate() {
                let mut prod = *mult;
                for &(j, a) in runs {
                    prod *= h[j as usize * (n_max + 1) + a as usize];
                }
                if prod == 0.0 {
                    continue;
                }
                for (o, c) in out.iter_mut().zip(&coeffs[b * d..(b + 1) * d]) {
                    *o += prod * c;
                }
            }
        }
        Ok(())
    }

    pub fn functional(&self) -> &ChaosFunctional {
        &self.f
    }

    pub fn eval(&self, g: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.f.dim_v];
        self.eval_into(g, &mut out)?;
        Ok(out)
    }
}

/// `F` evaluated at a draw, per value coordinate.
pub fn eval_chaos(f: &ChaosFunctional, draw: &GaussianDraw) -> Result<Vec<f64>> {
    f.evaluator().eval(&draw.g)
}

/// Cross-covariance `(i, j) ↦ Σ_n n! ⟨f_n^{(i)}, g_n^{(j)}⟩`.
pub fn chaos_inner(f: &ChaosFunctional, g: &ChaosFunctional) -> Result<KOperator> {
    check_dim(f.dim_h, g.dim_h)?;
    check_dim(f.dim_v, g.dim_v)?;
    let p = f.dim_v;
    let mut acc = vec![0.0; p * p];
    for (a, b) in f.kernels.iter().zip(&g.kernels) {
        let w = factorial(a.order());
        for (x, y) in acc.iter_mut().zip(a.inner_matrix(b)?) {
            *x += w * y;
        }
    }
    KOperator::from_flat(p, acc)
}

/// `E⟨F, G⟩_V`, including the means.
pub fn expected_inner(f: &ChaosFunctional, g: &ChaosFunctional) -> Result<f64> {
    let cov = chaos_inner(f, g)?;
    Ok(cov.trace() + f.mean.iter().zip(&g.mean).map(|(a, b)| a * b).sum::<f64>())
}

/// Iterated derivative `D^k F`, valued in `ℌ^{⊗k} ⊗ V` with value index
/// `((b_1 m + b_2) … ) dim_v + i`.
pub fn malliavin_derivative(f: &ChaosFunctional, k: usize) -> ChaosFunctional {
    let m = f.dim_h;
    let p = f.dim_v;
    let slots = m.pow(k as u32);
    let dv = slots * p;
    let n_out = f.max_order().saturating_sub(k);
    let mut out = ChaosFunctional::zero(m, dv, n_out);
    if k == 0 {
        return f.clone();
    }
    let mut b = vec![0usize; k];
    for src in &f.kernels {
        let n = src.order();
        if n < k || src.is_zero() {
            continue;
        }
        let factor: f64 = ((n - k + 1)..=n).map(|x| x as f64).product();
        let lower = Arc::new(MultiIndexSet::new(n - k, m));
        let mut dst = if n > k {
            SymmetricKernel::with_basis(lower.clone(), dv)
        } else {
            SymmetricKernel::zeros(0, m, dv)
        };
        let mut merged = vec![0usize; n];
        for a in 0..lower.len() {
            let alpha = lower.index(a);
            for s in 0..slots {
                let mut rest = s;
                for t in (0..k).rev() {
                    b[t] = rest % m;
                    rest /= m;
                }
                for (t, v) in alpha.iter().enumerate() {
                    merged[t] = *v as usize;
                }
                merged[n - k..].copy_from_slice(&b);
                let r = src.basis().rank_unsorted(&merged);
                let dcoeffs = dst.coeffs_mut();
                for i in 0..p {
                    dcoeffs[(a * slots + s) * p + i] = factor * src.at(r, i);
                }
            }
        }
        if n == k {
            out.mean = dst.coeffs().to_vec();
        } else {
            out.kernels[n - k - 1] = dst;
        }
    }
    out
}

/// Skorohod integral of an `ℌ ⊗ K`-valued functional with value index `b * p + i`.
pub fn divergence(v: &ChaosFunctional) -> Result<ChaosFunctional> {
    let m = v.dim_h;
    if v.dim_v % m != 0 {
        return Err(Error::InvalidArgument(format!(
            "value dimension {} is not a multiple of dim_h {m}",
            v.dim_v
        )));
    }
    let p = v.dim_v / m;
    let mut out = ChaosFunctional::zero(m, p, v.max_order() + 1);
    {
        let first = out.kernels[0].coeffs_mut();
        first.copy_from_slice(&v.mean);
    }
    for g in &v.kernels {
        let q = g.order();
        if g.is_zero() {
            continue;
        }
        let dst = &mut out.kernels[q];
        let basis = dst.basis().clone();
        let mut rest = vec![0usize; q];
        let inv = 1.0 / (q + 1) as f64;
        for kb in 0..basis.len() {
            let beta = basis.index(kb);
            for pos in 0..=q {
                let mut w = 0;
                for (t, &val) in beta.iter().enumerate() {
                    if t != pos {
                        rest[w] = val as usize;
                        w += 1;
                    }
                }
                let r = g.basis().rank(&rest);
                let b = beta[pos] as usize;
                let coeffs = dst.coeffs_mut();
                for i in 0..p {
                    coeffs[kb * p + i] += inv * g.at(r, b * p + i);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuOp {
    /// The generator `L`.
    Generator,
    /// `L⁻¹`, acting on `F - E[F]`; the mean is dropped.
    PseudoInverse,
    /// The semigroup `P_t`.
    Semigroup(f64),
}

pub fn ou_apply(f: &ChaosFunctional, op: OuOp) -> Result<ChaosFunctional> {
    let factor: Box<dyn Fn(usize) -> f64> = match op {
        OuOp::Generator => Box::new(|n| -(n as f64)),
        OuOp::PseudoInverse => Box::new(|n| -1.0 / n as f64),
        OuOp::Semigroup(t) => {
            if !(t >= 0.0) {
                return Err(Error::InvalidArgument(format!("semigroup time {t} must be nonnegative")));
            }
            Box::new(move |n| (-(n as f64) * t).exp())
        }
    };
    let mut out = f.clone();
    if !matches!(op, OuOp::Semigroup(_)) {
        out.mean.iter_mut().for_each(|x| *x = 0.0);
    }
    for k in out.kernels.iter_mut() {
        let c = factor(k.order());
        k.coeffs_mut().iter_mut().for_each(|x| *x *= c);
    }
    Ok(out)
}

/// `L⁻¹F` together with the mean that was dropped.
pub fn pseudo_inverse(f: &ChaosFunctional) -> (ChaosFunctional, Vec<f64>) {
    let g = ou_apply(f, OuOp::PseudoInverse).expect("pseudo-inverse is total");
    (g, f.mean.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{reduce_replicates, Moments};
    use crate::tensor::{symmetrize, DenseKernel};

    fn basis_kernel(order: usize, m: usize, p: usize, idx: &[usize], i: usize, x: f64) -> SymmetricKernel {
        let mut f = SymmetricKernel::zeros(order, m, p);
        f.set(idx, i, x);
        f
    }

    fn random_f(seed: u64, m: usize, p: usize, n: usize) -> ChaosFunctional {
        ChaosFunctional::random(&mut StreamKey::new(seed).rng(0), m, p, n, 1.0)
    }

    #[test]
    fn hermite_values() {
        assert_eq!(hermite_eval(2, 2.0), 3.0);
        assert_eq!(hermite_eval(0, 17.3), 1.0);
        assert_eq!(hermite_eval(1, -0.4), -0.4);
        assert_eq!(hermite_eval(3, 2.0), 2.0);
        let mut t = [0.0; 6];
        hermite_table(1.3, &mut t);
        for (q, v) in t.iter().enumerate() {
            assert!((v - hermite_eval(q, 1.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn hermite_expansions() {
        let c = hermite_expand(|x| x * x - 1.0, 6, 64).unwrap();
        for (q, v) in c.c.iter().enumerate() {
            let want = if q == 2 { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "q={q} c={v}");
        }
        let c = hermite_expand(|x| x, 5, 64).unwrap();
        assert!((c.c[1] - 1.0).abs() < 1e-12);
        assert!(c.c.iter().enumerate().all(|(q, v)| q == 1 || v.abs() < 1e-12));
        let c = hermite_expand(|x| x * x, 5, 64).unwrap();
        assert!((c.c[0] - 1.0).abs() < 1e-12 && (c.c[2] - 1.0).abs() < 1e-12);
        assert!(c.bessel_defect().abs() < 1e-10);
        assert!(hermite_expand(|x| x, 8, 8).is_err());
        let c = hermite_expand(|x: f64| x.abs(), 8, 64).unwrap();
        assert!(c.bessel_defect() > 0.0);
    }

    #[test]
    fn first_and_second_chaos_evaluate() {
        let f = ChaosFunctional::pure(basis_kernel(1, 3, 2, &[0], 0, 1.0));
        let v = eval_chaos(&f, &GaussianDraw::new(vec![1.7, -0.2, 0.5])).unwrap();
        assert_eq!(v, vec![1.7, 0.0]);
        let f = ChaosFunctional::pure(basis_kernel(2, 3, 2, &[0, 0], 0, 1.0));
        let v = eval_chaos(&f, &GaussianDraw::new(vec![2.0, 0.3, 0.5])).unwrap();
        assert!((v[0] - 3.0).abs() < 1e-15 && v[1] == 0.0);
        assert!(eval_chaos(&f, &GaussianDraw::new(vec![1.0])).is_err());
    }

    #[test]
    fn eval_matches_dense_tensor_oracle() {
        // I_2 of a symmetric f equals Σ f[a,b] g_a g_b - Σ f[a,a].
        let f = random_f(4, 3, 1, 2);
        let k = f.kernel(2).unwrap().to_dense();
        let g = [0.3, -1.1, 0.8];
        let mut want = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                want += k.get(&[a, b], 0) * g[a] * g[b];
            }
            want -= k.get(&[a, a], 0);
        }
        want += (0..3).map(|a| f.kernel(1).unwrap().get(&[a], 0) * g[a]).sum::<f64>();
        let got = eval_chaos(&f, &GaussianDraw::new(g.to_vec())).unwrap();
        assert!((got[0] - want).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_mean_and_variance() {
        let mut f = random_f(9, 3, 2, 3);
        f.set_mean(vec![0.5, -1.0]).unwrap();
        let key = StreamKey::new(31);
        let n = 100_000;
        let ev = f.evaluator();
        let mom = reduce_replicates(
            n,
            || Moments::new(3),
            |acc, r| {
                let d = GaussianDraw::sample(&key, r as u64, 3);
                let v = ev.eval(&d.g).unwrap();
                let c: f64 = v.iter().zip(f.mean()).map(|(a, b)| (a - b).powi(2)).sum();
                acc.push(&[v[0], v[1], c]);
            },
            |a, b| a.merge(b),
        );
        assert!(mom.estimate(0).agrees_with(0.5, 3.0));
        assert!(mom.estimate(1).agrees_with(-1.0, 3.0));
        assert!(mom.estimate(2).agrees_with(f.variance(), 3.0));
    }

    #[test]
    fn chaos_inner_examples_and_mc() {
        let f = ChaosFunctional::pure(basis_kernel(1, 2, 2, &[0], 0, 1.0));
        let g = ChaosFunctional::pure(basis_kernel(2, 2, 2, &[0, 1], 0, 1.0));
        assert!(chaos_inner(&f, &g).unwrap().entries().iter().all(|&x| x == 0.0));
        let c = chaos_inner(&f, &f).unwrap();
        assert_eq!(c.entries(), &[1.0, 0.0, 0.0, 0.0]);

        let f = random_f(1, 3, 2, 3);
        let g = random_f(2, 3, 2, 3);
        let exact = chaos_inner(&f, &g).unwrap();
        let key = StreamKey::new(8);
        let (ef, eg) = (f.evaluator(), g.evaluator());
        let mom = reduce_replicates(
            100_000,
            || Moments::new(1),
            |acc, r| {
                let d = GaussianDraw::sample(&key, r as u64, 3);
                let (a, b) = (ef.eval(&d.g).unwrap(), eg.eval(&d.g).unwrap());
                // projection onto a fixed pair of directions
                acc.push(&[(a[0] + 0.5 * a[1]) * (b[1] - 0.3 * b[0])]);
            },
            |a, b| a.merge(b),
        );
        let e = exact.entries();
        let want = -0.3 * e[0] + e[1] - 0.15 * e[2] + 0.5 * e[3];
        assert!(mom.estimate(0).agrees_with(want, 3.0));
    }

    #[test]
    fn derivative_examples() {
        let f = ChaosFunctional::pure(basis_kernel(1, 2, 1, &[1], 0, 3.0));
        let d = malliavin_derivative(&f, 1);
        assert!(d.is_deterministic());
        assert_eq!(d.mean(), &[0.0, 3.0]);

        let mut raw = DenseKernel::zeros(2, 2, 1);
        raw.set(&[0, 1], 0, 1.0);
        let f = ChaosFunctional::pure(symmetrize(&raw, 2).unwrap());
        let d = malliavin_derivative(&f, 1);
        let v = eval_chaos(&d, &GaussianDraw::new(vec![0.7, -1.3])).unwrap();
        // 2 * ½ (g₂ h₁ + g₁ h₂)
        assert!((v[0] - -1.3).abs() < 1e-14 && (v[1] - 0.7).abs() < 1e-14);

        let f = ChaosFunctional::pure(basis_kernel(2, 2, 1, &[0, 0], 0, 1.0));
        let d2 = malliavin_derivative(&f, 2);
        assert!(d2.is_deterministic());
        assert_eq!(d2.mean(), &[2.0, 0.0, 0.0, 0.0]);

        let f = ChaosFunctional::pure(basis_kernel(1, 2, 1, &[0], 0, 1.0));
        assert!(malliavin_derivative(&f, 2).expected_norm_sq() == 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let f = random_f(12, 3, 2, 4);
        let d = malliavin_derivative(&f, 1);
        let g = vec![0.4, -0.9, 1.2];
        let grad = eval_chaos(&d, &GaussianDraw::new(g.clone())).unwrap();
        let h = 1e-5;
        for b in 0..3 {
            let mut up = g.clone();
            let mut dn = g.clone();
            up[b] += h;
            dn[b] -= h;
            let fu = eval_chaos(&f, &GaussianDraw::new(up)).unwrap();
            let fd = eval_chaos(&f, &GaussianDraw::new(dn)).unwrap();
            for i in 0..2 {
                let fdv = (fu[i] - fd[i]) / (2.0 * h);
                let exact = grad[b * 2 + i];
                assert!((fdv - exact).abs() <= 1e-6 * exact.abs().max(1.0), "{fdv} vs {exact}");
            }
        }
    }

    #[test]
    fn divergence_examples_and_duality() {
        let mut phi = vec![0.0; 6];
        phi[2 * 2 + 1] = 1.5;
        let v = ChaosFunctional::new(3, 6, phi, vec![]).unwrap();
        let dv = divergence(&v).unwrap();
        assert_eq!(dv.kernel(1).unwrap().get(&[2], 1), 1.5);
        assert!(dv.mean().iter().all(|&x| x == 0.0));

        let f = ChaosFunctional::pure(random_f(3, 3, 2, 2).kernel(2).unwrap().clone());
        let back = divergence(&malliavin_derivative(&f, 1)).unwrap();
        assert!(back.max_abs_diff(&f.scaled(2.0)) < 1e-14);

        for seed in 0..10 {
            let g = random_f(100 + seed, 3, 2, 3);
            let v = random_f(200 + seed, 3, 6, 3);
            let lhs = expected_inner(&malliavin_derivative(&g, 1), &v).unwrap();
            let rhs = expected_inner(&g, &divergence(&v).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()), "{lhs} {rhs}");
        }
    }

    #[test]
    fn ou_identities() {
        let mut f = random_f(5, 3, 2, 4);
        f.set_mean(vec![1.0, 2.0]).unwrap();
        assert_eq!(ou_apply(&f, OuOp::Semigroup(0.0)).unwrap(), f);
        assert_eq!(ou_apply(&f, OuOp::Semigroup(3.0)).unwrap().mean(), f.mean());
        assert!(ou_apply(&f, OuOp::Semigroup(-1.0)).is_err());

        let g = ChaosFunctional::pure(f.kernel(3).unwrap().clone());
        let lg = ou_apply(&g, OuOp::Generator).unwrap();
        assert!(lg.max_abs_diff(&g.scaled(-3.0)) < 1e-15);

        let (linv, dropped) = pseudo_inverse(&f);
        assert_eq!(dropped, vec![1.0, 2.0]);
        let back = ou_apply(&linv, OuOp::Generator).unwrap();
        assert!(back.max_abs_diff(&f.centered()) < 1e-15);

        let l = ou_apply(&f, OuOp::Generator).unwrap();
        let mdd = divergence(&malliavin_derivative(&f, 1)).unwrap().scaled(-1.0);
        assert!(l.max_abs_diff(&mdd) < 1e-13);

        let ts = ou_apply(&ou_apply(&f, OuOp::Semigroup(0.3)).unwrap(), OuOp::Semigroup(0.5)).unwrap();
        assert!(ts.max_abs_diff(&ou_apply(&f, OuOp::Semigroup(0.8)).unwrap()) < 1e-15);
    }

    #[test]
    fn poincare_and_pseudo_inverse_contraction() {
        let f = random_f(6, 3, 2, 3);
        let ed = malliavin_derivative(&f, 1).expected_norm_sq();
        assert!(f.variance() <= ed);
        let lin = ChaosFunctional::pure(f.kernel(1).unwrap().clone());
        let e1 = malliavin_derivative(&lin, 1).expected_norm_sq();
        assert!((lin.variance() - e1).abs() < 1e-14);
        let (linv, _) = pseudo_inverse(&f);
        let dl = malliavin_derivative(&linv, 1);
        let df = malliavin_derivative(&f, 1);
        for n in 0..=2 {
            let a = if n == 0 { dl.mean().iter().map(|x| x * x).sum() } else { dl.kernel(n).unwrap().norm_sq() };
            let b = if n == 0 { df.mean().iter().map(|x| x * x).sum() } else { df.kernel(n).unwrap().norm_sq() };
            assert!(a <= b + 1e-15);
        }
    }

    #[test]
    fn mehler_identity() {
        let d = GaussianDraw::new(vec![0.3, -0.8, 1.1]);
        let key = StreamKey::new(77);
        assert_eq!(mehler_coupled_draw(&d, &key, 0.0).unwrap().g, d.g);
        let far = mehler_coupled_draw(&d, &key, 750.0).unwrap();
        assert_eq!(far.g, normal_vec(&mut key.rng(0), 3));
        assert!(mehler_coupled_draw(&d, &key, -0.1).is_err());

        let f = random_f(13, 3, 1, 3);
        let t = 0.4;
        let want = eval_chaos(&ou_apply(&f, OuOp::Semigroup(t)).unwrap(), &d).unwrap()[0];
        let ev = f.evaluator();
        let mom = reduce_replicates(
            100_000,
            || Moments::new(1),
            |acc, r| {
                let dr = GaussianDraw { g: d.g.clone(), replicate: r as u64 };
                let c = mehler_coupled_draw(&dr, &key, t).unwrap();
                acc.push(&ev.eval(&c.g).unwrap());
            },
            |a, b| a.merge(b),
        );
        assert!(mom.estimate(0).agrees_with(want, 3.0));
    }

    #[test]
    fn dump_round_trip() {
        let mut f = random_f(21, 3, 2, 3);
        f.set_mean(vec![0.25, 0.0]).unwrap();
        let text = f.dump();
        let back = ChaosFunctional::load(&text).unwrap();
        assert_eq!(back, f);
        assert!(ChaosFunctional::load("# dim_h 2 dim_v 1 max_order 1\n1, 5, 0, 1.0\n").is_err());
        assert!(ChaosFunctional::load("garbage").is_err());
    }
}
