//! Covariance operators, Malliavin–Stein and second-order Poincaré bounds,
//! and a Monte Carlo lower estimate of the `d₂` distance.
//!
//! All `K` coordinates are orthonormal. Functionals passed to the bound
//! evaluators must be centered.

use std::f64::consts::PI;

use rand::Rng;
use serde::Serialize;

use crate::chaos::{chaos_inner, malliavin_derivative, pseudo_inverse, ChaosEvaluator, ChaosFunctional};
use crate::error::check_dim;
use crate::linalg;
use crate::mc::{map_indexed, reduce_replicates, Estimate, Moments};
use crate::rng::{normal_vec, StreamKey};
use crate::tensor::KOperator;
use crate::{Error, Result};

const MEAN_TOL: f64 = 1e-12;

/// `⟨S_F k_i, k_j⟩ = Σ_n n! ⟨f_n^{(i)}, f_n^{(j)}⟩`.
pub fn covariance_operator(f: &ChaosFunctional) -> KOperator {
    chaos_inner(f, f).expect("a functional matches itself")
}

fn check_centered(f: &ChaosFunctional) -> Result<()> {
    let norm = f.mean().iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > MEAN_TOL {
        return Err(Error::NonzeroMean(norm));
    }
    Ok(())
}

/// `⟨DF, -DL⁻¹F⟩_ℌ` at one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSample {
    pub matrix: KOperator,
}

/// Evaluates `Γ` at many draws without rebuilding the derivative kernels.
#[derive(Debug, Clone)]
pub struct GammaPlan {
    m: usize,
    p: usize,
    df: ChaosEvaluator,
    dl: ChaosEvaluator,
}

impl GammaPlan {
    pub fn new(f: &ChaosFunctional) -> Self {
        let (linv, _) = pseudo_inverse(f);
        let df = malliavin_derivative(f, 1);
        let dl = malliavin_derivative(&linv.scaled(-1.0), 1);
        Self {
            m: f.dim_h(),
            p: f.dim_v(),
            df: df.evaluator(),
            dl: dl.evaluator(),
        }
    }

    pub fn sample(&self, g: &[f64]) -> Result<GammaSample> {
        check_dim(self.m, g.len())?;
        let a = self.df.eval(g)?;
        let b = self.dl.eval(g)?;
        let p = self.p;
        let mut out = vec![0.0; p * p];
        for h in 0..self.m {
            let ra = &a[h * p..(h + 1) * p];
            let rb = &b[h * p..(h + 1) * p];
            for i in 0..p {
                for j in 0..p {
                    out[i * p + j] += ra[i] * rb[j];
                }
            }
        }
        Ok(GammaSample {
            matrix: KOperator::from_flat(p, out)?,
        })
    }
}

pub fn gamma_sample(f: &ChaosFunctional, g: &[f64]) -> Result<GammaSample> {
    GammaPlan::new(f).sample(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MsbcBound {
    /// `½ √E‖Γ - S_Z‖²_HS`.
    pub msbc: f64,
    pub msbc_stderr: f64,
    /// `½ √E‖Γ - S_F‖²_HS`.
    pub gamma_term: f64,
    pub gamma_term_stderr: f64,
    /// `½ ‖S_F - S_Z‖_HS`, exact.
    pub cov_gap: f64,
}

/// `½ √m` and its delta-method standard error from an estimate of `m`.
fn half_sqrt(e: Estimate) -> (f64, f64) {
    let v = 0.5 * e.mean.max(0.0).sqrt();
    let se = if e.mean > 0.0 {
        0.25 * e.stderr / e.mean.sqrt()
    } else {
        0.0
    };
    (v, se)
}

pub fn msbc_bound(f: &ChaosFunctional, s_z: &KOperator, n_mc: usize, key: &StreamKey) -> Result<MsbcBound> {
    check_centered(f)?;
    check_dim(f.dim_v(), s_z.dim())?;
    if n_mc < 2 {
        return Err(Error::InvalidArgument("at least two Monte Carlo replicates are needed".into()));
    }
    let s_f = covariance_operator(f);
    let plan = GammaPlan::new(f);
    let m = f.dim_h();
    let mom = reduce_replicates(
        n_mc,
        || Ok(Moments::new(2)),
        |acc: &mut Result<Moments>, r| {
            let Ok(mom) = acc else { return };
            let g = normal_vec(&mut key.rng(r as u64), m);
            match plan.sample(&g) {
                Ok(gs) => {
                    let dz = gs.matrix.sub(s_z).expect("same dimension").hs_norm();
                    let df = gs.matrix.sub(&s_f).expect("same dimension").hs_norm();
                    mom.push(&[dz * dz, df * df]);
                }
                Err(e) => *acc = Err(e),
            }
        },
        |a, b| match (a.as_mut(), b) {
            (Ok(x), Ok(y)) => x.merge(y),
            (Ok(_), Err(e)) => *a = Err(e),
            _ => {}
        },
    )?;
    let (msbc, msbc_stderr) = half_sqrt(mom.estimate(0));
    let (gamma_term, gamma_term_stderr) = half_sqrt(mom.estimate(1));
    Ok(MsbcBound {
        msbc,
        msbc_stderr,
        gamma_term,
        gamma_term_stderr,
        cov_gap: 0.5 * s_f.sub(s_z)?.hs_norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondOrderBounds {
    /// `⁴√E‖D²F‖⁴_{ℌ⊗K→ℌ} · ⁴√E‖DF‖⁴`.
    pub thm1: f64,
    /// `⁴√E‖D²F ⊗₁ D²F‖² · ⁴√E‖DF‖⁴`.
    pub thm2: f64,
    /// Draws where the per-draw contraction inequality failed beyond rounding.
    pub contraction_violations: usize,
}

/// Per-draw quantities entering the second-order bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderSample {
    pub op4: f64,
    pub contraction_sq: f64,
    pub df4: f64,
}

/// `‖D²F‖⁴` via the `m x (m p)` flattening, `‖D²F ⊗₁ D²F‖²`, and `‖DF‖⁴`.
pub fn second_order_sample(d2: &[f64], df: &[f64], m: usize, p: usize) -> SecondOrderSample {
    let sigma = linalg::max_singular_value(d2, m, m * p);
    // C[a, a', i, j] = Σ_b D[a, b, i] D[a', b, j]
    let mut csq = 0.0;
    let mut c = vec![0.0; p * p];
    for a in 0..m {
        for a2 in 0..m {
            c.iter_mut().for_each(|x| *x = 0.0);
            for b in 0..m {
                let ra = &d2[(a * m + b) * p..(a * m + b + 1) * p];
                let rb = &d2[(a2 * m + b) * p..(a2 * m + b + 1) * p];
                for i in 0..p {
                    for j in 0..p {
                        c[i * p + j] += ra[i] * rb[j];
                    }
                }
            }
            csq += c.iter().map(|x| x * x).sum::<f64>();
        }
    }
    let n2: f64 = df.iter().map(|x| x * x).sum();
    SecondOrderSample {
        op4: sigma.powi(4),
        contraction_sq: csq,
        df4: n2 * n2,
    }
}

pub fn second_order_bounds(f: &ChaosFunctional, n_mc: usize, key: &StreamKey) -> Result<SecondOrderBounds> {
    check_centered(f)?;
    if n_mc < 1 {
        return Err(Error::InvalidArgument("at least one Monte Carlo replicate is needed".into()));
    }
    let (m, p) = (f.dim_h(), f.dim_v());
    let d1 = malliavin_derivative(f, 1).evaluator();
    let d2 = malliavin_derivative(f, 2).evaluator();
    let (mom, violations) = reduce_replicates(
        n_mc,
        || (Moments::new(3), 0usize),
        |(mom, bad), r| {
            let g = normal_vec(&mut key.rng(r as u64), m);
            let a = d1.eval(&g).expect("draw has dimension m");
            let b = d2.eval(&g).expect("draw has dimension m");
            let s = second_order_sample(&b, &a, m, p);
            if s.op4 > s.contraction_sq * (1.0 + 1e-9) + 1e-300 {
                *bad += 1;
            }
            mom.push(&[s.op4, s.contraction_sq, s.df4]);
        },
        |(a, x), (b, y)| {
            a.merge(b);
            *x += y;
        },
    );
    let e = |i: usize| mom.estimate(i).mean.max(0.0).powf(0.25);
    Ok(SecondOrderBounds {
        thm1: e(0) * e(2),
        thm2: e(1) * e(2),
        contraction_violations: violations,
    })
}

/// `φ(v) = c cos(⟨v, a⟩ + b)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunctional {
    pub a: Vec<f64>,
    pub b: f64,
    pub c: f64,
}

impl TestFunctional {
    /// Amplitude chosen so that both the gradient and the Hessian are bounded by one.
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        let n = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let c = 1.0 / n.max(n * n).max(1.0);
        Self { a, b, c }
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        let s: f64 = self.a.iter().zip(v).map(|(a, x)| a * x).sum();
        self.c * (s + self.b).cos()
    }

    /// `E φ(Z)` for `Z ~ N(0, S)`.
    pub fn gaussian_mean(&self, s: &KOperator) -> f64 {
        let p = self.a.len();
        let mut q = 0.0;
        for i in 0..p {
            for j in 0..p {
                q += self.a[i] * s.get(i, j) * self.a[j];
            }
        }
        self.c * self.b.cos() * (-0.5 * q).exp()
    }
}

pub const DICTIONARY_RADII: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

/// `size` cosine functionals with directions uniform on the sphere and radii
/// cycling through [`DICTIONARY_RADII`].
pub fn dictionary(p: usize, size: usize, key: &StreamKey) -> Vec<TestFunctional> {
    (0..size)
        .map(|k| {
            let mut rng = key.rng(k as u64);
            let mut dir = normal_vec(&mut rng, p);
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let radius = DICTIONARY_RADII[k % DICTIONARY_RADII.len()];
            dir.iter_mut().for_each(|x| *x *= radius / n);
            let b = rng.random::<f64>() * 2.0 * PI;
            TestFunctional::new(dir, b)
        })
        .collect()
}

/// A source of `K`-valued samples indexed by replicate.
pub trait VectorSampler: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, replicate: u64) -> Vec<f64>;
}

/// Samples `F(W)` for a chaos functional.
#[derive(Debug, Clone)]
pub struct ChaosSampler {
    eval: ChaosEvaluator,
    key: StreamKey,
}

impl ChaosSampler {
    pub fn new(f: &ChaosFunctional, key: StreamKey) -> Self {
        Self {
            eval: f.evaluator(),
            key,
        }
    }
}

impl VectorSampler for ChaosSampler {
    fn dim(&self) -> usize {
        self.eval.functional().dim_v()
    }

    fn sample(&self, replicate: u64) -> Vec<f64> {
        let g = normal_vec(&mut self.key.rng(replicate), self.eval.functional().dim_h());
        self.eval.eval(&g).expect("draw has dimension m")
    }
}

/// `N(0, S)` through a symmetric square root of `S`.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    p: usize,
    factor: Vec<f64>,
    key: StreamKey,
}

impl GaussianSampler {
    pub fn new(s: &KOperator, key: StreamKey) -> Result<Self> {
        let p = s.dim();
        let (eig, vecs) = linalg::symmetric_eigen(s.entries(), p);
        let mut factor = vec![0.0; p * p];
        for (k, &l) in eig.iter().enumerate() {
            if l < -1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "covariance has negative eigenvalue {l}"
                )));
            }
            let r = l.max(0.0).sqrt();
            for i in 0..p {
                factor[i * p + k] = vecs[(i, k)] * r;
            }
        }
        Ok(Self { p, factor, key })
    }
}

impl VectorSampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.p
    }

    fn sample(&self, replicate: u64) -> Vec<f64> {
        let xi = normal_vec(&mut self.key.rng(replicate), self.p);
        (0..self.p)
            .map(|i| {
                self.factor[i * self.p..(i + 1) * self.p]
                    .iter()
                    .zip(&xi)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct D2Lower {
    pub value: f64,
    pub stderr: f64,
    /// Index of the selected dictionary entry.
    pub selected: usize,
}

/// Lower estimate of `d₂(F, Z)` over a finite dictionary.
///
/// Replicate `r` yields the paired difference `φ(F_r) - φ(Z_r)`. The first
/// half of the replicates picks the functional with the largest mean
/// difference; the second half estimates that difference, so the reported
/// value is free of selection bias.
pub fn d2_lower_estimate(
    f: &dyn VectorSampler,
    z: &dyn VectorSampler,
    dictionary: &[TestFunctional],
    n_mc: usize,
) -> Result<D2Lower> {
    if dictionary.is_empty() {
        return Err(Error::InvalidArgument("empty test-function dictionary".into()));
    }
    check_dim(f.dim(), z.dim())?;
    if n_mc < 4 {
        return Err(Error::InvalidArgument("at least four Monte Carlo replicates are needed".into()));
    }
    let half = n_mc / 2;
    let nd = dictionary.len();
    let pick = reduce_replicates(
        half,
        || vec![0.0; nd],
        |acc, r| {
            let (x, y) = (f.sample(r as u64), z.sample(r as u64));
            for (s, phi) in acc.iter_mut().zip(dictionary) {
                *s += phi.eval(&x) - phi.eval(&y);
            }
        },
        |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
    );
    let selected = pick
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) })
        .0;
    let phi = &dictionary[selected];
    let diffs = map_indexed(n_mc - half, |k| {
        let r = (half + k) as u64;
        phi.eval(&f.sample(r)) - phi.eval(&z.sample(r))
    });
    let e = Estimate::from_samples(&diffs);
    Ok(D2Lower {
        value: e.mean.abs(),
        stderr: e.stderr,
        selected,
    })
}

/// Input tables for the improved bounds.
#[derive(Debug, Clone, Copy)]
pub enum ImpIntegrand<'a> {
    /// Tables on a product grid: `t1[x * nr + r] = ‖D_x F(r)‖₄` and
    /// `t2[(x * nx + y) * nr + r] = ‖D²_{x,y} F(r)‖₄`, with weights `mu` on
    /// the noise parameter space and `nu` on `E`.
    White {
        mu: &'a [f64],
        nu: &'a [f64],
        t1: &'a [f64],
        t2: &'a [f64],
    },
    /// An inner integral already reduced analytically, sampled at the points
    /// of a two-dimensional rule with the given weights.
    Reduced { weights: &'a [f64], values: &'a [f64] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpBound {
    pub integral: f64,
    /// `(√3 / 2) √integral`; the covariance gap is added separately.
    pub bound: f64,
}

fn check_table(t: &[f64], name: &str) -> Result<()> {
    if let Some(x) = t.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::NonFinite(format!("{name} table entry {x}")));
    }
    Ok(())
}

pub fn imp_bound_quadrature(input: ImpIntegrand<'_>) -> Result<ImpBound> {
    let integral = match input {
        ImpIntegrand::White { mu, nu, t1, t2 } => {
            let (nx, nr) = (mu.len(), nu.len());
            check_dim(nx * nr, t1.len())?;
            check_dim(nx * nx * nr, t2.len())?;
            check_table(t1, "first-derivative")?;
            check_table(t2, "second-derivative")?;
            let mut total = 0.0;
            for r1 in 0..nr {
                for r2 in 0..nr {
                    let mut inner = 0.0;
                    for y in 0..nx {
                        let s: f64 = (0..nx)
                            .map(|x| mu[x] * t2[(x * nx + y) * nr + r1] * t1[x * nr + r2])
                            .sum();
                        inner += mu[y] * s * s;
                    }
                    total += nu[r1] * nu[r2] * inner;
                }
            }
            total
        }
        ImpIntegrand::Reduced { weights, values } => {
            check_dim(weights.len(), values.len())?;
            check_table(values, "reduced")?;
            weights.iter().zip(values).map(|(w, v)| w * v).sum()
        }
    };
    Ok(ImpBound {
        integral,
        bound: 0.5 * 3f64.sqrt() * integral.sqrt(),
    })
}

/// Evaluated bound components for one functional.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub msbc: f64,
    pub msbc_stderr: f64,
    pub msbc_triangle: Triangle,
    pub thm1: f64,
    pub thm2: f64,
    /// Draws where `‖D²F‖⁴_op > ‖D²F ⊗₁ D²F‖²`.
    pub contraction_violations: usize,
    pub d2_lower: f64,
    pub d2_lower_stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Triangle {
    pub gamma_term: f64,
    pub cov_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundConfig {
    pub n_mc_msbc: usize,
    pub n_mc_second_order: usize,
    pub n_mc_d2: usize,
    pub dictionary_size: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            n_mc_msbc: 10_000,
            n_mc_second_order: 10_000,
            n_mc_d2: 10_000,
            dictionary_size: 128,
        }
    }
}

/// All bounds for a centered functional against `Z ~ N(0, S_Z)`.
pub fn bound_report(f: &ChaosFunctional, s_z: &KOperator, cfg: &BoundConfig, key: &StreamKey) -> Result<BoundReport> {
    let ms = msbc_bound(f, s_z, cfg.n_mc_msbc, &key.named("msbc"))?;
    let so = second_order_bounds(f, cfg.n_mc_second_order, &key.named("second-order"))?;
    let dict = dictionary(f.dim_v(), cfg.dictionary_size, &key.named("dictionary"));
    let fs = ChaosSampler::new(f, key.named("d2-f"));
    let zs = GaussianSampler::new(s_z, key.named("d2-z"))?;
    let lo = d2_lower_estimate(&fs, &zs, &dict, cfg.n_mc_d2)?;
    Ok(BoundReport {
        msbc: ms.msbc,
        msbc_stderr: ms.msbc_stderr,
        msbc_triangle: Triangle {
            gamma_term: ms.gamma_term,
            cov_gap: ms.cov_gap,
        },
        thm1: so.thm1,
        thm2: so.thm2,
        contraction_violations: so.contraction_violations,
        d2_lower: lo.value,
        d2_lower_stderr: lo.stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_hermite;
    use crate::tensor::SymmetricKernel;

    fn single(order: usize, m: usize, p: usize, idx: &[usize], i: usize, x: f64) -> ChaosFunctional {
        let mut f = SymmetricKernel::zeros(order, m, p);
        f.set(idx, i, x);
        ChaosFunctional::pure(f)
    }

    fn random_f(seed: u64, m: usize, p: usize, n: usize) -> ChaosFunctional {
        ChaosFunctional::random(&mut StreamKey::new(seed).rng(0), m, p, n, 1.0)
    }

    #[test]
    fn covariance_examples() {
        let f = random_f(1, 3, 2, 1);
        let s = covariance_operator(&f);
        let k = f.kernel(1).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want: f64 = (0..3).map(|b| k.at(b, i) * k.at(b, j)).sum();
                assert!((s.get(i, j) - want).abs() < 1e-14);
            }
        }
        let mut d = ChaosFunctional::zero(3, 2, 2);
        d.set_mean(vec![1.0, 2.0]).unwrap();
        assert!(covariance_operator(&d).entries().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gamma_examples() {
        let f = random_f(2, 3, 2, 1);
        let s = covariance_operator(&f);
        let g = gamma_sample(&f, &[0.3, 1.0, -2.0]).unwrap();
        assert!(g.matrix.max_abs_diff(&s) < 1e-15);

        let f = single(2, 2, 1, &[0, 0], 0, 1.0);
        let g = gamma_sample(&f, &[1.5, 0.2]).unwrap();
        assert!((g.matrix.get(0, 0) - 2.0 * 1.5 * 1.5).abs() < 1e-14);
    }

    #[test]
    fn gamma_mean_is_covariance() {
        let f = random_f(3, 3, 2, 3);
        let s = covariance_operator(&f);
        let plan = GammaPlan::new(&f);
        let key = StreamKey::new(4);
        let mom = reduce_replicates(
            100_000,
            || Moments::new(4),
            |acc, r| {
                let g = normal_vec(&mut key.rng(r as u64), 3);
                acc.push(plan.sample(&g).unwrap().matrix.entries());
            },
            |a, b| a.merge(b),
        );
        for (k, e) in mom.estimates().iter().enumerate() {
            assert!(e.agrees_with(s.entries()[k], 3.0), "{k}: {e:?} vs {}", s.entries()[k]);
        }
    }

    #[test]
    fn msbc_examples() {
        let key = StreamKey::new(5);
        let f = random_f(6, 3, 2, 1);
        let s = covariance_operator(&f);
        let b = msbc_bound(&f, &s, 100, &key).unwrap();
        assert_eq!(b.msbc, 0.0);
        assert_eq!(b.cov_gap, 0.0);

        let f = single(2, 2, 1, &[0, 0], 0, 1.0);
        let s = covariance_operator(&f);
        let b = msbc_bound(&f, &s, 200_000, &key).unwrap();
        assert!((b.msbc - 0.5 * 8f64.sqrt()).abs() <= 3.0 * b.msbc_stderr, "{b:?}");

        let f = single(1, 2, 1, &[0], 0, 1.0);
        let b = msbc_bound(&f, &KOperator::zeros(1), 10, &key).unwrap();
        assert!((b.msbc - 0.5).abs() < 1e-15);

        let mut c = f.clone();
        c.set_mean(vec![1.0]).unwrap();
        assert!(matches!(msbc_bound(&c, &s, 10, &key), Err(Error::NonzeroMean(_))));
        assert!(msbc_bound(&f, &s, 1, &key).is_err());
    }

    #[test]
    fn triangle_decomposition() {
        let key = StreamKey::new(7);
        let f = random_f(8, 3, 2, 3);
        let s_z = KOperator::identity(2).scaled(0.7);
        let b = msbc_bound(&f, &s_z, 20_000, &key).unwrap();
        assert!(b.msbc <= b.gamma_term + b.cov_gap + 3.0 * (b.msbc_stderr + b.gamma_term_stderr));
    }

    #[test]
    fn second_order_examples() {
        let key = StreamKey::new(9);
        let f = random_f(10, 3, 2, 1);
        let b = second_order_bounds(&f, 100, &key).unwrap();
        assert_eq!((b.thm1, b.thm2), (0.0, 0.0));

        let f = single(2, 2, 1, &[0, 0], 0, 1.0);
        let b = second_order_bounds(&f, 400_000, &key).unwrap();
        let want = 2.0 * (48f64).powf(0.25);
        assert!((b.thm1 - want).abs() < 0.02 * want, "{} vs {want}", b.thm1);
        assert!(b.thm1 <= b.thm2 + 1e-12);
    }

    #[test]
    fn contraction_inequality_per_draw() {
        let key = StreamKey::new(11);
        for seed in 0..20 {
            let f = random_f(100 + seed, 3, 3, 3);
            let b = second_order_bounds(&f, 200, &key).unwrap();
            assert_eq!(b.contraction_violations, 0);
            assert!(b.thm1 <= b.thm2);
        }
    }

    #[test]
    fn dictionary_caps() {
        let dict = dictionary(3, 128, &StreamKey::new(1));
        assert_eq!(dict.len(), 128);
        for phi in &dict {
            let n = phi.a.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(phi.c * n <= 1.0 + 1e-12 && phi.c * n * n <= 1.0 + 1e-12);
            assert!((0.0..2.0 * PI).contains(&phi.b));
        }
        let zero = TestFunctional::new(vec![0.0; 3], 0.4);
        assert_eq!(zero.eval(&[1.0, 2.0, 3.0]), zero.eval(&[-5.0, 0.0, 1.0]));
    }

    #[test]
    fn gaussian_mean_matches_quadrature() {
        let rule = gauss_hermite(40);
        let phi = TestFunctional::new(vec![0.8], 1.1);
        let s = KOperator::new(vec![vec![2.5]]).unwrap();
        let q = rule.integrate(|x| phi.eval(&[x * 2.5f64.sqrt()]));
        assert!((q - phi.gaussian_mean(&s)).abs() < 1e-13);
    }

    #[test]
    fn d2_lower_examples() {
        let s = KOperator::new(vec![vec![1.0]]).unwrap();
        let a = GaussianSampler::new(&s, StreamKey::new(3)).unwrap();
        let dict = dictionary(1, 64, &StreamKey::new(4));
        let r = d2_lower_estimate(&a, &a, &dict, 1000).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(d2_lower_estimate(&a, &a, &[], 1000).is_err());

        let z = GaussianSampler::new(&s.scaled(4.0), StreamKey::new(5)).unwrap();
        let r = d2_lower_estimate(&a, &z, &dict, 20_000).unwrap();
        assert!(r.value > 0.05 && r.stderr < r.value / 5.0, "{r:?}");
        let phi = &dict[r.selected];
        let exact = (phi.gaussian_mean(&s) - phi.gaussian_mean(&s.scaled(4.0))).abs();
        assert!((r.value - exact).abs() <= 3.0 * r.stderr);
    }

    #[test]
    fn gaussian_sampler_rejects_indefinite() {
        let bad = KOperator::new(vec![vec![1.0, 0.0], vec![0.0, -1e-6]]).unwrap();
        assert!(GaussianSampler::new(&bad, StreamKey::new(1)).is_err());
        let edge = KOperator::new(vec![vec![1.0, 0.0], vec![0.0, -1e-12]]).unwrap();
        assert!(GaussianSampler::new(&edge, StreamKey::new(1)).is_ok());
    }

    #[test]
    fn d2_lower_below_msbc_for_random_functionals() {
        let cfg = BoundConfig {
            n_mc_msbc: 4000,
            n_mc_second_order: 200,
            n_mc_d2: 4000,
            dictionary_size: 128,
        };
        for seed in 0..50 {
            let f = random_f(1000 + seed, 3, 2, 3);
            let s = covariance_operator(&f);
            let r = bound_report(&f, &s, &cfg, &StreamKey::new(seed)).unwrap();
            let se = (r.msbc_stderr.powi(2) + r.d2_lower_stderr.powi(2)).sqrt();
            assert!(r.d2_lower <= r.msbc + 3.0 * se, "{seed}: {r:?}");
        }
    }

    #[test]
    fn gaussian_functional_has_zero_bounds() {
        let f = random_f(12, 3, 2, 1);
        let s = covariance_operator(&f);
        let r = bound_report(&f, &s, &BoundConfig::default(), &StreamKey::new(1)).unwrap();
        assert_eq!((r.msbc, r.thm1, r.thm2), (0.0, 0.0, 0.0));
        assert!(r.d2_lower <= 3.0 * r.d2_lower_stderr);
    }

    /// Five nested loops over an 8-point grid.
    fn nested_white(mu: &[f64], nu: &[f64], t1: impl Fn(usize, usize) -> f64, t2: impl Fn(usize, usize, usize) -> f64) -> f64 {
        let (nx, nr) = (mu.len(), nu.len());
        let mut s = 0.0;
        for r1 in 0..nr {
            for r2 in 0..nr {
                for x in 0..nx {
                    for y in 0..nx {
                        for z in 0..nx {
                            s += nu[r1] * nu[r2] * mu[x] * mu[y] * mu[z]
                                * t2(x, y, r1) * t2(z, y, r1) * t1(x, r2) * t1(z, r2);
                        }
                    }
                }
            }
        }
        s
    }

    #[test]
    fn imp_bound_white_matches_nested_loops() {
        let rule = crate::quadrature::gauss_legendre_on(8, 0.0, 2.0);
        let nu = crate::quadrature::gauss_legendre_on(8, 0.0, 1.0);
        let u = |x: f64| (-x).exp();
        let w = |x: f64| 1.0 + x * x;
        let v = |r: f64| 0.5 + r;
        let (nx, nr) = (8, 8);
        let mut t1 = vec![0.0; nx * nr];
        let mut t2 = vec![0.0; nx * nx * nr];
        for x in 0..nx {
            for r in 0..nr {
                t1[x * nr + r] = w(rule.nodes[x]) * v(nu.nodes[r]);
                for y in 0..nx {
                    t2[(x * nx + y) * nr + r] = u(rule.nodes[x]) * u(rule.nodes[y]) * v(nu.nodes[r]);
                }
            }
        }
        let b = imp_bound_quadrature(ImpIntegrand::White {
            mu: &rule.weights,
            nu: &nu.weights,
            t1: &t1,
            t2: &t2,
        })
        .unwrap();
        let oracle = nested_white(
            &rule.weights,
            &nu.weights,
            |x, r| t1[x * nr + r],
            |x, y, r| t2[(x * nx + y) * nr + r],
        );
        assert!((b.integral - oracle).abs() < 1e-12 * oracle);
        // separable: (∫u²)(∫uw)² (∫v²)²
        let iu2 = rule.integrate(|x| u(x) * u(x));
        let iuw = rule.integrate(|x| u(x) * w(x));
        let iv2 = nu.integrate(|r| v(r) * v(r));
        assert!((b.integral - iu2 * iuw * iuw * iv2 * iv2).abs() < 1e-12 * oracle);
        assert!((b.bound - 0.5 * 3f64.sqrt() * oracle.sqrt()).abs() < 1e-12);

        let zero = vec![0.0; nx * nx * nr];
        let z = imp_bound_quadrature(ImpIntegrand::White { mu: &rule.weights, nu: &nu.weights, t1: &t1, t2: &zero }).unwrap();
        assert_eq!(z.bound, 0.0);
        let mut bad = t1.clone();
        bad[3] = f64::NAN;
        assert!(imp_bound_quadrature(ImpIntegrand::White { mu: &rule.weights, nu: &nu.weights, t1: &bad, t2: &t2 }).is_err());
    }
}
