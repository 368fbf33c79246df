//! Shallow Gaussian networks `f_n(x) = n^{-1/2} Σ_j w_j τ(x w_j⁰)` as random
//! elements of `K = L²(ℝ, ν)`.
//!
//! The weights are realised as `w_j = W(e_{2j})`, `w_j⁰ = W(e_{2j+1})`, so the
//! Malliavin derivatives split into `n` independent two-by-two blocks.

use serde::Serialize;

use crate::mc::{loglog_slope, reduce_replicates, Estimate, Moments};
use crate::quadrature::{gauss_hermite, gauss_legendre, Rule};
use crate::rng::{normal_vec, StreamKey};
use crate::stein::{d2_lower_estimate, dictionary, imp_bound_quadrature, GaussianSampler, ImpIntegrand, VectorSampler};
use crate::tensor::{HilbertSpec, KOperator};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
    Square,
    /// `u² - 1`.
    Hermite2,
    Cos,
    Constant(f64),
}

/// `|τ^{(ℓ)}(u)| ≤ a + b |u|^γ` for `ℓ = 0, 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
}

impl Activation {
    pub fn tau(&self, u: f64) -> f64 {
        match self {
            Self::Tanh => u.tanh(),
            Self::Identity => u,
            Self::Square => u * u,
            Self::Hermite2 => u * u - 1.0,
            Self::Cos => u.cos(),
            Self::Constant(c) => *c,
        }
    }

    pub fn d1(&self, u: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - u.tanh().powi(2),
            Self::Identity => 1.0,
            Self::Square | Self::Hermite2 => 2.0 * u,
            Self::Cos => -u.sin(),
            Self::Constant(_) => 0.0,
        }
    }

    pub fn d2(&self, u: f64) -> f64 {
        match self {
            Self::Tanh => {
                let t = u.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Self::Identity => 0.0,
            Self::Square | Self::Hermite2 => 2.0,
            Self::Cos => -u.cos(),
            Self::Constant(_) => 0.0,
        }
    }

    pub fn envelope(&self) -> Envelope {
        let (a, b, gamma) = match self {
            Self::Tanh => (1.0, 0.0, 0.0),
            Self::Identity => (1.0, 1.0, 1.0),
            Self::Square | Self::Hermite2 => (2.0, 1.0, 2.0),
            Self::Cos => (1.0, 0.0, 0.0),
            Self::Constant(c) => (c.abs(), 0.0, 0.0),
        };
        Envelope { a, b, gamma }
    }

    /// Checks the envelope on 1000 points of `[-50, 50]`.
    pub fn check_envelope(&self) -> bool {
        let e = self.envelope();
        (0..1000).all(|k| {
            let u = -50.0 + 100.0 * k as f64 / 999.0;
            let cap = e.a + e.b * u.abs().powf(e.gamma) + 1e-12;
            self.tau(u).abs() <= cap && self.d1(u).abs() <= cap && self.d2(u).abs() <= cap
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFamily {
    /// Uniform probability measure on `[-1, 1]`.
    Uniform,
    /// Standard normal.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputMeasure {
    pub family: InputFamily,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl InputMeasure {
    pub fn new(family: InputFamily, n: usize) -> Self {
        let rule = match family {
            InputFamily::Uniform => gauss_legendre(n).scaled(0.5),
            InputFamily::Gaussian => gauss_hermite(n),
        };
        Self {
            family,
            nodes: rule.nodes,
            weights: rule.weights,
        }
    }

    /// `∫ |x|^k ν(dx)` in closed form; both families have every moment.
    pub fn abs_moment(&self, k: f64) -> f64 {
        match self.family {
            InputFamily::Uniform => 1.0 / (k + 1.0),
            InputFamily::Gaussian => gaussian_abs_moment(k),
        }
    }

    pub fn spec(&self) -> HilbertSpec {
        HilbertSpec::new(self.nodes.len(), self.weights.clone()).expect("positive weights")
    }
}

/// `E|G|^k = 2^{k/2} Γ((k+1)/2) / √π`.
pub fn gaussian_abs_moment(k: f64) -> f64 {
    2f64.powf(k / 2.0) * libm::tgamma((k + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// Values of the network on the input nodes for one draw of the `2n` weights.
pub fn sample_network(n: usize, act: Activation, nodes: &[f64], key: &StreamKey, replicate: u64) -> Vec<f64> {
    let w = normal_vec(&mut key.rng(replicate), 2 * n);
    let s = 1.0 / (n as f64).sqrt();
    nodes
        .iter()
        .map(|&x| s * (0..n).map(|j| w[2 * j] * act.tau(x * w[2 * j + 1])).sum::<f64>())
        .collect()
}

fn expect_normal(rule: &Rule, f: impl Fn(f64) -> f64) -> f64 {
    rule.integrate(f)
}

/// `𝒞(x, y) = E[τ(xZ) τ(yZ)]`.
pub fn nn_covariance(act: Activation, x: f64, y: f64) -> Result<f64> {
    let coarse = expect_normal(&gauss_hermite(64), |z| act.tau(x * z) * act.tau(y * z));
    let fine = expect_normal(&gauss_hermite(128), |z| act.tau(x * z) * act.tau(y * z));
    if (coarse - fine).abs() > 1e-8 {
        return Err(Error::Quadrature(format!(
            "covariance at ({x}, {y}) not converged: {coarse} vs {fine}"
        )));
    }
    Ok(fine)
}

/// Covariance operator of the network on `K`, in orthonormal coordinates.
pub fn covariance_operator(act: Activation, meas: &InputMeasure) -> Result<KOperator> {
    let p = meas.nodes.len();
    let mut c = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            let v = nn_covariance(act, meas.nodes[i], meas.nodes[j])?;
            let s = (meas.weights[i] * meas.weights[j]).sqrt();
            c[i * p + j] = s * v;
            c[j * p + i] = s * v;
        }
    }
    KOperator::from_flat(p, c)
}

/// Per-block `L⁴` norms at input `r`, without the `n^{-1/2}` prefactor.
///
/// `d1 = [‖D_w f‖₄, ‖D_{w⁰} f‖₄]` and `d2[a][b]` for `a, b ∈ {w, w⁰}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BlockNorms {
    pub d1: [f64; 2],
    pub d2: [[f64; 2]; 2],
}

fn l4(rule: &Rule, f: impl Fn(f64) -> f64) -> f64 {
    rule.integrate(|z| f(z).powi(4)).max(0.0).powf(0.25)
}

pub fn block_norms(act: Activation, r: f64) -> BlockNorms {
    let rule = gauss_hermite(64);
    let q = 3f64.powf(0.25);
    let t0 = l4(&rule, |z| act.tau(r * z));
    let t1 = l4(&rule, |z| act.d1(r * z));
    let t2 = l4(&rule, |z| act.d2(r * z));
    let mixed = r.abs() * t1;
    BlockNorms {
        d1: [t0, q * r.abs() * t1],
        d2: [[0.0, mixed], [mixed, q * r * r * t2]],
    }
}

/// Full `2n`-coordinate tables at input `r`, including the `n^{-1/2}` factor.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeTables {
    pub n: usize,
    /// `d1[z]`, `z ∈ 0..2n`.
    pub d1: Vec<f64>,
    /// `d2[x * 2n + z]`.
    pub d2: Vec<f64>,
}

pub fn nn_derivative_norm_tables(act: Activation, n: usize, r: f64) -> DerivativeTables {
    let b = block_norms(act, r);
    let s = 1.0 / (n as f64).sqrt();
    let dim = 2 * n;
    let mut d1 = vec![0.0; dim];
    let mut d2 = vec![0.0; dim * dim];
    for j in 0..n {
        for a in 0..2 {
            d1[2 * j + a] = s * b.d1[a];
            for c in 0..2 {
                d2[(2 * j + a) * dim + 2 * j + c] = s * b.d2[a][c];
            }
        }
    }
    DerivativeTables { n, d1, d2 }
}

fn block_integral(nu: &[f64], d1: &[[f64; 2]], d2: &[[[f64; 2]; 2]]) -> f64 {
    let nr = nu.len();
    let mut total = 0.0;
    for r1 in 0..nr {
        for r2 in 0..nr {
            let mut inner = 0.0;
            for y in 0..2 {
                let s: f64 = (0..2).map(|x| d2[r1][x][y] * d1[r2][x]).sum();
                inner += s * s;
            }
            total += nu[r1] * nu[r2] * inner;
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NnBound {
    pub integral: f64,
    pub bound: f64,
    /// The same integral with every block norm replaced by its envelope majorant.
    pub majorant: f64,
}

/// `(√3/2) √I` with `I` the reduced five-fold integral; scales as `n^{-1/2}`.
pub fn nn_theorem_bound(act: Activation, meas: &InputMeasure, n: usize) -> Result<NnBound> {
    if n == 0 {
        return Err(Error::InvalidArgument("width must be positive".into()));
    }
    let env = act.envelope();
    if !(meas.abs_moment(2.0 * env.gamma + 4.0)).is_finite() {
        return Err(Error::InvalidArgument("input measure lacks the required moment".into()));
    }
    let blocks: Vec<BlockNorms> = meas.nodes.iter().map(|&r| block_norms(act, r)).collect();
    let d1: Vec<[f64; 2]> = blocks.iter().map(|b| b.d1).collect();
    let d2: Vec<[[f64; 2]; 2]> = blocks.iter().map(|b| b.d2).collect();
    let nf = n as f64;
    // n blocks, each entry carrying n^{-1/2}
    let integral = block_integral(&meas.weights, &d1, &d2) / nf;

    let g4 = gaussian_abs_moment(4.0 * env.gamma).powf(0.25);
    let q = 3f64.powf(0.25);
    let (m1, m2): (Vec<[f64; 2]>, Vec<[[f64; 2]; 2]>) = meas
        .nodes
        .iter()
        .map(|&r| {
            let e = env.a + env.b * r.abs().powf(env.gamma) * g4;
            let a = e * 1f64.max(q * r.abs());
            let b = e * r.abs().max(q * r * r);
            ([a, a], [[b, b], [b, b]])
        })
        .unzip();
    let maj = block_integral(&meas.weights, &m1, &m2) / nf;
    let c = 0.5 * 3f64.sqrt();
    Ok(NnBound {
        integral,
        bound: c * integral.sqrt(),
        majorant: c * maj.sqrt(),
    })
}

/// Bound from the full `2n`-coordinate tables; used to cross-check the block reduction.
pub fn nn_bound_from_tables(act: Activation, meas: &InputMeasure, n: usize) -> Result<f64> {
    let dim = 2 * n;
    let nr = meas.nodes.len();
    let tabs: Vec<DerivativeTables> = meas.nodes.iter().map(|&r| nn_derivative_norm_tables(act, n, r)).collect();
    let mut t1 = vec![0.0; dim * nr];
    let mut t2 = vec![0.0; dim * dim * nr];
    for (ir, t) in tabs.iter().enumerate() {
        for x in 0..dim {
            t1[x * nr + ir] = t.d1[x];
            for y in 0..dim {
                t2[(x * dim + y) * nr + ir] = t.d2[x * dim + y];
            }
        }
    }
    let mu = vec![1.0; dim];
    Ok(imp_bound_quadrature(ImpIntegrand::White {
        mu: &mu,
        nu: &meas.weights,
        t1: &t1,
        t2: &t2,
    })?
    .bound)
}

pub struct NetworkSampler<'a> {
    pub n: usize,
    pub act: Activation,
    pub meas: &'a InputMeasure,
    pub spec: &'a HilbertSpec,
    pub key: StreamKey,
}

impl VectorSampler for NetworkSampler<'_> {
    fn dim(&self) -> usize {
        self.meas.nodes.len()
    }

    fn sample(&self, replicate: u64) -> Vec<f64> {
        self.spec
            .to_orthonormal(&sample_network(self.n, self.act, &self.meas.nodes, &self.key, replicate))
    }
}

/// MC estimates of `‖f_n‖²_K` and `⟨f_n, u⟩²_K` for a fixed `u`, against their exact values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthCheck {
    pub n: usize,
    pub trace: Estimate,
    pub trace_exact: f64,
    pub projection: Estimate,
    pub projection_exact: f64,
}

fn projection_direction(p: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..p).map(|i| 1.0 + 0.5 * (i as f64 * 0.7).sin()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn width_check(act: Activation, meas: &InputMeasure, n: usize, n_mc: usize, key: &StreamKey) -> Result<WidthCheck> {
    let s = covariance_operator(act, meas)?;
    let spec = meas.spec();
    let p = meas.nodes.len();
    let u = projection_direction(p);
    let mom = reduce_replicates(
        n_mc,
        || Moments::new(2),
        |acc, r| {
            let v = spec.to_orthonormal(&sample_network(n, act, &meas.nodes, key, r as u64));
            let tr: f64 = v.iter().map(|x| x * x).sum();
            let pr: f64 = v.iter().zip(&u).map(|(a, b)| a * b).sum();
            acc.push(&[tr, pr * pr]);
        },
        |a, b| a.merge(b),
    );
    let mut proj = 0.0;
    for i in 0..p {
        for j in 0..p {
            proj += u[i] * s.get(i, j) * u[j];
        }
    }
    Ok(WidthCheck {
        n,
        trace: mom.estimate(0),
        trace_exact: s.trace(),
        projection: mom.estimate(1),
        projection_exact: proj,
    })
}

impl WidthCheck {
    pub fn agrees_with_exact(&self) -> bool {
        self.trace.agrees_with(self.trace_exact, 3.0) && self.projection.agrees_with(self.projection_exact, 3.0)
    }

    pub fn agrees_with(&self, other: &WidthCheck) -> bool {
        let close = |a: Estimate, b: Estimate| (a.mean - b.mean).abs() <= 3.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        close(self.trace, other.trace) && close(self.projection, other.projection)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnExperiment {
    pub activation: Activation,
    pub family: InputFamily,
    pub nu_nodes: usize,
    pub widths: Vec<usize>,
    pub covariance_widths: Vec<usize>,
    pub n_mc: usize,
    pub dictionary_size: usize,
}

impl Default for NnExperiment {
    fn default() -> Self {
        Self {
            activation: Activation::Tanh,
            family: InputFamily::Uniform,
            nu_nodes: 16,
            widths: vec![4, 16, 64, 256],
            covariance_widths: vec![1, 16, 256],
            n_mc: 10_000,
            dictionary_size: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NnRow {
    pub n: usize,
    pub bound: f64,
    pub majorant: f64,
    pub d2_lower: f64,
    pub d2_stderr: f64,
    /// `‖Ŝ_n - 𝒞‖_HS` from the Monte Carlo paths.
    pub cov_width_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NnReport {
    pub envelope: Envelope,
    pub envelope_holds: bool,
    pub bound_slope: f64,
    pub width_checks: Vec<WidthCheck>,
    pub rows: Vec<NnRow>,
}

pub fn run_experiment(cfg: &NnExperiment, key: &StreamKey) -> Result<NnReport> {
    let act = cfg.activation;
    let meas = InputMeasure::new(cfg.family, cfg.nu_nodes);
    let spec = meas.spec();
    let s = covariance_operator(act, &meas)?;
    let dict = dictionary(cfg.nu_nodes, cfg.dictionary_size, &key.named("nn-dictionary"));
    let p = cfg.nu_nodes;
    let mut rows = Vec::new();
    for &n in &cfg.widths {
        let b = nn_theorem_bound(act, &meas, n)?;
        let fs = NetworkSampler {
            n,
            act,
            meas: &meas,
            spec: &spec,
            key: key.named("nn-paths").substream(n as u64),
        };
        let zs = GaussianSampler::new(&s, key.named("nn-gauss").substream(n as u64))?;
        let lo = d2_lower_estimate(&fs, &zs, &dict, cfg.n_mc)?;
        let cov = reduce_replicates(
            cfg.n_mc,
            || vec![0.0; p * p],
            |acc, r| {
                let v = fs.sample(r as u64);
                for i in 0..p {
                    for j in 0..p {
                        acc[i * p + j] += v[i] * v[j];
                    }
                }
            },
            |a, b| a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
        );
        let gap = cov
            .iter()
            .zip(s.entries())
            .map(|(c, e)| (c / cfg.n_mc as f64 - e).powi(2))
            .sum::<f64>()
            .sqrt();
        rows.push(NnRow {
            n,
            bound: b.bound,
            majorant: b.majorant,
            d2_lower: lo.value,
            d2_stderr: lo.stderr,
            cov_width_gap: gap,
        });
    }
    let width_checks = cfg
        .covariance_widths
        .iter()
        .map(|&n| width_check(act, &meas, n, cfg.n_mc, &key.named("nn-width").substream(n as u64)))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.bound).collect();
    let bound_slope = if rows.len() >= 2 && ys.iter().all(|y| *y > 0.0) { loglog_slope(&xs, &ys) } else { f64::NAN };
    Ok(NnReport {
        envelope: act.envelope(),
        envelope_holds: act.check_envelope(),
        bound_slope,
        width_checks,
        rows,
    })
}
