//! Functional Breuer–Major CLT for a moving-average Gaussian process.
//!
//! `Y_t = ∫ g(t - x) W(dx)` with a compactly supported `g ≥ 0`, `∫ g² = 1`, so
//! `Cov(Y_t, Y_s) = ρ(t - s)`. For a polynomial `f` the functional is
//! `F_T(r) = T^{-1/2} ∫_{-rT}^{rT} (f(Y_t) - E f(Y_t)) dt`, `r ∈ [0, 1]`,
//! viewed in `K = L²([0, 1])`.

use serde::{Deserialize, Serialize};

use crate::chaos::{hermite_expand, HermiteCoefficients};
use crate::mc::loglog_slope;
use crate::quadrature::{composite_between, gauss_hermite, gauss_legendre, gauss_legendre_on, Rule};
use crate::rng::{normal_vec, StreamKey};
use crate::stein::{d2_lower_estimate, dictionary, imp_bound_quadrature, GaussianSampler, ImpIntegrand, VectorSampler};
use crate::tensor::HilbertSpec;
use crate::{Error, Result};

/// A polynomial `Σ a_k x^k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    /// `H_2(x) = x² - 1`.
    pub fn hermite2() -> Self {
        Self::new(vec![-1.0, 0.0, 1.0])
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, a| acc * x + a)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, a)| k as f64 * a)
                .collect(),
        )
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|a| *a != 0.0).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelShape {
    /// `g = 1_{[0,1)}`, giving `ρ(t) = (1 - |t|)₊`.
    Indicator,
    /// `g(s) = √3 (1 - |2s - 1|)` on `[0, 1]`.
    Triangular,
    /// A Gaussian bump centred at ½ with standard deviation 0.15, cut to `[0, 1)`.
    TruncatedGaussian,
}

const GAUSS_BUMP_SD: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverageModel {
    pub shape: KernelShape,
    norm: f64,
}

impl MovingAverageModel {
    pub fn new(shape: KernelShape) -> Self {
        let mut model = Self { shape, norm: 1.0 };
        if shape == KernelShape::TruncatedGaussian {
            let rule = gauss_legendre_on(64, 0.0, 1.0);
            let mass = rule.integrate(|s| model.g(s).powi(2));
            model.norm = 1.0 / mass.sqrt();
        }
        model
    }

    /// Length of the support `[0, L)`.
    pub fn support(&self) -> f64 {
        1.0
    }

    pub fn g(&self, s: f64) -> f64 {
        if !(0.0..1.0).contains(&s) {
            return 0.0;
        }
        match self.shape {
            KernelShape::Indicator => 1.0,
            KernelShape::Triangular => 3f64.sqrt() * (1.0 - (2.0 * s - 1.0).abs()),
            KernelShape::TruncatedGaussian => {
                self.norm * (-(s - 0.5).powi(2) / (2.0 * GAUSS_BUMP_SD * GAUSS_BUMP_SD)).exp()
            }
        }
    }

    fn kinks(&self) -> &'static [f64] {
        match self.shape {
            KernelShape::Triangular => &[0.5],
            _ => &[],
        }
    }

    /// `ρ(t) = ∫ g(s) g(s + |t|) ds`.
    pub fn rho(&self, t: f64) -> f64 {
        let t = t.abs();
        let l = self.support();
        if t >= l {
            return 0.0;
        }
        if self.shape == KernelShape::Indicator {
            return 1.0 - t;
        }
        let cuts: Vec<f64> = self.kinks().iter().flat_map(|k| [*k, k - t]).collect();
        composite_between(0.0, l - t, &cuts, 2, 24).integrate(|s| self.g(s) * self.g(s + t))
    }

    /// `∫_ℝ ρ(t)^q dt`.
    pub fn rho_power_integral(&self, q: usize) -> f64 {
        if self.shape == KernelShape::Indicator {
            return 2.0 / (q as f64 + 1.0);
        }
        2.0 * composite_between(0.0, self.support(), &[0.5], 4, 16).integrate(|t| self.rho(t).powi(q as i32))
    }

    /// `G★ = sup_u ∫ g(t + u) dt`, maximised over a grid of shifts.
    pub fn g_star(&self) -> f64 {
        let l = self.support();
        let cuts: Vec<f64> = self.kinks().to_vec();
        (-8..=8)
            .map(|k| {
                let u = k as f64 * l / 8.0;
                let c: Vec<f64> = cuts.iter().map(|x| x - u).chain([-u, l - u]).collect();
                composite_between(-l, 2.0 * l, &c, 1, 32).integrate(|t| self.g(t + u))
            })
            .fold(0.0, f64::max)
    }

    /// Discrete moving-average weights at step `dt`, normalised to unit variance.
    pub fn taps(&self, dt: f64) -> Result<Vec<f64>> {
        let l = self.support();
        if dt > l / 16.0 {
            return Err(Error::InvalidArgument(format!(
                "time step {dt} does not resolve the kernel support {l}"
            )));
        }
        let n = (l / dt).round() as usize;
        let w: Vec<f64> = (0..n).map(|k| self.g((k as f64 + 0.5) * dt)).collect();
        let s = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(w.into_iter().map(|x| x / s).collect())
    }
}

/// `f`, its Hermite expansion and the derived constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Subordinator {
    pub f: Polynomial,
    pub hermite: HermiteCoefficients,
}

impl Subordinator {
    pub fn new(f: Polynomial, q_max: usize) -> Result<Self> {
        let hermite = hermite_expand(|x| f.eval(x), q_max, 64)?;
        Ok(Self { f, hermite })
    }

    /// `c_q² q!` for `q ≥ 1`.
    fn weights(&self) -> Vec<(usize, f64)> {
        let mut fact = 1.0;
        let mut out = Vec::new();
        for (q, c) in self.hermite.c.iter().enumerate() {
            if q > 0 {
                fact *= q as f64;
                out.push((q, c * c * fact));
            }
        }
        out
    }

    /// `Cov(f(Y_t), f(Y_0))` for `ρ(t) = rho`.
    pub fn cov_at(&self, rho: f64) -> f64 {
        self.weights().iter().map(|(q, w)| w * rho.powi(*q as i32)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.hermite.c[0]
    }
}

/// `‖h(N)‖_{L⁴}` by Gauss–Hermite quadrature.
fn l4_norm(p: &Polynomial) -> Result<f64> {
    let rule = gauss_hermite(64);
    let m4 = rule.integrate(|x| p.eval(x).powi(4));
    if !m4.is_finite() {
        return Err(Error::NonFinite("fourth moment".into()));
    }
    Ok(m4.max(0.0).powf(0.25))
}

/// `σ² = 2 Σ c_q² q! ∫ ρ^q`.
pub fn sigma_limit(model: &MovingAverageModel, f: &Subordinator) -> Result<f64> {
    let s2: f64 = 2.0
        * f.weights()
            .iter()
            .map(|(q, w)| w * model.rho_power_integral(*q))
            .sum::<f64>();
    if s2 < -1e-12 {
        return Err(Error::Quadrature(format!("negative limiting variance {s2}")));
    }
    Ok(s2.max(0.0))
}

/// `Σ c_q² q! ∫ |ρ|^q`, a diagnostic.
pub fn m1(model: &MovingAverageModel, f: &Subordinator) -> f64 {
    // ρ ≥ 0 for nonnegative g
    f.weights()
        .iter()
        .map(|(q, w)| w * model.rho_power_integral(*q))
        .sum()
}

/// `C_T(r₁, r₂) = T⁻¹ ∫∫_{[-r₁T, r₁T]×[-r₂T, r₂T]} Cov(f(Y_t), f(Y_s)) ds dt`.
pub fn covariance_ct(model: &MovingAverageModel, f: &Subordinator, r1: f64, r2: f64, t: f64) -> f64 {
    let (a, b) = (r1 * t, r2 * t);
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let l = model.support();
    let reach = l.min(a + b);
    let overlap = |u: f64| ((a).min(u + b) - (-a).max(u - b)).max(0.0);
    let d = (a - b).abs();
    let mut cuts = vec![0.0, d, -d];
    for k in model.kinks() {
        cuts.extend([*k, -k]);
    }
    let rule = composite_between(-reach, reach, &cuts, 2, 16);
    rule.integrate(|u| overlap(u) * f.cov_at(model.rho(u))) / t
}

/// `C_∞(r₁, r₂) = σ² min(r₁, r₂)`.
pub fn covariance_cinf(sigma2: f64, r1: f64, r2: f64) -> f64 {
    sigma2 * r1.min(r2)
}

/// `(√3/2) ‖f′(N)‖₄ ‖f″(N)‖₄ G★³ / √T`.
pub fn bm_theorem_bound(model: &MovingAverageModel, f: &Polynomial, t: f64) -> Result<f64> {
    Ok(bm_constant(model, f)? / t.sqrt())
}

pub fn bm_constant(model: &MovingAverageModel, f: &Polynomial) -> Result<f64> {
    let d1 = f.derivative();
    let d2 = d1.derivative();
    Ok(0.5 * 3f64.sqrt() * l4_norm(&d1)? * l4_norm(&d2)? * model.g_star().powi(3))
}

/// Simulated paths of `F_T` on fixed `r` nodes.
#[derive(Debug, Clone)]
pub struct FtSimulator {
    taps: Vec<f64>,
    dt: f64,
    horizon: f64,
    n_cells: usize,
    f: Polynomial,
    mean: f64,
    r_nodes: Vec<f64>,
    indicator: bool,
}

impl FtSimulator {
    pub fn new(model: &MovingAverageModel, f: &Subordinator, horizon: f64, dt: f64, r_nodes: &[f64]) -> Result<Self> {
        let taps = model.taps(dt)?;
        let cells = 2.0 * horizon / dt;
        if !(horizon > 0.0) || (cells - cells.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} is not a multiple of the half step {}",
                dt / 2.0
            )));
        }
        if r_nodes.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidArgument("r nodes must lie in [0, 1]".into()));
        }
        Ok(Self {
            indicator: model.shape == KernelShape::Indicator,
            taps,
            dt,
            horizon,
            n_cells: cells.round() as usize,
            f: f.f.clone(),
            mean: f.mean(),
            r_nodes: r_nodes.to_vec(),
        })
    }

    /// One path of `(F_T(r_i))_i`.
    pub fn sample(&self, key: &StreamKey, replicate: u64) -> Vec<f64> {
        let nt = self.taps.len();
        let xi = normal_vec(&mut key.rng(replicate), self.n_cells + nt - 1);
        let mut cum = Vec::with_capacity(self.n_cells + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        let mut window = if self.indicator { xi[..nt].iter().sum::<f64>() } else { 0.0 };
        for k in 0..self.n_cells {
            // Y_k = Σ_l w_l ξ_{k-l}; ξ is offset by nt - 1
            let y = if self.indicator {
                if k > 0 {
                    window += xi[k + nt - 1] - xi[k - 1];
                }
                window * self.taps[0]
            } else {
                (0..nt).map(|l| self.taps[l] * xi[k + nt - 1 - l]).sum()
            };
            acc += self.dt * (self.f.eval(y) - self.mean);
            cum.push(acc);
        }
        let at = |x: f64| {
            let u = ((x + self.horizon) / self.dt).clamp(0.0, self.n_cells as f64);
            let k = (u.floor() as usize).min(self.n_cells - 1);
            let frac = u - k as f64;
            cum[k] + frac * (cum[k + 1] - cum[k])
        };
        let s = self.horizon.sqrt();
        self.r_nodes
            .iter()
            .map(|&r| (at(r * self.horizon) - at(-r * self.horizon)) / s)
            .collect()
    }
}

/// `F_T` in orthonormal `K` coordinates, as a sampler.
pub struct FtSampler<'a> {
    pub sim: &'a FtSimulator,
    pub spec: &'a HilbertSpec,
    pub key: StreamKey,
}

impl VectorSampler for FtSampler<'_> {
    fn dim(&self) -> usize {
        self.spec.p
    }

    fn sample(&self, replicate: u64) -> Vec<f64> {
        self.spec.to_orthonormal(&self.sim.sample(&self.key, replicate))
    }
}

/// `σ²` with `ρ` replaced by the discrete autocovariance at step `dt`.
pub fn discrete_sigma2(model: &MovingAverageModel, f: &Subordinator, dt: f64) -> Result<f64> {
    let w = model.taps(dt)?;
    let mut total = 0.0;
    for j in 0..w.len() {
        let rho: f64 = (0..w.len() - j).map(|l| w[l] * w[l + j]).sum();
        let c = f.cov_at(rho);
        total += if j == 0 { c } else { 2.0 * c };
    }
    Ok(2.0 * dt * total)
}

/// `K` nodes: Gauss–Legendre on `[0, 1]`.
pub fn k_rule(n: usize) -> Rule {
    gauss_legendre_on(n, 0.0, 1.0)
}

/// Weighted HS norm of `C_T - C_∞` on the `K` nodes.
pub fn hs_gap(rule: &Rule, ct: &[f64], sigma2: f64) -> f64 {
    let p = rule.len();
    let mut s = 0.0;
    for i in 0..p {
        for j in 0..p {
            let d = ct[i * p + j] - covariance_cinf(sigma2, rule.nodes[i], rule.nodes[j]);
            s += rule.weights[i] * rule.weights[j] * d * d;
        }
    }
    s.sqrt()
}

pub fn ct_matrix(model: &MovingAverageModel, f: &Subordinator, rule: &Rule, t: f64) -> Vec<f64> {
    let p = rule.len();
    let mut c = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            let v = covariance_ct(model, f, rule.nodes[i], rule.nodes[j], t);
            c[i * p + j] = v;
            c[j * p + i] = v;
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Majorization {
    pub horizon: f64,
    pub j_numeric: f64,
    pub j_majorant: f64,
}

/// Numerical value of the integral `J` behind the bound, against `G★⁶ T`.
///
/// The first-derivative table is `B(x, r) = ∫_{-rT}^{rT} g(t - x) dt` and the
/// second-derivative table `A(x, y, r) = ∫_{-rT}^{rT} g(t - x) g(t - y) dt`.
pub fn bm_majorization(model: &MovingAverageModel, horizon: f64, panels_per_unit: usize, r_nodes: usize) -> Result<Majorization> {
    let l = model.support();
    let lo = -horizon - l;
    let cuts: Vec<f64> = (0..=((2.0 * horizon + l) / l).ceil() as usize)
        .map(|k| lo + k as f64 * l * 0.5)
        .collect();
    let xr = composite_between(lo, horizon, &cuts, panels_per_unit.max(1), 4);
    let rr = k_rule(r_nodes);
    let (nx, nr) = (xr.len(), rr.len());
    let base = gauss_legendre(8);
    let integrate = |a: f64, b: f64, pts: &[f64], h: &dyn Fn(f64) -> f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut br = vec![a, b];
        br.extend(pts.iter().copied().filter(|p| *p > a && *p < b));
        br.sort_by(f64::total_cmp);
        br.windows(2)
            .map(|w| base.mapped(w[0], w[1]).integrate(h))
            .sum()
    };
    let kinks = model.kinks();
    let mut t1 = vec![0.0; nx * nr];
    let mut t2 = vec![0.0; nx * nx * nr];
    for (ix, &x) in xr.nodes.iter().enumerate() {
        for (ir, &r) in rr.nodes.iter().enumerate() {
            let (a, b) = ((-r * horizon).max(x), (r * horizon).min(x + l));
            let pts: Vec<f64> = kinks.iter().map(|k| x + k).collect();
            t1[ix * nr + ir] = integrate(a, b, &pts, &|t| model.g(t - x));
        }
        for (iy, &y) in xr.nodes.iter().enumerate() {
            if (x - y).abs() >= l {
                continue;
            }
            let pts: Vec<f64> = kinks.iter().flat_map(|k| [x + k, y + k]).collect();
            for (ir, &r) in rr.nodes.iter().enumerate() {
                let a = (-r * horizon).max(x).max(y);
                let b = (r * horizon).min(x + l).min(y + l);
                t2[(ix * nx + iy) * nr + ir] = integrate(a, b, &pts, &|t| model.g(t - x) * model.g(t - y));
            }
        }
    }
    let j = imp_bound_quadrature(ImpIntegrand::White {
        mu: &xr.weights,
        nu: &rr.weights,
        t1: &t1,
        t2: &t2,
    })?;
    Ok(Majorization {
        horizon,
        j_numeric: j.integral,
        j_majorant: model.g_star().powi(6) * horizon,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmExperiment {
    pub shape: KernelShape,
    pub f: Polynomial,
    pub horizons: Vec<f64>,
    pub k_nodes: usize,
    pub n_mc: usize,
    pub dt: f64,
    pub hermite_order: usize,
    pub dictionary_size: usize,
    pub majorization_horizon: f64,
}

impl Default for BmExperiment {
    fn default() -> Self {
        Self {
            shape: KernelShape::Indicator,
            f: Polynomial::hermite2(),
            horizons: vec![8.0, 16.0, 32.0, 64.0],
            k_nodes: 16,
            n_mc: 10_000,
            dt: 1.0 / 64.0,
            hermite_order: 12,
            dictionary_size: 128,
            majorization_horizon: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BmRow {
    pub horizon: f64,
    pub bound: f64,
    pub d2_lower: f64,
    pub d2_stderr: f64,
    pub hs_ct_cinf: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BmReport {
    pub sigma2: f64,
    pub constant: f64,
    pub g_star: f64,
    pub bessel_defect: f64,
    pub m1: f64,
    pub discretization_bias: f64,
    pub bound_slope: f64,
    pub majorization: Majorization,
    pub rows: Vec<BmRow>,
}

pub fn run_experiment(cfg: &BmExperiment, key: &StreamKey) -> Result<BmReport> {
    let model = MovingAverageModel::new(cfg.shape);
    let sub = Subordinator::new(cfg.f.clone(), cfg.hermite_order)?;
    let sigma2 = sigma_limit(&model, &sub)?;
    let constant = bm_constant(&model, &cfg.f)?;
    let rule = k_rule(cfg.k_nodes);
    let spec = HilbertSpec::new(cfg.k_nodes, rule.weights.clone())?;
    let dict = dictionary(cfg.k_nodes, cfg.dictionary_size, &key.named("bm-dictionary"));
    let mut rows = Vec::new();
    for (k, &t) in cfg.horizons.iter().enumerate() {
        let ct = ct_matrix(&model, &sub, &rule, t);
        let s = spec.operator_from_kernel(|i, j| ct[i * cfg.k_nodes + j]);
        let sim = FtSimulator::new(&model, &sub, t, cfg.dt, &rule.nodes)?;
        let fs = FtSampler {
            sim: &sim,
            spec: &spec,
            key: key.named("bm-paths").substream(k as u64),
        };
        let zs = GaussianSampler::new(&s, key.named("bm-gauss").substream(k as u64))?;
        let lo = d2_lower_estimate(&fs, &zs, &dict, cfg.n_mc)?;
        rows.push(BmRow {
            horizon: t,
            bound: constant / t.sqrt(),
            d2_lower: lo.value,
            d2_stderr: lo.stderr,
            hs_ct_cinf: hs_gap(&rule, &ct, sigma2),
            sigma2,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.horizon).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.bound).collect();
    let bound_slope = if rows.len() >= 2 && constant > 0.0 { loglog_slope(&xs, &ys) } else { f64::NAN };
    let bias = discrete_sigma2(&model, &sub, cfg.dt)? - discrete_sigma2(&model, &sub, cfg.dt / 2.0)?;
    Ok(BmReport {
        sigma2,
        constant,
        g_star: model.g_star(),
        bessel_defect: sub.hermite.bessel_defect(),
        m1: m1(&model, &sub),
        discretization_bias: bias,
        bound_slope,
        majorization: bm_majorization(&model, cfg.majorization_horizon, 2, 8)?,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::{reduce_replicates, Estimate, Moments};

    fn h2() -> Subordinator {
        Subordinator::new(Polynomial::hermite2(), 12).unwrap()
    }

    #[test]
    fn polynomial_basics() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.0, 3.0]);
        assert_eq!(p.eval(2.0), 1.0 - 4.0 + 24.0);
        assert_eq!(p.derivative().coeffs, vec![-2.0, 0.0, 9.0]);
        assert_eq!(p.degree(), 3);
    }

    #[test]
    fn rho_properties() {
        for shape in [KernelShape::Indicator, KernelShape::Triangular, KernelShape::TruncatedGaussian] {
            let m = MovingAverageModel::new(shape);
            assert!((m.rho(0.0) - 1.0).abs() < 1e-12, "{shape:?}");
            for k in 0..40 {
                let t = k as f64 * 0.03;
                assert!(m.rho(t) <= 1.0 + 1e-12 && m.rho(t) >= 0.0);
                assert_eq!(m.rho(t), m.rho(-t));
            }
            assert_eq!(m.rho(1.0), 0.0);
        }
        let tri = MovingAverageModel::new(KernelShape::Triangular);
        // ∫ρ = (∫g)² = 3/4
        assert!((tri.rho_power_integral(1) - 0.75).abs() < 1e-10);
        assert!((tri.g_star() - 0.5 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sigma_examples() {
        let m = MovingAverageModel::new(KernelShape::Indicator);
        assert!((sigma_limit(&m, &h2()).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        let lin = Subordinator::new(Polynomial::new(vec![0.0, 1.0]), 12).unwrap();
        assert!((sigma_limit(&m, &lin).unwrap() - 2.0).abs() < 1e-12);
        let c = Subordinator::new(Polynomial::new(vec![3.0]), 12).unwrap();
        assert!(sigma_limit(&m, &c).unwrap() < 1e-24);
        assert!(h2().hermite.bessel_defect().abs() < 1e-12);
    }

    #[test]
    fn covariance_ct_closed_form() {
        let m = MovingAverageModel::new(KernelShape::Indicator);
        let f = h2();
        for &t in &[8.0, 16.0, 64.0] {
            for &r in &[0.1, 0.5, 1.0] {
                let want = 8.0 / 3.0 * r - 1.0 / (3.0 * t);
                assert!((covariance_ct(&m, &f, r, r, t) - want).abs() < 1e-12, "{t} {r}");
            }
        }
        assert_eq!(covariance_ct(&m, &f, 0.0, 0.5, 8.0), 0.0);
        assert_eq!(covariance_cinf(8.0 / 3.0, 0.0, 0.5), 0.0);
        // off-diagonal: C_T(r1, r2) = σ² min(r1, r2) when the windows are far apart
        let v = covariance_ct(&m, &f, 0.25, 0.75, 16.0);
        assert!((v - 8.0 / 3.0 * 0.25).abs() < 1e-12);
        // the HS gap decreases like 1/T
        let rule = k_rule(16);
        let gaps: Vec<f64> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&t| hs_gap(&rule, &ct_matrix(&m, &f, &rule, t), 8.0 / 3.0))
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1] < w[0]);
            assert!((w[0] / w[1] - 2.0).abs() < 0.2);
        }
    }

    #[test]
    fn bound_constant() {
        let m = MovingAverageModel::new(KernelShape::Indicator);
        let c = bm_constant(&m, &Polynomial::hermite2()).unwrap();
        assert!((c - 2.0 * 3f64.powf(0.75)).abs() < 1e-10);
        let b8 = bm_theorem_bound(&m, &Polynomial::hermite2(), 8.0).unwrap();
        let b16 = bm_theorem_bound(&m, &Polynomial::hermite2(), 16.0).unwrap();
        assert!((b8 / b16 - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(bm_theorem_bound(&m, &Polynomial::new(vec![1.0, 2.0]), 8.0).unwrap(), 0.0);
    }

    #[test]
    fn simulated_variance_matches_ct() {
        let m = MovingAverageModel::new(KernelShape::Indicator);
        let f = h2();
        let t = 8.0;
        let nodes = [0.0, 0.5, 1.0];
        let sim = FtSimulator::new(&m, &f, t, 1.0 / 64.0, &nodes).unwrap();
        let key = StreamKey::new(3);
        let mom = reduce_replicates(
            10_000,
            || Moments::new(4),
            |acc, r| {
                let v = sim.sample(&key, r as u64);
                acc.push(&[v[0], v[1] * v[1], v[2] * v[2], v[1] * v[2]]);
            },
            |a, b| a.merge(b),
        );
        assert_eq!(mom.sum[0], 0.0);
        assert!(mom.estimate(1).agrees_with(covariance_ct(&m, &f, 0.5, 0.5, t), 3.0));
        assert!(mom.estimate(2).agrees_with(covariance_ct(&m, &f, 1.0, 1.0, t), 3.0));
        assert!(mom.estimate(3).agrees_with(covariance_ct(&m, &f, 0.5, 1.0, t), 3.0));
    }

    #[test]
    fn general_kernel_simulation_matches_ct() {
        let m = MovingAverageModel::new(KernelShape::Triangular);
        let f = Subordinator::new(Polynomial::new(vec![0.0, 1.0, 0.5]), 12).unwrap();
        let t = 4.0;
        let sim = FtSimulator::new(&m, &f, t, 1.0 / 32.0, &[1.0]).unwrap();
        let key = StreamKey::new(4);
        let xs: Vec<f64> = (0..6000).map(|r| sim.sample(&key, r).pop().unwrap().powi(2)).collect();
        let e = Estimate::from_samples(&xs);
        assert!(e.agrees_with(covariance_ct(&m, &f, 1.0, 1.0, t), 3.0), "{e:?}");
    }

    #[test]
    fn grid_checks() {
        let m = MovingAverageModel::new(KernelShape::Indicator);
        assert!(m.taps(0.1).is_err());
        assert!(FtSimulator::new(&m, &h2(), 8.0, 0.3, &[1.0]).is_err());
        let bias = discrete_sigma2(&m, &h2(), 1.0 / 64.0).unwrap() - 8.0 / 3.0;
        assert!(bias.abs() < 1e-3);
    }

    #[test]
    fn majorization_holds() {
        let m = MovingAverageModel::new(KernelShape::Indicator);
        let j = bm_majorization(&m, 4.0, 2, 8).unwrap();
        assert!(j.j_numeric <= 1.05 * j.j_majorant, "{j:?}");
        assert!(j.j_numeric > 0.3 * j.j_majorant);
    }

    #[test]
    fn d2_lower_below_bound_small() {
        let cfg = BmExperiment {
            horizons: vec![4.0, 8.0],
            n_mc: 2000,
            k_nodes: 8,
            majorization_horizon: 2.0,
            ..BmExperiment::default()
        };
        let r = run_experiment(&cfg, &StreamKey::new(1)).unwrap();
        assert!((r.bound_slope + 0.5).abs() < 1e-10);
        for row in &r.rows {
            assert!(row.d2_lower <= row.bound + 3.0 * row.d2_stderr);
        }
    }
}
