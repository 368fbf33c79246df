//! Spatial averages of the parabolic Anderson model in dimension one.
//!
//! `∂_t u = ½ Δu + u Ẇ`, `u(0, ·) = 1`, with noise covariance
//! `γ₀(t - s) γ₁(x - y)`, `γ₀(t) = e^{-|t|}` and `γ₁` the standard normal
//! density. The solution is handled through its chaos expansion truncated at
//! order `N`; the n-th order covariance is
//!
//! `(1/n!) ∫_{[0,t]ⁿ} ∫_{[0,s]ⁿ} Π γ₀(r_k - r'_k) N(z𝟙; 0, I + Σ_t(r) + Σ_s(r')) dr dr'`
//!
//! where `Σ_t(r)_{kl} = t - max(r_k, r_l)` is the covariance of a Brownian
//! motion run backwards from `(t, z)`. The spatial integrals are Gaussian and
//! are done in closed form.

use serde::Serialize;

use crate::mc::{loglog_slope, reduce_replicates};
use crate::quadrature::{composite_between, gauss_legendre_on, Rule};
use crate::stein::{imp_bound_quadrature, ImpIntegrand};
use crate::tensor::MultiIndexSet;
use crate::{Error, Result};

const MAX_ORDER: usize = 4;
const OMEGA_1: f64 = 2.0;

pub fn heat_kernel(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NotPositive(t));
    }
    Ok((-0.5 * x * x / t).exp() / (2.0 * std::f64::consts::PI * t).sqrt())
}

/// Space-time noise covariance: exponential in time, Gaussian in space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseSpec {
    pub d: usize,
    pub gamma1_l1: f64,
    /// `∫ μ(dξ) / (1 + ξ²)` for the spectral measure of `γ₁`.
    pub dalang_margin: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            d: 1,
            gamma1_l1: 1.0,
            dalang_margin: 0.5 * 0.5f64.exp() * libm::erfc(std::f64::consts::FRAC_1_SQRT_2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseCheck {
    pub nonnegative: bool,
    pub dalang_margin: f64,
    /// `(a, ∫₀^a ∫₀^a γ₀)` for each checked `a`.
    pub nontriviality: Vec<(f64, f64)>,
}

impl NoiseCheck {
    pub fn holds(&self) -> bool {
        self.nonnegative
            && self.dalang_margin.is_finite()
            && self.dalang_margin > 0.0
            && self.nontriviality.iter().all(|(_, v)| *v > 0.0)
    }
}

impl NoiseSpec {
    pub fn gamma0(&self, t: f64) -> f64 {
        (-t.abs()).exp()
    }

    /// `∫₀^a γ₀`.
    pub fn gamma0_integral(&self, a: f64) -> f64 {
        -(-a).exp_m1()
    }

    /// `∫₀^a ∫₀^a γ₀(r - r') dr dr'`.
    pub fn gamma0_square_integral(&self, a: f64) -> f64 {
        2.0 * (a + (-a).exp_m1())
    }

    pub fn gamma1(&self, x: f64) -> f64 {
        (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    pub fn check(&self) -> NoiseCheck {
        let grid: Vec<f64> = (0..=64).map(|k| -8.0 + 0.25 * k as f64).collect();
        let nonnegative = grid.iter().all(|&x| self.gamma0(x) >= 0.0 && self.gamma1(x) >= 0.0);
        NoiseCheck {
            nonnegative,
            dalang_margin: self.dalang_margin,
            nontriviality: [0.1, 1.0, 10.0]
                .iter()
                .map(|&a| (a, self.gamma0_square_integral(a)))
                .collect(),
        }
    }
}

/// Truncated chaos model of the solution on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PamChaosModel {
    pub horizon: f64,
    pub n_trunc: usize,
    pub time_nodes: usize,
    pub k_nodes: usize,
    /// Constants of the derivative majorant `C(t) = a e^{bt}`.
    pub const_a: f64,
    pub const_b: f64,
}

impl Default for PamChaosModel {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            n_trunc: 3,
            time_nodes: 16,
            k_nodes: 8,
            const_a: 1.0,
            const_b: 1.0,
        }
    }
}

impl PamChaosModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::NotPositive(self.horizon));
        }
        if !(2..=MAX_ORDER).contains(&self.n_trunc) {
            return Err(Error::InvalidArgument(format!(
                "chaos truncation must lie in 2..={MAX_ORDER}, got {}",
                self.n_trunc
            )));
        }
        if self.time_nodes == 0 || self.k_nodes == 0 {
            return Err(Error::InvalidArgument("empty quadrature grid".into()));
        }
        if !(self.const_a >= 0.0) || !self.const_b.is_finite() {
            return Err(Error::InvalidArgument("majorant constants".into()));
        }
        Ok(())
    }

    pub fn k_rule(&self) -> Rule {
        gauss_legendre_on(self.k_nodes, 0.0, self.horizon)
    }

    pub fn majorant(&self, t: f64) -> f64 {
        self.const_a * (self.const_b * t).exp()
    }

    fn refined(&self) -> Self {
        Self {
            time_nodes: 2 * self.time_nodes,
            ..self.clone()
        }
    }
}

/// What to do with the Gaussian spatial factor.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Spatial {
    Point(f64),
    Whole,
    Window(f64),
}

impl Spatial {
    /// Integral of `exp(-q z² / 2)` against the target, times `ω₁` for the
    /// spatial averages.
    fn factor(self, q: f64) -> f64 {
        let root = (2.0 * std::f64::consts::PI / q).sqrt();
        match self {
            Spatial::Point(z) => (-0.5 * q * z * z).exp(),
            Spatial::Whole => OMEGA_1 * root,
            Spatial::Window(r) => {
                let tail = -(-2.0 * q * r * r).exp_m1() / (q * r);
                OMEGA_1 * (root * libm::erf(r * (2.0 * q).sqrt()) - tail)
            }
        }
    }
}

/// Overlap ratio `|{|x| ≤ R} ∩ {|x - z| ≤ R}| / |{|x| ≤ R}|` in `d = 1`.
pub fn overlap_ratio(z: f64, r: f64) -> f64 {
    (1.0 - z.abs() / (2.0 * r)).max(0.0)
}

/// Cholesky of a small SPD matrix in place; returns `(det, 𝟙ᵀ M⁻¹ 𝟙)`.
fn gaussian_stats(m: &mut [[f64; MAX_ORDER]; MAX_ORDER], n: usize) -> Option<(f64, f64)> {
    let mut det = 1.0;
    for j in 0..n {
        let mut d = m[j][j];
        for k in 0..j {
            d -= m[j][k] * m[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        let l = d.sqrt();
        m[j][j] = l;
        det *= d;
        for i in j + 1..n {
            let mut s = m[i][j];
            for k in 0..j {
                s -= m[i][k] * m[j][k];
            }
            m[i][j] = s / l;
        }
    }
    let mut y = [0.0; MAX_ORDER];
    let mut q = 0.0;
    for i in 0..n {
        let mut s = 1.0;
        for k in 0..i {
            s -= m[i][k] * y[k];
        }
        y[i] = s / m[i][i];
        q += y[i] * y[i];
    }
    Some((det, q))
}

/// Per-order contributions `[order - 1][target]`.
fn order_contributions(model: &PamChaosModel, noise: &NoiseSpec, t: f64, s: f64, targets: &[Spatial]) -> Result<Vec<Vec<f64>>> {
    let rt = gauss_legendre_on(model.time_nodes, 0.0, t);
    let rs = gauss_legendre_on(model.time_nodes, 0.0, s);
    let nt = model.time_nodes;
    let mut out = Vec::with_capacity(model.n_trunc);
    let mut factorial = 1.0;
    for n in 1..=model.n_trunc {
        factorial *= n as f64;
        let outer = MultiIndexSet::new(n, nt);
        let inner_count = nt.pow(n as u32);
        let norm = (2.0 * std::f64::consts::PI).powf(-0.5 * n as f64) / factorial;
        let sums = reduce_replicates(
            outer.len(),
            || Ok(vec![0.0; targets.len()]),
            |acc: &mut Result<Vec<f64>>, k| {
                let Ok(slots) = acc.as_mut() else { return };
                let idx = outer.index(k);
                let mut r = [0.0; MAX_ORDER];
                let mut w_outer = outer.multiplicity(k);
                for (a, &i) in idx.iter().enumerate() {
                    r[a] = rt.nodes[i as usize];
                    w_outer *= rt.weights[i as usize];
                }
                for code in 0..inner_count {
                    let mut rp = [0.0; MAX_ORDER];
                    let mut w = w_outer;
                    let mut c = code;
                    for a in 0..n {
                        let j = c % nt;
                        c /= nt;
                        rp[a] = rs.nodes[j];
                        w *= rs.weights[j] * noise.gamma0(r[a] - rp[a]);
                    }
                    let mut m = [[0.0; MAX_ORDER]; MAX_ORDER];
                    for a in 0..n {
                        for b in 0..=a {
                            let v = (t - r[a].max(r[b])) + (s - rp[a].max(rp[b]));
                            m[a][b] = v + if a == b { 1.0 } else { 0.0 };
                        }
                    }
                    let Some((det, q)) = gaussian_stats(&mut m, n) else {
                        *acc = Err(Error::Quadrature(format!("singular covariance at order {n}")));
                        return;
                    };
                    let base = w / det.sqrt();
                    for (slot, target) in slots.iter_mut().zip(targets) {
                        *slot += base * target.factor(q);
                    }
                }
            },
            |a, b| {
                match (a.as_mut(), b) {
                    (Ok(a), Ok(b)) => {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                    }
                    (Ok(_), Err(e)) => *a = Err(e),
                    _ => {}
                }
            },
        )?;
        let sums: Vec<f64> = sums.into_iter().map(|v| v * norm).collect();
        if let Some(bad) = sums.iter().find(|v| !v.is_finite()) {
            return Err(Error::Quadrature(format!("order {n} contribution {bad}")));
        }
        out.push(sums);
    }
    Ok(out)
}

fn check_times(model: &PamChaosModel, t: f64, s: f64) -> Result<()> {
    model.validate()?;
    for x in [t, s] {
        if !(x > 0.0 && x <= model.horizon) {
            return Err(Error::InvalidArgument(format!("time {x} outside (0, {}]", model.horizon)));
        }
    }
    Ok(())
}

fn truncation_ratio(orders: &[f64]) -> Result<f64> {
    let n = orders.len();
    let ratio = orders[n - 1] / orders[n - 2];
    if !(ratio < 1.0) {
        return Err(Error::Quadrature(format!("chaos truncation ratio {ratio} is not below 1")));
    }
    Ok(ratio)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PamCovariance {
    pub value: f64,
    pub orders: Vec<f64>,
    /// Last retained order over the one before it.
    pub trunc_ratio: f64,
}

/// `Cov(u(t, z), u(s, 0))` summed over the chaos orders `1..=N`.
pub fn pam_covariance(model: &PamChaosModel, noise: &NoiseSpec, t: f64, s: f64, z: f64) -> Result<PamCovariance> {
    check_times(model, t, s)?;
    let orders: Vec<f64> = order_contributions(model, noise, t, s, &[Spatial::Point(z)])?
        .into_iter()
        .map(|v| v[0])
        .collect();
    Ok(PamCovariance {
        value: orders.iter().sum(),
        trunc_ratio: truncation_ratio(&orders)?,
        orders,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialCovariances {
    pub c_inf: f64,
    /// `C_R` for each requested radius.
    pub c_r: Vec<f64>,
    pub c_inf_orders: Vec<f64>,
}

/// `C_R(t, s)` for each radius in `radii` together with `C_∞(t, s)`.
pub fn spatial_covariances(
    model: &PamChaosModel,
    noise: &NoiseSpec,
    t: f64,
    s: f64,
    radii: &[f64],
) -> Result<SpatialCovariances> {
    check_times(model, t, s)?;
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(Error::NotPositive(*r));
    }
    let mut targets = vec![Spatial::Whole];
    targets.extend(radii.iter().map(|&r| Spatial::Window(r)));
    let orders = order_contributions(model, noise, t, s, &targets)?;
    let total = |j: usize| orders.iter().map(|v| v[j]).sum::<f64>();
    Ok(SpatialCovariances {
        c_inf: total(0),
        c_r: (1..targets.len()).map(total).collect(),
        c_inf_orders: orders.iter().map(|v| v[0]).collect(),
    })
}

/// Majorant of `𝒜★_{r₁,r₂}`: `ω₁ R ‖γ₁‖₁³ (2 ∫₀^{max(r₁,r₂)} γ₀)³`.
pub fn astar_majorant(noise: &NoiseSpec, r: f64, r1: f64, r2: f64) -> f64 {
    OMEGA_1 * r * noise.gamma1_l1.powi(3) * (2.0 * noise.gamma0_integral(r1.max(r2))).powi(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpdeBound {
    pub a: f64,
    pub d2_bound: f64,
    /// `𝒜★` majorant at `r₁ = r₂ = T`, its largest value on the grid.
    pub astar_majorant: f64,
}

/// `𝒜 ≤ 16 R⁻² ∫∫ C(r₁)² C(r₂)² 𝒜★` over `[0, T]²` and `(√3/2) √𝒜`.
pub fn spde_bound(model: &PamChaosModel, noise: &NoiseSpec, r: f64) -> Result<SpdeBound> {
    model.validate()?;
    if !(noise.gamma1_l1 > 0.0 && noise.gamma1_l1.is_finite()) {
        return Err(Error::InvalidArgument(format!("‖γ₁‖₁ = {}", noise.gamma1_l1)));
    }
    if !(r > 0.0) {
        return Err(Error::NotPositive(r));
    }
    // The integrand is symmetric with a kink on the diagonal: integrate the
    // lower triangle and double.
    let outer = gauss_legendre_on(model.time_nodes, 0.0, model.horizon);
    let mut weights = Vec::new();
    let mut values = Vec::new();
    for (&r2, &w2) in outer.nodes.iter().zip(&outer.weights) {
        let inner = gauss_legendre_on(model.time_nodes, 0.0, r2);
        for (&r1, &w1) in inner.nodes.iter().zip(&inner.weights) {
            let c = model.majorant(r1) * model.majorant(r2);
            weights.push(2.0 * w1 * w2);
            values.push(16.0 / (r * r) * c * c * astar_majorant(noise, r, r1, r2));
        }
    }
    let b = imp_bound_quadrature(ImpIntegrand::Reduced {
        weights: &weights,
        values: &values,
    })?;
    Ok(SpdeBound {
        a: b.integral,
        d2_bound: b.bound,
        astar_majorant: astar_majorant(noise, r, model.horizon, model.horizon),
    })
}

/// `C_R` and `C_∞` on the `K` grid, as row-major `p × p` matrices per radius.
pub fn covariance_grids(model: &PamChaosModel, noise: &NoiseSpec, radii: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let rule = model.k_rule();
    let p = rule.len();
    let mut c_r = vec![vec![0.0; p * p]; radii.len()];
    let mut c_inf = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let sc = spatial_covariances(model, noise, rule.nodes[i], rule.nodes[j], radii)?;
            for (grid, v) in c_r.iter_mut().zip(&sc.c_r) {
                grid[i * p + j] = *v;
                grid[j * p + i] = *v;
            }
            c_inf[i * p + j] = sc.c_inf;
            c_inf[j * p + i] = sc.c_inf;
        }
    }
    Ok((c_r, c_inf))
}

/// Weighted HS norm of a difference of two kernels on the `K` nodes.
pub fn hs_gap(rule: &Rule, a: &[f64], b: &[f64]) -> f64 {
    let p = rule.len();
    let mut s = 0.0;
    for i in 0..p {
        for j in 0..p {
            let d = a[i * p + j] - b[i * p + j];
            s += rule.weights[i] * rule.weights[j] * d * d;
        }
    }
    s.sqrt()
}

/// Order-one covariance by nested space-time quadrature, independent of the
/// closed-form spatial integrals.
pub fn order_one_nested(noise: &NoiseSpec, t: f64, s: f64, z: f64, time_nodes: usize, space_nodes: usize) -> Result<f64> {
    let rt = gauss_legendre_on(time_nodes, 0.0, t);
    let mut total = 0.0;
    for (&r, &wr) in rt.nodes.iter().zip(&rt.weights) {
        let rs = composite_between(0.0, s, &[r], 1, time_nodes);
        for (&rp, &wrp) in rs.nodes.iter().zip(&rs.weights) {
            let (a, b) = (t - r, s - rp);
            let ys = gauss_legendre_on(space_nodes, z - 8.0 * a.sqrt(), z + 8.0 * a.sqrt());
            let yps = gauss_legendre_on(space_nodes, -8.0 * b.sqrt(), 8.0 * b.sqrt());
            let mut inner = 0.0;
            for (&y, &wy) in ys.nodes.iter().zip(&ys.weights) {
                let py = heat_kernel(a, z - y)?;
                let row: f64 = yps
                    .nodes
                    .iter()
                    .zip(&yps.weights)
                    .map(|(&yp, &wyp)| wyp * heat_kernel(b, yp).unwrap_or(0.0) * noise.gamma1(y - yp))
                    .sum();
                inner += wy * py * row;
            }
            total += wr * wrp * noise.gamma0(r - rp) * inner;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpdeExperiment {
    pub model: PamChaosModel,
    pub radii: Vec<f64>,
}

impl Default for SpdeExperiment {
    fn default() -> Self {
        Self {
            model: PamChaosModel::default(),
            radii: vec![2.0, 4.0, 8.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpdeRow {
    pub radius: f64,
    pub a: f64,
    pub d2_bound: f64,
    pub hs_cr_cinf: f64,
    pub trunc_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpdeReport {
    pub noise: NoiseCheck,
    /// Per-order contributions to `C_∞(T, T)`.
    pub c_inf_orders: Vec<f64>,
    pub trunc_ratio: f64,
    /// Relative change of `Cov(u(T, 0), u(T, 0))` when the time grids double.
    pub resolution_change: f64,
    /// Largest gap between the closed-form `𝒜★` and the explicit substitution.
    pub astar_gap: f64,
    pub bound_slope: f64,
    pub rows: Vec<SpdeRow>,
}

pub fn run_experiment(cfg: &SpdeExperiment) -> Result<SpdeReport> {
    let model = &cfg.model;
    model.validate()?;
    let noise = NoiseSpec::default();
    let t = model.horizon;
    let top = spatial_covariances(model, &noise, t, t, &[])?;
    let trunc_ratio = truncation_ratio(&top.c_inf_orders)?;
    let coarse = pam_covariance(model, &noise, t, t, 0.0)?.value;
    let fine = pam_covariance(&model.refined(), &noise, t, t, 0.0)?.value;
    let (c_r, c_inf) = covariance_grids(model, &noise, &cfg.radii)?;
    let rule = model.k_rule();
    let mut rows = Vec::new();
    let mut astar_gap: f64 = 0.0;
    for (k, &r) in cfg.radii.iter().enumerate() {
        let b = spde_bound(model, &noise, r)?;
        for &r1 in &rule.nodes {
            for &r2 in &rule.nodes {
                let closed = 2.0 * r * (2.0 * (1.0 - (-r1.max(r2)).exp())).powi(3);
                let gap = (astar_majorant(&noise, r, r1, r2) - closed).abs() / closed.abs().max(1e-300);
                astar_gap = astar_gap.max(gap);
            }
        }
        rows.push(SpdeRow {
            radius: r,
            a: b.a,
            d2_bound: b.d2_bound,
            hs_cr_cinf: hs_gap(&rule, &c_r[k], &c_inf),
            trunc_ratio,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.radius).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.d2_bound).collect();
    Ok(SpdeReport {
        noise: noise.check(),
        c_inf_orders: top.c_inf_orders,
        trunc_ratio,
        resolution_change: (fine - coarse).abs() / fine.abs(),
        astar_gap,
        bound_slope: loglog_slope(&xs, &ys),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PamChaosModel {
        PamChaosModel {
            time_nodes: 8,
            k_nodes: 4,
            ..PamChaosModel::default()
        }
    }

    #[test]
    fn heat_kernel_basics() {
        for t in [0.1, 1.0, 3.0] {
            let p0 = heat_kernel(t, 0.0).unwrap();
            assert!((p0 - 1.0 / (2.0 * std::f64::consts::PI * t).sqrt()).abs() < 1e-15);
            let l = 12.0 * t.sqrt();
            let rule = composite_between(-l, l, &[], 8, 24);
            let mass = rule.integrate(|x| heat_kernel(t, x).unwrap());
            assert!((mass - 1.0).abs() < 1e-10);
        }
        assert!(heat_kernel(0.0, 1.0).is_err());
        assert!(heat_kernel(-1.0, 0.0).is_err());
    }

    #[test]
    fn chapman_kolmogorov() {
        for (s, t, x) in [(0.3f64, 0.7f64, 0.5f64), (1.0, 2.0, -1.5), (0.05, 0.4, 0.0)] {
            let l = 12.0 * (s + t).sqrt() + x.abs();
            let rule = composite_between(-l, l, &[0.0, x], 8, 24);
            let lhs = rule.integrate(|y| heat_kernel(s, x - y).unwrap() * heat_kernel(t, y).unwrap());
            assert!((lhs - heat_kernel(s + t, x).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn noise_checks() {
        let noise = NoiseSpec::default();
        let c = noise.check();
        assert!(c.holds());
        // Spectral density e^{-ξ²/2} / (2π) against 1 / (1 + ξ²).
        let rule = composite_between(-40.0, 40.0, &[0.0], 16, 24);
        let direct = rule.integrate(|x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI) / (1.0 + x * x));
        assert!((direct - noise.dalang_margin).abs() < 1e-12);
        for (a, v) in c.nontriviality {
            let r = gauss_legendre_on(32, 0.0, a);
            let num: f64 = r
                .nodes
                .iter()
                .zip(&r.weights)
                .map(|(&x, &wx)| wx * composite_between(0.0, a, &[x], 2, 24).integrate(|y| noise.gamma0(x - y)))
                .sum();
            assert!((num - v).abs() < 1e-9 * v.max(1.0));
        }
        let l1 = composite_between(-12.0, 12.0, &[], 8, 24).integrate(|x| noise.gamma1(x));
        assert!((l1 - noise.gamma1_l1).abs() < 1e-12);
    }

    #[test]
    fn overlap_ratio_endpoints() {
        assert_eq!(overlap_ratio(0.0, 3.0), 1.0);
        assert_eq!(overlap_ratio(6.0, 3.0), 0.0);
        assert_eq!(overlap_ratio(-6.0, 3.0), 0.0);
        assert!((overlap_ratio(1.5, 3.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn spatial_factor_matches_quadrature() {
        for q in [0.2, 1.0, 3.7] {
            let g = |z: f64| (-0.5 * q * z * z).exp();
            let whole = composite_between(-30.0, 30.0, &[0.0], 16, 24).integrate(g);
            assert!((Spatial::Whole.factor(q) - OMEGA_1 * whole).abs() < 1e-12);
            for r in [0.5, 2.0, 8.0] {
                let win = composite_between(-2.0 * r, 2.0 * r, &[0.0], 16, 24).integrate(|z| g(z) * overlap_ratio(z, r));
                assert!((Spatial::Window(r).factor(q) - OMEGA_1 * win).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn order_one_matches_nested_quadrature() {
        let noise = NoiseSpec::default();
        let model = PamChaosModel::default();
        for (t, s, z) in [(1.0, 1.0, 0.0), (1.0, 0.6, 0.8), (0.4, 0.9, -1.2)] {
            let c = pam_covariance(&model, &noise, t, s, z).unwrap();
            let oracle = order_one_nested(&noise, t, s, z, 32, 48).unwrap();
            let rel = (c.orders[0] - oracle).abs() / oracle;
            assert!(rel < 2e-3, "t={t} s={s} z={z} rel={rel}");
        }
    }

    #[test]
    fn covariance_symmetry_and_signs() {
        let noise = NoiseSpec::default();
        let model = small();
        let a = pam_covariance(&model, &noise, 0.8, 0.5, 1.3).unwrap();
        let b = pam_covariance(&model, &noise, 0.5, 0.8, -1.3).unwrap();
        assert!((a.value - b.value).abs() < 1e-12 * a.value);
        assert!(a.orders.iter().all(|v| *v > 0.0));
        assert!(a.trunc_ratio < 1.0);
    }

    #[test]
    fn covariance_decays_in_space() {
        let noise = NoiseSpec::default();
        let model = small();
        let c0 = pam_covariance(&model, &noise, 1.0, 1.0, 0.0).unwrap().value;
        let mut prev = c0;
        for z in [2.0f64, 4.0, 8.0] {
            let c = pam_covariance(&model, &noise, 1.0, 1.0, z).unwrap().value;
            assert!(c < prev);
            // 𝟙ᵀM⁻¹𝟙 ≥ 1 / (1 + t + s) for every quadrature point.
            assert!(c <= c0 * (-z * z / 6.0).exp() * (1.0 + 1e-12));
            prev = c;
        }
    }

    #[test]
    fn window_below_whole_line_and_converging() {
        let noise = NoiseSpec::default();
        let model = small();
        let radii = [2.0, 4.0, 8.0, 16.0];
        let sc = spatial_covariances(&model, &noise, 1.0, 0.7, &radii).unwrap();
        let mut prev = f64::INFINITY;
        for (r, c) in radii.iter().zip(&sc.c_r) {
            assert!(*c <= sc.c_inf);
            let gap = sc.c_inf - c;
            assert!(gap <= prev);
            // Defect of the overlap ratio is |z| / 2R, so the gap is O(1/R).
            assert!(gap * r < 2.0 * sc.c_inf);
            prev = gap;
        }
        assert!(spatial_covariances(&model, &noise, 1.0, 0.7, &[0.0]).is_err());
    }

    #[test]
    fn bound_scaling_and_majorant() {
        let noise = NoiseSpec::default();
        let model = PamChaosModel::default();
        let b1 = spde_bound(&model, &noise, 2.0).unwrap();
        let b4 = spde_bound(&model, &noise, 8.0).unwrap();
        assert!((b4.d2_bound / b1.d2_bound - 0.5).abs() < 1e-12);
        let closed = 2.0 * 2.0 * (2.0 * (1.0 - (-1.0f64).exp())).powi(3);
        assert!((b1.astar_majorant - closed).abs() < 1e-12 * closed);
        let zero = PamChaosModel { const_a: 0.0, ..model.clone() };
        assert_eq!(spde_bound(&zero, &noise, 2.0).unwrap().d2_bound, 0.0);
        let bad = NoiseSpec { gamma1_l1: 0.0, ..noise };
        assert!(spde_bound(&model, &bad, 2.0).is_err());
    }

    #[test]
    fn bound_integral_against_product_rule() {
        // Closed form in r₁, r₂ via a fine product rule split at the diagonal.
        let noise = NoiseSpec::default();
        let model = PamChaosModel::default();
        let r = 3.0;
        let outer = gauss_legendre_on(40, 0.0, 1.0);
        let total: f64 = outer
            .nodes
            .iter()
            .zip(&outer.weights)
            .map(|(&r1, &w1)| {
                w1 * composite_between(0.0, 1.0, &[r1], 1, 40).integrate(|r2| {
                    let c = model.majorant(r1) * model.majorant(r2);
                    16.0 / (r * r) * c * c * astar_majorant(&noise, r, r1, r2)
                })
            })
            .sum();
        let b = spde_bound(&model, &noise, r).unwrap();
        assert!((b.a - total).abs() < 1e-10 * total);
    }

    #[test]
    fn experiment_small() {
        let cfg = SpdeExperiment {
            model: small(),
            radii: vec![2.0, 4.0, 8.0, 16.0],
        };
        let rep = run_experiment(&cfg).unwrap();
        assert!((rep.bound_slope + 0.5).abs() < 1e-12);
        assert!(rep.astar_gap < 1e-12);
        assert!(rep.trunc_ratio < 1.0);
        for w in rep.rows.windows(2) {
            assert!(w[1].hs_cr_cinf <= w[0].hs_cr_cinf);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let noise = NoiseSpec::default();
        let model = small();
        assert!(pam_covariance(&model, &noise, 0.0, 0.5, 0.0).is_err());
        assert!(pam_covariance(&model, &noise, 1.5, 0.5, 0.0).is_err());
        let one = PamChaosModel { n_trunc: 1, ..model };
        assert!(pam_covariance(&one, &noise, 1.0, 0.5, 0.0).is_err());
    }
}
