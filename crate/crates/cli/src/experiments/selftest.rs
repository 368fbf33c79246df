//! Exact operator identities and the statistical chaos checks.

use chaoslab::chaos::{
    chaos_inner, divergence, malliavin_derivative, mehler_coupled_draw, ou_apply, pseudo_inverse, ChaosFunctional,
    GaussianDraw, OuOp,
};
use chaoslab::mc::{reduce_replicates, Moments};
use chaoslab::rng::{normal_vec, StreamKey};
use chaoslab::tensor::SymmetricKernel;
use chaoslab::Result;
use serde_json::json;

use super::{checks_table, random_functionals};
use crate::config::SelftestConfig;
use crate::report::{Check, ExperimentOutput};

const EXACT: f64 = 1e-12;

fn functionals(cfg: &SelftestConfig, key: &StreamKey) -> Vec<ChaosFunctional> {
    random_functionals(
        &key.named("selftest-functionals"),
        cfg.n_functionals,
        cfg.dim_h,
        cfg.dim_v,
        cfg.max_order,
        true,
    )
}

/// `L = -δD`, `P_t P_s = P_{t+s}`, `L L⁻¹ F = F - E F` and `δ(φ) = I₁(φ)`.
pub fn identities(cfg: &SelftestConfig, key: &StreamKey) -> Result<Vec<Check>> {
    let [t, s] = cfg.semigroup_times;
    let (m, p) = (cfg.dim_h, cfg.dim_v);
    let mut worst = [0.0f64; 4];
    let mut phi_rng = key.named("selftest-phi").rng(0);
    for f in functionals(cfg, key) {
        let lf = ou_apply(&f, OuOp::Generator)?;
        let dd = divergence(&malliavin_derivative(&f, 1))?.scaled(-1.0);
        worst[0] = worst[0].max(lf.max_abs_diff(&dd));

        let ps = ou_apply(&ou_apply(&f, OuOp::Semigroup(s))?, OuOp::Semigroup(t))?;
        let pts = ou_apply(&f, OuOp::Semigroup(t + s))?;
        worst[1] = worst[1].max(ps.max_abs_diff(&pts));

        let (inv, _) = pseudo_inverse(&f);
        worst[2] = worst[2].max(ou_apply(&inv, OuOp::Generator)?.max_abs_diff(&f.centered()));

        let phi = normal_vec(&mut phi_rng, m * p);
        let mut det = ChaosFunctional::zero(m, m * p, 0);
        det.set_mean(phi.clone())?;
        let mut k1 = SymmetricKernel::zeros(1, m, p);
        for b in 0..m {
            for i in 0..p {
                k1.set(&[b], i, phi[b * p + i]);
            }
        }
        worst[3] = worst[3].max(divergence(&det)?.max_abs_diff(&ChaosFunctional::pure(k1)));
    }
    let names = [
        "generator equals minus divergence of derivative",
        "semigroup property",
        "generator inverts pseudo-inverse",
        "divergence of deterministic element is first chaos",
    ];
    Ok(names
        .iter()
        .zip(worst)
        .map(|(n, w)| Check::at_most(Some(1), *n, w, EXACT))
        .collect())
}

/// Monte Carlo covariance of `eval_chaos` against `chaos_inner`, and exact
/// orthogonality of distinct orders.
pub fn isometry(cfg: &SelftestConfig, key: &StreamKey) -> Result<Vec<Check>> {
    let f = functionals(cfg, key).swap_remove(0);
    let p = f.dim_v();
    let exact = chaos_inner(&f, &f)?;
    let ev = f.evaluator();
    let mean = f.mean().to_vec();
    let draws = key.named("selftest-isometry");
    let mom = reduce_replicates(
        cfg.n_mc,
        || Moments::new(p * p),
        |acc, r| {
            let g = normal_vec(&mut draws.rng(r as u64), f.dim_h());
            let x: Vec<f64> = ev.eval(&g).expect("draw has dim_h entries").iter().zip(&mean).map(|(a, b)| a - b).collect();
            let prod: Vec<f64> = (0..p * p).map(|k| x[k / p] * x[k % p]).collect();
            acc.push(&prod);
        },
        |a, b| a.merge(b),
    );
    let mut worst_z: f64 = 0.0;
    for (e, &target) in mom.estimates().iter().zip(exact.entries()) {
        worst_z = worst_z.max((e.mean - target).abs() / e.stderr.max(f64::MIN_POSITIVE));
    }

    let mut cross: f64 = 0.0;
    for a in 1..=f.max_order() {
        for b in 1..=f.max_order() {
            if a == b {
                continue;
            }
            let fa = ChaosFunctional::pure(f.kernel(a).expect("order within range").clone());
            let fb = ChaosFunctional::pure(f.kernel(b).expect("order within range").clone());
            let c = chaos_inner(&fa, &fb)?;
            cross = cross.max(c.entries().iter().fold(0.0, |m, x| m.max(x.abs())));
        }
    }
    Ok(vec![
        Check::at_most(Some(2), "covariance matches isometry (max |z|)", worst_z, 3.0)
            .with_detail(format!("{} replicates, {} entries", cfg.n_mc, p * p)),
        Check::at_most(Some(2), "distinct chaos orders are orthogonal", cross, 0.0),
    ])
}

/// `Var F ≤ E‖DF‖²`, with equality on the first chaos.
pub fn poincare(cfg: &SelftestConfig, key: &StreamKey) -> Result<Vec<Check>> {
    let mut excess = f64::NEG_INFINITY;
    let mut gap: f64 = 0.0;
    for f in functionals(cfg, key) {
        let var = f.variance();
        let grad = malliavin_derivative(&f, 1).expected_norm_sq();
        excess = excess.max(var - grad * (1.0 + EXACT));
        let mut first = f.clone();
        for n in 2..=first.max_order() {
            first.kernel_mut(n).expect("order within range").coeffs_mut().fill(0.0);
        }
        let lin = malliavin_derivative(&first, 1).expected_norm_sq();
        gap = gap.max((first.variance() - lin).abs());
    }
    Ok(vec![
        Check::at_most(Some(3), "variance below expected squared derivative", excess, 0.0),
        Check::at_most(Some(3), "equality on the first chaos", gap, EXACT),
    ])
}

/// Analytic `P_t F(g)` against the coupled-draw conditional expectation.
pub fn mehler(cfg: &SelftestConfig, key: &StreamKey) -> Result<Vec<Check>> {
    let f = functionals(cfg, key).swap_remove(0);
    let g = normal_vec(&mut key.named("selftest-mehler-point").rng(0), f.dim_h());
    let ev = f.evaluator();
    let coupling = key.named("selftest-mehler");
    let mut checks = Vec::new();
    for &t in &cfg.mehler_times {
        let want = ou_apply(&f, OuOp::Semigroup(t))?.evaluator().eval(&g)?;
        let mom = reduce_replicates(
            cfg.n_mc,
            || Moments::new(f.dim_v()),
            |acc, r| {
                let d = GaussianDraw {
                    g: g.clone(),
                    replicate: r as u64,
                };
                let c = mehler_coupled_draw(&d, &coupling, t).expect("t is nonnegative");
                acc.push(&ev.eval(&c.g).expect("draw has dim_h entries"));
            },
            |a, b| a.merge(b),
        );
        let z = mom
            .estimates()
            .iter()
            .zip(&want)
            .map(|(e, w)| (e.mean - w).abs() / e.stderr.max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        checks.push(
            Check::at_most(Some(4), format!("Mehler formula at t = {t} (max |z|)"), z, 3.0)
                .with_detail(format!("{} couplings", cfg.n_mc)),
        );
    }
    Ok(checks)
}

pub fn run(cfg: &SelftestConfig, key: &StreamKey) -> Result<ExperimentOutput> {
    let mut checks = identities(cfg, key)?;
    checks.extend(isometry(cfg, key)?);
    checks.extend(poincare(cfg, key)?);
    checks.extend(mehler(cfg, key)?);
    let report = json!({
        "n_functionals": cfg.n_functionals,
        "dim_h": cfg.dim_h,
        "dim_v": cfg.dim_v,
        "max_order": cfg.max_order,
        "n_mc": cfg.n_mc,
    });
    Ok(ExperimentOutput {
        name: "selftest".into(),
        tables: vec![checks_table("selftest", &checks)],
        checks,
        plots: Vec::new(),
        report,
    })
}
