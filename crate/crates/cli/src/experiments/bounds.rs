//! Bound ordering on random functionals: `d₂` lower estimate below the
//! Malliavin–Stein bound, and the two second-order bounds in order.

use chaoslab::chaos::ChaosFunctional;
use chaoslab::mc::{reduce_replicates, Moments};
use chaoslab::rng::{normal_vec, StreamKey};
use chaoslab::stein::{bound_report, covariance_operator, BoundConfig, BoundReport, GammaPlan};
use chaoslab::Result;
use serde::Serialize;
use serde_json::json;

use super::random_functionals;
use crate::config::BoundsConfig;
use crate::report::{verdict, Cell, Check, ExperimentOutput, Table};

#[derive(Debug, Clone, Serialize)]
pub struct FunctionalResult {
    pub index: usize,
    pub report: BoundReport,
    /// `|E tr Γ - tr S_F|` in standard errors.
    pub gamma_trace_z: f64,
    pub ordering_holds: bool,
}

/// Monte Carlo `E tr Γ` against the exact `tr S_F`.
fn gamma_trace_z(f: &ChaosFunctional, n_mc: usize, key: &StreamKey) -> Result<f64> {
    let plan = GammaPlan::new(f);
    let exact = covariance_operator(f).trace();
    let mom = reduce_replicates(
        n_mc,
        || Moments::new(1),
        |acc, r| {
            let g = normal_vec(&mut key.rng(r as u64), f.dim_h());
            acc.push(&[plan.sample(&g).expect("draw has dim_h entries").matrix.trace()]);
        },
        |a, b| a.merge(b),
    );
    let e = mom.estimate(0);
    Ok((e.mean - exact).abs() / e.stderr.max(f64::MIN_POSITIVE))
}

pub fn evaluate(cfg: &BoundsConfig, key: &StreamKey) -> Result<Vec<FunctionalResult>> {
    let bc = BoundConfig {
        n_mc_msbc: cfg.n_mc_msbc,
        n_mc_second_order: cfg.n_mc_second_order,
        n_mc_d2: cfg.n_mc_d2,
        dictionary_size: cfg.dictionary_size,
    };
    let fs = random_functionals(
        &key.named("bounds-functionals"),
        cfg.n_functionals,
        cfg.dim_h,
        cfg.dim_v,
        cfg.max_order,
        false,
    );
    fs.iter()
        .enumerate()
        .map(|(i, f)| {
            let k = key.named("bounds").substream(i as u64);
            let s = covariance_operator(f);
            let report = bound_report(f, &s, &bc, &k)?;
            let z = gamma_trace_z(f, cfg.n_mc_gamma, &k.named("gamma"))?;
            let se = report.msbc_stderr.hypot(report.d2_lower_stderr);
            let ordering_holds = report.d2_lower <= report.msbc + 3.0 * se
                && report.contraction_violations == 0
                && report.thm1 <= report.thm2;
            Ok(FunctionalResult {
                index: i,
                report,
                gamma_trace_z: z,
                ordering_holds,
            })
        })
        .collect()
}

pub fn checks(results: &[FunctionalResult]) -> Vec<Check> {
    let worst = |f: &dyn Fn(&FunctionalResult) -> f64| results.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    vec![
        Check::at_most(
            Some(5),
            "d2 lower estimate below msbc bound (max excess in stderr)",
            worst(&|r| {
                let se = r.report.msbc_stderr.hypot(r.report.d2_lower_stderr);
                (r.report.d2_lower - r.report.msbc) / se.max(f64::MIN_POSITIVE)
            }),
            3.0,
        ),
        Check::at_most(
            Some(5),
            "operator-norm bound below contraction bound per draw (violations)",
            results.iter().map(|r| r.report.contraction_violations).sum::<usize>() as f64,
            0.0,
        ),
        Check::at_most(Some(5), "thm1 below thm2", worst(&|r| r.report.thm1 - r.report.thm2), 0.0),
        Check::at_most(
            Some(5),
            "mean of gamma matches covariance (max |z| of trace)",
            worst(&|r| r.gamma_trace_z),
            3.0,
        ),
    ]
}

pub fn run(cfg: &BoundsConfig, key: &StreamKey) -> Result<ExperimentOutput> {
    let results = evaluate(cfg, key)?;
    let mut table = Table::new(
        "bounds",
        &[
            "index",
            "msbc",
            "msbc_stderr",
            "gamma_term",
            "cov_gap",
            "thm1",
            "thm2",
            "d2_lower",
            "d2_lower_stderr",
            "gamma_trace_z",
            "verdict",
        ],
    );
    for r in &results {
        let b = &r.report;
        table.push(vec![
            Cell::from(r.index),
            b.msbc.into(),
            b.msbc_stderr.into(),
            b.msbc_triangle.gamma_term.into(),
            b.msbc_triangle.cov_gap.into(),
            b.thm1.into(),
            b.thm2.into(),
            b.d2_lower.into(),
            b.d2_lower_stderr.into(),
            r.gamma_trace_z.into(),
            verdict(r.ordering_holds && r.gamma_trace_z <= 3.0),
        ]);
    }
    Ok(ExperimentOutput {
        name: "bounds".into(),
        checks: checks(&results),
        tables: vec![table],
        plots: Vec::new(),
        report: json!({ "functionals": results }),
    })
}
