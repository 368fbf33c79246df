use chaoslab::apps::breuer_major::{run_experiment, BmReport, KernelShape, Polynomial};
use chaoslab::rng::StreamKey;
use chaoslab::Result;
use serde_json::json;

use super::nonincreasing;
use crate::config::BreuerMajorConfig;
use crate::report::{verdict, Check, ExperimentOutput, RatePlot, Series, Table};

/// `σ²` and the bound constant for `f = H₂` with `ρ(t) = (1 - |t|)₊`.
const SIGMA2_H2: f64 = 8.0 / 3.0;

fn h2_constant() -> f64 {
    2.0 * 3f64.powf(0.75)
}

fn is_reference_case(cfg: &BreuerMajorConfig) -> bool {
    cfg.shape == KernelShape::Indicator && Polynomial::new(cfg.f.clone()) == Polynomial::hermite2()
}

pub fn checks(cfg: &BreuerMajorConfig, rep: &BmReport) -> Vec<Check> {
    let mut out = Vec::new();
    if is_reference_case(cfg) {
        out.push(Check::at_most(
            Some(6),
            "limiting variance 8/3 (relative error)",
            (rep.sigma2 - SIGMA2_H2).abs() / SIGMA2_H2,
            0.01,
        ));
        out.push(Check::at_most(
            Some(6),
            "bound constant 2*3^(3/4) (absolute error)",
            (rep.constant - h2_constant()).abs(),
            1e-10,
        ));
    }
    out.push(Check::at_most(Some(6), "bound slope in T equals -1/2", (rep.bound_slope + 0.5).abs(), 1e-10));
    for row in &rep.rows {
        out.push(
            Check::at_most(Some(6), format!("d2 lower estimate below bound at T = {}", row.horizon), row.d2_lower, row.bound)
                .with_detail(format!("stderr {:.3e}", row.d2_stderr)),
        );
    }
    let gaps: Vec<f64> = rep.rows.iter().map(|r| r.hs_ct_cinf).collect();
    out.push(Check::flag(Some(6), "covariance gap nonincreasing in T", nonincreasing(&gaps)));
    out.push(
        Check::at_most(
            None,
            "integral J below G*^6 T (ratio)",
            rep.majorization.j_numeric / rep.majorization.j_majorant,
            1.05,
        )
        .with_detail(format!("T = {}", rep.majorization.horizon)),
    );
    out
}

pub fn run(cfg: &BreuerMajorConfig, key: &StreamKey) -> Result<ExperimentOutput> {
    let rep = run_experiment(&cfg.experiment(), &key.named("breuer-major"))?;
    let mut table = Table::new(
        "breuer_major",
        &["T", "bound", "d2_lower", "d2_stderr", "hs_CT_Cinf", "sigma2", "verdict"],
    );
    let mut prev_gap = f64::INFINITY;
    for row in &rep.rows {
        let ok = row.d2_lower <= row.bound && row.hs_ct_cinf <= prev_gap;
        prev_gap = row.hs_ct_cinf;
        table.push(vec![
            row.horizon.into(),
            row.bound.into(),
            row.d2_lower.into(),
            row.d2_stderr.into(),
            row.hs_ct_cinf.into(),
            row.sigma2.into(),
            verdict(ok),
        ]);
    }
    let xs: Vec<f64> = rep.rows.iter().map(|r| r.horizon).collect();
    let plot = RatePlot {
        name: "breuer_major".into(),
        title: "Breuer-Major: bound and d2 lower estimate".into(),
        x_label: "T".into(),
        series: vec![
            Series {
                label: "bound".into(),
                xs: xs.clone(),
                ys: rep.rows.iter().map(|r| r.bound).collect(),
            },
            Series {
                label: "d2 lower".into(),
                xs,
                ys: rep.rows.iter().map(|r| r.d2_lower).collect(),
            },
        ],
    };
    Ok(ExperimentOutput {
        name: "breuer_major".into(),
        checks: checks(cfg, &rep),
        tables: vec![table],
        plots: vec![plot],
        report: json!(rep),
    })
}
