use chaoslab::apps::neural_net::{run_experiment, Activation, NnReport};
use chaoslab::rng::StreamKey;
use chaoslab::Result;
use serde_json::json;

use crate::config::NeuralNetConfig;
use crate::report::{verdict, Check, ExperimentOutput, RatePlot, Series, Table};

const LINEAR_BOUND_TOL: f64 = 1e-12;

fn table(name: &str, rep: &NnReport, linear: bool) -> Table {
    let mut t = Table::new(name, &["n", "bound", "d2_lower", "d2_stderr", "cov_width_gap", "verdict"]);
    for row in &rep.rows {
        let ok = if linear {
            row.bound <= LINEAR_BOUND_TOL && row.d2_lower <= 3.0 * row.d2_stderr
        } else {
            row.d2_lower <= row.bound
        };
        t.push(vec![
            row.n.into(),
            row.bound.into(),
            row.d2_lower.into(),
            row.d2_stderr.into(),
            row.cov_width_gap.into(),
            verdict(ok),
        ]);
    }
    t
}

pub fn checks(rep: &NnReport) -> Vec<Check> {
    let mut out = Vec::new();
    for w in &rep.width_checks {
        out.push(
            Check::flag(Some(7), format!("covariance at width {} matches the limit", w.n), w.agrees_with_exact()).with_detail(
                format!(
                    "trace {:.6} ± {:.2e} vs {:.6}; projection {:.6} ± {:.2e} vs {:.6}",
                    w.trace.mean, w.trace.stderr, w.trace_exact, w.projection.mean, w.projection.stderr, w.projection_exact
                ),
            ),
        );
    }
    for (i, a) in rep.width_checks.iter().enumerate() {
        for b in &rep.width_checks[i + 1..] {
            out.push(Check::flag(
                Some(7),
                format!("covariance agrees across widths {} and {}", a.n, b.n),
                a.agrees_with(b),
            ));
        }
    }
    out.push(Check::at_most(Some(7), "bound slope in n equals -1/2", (rep.bound_slope + 0.5).abs(), 1e-10));
    for row in &rep.rows {
        out.push(
            Check::at_most(Some(7), format!("d2 lower estimate below bound at n = {}", row.n), row.d2_lower, row.bound)
                .with_detail(format!("stderr {:.3e}", row.d2_stderr)),
        );
    }
    out.push(Check::flag(None, "activation envelope holds", rep.envelope_holds));
    out
}

pub fn linear_checks(rep: &NnReport) -> Vec<Check> {
    let mut out = Vec::new();
    for row in &rep.rows {
        out.push(Check::at_most(
            Some(7),
            format!("linear activation: bound vanishes at n = {}", row.n),
            row.bound,
            LINEAR_BOUND_TOL,
        ));
        out.push(Check::at_most(
            Some(7),
            format!("linear activation: d2 lower estimate within 3 stderr of 0 at n = {}", row.n),
            row.d2_lower,
            3.0 * row.d2_stderr,
        ));
    }
    out
}

fn plot(name: &str, title: &str, rep: &NnReport) -> RatePlot {
    let xs: Vec<f64> = rep.rows.iter().map(|r| r.n as f64).collect();
    RatePlot {
        name: name.into(),
        title: title.into(),
        x_label: "n".into(),
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
    }
}

pub fn run(cfg: &NeuralNetConfig, key: &StreamKey) -> Result<ExperimentOutput> {
    let act = cfg.activation.activation();
    let rep = run_experiment(&cfg.experiment(act), &key.named("neural-net"))?;
    let mut checks = checks(&rep);
    let mut tables = vec![table("neural_net", &rep, false)];
    let mut plots = vec![plot("neural_net", "Shallow network: bound and d2 lower estimate", &rep)];
    let mut report = json!({ "main": rep });
    if cfg.linear_check {
        let lin = run_experiment(&cfg.experiment(Activation::Identity), &key.named("neural-net-linear"))?;
        checks.extend(linear_checks(&lin));
        tables.push(table("neural_net_linear", &lin, true));
        plots.push(plot("neural_net_linear", "Linear activation: bound and d2 lower estimate", &lin));
        report["linear"] = json!(lin);
    }
    Ok(ExperimentOutput {
        name: "neural_net".into(),
        checks,
        tables,
        plots,
        report,
    })
}
