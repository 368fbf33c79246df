//! One driver per subcommand. Each turns a config section into checks,
//! CSV tables, rate plots and a JSON report.

pub mod bounds;
pub mod breuer_major;
pub mod neural_net;
pub mod selftest;
pub mod spde;

use chaoslab::chaos::ChaosFunctional;
use chaoslab::rng::{normal_vec, StreamKey};

use crate::report::{verdict, Check, Table};

/// Random functionals `0..count`, each from its own substream.
pub(crate) fn random_functionals(
    key: &StreamKey,
    count: usize,
    dim_h: usize,
    dim_v: usize,
    max_order: usize,
    with_mean: bool,
) -> Vec<ChaosFunctional> {
    (0..count)
        .map(|i| {
            let mut rng = key.rng(i as u64);
            let mut f = ChaosFunctional::random(&mut rng, dim_h, dim_v, max_order, 1.0);
            if with_mean {
                f.set_mean(normal_vec(&mut rng, dim_v)).expect("mean has dim_v entries");
            }
            f
        })
        .collect()
}

/// `name, value, limit, margin, verdict` for every check.
pub(crate) fn checks_table(name: &str, checks: &[Check]) -> Table {
    let mut t = Table::new(name, &["check", "value", "limit", "margin", "verdict"]);
    for c in checks {
        t.push(vec![
            crate::report::Cell::Text(c.name.clone()),
            c.value.into(),
            c.limit.into(),
            c.margin.into(),
            verdict(c.pass),
        ]);
    }
    t
}

/// `true` when the sequence never increases.
pub(crate) fn nonincreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}
