//! Browser bindings for three quick chaoslab computations. Results come back
//! as flat `Float64Array`s of fixed-width records.

use chaoslab::apps::breuer_major::{
    bm_constant, ct_matrix, hs_gap, k_rule, sigma_limit, KernelShape, MovingAverageModel, Polynomial, Subordinator,
};
use chaoslab::apps::neural_net::{nn_theorem_bound, Activation, InputFamily, InputMeasure};
use chaoslab::apps::spde::{pam_covariance, NoiseSpec, PamChaosModel};
use chaoslab::{Error, Result};
use wasm_bindgen::prelude::*;

const K_NODES: usize = 8;
const INPUT_NODES: usize = 32;
const DEMO_TIME_NODES: usize = 8;

fn js(r: Result<Vec<f64>>) -> std::result::Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

fn shape(name: &str) -> Result<KernelShape> {
    match name {
        "indicator" => Ok(KernelShape::Indicator),
        "triangular" => Ok(KernelShape::Triangular),
        "truncated_gaussian" => Ok(KernelShape::TruncatedGaussian),
        _ => Err(Error::InvalidArgument(format!("unknown kernel shape {name:?}"))),
    }
}

fn activation(name: &str) -> Result<Activation> {
    match name {
        "tanh" => Ok(Activation::Tanh),
        "identity" => Ok(Activation::Identity),
        "square" => Ok(Activation::Square),
        "hermite2" => Ok(Activation::Hermite2),
        "cos" => Ok(Activation::Cos),
        _ => Err(Error::InvalidArgument(format!("unknown activation {name:?}"))),
    }
}

fn family(name: &str) -> Result<InputFamily> {
    match name {
        "uniform" => Ok(InputFamily::Uniform),
        "gaussian" => Ok(InputFamily::Gaussian),
        _ => Err(Error::InvalidArgument(format!("unknown input measure {name:?}"))),
    }
}

/// `[σ², then (T, bound, ‖C_T − C_∞‖) per horizon]`.
pub fn breuer_major_rows(shape_name: &str, coeffs: &[f64], horizons: &[f64]) -> Result<Vec<f64>> {
    let model = MovingAverageModel::new(shape(shape_name)?);
    let f = Polynomial::new(coeffs.to_vec());
    if f.degree() < 2 {
        return Err(Error::InvalidArgument("f needs degree at least 2".into()));
    }
    let sub = Subordinator::new(f.clone(), f.degree())?;
    let sigma2 = sigma_limit(&model, &sub)?;
    let constant = bm_constant(&model, &f)?;
    let rule = k_rule(K_NODES);
    let mut out = vec![sigma2];
    for &t in horizons {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::NotPositive(t));
        }
        let ct = ct_matrix(&model, &sub, &rule, t);
        out.extend([t, constant / t.sqrt(), hs_gap(&rule, &ct, sigma2)]);
    }
    Ok(out)
}

/// `(n, bound, majorant)` per width.
pub fn neural_net_rows(act: &str, input: &str, widths: &[u32]) -> Result<Vec<f64>> {
    let act = activation(act)?;
    let meas = InputMeasure::new(family(input)?, INPUT_NODES);
    let mut out = Vec::with_capacity(3 * widths.len());
    for &n in widths {
        let b = nn_theorem_bound(act, &meas, n as usize)?;
        out.extend([n as f64, b.bound, b.majorant]);
    }
    Ok(out)
}

/// `(z, Cov(u(t, z), u(t, 0)), truncation ratio)` per offset.
pub fn pam_rows(t: f64, n_trunc: usize, offsets: &[f64]) -> Result<Vec<f64>> {
    let model = PamChaosModel {
        horizon: t,
        n_trunc,
        time_nodes: DEMO_TIME_NODES,
        ..PamChaosModel::default()
    };
    let noise = NoiseSpec::default();
    let mut out = Vec::with_capacity(3 * offsets.len());
    for &z in offsets {
        let c = pam_covariance(&model, &noise, t, t, z)?;
        out.extend([z, c.value, c.trunc_ratio]);
    }
    Ok(out)
}

#[wasm_bindgen(js_name = breuerMajor)]
pub fn breuer_major(shape: &str, coeffs: &[f64], horizons: &[f64]) -> std::result::Result<Vec<f64>, JsError> {
    js(breuer_major_rows(shape, coeffs, horizons))
}

#[wasm_bindgen(js_name = neuralNet)]
pub fn neural_net(activation: &str, input: &str, widths: &[u32]) -> std::result::Result<Vec<f64>, JsError> {
    js(neural_net_rows(activation, input, widths))
}

#[wasm_bindgen(js_name = pamCovariance)]
pub fn pam(t: f64, n_trunc: usize, offsets: &[f64]) -> std::result::Result<Vec<f64>, JsError> {
    js(pam_rows(t, n_trunc, offsets))
}

#[wasm_bindgen]
pub fn version() -> String {
    chaoslab::VERSION.to_string()
}
