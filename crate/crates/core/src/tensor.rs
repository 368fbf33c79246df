//! Dense symmetric tensor algebra over a truncated `ℌ` with a value slot.
//!
//! `ℌ` is spanned by an orthonormal basis `h_1..h_m`. A symmetric kernel of
//! order `n` is stored once per sorted multi-index `α = (α_1 ≤ … ≤ α_n)`; the
//! stored number is the full-grid entry at any arrangement of `α`, so the
//! `ℌ^{⊗n}` norm weighs each entry by the multinomial count of its
//! arrangements. The value slot (`K`, or `ℌ^{⊗k} ⊗ K` for derivatives) is
//! always expressed in an orthonormal basis.

use std::sync::Arc;

use serde::Serialize;

use crate::error::check_dim;
use crate::linalg;
use crate::{Error, Result};

/// Dimensions of the truncated `ℌ` and of `K`, with the quadrature weights
/// that define `⟨u, v⟩_K = Σ w_i u_i v_i` on nodal values.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertSpec {
    pub m: usize,
    pub p: usize,
    pub k_weights: Vec<f64>,
}

impl HilbertSpec {
    pub fn new(m: usize, k_weights: Vec<f64>) -> Result<Self> {
        if m == 0 || k_weights.is_empty() {
            return Err(Error::InvalidArgument("dimensions must be positive".into()));
        }
        if let Some(w) = k_weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("K weight {w} is not strictly positive")));
        }
        Ok(Self {
            m,
            p: k_weights.len(),
            k_weights,
        })
    }

    /// Plain Euclidean `K = ℝ^p`.
    pub fn euclidean(m: usize, p: usize) -> Self {
        Self::new(m, vec![1.0; p]).expect("positive dimensions")
    }

    /// Nodal values `u(r_i)` to coordinates in the orthonormal basis `k_i = e_i/√w_i`.
    pub fn to_orthonormal(&self, nodal: &[f64]) -> Vec<f64> {
        nodal
            .iter()
            .zip(&self.k_weights)
            .map(|(u, w)| u * w.sqrt())
            .collect()
    }

    pub fn to_nodal(&self, coords: &[f64]) -> Vec<f64> {
        coords
            .iter()
            .zip(&self.k_weights)
            .map(|(c, w)| c / w.sqrt())
            .collect()
    }

    pub fn inner_nodal(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.k_weights)
            .map(|((a, b), w)| w * a * b)
            .sum()
    }

    /// Integral operator with kernel `c(r_i, r_j)` sampled on the nodes.
    pub fn operator_from_kernel(&self, c: impl Fn(usize, usize) -> f64) -> KOperator {
        let p = self.p;
        let mut data = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                data[i * p + j] = (self.k_weights[i] * self.k_weights[j]).sqrt() * c(i, j);
            }
        }
        KOperator::from_flat(p, data).expect("square by construction")
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Sorted multi-indices of a given order over `{0..dim}`, in lexicographic order.
#[derive(Debug, PartialEq)]
pub struct MultiIndexSet {
    order: usize,
    dim: usize,
    flat: Vec<u16>,
    multiplicity: Vec<f64>,
}

impl MultiIndexSet {
    pub fn new(order: usize, dim: usize) -> Self {
        assert!(dim > 0 && dim <= u16::MAX as usize);
        let len = Self::count(order, dim);
        let mut flat = Vec::with_capacity(len * order);
        let mut cur = vec![0usize; order];
        if order == 0 {
            return Self {
                order,
                dim,
                flat,
                multiplicity: vec![1.0],
            };
        }
        loop {
            flat.extend(cur.iter().map(|&v| v as u16));
            // next non-decreasing tuple
            let mut pos = order;
            while pos > 0 && cur[pos - 1] == dim - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            let v = cur[pos - 1] + 1;
            for c in cur.iter_mut().skip(pos - 1) {
                *c = v;
            }
        }
        let nfact = factorial(order);
        let multiplicity = flat
            .chunks(order)
            .map(|alpha| {
                let mut denom = 1.0;
                let mut run = 1;
                for w in alpha.windows(2) {
                    if w[0] == w[1] {
                        run += 1;
                    } else {
                        denom *= factorial(run);
                        run = 1;
                    }
                }
                denom *= factorial(run);
                nfact / denom
            })
            .collect();
        Self {
            order,
            dim,
            flat,
            multiplicity,
        }
    }

    /// Number of sorted multi-indices, `C(dim + order - 1, order)`.
    pub fn count(order: usize, dim: usize) -> usize {
        if order == 0 {
            1
        } else {
            binomial(dim + order - 1, order)
        }
    }

    pub fn len(&self) -> usize {
        self.multiplicity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multiplicity.is_empty()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn index(&self, k: usize) -> &[u16] {
        &self.flat[k * self.order..(k + 1) * self.order]
    }

    pub fn multiplicity(&self, k: usize) -> f64 {
        self.multiplicity[k]
    }

    /// Position of a sorted multi-index.
    pub fn rank(&self, sorted: &[usize]) -> usize {
        debug_assert_eq!(sorted.len(), self.order);
        let n = self.order;
        let mut r = 0;
        let mut prev = 0;
        for (t, &a) in sorted.iter().enumerate() {
            let rest = n - t - 1;
            for v in prev..a {
                r += Self::count(rest, self.dim - v);
            }
            prev = a;
        }
        r
    }

    /// Position of an arbitrary (unsorted) multi-index.
    pub fn rank_unsorted(&self, idx: &[usize]) -> usize {
        let mut s = idx.to_vec();
        s.sort_unstable();
        self.rank(&s)
    }
}

/// Row-major dense tensor with `order` ℌ indices followed by one value index.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseKernel {
    pub order: usize,
    pub dim_h: usize,
    pub dim_v: usize,
    pub data: Vec<f64>,
}

impl DenseKernel {
    pub fn new(order: usize, dim_h: usize, dim_v: usize, data: Vec<f64>) -> Result<Self> {
        check_dim(dim_h.pow(order as u32) * dim_v, data.len())?;
        Ok(Self {
            order,
            dim_h,
            dim_v,
            data,
        })
    }

    pub fn zeros(order: usize, dim_h: usize, dim_v: usize) -> Self {
        Self {
            order,
            dim_h,
            dim_v,
            data: vec![0.0; dim_h.pow(order as u32) * dim_v],
        }
    }

    pub fn offset(&self, h: &[usize], v: usize) -> usize {
        h.iter().fold(0, |acc, &j| acc * self.dim_h + j) * self.dim_v + v
    }

    pub fn get(&self, h: &[usize], v: usize) -> f64 {
        self.data[self.offset(h, v)]
    }

    pub fn set(&mut self, h: &[usize], v: usize, x: f64) {
        let o = self.offset(h, v);
        self.data[o] = x;
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn inner(&self, other: &DenseKernel) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

/// Decodes a full-grid position (without the value index) into ℌ indices.
fn decode(mut pos: usize, order: usize, dim: usize, out: &mut [usize]) {
    for k in (0..order).rev() {
        out[k] = pos % dim;
        pos /= dim;
    }
}

/// An element of `ℌ^{⊙n} ⊗ V` stored over sorted multi-indices.
#[derive(Debug, Clone)]
pub struct SymmetricKernel {
    basis: Arc<MultiIndexSet>,
    dim_v: usize,
    coeffs: Vec<f64>,
}

impl PartialEq for SymmetricKernel {
    fn eq(&self, other: &Self) -> bool {
        self.order() == other.order()
            && self.dim_h() == other.dim_h()
            && self.dim_v == other.dim_v
            && self.coeffs == other.coeffs
    }
}

impl SymmetricKernel {
    pub fn zeros(order: usize, dim_h: usize, dim_v: usize) -> Self {
        let basis = Arc::new(MultiIndexSet::new(order, dim_h));
        let coeffs = vec![0.0; basis.len() * dim_v];
        Self {
            basis,
            dim_v,
            coeffs,
        }
    }

    pub(crate) fn with_basis(basis: Arc<MultiIndexSet>, dim_v: usize) -> Self {
        let coeffs = vec![0.0; basis.len() * dim_v];
        Self {
            basis,
            dim_v,
            coeffs,
        }
    }

    pub fn order(&self) -> usize {
        self.basis.order()
    }

    pub fn dim_h(&self) -> usize {
        self.basis.dim()
    }

    pub fn dim_v(&self) -> usize {
        self.dim_v
    }

    pub fn basis(&self) -> &Arc<MultiIndexSet> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    /// Coefficient at a multi-index in any order.
    pub fn get(&self, h: &[usize], v: usize) -> f64 {
        self.coeffs[self.basis.rank_unsorted(h) * self.dim_v + v]
    }

    /// Sets the coefficient of every arrangement of `h` at once.
    pub fn set(&mut self, h: &[usize], v: usize, x: f64) {
        let k = self.basis.rank_unsorted(h);
        self.coeffs[k * self.dim_v + v] = x;
    }

    pub fn at(&self, k: usize, v: usize) -> f64 {
        self.coeffs[k * self.dim_v + v]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|x| *x *= c);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&x| x == 0.0)
    }

    /// Squared `ℌ^{⊗n} ⊗ V` norm.
    pub fn norm_sq(&self) -> f64 {
        let d = self.dim_v;
        (0..self.basis.len())
            .map(|k| {
                let row = &self.coeffs[k * d..(k + 1) * d];
                self.basis.multiplicity(k) * row.iter().map(|x| x * x).sum::<f64>()
            })
            .sum()
    }

    /// Matrix of partial inner products `⟨f^{(i)}, g^{(j)}⟩_{ℌ^{⊗n}}`, row-major `dim_v x other.dim_v`.
    pub fn inner_matrix(&self, other: &SymmetricKernel) -> Result<Vec<f64>> {
        check_dim(self.order(), other.order())?;
        check_dim(self.dim_h(), other.dim_h())?;
        let (p, q) = (self.dim_v, other.dim_v);
        let mut out = vec![0.0; p * q];
        for k in 0..self.basis.len() {
            let mult = self.basis.multiplicity(k);
            let a = &self.coeffs[k * p..(k + 1) * p];
            let b = &other.coeffs[k * q..(k + 1) * q];
            for i in 0..p {
                let ai = mult * a[i];
                if ai == 0.0 {
                    continue;
                }
                for j in 0..q {
                    out[i * q + j] += ai * b[j];
                }
            }
        }
        Ok(out)
    }

    /// Full `ℌ^{⊗n} ⊗ V` inner product.
    pub fn inner(&self, other: &SymmetricKernel) -> Result<f64> {
        check_dim(self.dim_v, other.dim_v)?;
        let m = self.inner_matrix(other)?;
        Ok((0..self.dim_v).map(|i| m[i * self.dim_v + i]).sum())
    }

    pub fn to_dense(&self) -> DenseKernel {
        let (n, m, d) = (self.order(), self.dim_h(), self.dim_v);
        let mut out = DenseKernel::zeros(n, m, d);
        let mut idx = vec![0usize; n];
        for pos in 0..m.pow(n as u32) {
            decode(pos, n, m, &mut idx);
            let k = self.basis.rank_unsorted(&idx);
            out.data[pos * d..(pos + 1) * d].copy_from_slice(&self.coeffs[k * d..(k + 1) * d]);
        }
        out
    }

    pub(crate) fn add_assign(&mut self, other: &SymmetricKernel) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }
}

/// Canonical symmetrization: the average over all permutations of the ℌ indices.
pub fn symmetrize(raw: &DenseKernel, order: usize) -> Result<SymmetricKernel> {
    if raw.order != order {
        return Err(Error::InvalidArgument(format!(
            "declared order {order} does not match array rank {}",
            raw.order
        )));
    }
    check_dim(raw.dim_h.pow(order as u32) * raw.dim_v, raw.data.len())?;
    let mut out = SymmetricKernel::zeros(order, raw.dim_h, raw.dim_v);
    let d = raw.dim_v;
    let mut idx = vec![0usize; order];
    for pos in 0..raw.dim_h.pow(order as u32) {
        decode(pos, order, raw.dim_h, &mut idx);
        let k = out.basis.rank_unsorted(&idx);
        let inv = 1.0 / out.basis.multiplicity(k);
        for v in 0..d {
            out.coeffs[k * d + v] += inv * raw.data[pos * d + v];
        }
    }
    Ok(out)
}

/// `f ⊗_r g`: an order `(n - r) + (q - r)` tensor carrying both value slots,
/// stored densely with layout `(a_1..a_{n-r}, b_1..b_{q-r}, i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractedKernel {
    pub left_order: usize,
    pub right_order: usize,
    pub dim_h: usize,
    pub dim_v_left: usize,
    pub dim_v_right: usize,
    pub data: Vec<f64>,
}

impl ContractedKernel {
    pub fn get(&self, left: &[usize], right: &[usize], i: usize, j: usize) -> f64 {
        let h = left
            .iter()
            .chain(right)
            .fold(0, |acc, &x| acc * self.dim_h + x);
        self.data[(h * self.dim_v_left + i) * self.dim_v_right + j]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

pub fn contract_r(f: &SymmetricKernel, g: &SymmetricKernel, r: usize) -> Result<ContractedKernel> {
    let (n, q) = (f.order(), g.order());
    if r > n.min(q) {
        return Err(Error::ContractionOrder { r, n, q });
    }
    check_dim(f.dim_h(), g.dim_h())?;
    let m = f.dim_h();
    let (p1, p2) = (f.dim_v(), g.dim_v());
    let fd = f.to_dense();
    let gd = g.to_dense();
    let shared = m.pow(r as u32);
    let la = m.pow((n - r) as u32);
    let lb = m.pow((q - r) as u32);
    let mut data = vec![0.0; la * lb * p1 * p2];
    for c in 0..shared {
        for a in 0..la {
            for i in 0..p1 {
                let fv = fd.data[(c * la + a) * p1 + i];
                if fv == 0.0 {
                    continue;
                }
                for b in 0..lb {
                    let base = ((a * lb + b) * p1 + i) * p2;
                    let grow = &gd.data[(c * lb + b) * p2..(c * lb + b + 1) * p2];
                    for (j, gv) in grow.iter().enumerate() {
                        data[base + j] += fv * gv;
                    }
                }
            }
        }
    }
    Ok(ContractedKernel {
        left_order: n - r,
        right_order: q - r,
        dim_h: m,
        dim_v_left: p1,
        dim_v_right: p2,
        data,
    })
}

/// A linear operator on `K` in orthonormal coordinates (row-major).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KOperator {
    dim: usize,
    entries: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KNorms {
    pub trace: f64,
    pub hs: f64,
    pub opnorm: f64,
}

impl KOperator {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for r in &rows {
            if r.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
            entries.extend_from_slice(r);
        }
        Ok(Self { dim: n, entries })
    }

    pub fn from_flat(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::NotSquare {
                rows: dim,
                cols: entries.len().checked_div(dim).unwrap_or(0),
            });
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.entries[i * dim + i] = 1.0;
        }
        op
    }

    /// `a ⊗ a`, i.e. `u ↦ ⟨a, u⟩ a`.
    pub fn rank_one(a: &[f64]) -> Self {
        let n = a.len();
        let entries = (0..n * n).map(|k| a[k / n] * a[k % n]).collect();
        Self { dim: n, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn sub(&self, other: &KOperator) -> Result<KOperator> {
        check_dim(self.dim, other.dim)?;
        Ok(KOperator {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> KOperator {
        KOperator {
            dim: self.dim,
            entries: self.entries.iter().map(|x| c * x).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn hs_norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn op_norm(&self) -> f64 {
        linalg::max_singular_value(&self.entries, self.dim, self.dim)
    }

    pub fn max_abs_diff(&self, other: &KOperator) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Trace, Hilbert–Schmidt norm and operator norm.
pub fn k_operator_norms(op: &KOperator) -> KNorms {
    KNorms {
        trace: op.trace(),
        hs: op.hs_norm(),
        opnorm: op.op_norm(),
    }
}
