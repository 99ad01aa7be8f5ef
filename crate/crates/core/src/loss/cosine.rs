use alloc::vec::Vec;

use crate::embedding::l2_normalize_in_place;
use crate::error::Result;
use crate::matrix::dot;

/// A vector stored as direction and length.
pub(crate) struct Unit {
    pub dir: Vec<f64>,
    pub norm: f64,
}

impl Unit {
    pub fn new(v: &[f64]) -> Result<Self> {
        let mut dir = v.to_vec();
        let norm = l2_normalize_in_place(&mut dir)?;
        Ok(Self { dir, norm })
    }

    #[inline]
    pub fn cos(&self, other: &Unit) -> f64 {
        dot(&self.dir, &other.dir)
    }
}

/// `out += g · ∂cos(a, b)/∂a`, where `∂cos/∂a = (b̂ − cos·â) / ‖a‖`.
#[inline]
pub(crate) fn add_cos_grad(g: f64, a: &Unit, b: &Unit, cos: f64, out: &mut [f64]) {
    let k = g / a.norm;
    for ((o, &bh), &ah) in out.iter_mut().zip(&b.dir).zip(&a.dir) {
        *o += k * (bh - cos * ah);
    }
}

/// `out += ∂L/∂v` given `∂L/∂v̂ = g_dir` for `v̂ = v/‖v‖`.
#[inline]
pub(crate) fn add_normalize_grad(g_dir: &[f64], v: &Unit, out: &mut [f64]) {
    let proj = dot(g_dir, &v.dir);
    for ((o, &g), &u) in out.iter_mut().zip(g_dir).zip(&v.dir) {
        *o += (g - proj * u) / v.norm;
    }
}
