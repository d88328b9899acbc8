use crate::basis::{Basis, LocalizedFrame};
use crate::error::{Error, Result};
use crate::nuisance::CovariateDensity;
use crate::par;
use crate::quadrature::{tensor_for_each, Rule};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Block Cholesky factors of the Gram matrix of `b` under `F*`.
#[derive(Debug, Clone)]
pub struct OmegaFactor {
    blocks: Vec<(usize, usize)>,
    gram: Vec<DMatrix<f64>>,
    chol: Vec<DMatrix<f64>>,
    pub diagnostics: OmegaDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaDiagnostics {
    pub k: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub trace: f64,
}

/// `int b(v) b(v)^T f(x0 + h(v - 1/2)) dv` block by block, with `extra_order`
/// Gauss points beyond the basis degree on every panel between density jumps.
pub fn omega_hat(
    basis: &dyn Basis,
    density: &dyn CovariateDensity,
    frame: &LocalizedFrame,
    extra_order: usize,
    eigen_floor: f64,
) -> Result<OmegaFactor> {
    let d = basis.d();
    if density.d() != d || frame.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: density.d(),
        });
    }
    let blocks = basis.blocks();
    if blocks.is_empty() {
        return Err(Error::config("basis has no blocks"));
    }
    let npts = basis.poly_degree() + 1 + extra_order;
    // density jumps and the unit-cube edges, mapped into v
    let jumps: Vec<Vec<f64>> = (0..d)
        .map(|ax| {
            let mut v: Vec<f64> = density
                .breakpoints(ax)
                .into_iter()
                .chain([0.0, 1.0])
                .map(|x| 0.5 + (x - frame.x0[ax]) / frame.h)
                .collect();
            v.retain(|t| t.is_finite());
            v
        })
        .collect();
    let grams: Vec<DMatrix<f64>> = par::map_range(blocks.len(), |b| {
        let (lo, hi) = basis.block_box(b);
        let len = blocks[b].1;
        let axes: Vec<Rule> = (0..d)
            .map(|ax| Rule::panels(npts, lo[ax], hi[ax], 1, &jumps[ax]))
            .collect();
        let mut g = DMatrix::<f64>::zeros(len, len);
        let mut vals = Vec::with_capacity(len);
        let mut x = vec![0.0; d];
        tensor_for_each(&axes, |v, w| {
            frame.unstretch(v, &mut x);
            let f = density.density(&x);
            if f == 0.0 {
                return;
            }
            if basis.eval_block(v, &mut vals) != Some(b) {
                return;
            }
            for i in 0..len {
                let s = w * f * vals[i];
                for j in 0..=i {
                    g[(i, j)] += s * vals[j];
                }
            }
        });
        for i in 0..len {
            for j in 0..i {
                g[(j, i)] = g[(i, j)];
            }
        }
        g
    });
    factor(blocks, grams, eigen_floor)
}

/// Factors precomputed Gram blocks.
pub fn factor(blocks: Vec<(usize, usize)>, grams: Vec<DMatrix<f64>>, eigen_floor: f64) -> Result<OmegaFactor> {
    let k: usize = blocks.iter().map(|b| b.1).sum();
    let mut lmin = f64::INFINITY;
    let mut lmax: f64 = 0.0;
    let mut trace = 0.0;
    for g in &grams {
        trace += g.trace();
        if g.nrows() == 1 {
            lmin = lmin.min(g[(0, 0)]);
            lmax = lmax.max(g[(0, 0)]);
        } else {
            let e = g.clone().symmetric_eigen();
            for &l in e.eigenvalues.iter() {
                lmin = lmin.min(l);
                lmax = lmax.max(l);
            }
        }
    }
    let floor = eigen_floor * (trace / k as f64).abs().max(f64::MIN_POSITIVE);
    if !(lmin >= floor) || trace <= 0.0 {
        return Err(Error::Singular {
            what: "omega",
            value: lmin,
            floor,
        });
    }
    let mut chol = Vec::with_capacity(grams.len());
    for g in &grams {
        let c = g.clone().cholesky().ok_or(Error::Singular {
            what: "omega",
            value: lmin,
            floor,
        })?;
        chol.push(c.l());
    }
    Ok(OmegaFactor {
        blocks,
        gram: grams,
        chol,
        diagnostics: OmegaDiagnostics {
            k,
            lambda_min: lmin,
            lambda_max: lmax,
            trace,
        },
    })
}

impl OmegaFactor {
    pub fn k(&self) -> usize {
        self.diagnostics.k
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    /// Solves `L c = b` for the block's lower factor, so `b_i^T Omega^{-1} b_j = c_i . c_j`.
    pub fn whiten(&self, block: usize, b: &[f64], out: &mut [f64]) {
        let l = &self.chol[block];
        let n = b.len();
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= l[(i, j)] * out[j];
            }
            out[i] = s / l[(i, i)];
        }
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut m = DMatrix::zeros(k, k);
        for ((off, len), g) in self.blocks.iter().zip(&self.gram) {
            m.view_mut((*off, *off), (*len, *len)).copy_from(g);
        }
        m
    }

    /// Explicit inverse, assembled block by block.
    pub fn dense_inverse(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut m = DMatrix::zeros(k, k);
        for ((off, len), g) in self.blocks.iter().zip(&self.gram) {
            let inv = g.clone().try_inverse().unwrap_or_else(|| DMatrix::zeros(*len, *len));
            m.view_mut((*off, *off), (*len, *len)).copy_from(&inv);
        }
        m
    }
}
