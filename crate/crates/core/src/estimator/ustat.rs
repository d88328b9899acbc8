//! Second-order U-statistic terms.
//!
//! With `c_i = L^{-1} b_hk(X_i)` for the block Cholesky factor `L` of
//! `Omega_hat`, the pair kernel `b_i^T Omega^{-1} b_j` is `c_i . c_j` when
//! both points share a block and zero otherwise. Per-block sums then give
//! every row in `O(p q + q^2)` instead of a pass over all partners.

use super::omega::OmegaFactor;
use crate::basis::Basis;
use crate::par;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Which point's `rho_h` enters the right factor of the second-order `Q` term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QSlot {
    /// `rho_h(X_2)`: the partner in the pair.
    #[default]
    Partner,
    /// `rho_h(X_1)` on both sides.
    Anchor,
}

/// Per-point quantities for observations inside the window.
#[derive(Debug, Clone, Default)]
pub struct WindowTerms {
    /// Estimation sample size used in the normalizations.
    pub n: usize,
    pub d: usize,
    pub q: usize,
    /// Stretched coordinates, `m x d`.
    pub v: Vec<f64>,
    /// `rho(v_i)`, `m x q`.
    pub rho: Vec<f64>,
    /// `K_h(X_i)`.
    pub kw: Vec<f64>,
    /// `A_i - pi_hat(X_i)`.
    pub ra: Vec<f64>,
    pub phi_a1: Vec<f64>,
    pub phi_y1: Vec<f64>,
    /// Partner factor of the second-order `Q` kernel.
    pub w: Vec<f64>,
    /// Partner factor of the second-order `R` kernel.
    pub r: Vec<f64>,
}

impl WindowTerms {
    pub fn m(&self) -> usize {
        self.kw.len()
    }

    fn rho(&self, i: usize) -> &[f64] {
        &self.rho[i * self.q..(i + 1) * self.q]
    }
}

const CHUNK: usize = 256;

/// `U_n` sums over ordered pairs `i != j`, normalized by `n (n-1)`.
pub fn second_order_blocked(
    t: &WindowTerms,
    basis: &dyn Basis,
    omega: &OmegaFactor,
    slot: QSlot,
) -> (DMatrix<f64>, DVector<f64>) {
    let q = t.q;
    let m = t.m();
    let mut q2 = DMatrix::zeros(q, q);
    let mut r2 = DVector::zeros(q);
    if t.n < 2 || m == 0 {
        return (q2, r2);
    }
    let blocks = omega.blocks();
    let p = blocks.iter().map(|b| b.1).max().unwrap_or(0);

    // whitened basis per point
    let whitened: Vec<Option<(usize, Vec<f64>)>> = par::map_range(m, |i| {
        let mut vals = Vec::with_capacity(p);
        let v = &t.v[i * t.d..(i + 1) * t.d];
        let b = basis.eval_block(v, &mut vals)?;
        let mut c = vec![0.0; vals.len()];
        omega.whiten(b, &vals, &mut c);
        Some((b, c))
    });

    // members of every block in index order
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); blocks.len()];
    for (i, wc) in whitened.iter().enumerate() {
        if let Some((b, _)) = wc {
            members[*b].push(i);
        }
    }
    let active: Vec<usize> = (0..blocks.len()).filter(|&b| !members[b].is_empty()).collect();
    let mut slot_of = vec![usize::MAX; blocks.len()];
    for (s, &b) in active.iter().enumerate() {
        slot_of[b] = s;
    }

    // per-block sums: M = sum c K w rho^T, s = sum c K w, S = sum c K r
    struct Sums {
        m: Vec<f64>,
        s: Vec<f64>,
        big_s: Vec<f64>,
    }
    let sums: Vec<Sums> = par::map(&active, |&b| {
        let len = blocks[b].1;
        let mut out = Sums {
            m: vec![0.0; len * q],
            s: vec![0.0; len],
            big_s: vec![0.0; len],
        };
        for &j in &members[b] {
            let c = &whitened[j].as_ref().unwrap().1;
            let kw = t.kw[j] * t.w[j];
            let kr = t.kw[j] * t.r[j];
            let rho = t.rho(j);
            for a in 0..len {
                let ca = c[a];
                out.s[a] += ca * kw;
                out.big_s[a] += ca * kr;
                let row = &mut out.m[a * q..(a + 1) * q];
                for (mm, rr) in row.iter_mut().zip(rho) {
                    *mm += ca * kw * rr;
                }
            }
        }
        out
    });

    let nchunks = m.div_ceil(CHUNK);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = par::map_range(nchunks, |ch| {
        let mut qq = vec![0.0; q * q];
        let mut rr = vec![0.0; q];
        let mut row = vec![0.0; q];
        for i in ch * CHUNK..((ch + 1) * CHUNK).min(m) {
            let Some((b, c)) = &whitened[i] else {
                continue;
            };
            let sm = &sums[slot_of[*b]];
            let len = c.len();
            let cc: f64 = c.iter().map(|x| x * x).sum();
            let g = t.kw[i] * t.ra[i];
            let rho_i = t.rho(i);
            // R: c_i . (S - c_i K_i r_i)
            let u: f64 = (0..len).map(|a| c[a] * sm.big_s[a]).sum::<f64>() - cc * t.kw[i] * t.r[i];
            for a in 0..q {
                rr[a] -= g * rho_i[a] * u;
            }
            match slot {
                QSlot::Partner => {
                    // c_i^T M - (c_i . c_i) K_i w_i rho_i^T
                    let self_term = cc * t.kw[i] * t.w[i];
                    for (col, rv) in row.iter_mut().enumerate() {
                        let mut acc = 0.0;
                        for a in 0..len {
                            acc += c[a] * sm.m[a * q + col];
                        }
                        *rv = acc - self_term * rho_i[col];
                    }
                    for a in 0..q {
                        let ga = g * rho_i[a];
                        for col in 0..q {
                            qq[a * q + col] -= ga * row[col];
                        }
                    }
                }
                QSlot::Anchor => {
                    let sc: f64 =
                        (0..len).map(|a| c[a] * sm.s[a]).sum::<f64>() - cc * t.kw[i] * t.w[i];
                    for a in 0..q {
                        let ga = g * rho_i[a] * sc;
                        for col in 0..q {
                            qq[a * q + col] -= ga * rho_i[col];
                        }
                    }
                }
            }
        }
        (qq, rr)
    });
    for (qq, rr) in partials {
        for a in 0..q {
            r2[a] += rr[a];
            for col in 0..q {
                q2[(a, col)] += qq[a * q + col];
            }
        }
    }
    let norm = 1.0 / (t.n as f64 * (t.n as f64 - 1.0));
    (q2 * norm, r2 * norm)
}
