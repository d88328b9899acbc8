//! Shifted Legendre polynomials, tensor bases on the unit cube, the
//! localization window around `x0`, and the piecewise-cube basis.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Largest integer strictly smaller than `x` (so `strict_floor(2.0) == 1`).
pub fn strict_floor(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let f = x.floor();
    let k = if f == x { f - 1.0 } else { f };
    k.max(0.0) as usize
}

pub fn binomial(n: usize, k: usize) -> usize {
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

/// Orthonormal shifted Legendre polynomial of degree `m` on `[0, 1]`.
pub fn legendre_shifted(m: usize, u: f64) -> f64 {
    let t = 2.0 * u - 1.0;
    let (mut p0, mut p1) = (1.0, t);
    if m == 0 {
        return 1.0;
    }
    for k in 2..=m {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (2.0 * m as f64 + 1.0).sqrt() * p1
}

/// Fills `out[0..=max_deg]` with the orthonormal shifted Legendre values at `u`.
pub fn legendre_shifted_all(max_deg: usize, u: f64, out: &mut [f64]) {
    let t = 2.0 * u - 1.0;
    let mut p0 = 1.0;
    out[0] = 1.0;
    if max_deg == 0 {
        return;
    }
    let mut p1 = t;
    out[1] = 3f64.sqrt() * t;
    for k in 2..=max_deg {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
        out[k] = (2.0 * kf + 1.0).sqrt() * p2;
    }
}

/// Same polynomial from its explicit monomial expansion. Cancellation makes
/// this inaccurate for large `m`; it exists as a cross-check.
pub fn legendre_shifted_series(m: usize, u: f64) -> f64 {
    let scale = (2.0 * m as f64 + 1.0).sqrt();
    let mut acc = 0.0;
    for l in 0..=m {
        let sign = if (l + m) % 2 == 0 { 1.0 } else { -1.0 };
        let c = binomial(m, l) as f64 * binomial(m + l, l) as f64;
        acc += sign * c * u.powi(l as i32);
    }
    scale * acc
}

/// A finite basis of functions on `[0,1]^d` split into contiguous blocks,
/// where at most one block is non-zero at any point.
pub trait Basis: Send + Sync {
    fn d(&self) -> usize;
    fn dim(&self) -> usize;
    /// `(offset, len)` of every block.
    fn blocks(&self) -> Vec<(usize, usize)>;
    /// Block that is active at `v`, if any.
    fn block_of(&self, v: &[f64]) -> Option<usize>;
    /// Writes the active block's values into `out` (length of that block)
    /// and returns the block index. `None` means the whole vector is zero.
    fn eval_block(&self, v: &[f64], out: &mut Vec<f64>) -> Option<usize>;
    /// Region `(lo, hi)` of `[0,1]^d` where block `b` lives.
    fn block_box(&self, b: usize) -> (Vec<f64>, Vec<f64>);
    /// Highest per-coordinate polynomial degree.
    fn poly_degree(&self) -> usize;

    /// Dense evaluation at `v`.
    fn eval(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: v.len(),
            });
        }
        let mut full = vec![0.0; self.dim()];
        let mut tmp = Vec::new();
        if let Some(b) = self.eval_block(v, &mut tmp) {
            let (off, _) = self.blocks()[b];
            full[off..off + tmp.len()].copy_from_slice(&tmp);
        }
        Ok(full)
    }
}

/// All products of per-coordinate Legendre terms with total degree at most `degree`.
///
/// Terms are in graded lexicographic order: by total degree, then by
/// exponent of the first coordinate (descending), and so on. Index 0 is
/// the constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBasis {
    d: usize,
    degree: usize,
    terms: Vec<Vec<usize>>,
}

impl TensorBasis {
    pub fn new(d: usize, degree: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("dimension must be positive"));
        }
        let mut terms = Vec::with_capacity(binomial(d + degree, degree));
        for total in 0..=degree {
            let mut cur = vec![0usize; d];
            push_compositions(total, 0, &mut cur, &mut terms);
        }
        Ok(TensorBasis { d, degree, terms })
    }

    /// Basis whose degree is `strict_floor(gamma)`.
    pub fn for_smoothness(d: usize, gamma: f64) -> Result<Self> {
        TensorBasis::new(d, strict_floor(gamma))
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn q(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Vec<usize>] {
        &self.terms
    }

    /// Unchecked evaluation into `out` (length `q`).
    pub fn eval_into(&self, v: &[f64], out: &mut [f64]) {
        let p = self.degree + 1;
        let mut table = [0.0f64; 64];
        let mut heap;
        let vals: &mut [f64] = if self.d * p <= 64 {
            &mut table[..self.d * p]
        } else {
            heap = vec![0.0; self.d * p];
            &mut heap
        };
        for (j, &vj) in v.iter().enumerate() {
            legendre_shifted_all(self.degree, vj, &mut vals[j * p..(j + 1) * p]);
        }
        for (o, term) in out.iter_mut().zip(&self.terms) {
            let mut acc = 1.0;
            for (j, &e) in term.iter().enumerate() {
                if e > 0 {
                    acc *= vals[j * p + e];
                }
            }
            *o = acc;
        }
    }
}

fn push_compositions(rem: usize, axis: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let d = cur.len();
    if axis == d - 1 {
        cur[axis] = rem;
        out.push(cur.clone());
        return;
    }
    for e in (0..=rem).rev() {
        cur[axis] = e;
        push_compositions(rem - e, axis + 1, cur, out);
    }
    cur[axis] = 0;
}

impl Basis for TensorBasis {
    fn d(&self) -> usize {
        self.d
    }
    fn dim(&self) -> usize {
        self.q()
    }
    fn blocks(&self) -> Vec<(usize, usize)> {
        vec![(0, self.q())]
    }
    fn block_of(&self, _v: &[f64]) -> Option<usize> {
        Some(0)
    }
    fn eval_block(&self, v: &[f64], out: &mut Vec<f64>) -> Option<usize> {
        out.resize(self.q(), 0.0);
        self.eval_into(v, out);
        Some(0)
    }
    fn block_box(&self, _b: usize) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.d], vec![1.0; self.d])
    }
    fn poly_degree(&self) -> usize {
        self.degree
    }
}

/// The window `{x : max_j |x_j - x0_j| <= h/2}` and its stretch map onto `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedFrame {
    pub x0: Vec<f64>,
    pub h: f64,
}

impl LocalizedFrame {
    pub fn new(x0: Vec<f64>, h: f64) -> Result<Self> {
        if x0.is_empty() {
            return Err(Error::config("x0 must have at least one coordinate"));
        }
        if x0.iter().any(|&c| !(c > 0.0 && c < 1.0)) {
            return Err(Error::config("x0 must lie in the open unit cube"));
        }
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::config(format!("bandwidth {h} outside (0, 1]")));
        }
        Ok(LocalizedFrame { x0, h })
    }

    pub fn d(&self) -> usize {
        self.x0.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let r = 0.5 * self.h;
        x.iter().zip(&self.x0).all(|(a, b)| (a - b).abs() <= r)
    }

    /// `v = 1/2 + (x - x0)/h`.
    pub fn stretch(&self, x: &[f64], v: &mut [f64]) {
        for ((vi, xi), ci) in v.iter_mut().zip(x).zip(&self.x0) {
            *vi = (0.5 + (xi - ci) / self.h).clamp(0.0, 1.0);
        }
    }

    /// Inverse of the stretch map.
    pub fn unstretch(&self, v: &[f64], x: &mut [f64]) {
        for ((xi, vi), ci) in x.iter_mut().zip(v).zip(&self.x0) {
            *xi = ci + self.h * (vi - 0.5);
        }
    }

    /// `h^{-d}` inside the window, zero outside.
    pub fn kernel_weight(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            self.h.powi(-(self.d() as i32))
        } else {
            0.0
        }
    }

    /// Localized basis `b(1/2 + (x-x0)/h) 1{x in window}`.
    pub fn eval_localized<B: Basis + ?Sized>(&self, basis: &B, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d() || basis.d() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: if x.len() != self.d() { x.len() } else { basis.d() },
            });
        }
        if !self.contains(x) {
            return Ok(vec![0.0; basis.dim()]);
        }
        let mut v = vec![0.0; self.d()];
        self.stretch(x, &mut v);
        basis.eval(&v)
    }
}

/// Axis-aligned cube given by its lower corner and side length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub lo: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn centered(center: &[f64], side: f64) -> Self {
        Cube {
            lo: center.iter().map(|c| c - 0.5 * side).collect(),
            side,
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().map(|l| l + 0.5 * self.side).collect()
    }

    /// Half-open membership, closed on faces that touch 1.
    pub fn contains(&self, v: &[f64]) -> bool {
        v.iter().zip(&self.lo).all(|(&x, &l)| {
            let hi = l + self.side;
            x >= l && (x < hi || (hi >= 1.0 - 1e-12 && x <= hi))
        })
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.lo.len() as i32)
    }
}

/// Block basis with a scaled tensor Legendre basis on each disjoint cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseCubeBasis {
    cubes: Vec<Cube>,
    local: TensorBasis,
    grid: Option<usize>,
}

impl PiecewiseCubeBasis {
    pub fn new(cubes: Vec<Cube>, degree: usize) -> Result<Self> {
        let d = cubes
            .first()
            .map(|c| c.lo.len())
            .ok_or_else(|| Error::config("piecewise basis needs at least one cube"))?;
        for c in &cubes {
            if c.lo.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.lo.len(),
                });
            }
            if !(c.side > 0.0) || c.lo.iter().any(|&l| l < -1e-12 || l + c.side > 1.0 + 1e-12) {
                return Err(Error::config("cubes must lie inside the unit cube"));
            }
        }
        for i in 0..cubes.len() {
            for j in i + 1..cubes.len() {
                let (a, b) = (&cubes[i], &cubes[j]);
                let overlap = a.lo.iter().zip(&b.lo).all(|(&la, &lb)| {
                    let lo = la.max(lb);
                    let hi = (la + a.side).min(lb + b.side);
                    hi - lo > 1e-12
                });
                if overlap {
                    return Err(Error::OverlappingCubes(i, j));
                }
            }
        }
        Ok(PiecewiseCubeBasis {
            cubes,
            local: TensorBasis::new(d, degree)?,
            grid: None,
        })
    }

    /// The regular partition of `[0,1]^d` into `j^d` cubes, last axis fastest.
    pub fn grid(d: usize, j: usize, degree: usize) -> Result<Self> {
        if j == 0 || d == 0 {
            return Err(Error::config("grid needs positive dimension and cube count"));
        }
        let side = 1.0 / j as f64;
        let total = j
            .checked_pow(d as u32)
            .ok_or_else(|| Error::config("too many cubes"))?;
        let mut cubes = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let mut lo = vec![0.0; d];
            for ax in (0..d).rev() {
                lo[ax] = (rem % j) as f64 * side;
                rem /= j;
            }
            cubes.push(Cube { lo, side });
        }
        Ok(PiecewiseCubeBasis {
            cubes,
            local: TensorBasis::new(d, degree)?,
            grid: Some(j),
        })
    }

    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn local(&self) -> &TensorBasis {
        &self.local
    }

    pub fn block_len(&self) -> usize {
        self.local.q()
    }
}

impl Basis for PiecewiseCubeBasis {
    fn d(&self) -> usize {
        self.local.d()
    }
    fn dim(&self) -> usize {
        self.cubes.len() * self.local.q()
    }
    fn blocks(&self) -> Vec<(usize, usize)> {
        let p = self.local.q();
        (0..self.cubes.len()).map(|i| (i * p, p)).collect()
    }
    fn block_of(&self, v: &[f64]) -> Option<usize> {
        if let Some(j) = self.grid {
            let mut idx = 0usize;
            for &x in v {
                if !(0.0..=1.0).contains(&x) {
                    return None;
                }
                let c = ((x * j as f64).floor() as usize).min(j - 1);
                idx = idx * j + c;
            }
            return Some(idx);
        }
        self.cubes.iter().position(|c| c.contains(v))
    }
    fn eval_block(&self, v: &[f64], out: &mut Vec<f64>) -> Option<usize> {
        let b = self.block_of(v)?;
        let cube = &self.cubes[b];
        let mut u = [0.0f64; 8];
        let mut heap;
        let local: &mut [f64] = if v.len() <= 8 {
            &mut u[..v.len()]
        } else {
            heap = vec![0.0; v.len()];
            &mut heap
        };
        for ((ui, &vi), &l) in local.iter_mut().zip(v).zip(&cube.lo) {
            *ui = ((vi - l) / cube.side).clamp(0.0, 1.0);
        }
        out.resize(self.local.q(), 0.0);
        self.local.eval_into(local, out);
        let scale = cube.volume().sqrt().recip();
        for o in out.iter_mut() {
            *o *= scale;
        }
        Some(b)
    }
    fn block_box(&self, b: usize) -> (Vec<f64>, Vec<f64>) {
        let c = &self.cubes[b];
        (c.lo.clone(), c.lo.iter().map(|l| l + c.side).collect())
    }
    fn poly_degree(&self) -> usize {
        self.local.degree()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_examples() {
        assert_eq!(legendre_shifted(0, 0.37), 1.0);
        assert!(legendre_shifted(1, 0.5).abs() < 1e-15);
        assert!((legendre_shifted(2, 0.0) - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn recurrence_matches_series() {
        for m in 0..=8 {
            for i in 0..=20 {
                let u = i as f64 / 20.0;
                let a = legendre_shifted(m, u);
                let b = legendre_shifted_series(m, u);
                assert!((a - b).abs() < 1e-9 * (1.0 + b.abs()), "m={m} u={u}");
            }
        }
    }

    #[test]
    fn strict_floor_examples() {
        assert_eq!(strict_floor(2.0), 1);
        assert_eq!(strict_floor(2.5), 2);
        assert_eq!(strict_floor(1.0), 0);
        assert_eq!(strict_floor(0.1), 0);
    }

    #[test]
    fn tensor_lengths_and_order() {
        assert_eq!(TensorBasis::new(1, 2).unwrap().q(), 3);
        assert_eq!(TensorBasis::new(2, 2).unwrap().q(), 6);
        let b = TensorBasis::new(2, 2).unwrap();
        assert_eq!(
            b.terms(),
            &[vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        let v = TensorBasis::new(2, 1).unwrap().eval(&[0.5, 0.5]).unwrap();
        assert_eq!(v[0], 1.0);
        assert!(v[1].abs() < 1e-15 && v[2].abs() < 1e-15);
    }

    #[test]
    fn kernel_examples() {
        let f = LocalizedFrame::new(vec![0.5], 0.5).unwrap();
        assert_eq!(f.kernel_weight(&[0.6]), 2.0);
        assert_eq!(f.kernel_weight(&[0.9]), 0.0);
        let f2 = LocalizedFrame::new(vec![0.5, 0.5], 0.2).unwrap();
        assert!((f2.kernel_weight(&[0.55, 0.55]) - 25.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_is_rejected() {
        let cubes = vec![
            Cube { lo: vec![0.0], side: 0.5 },
            Cube { lo: vec![0.25], side: 0.5 },
        ];
        assert!(matches!(
            PiecewiseCubeBasis::new(cubes, 1),
            Err(Error::OverlappingCubes(0, 1))
        ));
    }
}
