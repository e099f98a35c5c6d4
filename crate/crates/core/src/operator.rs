//! The probabilistic magnetic Laplacian `ℒ = I - P`, its dense spectrum, the
//! Schur complement onto the previous level and the Kirchhoff tree count.

use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::decimation::zeros_of_d;
use crate::error::{Result, SgError};
use crate::gasket::{GasketGraph, Orientation};
use crate::gauge::Connection;

/// Largest dimension accepted by the dense eigensolver.
pub const DEFAULT_MAX_DIM: usize = 4000;
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-6;
pub const DEFAULT_SINGULAR_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct MagneticOperator {
    pub level: usize,
    pub matrix: DMatrix<Complex64>,
    pub degrees: Vec<usize>,
    pub prev_level_ids: Vec<usize>,
    /// Vertices of the unit holes; each triple is one block of the `D` block.
    pub new_cells: Vec<[usize; 3]>,
}

pub fn assemble(g: &GasketGraph, conn: &Connection) -> Result<MagneticOperator> {
    if conn.level != g.level || conn.phase.len() != g.edges.len() {
        return Err(SgError::Argument(format!(
            "connection for level {} does not match graph of level {}",
            conn.level, g.level
        )));
    }
    let n = g.num_vertices();
    let degrees = g.degrees();
    let mut m = DMatrix::<Complex64>::identity(n, n);
    for x in 0..n {
        let d = degrees[x] as f64;
        for &(y, _) in g.neighbors(x) {
            m[(x, y)] = -conn.omega(g, x, y) / d;
        }
    }
    let new_cells = if g.level == 0 {
        Vec::new()
    } else {
        g.cells
            .iter()
            .filter(|c| c.orientation == Orientation::Downright && c.side == 1)
            .map(|c| c.vertices)
            .collect()
    };
    Ok(MagneticOperator {
        level: g.level,
        matrix: m,
        degrees,
        prev_level_ids: g.prev_level_ids.clone(),
        new_cells,
    })
}

impl MagneticOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `T = W^{1/2} ℒ W^{-1/2}` with `W` the diagonal of degrees.
    pub fn symmetrized(&self) -> DMatrix<Complex64> {
        let s: Vec<f64> = self.degrees.iter().map(|&d| (d as f64).sqrt()).collect();
        DMatrix::from_fn(self.dim(), self.dim(), |i, j| self.matrix[(i, j)] * (s[i] / s[j]))
    }

    /// Largest entrywise deviation of `T` from its conjugate transpose.
    pub fn hermitian_residual(&self) -> f64 {
        let t = self.symmetrized();
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((t[(i, j)] - t[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// CSV of nonzero entries, `row,col,re,im`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row,col,re,im\n");
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let z = self.matrix[(i, j)];
                if z != Complex64::zero() {
                    s.push_str(&format!("{i},{j},{:e},{:e}\n", z.re, z.im));
                }
            }
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectrumEntry {
    pub eigenvalue: f64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Spectrum {
    pub pairs: Vec<SpectrumEntry>,
}

impl Spectrum {
    /// Greedy gap clustering of sorted values; each cluster is represented by its mean.
    pub fn from_sorted(values: &[f64], tol: f64) -> Spectrum {
        let mut pairs: Vec<SpectrumEntry> = Vec::new();
        let mut sum = 0.0;
        let mut last = f64::NEG_INFINITY;
        for &v in values {
            match pairs.last_mut() {
                Some(p) if v - last < tol => {
                    p.multiplicity += 1;
                    sum += v;
                    p.eigenvalue = sum / p.multiplicity as f64;
                }
                _ => {
                    sum = v;
                    pairs.push(SpectrumEntry {
                        eigenvalue: v,
                        multiplicity: 1,
                    });
                }
            }
            last = v;
        }
        Spectrum { pairs }
    }

    pub fn total_multiplicity(&self) -> usize {
        self.pairs.iter().map(|p| p.multiplicity).sum()
    }

    /// Multiplicity of the cluster within `tol` of `lambda`, 0 if none.
    pub fn multiplicity_of(&self, lambda: f64, tol: f64) -> usize {
        self.pairs
            .iter()
            .filter(|p| (p.eigenvalue - lambda).abs() <= tol)
            .map(|p| p.multiplicity)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("eigenvalue,multiplicity\n");
        for p in &self.pairs {
            s.push_str(&format!("{:.17e},{}\n", p.eigenvalue, p.multiplicity));
        }
        s
    }
}

/// True when both spectra have the same multiplicities and eigenvalues within `tol`.
pub fn spectra_match(a: &Spectrum, b: &Spectrum, tol: f64) -> bool {
    a.pairs.len() == b.pairs.len()
        && a.pairs
            .iter()
            .zip(&b.pairs)
            .all(|(p, q)| p.multiplicity == q.multiplicity && (p.eigenvalue - q.eigenvalue).abs() <= tol)
}

/// All eigenvalues of `ℒ` in ascending order, with multiplicity.
pub fn eigenvalues(op: &MagneticOperator) -> Result<Vec<f64>> {
    eigenvalues_with_max(op, DEFAULT_MAX_DIM)
}

pub fn eigenvalues_with_max(op: &MagneticOperator, max_dim: usize) -> Result<Vec<f64>> {
    if op.dim() > max_dim {
        return Err(SgError::ResourceLimit(format!(
            "dimension {} exceeds the dense limit {max_dim}",
            op.dim()
        )));
    }
    let t = op.symmetrized();
    let max_iter = 1000 * op.dim().max(10);
    let eig = SymmetricEigen::try_new(t, 1e-15, max_iter)
        .ok_or_else(|| SgError::NoConvergence(format!("dimension {}, {max_iter} sweeps", op.dim())))?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

pub fn spectrum(op: &MagneticOperator, cluster_tol: f64) -> Result<Spectrum> {
    Ok(Spectrum::from_sorted(&eigenvalues(op)?, cluster_tol))
}

/// `(A - λ) - B (D - λ)^{-1} C` indexed by `prev_level_ids`, with `D - λ`
/// inverted one unit hole at a time.
pub fn schur_complement(op: &MagneticOperator, lambda: f64) -> Result<DMatrix<Complex64>> {
    schur_complement_with_tol(op, lambda, DEFAULT_SINGULAR_TOL)
}

pub fn schur_complement_with_tol(op: &MagneticOperator, lambda: f64, tol: f64) -> Result<DMatrix<Complex64>> {
    if op.level == 0 {
        return Err(SgError::NoPreviousLevel);
    }
    let n = op.dim();
    let mut old_pos = vec![usize::MAX; n];
    for (k, &id) in op.prev_level_ids.iter().enumerate() {
        old_pos[id] = k;
    }
    let m = &op.matrix;
    let mut s = DMatrix::<Complex64>::zeros(op.prev_level_ids.len(), op.prev_level_ids.len());
    for (k, &x) in op.prev_level_ids.iter().enumerate() {
        for (l, &y) in op.prev_level_ids.iter().enumerate() {
            s[(k, l)] = m[(x, y)];
        }
        s[(k, k)] -= lambda;
    }
    for cell in &op.new_cells {
        let e = |i: usize, j: usize| {
            let z = m[(cell[i], cell[j])];
            if i == j {
                z - lambda
            } else {
                z
            }
        };
        let (a, b, c) = (e(0, 0), e(0, 1), e(0, 2));
        let (d, ee, f) = (e(1, 0), e(1, 1), e(1, 2));
        let (g, h, i) = (e(2, 0), e(2, 1), e(2, 2));
        let adj = [
            [ee * i - f * h, c * h - b * i, b * f - c * ee],
            [f * g - d * i, a * i - c * g, c * d - a * f],
            [d * h - ee * g, b * g - a * h, a * ee - b * d],
        ];
        let det = a * adj[0][0] + b * adj[1][0] + c * adj[2][0];
        if det.norm() <= tol {
            // cell flux from the product of hopping terms around the hole
            let loop_prod = m[(cell[0], cell[1])] * m[(cell[1], cell[2])] * m[(cell[2], cell[0])];
            let beta = (loop_prod * -64.0).arg() / std::f64::consts::TAU;
            let root = zeros_of_d(beta)
                .into_iter()
                .map(|(r, _)| r)
                .min_by(|p, q| (p - lambda).abs().partial_cmp(&(q - lambda).abs()).unwrap())
                .unwrap_or(f64::NAN);
            return Err(SgError::NearSingular {
                lambda,
                root,
                det: det.norm(),
                tol,
            });
        }
        // old neighbours of the cell: each cell vertex has two
        let mut olds: Vec<usize> = Vec::with_capacity(3);
        for &v in cell {
            for j in 0..n {
                if old_pos[j] != usize::MAX && m[(v, j)] != Complex64::zero() && !olds.contains(&j) {
                    olds.push(j);
                }
            }
        }
        for &x in &olds {
            for &y in &olds {
                let mut acc = Complex64::zero();
                for p in 0..3 {
                    let bx = m[(x, cell[p])];
                    if bx == Complex64::zero() {
                        continue;
                    }
                    for q in 0..3 {
                        let cy = m[(cell[q], y)];
                        if cy != Complex64::zero() {
                            acc += bx * adj[p][q] * cy;
                        }
                    }
                }
                s[(old_pos[x], old_pos[y])] -= acc / det;
            }
        }
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogDet {
    pub log_magnitude: f64,
    pub zero_count: usize,
}

/// Sum of `ln λ` over the eigenvalues; with `drop_zero` those below 1e-9 are
/// skipped and counted.
pub fn log_determinant(op: &MagneticOperator, drop_zero: bool) -> Result<LogDet> {
    let mut out = LogDet {
        log_magnitude: 0.0,
        zero_count: 0,
    };
    for v in eigenvalues(op)? {
        if v.abs() < 1e-9 {
            out.zero_count += 1;
            if drop_zero {
                continue;
            }
            out.log_magnitude = f64::NEG_INFINITY;
            continue;
        }
        if v < 0.0 {
            return Err(SgError::NegativeEigenvalue(v));
        }
        out.log_magnitude += v.ln();
    }
    Ok(out)
}

/// `ln |det(D + c e_a e_a* - A^ω)|`: the combinatorial magnetic Laplacian of `g`
/// with one extra edge of conductance `c` from `anchor` to a Dirichlet point.
pub fn dirichlet_log_det(g: &GasketGraph, conn: &Connection, anchor: usize, c: f64) -> Result<f64> {
    if !c.is_finite() || c <= 0.0 {
        return Err(SgError::Argument(format!(
            "boundary conductance must be positive, got {c}"
        )));
    }
    if anchor >= g.num_vertices() {
        return Err(SgError::Argument(format!("anchor {anchor} out of range")));
    }
    let op = assemble(g, conn)?;
    let n = op.dim();
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for x in 0..n {
        let d = op.degrees[x] as f64;
        for y in 0..n {
            m[(x, y)] = op.matrix[(x, y)] * d;
        }
    }
    m[(anchor, anchor)] += Complex64::from(c);
    let lu = m.lu();
    let u = lu.u();
    let mut log = 0.0;
    for i in 0..n {
        let v = u[(i, i)].norm();
        if v == 0.0 {
            return Err(SgError::Internal("singular Dirichlet Laplacian".into()));
        }
        log += v.ln();
    }
    Ok(log)
}

/// Largest level for the exact cofactor.
pub const KIRCHHOFF_MAX_LEVEL: usize = 3;

/// Number of spanning trees from a principal minor of the combinatorial
/// Laplacian, by fraction-free elimination over the integers.
pub fn kirchhoff_tree_count(g: &GasketGraph) -> Result<BigInt> {
    if g.level > KIRCHHOFF_MAX_LEVEL {
        return Err(SgError::ResourceLimit(format!(
            "exact tree count limited to level {KIRCHHOFF_MAX_LEVEL}"
        )));
    }
    let n = g.num_vertices() - 1;
    let mut a = vec![vec![BigInt::zero(); n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = BigInt::from(g.degree(i + 1));
        for &(j, _) in g.neighbors(i + 1) {
            if j > 0 {
                row[j - 1] -= 1;
            }
        }
    }
    bareiss_det(a)
}

fn bareiss_det(mut a: Vec<Vec<BigInt>>) -> Result<BigInt> {
    let n = a.len();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if a[k][k].is_zero() {
            let Some(p) = (k + 1..n).find(|&r| !a[r][k].is_zero()) else {
                return Ok(BigInt::zero());
            };
            a.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                a[i][j] = v;
            }
        }
        prev = a[k][k].clone();
    }
    Ok(if n == 0 { BigInt::one() } else { sign * &a[n - 1][n - 1] })
}
