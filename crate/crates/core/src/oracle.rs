//! Direct sparse finite-difference reference solver for the linear problems.
//!
//! Second-order stencils on the same node-centred grid the network uses.
//! Dirichlet nodes are eliminated into the right-hand side; nodes on an
//! unconstrained edge keep the PDE with one-sided differences normal to the
//! edge.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{invalid, Error, Result};
use crate::fieldgrid::{load_fgrd, save_fgrd, Field, Grid2D};
use crate::problems::{Classification, LinearPDEProblem};

/// Residual bound on accepted solves (row-normalised system).
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Relaxed bound for hyperbolic problems.
pub const HYPERBOLIC_TOL: f64 = 1e-8;

/// Assembled system `A x = b` over the non-Dirichlet nodes.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
    /// Grid node of every unknown.
    pub nodes: Vec<(usize, usize)>,
}

impl SparseSystem {
    /// `max |A x - b|`.
    pub fn residual_inf(&self, x: &[f64]) -> f64 {
        let mut r = self.rhs.iter().map(|v| -v).collect::<Vec<_>>();
        for &(i, j, v) in &self.triplets {
            r[i] += v * x[j];
        }
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(i, j, v) in &self.triplets {
            y[i] += v * x[j];
        }
        y
    }
}

/// Weights of `d^k/ds^k` at offset 0 along one axis, as `(offset, weight)`
/// pairs in units of the spacing, second-order accurate.
fn stencil_1d(deriv: usize, at_low: bool, at_high: bool) -> Vec<(isize, f64)> {
    match (deriv, at_low, at_high) {
        (1, false, false) => vec![(-1, -0.5), (1, 0.5)],
        (2, false, false) => vec![(-1, 1.0), (0, -2.0), (1, 1.0)],
        (1, true, _) => vec![(0, -1.5), (1, 2.0), (2, -0.5)],
        (1, _, true) => vec![(0, 1.5), (-1, -2.0), (-2, 0.5)],
        (2, true, _) => vec![(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)],
        (2, _, true) => vec![(0, 2.0), (-1, -5.0), (-2, 4.0), (-3, -1.0)],
        _ => unreachable!("derivative order {deriv}"),
    }
}

/// Assemble the second-order discretisation of `prob` on `grid`.
pub fn assemble(prob: &LinearPDEProblem, grid: &Grid2D) -> Result<SparseSystem> {
    let (nh, nw) = (grid.nh(), grid.nw());
    let (h1, h2) = (grid.d1(), grid.d2());
    let c = prob.coeffs;
    let mut index = vec![usize::MAX; nh * nw];
    let mut nodes = Vec::new();
    let mut fixed = HashMap::new();
    for i in 0..nh {
        for j in 0..nw {
            match prob.dirichlet_at(grid, i, j) {
                Some(v) => {
                    fixed.insert((i, j), v);
                }
                None => {
                    index[i * nw + j] = nodes.len();
                    nodes.push((i, j));
                }
            }
        }
    }
    if nodes.is_empty() {
        return invalid("every node is a Dirichlet node; nothing to solve");
    }
    let n = nodes.len();
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    for (row, &(i, j)) in nodes.iter().enumerate() {
        let (lo1, hi1) = (i == 0, i + 1 == nh);
        let (lo2, hi2) = (j == 0, j + 1 == nw);
        let mut entries: Vec<((isize, isize), f64)> = Vec::new();
        let mut axis_terms = |deriv: usize, coef: f64, axis: usize| {
            if coef == 0.0 {
                return;
            }
            let h = if axis == 0 { h1 } else { h2 };
            let (lo, hi) = if axis == 0 { (lo1, hi1) } else { (lo2, hi2) };
            for (off, w) in stencil_1d(deriv, lo, hi) {
                let d = if axis == 0 { (off, 0) } else { (0, off) };
                entries.push((d, coef * w / h.powi(deriv as i32)));
            }
        };
        axis_terms(2, c.a, 0);
        axis_terms(2, c.c, 1);
        axis_terms(1, c.d, 0);
        axis_terms(1, c.e, 1);
        if c.b != 0.0 {
            if lo1 || hi1 || lo2 || hi2 {
                return invalid("mixed derivative on an unconstrained edge is not supported");
            }
            let k = c.b / (4.0 * h1 * h2);
            entries.extend([((1, 1), k), ((-1, -1), k), ((1, -1), -k), ((-1, 1), -k)]);
        }
        if c.f != 0.0 {
            entries.push(((0, 0), c.f));
        }
        let mut b = prob.g_at(grid.x1(i), grid.x2(j));
        let mut merged: HashMap<usize, f64> = HashMap::new();
        for ((di, dj), w) in entries {
            let (ii, jj) = (i as isize + di, j as isize + dj);
            if ii < 0 || jj < 0 || ii >= nh as isize || jj >= nw as isize {
                return invalid(format!("stencil leaves the grid at node ({i}, {j})"));
            }
            let (ii, jj) = (ii as usize, jj as usize);
            match fixed.get(&(ii, jj)) {
                Some(v) => b -= w * v,
                None => *merged.entry(index[ii * nw + jj]).or_insert(0.0) += w,
            }
        }
        let scale = merged.values().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::Numerical(format!("empty equation at node ({i}, {j})")));
        }
        let mut cols: Vec<_> = merged.into_iter().collect();
        cols.sort_by_key(|e| e.0);
        for (col, w) in cols {
            triplets.push((row, col, w / scale));
        }
        rhs[row] = b / scale;
    }
    Ok(SparseSystem {
        n,
        triplets,
        rhs,
        nodes,
    })
}

/// Sparse LU solve with iterative refinement.
pub fn solve_system(sys: &SparseSystem, tol: f64) -> Result<Vec<f64>> {
    let trip: Vec<Triplet<usize, usize, f64>> = sys.triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(sys.n, sys.n, &trip)
        .map_err(|e| Error::Numerical(format!("sparse assembly failed: {e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| Error::Numerical(format!("sparse LU failed: {e:?}")))?;
    let b = Col::<f64>::from_fn(sys.n, |k| sys.rhs[k]);
    let sol = lu.solve(&b);
    let mut x: Vec<f64> = (0..sys.n).map(|k| sol[k]).collect();
    let mut residual = sys.residual_inf(&x);
    for _ in 0..3 {
        if residual <= tol * 1e-2 {
            break;
        }
        let ax = sys.matvec(&x);
        let r = Col::<f64>::from_fn(sys.n, |k| sys.rhs[k] - ax[k]);
        let dx = lu.solve(&r);
        let cand: Vec<f64> = x.iter().enumerate().map(|(k, v)| v + dx[k]).collect();
        let cr = sys.residual_inf(&cand);
        if cr >= residual {
            break;
        }
        x = cand;
        residual = cr;
    }
    if !(residual <= tol) {
        return Err(Error::NonConvergence { residual });
    }
    Ok(x)
}

/// Solve `prob` on `grid`; the returned field includes boundary values.
pub fn solve_linear_direct(prob: &LinearPDEProblem, grid: &Grid2D) -> Result<Field> {
    let sys = assemble(prob, grid)?;
    let tol = if prob.classification() == Classification::Hyperbolic {
        log::warn!("hyperbolic system: accepting residuals up to {HYPERBOLIC_TOL:e}");
        HYPERBOLIC_TOL
    } else {
        RESIDUAL_TOL
    };
    let x = solve_system(&sys, tol)?;
    let mut out = Field::zeros(*grid, 1);
    for i in 0..grid.nh() {
        for j in 0..grid.nw() {
            if let Some(v) = prob.dirichlet_at(grid, i, j) {
                out.set(0, i, j, v);
            }
        }
    }
    for (&(i, j), v) in sys.nodes.iter().zip(x) {
        out.set(0, i, j, v);
    }
    Ok(out)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Cache file for a problem and resolution.
pub fn cache_path(dir: &Path, prob: &LinearPDEProblem, grid: &Grid2D) -> PathBuf {
    let key = format!(
        "{}|{}x{}|{:?}|{}|{}",
        prob.name,
        grid.nh(),
        grid.nw(),
        prob.coeffs,
        grid.d1(),
        grid.d2()
    );
    let safe: String = prob.name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '-' }).collect();
    dir.join(format!("oracle-{safe}-{}x{}-{:016x}.fgrd", grid.nh(), grid.nw(), fnv1a(key.as_bytes())))
}

/// Load the cached solution if present, otherwise solve and store it.
pub fn solve_cached(prob: &LinearPDEProblem, grid: &Grid2D, dir: &Path) -> Result<Field> {
    let path = cache_path(dir, prob, grid);
    if path.exists() {
        let f = load_fgrd(&path)?;
        if f.grid().same_shape(grid) && f.channels() == 1 {
            return Field::from_data(*grid, 1, f.into_data());
        }
        log::warn!("ignoring mismatched oracle cache {}", path.display());
    }
    let f = solve_linear_direct(prob, grid)?;
    std::fs::create_dir_all(dir)?;
    save_fgrd(&f, &path)?;
    Ok(f)
}
