//! Central-difference kernels, Taylor-polynomial boundary padding and the
//! derivative operators assembled from them.
//!
//! A derivative along one axis is a fixed linear map on every grid line:
//! virtual nodes beyond each end are linear combinations of the nearest
//! interior nodes, so padding followed by the central kernel collapses into
//! a sparse `n x n` matrix ([`LineOperator`]). The same operator serves
//! plain fields and the differentiable engine, whose backward pass is the
//! transpose.

use nalgebra::DMatrix;
use num_rational::Ratio;
use num_traits::{Signed, Zero};

use crate::error::{invalid, Error, Result};
use crate::fieldgrid::{Axis, Field};

pub type Rational = Ratio<i128>;

/// Singular values below this are dropped by the least-squares fit.
pub const PSEUDO_INVERSE_CUTOFF: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct StencilKernel {
    deriv_order: usize,
    acc_order: usize,
    coeffs: Vec<Rational>,
}

impl StencilKernel {
    pub fn deriv_order(&self) -> usize {
        self.deriv_order
    }

    pub fn acc_order(&self) -> usize {
        self.acc_order
    }

    /// Exact coefficients for offsets `-half_width ..= half_width`.
    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn half_width(&self) -> usize {
        self.acc_order / 2
    }

    pub fn weights(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .map(|c| *c.numer() as f64 / *c.denom() as f64)
            .collect()
    }

    /// `sum_k c_k k^p` evaluated exactly.
    pub fn moment(&self, p: u32) -> Rational {
        let m = self.half_width() as i128;
        self.coeffs
            .iter()
            .zip(-m..=m)
            .map(|(c, k)| *c * Rational::from_integer(k.pow(p)))
            .fold(Rational::zero(), |a, b| a + b)
    }
}

fn factorial(n: u32) -> i128 {
    (1..=n as i128).product()
}

/// Solve a square rational system by Gauss-Jordan elimination.
fn solve_rational(mut a: Vec<Vec<Rational>>, mut b: Vec<Rational>) -> Option<Vec<Rational>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        b.swap(col, pivot);
        let inv = a[col][col].recip();
        for k in col..n {
            a[col][k] = a[col][k] * inv;
        }
        b[col] = b[col] * inv;
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col];
                for k in col..n {
                    let v = a[col][k];
                    a[r][k] = a[r][k] - f * v;
                }
                let v = b[col];
                b[r] = b[r] - f * v;
            }
        }
    }
    Some(b)
}

/// Symmetric central-difference kernel for the `deriv_order`-th derivative
/// with truncation order `acc_order`, from the moment (Vandermonde) system.
pub fn central_difference_kernel(deriv_order: usize, acc_order: usize) -> Result<StencilKernel> {
    if !(deriv_order == 1 || deriv_order == 2) {
        return invalid(format!("derivative order must be 1 or 2, got {deriv_order}"));
    }
    if !matches!(acc_order, 2 | 4 | 6 | 8) {
        return invalid(format!("accuracy order must be 2, 4, 6 or 8, got {acc_order}"));
    }
    let m = (acc_order / 2) as i128;
    let n = acc_order + 1;
    let a: Vec<Vec<Rational>> = (0..n as u32)
        .map(|p| (-m..=m).map(|k| Rational::from_integer(k.pow(p))).collect())
        .collect();
    let b: Vec<Rational> = (0..n as u32)
        .map(|p| {
            if p as usize == deriv_order {
                Rational::from_integer(factorial(p))
            } else {
                Rational::zero()
            }
        })
        .collect();
    let coeffs = solve_rational(a, b)
        .ok_or_else(|| Error::Numerical("singular stencil moment system".into()))?;
    Ok(StencilKernel {
        deriv_order,
        acc_order,
        coeffs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaddingSpec {
    pub n_virtual: usize,
    pub degree: usize,
    pub fit_points: usize,
}

impl PaddingSpec {
    pub fn new(n_virtual: usize, degree: usize, fit_points: usize) -> Result<Self> {
        if n_virtual < 1 || degree < 1 || fit_points < degree {
            return invalid(format!(
                "padding needs n_virtual >= 1 and fit_points >= degree >= 1 \
                 (got {n_virtual}, {degree}, {fit_points})"
            ));
        }
        Ok(Self {
            n_virtual,
            degree,
            fit_points,
        })
    }

    /// Quadratic square fit with `acc_order / 2` virtual nodes per side.
    pub fn for_accuracy(acc_order: usize) -> Self {
        Self {
            n_virtual: (acc_order / 2).max(1),
            degree: 2,
            fit_points: 2,
        }
    }

    pub fn with_degree(mut self, degree: usize) -> Result<Self> {
        self.degree = degree;
        self.fit_points = self.fit_points.max(degree);
        Self::new(self.n_virtual, self.degree, self.fit_points)
    }

    pub fn with_fit_points(self, fit_points: usize) -> Result<Self> {
        Self::new(self.n_virtual, self.degree, fit_points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    /// Exact inverse of the square Taylor system (`fit_points == degree`).
    Inverse,
    /// Moore-Penrose pseudo-inverse (least squares); any `fit_points >= degree`.
    PseudoInverse,
}

impl FitMethod {
    pub fn default_for(spec: &PaddingSpec) -> Self {
        if spec.fit_points == spec.degree {
            FitMethod::Inverse
        } else {
            FitMethod::PseudoInverse
        }
    }
}

fn taylor_row(n: f64, degree: usize) -> impl Iterator<Item = f64> {
    (1..=degree as u32).map(move |q| n.powi(q as i32) / factorial(q) as f64)
}

/// Weights `W` with `u(-m) = sum_n W[m-1][n] u(n)`, `n = 0 ..= fit_points`,
/// for `m = 1 ..= n_virtual` on the low side of a line.
pub fn virtual_node_weights(spec: &PaddingSpec, method: FitMethod) -> Result<Vec<Vec<f64>>> {
    let (deg, fit) = (spec.degree, spec.fit_points);
    let a = DMatrix::from_fn(fit, deg, |r, q| {
        let n = (r + 1) as f64;
        n.powi(q as i32 + 1) / factorial(q as u32 + 1) as f64
    });
    let pinv = match method {
        FitMethod::Inverse => {
            if fit != deg {
                return invalid("exact inverse needs fit_points == degree");
            }
            a.clone()
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular Taylor system".into()))?
        }
        FitMethod::PseudoInverse => a
            .pseudo_inverse(PSEUDO_INVERSE_CUTOFF)
            .map_err(|e| Error::Numerical(format!("Taylor fit pseudo-inverse: {e}")))?,
    };
    let mut weights = Vec::with_capacity(spec.n_virtual);
    for m in 1..=spec.n_virtual {
        let b: Vec<f64> = taylor_row(-(m as f64), deg).collect();
        // Coefficients on the differences u(n) - u(0).
        let diff: Vec<f64> = (0..fit)
            .map(|col| (0..deg).map(|q| b[q] * pinv[(q, col)]).sum())
            .collect();
        let mut row = Vec::with_capacity(fit + 1);
        row.push(1.0 - diff.iter().sum::<f64>());
        row.extend(diff);
        weights.push(row);
    }
    Ok(weights)
}

/// Virtual values beyond `side`, ordered by distance (`u(-1), u(-2), ...`).
pub fn virtual_values(line: &[f64], spec: &PaddingSpec, side: Side, method: FitMethod) -> Result<Vec<f64>> {
    if line.len() < spec.fit_points + 1 {
        return invalid(format!(
            "line of {} nodes cannot support a fit over {} interior nodes",
            line.len(),
            spec.fit_points
        ));
    }
    let weights = virtual_node_weights(spec, method)?;
    let sample = |n: usize| match side {
        Side::Low => line[n],
        Side::High => line[line.len() - 1 - n],
    };
    Ok(weights
        .iter()
        .map(|row| row.iter().enumerate().map(|(n, w)| w * sample(n)).sum())
        .collect())
}

/// Extend `line` with `spec.n_virtual` Taylor-extrapolated nodes beyond `side`.
pub fn taylor_pad_line(line: &[f64], spec: &PaddingSpec, side: Side) -> Result<Vec<f64>> {
    let virt = virtual_values(line, spec, side, FitMethod::default_for(spec))?;
    let mut out = Vec::with_capacity(line.len() + virt.len());
    match side {
        Side::Low => {
            out.extend(virt.iter().rev());
            out.extend_from_slice(line);
        }
        Side::High => {
            out.extend_from_slice(line);
            out.extend(virt);
        }
    }
    Ok(out)
}

/// Sparse `n x n` map from a grid line to its padded finite-difference
/// derivative, stored row-compressed.
#[derive(Debug, Clone)]
pub struct LineOperator {
    n: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl LineOperator {
    pub fn new(
        n: usize,
        kernel: &StencilKernel,
        spec: &PaddingSpec,
        spacing: f64,
    ) -> Result<Self> {
        let p = kernel.half_width();
        if spec.n_virtual != p {
            return invalid(format!(
                "accuracy order {} needs {} virtual nodes, padding spec has {}",
                kernel.acc_order(),
                p,
                spec.n_virtual
            ));
        }
        if n < 3 || n < spec.fit_points + 1 {
            return invalid(format!(
                "line of {n} nodes is too short for a fit over {} nodes",
                spec.fit_points
            ));
        }
        let vw = virtual_node_weights(spec, FitMethod::default_for(spec))?;
        let scale = 1.0 / spacing.powi(kernel.deriv_order() as i32);
        let kw = kernel.weights();
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut dense = vec![0.0; n];
        let mut touched = Vec::new();
        for i in 0..n {
            for (t, &w) in kw.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let pos = i as isize + t as isize - p as isize;
                let mut add = |col: usize, v: f64| {
                    if dense[col] == 0.0 {
                        touched.push(col);
                    }
                    dense[col] += v;
                };
                if pos < 0 {
                    let m = (-pos) as usize;
                    for (k, &c) in vw[m - 1].iter().enumerate() {
                        add(k, w * c);
                    }
                } else if pos as usize >= n {
                    let m = pos as usize - (n - 1);
                    for (k, &c) in vw[m - 1].iter().enumerate() {
                        add(n - 1 - k, w * c);
                    }
                } else {
                    add(pos as usize, w);
                }
            }
            touched.sort_unstable();
            touched.dedup();
            for &c in &touched {
                cols.push(c);
                vals.push(dense[c] * scale);
                dense[c] = 0.0;
            }
            touched.clear();
            offsets.push(cols.len());
        }
        Ok(Self {
            n,
            offsets,
            cols,
            vals,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Entries `(col, weight)` of output row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn apply_line(&self, input: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.row(i).map(|(c, w)| w * input[c]).sum();
        }
    }
}

/// Derivative along one grid axis, applied to every line of every channel.
#[derive(Debug, Clone)]
pub struct DerivativeOperator {
    axis: Axis,
    nh: usize,
    nw: usize,
    line: LineOperator,
}

impl DerivativeOperator {
    pub fn new(
        grid: &crate::fieldgrid::Grid2D,
        axis: Axis,
        deriv_order: usize,
        acc_order: usize,
        spec: &PaddingSpec,
    ) -> Result<Self> {
        let kernel = central_difference_kernel(deriv_order, acc_order)?;
        let line = LineOperator::new(grid.count(axis), &kernel, spec, grid.spacing(axis))?;
        Ok(Self {
            axis,
            nh: grid.nh(),
            nw: grid.nw(),
            line,
        })
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn line(&self) -> &LineOperator {
        &self.line
    }

    /// `out = D input` for `channels` stacked `nh x nw` planes.
    pub fn apply(&self, input: &[f64], out: &mut [f64], channels: usize) {
        let plane = self.nh * self.nw;
        debug_assert_eq!(input.len(), channels * plane);
        out.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..channels {
            let src = &input[c * plane..(c + 1) * plane];
            let dst = &mut out[c * plane..(c + 1) * plane];
            match self.axis {
                Axis::Second => {
                    for i in 0..self.nh {
                        let r = i * self.nw..(i + 1) * self.nw;
                        self.line.apply_line(&src[r.clone()], &mut dst[r]);
                    }
                }
                Axis::First => {
                    for i in 0..self.nh {
                        let orow = &mut dst[i * self.nw..(i + 1) * self.nw];
                        for (k, w) in self.line.row(i) {
                            let irow = &src[k * self.nw..(k + 1) * self.nw];
                            for (o, x) in orow.iter_mut().zip(irow) {
                                *o += w * x;
                            }
                        }
                    }
                }
            }
        }
    }

    /// `grad_in += D^T grad_out`.
    pub fn apply_transpose_add(&self, grad_out: &[f64], grad_in: &mut [f64], channels: usize) {
        let plane = self.nh * self.nw;
        for c in 0..channels {
            let go = &grad_out[c * plane..(c + 1) * plane];
            let gi = &mut grad_in[c * plane..(c + 1) * plane];
            match self.axis {
                Axis::Second => {
                    for i in 0..self.nh {
                        let base = i * self.nw;
                        for jo in 0..self.nw {
                            let g = go[base + jo];
                            if g == 0.0 {
                                continue;
                            }
                            for (k, w) in self.line.row(jo) {
                                gi[base + k] += w * g;
                            }
                        }
                    }
                }
                Axis::First => {
                    for i in 0..self.nh {
                        let orow = &go[i * self.nw..(i + 1) * self.nw];
                        for (k, w) in self.line.row(i) {
                            let irow = &mut gi[k * self.nw..(k + 1) * self.nw];
                            for (x, o) in irow.iter_mut().zip(orow) {
                                *x += w * o;
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn apply_field(&self, field: &Field) -> Field {
        let mut out = Field::zeros(*field.grid(), field.channels());
        self.apply(field.data(), out.data_mut(), field.channels());
        out
    }
}

/// Padded central-difference derivative of every channel of `field` along
/// `axis`, scaled by the grid spacing.
pub fn derivative(
    field: &Field,
    axis: Axis,
    deriv_order: usize,
    acc_order: usize,
    spec: &PaddingSpec,
) -> Result<Field> {
    let op = DerivativeOperator::new(field.grid(), axis, deriv_order, acc_order, spec)?;
    Ok(op.apply_field(field))
}

/// Render a kernel as `[a/b, ...]` for display.
pub fn format_kernel(kernel: &StencilKernel) -> String {
    let parts: Vec<String> = kernel
        .coeffs()
        .iter()
        .map(|c| {
            if c.is_integer() {
                format!("{}", c.numer())
            } else if c.is_negative() {
                format!("-{}/{}", c.numer().abs(), c.denom())
            } else {
                format!("{}/{}", c.numer(), c.denom())
            }
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldgrid::Grid2D;

    fn r(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn small_kernels_match_table_values() {
        let k = central_difference_kernel(1, 2).unwrap();
        assert_eq!(k.coeffs(), &[r(-1, 2), r(0, 1), r(1, 2)]);
        let k = central_difference_kernel(2, 2).unwrap();
        assert_eq!(k.coeffs(), &[r(1, 1), r(-2, 1), r(1, 1)]);
        let k = central_difference_kernel(2, 8).unwrap();
        assert_eq!(
            k.coeffs(),
            &[
                r(-1, 560),
                r(8, 315),
                r(-1, 5),
                r(8, 5),
                r(-205, 72),
                r(8, 5),
                r(-1, 5),
                r(8, 315),
                r(-1, 560)
            ]
        );
    }

    #[test]
    fn unsupported_orders_are_rejected() {
        assert!(central_difference_kernel(3, 2).is_err());
        assert!(central_difference_kernel(1, 3).is_err());
        assert!(central_difference_kernel(2, 10).is_err());
    }

    #[test]
    fn kernels_have_symmetry_and_zero_sum() {
        for d in [1, 2] {
            for a in [2, 4, 6, 8] {
                let k = central_difference_kernel(d, a).unwrap();
                assert!(k.moment(0).is_zero());
                let c = k.coeffs();
                for t in 0..c.len() {
                    let mirror = c[c.len() - 1 - t];
                    if d == 1 {
                        assert_eq!(c[t], -mirror);
                    } else {
                        assert_eq!(c[t], mirror);
                    }
                }
            }
        }
    }

    #[test]
    fn padding_spec_validation() {
        assert!(PaddingSpec::new(0, 2, 2).is_err());
        assert!(PaddingSpec::new(1, 2, 1).is_err());
        assert!(PaddingSpec::new(1, 0, 1).is_err());
        assert_eq!(PaddingSpec::for_accuracy(8), PaddingSpec::new(4, 2, 2).unwrap());
    }

    #[test]
    fn constant_and_ramp_padding() {
        let spec = PaddingSpec::new(3, 2, 2).unwrap();
        let padded = taylor_pad_line(&[4.0; 4], &spec, Side::Low).unwrap();
        assert!(padded.iter().all(|&v| (v - 4.0).abs() < 1e-14));
        let padded = taylor_pad_line(&[4.0; 4], &spec, Side::High).unwrap();
        assert_eq!(padded.len(), 7);
        assert!(padded.iter().all(|&v| (v - 4.0).abs() < 1e-14));

        let spec = PaddingSpec::new(1, 2, 2).unwrap();
        let padded = taylor_pad_line(&[0.0, 1.0, 2.0, 3.0], &spec, Side::Low).unwrap();
        assert!((padded[0] + 1.0).abs() < 1e-14);
        let padded = taylor_pad_line(&[0.0, 1.0, 2.0, 3.0], &spec, Side::High).unwrap();
        assert!((padded[4] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn cubic_is_reproduced_by_cubic_fit() {
        // Hand solution of the 3x3 Taylor system: D = (0, 0, 6) for n^3.
        let line: Vec<f64> = (0..6).map(|n| (n as f64).powi(3)).collect();
        let spec = PaddingSpec::new(3, 3, 3).unwrap();
        let v = virtual_values(&line, &spec, Side::Low, FitMethod::Inverse).unwrap();
        for (got, want) in v.iter().zip([-1.0, -8.0, -27.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn too_short_line_is_rejected() {
        let spec = PaddingSpec::new(1, 2, 4).unwrap();
        assert!(taylor_pad_line(&[1.0, 2.0, 3.0], &spec, Side::Low).is_err());
    }

    #[test]
    fn derivative_of_quadratic_is_exact_everywhere() {
        let g = Grid2D::cartesian(11, 5, 1.0, 1.0).unwrap();
        let f = Field::from_fn(g, 1, |_, x, _| x * x);
        for acc in [2, 4, 6, 8] {
            let d = derivative(&f, Axis::First, 1, acc, &PaddingSpec::for_accuracy(acc)).unwrap();
            for i in 0..11 {
                assert!((d.get(0, i, 2) - 2.0 * g.x1(i)).abs() < 1e-11, "acc {acc} i {i}");
            }
        }
    }

    #[test]
    fn second_derivative_of_constant_vanishes() {
        let g = Grid2D::cartesian(9, 12, 1.0, 3.0).unwrap();
        let f = Field::constant(g, 2, 3.7);
        for acc in [2, 4, 6, 8] {
            for axis in [Axis::First, Axis::Second] {
                let d = derivative(&f, axis, 2, acc, &PaddingSpec::for_accuracy(acc)).unwrap();
                assert!(d.max_abs() < 1e-9, "acc {acc}: {}", d.max_abs());
            }
        }
    }

    #[test]
    fn mismatched_padding_is_rejected() {
        let g = Grid2D::cartesian(9, 9, 1.0, 1.0).unwrap();
        let f = Field::zeros(g, 1);
        assert!(derivative(&f, Axis::First, 1, 8, &PaddingSpec::for_accuracy(4)).is_err());
        let tiny = Grid2D::cartesian(3, 3, 1.0, 1.0).unwrap();
        let spec = PaddingSpec::new(1, 2, 3).unwrap();
        assert!(derivative(&Field::zeros(tiny, 1), Axis::First, 1, 2, &spec).is_err());
    }

    #[test]
    fn transpose_is_adjoint() {
        let g = Grid2D::cartesian(7, 10, 1.0, 2.0).unwrap();
        for axis in [Axis::First, Axis::Second] {
            let op = DerivativeOperator::new(&g, axis, 2, 6, &PaddingSpec::for_accuracy(6)).unwrap();
            let x: Vec<f64> = (0..70).map(|k| ((k * 37 % 11) as f64).sin()).collect();
            let y: Vec<f64> = (0..70).map(|k| ((k * 13 % 7) as f64).cos()).collect();
            let mut dx = vec![0.0; 70];
            op.apply(&x, &mut dx, 1);
            let mut dty = vec![0.0; 70];
            op.apply_transpose_add(&y, &mut dty, 1);
            let lhs: f64 = dx.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&dty).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn formats_rational_kernel() {
        let k = central_difference_kernel(1, 4).unwrap();
        assert_eq!(format_kernel(&k), "[1/12, -2/3, 0, 2/3, -1/12]");
    }
}
