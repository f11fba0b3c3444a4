use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use super::{constraint, Discretization, ManufacturedSolution, Task};
use crate::diffcore::{Graph, NodeId, Shape};
use crate::error::{invalid, Result};
use crate::fieldgrid::{init_input_field, Axis, BoundaryValues, Edge, Field, FillDirection, Grid2D};
use crate::stencil::PaddingSpec;
use crate::weighting::LossMasks;

/// `a u_xx + b u_xy + c u_yy + d u_x + e u_y + f u = g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Elliptic,
    Parabolic,
    Hyperbolic,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Classification::Elliptic => "elliptic",
            Classification::Parabolic => "parabolic",
            Classification::Hyperbolic => "hyperbolic",
        };
        f.write_str(s)
    }
}

impl LinearCoefficients {
    pub fn classification(&self) -> Classification {
        let disc = self.b * self.b - 4.0 * self.a * self.c;
        if disc < 0.0 {
            Classification::Elliptic
        } else if disc == 0.0 {
            Classification::Parabolic
        } else {
            Classification::Hyperbolic
        }
    }

    /// Left-hand side applied to a jet.
    pub fn apply(&self, u: &super::Jet) -> f64 {
        self.a * u.ss + self.b * u.st + self.c * u.tt + self.d * u.s + self.e * u.t + self.f * u.v
    }
}

pub type EdgeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A second-order linear problem on `[0, len1] x [0, len2]`.
#[derive(Clone)]
pub struct LinearPDEProblem {
    pub name: String,
    pub coeffs: LinearCoefficients,
    pub len1: f64,
    pub len2: f64,
    /// Dirichlet data per edge in [`Edge::ALL`] order; `None` leaves it free.
    pub bcs: [Option<EdgeFn>; 4],
    /// When set, `g` is replaced by the left-hand side of this solution.
    pub exact: Option<ManufacturedSolution>,
}

impl fmt::Debug for LinearPDEProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearPDEProblem")
            .field("name", &self.name)
            .field("coeffs", &self.coeffs)
            .field("extent", &(self.len1, self.len2))
            .field("edges", &self.constrained_edges())
            .finish()
    }
}

fn edge_fn(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Option<EdgeFn> {
    Some(Arc::new(f))
}

fn slot(edge: Edge) -> usize {
    Edge::ALL.iter().position(|&e| e == edge).expect("edge")
}

impl LinearPDEProblem {
    pub fn elliptic() -> Self {
        Self {
            name: "elliptic".into(),
            coeffs: LinearCoefficients {
                a: 1.0,
                b: 0.0,
                c: 1.0,
                d: 2.0,
                e: 2.0,
                f: 4.0,
                g: 4.0,
            },
            len1: 1.0,
            len2: 2.0,
            bcs: [
                edge_fn(|_, y| -(PI * y).sin()),
                edge_fn(|_, y| (PI * y).sin()),
                edge_fn(|x, _| (2.0 * PI * x).sin()),
                edge_fn(|x, _| -(2.0 * PI * x).sin()),
            ],
            exact: None,
        }
    }

    pub fn parabolic() -> Self {
        Self {
            name: "parabolic".into(),
            coeffs: LinearCoefficients {
                a: 1.0,
                b: 0.0,
                c: 0.0,
                d: -2.0,
                e: -2.0,
                f: 4.0,
                g: 4.0,
            },
            len1: 1.0,
            len2: 2.0,
            bcs: [
                edge_fn(|_, y| -(PI * y).sin()),
                edge_fn(|_, y| (PI * y).sin()),
                edge_fn(|x, _| (2.0 * PI * x).sin()),
                None,
            ],
            exact: None,
        }
    }

    pub fn hyperbolic() -> Self {
        Self {
            name: "hyperbolic".into(),
            coeffs: LinearCoefficients {
                a: 1.0,
                b: 0.0,
                c: -1.0,
                d: 0.0,
                e: 0.0,
                f: 0.0,
                g: 0.0,
            },
            len1: 1.0,
            len2: 2.0,
            bcs: [
                edge_fn(|_, _| 0.0),
                edge_fn(|_, _| 0.0),
                edge_fn(|x, _| (2.0 * PI * x).sin()),
                edge_fn(|x, _| (2.0 * PI * x).sin()),
            ],
            exact: None,
        }
    }

    /// Elliptic coefficients with the exact solution `sin(pi x) exp(y/2) + x y / 4`.
    pub fn manufactured_sinexp() -> Self {
        let ms = sinexp_solution();
        Self::with_exact("mms:sinexp", LinearPDEProblem::elliptic().coeffs, 1.0, 2.0, ms)
    }

    /// A problem whose boundary data and forcing come from `ms`.
    pub fn with_exact(name: &str, coeffs: LinearCoefficients, len1: f64, len2: f64, ms: ManufacturedSolution) -> Self {
        let mk = |ms: &ManufacturedSolution| {
            let ms = ms.clone();
            edge_fn(move |x, y| ms.value(0, x, y))
        };
        Self {
            name: name.into(),
            coeffs,
            len1,
            len2,
            bcs: [mk(&ms), mk(&ms), mk(&ms), mk(&ms)],
            exact: Some(ms),
        }
    }

    pub fn classification(&self) -> Classification {
        self.coeffs.classification()
    }

    pub fn bc(&self, edge: Edge) -> Option<&EdgeFn> {
        self.bcs[slot(edge)].as_ref()
    }

    pub fn constrained_edges(&self) -> Vec<Edge> {
        Edge::ALL.into_iter().filter(|&e| self.bc(e).is_some()).collect()
    }

    pub fn grid(&self, nh: usize, nw: usize) -> Result<Grid2D> {
        Grid2D::cartesian(nh, nw, self.len1, self.len2)
    }

    /// Right-hand side at a point.
    pub fn g_at(&self, x: f64, y: f64) -> f64 {
        match &self.exact {
            Some(ms) => self.coeffs.apply(&ms.jets(x, y)[0]),
            None => self.coeffs.g,
        }
    }

    pub fn forcing_field(&self, grid: &Grid2D) -> Field {
        Field::from_fn(*grid, 1, |_, x, y| self.g_at(x, y))
    }

    /// Dirichlet value at node `(i, j)` if it lies on a constrained edge.
    /// Edges are consulted in [`Edge::ALL`] order.
    pub fn dirichlet_at(&self, grid: &Grid2D, i: usize, j: usize) -> Option<f64> {
        let on = |e: Edge| match e {
            Edge::Low1 => i == 0,
            Edge::High1 => i + 1 == grid.nh(),
            Edge::Low2 => j == 0,
            Edge::High2 => j + 1 == grid.nw(),
        };
        Edge::ALL
            .into_iter()
            .find(|&e| on(e) && self.bc(e).is_some())
            .map(|e| (self.bc(e).expect("edge"))(grid.x1(i), grid.x2(j)))
    }

    pub fn boundary_values(&self, grid: &Grid2D) -> BoundaryValues {
        let mut b = BoundaryValues::new(*grid, 1);
        for edge in self.constrained_edges() {
            let f = self.bc(edge).expect("edge").clone();
            b.set_edge_fn(edge, move |_, x, y| f(x, y));
        }
        b
    }

    /// Sweep from all four edges when every edge is constrained, otherwise
    /// from the first constrained edge of the second axis.
    pub fn fill_direction(&self) -> FillDirection {
        if self.constrained_edges().len() == 4 {
            FillDirection::AllBoundaries
        } else {
            let edge = [Edge::Low2, Edge::High2, Edge::Low1, Edge::High1]
                .into_iter()
                .find(|&e| self.bc(e).is_some())
                .unwrap_or(Edge::Low2);
            FillDirection::Upstream(edge)
        }
    }

    pub fn input_field(&self, grid: &Grid2D) -> Result<Field> {
        init_input_field(&self.boundary_values(grid), grid, self.fill_direction())
    }

    /// PDE loss on every node without Dirichlet data, BC loss on the rest.
    pub fn masks(&self, grid: &Grid2D) -> Result<LossMasks> {
        let mut pde = Vec::new();
        let mut bc = Vec::new();
        for i in 0..grid.nh() {
            for j in 0..grid.nw() {
                match self.dirichlet_at(grid, i, j) {
                    Some(v) => bc.push((0, i, j, v)),
                    None => pde.push(i * grid.nw() + j),
                }
            }
        }
        if bc.is_empty() {
            return invalid(format!("problem '{}' has no boundary data", self.name));
        }
        Ok(LossMasks {
            pde: Arc::new(pde),
            bc: Some(constraint(grid, &bc)),
            ic: None,
            data: None,
        })
    }
}

/// `sin(pi x) exp(y/2) + x y / 4`.
pub fn sinexp_solution() -> ManufacturedSolution {
    ManufacturedSolution::new("sinexp", 1, |x, y| vec![(PI * x).sin() * (y * 0.5).exp() + x * y * 0.25])
}

/// Residual tensor of a linear problem for the single-channel node `u`.
pub(crate) fn residual_graph(
    g: &mut Graph,
    u: NodeId,
    c: &LinearCoefficients,
    forcing: &Field,
    disc: &Discretization,
) -> Result<NodeId> {
    if g.shape(u).c != 1 {
        return invalid("linear residual expects a single-channel field");
    }
    let mut terms: Vec<NodeId> = Vec::new();
    let mut push = |g: &mut Graph, node: NodeId, k: f64| {
        if k != 0.0 {
            terms.push(if k == 1.0 { node } else { g.scale(node, k) });
        }
    };
    if c.a != 0.0 {
        let n = g.derivative(u, disc.op(Axis::First, 2));
        push(g, n, c.a);
    }
    if c.b != 0.0 {
        let uy = g.derivative(u, disc.op(Axis::Second, 1));
        let n = g.derivative(uy, disc.op(Axis::First, 1));
        push(g, n, c.b);
    }
    if c.c != 0.0 {
        let n = g.derivative(u, disc.op(Axis::Second, 2));
        push(g, n, c.c);
    }
    if c.d != 0.0 {
        let n = g.derivative(u, disc.op(Axis::First, 1));
        push(g, n, c.d);
    }
    if c.e != 0.0 {
        let n = g.derivative(u, disc.op(Axis::Second, 1));
        push(g, n, c.e);
    }
    push(g, u, c.f);
    let mut total = match terms.first() {
        Some(&t) => t,
        None => g.scale(u, 0.0),
    };
    for &t in &terms[1..] {
        total = g.add(total, t)?;
    }
    let neg_g: Vec<f64> = forcing.data().iter().map(|v| -v).collect();
    g.add_const(total, Arc::new(neg_g))
}

/// Residual `a u_xx + b u_xy + c u_yy + d u_x + e u_y + f u - g` at every node.
pub fn linear_residual(u: &Field, prob: &LinearPDEProblem, acc_order: usize, spec: &PaddingSpec) -> Result<Field> {
    if u.channels() != 1 {
        return invalid("linear residual expects a single-channel field");
    }
    let grid = *u.grid();
    if (grid.x1(grid.nh() - 1) - prob.len1).abs() > 1e-9 * prob.len1
        || (grid.x2(grid.nw() - 1) - prob.len2).abs() > 1e-9 * prob.len2
    {
        return invalid("field grid does not span the problem domain");
    }
    let disc = Discretization::new(grid, acc_order, *spec)?;
    let forcing = prob.forcing_field(&grid);
    let mut g = Graph::new();
    let x = g.constant(Shape::new(1, grid.nh(), grid.nw()), u.data().to_vec())?;
    let r = residual_graph(&mut g, x, &prob.coeffs, &forcing, &disc)?;
    Field::from_data(grid, 1, g.value(r).to_vec())
}

impl Task {
    /// The linear problem definition, if this is a linear task.
    pub fn linear(&self) -> Option<&LinearPDEProblem> {
        match &self.kind {
            super::ProblemKind::Linear(p) => Some(p),
            _ => None,
        }
    }
}
