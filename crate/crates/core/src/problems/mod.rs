//! Benchmark problems, their residual evaluators and manufactured solutions.
//!
//! A problem definition is grid independent. [`Task`] binds one to a grid,
//! finite-difference order and padding, and owns everything training needs:
//! the network input, constraint masks and an optional exact reference.

pub mod jet;
pub mod linear;
pub mod ns;

use std::fmt;
use std::sync::Arc;

use crate::diffcore::{Graph, NodeId};
use crate::error::{invalid, Error, Result};
use crate::fieldgrid::{Axis, Field, Grid2D};
use crate::stencil::{DerivativeOperator, PaddingSpec};
use crate::weighting::{Constraint, LossMasks};

pub use jet::Jet;
pub use linear::{linear_residual, Classification, LinearCoefficients, LinearPDEProblem};
pub use ns::{ns_residuals, ns_residuals_at, ns_terms, NavierStokesProblem, NsTerms};

/// Closed-form fields evaluated with exact partial derivatives.
#[derive(Clone)]
pub struct ManufacturedSolution {
    pub name: String,
    pub channels: usize,
    eval: Arc<dyn Fn(Jet, Jet) -> Vec<Jet> + Send + Sync>,
}

impl fmt::Debug for ManufacturedSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedSolution")
            .field("name", &self.name)
            .field("channels", &self.channels)
            .finish()
    }
}

impl ManufacturedSolution {
    pub fn new(
        name: &str,
        channels: usize,
        eval: impl Fn(Jet, Jet) -> Vec<Jet> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.to_string(),
            channels,
            eval: Arc::new(eval),
        }
    }

    /// All channels with partials at `(x1, x2)`.
    pub fn jets(&self, x1: f64, x2: f64) -> Vec<Jet> {
        let (s, t) = Jet::vars(x1, x2);
        (self.eval)(s, t)
    }

    pub fn value(&self, c: usize, x1: f64, x2: f64) -> f64 {
        self.jets(x1, x2)[c].v
    }

    pub fn field(&self, grid: &Grid2D) -> Field {
        Field::from_fn(*grid, self.channels, |c, x1, x2| self.value(c, x1, x2))
    }
}

/// The fixed derivative operators of one discretisation.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid2D,
    pub acc_order: usize,
    pub spec: PaddingSpec,
    ops: [Arc<DerivativeOperator>; 4],
}

impl Discretization {
    pub fn new(grid: Grid2D, acc_order: usize, spec: PaddingSpec) -> Result<Self> {
        let mk = |axis, d| DerivativeOperator::new(&grid, axis, d, acc_order, &spec).map(Arc::new);
        Ok(Self {
            grid,
            acc_order,
            spec,
            ops: [
                mk(Axis::First, 1)?,
                mk(Axis::First, 2)?,
                mk(Axis::Second, 1)?,
                mk(Axis::Second, 2)?,
            ],
        })
    }

    /// Default padding for the accuracy order.
    pub fn with_default_padding(grid: Grid2D, acc_order: usize) -> Result<Self> {
        Self::new(grid, acc_order, PaddingSpec::for_accuracy(acc_order))
    }

    pub fn op(&self, axis: Axis, deriv_order: usize) -> Arc<DerivativeOperator> {
        let k = (axis.index() - 1) * 2 + (deriv_order - 1);
        self.ops[k].clone()
    }
}

/// Per-node coefficient plane (one value per grid node).
pub(crate) fn plane_fn(grid: &Grid2D, f: impl Fn(usize, usize) -> f64) -> Arc<Vec<f64>> {
    let mut v = Vec::with_capacity(grid.len());
    for i in 0..grid.nh() {
        for j in 0..grid.nw() {
            v.push(f(i, j));
        }
    }
    Arc::new(v)
}

#[derive(Debug, Clone)]
pub enum ProblemKind {
    Linear(LinearPDEProblem),
    NavierStokes(NavierStokesProblem),
}

impl ProblemKind {
    /// Look a problem up by its configuration name.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "elliptic" => ProblemKind::Linear(LinearPDEProblem::elliptic()),
            "parabolic" => ProblemKind::Linear(LinearPDEProblem::parabolic()),
            "hyperbolic" => ProblemKind::Linear(LinearPDEProblem::hyperbolic()),
            "ns-swirl" => ProblemKind::NavierStokes(NavierStokesProblem::swirl()),
            other => match other.strip_prefix("mms:") {
                Some("sinexp") => ProblemKind::Linear(LinearPDEProblem::manufactured_sinexp()),
                Some("ns-swirl") => ProblemKind::NavierStokes(NavierStokesProblem::manufactured_swirl()),
                Some("ns-poly") => ProblemKind::NavierStokes(NavierStokesProblem::manufactured_poly()),
                _ => return Err(Error::Config(format!("unknown problem '{name}'"))),
            },
        })
    }

    pub const NAMES: [&'static str; 7] = [
        "elliptic",
        "parabolic",
        "hyperbolic",
        "ns-swirl",
        "mms:sinexp",
        "mms:ns-swirl",
        "mms:ns-poly",
    ];

    pub fn unknowns(&self) -> usize {
        match self {
            ProblemKind::Linear(_) => 1,
            ProblemKind::NavierStokes(_) => 4,
        }
    }

    pub fn grid(&self, nh: usize, nw: usize) -> Result<Grid2D> {
        match self {
            ProblemKind::Linear(p) => p.grid(nh, nw),
            ProblemKind::NavierStokes(p) => p.grid(nh, nw),
        }
    }

    pub fn manufactured(&self) -> Option<&ManufacturedSolution> {
        match self {
            ProblemKind::Linear(p) => p.exact.as_ref(),
            ProblemKind::NavierStokes(p) => p.manufactured.as_ref(),
        }
    }
}

/// A problem bound to a grid and discretisation.
#[derive(Debug, Clone)]
pub struct Task {
    pub name: String,
    pub kind: ProblemKind,
    pub disc: Discretization,
    pub input: Field,
    pub masks: LossMasks,
    /// Exact solution on the grid when the problem has one.
    pub reference: Option<Field>,
    forcing: Option<Field>,
}

impl Task {
    pub fn new(name: &str, nh: usize, nw: usize, acc_order: usize, spec: PaddingSpec) -> Result<Self> {
        let kind = ProblemKind::by_name(name)?;
        let grid = kind.grid(nh, nw)?;
        let disc = Discretization::new(grid, acc_order, spec)?;
        let (input, masks) = match &kind {
            ProblemKind::Linear(p) => (p.input_field(&grid)?, p.masks(&grid)?),
            ProblemKind::NavierStokes(p) => (p.input_field(&grid)?, p.masks(&grid)?),
        };
        let reference = kind.manufactured().map(|ms| ms.field(&grid));
        let forcing = match &kind {
            ProblemKind::Linear(p) => Some(p.forcing_field(&grid)),
            ProblemKind::NavierStokes(p) => p.forcing_fields(&grid),
        };
        Ok(Self {
            name: name.to_string(),
            kind,
            disc,
            input,
            masks,
            reference,
            forcing,
        })
    }

    pub fn with_default_padding(name: &str, nh: usize, nw: usize, acc_order: usize) -> Result<Self> {
        Self::new(name, nh, nw, acc_order, PaddingSpec::for_accuracy(acc_order))
    }

    pub fn grid(&self) -> &Grid2D {
        &self.disc.grid
    }

    pub fn unknowns(&self) -> usize {
        self.kind.unknowns()
    }

    /// Number of residual equations.
    pub fn equations(&self) -> usize {
        match self.kind {
            ProblemKind::Linear(_) => 1,
            ProblemKind::NavierStokes(_) => 4,
        }
    }

    pub fn is_navier_stokes(&self) -> bool {
        matches!(self.kind, ProblemKind::NavierStokes(_))
    }

    /// Residual tensor, one channel per equation.
    pub fn residual_graph(&self, g: &mut Graph, u: NodeId) -> Result<NodeId> {
        match &self.kind {
            ProblemKind::Linear(p) => {
                linear::residual_graph(g, u, &p.coeffs, self.forcing.as_ref().expect("linear forcing"), &self.disc)
            }
            ProblemKind::NavierStokes(p) => ns::residual_graph(g, u, p, self.forcing.as_ref(), &self.disc),
        }
    }

    /// Tensor the boundary constraints index into.
    pub fn bc_source(&self, g: &mut Graph, u: NodeId) -> Result<NodeId> {
        match &self.kind {
            ProblemKind::Linear(_) => Ok(u),
            ProblemKind::NavierStokes(_) => ns::bc_source(g, u, &self.disc),
        }
    }

    /// Residual of a plain field (no gradients).
    pub fn residual(&self, u: &Field) -> Result<Field> {
        if !u.grid().same_shape(self.grid()) || u.channels() != self.unknowns() {
            return invalid("field does not match the task grid");
        }
        let mut g = Graph::new();
        let x = g.constant(
            crate::diffcore::Shape::new(u.channels(), self.grid().nh(), self.grid().nw()),
            u.data().to_vec(),
        )?;
        let r = self.residual_graph(&mut g, x)?;
        Field::from_data(*self.grid(), self.equations(), g.value(r).to_vec())
    }
}

/// Flat indices of `(channel, i, j)` nodes in a `(c, h, w)` tensor.
pub(crate) fn flat(grid: &Grid2D, c: usize, i: usize, j: usize) -> usize {
    (c * grid.nh() + i) * grid.nw() + j
}

/// Build a constraint from `(channel, i, j, target)` entries.
pub(crate) fn constraint(grid: &Grid2D, entries: &[(usize, usize, usize, f64)]) -> Constraint {
    Constraint::new(
        entries.iter().map(|&(c, i, j, _)| flat(grid, c, i, j)).collect(),
        entries.iter().map(|e| e.3).collect(),
    )
}
