//! Steady axisymmetric swirl flow in cylindrical coordinates.
//!
//! Channels are `(u, v, w, p)`: axial, radial and swirl velocity, then
//! pressure. The first grid axis is `r`, the second is `z`; lengths are in
//! millimetres, velocities in m/s.

use std::sync::Arc;

use super::{constraint, flat, plane_fn, Discretization, Jet, ManufacturedSolution};
use crate::diffcore::{Graph, NodeId, Shape};
use crate::error::{invalid, Result};
use crate::fieldgrid::{init_input_field, Axis, BoundaryValues, Edge, Field, FillDirection, Geometry, Grid2D};
use crate::stencil::{derivative, PaddingSpec};
use crate::weighting::LossMasks;

pub const U: usize = 0;
pub const V: usize = 1;
pub const W: usize = 2;
pub const P: usize = 3;

#[derive(Debug, Clone)]
pub struct NavierStokesProblem {
    pub name: String,
    pub rho: f64,
    pub nu: f64,
    /// Pipe radius (mm).
    pub radius: f64,
    /// Axial length (mm).
    pub length: f64,
    /// Radial band `(lo, hi)` of the inlet jet at `z = 0`.
    pub inlet_band: (f64, f64),
    pub inlet_speed: f64,
    /// Replaces boundary data with exact values, supplies `u`, `v` data and
    /// adds forcing to every equation.
    pub manufactured: Option<ManufacturedSolution>,
}

impl NavierStokesProblem {
    pub fn swirl() -> Self {
        Self {
            name: "ns-swirl".into(),
            rho: 1.1614,
            nu: 1.5895,
            radius: 1.5,
            length: 18.0,
            inlet_band: (0.3, 0.7),
            inlet_speed: 5.88,
            manufactured: None,
        }
    }

    pub fn manufactured_swirl() -> Self {
        let base = Self::swirl();
        let (r0, l0) = (base.radius, base.length);
        let ms = ManufacturedSolution::new("ns-swirl", 4, move |r, z| {
            let s = r * (1.0 / r0);
            let zeta = z * (std::f64::consts::PI / l0);
            let bump = 1.0 - s * s;
            vec![
                5.88 * bump * (1.0 + 0.2 * zeta.sin()),
                0.5 * s * bump * zeta.sin(),
                5.88 * s * bump * (1.0 + 0.1 * zeta.cos()),
                10.0 * (1.0 - z * (1.0 / l0)) * (1.0 + s * s),
            ]
        });
        Self {
            name: "mms:ns-swirl".into(),
            manufactured: Some(ms),
            ..base
        }
    }

    pub fn manufactured_poly() -> Self {
        let base = Self::swirl();
        let (r0, l0) = (base.radius, base.length);
        let ms = ManufacturedSolution::new("ns-poly", 4, move |r, z| {
            let s = r * (1.0 / r0);
            let zeta = z * (1.0 / l0);
            let bump = 1.0 - s * s;
            vec![
                bump * (1.0 + zeta),
                s * bump * zeta,
                s * bump * (1.0 + zeta * zeta),
                (1.0 - zeta) * (1.0 + s * s),
            ]
        });
        Self {
            name: "mms:ns-poly".into(),
            manufactured: Some(ms),
            ..base
        }
    }

    pub fn grid(&self, nh: usize, nw: usize) -> Result<Grid2D> {
        Grid2D::from_extents(
            nh,
            nw,
            self.radius,
            self.length,
            Geometry::Axisymmetric { radial: Axis::First },
        )
    }

    fn check_grid(&self, grid: &Grid2D) -> Result<()> {
        if grid.geometry() != (Geometry::Axisymmetric { radial: Axis::First }) {
            return invalid("swirl flow needs an axisymmetric grid with r on the first axis");
        }
        Ok(())
    }

    /// Boundary value of channel `c` at `(r, z)` for the preset data.
    fn inlet_value(&self, c: usize, r: f64) -> f64 {
        let (lo, hi) = self.inlet_band;
        if (c == U || c == W) && r > lo && r < hi {
            self.inlet_speed
        } else {
            0.0
        }
    }

    fn exact(&self, c: usize, r: f64, z: f64) -> Option<f64> {
        self.manufactured.as_ref().map(|ms| ms.value(c, r, z))
    }

    /// Dirichlet entries `(channel, i, j, value)` and axis Neumann entries
    /// `(i, j, value)` for `du/dr`.
    ///
    /// Each `(channel, node)` appears once; the wall takes precedence over
    /// the axis, the axis over the inlet.
    pub fn boundary_entries(&self, grid: &Grid2D) -> (Vec<(usize, usize, usize, f64)>, Vec<(usize, usize, f64)>) {
        let (nh, nw) = (grid.nh(), grid.nw());
        let mut dirichlet = Vec::new();
        let mut neumann = Vec::new();
        let val = |c: usize, i: usize, j: usize, preset: f64| self.exact(c, grid.x1(i), grid.x2(j)).unwrap_or(preset);
        for j in 0..nw {
            for c in [U, V, W] {
                dirichlet.push((c, nh - 1, j, val(c, nh - 1, j, 0.0)));
            }
            for c in [V, W] {
                dirichlet.push((c, 0, j, val(c, 0, j, 0.0)));
            }
            let ur = match &self.manufactured {
                Some(ms) => ms.jets(0.0, grid.x2(j))[U].s,
                None => 0.0,
            };
            neumann.push((0, j, ur));
        }
        for i in 1..nh - 1 {
            let r = grid.x1(i);
            for c in [U, V, W] {
                dirichlet.push((c, i, 0, val(c, i, 0, self.inlet_value(c, r))));
            }
        }
        for i in 0..nh {
            dirichlet.push((P, i, nw - 1, val(P, i, nw - 1, 0.0)));
        }
        (dirichlet, neumann)
    }

    pub fn masks(&self, grid: &Grid2D) -> Result<LossMasks> {
        self.check_grid(grid)?;
        let (nh, nw) = (grid.nh(), grid.nw());
        let mut pde = Vec::new();
        for i in 1..nh - 1 {
            for j in 1..nw - 1 {
                pde.push(i * nw + j);
            }
        }
        let (dirichlet, neumann) = self.boundary_entries(grid);
        let mut bc = constraint(grid, &dirichlet);
        // Neumann targets index channel 4 of the concatenated source.
        let extra: Vec<(usize, f64)> = neumann.iter().map(|&(i, j, v)| (flat(grid, 4, i, j), v)).collect();
        bc.extend(&extra);
        let data = self.manufactured.as_ref().map(|ms| {
            let mut entries = Vec::new();
            for c in [U, V] {
                for i in 1..nh - 1 {
                    for j in 1..nw - 1 {
                        entries.push((c, i, j, ms.value(c, grid.x1(i), grid.x2(j))));
                    }
                }
            }
            constraint(grid, &entries)
        });
        Ok(LossMasks {
            pde: Arc::new(pde),
            bc: Some(bc),
            ic: None,
            data,
        })
    }

    /// Upstream-to-downstream filtered inlet profile.
    pub fn input_field(&self, grid: &Grid2D) -> Result<Field> {
        self.check_grid(grid)?;
        let mut b = BoundaryValues::new(*grid, 4);
        b.set_edge_fn(Edge::Low2, |c, r, z| self.exact(c, r, z).unwrap_or_else(|| self.inlet_value(c, r)));
        init_input_field(&b, grid, FillDirection::Upstream(Edge::Low2))
    }

    /// Left-hand sides of the four equations for exact fields, zero on the axis.
    pub fn forcing_fields(&self, grid: &Grid2D) -> Option<Field> {
        let ms = self.manufactured.as_ref()?;
        Some(Field::from_fn(*grid, 4, |eq, r, z| {
            if r <= 0.0 {
                return 0.0;
            }
            let f = ms.jets(r, z);
            self.pointwise(&f, r)[eq]
        }))
    }

    /// Equation left-hand sides at one point from jets `(u, v, w, p)` whose
    /// first variable is `r` and second is `z`.
    pub fn pointwise(&self, f: &[Jet], r: f64) -> [f64; 4] {
        let t = self.pointwise_terms(f, r);
        [
            t.continuity,
            t.convective[0] + t.pressure[0] - t.viscous[0],
            t.convective[1] + t.pressure[1] - t.viscous[1],
            t.convective[2] + t.pressure[2] - t.viscous[2],
        ]
    }

    fn pointwise_terms(&self, f: &[Jet], r: f64) -> PointTerms {
        let (u, v, w, p) = (&f[U], &f[V], &f[W], &f[P]);
        PointTerms {
            continuity: u.t + v.s + v.v / r,
            convective: [
                u.v * u.t + v.v * u.s,
                u.v * v.t + v.v * v.s - w.v * w.v / r,
                u.v * w.t + v.v * w.s - v.v * w.v / r,
            ],
            pressure: [p.t / self.rho, p.s / self.rho, 0.0],
            viscous: [
                self.nu * (u.tt + u.ss + u.s / r),
                self.nu * (v.tt + v.ss + v.s / r - v.v / (r * r)),
                self.nu * (w.tt + w.ss + w.s / r - w.v / (r * r)),
            ],
        }
    }
}

struct PointTerms {
    continuity: f64,
    convective: [f64; 3],
    pressure: [f64; 3],
    viscous: [f64; 3],
}

fn inverse_radius(grid: &Grid2D, power: i32) -> Arc<Vec<f64>> {
    plane_fn(grid, |i, _| {
        let r = grid.x1(i);
        if r > 0.0 {
            r.powi(-power)
        } else {
            0.0
        }
    })
}

/// Residual tensor `(continuity, z-, r-, theta-momentum)` for the 4-channel
/// node `x`. Axis rows carry no meaning and are masked out of the loss.
pub(crate) fn residual_graph(
    g: &mut Graph,
    x: NodeId,
    prob: &NavierStokesProblem,
    forcing: Option<&Field>,
    disc: &Discretization,
) -> Result<NodeId> {
    if g.shape(x).c != 4 {
        return invalid("swirl residual expects four channels (u, v, w, p)");
    }
    let grid = disc.grid;
    let inv_r = inverse_radius(&grid, 1);
    let inv_r2 = inverse_radius(&grid, 2);
    let dr = g.derivative(x, disc.op(Axis::First, 1));
    let drr = g.derivative(x, disc.op(Axis::First, 2));
    let dz = g.derivative(x, disc.op(Axis::Second, 1));
    let dzz = g.derivative(x, disc.op(Axis::Second, 2));
    let ch = |g: &mut Graph, n: NodeId, c: usize| g.channel(n, c);
    let (u, v, w) = (ch(g, x, U)?, ch(g, x, V)?, ch(g, x, W)?);
    let (u_r, v_r, w_r, p_r) = (ch(g, dr, U)?, ch(g, dr, V)?, ch(g, dr, W)?, ch(g, dr, P)?);
    let (u_z, v_z, w_z, p_z) = (ch(g, dz, U)?, ch(g, dz, V)?, ch(g, dz, W)?, ch(g, dz, P)?);
    let (u_rr, v_rr, w_rr) = (ch(g, drr, U)?, ch(g, drr, V)?, ch(g, drr, W)?);
    let (u_zz, v_zz, w_zz) = (ch(g, dzz, U)?, ch(g, dzz, V)?, ch(g, dzz, W)?);

    let v_over_r = g.mul_plane(v, inv_r.clone())?;
    let cont = g.add(u_z, v_r)?;
    let cont = g.add(cont, v_over_r)?;

    // nu * (f_zz + f_rr + f_r / r - [f / r^2])
    let viscous = |g: &mut Graph, f: NodeId, f_r: NodeId, f_rr: NodeId, f_zz: NodeId, hoop: bool| -> Result<NodeId> {
        let a = g.add(f_zz, f_rr)?;
        let b = g.mul_plane(f_r, inv_r.clone())?;
        let mut s = g.add(a, b)?;
        if hoop {
            let h = g.mul_plane(f, inv_r2.clone())?;
            s = g.sub(s, h)?;
        }
        Ok(g.scale(s, prob.nu))
    };
    let advect = |g: &mut Graph, f_z: NodeId, f_r: NodeId| -> Result<NodeId> {
        let a = g.mul(u, f_z)?;
        let b = g.mul(v, f_r)?;
        g.add(a, b)
    };

    let conv_z = advect(g, u_z, u_r)?;
    let pz = g.scale(p_z, 1.0 / prob.rho);
    let visc_z = viscous(g, u, u_r, u_rr, u_zz, false)?;
    let zmom = g.add(conv_z, pz)?;
    let zmom = g.sub(zmom, visc_z)?;

    let conv_r = advect(g, v_z, v_r)?;
    let ww = g.mul(w, w)?;
    let ww_r = g.mul_plane(ww, inv_r.clone())?;
    let conv_r = g.sub(conv_r, ww_r)?;
    let pr = g.scale(p_r, 1.0 / prob.rho);
    let visc_r = viscous(g, v, v_r, v_rr, v_zz, true)?;
    let rmom = g.add(conv_r, pr)?;
    let rmom = g.sub(rmom, visc_r)?;

    let conv_t = advect(g, w_z, w_r)?;
    let vw = g.mul(v, w)?;
    let vw_r = g.mul_plane(vw, inv_r.clone())?;
    let conv_t = g.sub(conv_t, vw_r)?;
    let visc_t = viscous(g, w, w_r, w_rr, w_zz, true)?;
    let tmom = g.sub(conv_t, visc_t)?;

    let all = g.concat(&[cont, zmom, rmom, tmom])?;
    match forcing {
        Some(f) => {
            let neg: Vec<f64> = f.data().iter().map(|v| -v).collect();
            g.add_const(all, Arc::new(neg))
        }
        None => Ok(all),
    }
}

/// `(u, v, w, p, du/dr)`: the tensor boundary constraints index into.
pub(crate) fn bc_source(g: &mut Graph, x: NodeId, disc: &Discretization) -> Result<NodeId> {
    let dr = g.derivative(x, disc.op(Axis::First, 1));
    let u_r = g.channel(dr, U)?;
    g.concat(&[x, u_r])
}

fn stack4(u: &Field, v: &Field, w: &Field, p: &Field) -> Result<Field> {
    for f in [u, v, w, p] {
        if f.channels() != 1 {
            return invalid("each swirl field must have one channel");
        }
    }
    Field::stack(&[u.clone(), v.clone(), w.clone(), p.clone()])
}

/// Residuals of the four equations (forcing included when the problem is
/// manufactured). Axis rows are returned as zero.
pub fn ns_residuals(
    u: &Field,
    v: &Field,
    w: &Field,
    p: &Field,
    prob: &NavierStokesProblem,
    acc_order: usize,
    spec: &PaddingSpec,
) -> Result<[Field; 4]> {
    let x = stack4(u, v, w, p)?;
    let grid = *x.grid();
    prob.check_grid(&grid)?;
    let disc = Discretization::new(grid, acc_order, *spec)?;
    let forcing = prob.forcing_fields(&grid);
    let mut g = Graph::new();
    let xn = g.constant(Shape::new(4, grid.nh(), grid.nw()), x.data().to_vec())?;
    let r = residual_graph(&mut g, xn, prob, forcing.as_ref(), &disc)?;
    let mut all = Field::from_data(grid, 4, g.value(r).to_vec())?;
    for c in 0..4 {
        for j in 0..grid.nw() {
            all.set(c, 0, j, 0.0);
        }
    }
    Ok([all.extract(0), all.extract(1), all.extract(2), all.extract(3)])
}

/// Residuals at selected nodes; nodes on the axis are rejected.
pub fn ns_residuals_at(
    fields: &Field,
    prob: &NavierStokesProblem,
    acc_order: usize,
    spec: &PaddingSpec,
    nodes: &[(usize, usize)],
) -> Result<Vec<[f64; 4]>> {
    let grid = *fields.grid();
    if let Some(&(i, j)) = nodes.iter().find(|&&(i, j)| grid.radius(i, j).is_none_or(|r| r <= 0.0)) {
        return invalid(format!("residual requested at ({i}, {j}), which is on the axis"));
    }
    if fields.channels() != 4 {
        return invalid("expected four channels (u, v, w, p)");
    }
    let [a, b, c, d] = ns_residuals(
        &fields.extract(0),
        &fields.extract(1),
        &fields.extract(2),
        &fields.extract(3),
        prob,
        acc_order,
        spec,
    )?;
    Ok(nodes
        .iter()
        .map(|&(i, j)| [a.get(0, i, j), b.get(0, i, j), c.get(0, i, j), d.get(0, i, j)])
        .collect())
}

/// Residual contributions split by physical origin (forcing excluded).
#[derive(Debug, Clone)]
pub struct NsTerms {
    pub continuity: Field,
    /// Advective and curvature terms of the z-, r- and theta-momentum equations.
    pub convective: [Field; 3],
    /// `grad p / rho` (zero for the theta equation).
    pub pressure: [Field; 3],
    /// `nu * (...)`, entering the residual with a minus sign.
    pub viscous: [Field; 3],
}

pub fn ns_terms(fields: &Field, prob: &NavierStokesProblem, acc_order: usize, spec: &PaddingSpec) -> Result<NsTerms> {
    if fields.channels() != 4 {
        return invalid("expected four channels (u, v, w, p)");
    }
    let grid = *fields.grid();
    prob.check_grid(&grid)?;
    let dr = derivative(fields, Axis::First, 1, acc_order, spec)?;
    let drr = derivative(fields, Axis::First, 2, acc_order, spec)?;
    let dz = derivative(fields, Axis::Second, 1, acc_order, spec)?;
    let dzz = derivative(fields, Axis::Second, 2, acc_order, spec)?;
    let mut out: Vec<Field> = (0..10).map(|_| Field::zeros(grid, 1)).collect();
    for i in 1..grid.nh() {
        let r = grid.x1(i);
        for j in 0..grid.nw() {
            let jets: Vec<Jet> = (0..4)
                .map(|c| Jet {
                    v: fields.get(c, i, j),
                    s: dr.get(c, i, j),
                    t: dz.get(c, i, j),
                    ss: drr.get(c, i, j),
                    st: 0.0,
                    tt: dzz.get(c, i, j),
                })
                .collect();
            let t = prob.pointwise_terms(&jets, r);
            let vals = [
                t.continuity,
                t.convective[0],
                t.convective[1],
                t.convective[2],
                t.pressure[0],
                t.pressure[1],
                t.pressure[2],
                t.viscous[0],
                t.viscous[1],
                t.viscous[2],
            ];
            for (f, v) in out.iter_mut().zip(vals) {
                f.set(0, i, j, v);
            }
        }
    }
    let mut it = out.into_iter();
    let mut next = || it.next().expect("ten fields");
    Ok(NsTerms {
        continuity: next(),
        convective: [next(), next(), next()],
        pressure: [next(), next(), next()],
        viscous: [next(), next(), next()],
    })
}
