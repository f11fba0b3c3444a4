//! Structured grids, node-centred multi-channel fields and the scalar
//! metrics used to compare them.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// One of the two grid axes. `First` runs along `nh` (index `i`), `Second`
/// along `nw` (index `j`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    First,
    Second,
}

impl Axis {
    /// 1-based index as used in file headers and configs.
    pub fn index(self) -> usize {
        match self {
            Axis::First => 1,
            Axis::Second => 2,
        }
    }

    pub fn from_index(index: usize) -> Result<Self> {
        match index {
            1 => Ok(Axis::First),
            2 => Ok(Axis::Second),
            other => invalid(format!("axis index must be 1 or 2, got {other}")),
        }
    }

    pub fn other(self) -> Self {
        match self {
            Axis::First => Axis::Second,
            Axis::Second => Axis::First,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Cartesian,
    /// Cylindrical `(r, z)` plane; `radial` names the axis that carries `r`.
    Axisymmetric { radial: Axis },
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Cartesian => write!(f, "cartesian"),
            Geometry::Axisymmetric { radial } => write!(f, "axisymmetric:{}", radial.index()),
        }
    }
}

impl std::str::FromStr for Geometry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "cartesian" {
            return Ok(Geometry::Cartesian);
        }
        match s.strip_prefix("axisymmetric:") {
            Some(axis) => {
                let idx: usize = axis
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("bad geometry '{s}'")))?;
                Ok(Geometry::Axisymmetric {
                    radial: Axis::from_index(idx)?,
                })
            }
            None => invalid(format!("unknown geometry '{s}'")),
        }
    }
}

/// Uniform structured 2-D mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    nh: usize,
    nw: usize,
    d1: f64,
    d2: f64,
    geometry: Geometry,
    origin: (f64, f64),
}

impl Grid2D {
    pub fn new(
        nh: usize,
        nw: usize,
        d1: f64,
        d2: f64,
        geometry: Geometry,
        origin: (f64, f64),
    ) -> Result<Self> {
        if nh < 3 || nw < 3 {
            return invalid(format!("grid must be at least 3x3, got {nh}x{nw}"));
        }
        if !(d1 > 0.0 && d2 > 0.0 && d1.is_finite() && d2.is_finite()) {
            return invalid(format!("grid spacings must be positive, got {d1}, {d2}"));
        }
        if let Geometry::Axisymmetric { radial } = geometry {
            let r0 = match radial {
                Axis::First => origin.0,
                Axis::Second => origin.1,
            };
            // The first radial row sits on the axis; every other row is r > 0.
            if r0 != 0.0 {
                return invalid(format!("axisymmetric grid must start at r = 0, got {r0}"));
            }
        }
        Ok(Self {
            nh,
            nw,
            d1,
            d2,
            geometry,
            origin,
        })
    }

    /// Cartesian grid covering `[0, len1] x [0, len2]` node-to-node.
    pub fn cartesian(nh: usize, nw: usize, len1: f64, len2: f64) -> Result<Self> {
        Self::from_extents(nh, nw, len1, len2, Geometry::Cartesian)
    }

    pub fn from_extents(
        nh: usize,
        nw: usize,
        len1: f64,
        len2: f64,
        geometry: Geometry,
    ) -> Result<Self> {
        if nh < 2 || nw < 2 {
            return invalid(format!("grid must be at least 3x3, got {nh}x{nw}"));
        }
        Self::new(
            nh,
            nw,
            len1 / (nh - 1) as f64,
            len2 / (nw - 1) as f64,
            geometry,
            (0.0, 0.0),
        )
    }

    pub fn nh(&self) -> usize {
        self.nh
    }

    pub fn nw(&self) -> usize {
        self.nw
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }

    pub fn d2(&self) -> f64 {
        self.d2
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.nh * self.nw
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: Axis) -> f64 {
        match axis {
            Axis::First => self.d1,
            Axis::Second => self.d2,
        }
    }

    pub fn count(&self, axis: Axis) -> usize {
        match axis {
            Axis::First => self.nh,
            Axis::Second => self.nw,
        }
    }

    pub fn x1(&self, i: usize) -> f64 {
        self.origin.0 + i as f64 * self.d1
    }

    pub fn x2(&self, j: usize) -> f64 {
        self.origin.1 + j as f64 * self.d2
    }

    /// Radial coordinate of node `(i, j)`; `None` on Cartesian grids.
    pub fn radius(&self, i: usize, j: usize) -> Option<f64> {
        match self.geometry {
            Geometry::Cartesian => None,
            Geometry::Axisymmetric { radial: Axis::First } => Some(self.x1(i)),
            Geometry::Axisymmetric {
                radial: Axis::Second,
            } => Some(self.x2(j)),
        }
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nh || j + 1 == self.nw
    }

    pub fn boundary_count(&self) -> usize {
        2 * self.nh + 2 * self.nw - 4
    }

    pub fn interior_count(&self) -> usize {
        self.len() - self.boundary_count()
    }

    /// Same grid with the axes swapped.
    pub fn transposed(&self) -> Self {
        let geometry = match self.geometry {
            Geometry::Cartesian => Geometry::Cartesian,
            Geometry::Axisymmetric { radial } => Geometry::Axisymmetric {
                radial: radial.other(),
            },
        };
        Self {
            nh: self.nw,
            nw: self.nh,
            d1: self.d2,
            d2: self.d1,
            geometry,
            origin: (self.origin.1, self.origin.0),
        }
    }

    pub fn same_shape(&self, other: &Grid2D) -> bool {
        self.nh == other.nh && self.nw == other.nw
    }
}

/// Multi-channel node-centred data, indexed `(channel, i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid2D,
    channels: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid2D, channels: usize) -> Self {
        Self {
            grid,
            channels,
            data: vec![0.0; channels * grid.len()],
        }
    }

    pub fn constant(grid: Grid2D, channels: usize, value: f64) -> Self {
        Self {
            grid,
            channels,
            data: vec![value; channels * grid.len()],
        }
    }

    pub fn from_data(grid: Grid2D, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return invalid("field needs at least one channel");
        }
        if data.len() != channels * grid.len() {
            return invalid(format!(
                "field data length {} != {} x {} x {}",
                data.len(),
                channels,
                grid.nh(),
                grid.nw()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite field value at flat index {pos}")));
        }
        Ok(Self {
            grid,
            channels,
            data,
        })
    }

    /// Sample `f(channel, x1, x2)` at every node.
    pub fn from_fn(grid: Grid2D, channels: usize, f: impl Fn(usize, f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(channels * grid.len());
        for c in 0..channels {
            for i in 0..grid.nh() {
                for j in 0..grid.nw() {
                    data.push(f(c, grid.x1(i), grid.x2(j)));
                }
            }
        }
        Self {
            grid,
            channels,
            data,
        }
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.grid.nh() + i) * self.grid.nw() + j
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.index(c, i, j)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let k = self.index(c, i, j);
        self.data[k] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Single-channel copy of channel `c`.
    pub fn extract(&self, c: usize) -> Field {
        Field {
            grid: self.grid,
            channels: 1,
            data: self.channel(c).to_vec(),
        }
    }

    /// Stack single- or multi-channel fields on the same grid.
    pub fn stack(parts: &[Field]) -> Result<Field> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot stack zero fields".into()))?;
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if !p.grid.same_shape(&first.grid) {
                return invalid("stacked fields must share a grid");
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(Field {
            grid: first.grid,
            channels,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.check_compatible(other)?;
        Ok(Field {
            grid: self.grid,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn check_compatible(&self, other: &Field) -> Result<()> {
        if !self.grid.same_shape(&other.grid) || self.channels != other.channels {
            return invalid(format!(
                "field shape mismatch: {}x{}x{} vs {}x{}x{}",
                self.channels,
                self.grid.nh(),
                self.grid.nw(),
                other.channels,
                other.grid.nh(),
                other.grid.nw()
            ));
        }
        Ok(())
    }

    /// Field with axes swapped (channel order preserved).
    pub fn transposed(&self) -> Field {
        let g = self.grid.transposed();
        let mut out = Field::zeros(g, self.channels);
        for c in 0..self.channels {
            for i in 0..self.grid.nh() {
                for j in 0..self.grid.nw() {
                    out.set(c, j, i, self.get(c, i, j));
                }
            }
        }
        out
    }
}

/// Grid edges, named by the axis they bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    /// Row `i = 0`.
    Low1,
    /// Row `i = nh - 1`.
    High1,
    /// Column `j = 0`.
    Low2,
    /// Column `j = nw - 1`.
    High2,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Low1, Edge::High1, Edge::Low2, Edge::High2];

    fn slot(self) -> usize {
        match self {
            Edge::Low1 => 0,
            Edge::High1 => 1,
            Edge::Low2 => 2,
            Edge::High2 => 3,
        }
    }

    /// Number of nodes along this edge.
    pub fn len(self, grid: &Grid2D) -> usize {
        match self {
            Edge::Low1 | Edge::High1 => grid.nw(),
            Edge::Low2 | Edge::High2 => grid.nh(),
        }
    }

    /// Grid index of the `k`-th node along the edge.
    pub fn node(self, grid: &Grid2D, k: usize) -> (usize, usize) {
        match self {
            Edge::Low1 => (0, k),
            Edge::High1 => (grid.nh() - 1, k),
            Edge::Low2 => (k, 0),
            Edge::High2 => (k, grid.nw() - 1),
        }
    }

    /// Node reached after stepping `n` lines inward from this edge.
    fn inward(self, grid: &Grid2D, n: usize, k: usize) -> (usize, usize) {
        match self {
            Edge::Low1 => (n, k),
            Edge::High1 => (grid.nh() - 1 - n, k),
            Edge::Low2 => (k, n),
            Edge::High2 => (k, grid.nw() - 1 - n),
        }
    }

    fn depth(self, grid: &Grid2D) -> usize {
        match self {
            Edge::Low1 | Edge::High1 => grid.nh(),
            Edge::Low2 | Edge::High2 => grid.nw(),
        }
    }
}

/// Dirichlet values on (some of) the four edges, per channel.
#[derive(Debug, Clone)]
pub struct BoundaryValues {
    grid: Grid2D,
    channels: usize,
    edges: [Option<Vec<Vec<f64>>>; 4],
}

impl BoundaryValues {
    pub fn new(grid: Grid2D, channels: usize) -> Self {
        Self {
            grid,
            channels,
            edges: [None, None, None, None],
        }
    }

    /// Set one edge; `values[c]` is the line for channel `c`.
    pub fn set_edge(&mut self, edge: Edge, values: Vec<Vec<f64>>) -> Result<()> {
        if values.len() != self.channels {
            return invalid(format!(
                "edge {edge:?} has {} channels, expected {}",
                values.len(),
                self.channels
            ));
        }
        let n = edge.len(&self.grid);
        if let Some(bad) = values.iter().find(|l| l.len() != n) {
            return invalid(format!("edge {edge:?} line has {} nodes, expected {n}", bad.len()));
        }
        self.edges[edge.slot()] = Some(values);
        Ok(())
    }

    /// Set one edge from `f(channel, x1, x2)`.
    pub fn set_edge_fn(&mut self, edge: Edge, f: impl Fn(usize, f64, f64) -> f64) {
        let g = self.grid;
        let values = (0..self.channels)
            .map(|c| {
                (0..edge.len(&g))
                    .map(|k| {
                        let (i, j) = edge.node(&g, k);
                        f(c, g.x1(i), g.x2(j))
                    })
                    .collect()
            })
            .collect();
        self.edges[edge.slot()] = Some(values);
    }

    /// All four edges taken from an existing field.
    pub fn from_field(field: &Field) -> Self {
        let mut b = Self::new(*field.grid(), field.channels());
        for edge in Edge::ALL {
            let values = (0..field.channels())
                .map(|c| {
                    (0..edge.len(field.grid()))
                        .map(|k| {
                            let (i, j) = edge.node(field.grid(), k);
                            field.get(c, i, j)
                        })
                        .collect()
                })
                .collect();
            b.edges[edge.slot()] = Some(values);
        }
        b
    }

    pub fn edge(&self, edge: Edge) -> Option<&Vec<Vec<f64>>> {
        self.edges[edge.slot()].as_ref()
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillDirection {
    /// Sweep inward from each of the four edges and average the sweeps.
    AllBoundaries,
    /// Sweep from one edge across the whole domain.
    Upstream(Edge),
}

/// One pass of the `[1/3, 1/3, 1/3]` mean filter with end replication.
pub fn mean_filter3(line: &[f64]) -> Vec<f64> {
    let n = line.len();
    (0..n)
        .map(|k| {
            let left = line[k.saturating_sub(1)];
            let right = line[(k + 1).min(n - 1)];
            (left + line[k] + right) / 3.0
        })
        .collect()
}

fn sweep_from(edge: Edge, lines: &[Vec<f64>], grid: &Grid2D, out: &mut Field, weight: f64) {
    for (c, line) in lines.iter().enumerate() {
        let mut current = line.clone();
        for n in 0..edge.depth(grid) {
            for (k, &v) in current.iter().enumerate() {
                let (i, j) = edge.inward(grid, n, k);
                let idx = out.index(c, i, j);
                out.data[idx] += weight * v;
            }
            current = mean_filter3(&current);
        }
    }
}

/// Build the network input by repeatedly mean-filtering boundary values
/// inward.
pub fn init_input_field(
    boundary: &BoundaryValues,
    grid: &Grid2D,
    direction: FillDirection,
) -> Result<Field> {
    if !boundary.grid.same_shape(grid) {
        return invalid("boundary values belong to a different grid");
    }
    let mut out = Field::zeros(*grid, boundary.channels);
    match direction {
        FillDirection::Upstream(edge) => {
            let lines = boundary
                .edge(edge)
                .ok_or_else(|| Error::InvalidInput(format!("upstream edge {edge:?} missing")))?;
            sweep_from(edge, lines, grid, &mut out, 1.0);
        }
        FillDirection::AllBoundaries => {
            let mut all = Vec::with_capacity(4);
            for edge in Edge::ALL {
                let lines = boundary
                    .edge(edge)
                    .ok_or_else(|| Error::InvalidInput(format!("boundary edge {edge:?} missing")))?;
                all.push((edge, lines));
            }
            for (edge, lines) in &all {
                sweep_from(*edge, lines, grid, &mut out, 0.25);
            }
            // Boundary nodes keep their Dirichlet values; corners average the two edges.
            let mut hits = Field::zeros(*grid, boundary.channels);
            let mut acc = Field::zeros(*grid, boundary.channels);
            for (edge, lines) in &all {
                for (c, line) in lines.iter().enumerate() {
                    for (k, &v) in line.iter().enumerate() {
                        let (i, j) = edge.node(grid, k);
                        let idx = acc.index(c, i, j);
                        acc.data[idx] += v;
                        hits.data[idx] += 1.0;
                    }
                }
            }
            for k in 0..out.data.len() {
                if hits.data[k] > 0.0 {
                    out.data[k] = acc.data[k] / hits.data[k];
                }
            }
        }
    }
    Ok(out)
}

fn check_pair(a: &Field, b: &Field, channel: usize) -> Result<()> {
    a.check_compatible(b)?;
    if channel >= a.channels {
        return invalid(format!("channel {channel} out of range ({} channels)", a.channels));
    }
    Ok(())
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `||pred - reference||_2 / ||reference||_2` over one channel.
pub fn relative_l2_error(pred: &Field, reference: &Field, channel: usize) -> Result<f64> {
    check_pair(pred, reference, channel)?;
    let r = reference.channel(channel);
    let denom = norm2(r);
    if denom == 0.0 {
        return Err(Error::DivisionByZero("reference field has zero norm".into()));
    }
    let num = pred
        .channel(channel)
        .iter()
        .zip(r)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    Ok(num / denom)
}

/// Normalised absolute inner product `|a . b| / (||a|| ||b||)`, in `[0, 1]`.
pub fn correlation(a: &Field, b: &Field, channel: usize) -> Result<f64> {
    check_pair(a, b, channel)?;
    let (x, y) = (a.channel(channel), b.channel(channel));
    let (nx, ny) = (norm2(x), norm2(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::DivisionByZero("correlation of a zero-norm field".into()));
    }
    let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
    Ok((dot.abs() / (nx * ny)).min(1.0))
}

const FGRD_MAGIC: &str = "FGRD";

/// Write a field in the `FGRD v1` format: one text header line followed by
/// little-endian `f64` values, channel-major then row-major.
pub fn write_fgrd<W: Write>(field: &Field, mut w: W) -> Result<()> {
    let g = field.grid();
    writeln!(
        w,
        "{FGRD_MAGIC} {} {} {} {} {} {}",
        field.channels(),
        g.nh(),
        g.nw(),
        g.d1(),
        g.d2(),
        g.geometry()
    )?;
    let mut buf = Vec::with_capacity(field.data.len() * 8);
    for v in &field.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_fgrd<R: BufRead>(mut r: R) -> Result<Field> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 7 || tokens[0] != FGRD_MAGIC {
        return invalid(format!("not an FGRD header: '{}'", header.trim_end()));
    }
    let parse_usize = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::InvalidInput(format!("bad FGRD integer '{s}'")))
    };
    let parse_f64 = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::InvalidInput(format!("bad FGRD spacing '{s}'")))
    };
    let channels = parse_usize(tokens[1])?;
    let nh = parse_usize(tokens[2])?;
    let nw = parse_usize(tokens[3])?;
    let grid = Grid2D::new(
        nh,
        nw,
        parse_f64(tokens[4])?,
        parse_f64(tokens[5])?,
        tokens[6].parse()?,
        (0.0, 0.0),
    )?;
    let n = channels * nh * nw;
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Field::from_data(grid, channels, data)
}

pub fn save_fgrd(field: &Field, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_fgrd(field, std::io::BufWriter::new(f))
}

pub fn load_fgrd(path: impl AsRef<Path>) -> Result<Field> {
    let f = std::fs::File::open(path)?;
    read_fgrd(std::io::BufReader::new(f))
}

/// Write one CSV per channel (`<stem>_c<k>.csv`), `nh` rows by `nw` columns.
pub fn write_csv_channels(field: &Field, dir: impl AsRef<Path>, stem: &str) -> Result<Vec<std::path::PathBuf>> {
    let g = field.grid();
    let mut paths = Vec::with_capacity(field.channels());
    for c in 0..field.channels() {
        let path = dir.as_ref().join(format!("{stem}_c{c}.csv"));
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        for i in 0..g.nh() {
            let row: Vec<String> = (0..g.nw()).map(|j| format!("{}", field.get(c, i, j))).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}
