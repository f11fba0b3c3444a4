//! Loss terms and the weighting schemes that combine them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::diffcore::{Graph, NodeId};
use crate::error::{invalid, Error, Result};

/// Target values at flat indices of some tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub indices: Arc<Vec<usize>>,
    pub targets: Arc<Vec<f64>>,
}

impl Constraint {
    pub fn new(indices: Vec<usize>, targets: Vec<f64>) -> Self {
        assert_eq!(indices.len(), targets.len(), "one target per index");
        Self {
            indices: Arc::new(indices),
            targets: Arc::new(targets),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn extend(&mut self, entries: &[(usize, f64)]) {
        let idx = Arc::make_mut(&mut self.indices);
        let tg = Arc::make_mut(&mut self.targets);
        for &(k, v) in entries {
            idx.push(k);
            tg.push(v);
        }
    }
}

/// Which nodes feed each loss term.
#[derive(Debug, Clone)]
pub struct LossMasks {
    /// Plane indices (`i * nw + j`) where residuals are penalised.
    pub pde: Arc<Vec<usize>>,
    pub bc: Option<Constraint>,
    pub ic: Option<Constraint>,
    pub data: Option<Constraint>,
}

/// Scalar loss nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct LossTerms {
    /// One node per residual equation.
    pub pde: Vec<NodeId>,
    pub bc: Option<NodeId>,
    pub ic: Option<NodeId>,
    pub data: Option<NodeId>,
}

/// Loss term kinds other than the PDE residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Pde,
    Bc,
    Ic,
    Data,
}

impl LossTerms {
    pub fn node(&self, term: Term) -> Option<NodeId> {
        match term {
            Term::Pde => None,
            Term::Bc => self.bc,
            Term::Ic => self.ic,
            Term::Data => self.data,
        }
    }

    /// Number of active loss terms, counting all PDE equations as one.
    pub fn active(&self) -> usize {
        usize::from(!self.pde.is_empty())
            + [self.bc, self.ic, self.data].iter().filter(|t| t.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossBreakdown {
    pub pde: Vec<f64>,
    pub bc: f64,
    pub ic: f64,
    pub data: f64,
    pub n_pde: usize,
    pub n_bc: usize,
    pub n_ic: usize,
    pub n_data: usize,
}

impl LossBreakdown {
    pub fn pde_total(&self) -> f64 {
        self.pde.iter().sum()
    }

    pub fn read(g: &Graph, terms: &LossTerms, masks: &LossMasks) -> Self {
        let val = |n: Option<NodeId>| n.map_or(0.0, |n| g.scalar(n));
        let count = |c: &Option<Constraint>, n: Option<NodeId>| if n.is_some() { c.as_ref().map_or(0, |c| c.len()) } else { 0 };
        Self {
            pde: terms.pde.iter().map(|&n| g.scalar(n)).collect(),
            bc: val(terms.bc),
            ic: val(terms.ic),
            data: val(terms.data),
            n_pde: masks.pde.len(),
            n_bc: count(&masks.bc, terms.bc),
            n_ic: count(&masks.ic, terms.ic),
            n_data: count(&masks.data, terms.data),
        }
    }
}

/// Record the mean-squared loss terms.
///
/// `residual` has one channel per equation; `bc_source` is the tensor the
/// boundary constraint indexes (often `pred` itself).
pub fn loss_terms(g: &mut Graph, pred: NodeId, residual: NodeId, bc_source: NodeId, masks: &LossMasks) -> Result<LossTerms> {
    let rs = g.shape(residual);
    let plane = rs.plane();
    let mut pde = Vec::with_capacity(rs.c);
    if !masks.pde.is_empty() {
        let zeros = Arc::new(vec![0.0; masks.pde.len()]);
        for c in 0..rs.c {
            let idx: Vec<usize> = masks.pde.iter().map(|&k| c * plane + k).collect();
            pde.push(g.masked_mse(residual, Arc::new(idx), zeros.clone())?);
        }
    }
    let mse = |g: &mut Graph, src: NodeId, c: &Option<Constraint>| -> Result<Option<NodeId>> {
        match c {
            Some(c) if !c.is_empty() => Ok(Some(g.masked_mse(src, c.indices.clone(), c.targets.clone())?)),
            _ => Ok(None),
        }
    };
    Ok(LossTerms {
        pde,
        bc: mse(g, bc_source, &masks.bc)?,
        ic: mse(g, pred, &masks.ic)?,
        data: mse(g, pred, &masks.data)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Manual,
    Dynamic { alpha: f64, cadence: usize },
    Dimensional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Shared by every PDE equation.
    pub pde: f64,
    pub bc: f64,
    pub ic: f64,
    pub data: f64,
    pub scheme: Scheme,
}

impl LossWeights {
    pub fn manual(pde: f64, bc: f64, ic: f64, data: f64) -> Result<Self> {
        let w = Self {
            pde,
            bc,
            ic,
            data,
            scheme: Scheme::Manual,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn ones(scheme: Scheme) -> Self {
        Self {
            pde: 1.0,
            bc: 1.0,
            ic: 1.0,
            data: 1.0,
            scheme,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("pde", self.pde), ("bc", self.bc), ("ic", self.ic), ("data", self.data)] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("loss weight {name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }

    pub fn get(&self, term: Term) -> f64 {
        match term {
            Term::Pde => self.pde,
            Term::Bc => self.bc,
            Term::Ic => self.ic,
            Term::Data => self.data,
        }
    }

    fn get_mut(&mut self, term: Term) -> &mut f64 {
        match term {
            Term::Pde => &mut self.pde,
            Term::Bc => &mut self.bc,
            Term::Ic => &mut self.ic,
            Term::Data => &mut self.data,
        }
    }
}

/// `lambda_pde * sum(L_pde) + lambda_bc L_bc + lambda_ic L_ic + lambda_data L_data`.
pub fn total_loss(b: &LossBreakdown, w: &LossWeights) -> f64 {
    w.pde * b.pde_total() + w.bc * b.bc + w.ic * b.ic + w.data * b.data
}

/// The weighted total as a graph node.
pub fn total_loss_graph(g: &mut Graph, t: &LossTerms, w: &LossWeights) -> Result<NodeId> {
    let mut parts: Vec<(NodeId, f64)> = t.pde.iter().map(|&n| (n, w.pde)).collect();
    for (node, weight) in [(t.bc, w.bc), (t.ic, w.ic), (t.data, w.data)] {
        if let Some(n) = node {
            parts.push((n, weight));
        }
    }
    if parts.is_empty() {
        return Err(Error::Config("no active loss terms".into()));
    }
    g.weighted_sum(&parts)
}

/// Gradient norms feeding one dynamic update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradNorms {
    pub pde: f64,
    pub bc: Option<f64>,
    pub ic: Option<f64>,
    pub data: Option<f64>,
}

/// Blend `lambda_T <- alpha |grad L_pde| / |grad L_T| + (1 - alpha) lambda_T`
/// for every non-PDE term; `lambda_pde` is pinned to 1.
pub fn dynamic_weight_update(norms: &GradNorms, prev: &LossWeights, alpha: f64) -> LossWeights {
    let mut next = *prev;
    next.pde = 1.0;
    if !(norms.pde > 0.0 && norms.pde.is_finite()) {
        log::warn!("PDE gradient norm is {}; dynamic weights left unchanged", norms.pde);
        return next;
    }
    for (term, n) in [(Term::Bc, norms.bc), (Term::Ic, norms.ic), (Term::Data, norms.data)] {
        let Some(n) = n else { continue };
        if !(n > 0.0 && n.is_finite()) {
            log::warn!("gradient norm of {term:?} is {n}; weight update skipped");
            continue;
        }
        let target = norms.pde / n;
        let w = next.get_mut(term);
        *w = alpha * target + (1.0 - alpha) * *w;
    }
    next
}

/// Characteristic scales and per-term dimension exponents.
///
/// A term whose squared residual carries dimension `prod_k scale_k^e_k`
/// receives weight `prod_k scale_k^(-e_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionalSpec {
    pub scales: Vec<f64>,
    pub pde: Vec<f64>,
    pub bc: Vec<f64>,
    pub ic: Vec<f64>,
    pub data: Vec<f64>,
}

impl DimensionalSpec {
    /// Two scales `(X, Y)` with the squared momentum residual dimension
    /// `Y^4 / X^2`; boundary and data terms are taken as already balanced.
    pub fn momentum(length: f64, velocity: f64) -> Self {
        Self {
            scales: vec![length, velocity],
            pde: vec![-2.0, 4.0],
            bc: vec![0.0, 0.0],
            ic: vec![0.0, 0.0],
            data: vec![0.0, 0.0],
        }
    }
}

pub fn dimensional_balance_weights(spec: &DimensionalSpec) -> Result<LossWeights> {
    if let Some(s) = spec.scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return invalid(format!("characteristic scales must be positive, got {s}"));
    }
    let weight = |exps: &[f64]| -> Result<f64> {
        if exps.len() != spec.scales.len() {
            return invalid("one exponent per characteristic scale expected");
        }
        Ok(spec.scales.iter().zip(exps).map(|(s, e)| s.powf(-e)).product())
    };
    let w = LossWeights {
        pde: weight(&spec.pde)?,
        bc: weight(&spec.bc)?,
        ic: weight(&spec.ic)?,
        data: weight(&spec.data)?,
        scheme: Scheme::Dimensional,
    };
    w.validate()?;
    Ok(w)
}

/// Weight scheme as written in run configurations.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightConfig {
    /// `manual:<pde>,<bc>,<ic>,<data>`
    Manual([f64; 4]),
    /// `dynamic:<alpha>,<cadence>`
    Dynamic { alpha: f64, cadence: usize },
    /// `dimensional:<length>,<velocity>`
    Dimensional(Vec<f64>),
}

impl WeightConfig {
    pub fn initial(&self) -> Result<LossWeights> {
        match self {
            WeightConfig::Manual([p, b, i, d]) => LossWeights::manual(*p, *b, *i, *d),
            WeightConfig::Dynamic { alpha, cadence } => Ok(LossWeights::ones(Scheme::Dynamic {
                alpha: *alpha,
                cadence: *cadence,
            })),
            WeightConfig::Dimensional(s) => {
                if s.len() != 2 {
                    return invalid("dimensional weights take a length and a velocity scale");
                }
                dimensional_balance_weights(&DimensionalSpec::momentum(s[0], s[1]))
            }
        }
    }
}

impl fmt::Display for WeightConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        match self {
            WeightConfig::Manual(v) => write!(f, "manual:{}", join(v)),
            WeightConfig::Dynamic { alpha, cadence } => write!(f, "dynamic:{alpha},{cadence}"),
            WeightConfig::Dimensional(s) => write!(f, "dimensional:{}", join(s)),
        }
    }
}

impl FromStr for WeightConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed weight scheme '{s}'"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let nums: Vec<f64> = rest
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        match kind {
            "manual" => {
                let arr: [f64; 4] = match nums.len() {
                    2 => [nums[0], nums[1], 1.0, 1.0],
                    4 => [nums[0], nums[1], nums[2], nums[3]],
                    _ => return Err(bad()),
                };
                LossWeights::manual(arr[0], arr[1], arr[2], arr[3]).map_err(|e| Error::Config(e.to_string()))?;
                Ok(WeightConfig::Manual(arr))
            }
            "dynamic" => {
                let alpha = *nums.first().ok_or_else(bad)?;
                let cadence = match nums.get(1) {
                    Some(&c) if c >= 1.0 && c.fract() == 0.0 => c as usize,
                    Some(_) => return Err(bad()),
                    None => 10,
                };
                if !(alpha > 0.0 && alpha <= 1.0) || nums.len() > 2 {
                    return Err(bad());
                }
                Ok(WeightConfig::Dynamic { alpha, cadence })
            }
            "dimensional" => {
                if nums.len() != 2 || nums.iter().any(|&v| v <= 0.0) {
                    return Err(bad());
                }
                Ok(WeightConfig::Dimensional(nums))
            }
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Shape;

    fn breakdown(pde: f64, bc: f64, ic: f64, data: f64) -> LossBreakdown {
        LossBreakdown {
            pde: vec![pde],
            bc,
            ic,
            data,
            n_pde: 1,
            n_bc: 1,
            n_ic: 1,
            n_data: 1,
        }
    }

    #[test]
    fn total_of_unit_terms() {
        let w = LossWeights::ones(Scheme::Manual);
        assert_eq!(total_loss(&breakdown(1.0, 1.0, 1.0, 1.0), &w), 4.0);
    }

    #[test]
    fn linear_default_weights() {
        let w = LossWeights::manual(1.0, 1000.0, 1.0, 1.0).unwrap();
        let t = total_loss(&breakdown(0.002, 0.001, 0.0, 0.0), &w);
        assert!((t - 1.002).abs() < 1e-15);
    }

    #[test]
    fn dynamic_update_arithmetic() {
        let prev = LossWeights::ones(Scheme::Dynamic { alpha: 0.1, cadence: 10 });
        let norms = GradNorms {
            pde: 10.0,
            bc: Some(2.0),
            ..Default::default()
        };
        let w = dynamic_weight_update(&norms, &prev, 0.1);
        assert!((w.bc - 1.4).abs() < 1e-15);
        assert_eq!(w.pde, 1.0);
        assert_eq!(w.data, 1.0);
        let same = GradNorms {
            pde: 3.0,
            bc: Some(3.0),
            ..Default::default()
        };
        assert_eq!(dynamic_weight_update(&same, &prev, 0.1).bc, 1.0);
    }

    #[test]
    fn zero_norm_skips_term() {
        let prev = LossWeights::ones(Scheme::Manual);
        let norms = GradNorms {
            pde: 1.0,
            bc: Some(0.0),
            data: Some(0.5),
            ..Default::default()
        };
        let w = dynamic_weight_update(&norms, &prev, 0.1);
        assert_eq!(w.bc, 1.0);
        assert!((w.data - 1.1).abs() < 1e-15);
    }

    #[test]
    fn dimensional_examples() {
        let zero = DimensionalSpec {
            scales: vec![3.0, 7.0],
            pde: vec![0.0, 0.0],
            bc: vec![0.0, 0.0],
            ic: vec![0.0, 0.0],
            data: vec![0.0, 0.0],
        };
        let w = dimensional_balance_weights(&zero).unwrap();
        assert_eq!((w.pde, w.bc, w.ic, w.data), (1.0, 1.0, 1.0, 1.0));
        // U^4 / L^2 with U = 2, L = 1.
        let w = dimensional_balance_weights(&DimensionalSpec::momentum(1.0, 2.0)).unwrap();
        assert_eq!(w.pde, 1.0 / 16.0);
        let w = dimensional_balance_weights(&DimensionalSpec::momentum(128.0, 1.0)).unwrap();
        assert_eq!(w.pde, 16384.0);
        assert!(dimensional_balance_weights(&DimensionalSpec::momentum(0.0, 1.0)).is_err());
    }

    #[test]
    fn mask_losses() {
        let mut g = Graph::new();
        let r = g.constant(Shape::new(1, 3, 4), vec![2.0; 12]).unwrap();
        let masks = LossMasks {
            pde: Arc::new(vec![5, 6]),
            bc: Some(Constraint::new(vec![0, 1], vec![2.0, 2.0])),
            ic: None,
            data: None,
        };
        let t = loss_terms(&mut g, r, r, r, &masks).unwrap();
        let b = LossBreakdown::read(&g, &t, &masks);
        assert_eq!(b.pde, vec![4.0]);
        assert_eq!(b.bc, 0.0);
        assert_eq!((b.ic, b.n_ic), (0.0, 0));
        assert_eq!(t.active(), 2);
    }

    #[test]
    fn config_roundtrip() {
        for s in ["manual:1,1000,1,1", "dynamic:0.1,10", "dimensional:128,1"] {
            assert_eq!(s.parse::<WeightConfig>().unwrap().to_string(), s);
        }
        assert_eq!(
            "manual:1,1000".parse::<WeightConfig>().unwrap(),
            WeightConfig::Manual([1.0, 1000.0, 1.0, 1.0])
        );
        for bad in ["manual:1", "dynamic:0", "dimensional:1", "fancy:1", "manual:-1,1"] {
            assert!(bad.parse::<WeightConfig>().is_err(), "{bad}");
        }
    }
}
