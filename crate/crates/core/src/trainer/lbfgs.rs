use std::collections::VecDeque;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_evals: usize,
    /// Stop once the gradient max-norm drops below this.
    pub gtol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history: 20,
            c1: 1e-4,
            c2: 0.9,
            max_evals: 25,
            gtol: 1e-12,
        }
    }
}

/// Result of one L-BFGS iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Accepted,
    /// Gradient already below tolerance; nothing moved.
    Converged,
    LineSearchFailed,
    /// The objective returned a non-finite value or failed.
    NonFinite,
}

enum Search {
    Found { alpha: f64, f: f64, g: Vec<f64> },
    Failed,
    NonFinite,
}

/// Limited-memory BFGS with a strong Wolfe line search.
///
/// The objective returns the loss and its full gradient. `evaluations`
/// counts calls into it.
pub struct Lbfgs {
    pub config: LbfgsConfig,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    f: Option<f64>,
    g: Vec<f64>,
    pub evaluations: usize,
    pub accepted: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Lbfgs {
    pub fn new(config: LbfgsConfig) -> Self {
        Self {
            config,
            pairs: VecDeque::new(),
            f: None,
            g: Vec::new(),
            evaluations: 0,
            accepted: 0,
        }
    }

    /// Loss at the current iterate, once known.
    pub fn loss(&self) -> Option<f64> {
        self.f
    }

    fn eval<F>(&mut self, obj: &mut F, x: &[f64]) -> Option<(f64, Vec<f64>)>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        self.evaluations += 1;
        match obj(x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some((f, g)),
            Ok(_) => None,
            Err(e) => {
                log::warn!("objective failed inside L-BFGS: {e}");
                None
            }
        }
    }

    fn direction(&self) -> Vec<f64> {
        let mut q: Vec<f64> = self.g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qk, yk) in q.iter_mut().zip(y) {
                *qk -= a * yk;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qk, sk) in q.iter_mut().zip(s) {
                *qk += (a - b) * sk;
            }
        }
        q
    }

    /// One iteration. `x` is only modified on an accepted step.
    pub fn step<F>(&mut self, x: &mut [f64], obj: &mut F) -> StepOutcome
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        if self.f.is_none() {
            match self.eval(obj, x) {
                Some((f, g)) => {
                    self.f = Some(f);
                    self.g = g;
                }
                None => return StepOutcome::NonFinite,
            }
        }
        let gmax = self.g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax <= self.config.gtol {
            return StepOutcome::Converged;
        }
        let mut d = self.direction();
        let mut slope = dot(&self.g, &d);
        if !(slope < 0.0) {
            self.pairs.clear();
            d = self.g.iter().map(|v| -v).collect();
            slope = dot(&self.g, &d);
        }
        let alpha0 = if self.pairs.is_empty() {
            (1.0 / self.g.iter().map(|v| v * v).sum::<f64>().sqrt()).min(1.0)
        } else {
            1.0
        };
        match self.line_search(obj, x, &d, slope, alpha0) {
            Search::Found { alpha, f, g } => {
                let s: Vec<f64> = d.iter().map(|v| alpha * v).collect();
                let y: Vec<f64> = g.iter().zip(&self.g).map(|(a, b)| a - b).collect();
                for (xk, sk) in x.iter_mut().zip(&s) {
                    *xk += sk;
                }
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
                    if self.pairs.len() == self.config.history {
                        self.pairs.pop_front();
                    }
                    self.pairs.push_back((s, y, 1.0 / sy));
                }
                self.f = Some(f);
                self.g = g;
                self.accepted += 1;
                StepOutcome::Accepted
            }
            Search::Failed => StepOutcome::LineSearchFailed,
            Search::NonFinite => StepOutcome::NonFinite,
        }
    }

    fn line_search<F>(&mut self, obj: &mut F, x: &[f64], d: &[f64], slope0: f64, alpha0: f64) -> Search
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let f0 = self.f.expect("loss evaluated");
        let (c1, c2) = (self.config.c1, self.config.c2);
        let point = |a: f64| -> Vec<f64> { x.iter().zip(d).map(|(xk, dk)| xk + a * dk).collect() };
        let mut evals = 0usize;

        let mut prev = (0.0, f0, slope0);
        let mut a = alpha0;
        let bracket;
        loop {
            if evals >= self.config.max_evals {
                return Search::Failed;
            }
            evals += 1;
            let Some((fa, ga)) = self.eval(obj, &point(a)) else {
                return Search::NonFinite;
            };
            let da = dot(&ga, d);
            if fa > f0 + c1 * a * slope0 || (evals > 1 && fa >= prev.1) {
                bracket = (prev, (a, fa, da));
                break;
            }
            if da.abs() <= -c2 * slope0 {
                return Search::Found { alpha: a, f: fa, g: ga };
            }
            if da >= 0.0 {
                bracket = ((a, fa, da), prev);
                break;
            }
            prev = (a, fa, da);
            a *= 2.0;
        }

        let (mut lo, mut hi) = bracket;
        while evals < self.config.max_evals {
            evals += 1;
            let a = interpolate(lo, hi);
            let Some((fa, ga)) = self.eval(obj, &point(a)) else {
                return Search::NonFinite;
            };
            let da = dot(&ga, d);
            if fa > f0 + c1 * a * slope0 || fa >= lo.1 {
                hi = (a, fa, da);
            } else {
                if da.abs() <= -c2 * slope0 {
                    return Search::Found { alpha: a, f: fa, g: ga };
                }
                if da * (hi.0 - lo.0) >= 0.0 {
                    hi = lo;
                }
                lo = (a, fa, da);
            }
            if (hi.0 - lo.0).abs() < 1e-16 * lo.0.abs().max(1.0) {
                break;
            }
        }
        // No strong Wolfe point; a sufficient decrease at `lo` still counts.
        if lo.0 > 0.0 && lo.1 < f0 {
            if let Some((fa, ga)) = self.eval(obj, &point(lo.0)) {
                return Search::Found { alpha: lo.0, f: fa, g: ga };
            }
            return Search::NonFinite;
        }
        Search::Failed
    }
}

/// Cubic minimiser of the bracket, kept away from its ends.
fn interpolate(lo: (f64, f64, f64), hi: (f64, f64, f64)) -> f64 {
    let (a0, f0, d0) = lo;
    let (a1, f1, d1) = hi;
    let (left, right) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let width = right - left;
    let d = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1);
    let disc = d * d - d0 * d1;
    let mut t = f64::NAN;
    if disc >= 0.0 {
        let sq = disc.sqrt() * (a1 - a0).signum();
        let denom = d1 - d0 + 2.0 * sq;
        if denom != 0.0 {
            t = a1 - (a1 - a0) * (d1 + sq - d) / denom;
        }
    }
    if !t.is_finite() || t < left + 0.1 * width || t > right - 0.1 * width {
        t = 0.5 * (left + right);
    }
    t
}
