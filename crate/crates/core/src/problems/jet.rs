//! Second-order forward-mode numbers in two variables, used to evaluate
//! closed-form fields together with their exact first and second partials.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value plus partials with respect to the two grid coordinates `(s, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub s: f64,
    pub t: f64,
    pub ss: f64,
    pub st: f64,
    pub tt: f64,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            s: 0.0,
            t: 0.0,
            ss: 0.0,
            st: 0.0,
            tt: 0.0,
        }
    }

    /// The two independent variables at a point.
    pub fn vars(s: f64, t: f64) -> (Self, Self) {
        (
            Self { s: 1.0, ..Self::constant(s) },
            Self { t: 1.0, ..Self::constant(t) },
        )
    }

    /// Apply a scalar function given its value and first two derivatives.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        Self {
            v: f,
            s: df * self.s,
            t: df * self.t,
            ss: d2f * self.s * self.s + df * self.ss,
            st: d2f * self.s * self.t + df * self.st,
            tt: d2f * self.t * self.t + df * self.tt,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn powi(self, n: i32) -> Self {
        let nf = n as f64;
        self.chain(
            self.v.powi(n),
            nf * self.v.powi(n - 1),
            nf * (nf - 1.0) * self.v.powi(n - 2),
        )
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet::constant(v)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            s: self.s + o.s,
            t: self.t + o.t,
            ss: self.ss + o.ss,
            st: self.st + o.st,
            tt: self.tt + o.tt,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            s: self.s * o.v + self.v * o.s,
            t: self.t * o.v + self.v * o.t,
            ss: self.ss * o.v + 2.0 * self.s * o.s + self.v * o.ss,
            st: self.st * o.v + self.s * o.t + self.t * o.s + self.v * o.st,
            tt: self.tt * o.v + 2.0 * self.t * o.t + self.v * o.tt,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, o: f64) -> Jet {
        Jet { v: self.v + o, ..self }
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, o: f64) -> Jet {
        Jet { v: self.v - o, ..self }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, k: f64) -> Jet {
        Jet {
            v: self.v * k,
            s: self.s * k,
            t: self.t * k,
            ss: self.ss * k,
            st: self.st * k,
            tt: self.tt * k,
        }
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, j: Jet) -> Jet {
        j + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, j: Jet) -> Jet {
        -j + self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_on_polynomial() {
        // f = s^2 t^3 at (2, 3)
        let (s, t) = Jet::vars(2.0, 3.0);
        let f = s.powi(2) * t.powi(3);
        assert_eq!(f.v, 108.0);
        assert_eq!(f.s, 2.0 * 2.0 * 27.0);
        assert_eq!(f.t, 4.0 * 3.0 * 9.0);
        assert_eq!(f.ss, 2.0 * 27.0);
        assert_eq!(f.st, 2.0 * 2.0 * 3.0 * 9.0);
        assert_eq!(f.tt, 4.0 * 6.0 * 3.0);
    }

    #[test]
    fn quotient_and_transcendentals() {
        let (s, t) = Jet::vars(0.7, -0.4);
        let f = (s * t).sin() / (t.exp() + 2.0);
        let h = 1e-4;
        let g = |a: f64, b: f64| (a * b).sin() / (b.exp() + 2.0);
        let fss = (g(0.7 + h, -0.4) - 2.0 * g(0.7, -0.4) + g(0.7 - h, -0.4)) / (h * h);
        let fst = (g(0.7 + h, -0.4 + h) - g(0.7 + h, -0.4 - h) - g(0.7 - h, -0.4 + h)
            + g(0.7 - h, -0.4 - h))
            / (4.0 * h * h);
        assert!((f.ss - fss).abs() < 1e-6);
        assert!((f.st - fst).abs() < 1e-6);
        assert!((f.v - g(0.7, -0.4)).abs() < 1e-15);
    }
}
