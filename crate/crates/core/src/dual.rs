//! Forward-mode dual numbers with `N` tangent directions.
//!
//! `Dual<T, N>` nests: `Dual<Dual<f64, 1>, 4>` carries a directional
//! derivative inside each of four partials, which is how second derivatives
//! of energy densities are obtained without symbolic work.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn constant(v: f64) -> Self;
    /// Innermost real part.
    fn value(&self) -> f64;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
}

impl Real for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T, const N: usize> {
    pub re: T,
    pub eps: [T; N],
}

impl<T: Real, const N: usize> Dual<T, N> {
    #[inline]
    pub fn new(re: T, eps: [T; N]) -> Self {
        Self { re, eps }
    }

    /// A quantity with no dependence on the seeded directions.
    #[inline]
    pub fn from_real(re: T) -> Self {
        Self {
            re,
            eps: [T::constant(0.0); N],
        }
    }

    /// Independent variable seeded along direction `k`.
    #[inline]
    pub fn variable(re: T, k: usize) -> Self {
        let mut eps = [T::constant(0.0); N];
        eps[k] = T::constant(1.0);
        Self { re, eps }
    }

    #[inline]
    fn chain(self, f: T, df: T) -> Self {
        Self {
            re: f,
            eps: self.eps.map(|e| e * df),
        }
    }
}

impl<T: Real, const N: usize> Add for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (a, b) in eps.iter_mut().zip(o.eps) {
            *a = *a + b;
        }
        Self {
            re: self.re + o.re,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Sub for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (a, b) in eps.iter_mut().zip(o.eps) {
            *a = *a - b;
        }
        Self {
            re: self.re - o.re,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Mul for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut eps = self.eps;
        for (k, a) in eps.iter_mut().enumerate() {
            *a = *a * o.re + self.re * o.eps[k];
        }
        Self {
            re: self.re * o.re,
            eps,
        }
    }
}

impl<T: Real, const N: usize> Div for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = T::constant(1.0) / o.re;
        let q = self.re * inv;
        let mut eps = self.eps;
        for (k, a) in eps.iter_mut().enumerate() {
            *a = (*a - q * o.eps[k]) * inv;
        }
        Self { re: q, eps }
    }
}

impl<T: Real, const N: usize> Neg for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            re: -self.re,
            eps: self.eps.map(|e| -e),
        }
    }
}

impl<T: Real, const N: usize> Add<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn add(self, o: f64) -> Self {
        Self {
            re: self.re + o,
            eps: self.eps,
        }
    }
}

impl<T: Real, const N: usize> Sub<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn sub(self, o: f64) -> Self {
        Self {
            re: self.re - o,
            eps: self.eps,
        }
    }
}

impl<T: Real, const N: usize> Mul<f64> for Dual<T, N> {
    type Output = Self;
    #[inline]
    fn mul(self, o: f64) -> Self {
        Self {
            re: self.re * o,
            eps: self.eps.map(|e| e * o),
        }
    }
}

impl<T: Real, const N: usize> Real for Dual<T, N> {
    #[inline]
    fn constant(v: f64) -> Self {
        Self::from_real(T::constant(v))
    }
    #[inline]
    fn value(&self) -> f64 {
        self.re.value()
    }
    #[inline]
    fn ln(self) -> Self {
        let d = T::constant(1.0) / self.re;
        self.chain(self.re.ln(), d)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        let d = T::constant(0.5) / s;
        self.chain(s, d)
    }
    #[inline]
    fn powf(self, p: f64) -> Self {
        let d = self.re.powf(p - 1.0) * p;
        self.chain(self.re.powf(p), d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<T: Real>(x: T, y: T) -> T {
        (x * y + x.ln()) / (y.sqrt() + 1.0) - x.powf(1.5) * 2.0
    }

    #[test]
    fn first_derivatives_match_closed_form() {
        let (x, y) = (1.3, 0.7);
        let r = f(Dual::<f64, 2>::variable(x, 0), Dual::variable(y, 1));
        let s = y.sqrt() + 1.0;
        let dfdx = (y + 1.0 / x) / s - 3.0 * x.sqrt();
        let dfdy = x / s - (x * y + x.ln()) * 0.5 / y.sqrt() / (s * s);
        assert!((r.re - f(x, y)).abs() < 1e-15);
        assert!((r.eps[0] - dfdx).abs() < 1e-14);
        assert!((r.eps[1] - dfdy).abs() < 1e-14);
    }

    #[test]
    fn nested_gives_symmetric_second_derivatives() {
        let (x, y) = (1.3, 0.7);
        type D2 = Dual<Dual<f64, 2>, 2>;
        let vx = D2::new(Dual::variable(x, 0), [Dual::from_real(1.0), Dual::from_real(0.0)]);
        let vy = D2::new(Dual::variable(y, 1), [Dual::from_real(0.0), Dual::from_real(1.0)]);
        let r = f(vx, vy);
        let hxy = r.eps[0].eps[1];
        let hyx = r.eps[1].eps[0];
        assert!((hxy - hyx).abs() < 1e-14);
        let h = 1e-5;
        let dfdx = |y: f64| f(Dual::<f64, 1>::variable(x, 0), Dual::from_real(y)).eps[0];
        let fd = (dfdx(y + h) - dfdx(y - h)) / (2.0 * h);
        assert!((fd - hxy).abs() < 1e-8);
    }
}
