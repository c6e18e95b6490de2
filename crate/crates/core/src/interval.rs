//! Outward-rounded intervals and axis-aligned boxes.
//!
//! Rounding is done by nudging each computed bound one ulp outward with
//! `f64::next_down` / `f64::next_up`. Additions and subtractions first check
//! whether the nearest-rounded result is exact (via an error-free two-sum) and
//! only nudge when it is not, so exact inputs stay exact.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntervalError {
    #[error("division by an interval containing zero: {0}")]
    DivByZero(Interval),
    #[error("dimension mismatch: {0} vs {1}")]
    Dim(usize, usize),
}

#[derive(Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            write!(f, "[empty]")
        } else {
            write!(f, "[{:e}, {:e}]", self.lo, self.hi)
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[inline]
fn two_sum_err(a: f64, b: f64, s: f64) -> f64 {
    let bb = s - a;
    (a - (s - bb)) + (b - bb)
}

#[inline]
fn add_down(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        return if s.is_nan() { f64::NEG_INFINITY } else { s };
    }
    if two_sum_err(a, b, s) < 0.0 {
        s.next_down()
    } else {
        s
    }
}

#[inline]
fn add_up(a: f64, b: f64) -> f64 {
    let s = a + b;
    if !s.is_finite() {
        return if s.is_nan() { f64::INFINITY } else { s };
    }
    if two_sum_err(a, b, s) > 0.0 {
        s.next_up()
    } else {
        s
    }
}

#[inline]
fn down(x: f64) -> f64 {
    if x == 0.0 {
        // products and quotients that round to zero may have lost a tiny sign
        -f64::from_bits(1)
    } else if x.is_nan() {
        f64::NEG_INFINITY
    } else {
        x.next_down()
    }
}

#[inline]
fn up(x: f64) -> f64 {
    if x == 0.0 {
        f64::from_bits(1)
    } else if x.is_nan() {
        f64::INFINITY
    } else {
        x.next_up()
    }
}

/// Upward-rounded helpers for nonnegative scalar bounds.
pub mod round {
    #[inline]
    pub fn add_up(a: f64, b: f64) -> f64 {
        super::add_up(a, b)
    }
    #[inline]
    pub fn add_down(a: f64, b: f64) -> f64 {
        super::add_down(a, b)
    }
    #[inline]
    pub fn mul_up(a: f64, b: f64) -> f64 {
        let p = a * b;
        if p == 0.0 && (a == 0.0 || b == 0.0) {
            0.0
        } else {
            super::up(p)
        }
    }
    #[inline]
    pub fn mul_down(a: f64, b: f64) -> f64 {
        let p = a * b;
        if p == 0.0 && (a == 0.0 || b == 0.0) {
            0.0
        } else {
            super::down(p)
        }
    }
    #[inline]
    pub fn div_up(a: f64, b: f64) -> f64 {
        let q = a / b;
        if a == 0.0 {
            0.0
        } else {
            super::up(q)
        }
    }
    #[inline]
    pub fn exp_up(x: f64) -> f64 {
        if x == 0.0 {
            1.0
        } else {
            super::up(x.exp())
        }
    }
    #[inline]
    pub fn sqrt_up(x: f64) -> f64 {
        let s = x.sqrt();
        if s * s == x {
            s
        } else {
            s.next_up()
        }
    }
}

impl Interval {
    /// Canonical empty set (lo > hi).
    pub const EMPTY: Interval = Interval {
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };
    pub const ZERO: Interval = Interval { lo: 0.0, hi: 0.0 };
    pub const ONE: Interval = Interval { lo: 1.0, hi: 1.0 };
    pub const ENTIRE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    #[inline]
    pub fn new(lo: f64, hi: f64) -> Interval {
        debug_assert!(lo <= hi, "Interval::new({lo}, {hi})");
        Interval { lo, hi }
    }

    #[inline]
    pub fn point(x: f64) -> Interval {
        Interval { lo: x, hi: x }
    }

    /// `[c - r, c + r]` rounded outward.
    pub fn centered(c: f64, r: f64) -> Interval {
        Interval {
            lo: add_down(c, -r),
            hi: add_up(c, r),
        }
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    #[inline]
    pub fn width(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            add_up(self.hi, -self.lo)
        }
    }

    #[inline]
    pub fn mid(&self) -> f64 {
        let m = 0.5 * self.lo + 0.5 * self.hi;
        m.clamp(self.lo, self.hi)
    }

    /// Upper bound on the distance from the midpoint to either endpoint.
    #[inline]
    pub fn rad(&self) -> f64 {
        let m = self.mid();
        add_up(self.hi, -m).max(add_up(m, -self.lo))
    }

    /// Largest absolute value.
    #[inline]
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    /// Smallest absolute value.
    #[inline]
    pub fn mig(&self) -> f64 {
        if self.contains(0.0) {
            0.0
        } else {
            self.lo.abs().min(self.hi.abs())
        }
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    #[inline]
    pub fn subset(&self, other: &Interval) -> bool {
        self.is_empty() || (other.lo <= self.lo && self.hi <= other.hi)
    }

    /// `self` lies in the open interior of `other`.
    #[inline]
    pub fn interior_of(&self, other: &Interval) -> bool {
        self.is_empty() || (other.lo < self.lo && self.hi < other.hi)
    }

    #[inline]
    pub fn hull(&self, other: &Interval) -> Interval {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    #[inline]
    pub fn intersect(&self, other: &Interval) -> Interval {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Interval { lo, hi }
        } else {
            Interval::EMPTY
        }
    }

    #[inline]
    pub fn sqr(&self) -> Interval {
        let a = self.lo * self.lo;
        let b = self.hi * self.hi;
        if self.lo >= 0.0 {
            Interval::new(round::mul_down(self.lo, self.lo), up(b))
        } else if self.hi <= 0.0 {
            Interval::new(round::mul_down(self.hi, self.hi), up(a))
        } else {
            Interval::new(0.0, up(a.max(b)))
        }
    }

    pub fn powi(&self, n: u32) -> Interval {
        match n {
            0 => Interval::ONE,
            1 => *self,
            2 => self.sqr(),
            _ => {
                let half = self.powi(n / 2).sqr();
                if n % 2 == 0 {
                    half
                } else {
                    half * *self
                }
            }
        }
    }

    pub fn div(&self, other: &Interval) -> Result<Interval, IntervalError> {
        if other.contains(0.0) {
            return Err(IntervalError::DivByZero(*other));
        }
        let q = [
            self.lo / other.lo,
            self.lo / other.hi,
            self.hi / other.lo,
            self.hi / other.hi,
        ];
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exact_zero = |v: f64| v == 0.0 && self.lo == 0.0 && self.hi == 0.0;
        Ok(Interval {
            lo: if exact_zero(lo) { 0.0 } else { down(lo) },
            hi: if exact_zero(hi) { 0.0 } else { up(hi) },
        })
    }

    /// Division by a nonzero point constant.
    #[inline]
    pub fn div_scalar(&self, c: f64) -> Interval {
        debug_assert!(c != 0.0);
        let a = self.lo / c;
        let b = self.hi / c;
        let (lo, hi) = if c > 0.0 { (a, b) } else { (b, a) };
        Interval {
            lo: if self.lo == 0.0 && c > 0.0 || self.hi == 0.0 && c < 0.0 {
                0.0
            } else {
                down(lo)
            },
            hi: if self.hi == 0.0 && c > 0.0 || self.lo == 0.0 && c < 0.0 {
                0.0
            } else {
                up(hi)
            },
        }
    }

    #[inline]
    pub fn scale(&self, c: f64) -> Interval {
        // powers of two scale exactly unless the result leaves the normal range
        if c != 0.0 && c.to_bits() & ((1u64 << 52) - 1) == 0 && c.is_normal() {
            let (a, b) = (self.lo * c, self.hi * c);
            let ok = |v: f64, s: f64| v == 0.0 && s == 0.0 || v.is_normal();
            if ok(a, self.lo) && ok(b, self.hi) {
                return if c > 0.0 { Interval { lo: a, hi: b } } else { Interval { lo: b, hi: a } };
            }
        }
        *self * Interval::point(c)
    }

    pub fn exp(&self) -> Interval {
        let lo = if self.lo == 0.0 {
            1.0
        } else {
            down(self.lo.exp()).max(0.0)
        };
        let hi = if self.hi == 0.0 { 1.0 } else { up(self.hi.exp()) };
        Interval { lo, hi }
    }

    pub fn sqrt(&self) -> Interval {
        let lo = self.lo.max(0.0);
        let s = lo.sqrt();
        let l = if s * s == lo { s } else { s.next_down().max(0.0) };
        Interval::new(l, round::sqrt_up(self.hi))
    }

    /// Inflate about the midpoint: radius scaled by `rel`, plus `abs` on each side.
    pub fn inflate(&self, rel: f64, abs: f64) -> Interval {
        let m = self.mid();
        let r = round::add_up(round::mul_up(self.rad(), rel), abs);
        Interval::centered(m, r)
    }
}

impl Add for Interval {
    type Output = Interval;
    #[inline]
    fn add(self, o: Interval) -> Interval {
        Interval {
            lo: add_down(self.lo, o.lo),
            hi: add_up(self.hi, o.hi),
        }
    }
}

impl Sub for Interval {
    type Output = Interval;
    #[inline]
    fn sub(self, o: Interval) -> Interval {
        Interval {
            lo: add_down(self.lo, -o.hi),
            hi: add_up(self.hi, -o.lo),
        }
    }
}

impl Neg for Interval {
    type Output = Interval;
    #[inline]
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Mul for Interval {
    type Output = Interval;
    #[inline]
    fn mul(self, o: Interval) -> Interval {
        let (a, b, c, d) = (self.lo, self.hi, o.lo, o.hi);
        let (lo, hi) = if a >= 0.0 && c >= 0.0 {
            (a * c, b * d)
        } else {
            let p = [a * c, a * d, b * c, b * d];
            let mut lo = p[0];
            let mut hi = p[0];
            for &v in &p[1..] {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        };
        let zero_in = (a == 0.0 && b == 0.0) || (c == 0.0 && d == 0.0);
        if zero_in {
            return Interval::ZERO;
        }
        Interval {
            lo: if lo == 0.0 && (a >= 0.0 && c >= 0.0) && (a == 0.0 || c == 0.0) {
                0.0
            } else {
                down(lo)
            },
            hi: up(hi),
        }
    }
}

/// An axis-aligned box; a vector of intervals.
#[derive(Clone, PartialEq)]
pub struct IBox {
    pub dims: Vec<Interval>,
}

impl fmt::Debug for IBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, d) in self.dims.iter().enumerate() {
            if i > 0 {
                write!(f, " x ")?;
            }
            write!(f, "{d:?}")?;
        }
        write!(f, "]")
    }
}

impl IBox {
    pub fn new(dims: Vec<Interval>) -> IBox {
        IBox { dims }
    }

    pub fn point(p: &[f64]) -> IBox {
        IBox {
            dims: p.iter().map(|&x| Interval::point(x)).collect(),
        }
    }

    /// `Box_p(r) = p + [-r, r]^n`.
    pub fn centered(p: &[f64], r: &[f64]) -> IBox {
        IBox {
            dims: p
                .iter()
                .zip(r)
                .map(|(&c, &r)| Interval::centered(c, r))
                .collect(),
        }
    }

    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> IBox {
        IBox {
            dims: lo.iter().zip(hi).map(|(&l, &h)| Interval::new(l, h)).collect(),
        }
    }

    pub fn empty(n: usize) -> IBox {
        IBox {
            dims: vec![Interval::EMPTY; n],
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.iter().any(|d| d.is_empty())
    }

    pub fn lo(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.lo).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.hi).collect()
    }

    pub fn mid(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.mid()).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.width()).collect()
    }

    pub fn radii(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.rad()).collect()
    }

    pub fn wmax(&self) -> f64 {
        self.dims.iter().map(|d| d.width()).fold(0.0, f64::max)
    }

    pub fn wmin(&self) -> f64 {
        self.dims
            .iter()
            .map(|d| d.width())
            .fold(f64::INFINITY, f64::min)
    }

    /// Number of dimensions with strictly positive width.
    pub fn dim(&self) -> usize {
        self.dims.iter().filter(|d| d.width() > 0.0).count()
    }

    pub fn contains_point(&self, p: &[f64]) -> bool {
        self.dims.iter().zip(p).all(|(d, &x)| d.contains(x))
    }

    pub fn subset(&self, other: &IBox) -> bool {
        self.dims.iter().zip(&other.dims).all(|(a, b)| a.subset(b))
    }

    pub fn interior_of(&self, other: &IBox) -> bool {
        self.dims.iter().zip(&other.dims).all(|(a, b)| a.interior_of(b))
    }

    pub fn hull(&self, other: &IBox) -> IBox {
        IBox {
            dims: self.dims.iter().zip(&other.dims).map(|(a, b)| a.hull(b)).collect(),
        }
    }

    /// Intersection; any empty component collapses the whole box to the sentinel.
    pub fn intersect(&self, other: &IBox) -> IBox {
        let dims: Vec<Interval> = self
            .dims
            .iter()
            .zip(&other.dims)
            .map(|(a, b)| a.intersect(b))
            .collect();
        if dims.iter().any(|d| d.is_empty()) {
            IBox::empty(dims.len())
        } else {
            IBox { dims }
        }
    }

    /// Minkowski sum.
    pub fn add(&self, other: &IBox) -> IBox {
        IBox {
            dims: self.dims.iter().zip(&other.dims).map(|(a, b)| *a + *b).collect(),
        }
    }

    /// Dilation `alpha * B` about the origin.
    pub fn scale(&self, alpha: f64) -> IBox {
        IBox {
            dims: self.dims.iter().map(|d| d.scale(alpha)).collect(),
        }
    }

    /// `p + alpha (B - p)`.
    pub fn dilate_toward(&self, p: &[f64], alpha: f64) -> IBox {
        IBox {
            dims: self
                .dims
                .iter()
                .zip(p)
                .map(|(d, &c)| {
                    let pc = Interval::point(c);
                    let r = pc + (*d - pc).scale(alpha);
                    // keep the result inside the original box when it should be
                    if alpha <= 1.0 && d.contains(c) {
                        r.intersect(d)
                    } else {
                        r
                    }
                })
                .collect(),
        }
    }

    pub fn inflate(&self, rel: f64, abs: f64) -> IBox {
        IBox {
            dims: self.dims.iter().map(|d| d.inflate(rel, abs)).collect(),
        }
    }

    /// Split every non-degenerate dimension at its midpoint: 2^d children.
    pub fn subdivide(&self) -> Vec<IBox> {
        let split: Vec<usize> = (0..self.n()).filter(|&i| self.dims[i].width() > 0.0).collect();
        let mut out = Vec::with_capacity(1 << split.len());
        for mask in 0..(1usize << split.len()) {
            let mut dims = self.dims.clone();
            for (bit, &i) in split.iter().enumerate() {
                let d = self.dims[i];
                let m = d.mid();
                dims[i] = if mask >> bit & 1 == 0 {
                    Interval::new(d.lo, m)
                } else {
                    Interval::new(m, d.hi)
                };
            }
            out.push(IBox { dims });
        }
        out
    }

    /// Componentwise maximum distance from `c` to the box edges, rounded up.
    pub fn radii_about(&self, c: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(c)
            .map(|(d, &x)| add_up(d.hi, -x).max(add_up(x, -d.lo)).max(0.0))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        self.dims.iter().map(|d| d.hi - d.lo).product()
    }
}
