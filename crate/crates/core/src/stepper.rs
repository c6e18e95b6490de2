//! Admissibility test, the StepA / StepB primitives and the Euler step bound.

use thiserror::Error;

use crate::field::{JetSeries, VectorField};
use crate::interval::{round, IBox, Interval};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("step size underflow at t-step {h:e} (H = {big_h:e}): promise likely violated")]
    Underflow { h: f64, big_h: f64 },
}

/// Relative inflation applied to candidate full enclosures.
pub const INFLATE_REL: f64 = 1.1;
/// Absolute pad applied to candidate full enclosures.
pub const INFLATE_ABS: f64 = 1e-9;
/// Extra widening passes before a step size is abandoned.
pub const PICARD_PASSES: usize = 4;
/// StepA gives up below this fraction of the requested step.
pub const UNDERFLOW_FRAC: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Admissibility {
    NotAdmissible,
    /// Containment holds; `tail` bounds `[0,h]^k f^[k](F)` componentwise.
    Admissible { tail: Vec<f64> },
    /// Containment holds and the tail lies in `[-eps, eps]^n`.
    EpsAdmissible { tail: Vec<f64> },
}

impl Admissibility {
    pub fn holds(&self) -> bool {
        !matches!(self, Admissibility::NotAdmissible)
    }
}

/// `[0,h]^i` as an interval.
#[inline]
fn hpow_range(h: f64, i: usize) -> Interval {
    Interval::new(0.0, Interval::point(h).powi(i as u32).hi)
}

/// `sum_{i<k} [0,h]^i f^[i](E) + [0,h]^k rem`.
pub fn taylor_range(jet_e: &JetSeries, rem: &IBox, h: f64, k: usize) -> IBox {
    let n = jet_e.n;
    let mut out = Vec::with_capacity(n);
    for d in 0..n {
        let mut s = jet_e.at(0, d);
        for i in 1..k {
            s = s + hpow_range(h, i) * jet_e.at(i, d);
        }
        s = s + hpow_range(h, k) * rem.dims[d];
        out.push(s);
    }
    IBox::new(out)
}

/// `sum_{i<k} h^i f^[i](E) + h^k rem` at the single time `h`.
pub fn taylor_at(jet_e: &JetSeries, rem: &IBox, h: Interval, k: usize) -> IBox {
    let n = jet_e.n;
    let mut out = Vec::with_capacity(n);
    for d in 0..n {
        // Horner in h
        let mut s = rem.dims[d];
        for i in (0..k).rev() {
            s = s * h + jet_e.at(i, d);
        }
        out.push(s);
    }
    IBox::new(out)
}

fn tail_bound(rem: &IBox, h: f64, k: usize) -> Vec<f64> {
    let hk = hpow_range(h, k);
    rem.dims.iter().map(|r| (hk * *r).mag()).collect()
}

pub fn check_admissible(
    f: &VectorField,
    e: &IBox,
    h: f64,
    full: &IBox,
    eps: Option<&[f64]>,
) -> Admissibility {
    let k = f.k;
    if !e.interior_of(full) {
        return Admissibility::NotAdmissible;
    }
    let jet_e = f.taylor_jet(e, k - 1);
    let rem = f.taylor_jet(full, k).term(k);
    let lhs = taylor_range(&jet_e, &rem, h, k);
    if !lhs.subset(full) {
        return Admissibility::NotAdmissible;
    }
    let tail = tail_bound(&rem, h, k);
    match eps {
        Some(eps) if tail.iter().zip(eps).all(|(t, e)| t <= e) => {
            Admissibility::EpsAdmissible { tail }
        }
        _ => Admissibility::Admissible { tail },
    }
}

/// Result of StepA: an admissible pair `(h, F)` for the start box.
#[derive(Debug, Clone)]
pub struct StepAResult {
    pub h: f64,
    pub full: IBox,
    /// `f^[k](F)`, reused by StepB and by tube centers.
    pub rem: IBox,
    pub halvings: u32,
    /// Jets of the start box up to order `k - 1`.
    pub jet_e: JetSeries,
}

fn pad_for(e: &IBox) -> f64 {
    let scale = e.dims.iter().map(|d| d.mag()).fold(0.0, f64::max);
    INFLATE_ABS.min(1e-6 * e.wmax().max(1e-300)).max(4.0 * f64::EPSILON * (1.0 + scale))
}

/// Try to certify `(E, h, F)` for a fixed `h`.
fn try_step(
    f: &VectorField,
    e: &IBox,
    jet_e: &JetSeries,
    h: f64,
    eps: &[f64],
) -> Option<(IBox, IBox)> {
    let k = f.k;
    let f_e = jet_e.term(1);
    let drift = IBox::new(
        f_e.dims
            .iter()
            .map(|d| Interval::new(0.0, h) * *d)
            .collect(),
    );
    let mut full = e.hull(&e.add(&drift)).inflate(INFLATE_REL, INFLATE_ABS);
    for _ in 0..=PICARD_PASSES {
        let rem = f.taylor_jet(&full, k).term(k);
        let lhs = taylor_range(jet_e, &rem, h, k);
        if lhs.is_empty() || lhs.dims.iter().any(|d| !d.lo.is_finite() || !d.hi.is_finite()) {
            break;
        }
        if lhs.subset(&full) && e.interior_of(&full) {
            let tail = tail_bound(&rem, h, k);
            if tail.iter().zip(eps).any(|(t, e)| t > e) {
                break;
            }
            // shrink toward the image of the Taylor operator when it still certifies
            let pad = pad_for(e);
            let tight = lhs.inflate(1.0, pad).intersect(&full);
            if !tight.is_empty() && e.interior_of(&tight) {
                let rem2 = f.taylor_jet(&tight, k).term(k);
                let lhs2 = taylor_range(jet_e, &rem2, h, k);
                let tail2 = tail_bound(&rem2, h, k);
                if lhs2.subset(&tight) && tail2.iter().zip(eps).all(|(t, e)| t <= e) {
                    return Some((tight, rem2));
                }
            }
            return Some((full, rem));
        }
        full = full.hull(&lhs).inflate(INFLATE_REL, INFLATE_ABS);
    }
    // the coarse candidate sum_{i<k} [0,h]^i f^[i](E) + Box(eps) always
    // certifies once h^k |f^[k]| <= eps on it
    let hr = Interval::new(0.0, h);
    let coarse = IBox::new(
        (0..e.n())
            .map(|d| {
                let mut s = jet_e.at(0, d);
                for i in 1..k {
                    s = s + hr.powi(i as u32) * jet_e.at(i, d);
                }
                s + Interval::new(-eps[d], eps[d])
            })
            .collect(),
    );
    let rem = f.taylor_jet(&coarse, k).term(k);
    let lhs = taylor_range(jet_e, &rem, h, k);
    let tail = tail_bound(&rem, h, k);
    if lhs.subset(&coarse) && e.interior_of(&coarse) && tail.iter().zip(eps).all(|(t, e)| t <= e) {
        return Some((coarse, rem));
    }
    None
}

/// Halve `H` until an eps-admissible pair is found.
pub fn step_a(
    f: &VectorField,
    e: &IBox,
    big_h: f64,
    eps: &[f64],
) -> Result<StepAResult, StepError> {
    assert!(big_h > 0.0);
    let jet_e = f.taylor_jet(e, f.k - 1);
    let mut h = big_h;
    let mut halvings = 0;
    loop {
        if h < UNDERFLOW_FRAC * big_h {
            return Err(StepError::Underflow { h, big_h });
        }
        if let Some((full, rem)) = try_step(f, e, &jet_e, h, eps) {
            return Ok(StepAResult {
                h,
                full,
                rem,
                halvings,
                jet_e,
            });
        }
        h *= 0.5;
        halvings += 1;
    }
}

/// End enclosure of an admissible triple, using precomputed jets.
pub fn step_b_with(jet_e: &JetSeries, rem: &IBox, h: f64, full: &IBox, k: usize) -> IBox {
    if h == 0.0 {
        let n = jet_e.n;
        return IBox::new(jet_e.coef[..n].to_vec());
    }
    taylor_at(jet_e, rem, Interval::point(h), k).intersect(full)
}

/// `E1 = sum_{i<k} h^i f^[i](E) + h^k f^[k](F)`, intersected with `F`.
pub fn step_b(f: &VectorField, e: &IBox, h: f64, full: &IBox) -> IBox {
    if h == 0.0 {
        return e.clone();
    }
    let k = f.k;
    let jet_e = f.taylor_jet(e, k - 1);
    let rem = f.taylor_jet(full, k).term(k);
    step_b_with(&jet_e, &rem, h, full, k)
}

/// First-order full enclosure of all trajectories from `x` over `[0, tau]`.
pub fn enclose_first_order(f: &VectorField, x: &IBox, tau: f64) -> Option<IBox> {
    let t = Interval::new(0.0, tau);
    let fx = f.eval_interval(x);
    let mut g = x
        .hull(&x.add(&IBox::new(fx.dims.iter().map(|d| t * *d).collect())))
        .inflate(1.2, pad_for(x));
    for _ in 0..3 {
        let fg = f.eval_interval(&g);
        let img = x.add(&IBox::new(fg.dims.iter().map(|d| t * *d).collect()));
        if img.subset(&g) {
            return Some(img.hull(x));
        }
        g = g.hull(&img).inflate(1.5, pad_for(x));
    }
    None
}

/// Largest step for which a one-step Euler error stays within `delta`.
pub fn h_euler(big_h: f64, m: f64, mu: f64, delta: f64) -> f64 {
    debug_assert!(m >= 0.0 && delta > 0.0 && big_h > 0.0);
    if m <= 0.0 {
        return big_h;
    }
    if mu.abs() < 1e-12 {
        return big_h.min(2.0 * delta / (m * big_h));
    }
    // for mu < 0 numerator and denominator are both negative
    let den = m * (mu * big_h).exp_m1() - mu * mu * delta;
    let v = 2.0 * mu * delta / den;
    if den == 0.0 || !(v > 0.0) || !v.is_finite() {
        return big_h;
    }
    big_h.min(v)
}

/// `2 ||f^[2](F)||_2`, a bound on the second time derivative over `F`.
pub fn second_derivative_bound(f: &VectorField, full: &IBox) -> f64 {
    let j = f.taylor_jet(full, 2);
    let v: Vec<f64> = j.term(2).dims.iter().map(|d| d.mag()).collect();
    round::mul_up(2.0, crate::matrix::norm2_up(&v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(k: usize) -> VectorField {
        VectorField::parse(&["x"], &["-x"], &[], k).unwrap()
    }

    #[test]
    fn admissibility_worked_example() {
        let f = decay(3);
        let e = IBox::new(vec![Interval::new(-0.1, 0.1)]);
        let full = IBox::new(vec![Interval::new(-0.2, 0.2)]);
        let r = check_admissible(&f, &e, 0.5, &full, Some(&[1.0]));
        assert!(matches!(r, Admissibility::EpsAdmissible { .. }));
        let jet = f.taylor_jet(&e, 2);
        let rem = f.taylor_jet(&full, 3).term(3);
        let lhs = taylor_range(&jet, &rem, 0.5, 3);
        assert!(lhs.dims[0].lo >= -0.1671 && lhs.dims[0].hi <= 0.1671);
        let small = IBox::new(vec![Interval::new(-0.12, 0.12)]);
        assert_eq!(check_admissible(&f, &e, 0.5, &small, None), Admissibility::NotAdmissible);
        assert_eq!(check_admissible(&f, &e, 0.5, &e, None), Admissibility::NotAdmissible);
    }

    #[test]
    fn step_a_then_b_on_decay() {
        let f = decay(20);
        let e = IBox::new(vec![Interval::new(-0.1, 0.1)]);
        let r = step_a(&f, &e, 0.5, &[1.0]).unwrap();
        assert_eq!(r.h, 0.5);
        assert!(check_admissible(&f, &e, r.h, &r.full, Some(&[1.0])).holds());
    }

    #[test]
    fn step_b_matches_closed_form() {
        let f = decay(20);
        let e = IBox::point(&[1.0]);
        let r = step_a(&f, &e, 0.1, &[1.0]).unwrap();
        assert_eq!(r.h, 0.1);
        let e1 = step_b(&f, &e, 0.1, &r.full);
        let want = (-0.1f64).exp();
        assert!(e1.dims[0].contains(want));
        assert!(e1.dims[0].width() < 1e-12);
        assert_eq!(step_b(&f, &e, 0.0, &r.full), e);
    }

    #[test]
    fn h_euler_values() {
        let v = h_euler(1.0, 1.0, -1.0, 0.01);
        assert!((v - 0.03114).abs() < 1e-4, "{v}");
        assert_eq!(h_euler(1.0, 0.0, -1.0, 0.01), 1.0);
        assert_eq!(h_euler(1.0, 0.0, 0.0, 0.01), 1.0);
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let d = 0.1 * 0.5f64.powi(i);
            let h = h_euler(2.0, 3.0, -0.7, d);
            assert!(h <= prev);
            prev = h;
        }
    }

    #[test]
    fn euler_error_within_delta_at_h_euler() {
        // x' = -x, one Euler step from x0 = 1: |e^{-h} - (1 - h)| <= h^2/2 * max|x''|
        let h = h_euler(1.0, 1.0, -1.0, 0.01);
        let err = ((-h).exp() - (1.0 - h)).abs();
        assert!(err <= 0.01);
    }
}
