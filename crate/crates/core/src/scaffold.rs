//! The m-stage scaffold with per-stage refinement data, and the Extend,
//! Bisect, EulerTube and Refine subroutines built on it.
//!
//! The tube follows one reference trajectory from a point `c0` of the stage
//! start box, enclosed by order-k Taylor polynomials with a Lagrange remainder
//! over the stage's mini full enclosures. The spread of all other
//! trajectories around it is bounded two ways on short substeps: a
//! componentwise radius driven by the Metzler majorant of the Jacobian, and a
//! Euclidean radius driven by the logarithmic norm. Both are sound because
//! every trajectory and the reference stay inside the same convex substep
//! enclosure.

use std::time::Instant;

use thiserror::Error;

use crate::complexity::{local_olh, ChainRecord, RefineRecord, RunStats};
use crate::field::VectorField;
use crate::interval::{round, IBox, Interval};
use crate::matrix::{
    flow_derivative, identity, lognorm2_sharp, IMatrix, matmul_nonneg_up, matvec_up, metzler, metzler_exp_bound, norm2_up,
    norm_inf,
};
use crate::stepper::{
    enclose_first_order, h_euler, second_derivative_bound, step_a, step_b_with, taylor_at,
    StepError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaffoldError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("refine exceeded {0} phases")]
    PhaseOverflow(usize),
    #[error("nothing to extend: stage end already at the horizon")]
    NothingToExtend,
    #[error("stage index {0} out of range")]
    BadStage(usize),
    #[error("p0 is not inside E0")]
    PointOutside,
}

/// Coordinate transform hook for the tube. Only the identity is used by the
/// solver; the scaling variant exists to exercise `transform_bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    Scale(f64),
}

/// Bound on the image of a `delta`-error under the inverse transform.
pub fn transform_bound(delta: f64, pi: Transform, _full: &IBox) -> f64 {
    match pi {
        Transform::Identity => delta,
        Transform::Scale(s) => {
            let q = delta / s.abs();
            if q.mul_add(s.abs(), -delta) == 0.0 {
                q
            } else {
                round::div_up(delta, s.abs())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct MiniScaffold {
    pub level: u32,
    /// `2^level + 1` mini end enclosures; `e[0]` is the stage start.
    pub e: Vec<IBox>,
    /// `2^level` mini full enclosures.
    pub full: Vec<IBox>,
    /// `f^[k]` over each mini full enclosure.
    pub rem: Vec<IBox>,
}

/// What the tube knows at the end of a stage about the trajectories from E0.
///
/// Every such state lies in `c + a d + err` for some `d` in the deviation box
/// (`E0 - p0` when `rooted`, else `d0`), and within `r` componentwise and
/// `rho` in the Euclidean norm of `c`.
#[derive(Debug, Clone)]
pub struct TubeState {
    pub c: Vec<f64>,
    /// Row-major point matrix.
    pub a: Vec<f64>,
    pub err: IBox,
    pub rooted: bool,
    pub d0: IBox,
    pub r: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone)]
pub struct RefineSub {
    pub transform: Transform,
    pub mini: MiniScaffold,
    /// Certified growth rate of box radii over the stage.
    pub mu1: f64,
    /// Logarithmic-norm bound over the stage enclosures.
    pub mu2: f64,
    pub delta: f64,
    pub h_euler: f64,
    /// `2 ||f^[2](F_i)||_2`.
    pub m2: f64,
    /// Componentwise amplification matrix (row-major, nonnegative).
    pub amp: Vec<f64>,
    /// Euclidean amplification factor.
    pub ball_amp: f64,
    pub tube: Option<TubeState>,
    pub center_err: f64,
    /// Stage length as certified by StepA.
    pub dt: f64,
}

/// Taylor order cap inside tube substeps.
pub const TUBE_ORDER: usize = 8;

#[derive(Debug, Clone)]
pub struct Params {
    /// Componentwise tail bound for eps-admissibility.
    pub eps_adm: Vec<f64>,
    pub max_level: u32,
    pub max_phases: usize,
    /// Substep count cap per mini step inside the tube.
    pub max_substeps: usize,
}

impl Params {
    pub fn new(n: usize, eps: f64) -> Params {
        Params {
            eps_adm: vec![eps; n],
            max_level: 10,
            max_phases: 400,
            max_substeps: 64,
        }
    }
}

pub struct Scaffold<'a> {
    pub f: &'a VectorField,
    pub t: Vec<f64>,
    pub e: Vec<IBox>,
    pub full: Vec<IBox>,
    pub g: Vec<RefineSub>,
    pub stats: RunStats,
    pub params: Params,
    /// Anchor of the reference trajectory; E0 only ever shrinks toward it.
    pub p0: Vec<f64>,
}

/// Amplification summary of the current chain.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    /// Predicted `wmax(E_m)` from the E0 spread alone.
    pub r0_width: f64,
    /// Amplification of errors introduced at a stage, worst over stages.
    pub amp_delta: f64,
}

enum TubeOutcome {
    Done,
    Failed,
}

impl<'a> Scaffold<'a> {
    pub fn new(f: &'a VectorField, e0: IBox, params: Params) -> Scaffold<'a> {
        Scaffold {
            f,
            t: vec![0.0],
            full: vec![],
            g: vec![],
            p0: e0.mid(),
            e: vec![e0],
            stats: RunStats::default(),
            params,
        }
    }

    pub fn m(&self) -> usize {
        self.g.len()
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn e_end(&self) -> &IBox {
        self.e.last().unwrap()
    }

    fn n(&self) -> usize {
        self.f.n
    }

    /// Append one stage of length at most `h_rem`.
    pub fn extend(&mut self, h_rem: f64) -> Result<(), ScaffoldError> {
        if !(h_rem > 0.0) {
            return Err(ScaffoldError::NothingToExtend);
        }
        let f = self.f;
        let k = f.k;
        let e_m = self.e_end().clone();
        let r = step_a(f, &e_m, h_rem, &self.params.eps_adm)?;
        let olh = local_olh(f, &r.jet_e, h_rem, &self.params.eps_adm);
        self.stats.step_a_halvings.push((r.halvings, h_rem, olh));
        let e1 = step_b_with(&r.jet_e, &r.rem, r.h, &r.full, k);
        let t_new = if r.h == h_rem { self.t_end() + h_rem } else { self.t_end() + r.h };
        let m2 = second_derivative_bound(f, &r.full);
        let j = f.jacobian_interval(&r.full);
        let mu = lognorm2_sharp(&j);
        let n = self.n();
        let amp = metzler_exp_bound(n, &metzler(&j), r.h);
        let ball_amp = round::exp_up(round::mul_up(mu, r.h));
        self.stats.absorb_image(&r.full);
        self.t.push(t_new);
        self.e.push(e1.clone());
        self.full.push(r.full.clone());
        self.g.push(RefineSub {
            transform: Transform::Identity,
            mini: MiniScaffold {
                level: 0,
                e: vec![e_m, e1],
                full: vec![r.full],
                rem: vec![r.rem],
            },
            mu1: growth_rate(n, &amp, ball_amp, r.h),
            mu2: mu,
            delta: 0.0,
            h_euler: r.h,
            m2,
            amp,
            ball_amp,
            tube: None,
            center_err: 0.0,
            dt: r.h,
        });
        self.stats.stages = self.m();
        // seed the stage's amplification data with one tube pass
        let i = self.m();
        self.g[i - 1].delta = f64::INFINITY;
        self.euler_tube(i)?;
        self.g[i - 1].delta = 0.0;
        Ok(())
    }

    /// Double the level of stage `i` (1-based) and rebuild its mini steps.
    pub fn bisect(&mut self, i: usize) -> Result<(), ScaffoldError> {
        if i == 0 || i > self.m() {
            return Err(ScaffoldError::BadStage(i));
        }
        let f = self.f;
        let k = f.k;
        let level = self.g[i - 1].mini.level + 1;
        let dt = self.g[i - 1].dt;
        let count = 1usize << level;
        let hh = dt / count as f64;
        let mut es = Vec::with_capacity(count + 1);
        let mut fulls = Vec::with_capacity(count);
        let mut rems = Vec::with_capacity(count);
        es.push(self.e[i - 1].clone());
        for j in 0..count {
            let mut cur = es[j].clone();
            let mut left = if j + 1 == count { dt - hh * j as f64 } else { hh };
            let mut hull: Option<IBox> = None;
            let mut rem_single = None;
            let mut pieces = 0;
            while left > 0.0 {
                let r = step_a(f, &cur, left, &self.params.eps_adm)?;
                let next = step_b_with(&r.jet_e, &r.rem, r.h, &r.full, k);
                hull = Some(match hull {
                    Some(h) => h.hull(&r.full),
                    None => r.full.clone(),
                });
                rem_single = Some(r.rem);
                pieces += 1;
                cur = next;
                left = if r.h == left { 0.0 } else { left - r.h };
            }
            let full = hull.unwrap();
            let rem = if pieces == 1 {
                rem_single.unwrap()
            } else {
                f.taylor_jet(&full, k).term(k)
            };
            fulls.push(full);
            rems.push(rem);
            es.push(cur);
        }
        let last = es.last().unwrap().intersect(&self.e[i]);
        if !last.is_empty() {
            self.e[i] = last.clone();
            *es.last_mut().unwrap() = last;
        }
        let mut stage_full = fulls[0].clone();
        for fj in &fulls[1..] {
            stage_full = stage_full.hull(fj);
        }
        let sf = stage_full.intersect(&self.full[i - 1]);
        if !sf.is_empty() {
            self.full[i - 1] = sf;
        }
        let g = &mut self.g[i - 1];
        g.m2 = second_derivative_bound(f, &self.full[i - 1]);
        g.mini = MiniScaffold {
            level,
            e: es,
            full: fulls,
            rem: rems,
        };
        self.stats.bisect_calls += 1;
        self.stats.max_level = self.stats.max_level.max(level);
        Ok(())
    }

    /// Reference state entering stage `i`.
    fn tube_start(&self, i: usize) -> TubeState {
        let n = self.n();
        let start = &self.e[i - 1];
        let prev = if i == 1 {
            Some(TubeState {
                c: self.p0.clone(),
                a: identity(n),
                err: IBox::point(&vec![0.0; n]),
                rooted: true,
                d0: IBox::point(&vec![0.0; n]),
                r: vec![f64::INFINITY; n],
                rho: f64::INFINITY,
            })
        } else {
            self.g[i - 2].tube.clone()
        };
        match prev {
            Some(mut st) => {
                let r = deviation_radii(start, &IBox::point(&st.c));
                st.rho = st.rho.min(norm2_up(&r));
                st.r = st.r.iter().zip(&r).map(|(a, b)| a.min(*b)).collect();
                st
            }
            None => {
                let c = start.mid();
                let r = start.radii_about(&c);
                TubeState {
                    a: identity(n),
                    err: IBox::point(&vec![0.0; n]),
                    rooted: false,
                    d0: offset(start, &c),
                    rho: norm2_up(&r),
                    r,
                    c,
                }
            }
        }
    }

    /// Recompute the end enclosure of stage `i` by the tube construction.
    pub fn euler_tube(&mut self, i: usize) -> Result<bool, ScaffoldError> {
        if i == 0 || i > self.m() {
            return Err(ScaffoldError::BadStage(i));
        }
        self.stats.euler_tube_calls += 1;
        match self.tube_pass(i) {
            TubeOutcome::Done => Ok(true),
            TubeOutcome::Failed => {
                self.stats.tube_fallbacks += 1;
                Ok(false)
            }
        }
    }

    fn tube_pass(&mut self, i: usize) -> TubeOutcome {
        let f = self.f;
        let n = self.n();
        // substeps are short, a low order keeps the remainder negligible
        let k = f.k.min(TUBE_ORDER);
        let st = self.tube_start(i);
        let d = if st.rooted { offset(&self.e[0], &self.p0) } else { st.d0.clone() };
        let (mut c, mut a, mut err, mut r, mut rho) = (st.c, st.a, st.err, st.r, st.rho);
        let g = &self.g[i - 1];
        let count = g.mini.full.len();
        let dt = g.dt;
        let hh = dt / count as f64;
        // the reference need not lie in E_{i-1} when the chain is not rooted
        let mut x = self.e[i - 1].hull(&IBox::point(&c));
        // magnitude bookkeeping: product of |phi| and the error introduced here
        let mut local = identity(n);
        let mut fresh = vec![0.0; n];
        let mut ball_amp = 1.0f64;
        let mut mu_max = f64::NEG_INFINITY;
        let mut substeps = 0usize;
        let floor = 1e-9 * (1.0 + self.p0.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for j in 0..count {
            let fj = &g.mini.full[j];
            let len = if j + 1 == count { dt - hh * j as f64 } else { hh };
            let speed = f.eval_interval(fj).dims.iter().map(|d| d.mag()).fold(0.0, f64::max);
            // size of the tracked set, which may be far below wmax(x)
            let ad = IMatrix::from_points(n, &a).matvec(&d.dims);
            let spread = (0..n)
                .map(|e| 2.0 * (ad[e].mag() + err.dims[e].mag()))
                .fold(0.0, f64::max)
                .min(x.wmax());
            let q = ((8.0 * len * speed / spread.max(floor)).ceil() as usize)
                .clamp(1, self.params.max_substeps);
            let mut left = len;
            let mut tau = len / q as f64;
            while left > 0.0 {
                if tau >= left {
                    tau = left;
                }
                let gset = match enclose_first_order(f, &x, tau) {
                    Some(g) => g,
                    None => {
                        tau *= 0.5;
                        if tau < 1e-12 * len {
                            return TubeOutcome::Failed;
                        }
                        continue;
                    }
                };
                let jac = f.jacobian_interval(&gset);
                let pm = metzler_exp_bound(n, &metzler(&jac), tau);
                let mu = lognorm2_sharp(&jac);
                mu_max = mu_max.max(mu);
                let growth = if mu >= 0.0 {
                    round::exp_up(round::mul_up(mu, tau))
                } else {
                    round::exp_up(-round::mul_down(-mu, tau))
                };
                ball_amp = round::mul_up(ball_amp, growth);
                let phi = flow_derivative(&jac, tau);
                let phi_mag = phi.mag();
                local = matmul_nonneg_up(n, &phi_mag, &local);

                // reference: Taylor polynomial from the point c, remainder over G
                let jet_c = f.taylor_jet(&IBox::point(&c), k - 1);
                let rem = f.taylor_jet(&gset, k).term(k);
                let zc = taylor_at(&jet_c, &rem, Interval::point(tau), k);
                let c_new = zc.mid();
                let resid = offset(&zc, &c_new);

                // states: c + a d + err  ->  c_new + a_new d + err_new
                let pa = phi.matmul(&IMatrix::from_points(n, &a));
                let a_new: Vec<f64> = pa.a.iter().map(|v| v.mid()).collect();
                let split = IMatrix::from_vec(
                    n,
                    pa.a.iter()
                        .zip(&a_new)
                        .map(|(v, m)| *v - Interval::point(*m))
                        .collect(),
                )
                .matvec(&d.dims);
                let carried = phi.matvec(&err.dims);
                err = IBox::new(
                    (0..n)
                        .map(|e| carried[e] + split[e] + resid.dims[e])
                        .collect(),
                );
                fresh = matvec_up(n, &phi_mag, &fresh)
                    .iter()
                    .enumerate()
                    .map(|(e, v)| round::add_up(*v, round::add_up(split[e].mag(), resid.dims[e].mag())))
                    .collect();

                let shift: Vec<f64> = resid.dims.iter().map(|v| v.mag()).collect();
                r = matvec_up(n, &pm, &r)
                    .iter()
                    .zip(&shift)
                    .map(|(a, b)| round::add_up(*a, *b))
                    .collect();
                rho = round::add_up(round::mul_up(rho, growth), norm2_up(&shift));
                a = a_new;
                c = c_new;

                let ad = IMatrix::from_points(n, &a).matvec(&d.dims);
                let affine = IBox::new(
                    (0..n)
                        .map(|e| Interval::point(c[e]) + ad[e] + err.dims[e])
                        .collect(),
                );
                let rad: Vec<f64> = r.iter().map(|&v| v.min(rho)).collect();
                let ball = IBox::centered(&c, &rad);
                let nx = ball.intersect(&affine).intersect(&gset);
                if nx.is_empty() {
                    return TubeOutcome::Failed;
                }
                x = nx.hull(&IBox::point(&c));
                left = if tau == left { 0.0 } else { left - tau };
                substeps += 1;
            }
        }
        if log::log_enabled!(log::Level::Debug) {
            let ad = IMatrix::from_points(n, &a).matvec(&d.dims);
            log::debug!(
                "tube stage {i}: substeps {substeps}, linear {:?}, err {:?}, end {:?}",
                ad.iter().map(|v| v.rad()).collect::<Vec<_>>(),
                err.radii(),
                x.radii()
            );
        }
        let new_end = self.e[i].intersect(&x);
        if new_end.is_empty() {
            return TubeOutcome::Failed;
        }
        self.e[i] = new_end.clone();
        self.stats.substeps += substeps;
        let delta_t = transform_bound(g.delta, g.transform, &self.full[i - 1]);
        let introduced = fresh.iter().copied().fold(0.0, f64::max);
        let ok = introduced <= g.delta / 4.0;
        let g = &mut self.g[i - 1];
        *g.mini.e.last_mut().unwrap() = new_end;
        g.amp = local;
        g.ball_amp = ball_amp;
        g.mu1 = growth_rate(n, &g.amp, g.ball_amp, dt);
        g.mu2 = mu_max;
        g.tube = Some(TubeState {
            c,
            a,
            err,
            rooted: st.rooted,
            d0: st.d0,
            r,
            rho,
        });
        g.center_err = introduced;
        if delta_t.is_finite() && delta_t > 0.0 {
            g.h_euler = dt.min(h_euler(dt, g.m2, g.mu2, delta_t));
        }
        if ok {
            TubeOutcome::Done
        } else {
            TubeOutcome::Failed
        }
    }

    /// Amplification of the current chain from the stored per-stage data.
    pub fn predict(&self) -> Prediction {
        let n = self.n();
        let e0 = &self.e[0];
        let r0 = e0.radii();
        let r0_width = match self.g.last().and_then(|g| g.tube.as_ref()) {
            Some(st) if st.rooted => {
                let d = offset(e0, &self.p0);
                let w = d.widths();
                (0..n)
                    .map(|i| (0..n).fold(0.0, |acc, j| round::add_up(acc, round::mul_up(st.a[i * n + j].abs(), w[j]))))
                    .fold(0.0, f64::max)
            }
            _ => {
                let mut v = r0.clone();
                let mut ball = 1.0f64;
                for g in &self.g {
                    v = matvec_up(n, &g.amp, &v);
                    ball = round::mul_up(ball, g.ball_amp);
                }
                let comp = v.iter().copied().fold(0.0, f64::max);
                let euc = round::mul_up(ball, norm2_up(&r0));
                2.0 * comp.min(euc)
            }
        };
        // errors entering at stage i are carried by stages i+1..m
        let mut amp_delta = 1.0f64;
        let mut suffix = identity(n);
        for g in self.g.iter().rev() {
            amp_delta = amp_delta.max(norm_inf(n, &suffix));
            suffix = matmul_nonneg_up(n, &suffix, &g.amp);
        }
        Prediction {
            r0_width,
            amp_delta,
        }
    }

    fn shrink(&mut self, p0: &[f64]) {
        self.e[0] = self.e[0].dilate_toward(p0, 0.5);
        if let Some(g) = self.g.first_mut() {
            g.mini.e[0] = self.e[0].clone();
        }
        self.stats.shrinks += 1;
    }

    /// Tube stage `i`; on failure bisect once and tube again.
    fn tube_or_bisect(&mut self, i: usize) -> Result<(), ScaffoldError> {
        if self.euler_tube(i)? || self.g[i - 1].mini.level >= self.params.max_level {
            return Ok(());
        }
        self.bisect(i)?;
        self.euler_tube(i)?;
        Ok(())
    }

    /// Refine until `wmax(E_m) < eps0`, shrinking E0 toward `p0` as needed.
    pub fn refine(&mut self, eps0: f64, p0: &[f64]) -> Result<(), ScaffoldError> {
        if !self.e[0].contains_point(p0) {
            return Err(ScaffoldError::PointOutside);
        }
        if self.p0.as_slice() != p0 {
            self.p0 = p0.to_vec();
            self.g.iter_mut().for_each(|g| g.tube = None);
        }
        let m = self.m();
        if m == 0 {
            return Ok(());
        }
        let pred = self.predict();
        let amp = pred.amp_delta.max(1.0);
        for i in 0..m {
            let cap = self.e[i + 1].wmax() / 4.0;
            let d = eps0 / (16.0 * m as f64 * amp);
            self.g[i].delta = d.min(cap).max(1e-14);
        }
        let w0 = self.e[0].wmax();
        let n1 = if pred.r0_width > 0.0 && w0 > 0.0 {
            (pred.r0_width / (eps0 / 2.0)).log2().ceil().max(0.0) as u32
        } else {
            0
        };
        let dmax = self.g.iter().map(|g| g.delta).fold(0.0, f64::max);
        let n2 = ((8.0 * amp * dmax * m as f64 / eps0).log2().ceil().max(0.0) as u32)
            + self.params.max_level.min(self.g.iter().map(|g| g.mini.level).max().unwrap_or(0) + 1);
        let mut phases = 0usize;
        let mut r_m = self.e_end().wmax();
        while r_m >= eps0 {
            phases += 1;
            self.stats.refine_phases += 1;
            if phases > self.params.max_phases {
                return Err(ScaffoldError::PhaseOverflow(phases));
            }
            let pred = self.predict();
            let big_delta = self.g.iter().map(|g| g.delta).fold(0.0, f64::max);
            let ed = pred.amp_delta;
            if ed * big_delta * (m as f64) < eps0 / 8.0 && pred.r0_width < eps0 / 2.0 {
                let r0 = self.e[0].wmax() / 2.0;
                for i in 1..=m {
                    self.g[i - 1].delta *= 2.0;
                    self.tube_or_bisect(i)?;
                }
                let after = self.predict();
                // a stage whose tube overshot its budget contributes its actual error
                let big_delta = self
                    .g
                    .iter()
                    .map(|g| g.delta.max(4.0 * g.center_err))
                    .fold(0.0, f64::max);
                let a = after.amp_delta.max(if r0 > 0.0 { after.r0_width / (2.0 * r0) } else { 0.0 });
                let rm = self.e_end().wmax() / 2.0;
                let rhs = a * (r0 + big_delta * m as f64);
                let reached = self.e_end().wmax() < eps0;
                self.stats.chains.push(ChainRecord {
                    r0,
                    rm,
                    delta: big_delta,
                    m,
                    amp: a,
                    holds: rm <= rhs * (1.0 + 1e-9),
                    reached_target: reached,
                });
                if reached {
                    break;
                }
                // the chain fell short of its prediction: force progress
                self.shrink(p0);
                r_m = self.e_end().wmax();
                continue;
            }
            for i in 1..=m {
                if ed * self.g[i - 1].delta * (m as f64) < eps0 / 8.0 {
                    continue;
                }
                self.g[i - 1].delta /= 2.0;
                self.tube_or_bisect(i)?;
            }
            let w = self.e_end().wmax();
            // a phase that barely helps means the tube errors scale with E0 itself
            if pred.r0_width > eps0 / 2.0 || w > 0.9 * r_m {
                self.shrink(p0);
            }
            r_m = self.e_end().wmax();
        }
        self.stats.refines.push(RefineRecord {
            phases,
            bound: 1.0 + n1.max(n2) as f64,
            n1,
            n2,
        });
        Ok(())
    }

    /// One CSV line per stage: i, t_i, wmax(E_i), level, delta, mu1.
    pub fn dump_csv(&self) -> String {
        let mut s = String::from("i,t,wmax,level,delta,mu1\n");
        for (i, g) in self.g.iter().enumerate() {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                i + 1,
                self.t[i + 1],
                self.e[i + 1].wmax(),
                g.mini.level,
                g.delta,
                g.mu1
            ));
        }
        s
    }
}

/// `b - c` as a box.
fn offset(b: &IBox, c: &[f64]) -> IBox {
    IBox::new(b.dims.iter().zip(c).map(|(d, &c)| *d - Interval::point(c)).collect())
}

/// Componentwise bound on `|x - y|` for `x in b`, `y in z`.
fn deviation_radii(b: &IBox, z: &IBox) -> Vec<f64> {
    b.dims
        .iter()
        .zip(&z.dims)
        .map(|(x, y)| round::add_up(x.hi, -y.lo).max(round::add_up(y.hi, -x.lo)).max(0.0))
        .collect()
}

fn growth_rate(n: usize, amp: &[f64], ball_amp: f64, dt: f64) -> f64 {
    let a = norm_inf(n, amp).min((n as f64).sqrt() * ball_amp);
    if dt > 0.0 && a > 0.0 {
        a.ln() / dt
    } else {
        0.0
    }
}

/// Output of [`end_enc`].
#[derive(Debug, Clone)]
pub struct EndEnc {
    pub ul_b0: IBox,
    pub ol_b1: IBox,
    pub stats: RunStats,
    pub csv: String,
}

const STALL_WINDOW: usize = 16;
const STALL_CONTRACTION: f64 = 16.0;

/// When the last `w` stage steps shrink strictly and by at least
/// `STALL_CONTRACTION` overall, the time the geometric continuation of those
/// steps can reach; `None` otherwise.
fn stalled_reach(t: &[f64], w: usize) -> Option<f64> {
    if t.len() < w + 1 {
        return None;
    }
    let steps: Vec<f64> = t[t.len() - w - 1..].windows(2).map(|p| p[1] - p[0]).collect();
    if !steps.windows(2).all(|p| p[1] < p[0]) || steps[w - 1] * STALL_CONTRACTION > steps[0] {
        return None;
    }
    let r = (steps[w - 1] / steps[0]).powf(1.0 / (w - 1) as f64);
    Some(t[t.len() - 1] + steps[w - 1] * r / (1.0 - r))
}

/// Under-box `ulB0` around `p0` and an end enclosure `olB1` of it at time `H`
/// with `wmax(olB1) < eps`.
pub fn end_enc(
    f: &VectorField,
    b0: &IBox,
    eps: f64,
    p0: &[f64],
    horizon: f64,
) -> Result<EndEnc, ScaffoldError> {
    let start = Instant::now();
    if !b0.contains_point(p0) {
        return Err(ScaffoldError::PointOutside);
    }
    let mut s = Scaffold::new(f, b0.clone(), Params::new(f.n, eps));
    s.p0 = p0.to_vec();
    while s.t_end() < horizon {
        s.extend(horizon - s.t_end())?;
        if let Some(reach) = stalled_reach(&s.t, STALL_WINDOW) {
            if reach < horizon {
                let h = s.t[s.m()] - s.t[s.m() - 1];
                return Err(StepError::Underflow { h, big_h: horizon }.into());
            }
        }
        if s.e_end().wmax() >= eps {
            s.refine(eps, p0)?;
        }
    }
    if s.e_end().wmax() >= eps {
        s.refine(eps, p0)?;
    }
    s.stats.end_enc_calls = 1;
    s.stats.wall_time = start.elapsed().as_secs_f64();
    let csv = s.dump_csv();
    Ok(EndEnc {
        ul_b0: s.e[0].clone(),
        ol_b1: s.e_end().clone(),
        stats: s.stats,
        csv,
    })
}
