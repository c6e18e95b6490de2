//! Derived parameters of the complexity analysis and runtime checks of the
//! stage, halving, phase and cover-size bounds.

use serde::Serialize;

use crate::field::{JetSeries, VectorField};
use crate::interval::{round, IBox, Interval};
use crate::matrix::lognorm2_bound;

/// One chain exit of a refine call.
#[derive(Debug, Clone, Serialize)]
pub struct ChainRecord {
    pub r0: f64,
    pub rm: f64,
    pub delta: f64,
    pub m: usize,
    /// The run's amplification factor standing in for `e^mu_bar`.
    pub amp: f64,
    pub holds: bool,
    /// `wmax(E_m) < eps0` after the chain.
    pub reached_target: bool,
}

/// Phase accounting for one refine call.
#[derive(Debug, Clone, Serialize)]
pub struct RefineRecord {
    pub phases: usize,
    pub bound: f64,
    pub n1: u32,
    pub n2: u32,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunStats {
    pub stages: usize,
    /// StepA halvings per extend, with the horizon passed to StepA and the
    /// `olh` of the extended box for that horizon.
    pub step_a_halvings: Vec<(u32, f64, f64)>,
    pub refine_phases: usize,
    pub refines: Vec<RefineRecord>,
    pub euler_tube_calls: usize,
    pub tube_fallbacks: usize,
    pub bisect_calls: usize,
    pub shrinks: usize,
    pub end_enc_calls: usize,
    pub wall_time: f64,
    pub chains: Vec<ChainRecord>,
    /// Hull of all stage full enclosures (the pilot image).
    #[serde(skip)]
    pub image: Option<IBox>,
    pub max_level: u32,
    pub substeps: usize,
}

impl RunStats {
    pub fn absorb_image(&mut self, b: &IBox) {
        self.image = Some(match self.image.take() {
            Some(i) => i.hull(b),
            None => b.clone(),
        });
    }

    /// Add another run's counters into this one.
    pub fn merge(&mut self, o: &RunStats) {
        self.stages = self.stages.max(o.stages);
        self.step_a_halvings.extend_from_slice(&o.step_a_halvings);
        self.refine_phases += o.refine_phases;
        self.refines.extend(o.refines.iter().cloned());
        self.euler_tube_calls += o.euler_tube_calls;
        self.tube_fallbacks += o.tube_fallbacks;
        self.bisect_calls += o.bisect_calls;
        self.shrinks += o.shrinks;
        self.end_enc_calls += o.end_enc_calls;
        self.chains.extend(o.chains.iter().cloned());
        if let Some(i) = &o.image {
            self.absorb_image(i);
        }
        self.max_level = self.max_level.max(o.max_level);
        self.substeps += o.substeps;
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivedParams {
    #[serde(skip)]
    pub ol_b: IBox,
    pub ol_h: f64,
    pub m: Vec<f64>,
    pub mu_bar: f64,
}

/// `sum_{i<k} [0,H]^i f^[i](E) + Box(eps)` from the jets of `E`.
pub fn ol_box(jet: &JetSeries, k: usize, big_h: f64, eps: &[f64]) -> IBox {
    let hr = Interval::new(0.0, big_h);
    IBox::new(
        (0..jet.n)
            .map(|d| {
                let mut s = jet.at(0, d);
                for i in 1..k {
                    s = s + hr.powi(i as u32) * jet.at(i, d);
                }
                s + Interval::new(-eps[d], eps[d])
            })
            .collect(),
    )
}

/// `(olh, M)` for a given `olB`.
fn step_bound(f: &VectorField, ol_b: &IBox, big_h: f64, eps: &[f64]) -> (f64, Vec<f64>) {
    let k = f.k;
    let fk = f.taylor_jet(ol_b, k).term(k);
    let m: Vec<f64> = fk.dims.iter().map(|d| d.mag()).collect();
    let mut ol_h = big_h;
    for (mi, ei) in m.iter().zip(eps) {
        if *mi > 0.0 {
            ol_h = ol_h.min((ei / mi).powf(1.0 / k as f64));
        }
    }
    if ol_h.is_nan() {
        ol_h = 0.0;
    }
    (ol_h, m)
}

/// `olh(E, H, eps)` where `jet_e` holds the jets of `E` up to order `k - 1`.
pub fn local_olh(f: &VectorField, jet_e: &JetSeries, big_h: f64, eps: &[f64]) -> f64 {
    let ol_b = ol_box(jet_e, f.k, big_h, eps);
    step_bound(f, &ol_b, big_h, eps).0
}

/// `olB = olB(olE, H, eps)` where `olE` is `E0`, or the hull of `E0` and a
/// pilot image when one is known; `M_i = sup |f^[k]_i|` over olB;
/// `olh = min(H, min_i (eps_i / M_i)^(1/k))`.
pub fn derived_params(
    f: &VectorField,
    e0: &IBox,
    big_h: f64,
    eps: &[f64],
    image: Option<&IBox>,
) -> DerivedParams {
    let ol_e = match image {
        Some(img) => img.hull(e0),
        None => e0.clone(),
    };
    let jet = f.taylor_jet(&ol_e, f.k - 1);
    let ol_b = ol_box(&jet, f.k, big_h, eps);
    let (ol_h, m) = step_bound(f, &ol_b, big_h, eps);
    let mu_bar = lognorm2_bound(&f.jacobian_interval(&ol_b));
    DerivedParams {
        ol_b,
        ol_h,
        m,
        mu_bar,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub observed: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub checks: Vec<BoundCheck>,
    pub pass: bool,
}

/// Inputs describing the completed run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub horizon: f64,
    pub eps: f64,
    pub wmax_b0: f64,
    pub n: usize,
    /// Smallest under-box width among cover leaves, if a cover was run.
    pub min_leaf_width: Option<f64>,
}

/// Report the instance with the least slack; passes when every instance does.
fn tightest(name: &str, items: impl Iterator<Item = (f64, f64)>) -> BoundCheck {
    let mut pass = true;
    let mut worst: Option<(f64, f64)> = None;
    for (obs, bound) in items {
        pass &= obs <= bound;
        if worst.is_none_or(|(o, b)| obs - bound > o - b) {
            worst = Some((obs, bound));
        }
    }
    let (observed, bound) = worst.unwrap_or((0.0, 0.0));
    BoundCheck {
        name: name.into(),
        observed,
        bound,
        pass,
    }
}

pub fn assert_bounds(stats: &RunStats, p: &DerivedParams, cfg: &RunConfig) -> BoundsReport {
    let mut checks = Vec::new();
    let stage_bound = 1.0 + (cfg.horizon / p.ol_h).floor();
    checks.push(BoundCheck {
        name: "stages".into(),
        observed: stats.stages as f64,
        bound: stage_bound,
        pass: (stats.stages as f64) <= stage_bound,
    });
    let halvings = stats
        .step_a_halvings
        .iter()
        .map(|&(hv, big_h, olh)| (hv as f64, (big_h / olh).log2().ceil().max(0.0)));
    checks.push(tightest("step_a_halvings", halvings));
    let phases = stats.refines.iter().map(|r| (r.phases as f64, r.bound));
    checks.push(tightest("refine_phases", phases));
    let growth = round::exp_up(round::mul_up(p.mu_bar.max(0.0), cfg.horizon));
    let base = round::mul_up(round::mul_up(2.0 * cfg.wmax_b0, growth), 1.0 / cfg.eps);
    let cover_bound = 4.0 * base.powi(cfg.n as i32);
    let mut cover_ok = (stats.end_enc_calls as f64) <= cover_bound;
    if let Some(w) = cfg.min_leaf_width {
        // under-boxes never get smaller than the proof's window
        let window = cfg.eps / (4.0 * growth);
        cover_ok &= w > window || w == 0.0;
    }
    checks.push(BoundCheck {
        name: "end_enc_calls".into(),
        observed: stats.end_enc_calls as f64,
        bound: cover_bound,
        pass: cover_ok,
    });
    let pass = checks.iter().all(|c| c.pass);
    BoundsReport { checks, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_params_decay_example() {
        let f = VectorField::parse(&["x"], &["-x"], &[], 3).unwrap();
        let e0 = IBox::new(vec![Interval::new(-0.1, 0.1)]);
        let p = derived_params(&f, &e0, 1.0, &[1.0], None);
        // E0 * (1 + 1 + 1/2) + [-1, 1]
        assert!(p.ol_b.dims[0].subset(&Interval::new(-1.2501, 1.2501)));
        assert!(p.ol_b.dims[0].hi >= 1.25);
        // M = sup |x/6| over olB ~ 0.2, olh = min(1, (1/M)^(1/3)) = 1
        assert!((p.m[0] - 1.25 / 6.0).abs() < 1e-3);
        assert_eq!(p.ol_h, 1.0);
        let q = derived_params(&f, &e0, 1.0, &[1e300], None);
        assert_eq!(q.ol_h, 1.0);
    }

    #[test]
    fn synthetic_stage_violation_is_flagged() {
        let f = VectorField::parse(&["x"], &["-x"], &[], 3).unwrap();
        let e0 = IBox::new(vec![Interval::new(-0.1, 0.1)]);
        let mut p = derived_params(&f, &e0, 1.0, &[1.0], None);
        p.ol_h = 1e-3;
        let stats = RunStats {
            stages: 5000,
            ..Default::default()
        };
        let cfg = RunConfig {
            horizon: 1.0,
            eps: 1.0,
            wmax_b0: 0.2,
            n: 1,
            min_leaf_width: None,
        };
        let r = assert_bounds(&stats, &p, &cfg);
        assert!(!r.checks[0].pass);
        assert!(!r.pass);
    }
}
