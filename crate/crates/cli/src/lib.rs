//! Run orchestration and artifact emission for the `solve` binary.

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use ivpcover::complexity::{assert_bounds, derived_params, BoundsReport, DerivedParams, RunConfig};
use ivpcover::cover::{boundary_cover, end_cover, faces, filler_2d, Cover, CoverBox, CoverError, CoverKind, FillOutcome};
use ivpcover::field::VectorField;
use ivpcover::interval::IBox;
use ivpcover::oracle::{sample_containment, Containment};
use ivpcover::problem::{Mode, ProblemError, ProblemSpec};
use ivpcover::scaffold::{end_enc, ScaffoldError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error("{0}")]
    Usage(String),
}

impl RunError {
    /// 2 when the solver gave up because the validity promise looks violated.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Cover(CoverError::Scaffold(ScaffoldError::Step(_)))
            | RunError::Cover(CoverError::Scaffold(ScaffoldError::PhaseOverflow(_))) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub eps: f64,
    pub horizon: f64,
    pub order: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub check_bounds: bool,
}

impl RunOptions {
    /// Options taken from the problem file alone.
    pub fn from_spec(spec: &ProblemSpec) -> RunOptions {
        RunOptions {
            mode: spec.mode,
            eps: spec.eps,
            horizon: spec.horizon,
            order: spec.k,
            samples: spec.samples.unwrap_or(0),
            seed: spec.seed.unwrap_or(0),
            workers: 1,
            check_bounds: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub cover: Cover,
    pub derived: Option<DerivedParams>,
    pub bounds: Option<BoundsReport>,
    pub containment: Option<Containment>,
    /// Stage table of the single end enclosure in `endenc` mode.
    pub csv: Option<String>,
}

pub fn field_for(spec: &ProblemSpec, order: Option<usize>) -> Result<VectorField, RunError> {
    let f = spec.vector_field()?;
    Ok(match order {
        Some(k) if k >= 2 => f.with_order(k),
        Some(k) => return Err(RunError::Usage(format!("order must be at least 2, got {k}"))),
        None => f,
    })
}

/// Sample starts for the oracle: the whole of B0, or its faces for an unfilled
/// boundary cover.
fn oracle_check(f: &VectorField, spec: &ProblemSpec, b0: &IBox, cover: &Cover, opts: &RunOptions) -> Containment {
    let step = spec.oracle_step(opts.horizon);
    let boxes: Vec<IBox> = cover.boxes.iter().map(|b| b.b.clone()).collect();
    if cover.kind == CoverKind::BoundaryCover {
        let fs = faces(b0);
        let per = opts.samples.div_ceil(fs.len()).max(1);
        let mut total = Containment {
            hits: 0,
            misses: 0,
            miss_list: Vec::new(),
        };
        for (i, face) in fs.iter().enumerate() {
            let r = sample_containment(f, face, opts.horizon, step, &boxes, per, opts.seed + i as u64, 0.0);
            total.hits += r.hits;
            total.misses += r.misses;
            total.miss_list.extend(r.miss_list);
        }
        total
    } else {
        sample_containment(f, b0, opts.horizon, step, &boxes, opts.samples, opts.seed, 0.0)
    }
}

pub fn run(spec: &ProblemSpec, opts: &RunOptions) -> Result<RunOutput, RunError> {
    if !(opts.eps > 0.0) || !(opts.horizon > 0.0) {
        return Err(RunError::Usage("eps and horizon must be positive".into()));
    }
    let f = field_for(spec, opts.order)?;
    let b0 = spec.initial_box();
    let mut csv = None;
    let cover = match opts.mode {
        Mode::EndEnc => {
            let start = std::time::Instant::now();
            let r = end_enc(&f, &b0, opts.eps, &b0.mid(), opts.horizon).map_err(CoverError::from)?;
            let mut stats = r.stats;
            stats.wall_time = start.elapsed().as_secs_f64();
            csv = Some(r.csv);
            Cover {
                kind: CoverKind::EndCover,
                eps: opts.eps,
                horizon: opts.horizon,
                boxes: vec![CoverBox {
                    b: r.ol_b1,
                    src: "leaf1".into(),
                }],
                stats,
                leaves: vec![(r.ul_b0, "leaf1".into())],
                note: None,
            }
        }
        Mode::EndCover => end_cover(&f, &b0, opts.eps, opts.horizon, opts.workers)?,
        Mode::Boundary => {
            let c = boundary_cover(&f, &b0, opts.eps, opts.horizon, opts.workers)?;
            if spec.n() == 2 {
                match filler_2d(&c, opts.eps) {
                    FillOutcome::Filled(c) | FillOutcome::Unchanged(c) => c,
                    FillOutcome::Skipped(msg) => Cover { note: Some(msg), ..c },
                }
            } else {
                Cover {
                    note: Some(format!("filler skipped for n = {}", spec.n())),
                    ..c
                }
            }
        }
    };
    // in endenc mode the guarantee is about ulB0 only
    let sample_box = match opts.mode {
        Mode::EndEnc => cover.leaves[0].0.clone(),
        _ => b0.clone(),
    };
    let containment = (opts.samples > 0).then(|| oracle_check(&f, spec, &sample_box, &cover, opts));
    let (derived, bounds) = if opts.check_bounds {
        let eps_vec = vec![opts.eps; spec.n()];
        let p = derived_params(&f, &b0, opts.horizon, &eps_vec, cover.stats.image.as_ref());
        let cfg = RunConfig {
            horizon: opts.horizon,
            eps: opts.eps,
            wmax_b0: b0.wmax(),
            n: spec.n(),
            min_leaf_width: cover.min_leaf_width(),
        };
        let report = assert_bounds(&cover.stats, &p, &cfg);
        (Some(p), Some(report))
    } else {
        (None, None)
    };
    Ok(RunOutput {
        cover,
        derived,
        bounds,
        containment,
        csv,
    })
}

#[derive(Serialize)]
struct JsonBox<'a> {
    lo: Vec<f64>,
    hi: Vec<f64>,
    src: &'a str,
}

pub fn cover_json(out: &RunOutput) -> Value {
    let c = &out.cover;
    let boxes: Vec<JsonBox> = c
        .boxes
        .iter()
        .map(|b| JsonBox {
            lo: b.b.lo(),
            hi: b.b.hi(),
            src: &b.src,
        })
        .collect();
    let mut v = json!({
        "version": SCHEMA_VERSION,
        "kind": c.kind,
        "epsilon": c.eps,
        "horizon": c.horizon,
        "boxes": boxes,
        "stats": stats_json(out),
    });
    if let Some(note) = &c.note {
        v["note"] = json!(note);
    }
    v
}

pub fn stats_json(out: &RunOutput) -> Value {
    let s = &out.cover.stats;
    let chains_hold = s.chains.iter().all(|c| c.holds);
    json!({
        "version": SCHEMA_VERSION,
        "counters": s,
        "boxes": out.cover.boxes.len(),
        "chains_hold": chains_hold,
        "derived": out.derived.as_ref().map(|d| json!({
            "ol_b": {"lo": d.ol_b.lo(), "hi": d.ol_b.hi()},
            "ol_h": d.ol_h,
            "m": d.m,
            "mu_bar": d.mu_bar,
        })),
        "bounds": out.bounds,
        "containment": out.containment,
        "note": out.cover.note,
    })
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
];

/// One rectangle per box in the `(x, y)` projection, auto-fit with a 5% margin.
pub fn svg(covers: &[&Cover]) -> String {
    let boxes: Vec<&CoverBox> = covers.iter().flat_map(|c| c.boxes.iter()).collect();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for b in &boxes {
        for d in 0..2.min(b.b.n()) {
            lo[d] = lo[d].min(b.b.dims[d].lo);
            hi[d] = hi[d].max(b.b.dims[d].hi);
        }
    }
    if boxes.is_empty() {
        lo = [0.0; 2];
        hi = [1.0; 2];
    }
    if boxes.first().map(|b| b.b.n()) == Some(1) {
        lo[1] = -0.5;
        hi[1] = 0.5;
    }
    let span = [(hi[0] - lo[0]).max(1e-300), (hi[1] - lo[1]).max(1e-300)];
    let m = [0.05 * span[0], 0.05 * span[1]];
    let (vx, vy, vw, vh) = (lo[0] - m[0], -(hi[1] + m[1]), span[0] + 2.0 * m[0], span[1] + 2.0 * m[1]);
    let stroke = 0.002 * vw.max(vh);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{vx} {vy} {vw} {vh}\" width=\"800\" height=\"{}\" preserveAspectRatio=\"none\">\n",
        (800.0 * vh / vw).clamp(200.0, 1600.0).round()
    );
    let mut k = 0usize;
    for c in covers {
        for b in &c.boxes {
            let (x0, x1) = (b.b.dims[0].lo, b.b.dims[0].hi);
            let (y0, y1) = if b.b.n() > 1 { (b.b.dims[1].lo, b.b.dims[1].hi) } else { (-0.25, 0.25) };
            let fill = if b.src == "filler" { "#f4b6c2" } else { PALETTE[k % PALETTE.len()] };
            k += 1;
            s.push_str(&format!(
                "<rect x=\"{x0}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{fill}\" fill-opacity=\"0.6\" stroke=\"#333\" stroke-width=\"{stroke}\"><title>{}</title></rect>\n",
                -y1,
                x1 - x0,
                y1 - y0,
                b.src
            ));
        }
    }
    s.push_str("</svg>\n");
    s
}
