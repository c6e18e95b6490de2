use ivpcover::interval::{IBox, Interval};
use ivpcover::oracle::{rk4, rk4_end, sample_containment};
use ivpcover::problem::ProblemSpec;

#[test]
fn decay_endpoint_matches_closed_form() {
    let f = ivpcover::field::VectorField::parse(&["x"], &["-x"], &[], 4).unwrap();
    let t = rk4(&f, &[1.0], 1.0, 1e-3);
    assert!((t.last()[0] - (-1.0f64).exp()).abs() < 1e-10);
    assert!(t.times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn richardson_ratio_on_quadratic_field() {
    let f = ProblemSpec::load("eg4").unwrap().vector_field().unwrap();
    let p = [1.0, -1.0];
    let a = rk4_end(&f, &p, 1.0, 0.02);
    let b = rk4_end(&f, &p, 1.0, 0.01);
    let c = rk4_end(&f, &p, 1.0, 0.005);
    let d1 = (a[0] - b[0]).hypot(a[1] - b[1]);
    let d2 = (b[0] - c[0]).hypot(b[1] - c[1]);
    let ratio = d1 / d2;
    assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
}

#[test]
fn single_step_gives_two_points() {
    let f = ivpcover::field::VectorField::parse(&["x"], &["-x"], &[], 4).unwrap();
    let t = rk4(&f, &[1.0], 0.5, 0.5);
    assert_eq!(t.times, vec![0.0, 0.5]);
    assert_eq!(t.states.len(), 2);
}

#[test]
fn universal_cover_has_no_misses() {
    let spec = ProblemSpec::load("eg1").unwrap();
    let f = spec.vector_field().unwrap();
    let huge = IBox::new(vec![Interval::new(-1e3, 1e3); 2]);
    let r = sample_containment(&f, &spec.initial_box(), 1.0, 1e-3, &[huge], 200, 1, 0.0);
    assert_eq!(r.misses, 0);
    assert_eq!(r.hits, 204);
}

#[test]
fn deleting_a_box_causes_misses() {
    let spec = ProblemSpec::load("eg1").unwrap();
    let f = spec.vector_field().unwrap();
    let b0 = spec.initial_box();
    let c = ivpcover::cover::end_cover(&f, &b0, 0.1, 1.0, 1).unwrap();
    let mut boxes: Vec<IBox> = c.boxes.iter().map(|b| b.b.clone()).collect();
    let full = sample_containment(&f, &b0, 1.0, 1e-3, &boxes, 500, 2, 0.0);
    assert_eq!(full.misses, 0);
    // drop the box holding the image of the centre
    let centre = rk4_end(&f, &b0.mid(), 1.0, 1e-3);
    boxes.retain(|b| !b.contains_point(&centre));
    let cut = sample_containment(&f, &b0, 1.0, 1e-3, &boxes, 500, 2, 0.0);
    assert!(cut.misses >= 1);
    assert!(cut.miss_list.iter().all(|m| m.distance > 0.0));
}

#[test]
fn sampling_is_deterministic_in_the_seed() {
    let spec = ProblemSpec::load("eg2").unwrap();
    let f = spec.vector_field().unwrap();
    let b0 = spec.initial_box();
    let target = [IBox::centered(&[-2.1, 0.57], &[0.05, 0.05])];
    let a = sample_containment(&f, &b0, 1.0, 1e-3, &target, 300, 9, 0.0);
    let b = sample_containment(&f, &b0, 1.0, 1e-3, &target, 300, 9, 0.0);
    assert_eq!(a.hits, b.hits);
    let ends_a: Vec<_> = a.miss_list.iter().map(|m| m.end.clone()).collect();
    let ends_b: Vec<_> = b.miss_list.iter().map(|m| m.end.clone()).collect();
    assert_eq!(ends_a, ends_b);
}
