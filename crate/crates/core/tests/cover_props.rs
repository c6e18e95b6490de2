use ivpcover::cover::{boundary_cover, end_cover, faces};
use ivpcover::interval::{IBox, Interval};
use ivpcover::oracle::{rk4_end, sample_containment};
use ivpcover::problem::ProblemSpec;
use proptest::prelude::*;

fn eg(name: &str) -> (ivpcover::field::VectorField, IBox) {
    let spec = ProblemSpec::load(name).unwrap();
    (spec.vector_field().unwrap(), spec.initial_box())
}

#[test]
fn worker_count_does_not_change_the_cover() {
    let (f, b0) = eg("eg4");
    let a = end_cover(&f, &b0, 0.1, 1.0, 1).unwrap();
    let b = end_cover(&f, &b0, 0.1, 1.0, 3).unwrap();
    assert_eq!(a.boxes.len(), b.boxes.len());
    for (x, y) in a.boxes.iter().zip(&b.boxes) {
        assert_eq!(x.b, y.b);
        assert_eq!(x.src, y.src);
    }
    assert_eq!(a.stats.end_enc_calls, b.stats.end_enc_calls);
}

#[test]
fn each_box_holds_its_own_leaf_image() {
    let (f, b0) = eg("eg1");
    let c = end_cover(&f, &b0, 0.1, 1.0, 1).unwrap();
    for (ul, label) in &c.leaves {
        let end = rk4_end(&f, &ul.mid(), 1.0, 1e-3);
        match c.boxes.iter().find(|b| &b.src == label) {
            Some(b) => assert!(b.b.contains_point(&end), "{label}"),
            // pruned as a subset of another box
            None => assert!(c.union_contains(&end), "{label}"),
        }
    }
}

#[test]
fn boxes_meet_the_width_bound_and_cover_samples() {
    let (f, b0) = eg("eg5");
    let c = end_cover(&f, &b0, 0.1, 1.0, 1).unwrap();
    assert!(c.boxes.iter().all(|b| b.b.wmax() < 0.1));
    let boxes: Vec<IBox> = c.boxes.iter().map(|b| b.b.clone()).collect();
    let r = sample_containment(&f, &b0, 1.0, 1e-3, &boxes, 1000, 4, 0.0);
    assert_eq!(r.misses, 0);
}

#[test]
fn boundary_cover_contains_face_images() {
    let (f, b0) = eg("eg1");
    let c = boundary_cover(&f, &b0, 0.01, 1.0, 1).unwrap();
    assert!(c.boxes.iter().all(|b| b.b.wmax() < 0.01));
    assert!(c.boxes.iter().all(|b| b.src.starts_with("face")));
    let boxes: Vec<IBox> = c.boxes.iter().map(|b| b.b.clone()).collect();
    let mut misses = 0;
    for (i, face) in faces(&b0).iter().enumerate() {
        misses += sample_containment(&f, face, 1.0, 1e-3, &boxes, 50, i as u64, 0.0).misses;
    }
    assert_eq!(misses, 0);
}

#[test]
fn one_dimensional_boundary_is_rejected() {
    let f = ivpcover::field::VectorField::parse(&["x"], &["-x"], &[], 20).unwrap();
    let b0 = IBox::new(vec![Interval::new(0.9, 1.1)]);
    assert!(boundary_cover(&f, &b0, 0.1, 1.0, 1).is_err());
}

proptest! {
    #[test]
    fn children_tile_the_parent(
        lo in prop::collection::vec(-10.0f64..10.0, 3),
        w in prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..5.0], 3),
    ) {
        let b = IBox::new(lo.iter().zip(&w).map(|(l, w)| Interval::new(*l, l + w)).collect());
        let kids = b.subdivide();
        prop_assert_eq!(kids.len(), 1 << b.dim());
        let vol: f64 = kids.iter().map(|k| k.dims.iter().filter(|d| d.width() > 0.0).map(|d| d.width()).product::<f64>()).sum();
        let parent: f64 = b.dims.iter().filter(|d| d.width() > 0.0).map(|d| d.width()).product();
        prop_assert!((vol - parent).abs() <= 1e-9 * parent.max(1.0));
        for k in &kids {
            prop_assert!(k.subset(&b));
        }
    }
}
