use grasplab::mechanics::{fingertip_position, Finger, FingerGeometry};
use grasplab_demo::{depth_to_rgba, finger_chain, hand_view, VIEW_SIZE};

#[test]
fn hand_view_is_deterministic_and_sees_the_object() {
    let a = hand_view("cylinder", 3, 0.2).unwrap();
    assert_eq!(a, hand_view("cylinder", 3, 0.2).unwrap());
    assert_eq!((a.width, a.height), (VIEW_SIZE, VIEW_SIZE));
    let near = a.data.iter().cloned().fold(f64::INFINITY, f64::min);
    let far = a.max_depth();
    assert!(near < far, "object should stand out from the table");
    // Raising the palm pushes everything further away.
    let high = hand_view("cylinder", 3, 0.3).unwrap();
    assert!(high.max_depth() > far);
    assert!(hand_view("teapot", 0, 0.2).is_err());
}

#[test]
fn rgba_maps_nearest_to_white() {
    let img = grasplab::vision::DepthImage::new(2, 1, vec![0.1, 0.5]).unwrap();
    assert_eq!(depth_to_rgba(&img), [255, 255, 255, 255, 0, 0, 0, 255]);
    let flat = grasplab::vision::DepthImage::filled(1, 1, 0.3);
    assert_eq!(depth_to_rgba(&flat), [128, 128, 128, 255]);
}

#[test]
fn finger_chain_ends_at_the_fingertip() {
    let chain = finger_chain("index", [30.0, 45.0, 10.0]).unwrap();
    assert_eq!(chain.len(), 9);
    let geom = FingerGeometry::measured(Finger::Index);
    let tip = fingertip_position(&geom, [30f64, 45.0, 10.0].map(f64::to_radians)).unwrap();
    assert!((chain[6] - tip[0]).abs() < 1e-9 && (chain[7] - tip[1]).abs() < 1e-9);
    assert!((chain[8] - tip[0].hypot(tip[1])).abs() < 1e-9);
    // Straight finger: reach is the sum of the links.
    let straight = finger_chain("index", [0.0; 3]).unwrap();
    assert!((straight[8] - geom.total_length()).abs() < 1e-9);
    assert!(finger_chain("index", [120.0, 0.0, 0.0]).is_err());
    assert!(finger_chain("wrist", [0.0; 3]).is_err());
}
