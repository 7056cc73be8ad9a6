use soel_diff::{check_smoothed_network, GradCheckSetup};

#[test]
fn smoothed_network_gradients_match_finite_differences() {
    let (plain, meta) = check_smoothed_network(&GradCheckSetup::default()).unwrap();
    println!("plain {plain:?}\nmeta {meta:?}");
    assert!(plain.checked >= 100);
    assert!(plain.max_rel_error < 1e-4, "{plain:?}");
    assert!(meta.max_rel_error < 1e-3, "{meta:?}");
}
