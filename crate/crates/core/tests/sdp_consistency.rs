use plab_core::feasibility::{sdp_feasible, sdp_threshold, SdpOptions, TaskSpec};
use plab_core::quantum::{delta_min, pure_pair_with_overlap};

#[test]
fn bisection_threshold_matches_closed_form() {
    let task = TaskSpec::identity(2);
    let opts = SdpOptions::default();
    for gamma in [0.3, 0.5, std::f64::consts::FRAC_1_SQRT_2, 0.9] {
        let (r0, r1) = pure_pair_with_overlap(gamma).unwrap();
        let states = [r0, r1];
        for copies in 1..=3 {
            let found = sdp_threshold(&states, &task, 0.5, copies, &opts, 1e-4).unwrap();
            let expected = delta_min(gamma, copies).unwrap();
            assert!(
                (found - expected).abs() <= 1e-3,
                "gamma {gamma}, d {copies}: bisection {found}, closed form {expected}"
            );
        }
    }
}

#[test]
fn feasible_just_above_threshold() {
    let (r0, r1) = pure_pair_with_overlap(0.9).unwrap();
    let states = [r0, r1];
    let task = TaskSpec::identity(2);
    let opts = SdpOptions::default();
    let dm = delta_min(0.9, 3).unwrap();
    assert!(sdp_feasible(&states, &task, 0.5, dm + 5e-4, 3, &opts).unwrap().is_feasible());
    assert!(sdp_feasible(&states, &task, 0.5, dm - 5e-4, 3, &opts).unwrap().is_infeasible());
}
