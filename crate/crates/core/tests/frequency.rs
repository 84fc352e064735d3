//! Closed-loop frequency response and tuning behavior across the two
//! architectures.

use sonoforce::control::ziegler_nichols;
use sonoforce::harness::{find_ultimate_gain, measure_bandwidth, measure_response, Architecture};
use sonoforce::plant::MotionProfile;

#[test]
fn end_effector_bandwidth_exceeds_arm_bandwidth() {
    let ee = measure_bandwidth(Architecture::EndEffector, &[]).unwrap();
    let arm = measure_bandwidth(Architecture::Arm, &[]).unwrap();
    assert!(
        ee > arm,
        "expected the compliant drive to out-run the arm: EE {ee:.2} Hz vs arm {arm:.2} Hz"
    );
    // The admittance loop lives around a hertz; the direct torque loop
    // an order of magnitude above it.
    assert!((0.2..5.0).contains(&arm), "arm crossover {arm:.2} Hz");
    assert!(ee > 5.0, "end-effector crossover {ee:.2} Hz");
}

#[test]
fn dc_gain_is_unity_within_five_percent() {
    for arch in [Architecture::EndEffector, Architecture::Arm] {
        let ratio = measure_response(arch, 0.01, 2.0).unwrap();
        assert!(
            (ratio - 1.0).abs() < 0.05,
            "{arch}: DC amplitude ratio {ratio:.4}"
        );
    }
}

#[test]
fn sweep_points_are_reproducible() {
    let a = measure_response(Architecture::EndEffector, 5.0, 2.0).unwrap();
    let b = measure_response(Architecture::EndEffector, 5.0, 2.0).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn sweep_rejects_bad_inputs() {
    assert!(measure_response(Architecture::Arm, 0.0, 1.0).is_err());
    assert!(measure_response(Architecture::Arm, 1.0, -1.0).is_err());
}

#[test]
fn ultimate_gain_search_converges_on_both_architectures() {
    for arch in [Architecture::EndEffector, Architecture::Arm] {
        let ug = find_ultimate_gain(arch, &MotionProfile::Static).unwrap();
        assert!(ug.ku > 0.0 && ug.ku.is_finite(), "{arch}: Ku = {}", ug.ku);
        assert!(ug.tu > 0.0 && ug.tu < 1.0, "{arch}: Tu = {}", ug.tu);
        // The gain bank was tuned starting from this rule; the sweep must
        // land in a comparable decade.
        assert!((0.05..100.0).contains(&ug.ku), "{arch}: Ku = {}", ug.ku);

        let zn = ziegler_nichols(ug.ku, ug.tu).unwrap();
        zn.validate().unwrap();
        assert!((zn.kp - 0.6 * ug.ku).abs() < 1e-12);

        let again = find_ultimate_gain(arch, &MotionProfile::Static).unwrap();
        assert_eq!(ug.ku.to_bits(), again.ku.to_bits());
        assert_eq!(ug.tu.to_bits(), again.tu.to_bits());
    }
}
