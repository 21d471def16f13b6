//! Fast experiment runs with reduced settings.

use logkdv_core::harness::*;

#[test]
fn gaussian_identity_passes_at_several_lambdas() {
    for lambda in [1.5, 2.0, 4.0] {
        let rep = gaussian_identity(&GaussianIdentityConfig { lambda, ..Default::default() }).unwrap();
        assert!(rep.passed(), "lambda {lambda}: {:?}", rep.verdicts);
    }
}

#[test]
fn truncation_is_reproducible_from_the_seed() {
    let cfg = TruncationConfig { epsilons: vec![0.1], trials: 5, ..Default::default() };
    let a = truncation_bound(&cfg).unwrap();
    let b = truncation_bound(&cfg).unwrap();
    assert!(a.passed());
    assert_eq!(a.curves, b.curves);
    let c = truncation_bound(&TruncationConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
    assert_ne!(a.curves, c.curves);
}

#[test]
fn short_energy_run_conserves_energy() {
    let mut cfg = EnergyConservationConfig::default();
    cfg.run.tau = 0.01;
    let rep = energy_conservation(&cfg).unwrap();
    assert!(rep.passed(), "{:?}", rep.verdicts);
    assert!(rep.snapshots.iter().any(|(name, _)| name == "energy_final"));
}

#[test]
fn oversized_step_aborts_with_a_snapshot() {
    let cfg = JustificationConfig { epsilons: vec![0.1], tau: 0.02, dt: 3.0, ..Default::default() };
    let rep = justification(&cfg).unwrap();
    assert!(!rep.passed());
    assert!(rep.aborted.as_deref().unwrap().contains("guard"));
    assert!(rep.snapshots.iter().any(|(name, _)| name.starts_with("aborted_")));
}

#[test]
fn configs_reject_unknown_keys() {
    let err = serde_json::from_str::<SamplingConfig>(r#"{"epsilon": [0.1]}"#).unwrap_err();
    assert!(err.to_string().contains("epsilon"));
    let cfg: SamplingConfig = serde_json::from_str("{}").unwrap();
    assert_eq!(cfg.epsilons.len(), 7);
}
