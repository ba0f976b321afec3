use kinlim_core::config::RunConfig;
use kinlim_core::experiments::check_operator;

fn cfg(scale: f64) -> RunConfig {
    let mut cfg = RunConfig::minimal(1.0, 4.0).unwrap();
    cfg.check.kernel_scale = scale;
    cfg.check.pairs = 30;
    cfg.check.measures = 15;
    cfg.resolve().unwrap()
}

#[test]
fn all_properties_hold_for_the_true_kernel() {
    let report = check_operator(&cfg(1.0), None).unwrap();
    for p in &report.properties {
        println!("{:32} {:.3e} <= {:.1e} {}", p.name, p.value, p.threshold, p.passed);
    }
    assert!(report.all_passed);
}

#[test]
fn scaled_kernel_is_caught() {
    let report = check_operator(&cfg(1.001), None).unwrap();
    assert!(!report.all_passed);
    assert!(!report.get("mass_conservation").unwrap().passed);
    assert!(!report.get("fixed_point_l1").unwrap().passed);
}

#[test]
fn same_seed_same_report() {
    let a = check_operator(&cfg(1.0), None).unwrap();
    let b = check_operator(&cfg(1.0), None).unwrap();
    assert_eq!(a, b);
}
