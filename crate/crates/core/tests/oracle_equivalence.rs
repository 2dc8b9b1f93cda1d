use privshape_core::solve::micro::{check_micro, exact_settings, micro_instances};
use privshape_core::solve::HighsBackend;

#[test]
fn milp_matches_oracle_on_micro_instances() {
    let backend = HighsBackend::new(exact_settings());
    let instances = micro_instances();
    assert!(instances.len() >= 10);
    assert!(instances
        .iter()
        .any(|i| i.weights == Some([1.0, 0.0, 1.0, 0.0])));
    let mut worst = 0.0f64;
    for inst in &instances {
        let c = check_micro(inst, &backend).unwrap();
        println!(
            "{:<28} milp {:?} oracle {:?} minimax {:?}/{:?}",
            c.name, c.milp, c.oracle, c.milp_minimax, c.oracle_minimax
        );
        worst = worst.max(c.max_abs_diff());
        assert!(c.max_abs_diff() <= 1e-6, "{}: {:?}", c.name, c);
    }
    println!("worst difference {worst:e}");
}
