use std::time::Instant;
fn main() {
    let cfg = cwl_core::cwt::CwtConfig::default();
    let plan = cwl_core::cwt::CwtPlan::new(500.0, &cfg).unwrap();
    let x: Vec<f64> = (0..848).map(|i| (i as f64 * 0.13).sin() + (i as f64 * 0.031).cos()).collect();
    // warm up
    let s = plan.transform(&x).unwrap();
    assert_eq!(s.magnitudes.len(), 64);
    let t0 = Instant::now();
    let reps = 40;
    for _ in 0..reps {
        let s = plan.transform(&x).unwrap();
        std::hint::black_box(&s.magnitudes[0][0]);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("per-window transform+render: {:.1} ms  => {:.1} s for 9705 windows", dt * 1e3, dt * 9705.0);
}
