mod common;

use common::{fd_case, FD_TOLERANCE};
use timbre::rng::SplitMix64;

#[test]
fn every_kernel_matches_central_differences() {
    let mut rng = SplitMix64::new(2024);
    let mut worst = std::collections::BTreeMap::new();
    for i in 0..180 {
        let case = fd_case(i, &mut rng);
        let w = worst.entry(case.kernel).or_insert(0.0f64);
        *w = w.max(case.max_rel_err);
    }
    for (kernel, err) in &worst {
        println!("{kernel:>18}: max relative error {err:.3e}");
    }
    for (kernel, err) in worst {
        assert!(err <= FD_TOLERANCE, "{kernel}: {err:e}");
    }
}
