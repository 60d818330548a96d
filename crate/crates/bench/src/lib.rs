//! Fixtures shared by the criterion benches.

use bundlekit_core::kelley_fcfw::initial_bundle;
use bundlekit_core::lmo::lmo_max;
use bundlekit_core::model::{Bundle, ProblemInstance};
use bundlekit_core::synth::{generate, uniform, SynthSpec};

/// Synthetic polytope instance of dimension `n`, fixed seed.
pub fn instance(n: usize) -> ProblemInstance {
    generate(&SynthSpec::new(n, 1)).expect("synthetic instance")
}

/// Bundle of `k` LMO cuts at seeded random points (duplicates collapse).
pub fn bundle(inst: &ProblemInstance, k: usize) -> Bundle {
    let n = inst.dim();
    let mut b = initial_bundle(inst).expect("initial bundle");
    for i in 0..k as u64 {
        let x: Vec<f64> = (0..n).map(|j| uniform(i, 5, j as u64)).collect();
        b.insert(lmo_max(&inst.lmo, &x).expect("lmo")).expect("insert");
    }
    b
}
