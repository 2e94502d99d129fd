//! Fixtures shared by the benchmarks.

use martdev_core::{MarkovChain, MarkovChainSpec};

/// Three-state chain with a centered observable; subdominant eigenvalues 0.3 ± 0.14i.
pub fn three_state_chain() -> MarkovChain {
    let p = vec![
        vec![0.5, 0.3, 0.2],
        vec![0.1, 0.6, 0.3],
        vec![0.4, 0.1, 0.5],
    ];
    let probe = MarkovChain::new(MarkovChainSpec {
        name: "probe".into(),
        states: vec!["a".into(), "b".into(), "c".into()],
        p: p.clone(),
        f: vec![0.0; 3],
    })
    .expect("valid chain");
    let raw = [1.0, -0.5, 0.25];
    let mean: f64 = probe.stationary().iter().zip(raw).map(|(a, b)| a * b).sum();
    MarkovChain::new(MarkovChainSpec {
        name: "three_state".into(),
        states: vec!["a".into(), "b".into(), "c".into()],
        p,
        f: raw.iter().map(|v| v - mean).collect(),
    })
    .expect("valid chain")
}
