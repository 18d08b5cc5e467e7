//! Fixtures shared by the criterion benches.

use ktag_core::protocols::ProtocolSpec;
use ktag_core::{Bit, FailurePattern, InputVector, PartialVector, ProcessId, Scheduler, Setup};

/// Every partial vector over `n` entries, in base-3 order.
pub fn partial_vectors(n: usize) -> Vec<PartialVector> {
    (0..3usize.pow(n as u32))
        .map(|mut code| {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(match code % 3 {
                    0 => None,
                    1 => Some(Bit::Zero),
                    _ => Some(Bit::One),
                });
                code /= 3;
            }
            PartialVector::new(v)
        })
        .collect()
}

/// Named single-run workloads: protocol plus setup.
pub fn workloads() -> Vec<(&'static str, ProtocolSpec, Setup)> {
    let crash = |n, list: &[(usize, u64)]| FailurePattern::from_crashes(n, list.iter().map(|&(p, t)| (ProcessId(p), t)));
    let inputs = |s: &str| s.parse::<InputVector>().expect("bit string");
    vec![
        (
            "fig1_5_2",
            ProtocolSpec::fig1(5, 2).unwrap(),
            Setup::new(inputs("10110"), crash(5, &[(2, 4)])).scheduler(Scheduler::FairRr),
        ),
        (
            "fig2_5_2",
            ProtocolSpec::fig2(5, 2).unwrap(),
            Setup::new(inputs("01101"), crash(5, &[(2, 7), (5, 30)])).scheduler(Scheduler::Random { seed: 42 }),
        ),
        (
            "fig3max_3_2_2",
            ProtocolSpec::fig3_max(3, 2, 2).unwrap(),
            Setup::new(inputs("0111"), crash(4, &[(1, 5)])).scheduler(Scheduler::Random { seed: 7 }),
        ),
        (
            "fig4_4_2",
            ProtocolSpec::fig4(4, 2).unwrap(),
            Setup::new(inputs("1101"), crash(4, &[(3, 2)])).scheduler(Scheduler::FairRr),
        ),
    ]
}
