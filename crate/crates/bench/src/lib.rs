//! Benchmark fixtures.

use uavplan_core::{Scenario, Vec2};

/// Four nodes on the corners of a 600 m square.
pub fn square(period: f64, slots: usize) -> Scenario {
    let gns = [(-300.0, -300.0), (300.0, -300.0), (300.0, 300.0), (-300.0, 300.0)];
    Scenario::reference(gns.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), period, slots)
}
