//! Shared helpers for the integration tests: catalog charts sampled on their
//! recommended boxes.
//!
//! Each test binary compiles its own copy, so not every helper is used by
//! every binary.
#![allow(dead_code)]

use orthonet::catalog::AnalyticChart;
use orthonet::OrthogonalSystem;

/// Samples a catalog chart on an n×n×n grid inside its recommended box.
pub fn chart(name: &str, n: usize) -> OrthogonalSystem {
    chart_with(name, None, n)
}

/// Same with an explicit family parameter.
pub fn chart_with(name: &str, c: Option<f64>, n: usize) -> OrthogonalSystem {
    let chart = AnalyticChart::instantiate(name, c).expect("catalog chart");
    chart
        .sample(chart.default_grid(n).expect("grid"))
        .expect("sampling inside the recommended box")
}
