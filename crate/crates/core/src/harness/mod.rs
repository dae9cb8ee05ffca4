//! Experiment plumbing: scenarios, metrics against simulator ground truth,
//! CSV/SVG reports and the built-in self-test.

pub mod metrics;
pub mod report;
pub mod scenario;
pub mod selftest;
pub mod svg;

pub use metrics::{run_scenario, run_suite, LaneMetrics, MetricReport, QueueEstimator, RowEstimator, ScenarioReport};
pub use report::{emit_reference_figures, emit_report, emit_report_with, write_alpha_table};
pub use scenario::{load_scenarios, parse_scenarios, reference_scenarios, reproduce_alpha_table, Scenario};
