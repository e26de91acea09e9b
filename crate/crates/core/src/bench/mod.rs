//! Robot-arm simulator, accuracy metrics and experiment protocols.

pub mod arm;
pub mod metrics;
pub mod protocol;
pub mod report;

pub use arm::{robot_arm, simulate, ArmArSpec, Calibration};
pub use metrics::{nlpd, rmse, MetricReport};
pub use protocol::{run_protocol, BenchConfig, BenchResult, Protocol, ScenarioConfig};
