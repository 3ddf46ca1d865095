//! Joint precoder / RIS design for integrated sensing and communication that
//! keeps sensed targets hidden from an adversarial detector.
//!
//! A BS serves `K` users through a RIS whose elements are split into a
//! reflecting set `R` and an absorptive set `A`. The absorptive elements
//! sense `L` locations through a combiner `u`. Meanwhile the reflected
//! beam is steered into the detector to drown its own echo.
//!
//! Layout:
//! - [`scenario`]: geometry, channels and the `R`/`A` partition
//! - [`metrics`]: SINRs and detection probabilities
//! - [`surrogates`]: SCA bounds in the stacked variable `ψ`
//! - [`conic`] and [`subproblems`]: SOCP assembly and solving
//! - [`algorithms`]: the inner SCA loops, initialization and the outer loop
//! - [`harness`]: Monte Carlo experiments, sweeps and heatmaps

pub mod algorithms;
pub mod config;
pub mod conic;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod scenario;
pub mod subproblems;
pub mod surrogates;

pub use algorithms::{AlgorithmSettings, RunOutcome, RunTrace};
pub use config::{ScenarioConfig, ScenarioFile};
pub use conic::{ConicProblem, SolveResult, SolveStatus};
pub use error::{Error, Result};
pub use harness::{AggregateResult, ExperimentSpec, Mode};
pub use linalg::{CMat, CVec, C64};
pub use metrics::{BeamformingState, DetectionStats};
pub use scenario::{ChannelSet, ElementPartition, PartitionedChannels, Scenario};
pub use surrogates::PsiVector;
