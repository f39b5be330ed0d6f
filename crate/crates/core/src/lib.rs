//! Device scheduling and superimposed multicast/unicast beamforming for
//! mmWave downlinks.
//!
//! The pipeline draws geometric channels ([`channel`]), scores device pairs
//! ([`metrics`]), picks the dual-layer devices ([`scheduler`]), quantises the
//! receive combiners ([`combiner`]) and designs max-min unicast precoders
//! under a multicast QoS target ([`precoder`], on top of the in-crate conic
//! solver in [`conic`]). [`evaluation`] runs whole schemes on one channel
//! draw and [`harness`] runs seeded sweeps of them.

pub mod channel;
pub mod combiner;
pub mod conic;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod precoder;
pub mod scheduler;

pub use error::{Error, Result};
pub use evaluation::{
    evaluate_sinrs, run_scheme, spectral_efficiency, Evaluator, ScenarioResult, SchemeKind,
};
pub use harness::{parse_config, run_experiment, RunOptions, SweepSpec, SystemConfig};
pub use metrics::{MetricKind, MetricTag};
pub use precoder::{solve_precoders, BeamformingSolution, PrecoderParams};
pub use scheduler::{solve_schedule, ScheduleDecision};
