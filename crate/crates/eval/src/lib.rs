//! Desk-scale studies: encoder configurations, pose-conditioned transitions,
//! guidance scale and inference cost. Every number is a proxy measured on
//! the synthetic corpus.

pub mod guidance;
pub mod metrics;
pub mod recon;
pub mod report;
pub mod timing;
pub mod transition;

pub use guidance::{guidance_sweep, GuidanceConfig};
pub use metrics::{heldout_recon, linear_fit, median, roundtrip_error, ReconScore};
pub use recon::{default_grid, recon_cell, recon_study, ReconCell};
pub use report::{write_reports, Fingerprint, MetricReport, Row, PROXY, SCHEMA_VERSION};
pub use timing::{timing_profile, TimingConfig};
pub use transition::{prompt_pairs, transition_study, PoseCondition, TransitionConfig};
