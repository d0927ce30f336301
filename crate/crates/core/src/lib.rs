//! Windowed longitudinal LiNGAM: prior-knowledge masks, per-time-point
//! discovery, stacked total effects, subject bootstrap and a guardrailed
//! what-if simulator.

// `!(x >= lo)` is deliberate where NaN must fail the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod discovery;
pub mod effects;
pub mod error;
pub mod fit;
pub mod fixture;
pub mod linalg;
pub mod mask;
pub mod matrix;
pub mod motif;
pub mod panel;
pub mod presets;
pub mod provenance;
pub mod simulator;
pub mod synth;

pub use error::{Error, Result};
pub use bootstrap::{BootstrapConfig, BootstrapSummary, EffectQuery};
pub use effects::{NodeId, StackedSystem, TotalEffect};
pub use fit::{fit, LongitudinalModel};
pub use mask::PkMask;
pub use motif::Motif;
pub use panel::{Panel, PanelSchema, Role, ValueType, Variable};
pub use simulator::{EffectBundle, SimAnswer, SimQuery, SimStatus};
