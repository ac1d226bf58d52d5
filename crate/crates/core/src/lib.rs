//! Two-party secure-computation simulator for oblivious token dropping.

pub mod bitonic;
pub mod config;
pub mod cost;
pub mod dealer;
pub mod drop;
pub mod error;
pub mod ledger;
pub mod mcn;
pub mod omsel;
pub mod oracle;
pub mod pipeline;
pub mod ring;
pub mod session;
pub mod share;
pub mod synth;
pub mod trace;

pub use cost::{CostTable, NetProfile, OpCost, OpKind};
pub use dealer::{BeaverTriple, Dealer, OneHotMask};
pub use drop::{CompactionNetwork, CompactionSchedule, DropConfig, DropOutcome, DropPlan, TokenMatrix};
pub use error::{Error, Result};
pub use ledger::{CostLedger, OpTally, StageTag};
pub use mcn::{mcn_cost, AttentionMatrix, McnParams, ScoreVector};
pub use omsel::{OmselConfig, OmselOutcome, PivotState};
pub use ring::{RingElement, RingParams};
pub use session::{Session, SharedBit};
pub use share::{AdditiveShare, Party, Shared, SharedVector};
pub use trace::{Trace, TraceEvent, TraceOp, TraceViolation};
