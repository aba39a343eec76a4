//! Blind pairwise evaluation campaigns: two anonymous translations per
//! item, a choice of first, second or tie, and per-system tallies.

pub mod api;
pub mod campaign;
mod error;
pub mod import;
pub mod store;
pub mod tally;

pub use api::{router, serve_blocking, AppState, ServeOptions};
pub use campaign::{create_campaign, Campaign, CampaignSpec, Item, SystemTexts, DEFAULT_CAMPAIGN_SIZE, QUESTION_TEMPLATE};
pub use error::{EvalError, Result};
pub use import::{build_spec, CampaignRequest, SystemSource};
pub use store::{Ack, NextTask, Store, TaskView};
pub use tally::{tally, Choice, Counts, JudgmentRecord, PreferenceTally};
