use thiserror::Error;

use crate::engine::SimTime;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at {at} but clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("dequeue from an empty bottleneck queue")]
    QueueEmpty,

    #[error("alpha update over a round with no delivered segments")]
    EmptyRound,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown variant code {code:?}; valid codes: {valid}")]
    UnknownVariant { code: String, valid: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
