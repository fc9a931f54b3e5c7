//! L1 training with Adam, SKIP pre-training modes, checkpoints and
//! cross-scale weight transfer.

mod checkpoint;
mod config;
mod optim;
mod trainer;
mod transfer;

pub use checkpoint::{
    Checkpoint, CheckpointMeta, LoadReport, Phase, TrainState, ADAM_M_PREFIX, ADAM_V_PREFIX, MAGIC, META_ENTRY,
    VERSION,
};
pub use config::{lr_schedule, TrainConfig, TrainMode};
pub use optim::{Adam, Moments};
pub use trainer::{pretrain_skip, train, LogRecord, TrainData, TrainSummary};
pub use transfer::{transfer_scale_weights, TransferAction, TransferEntry, TransferReport};
