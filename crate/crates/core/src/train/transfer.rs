use serde::Serialize;

use super::checkpoint::Checkpoint;
use crate::error::{shape_err, Result};
use crate::model::{Adcsr, Head, BODY_PREFIX, SKIP_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferAction {
    Copied,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransferEntry {
    pub name: String,
    pub action: TransferAction,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TransferReport {
    pub entries: Vec<TransferEntry>,
}

impl TransferReport {
    pub fn names(&self, action: TransferAction) -> Vec<&str> {
        self.entries.iter().filter(|e| e.action == action).map(|e| e.name.as_str()).collect()
    }
}

/// Initialises `dst` from another scale's checkpoint: every BODY parameter
/// outside the reconstruction head is copied; SKIP and the head are left
/// as they are because their shapes depend on the scale.
pub fn transfer_scale_weights(src: &Checkpoint, dst: &mut Adcsr<f32>) -> Result<TransferReport> {
    let head = Head::prefix(src.meta.model.head_variant);
    let mut report = TransferReport::default();
    let mut updates = Vec::new();
    for (name, t) in src.params() {
        let (action, reason) = if name.starts_with(SKIP_PREFIX) {
            (TransferAction::Skipped, "SKIP is scale-specific".to_string())
        } else if name.starts_with(&head) {
            (TransferAction::Skipped, "reconstruction head is scale-specific".to_string())
        } else if name.starts_with(BODY_PREFIX) {
            let id = dst
                .params()
                .id(name)
                .ok_or_else(|| shape_err!("{name} is shared BODY state but the destination model lacks it"))?;
            let want = dst.params().get(id).value.shape();
            if want != t.shape() {
                return Err(shape_err!("{name}: source shape {:?} but destination expects {want:?}", t.shape()));
            }
            updates.push((id, t.clone()));
            (TransferAction::Copied, "shared BODY parameter".to_string())
        } else {
            (TransferAction::Skipped, "not a model parameter".to_string())
        };
        report.entries.push(TransferEntry { name: name.to_string(), action, reason });
    }
    for (id, t) in updates {
        dst.params_mut().set_value(id, t)?;
    }
    Ok(report)
}
