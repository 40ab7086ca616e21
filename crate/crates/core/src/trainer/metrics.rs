use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use super::TrainError;
use crate::optim::{ParamKind, UpdateStats};

pub const CSV_HEADER: &str = "step,train_loss,val_loss,lr,param,update_rms,weight_rms";

#[derive(Debug, Clone, PartialEq)]
pub struct ParamMetrics {
    pub name: String,
    pub kind: ParamKind,
    pub stats: UpdateStats,
}

/// One optimizer step. Losses are measured on the weights the step's
/// gradient was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    pub params: Vec<ParamMetrics>,
}

impl StepRecord {
    pub fn param(&self, name: &str) -> Option<&UpdateStats> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.stats)
    }

    /// Largest weight RMS among parameters of `kind`.
    pub fn max_weight_rms(&self, kind: ParamKind) -> f64 {
        self.params
            .iter()
            .filter(|p| p.kind == kind)
            .fold(0.0, |m, p| m.max(p.stats.weight_rms))
    }
}

/// Append-only per-step log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsLog {
    records: Vec<StepRecord>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: StepRecord) -> Result<(), TrainError> {
        if let Some(last) = self.records.last() {
            if record.step <= last.step {
                return Err(TrainError::NonIncreasingStep {
                    previous: last.step,
                    found: record.step,
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.train_loss).collect()
    }

    /// Long-format CSV, one row per step and parameter. `precision` fixes
    /// the number of decimals; `None` writes shortest round-trip values.
    pub fn to_csv(&self, precision: Option<usize>) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let num = |out: &mut String, v: f64| match precision {
            Some(p) => write!(out, "{v:.p$}"),
            None => write!(out, "{v}"),
        };
        for r in &self.records {
            for p in &r.params {
                let _ = write!(out, "{},", r.step);
                for v in [r.train_loss, r.val_loss, r.lr] {
                    let _ = num(&mut out, v);
                    out.push(',');
                }
                out.push_str(&p.name);
                out.push(',');
                let _ = num(&mut out, p.stats.update_rms);
                out.push(',');
                let _ = num(&mut out, p.stats.weight_rms);
                out.push('\n');
            }
        }
        out
    }
}
