//! In-process simulation of a ZeRO-1 data-parallel group.
//!
//! Every parameter is flattened row-major and split into `dp` contiguous
//! chunks of `⌈numel/dp⌉` elements; the tail of the last non-empty chunk is
//! zero padding, and trailing ranks may hold padding only. Each rank owns
//! the master weights and optimizer buffers of its chunk and a full replica
//! of every parameter.
//!
//! Collectives are synchronous barriers that reduce in rank order
//! `0..dp`, so results never depend on how ranks are scheduled. Wire
//! widths only drive the byte ledger; arithmetic is always `f64`.
//!
//! Distributed Muon, one step per parameter:
//!
//! ```text
//! g  = reduce_scatter(G)            // rank-order sum, local chunk
//! g' = update_with_momentum(g, m)   // shard-local, Nesterov included
//! G  = gather(g')                   // full momentum-processed matrix
//! U  = scale(newton_schulz(G))      // on every rank that owns elements
//! p' = apply_update(p, U[chunk])    // decoupled weight decay
//! P  = all_gather(p')
//! ```
//!
//! Ledger model, in bytes per parameter element: reduce-scatter
//! `grad_width`, gather `gather_width·(dp−1)/dp`, all-gather `param_width`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::newton_schulz::newton_schulz;
use crate::optim::{
    adamw_elementwise, apply_decoupled_update, momentum_update, nesterov_input, scale_update,
    AdamWConfig, MuonConfig, OptimError,
};
#[allow(unused_imports)] // inherent methods shadow it where std is available
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("data-parallel size must be positive")]
    InvalidDp,
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("expected {expected} ranks, got {found}")]
    RankCount { expected: usize, found: usize },
    #[error("parameter `{name}`: rank {rank} supplied shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        rank: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("parameter `{name}`: shard from rank {rank} is missing or has the wrong length")]
    MissingShard { name: String, rank: usize },
    #[error("rank {rank} has no gradient for parameter `{name}`")]
    MissingGradient { name: String, rank: usize },
    #[error("world runs {found}, expected {expected}")]
    WrongOptimizer {
        expected: &'static str,
        found: &'static str,
    },
    #[error("byte ledger is empty")]
    EmptyLedger,
    #[error("worlds differ in data-parallel size or parameter set")]
    WorldMismatch,
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Bytes per element on the wire for each collective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireWidths {
    pub grad_width: u32,
    pub gather_width: u32,
    pub param_width: u32,
}

impl Default for WireWidths {
    /// fp32 gradients, bf16 Muon gather, fp32 parameters.
    fn default() -> Self {
        Self {
            grad_width: 4,
            gather_width: 2,
            param_width: 4,
        }
    }
}

/// Contiguous chunking of a flattened parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardLayout {
    pub numel: usize,
    pub dp: usize,
    /// Padded per-rank chunk length.
    pub chunk: usize,
}

impl ShardLayout {
    pub fn new(numel: usize, dp: usize) -> Self {
        Self {
            numel,
            dp,
            chunk: numel.div_ceil(dp),
        }
    }

    /// `(offset, real length)` owned by `rank`.
    pub fn range(&self, rank: usize) -> (usize, usize) {
        let start = (rank * self.chunk).min(self.numel);
        let end = ((rank + 1) * self.chunk).min(self.numel);
        (start, end - start)
    }

    /// Splits a flat buffer into zero-padded chunks.
    pub fn partition(&self, flat: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dp)
            .map(|r| {
                let (off, len) = self.range(r);
                let mut shard = vec![0.0; self.chunk];
                shard[..len].copy_from_slice(&flat[off..off + len]);
                shard
            })
            .collect()
    }
}

/// Cumulative wire volume, kept exactly in units of `1/dp` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ByteLedger {
    pub reduce_scatter: u128,
    pub gather: u128,
    pub all_gather: u128,
}

impl ByteLedger {
    pub fn total_units(&self) -> u128 {
        self.reduce_scatter + self.gather + self.all_gather
    }

    pub fn bytes(&self, dp: usize) -> f64 {
        self.total_units() as f64 / dp as f64
    }

    pub fn charge_reduce_scatter(&mut self, numel: usize, dp: usize, width: u32) {
        self.reduce_scatter += numel as u128 * width as u128 * dp as u128;
    }

    pub fn charge_gather(&mut self, numel: usize, dp: usize, width: u32) {
        self.gather += numel as u128 * width as u128 * (dp as u128 - 1);
    }

    pub fn charge_all_gather(&mut self, numel: usize, dp: usize, width: u32) {
        self.all_gather += numel as u128 * width as u128 * dp as u128;
    }

    /// Charges of one step of `family` on a parameter of `numel` elements,
    /// as the simulated collectives record them.
    pub fn for_step(family: OptimizerFamily, numel: usize, dp: usize, widths: WireWidths) -> Self {
        let mut l = Self::default();
        l.charge_reduce_scatter(numel, dp, widths.grad_width);
        if family == OptimizerFamily::Muon {
            l.charge_gather(numel, dp, widths.gather_width);
        }
        l.charge_all_gather(numel, dp, widths.param_width);
        l
    }
}

/// Muon bytes over AdamW bytes.
pub fn ledger_ratio(muon: &ByteLedger, adamw: &ByteLedger) -> Result<f64, DistError> {
    let (num, den) = (muon.total_units(), adamw.total_units());
    if num == 0 || den == 0 {
        return Err(DistError::EmptyLedger);
    }
    Ok(exact_ratio(num, den))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerFamily {
    Muon,
    AdamW,
}

impl OptimizerFamily {
    fn label(self) -> &'static str {
        match self {
            OptimizerFamily::Muon => "Muon",
            OptimizerFamily::AdamW => "AdamW",
        }
    }
}

/// Optimizer buffers for one rank's chunk of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ShardBuffers {
    Muon {
        momentum: Vec<f64>,
    },
    AdamW {
        first: Vec<f64>,
        second: Vec<f64>,
        step: u64,
    },
}

impl ShardBuffers {
    fn elements(&self) -> usize {
        match self {
            ShardBuffers::Muon { momentum } => momentum.len(),
            ShardBuffers::AdamW { first, second, .. } => first.len() + second.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankParam {
    /// Padded master-weight chunk.
    pub master: Vec<f64>,
    pub buffers: ShardBuffers,
    /// Full parameter as last all-gathered.
    pub replica: Matrix,
}

/// Everything one simulated device holds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankStore {
    pub params: BTreeMap<String, RankParam>,
}

/// Per-step output: Alg. 1's local update RMS per rank and parameter, plus
/// the RMS of the full update matrix for comparison with single-device runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DistStepStats {
    /// `local_update_rms[rank][param]`; ranks holding only padding report 0.
    pub local_update_rms: Vec<BTreeMap<String, f64>>,
    pub full_update_rms: BTreeMap<String, f64>,
}

/// A simulated data-parallel group.
#[derive(Debug, Clone, PartialEq)]
pub struct DpWorld {
    dp: usize,
    family: OptimizerFamily,
    widths: WireWidths,
    shapes: BTreeMap<String, (usize, usize)>,
    layouts: BTreeMap<String, ShardLayout>,
    ranks: Vec<RankStore>,
    ledger: ByteLedger,
}

pub type RankGradients = BTreeMap<String, Matrix>;

impl DpWorld {
    pub fn new(
        dp: usize,
        params: &[(String, Matrix)],
        family: OptimizerFamily,
        widths: WireWidths,
    ) -> Result<Self, DistError> {
        if dp == 0 {
            return Err(DistError::InvalidDp);
        }
        let mut shapes = BTreeMap::new();
        let mut layouts = BTreeMap::new();
        let mut ranks = vec![RankStore::default(); dp];
        for (name, weight) in params {
            let layout = ShardLayout::new(weight.len(), dp);
            let chunks = layout.partition(weight.data());
            for (store, master) in ranks.iter_mut().zip(chunks) {
                let buffers = match family {
                    OptimizerFamily::Muon => ShardBuffers::Muon {
                        momentum: vec![0.0; layout.chunk],
                    },
                    OptimizerFamily::AdamW => ShardBuffers::AdamW {
                        first: vec![0.0; layout.chunk],
                        second: vec![0.0; layout.chunk],
                        step: 0,
                    },
                };
                store.params.insert(
                    name.clone(),
                    RankParam {
                        master,
                        buffers,
                        replica: weight.clone(),
                    },
                );
            }
            shapes.insert(name.clone(), weight.shape());
            layouts.insert(name.clone(), layout);
        }
        Ok(Self {
            dp,
            family,
            widths,
            shapes,
            layouts,
            ranks,
            ledger: ByteLedger::default(),
        })
    }

    pub fn dp_size(&self) -> usize {
        self.dp
    }

    pub fn family(&self) -> OptimizerFamily {
        self.family
    }

    pub fn widths(&self) -> WireWidths {
        self.widths
    }

    pub fn ledger(&self) -> ByteLedger {
        self.ledger
    }

    pub fn ranks(&self) -> &[RankStore] {
        &self.ranks
    }

    pub fn layout(&self, name: &str) -> Result<ShardLayout, DistError> {
        self.layouts
            .get(name)
            .copied()
            .ok_or_else(|| DistError::UnknownParam(name.into()))
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.shapes.keys().map(String::as_str)
    }

    /// The parameter as replicated on `rank`.
    pub fn replica(&self, rank: usize, name: &str) -> Result<&Matrix, DistError> {
        self.ranks
            .get(rank)
            .and_then(|s| s.params.get(name))
            .map(|p| &p.replica)
            .ok_or_else(|| DistError::UnknownParam(name.into()))
    }

    /// Full parameter reassembled from the master shards, no ledger charge.
    pub fn assembled_weight(&self, name: &str) -> Result<Matrix, DistError> {
        let layout = self.layout(name)?;
        let (rows, cols) = self.shapes[name];
        let mut flat = Vec::with_capacity(layout.numel);
        for (r, store) in self.ranks.iter().enumerate() {
            let (_, len) = layout.range(r);
            flat.extend_from_slice(&store.params[name].master[..len]);
        }
        Ok(Matrix::from_raw(rows, cols, flat))
    }

    /// World-wide count of optimizer-state scalars (padding included).
    pub fn optimizer_state_elements(&self) -> usize {
        self.ranks
            .iter()
            .flat_map(|s| s.params.values())
            .map(|p| p.buffers.elements())
            .sum()
    }

    /// Rank-ordered elementwise sum of the per-rank gradients, scattered so
    /// each rank receives its padded chunk.
    pub fn reduce_scatter(
        &mut self,
        name: &str,
        per_rank_full: &[&Matrix],
    ) -> Result<Vec<Vec<f64>>, DistError> {
        let layout = self.layout(name)?;
        let shape = self.shapes[name];
        if per_rank_full.len() != self.dp {
            return Err(DistError::RankCount {
                expected: self.dp,
                found: per_rank_full.len(),
            });
        }
        for (rank, g) in per_rank_full.iter().enumerate() {
            if g.shape() != shape {
                return Err(DistError::ShapeMismatch {
                    name: name.into(),
                    rank,
                    expected: shape,
                    found: g.shape(),
                });
            }
        }
        let shards = (0..self.dp)
            .map(|r| {
                let (off, len) = layout.range(r);
                let mut shard = vec![0.0; layout.chunk];
                for (i, slot) in shard[..len].iter_mut().enumerate() {
                    let idx = off + i;
                    let mut acc = per_rank_full[0].data()[idx];
                    for g in &per_rank_full[1..] {
                        acc += g.data()[idx];
                    }
                    *slot = acc;
                }
                shard
            })
            .collect();
        self.ledger
            .charge_reduce_scatter(layout.numel, self.dp, self.widths.grad_width);
        Ok(shards)
    }

    fn assemble(&self, name: &str, shards: &[Vec<f64>]) -> Result<Matrix, DistError> {
        let layout = self.layout(name)?;
        let (rows, cols) = self.shapes[name];
        if shards.len() != self.dp {
            return Err(DistError::MissingShard {
                name: name.into(),
                rank: shards.len().min(self.dp),
            });
        }
        let mut flat = Vec::with_capacity(layout.numel);
        for (rank, shard) in shards.iter().enumerate() {
            if shard.len() != layout.chunk {
                return Err(DistError::MissingShard {
                    name: name.into(),
                    rank,
                });
            }
            let (_, len) = layout.range(rank);
            flat.extend_from_slice(&shard[..len]);
        }
        Ok(Matrix::from_raw(rows, cols, flat))
    }

    /// Reassembles the full matrix from every rank's chunk, padding
    /// stripped. Charged at `gather_width·(dp−1)/dp` per element.
    pub fn gather(&mut self, name: &str, shards: &[Vec<f64>]) -> Result<Matrix, DistError> {
        let full = self.assemble(name, shards)?;
        self.ledger
            .charge_gather(full.len(), self.dp, self.widths.gather_width);
        Ok(full)
    }

    /// Like [`DpWorld::gather`] but every rank receives the result and it is
    /// stored as that rank's replica. Charged at `param_width` per element.
    pub fn all_gather(&mut self, name: &str, shards: &[Vec<f64>]) -> Result<Matrix, DistError> {
        let full = self.assemble(name, shards)?;
        self.ledger
            .charge_all_gather(full.len(), self.dp, self.widths.param_width);
        for store in &mut self.ranks {
            store
                .params
                .get_mut(name)
                .expect("every rank holds every parameter")
                .replica = full.clone();
        }
        Ok(full)
    }

    fn expect_family(&self, family: OptimizerFamily) -> Result<(), DistError> {
        if self.family != family {
            return Err(DistError::WrongOptimizer {
                expected: family.label(),
                found: self.family.label(),
            });
        }
        Ok(())
    }

    fn collect_grads<'a>(
        &self,
        name: &str,
        per_rank_grads: &'a [RankGradients],
    ) -> Result<Vec<&'a Matrix>, DistError> {
        if per_rank_grads.len() != self.dp {
            return Err(DistError::RankCount {
                expected: self.dp,
                found: per_rank_grads.len(),
            });
        }
        per_rank_grads
            .iter()
            .enumerate()
            .map(|(rank, g)| {
                g.get(name).ok_or_else(|| DistError::MissingGradient {
                    name: name.into(),
                    rank,
                })
            })
            .collect()
    }

    /// One Distributed Muon step over every parameter.
    pub fn distributed_muon_step(
        &mut self,
        per_rank_grads: &[RankGradients],
        cfg: &MuonConfig,
        step_lr: f64,
    ) -> Result<DistStepStats, DistError> {
        let order: Vec<usize> = (0..self.dp).collect();
        self.distributed_muon_step_ordered(per_rank_grads, cfg, step_lr, &order)
    }

    /// As [`DpWorld::distributed_muon_step`], visiting ranks in `order`
    /// during the shard-local phases.
    pub fn distributed_muon_step_ordered(
        &mut self,
        per_rank_grads: &[RankGradients],
        cfg: &MuonConfig,
        step_lr: f64,
        order: &[usize],
    ) -> Result<DistStepStats, DistError> {
        self.expect_family(OptimizerFamily::Muon)?;
        self.check_order(order)?;
        let mut stats = DistStepStats {
            local_update_rms: vec![BTreeMap::new(); self.dp],
            full_update_rms: BTreeMap::new(),
        };
        let names: Vec<String> = self.shapes.keys().cloned().collect();
        for name in &names {
            let grads = self.collect_grads(name, per_rank_grads)?;
            for g in &grads {
                if !g.is_finite() {
                    return Err(OptimError::NonFiniteGradient { name: name.clone() }.into());
                }
            }
            let layout = self.layout(name)?;
            let local_grads = self.reduce_scatter(name, &grads)?;

            let mut processed = vec![Vec::new(); self.dp];
            for &r in order {
                let (_, len) = layout.range(r);
                let p = self.ranks[r].params.get_mut(name).expect("param present");
                let ShardBuffers::Muon { momentum } = &mut p.buffers else {
                    unreachable!("family checked above");
                };
                let g = &local_grads[r][..len];
                momentum_update(&mut momentum[..len], g, cfg.momentum);
                let mut out = if cfg.nesterov {
                    nesterov_input(&momentum[..len], g, cfg.momentum)
                } else {
                    momentum[..len].to_vec()
                };
                out.resize(layout.chunk, 0.0);
                processed[r] = out;
            }

            let full = self.gather(name, &processed)?;

            let mut full_rms = None;
            for &r in order {
                let (off, len) = layout.range(r);
                if len == 0 {
                    stats.local_update_rms[r].insert(name.clone(), 0.0);
                    continue;
                }
                // Each owning rank orthogonalizes the full matrix, then keeps
                // only its own chunk.
                let ortho = newton_schulz(&full, &cfg.ns).map_err(OptimError::from)?;
                let update = scale_update(&ortho, &cfg.scaling);
                let local = &update.data()[off..off + len];
                let p = self.ranks[r].params.get_mut(name).expect("param present");
                apply_decoupled_update(&mut p.master[..len], local, step_lr, cfg.weight_decay);
                let ms = local.iter().map(|u| u * u).sum::<f64>() / len as f64;
                stats.local_update_rms[r].insert(name.clone(), ms.sqrt());
                full_rms.get_or_insert_with(|| update.rms());
            }
            stats
                .full_update_rms
                .insert(name.clone(), full_rms.unwrap_or(0.0));

            let masters: Vec<Vec<f64>> = self
                .ranks
                .iter()
                .map(|s| s.params[name].master.clone())
                .collect();
            self.all_gather(name, &masters)?;
        }
        Ok(stats)
    }

    /// One ZeRO-1 AdamW step: reduce-scatter, shard-local AdamW,
    /// all-gather.
    pub fn distributed_adamw_step(
        &mut self,
        per_rank_grads: &[RankGradients],
        cfg: &AdamWConfig,
        step_lr: f64,
    ) -> Result<DistStepStats, DistError> {
        self.expect_family(OptimizerFamily::AdamW)?;
        let mut stats = DistStepStats {
            local_update_rms: vec![BTreeMap::new(); self.dp],
            full_update_rms: BTreeMap::new(),
        };
        let names: Vec<String> = self.shapes.keys().cloned().collect();
        for name in &names {
            let grads = self.collect_grads(name, per_rank_grads)?;
            let layout = self.layout(name)?;
            let local_grads = self.reduce_scatter(name, &grads)?;
            let mut total_sq = 0.0;
            for (r, store) in self.ranks.iter_mut().enumerate() {
                let (_, len) = layout.range(r);
                let p = store.params.get_mut(name).expect("param present");
                let ShardBuffers::AdamW {
                    first,
                    second,
                    step,
                } = &mut p.buffers
                else {
                    unreachable!("family checked above");
                };
                *step += 1;
                let mut update = vec![0.0; len];
                adamw_elementwise(
                    &mut p.master[..len],
                    &mut first[..len],
                    &mut second[..len],
                    &local_grads[r][..len],
                    &mut update,
                    *step,
                    cfg,
                    step_lr,
                );
                let sq: f64 = update.iter().map(|u| u * u).sum();
                total_sq += sq;
                let rms = if len > 0 { (sq / len as f64).sqrt() } else { 0.0 };
                stats.local_update_rms[r].insert(name.clone(), rms);
            }
            stats
                .full_update_rms
                .insert(name.clone(), (total_sq / layout.numel as f64).sqrt());
            let masters: Vec<Vec<f64>> = self
                .ranks
                .iter()
                .map(|s| s.params[name].master.clone())
                .collect();
            self.all_gather(name, &masters)?;
        }
        Ok(stats)
    }

    fn check_order(&self, order: &[usize]) -> Result<(), DistError> {
        let mut seen = vec![false; self.dp];
        for &r in order {
            if r >= self.dp || core::mem::replace(&mut seen[r], true) {
                return Err(DistError::RankCount {
                    expected: self.dp,
                    found: order.len(),
                });
            }
        }
        if order.len() != self.dp {
            return Err(DistError::RankCount {
                expected: self.dp,
                found: order.len(),
            });
        }
        Ok(())
    }
}

/// Total Muon bytes over total AdamW bytes, for worlds over the same
/// parameters and `dp` after the same number of steps.
pub fn communication_ratio(muon: &DpWorld, adamw: &DpWorld) -> Result<f64, DistError> {
    if muon.dp != adamw.dp || muon.shapes != adamw.shapes {
        return Err(DistError::WorldMismatch);
    }
    ledger_ratio(&muon.ledger, &adamw.ledger)
}

/// Correctly rounded `num/den`: both sides are reduced by their gcd so the
/// final division sees the smallest integers representing the rational.
pub fn exact_ratio(num: u128, den: u128) -> f64 {
    let g = gcd(num, den);
    let (n, d) = (num / g, den / g);
    n as f64 / d as f64
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Closed-form ledger ratio `(grad + gather·(dp−1)/dp + param)/(grad + param)`.
pub fn predicted_ratio(dp: usize, widths: WireWidths) -> f64 {
    let dp = dp as u128;
    let num = (widths.grad_width as u128 + widths.param_width as u128) * dp
        + widths.gather_width as u128 * (dp - 1);
    let den = (widths.grad_width as u128 + widths.param_width as u128) * dp;
    exact_ratio(num, den)
}
