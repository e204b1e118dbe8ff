use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::biamat::config::{ThresholdMode, TrainConfig};
use crate::biamat::loss::{biamat_step, AuxBatch, Sgd, StepRngs};
use crate::biamat::routing::{freeze_threshold, RoutingResult, ThresholdState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::harness::eval::evaluate_robustness;
use crate::harness::metrics::{EvalBlock, MetricsRecord};
use crate::models::{Checkpoint, CheckpointMeta, MultiHeadNet};

/// Independent random streams of one run. Primary batching and primary attacks never
/// share a generator with the auxiliary branch, so disabling that branch leaves the
/// primary trajectory untouched.
pub struct TrainRngs {
    pub primary_batches: ChaCha8Rng,
    pub aux_batches: ChaCha8Rng,
    pub primary_attack: ChaCha8Rng,
    pub aux_attack: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl TrainRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            primary_batches: stream(seed, 1),
            aux_batches: stream(seed, 2),
            primary_attack: stream(seed, 3),
            aux_attack: stream(seed, 4),
        }
    }
}

/// Seed of the held-out evaluation after `epoch`.
pub fn eval_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Cycles through reshuffled permutations of the auxiliary set.
struct AuxSampler {
    order: Vec<usize>,
    cursor: usize,
}

impl AuxSampler {
    fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: n,
        }
    }

    fn next_batch(&mut self, rng: &mut ChaCha8Rng, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            let take = (size - out.len()).min(self.order.len() - self.cursor);
            out.extend_from_slice(&self.order[self.cursor..self.cursor + take]);
            self.cursor += take;
        }
        out
    }
}

/// Callbacks from [`train_with`].
pub trait TrainObserver {
    /// Every record, once its epoch has been evaluated.
    fn record(&mut self, _record: &MetricsRecord) -> Result<()> {
        Ok(())
    }

    /// Routing of one auxiliary batch. `rows` are indices into the auxiliary dataset;
    /// `routing` indexes into `rows`.
    fn routed(&mut self, _epoch: usize, _rows: &[usize], _routing: &RoutingResult) {}
}

impl TrainObserver for () {}

struct RecordFn<F>(F);

impl<F: FnMut(&MetricsRecord) -> Result<()>> TrainObserver for RecordFn<F> {
    fn record(&mut self, record: &MetricsRecord) -> Result<()> {
        (self.0)(record)
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Network with the highest held-out PGD accuracy (earliest epoch on ties).
    pub best: Checkpoint,
    pub last: MultiHeadNet,
    pub threshold: Option<ThresholdState>,
    pub metrics: Vec<MetricsRecord>,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    primary: &'a Dataset,
    rngs: TrainRngs,
    opt: Sgd,
    step: usize,
    last_batch: Vec<usize>,
}

struct AuxState<'a> {
    data: &'a Dataset,
    threshold: ThresholdState,
    sampler: AuxSampler,
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a TrainConfig, primary: &'a Dataset) -> Self {
        Self {
            cfg,
            primary,
            rngs: TrainRngs::new(cfg.seed),
            opt: Sgd::new(cfg.momentum, cfg.weight_decay),
            step: 0,
            last_batch: Vec::new(),
        }
    }

    fn epoch(
        &mut self,
        net: &mut MultiHeadNet,
        epoch: usize,
        mut aux: Option<&mut AuxState<'_>>,
        observer: &mut dyn TrainObserver,
    ) -> Result<Vec<MetricsRecord>> {
        let cfg = self.cfg;
        let lr = cfg.lr.rate(epoch, cfg.epochs);
        let mut order: Vec<usize> = (0..self.primary.len()).collect();
        order.shuffle(&mut self.rngs.primary_batches);
        let mut records = Vec::new();
        for chunk in order.chunks(cfg.batch_pri) {
            let batch = self.primary.subset(chunk);
            let target = batch.one_hot()?;
            let aux_batch = match aux.as_deref_mut() {
                Some(state) if cfg.alpha > 0.0 => {
                    let idx = state
                        .sampler
                        .next_batch(&mut self.rngs.aux_batches, cfg.batch_aux);
                    Some((state.data.subset(&idx), state.threshold, idx))
                }
                _ => None,
            };
            let sg = biamat_step(
                net,
                &mut self.opt,
                batch.x(),
                &target,
                aux_batch.as_ref().map(|(d, t, _)| AuxBatch {
                    x: d.x(),
                    labels: d.labels(),
                    threshold: t,
                }),
                cfg,
                lr,
                StepRngs {
                    primary_attack: &mut self.rngs.primary_attack,
                    aux_attack: &mut self.rngs.aux_attack,
                },
            )?;
            let (high, low, ratio) = match &sg.aux {
                Some((routing, terms)) => {
                    debug_assert!(routing.is_partition_of(cfg.batch_aux));
                    if let Some((_, _, rows)) = &aux_batch {
                        observer.routed(epoch, rows, routing);
                    }
                    (
                        Some(terms.high.loss),
                        Some(terms.low.loss),
                        Some(routing.ratio),
                    )
                }
                None => (None, None, None),
            };
            records.push(MetricsRecord {
                step: self.step,
                epoch,
                loss_primary: sg.primary.loss,
                loss_aux_high: high,
                loss_aux_low: low,
                ratio,
                lr,
                eval: None,
            });
            self.step += 1;
            self.last_batch = chunk.to_vec();
        }
        Ok(records)
    }

    fn threshold(&self, net: &MultiHeadNet) -> Result<ThresholdState> {
        let x = match self.cfg.threshold_mode {
            ThresholdMode::LastBatch if !self.last_batch.is_empty() => {
                self.primary.x().select_rows(&self.last_batch)
            }
            _ => self.primary.x().clone(),
        };
        freeze_threshold(net, &x, self.cfg.pi, self.cfg.warmup)
    }
}

fn require_data(name: &str, d: &Dataset, width: usize) -> Result<()> {
    if d.is_empty() {
        return Err(Error::InvalidArgument(format!("{name} dataset is empty")));
    }
    if d.width() != width {
        return Err(Error::shape(
            "train",
            format!(
                "{name} inputs have width {}, network expects {width}",
                d.width()
            ),
        ));
    }
    Ok(())
}

/// Warm-up only: `cfg.warmup` epochs of primary adversarial training.
pub fn warmup(net: &MultiHeadNet, primary: &Dataset, cfg: &TrainConfig) -> Result<MultiHeadNet> {
    cfg.validate()?;
    require_data("primary", primary, net.architecture().input)?;
    let mut net = net.clone();
    let mut trainer = Trainer::new(cfg, primary);
    for epoch in 0..cfg.warmup {
        trainer.epoch(&mut net, epoch, None, &mut ())?;
    }
    Ok(net)
}

/// Full training: warm-up, threshold, then BiaMAT epochs; evaluates on `held_out` after
/// every epoch and keeps the best checkpoint.
pub fn train(
    net: &MultiHeadNet,
    primary: &Dataset,
    aux: Option<&Dataset>,
    held_out: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(net, primary, aux, held_out, cfg, &mut ())
}

/// [`train`], handing every record to `on_record` as soon as its epoch is evaluated.
pub fn train_observed<F>(
    net: &MultiHeadNet,
    primary: &Dataset,
    aux: Option<&Dataset>,
    held_out: &Dataset,
    cfg: &TrainConfig,
    on_record: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&MetricsRecord) -> Result<()>,
{
    train_with(net, primary, aux, held_out, cfg, &mut RecordFn(on_record))
}

/// [`train`] reporting to `observer`.
pub fn train_with(
    net: &MultiHeadNet,
    primary: &Dataset,
    aux: Option<&Dataset>,
    held_out: &Dataset,
    cfg: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let width = net.architecture().input;
    require_data("primary", primary, width)?;
    require_data("held-out", held_out, width)?;
    if let Some(a) = aux {
        require_data("auxiliary", a, width)?;
    }

    let mut net = net.clone();
    let mut trainer = Trainer::new(cfg, primary);
    let mut aux_state: Option<AuxState<'_>> = None;
    let mut threshold = None;
    let mut metrics = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let eval_attacks: Vec<_> = std::iter::once(cfg.eval.pgd.clone())
        .chain(cfg.eval.cw.clone())
        .collect();

    for epoch in 0..cfg.epochs {
        if epoch == cfg.warmup {
            if let Some(data) = aux {
                let t = trainer.threshold(&net)?;
                threshold = Some(t);
                aux_state = Some(AuxState {
                    data,
                    threshold: t,
                    sampler: AuxSampler::new(data.len()),
                });
            }
        }
        let in_warmup = epoch < cfg.warmup;
        let mut records = trainer.epoch(
            &mut net,
            epoch,
            if in_warmup { None } else { aux_state.as_mut() },
            observer,
        )?;

        let table = evaluate_robustness(&net, held_out, &eval_attacks, eval_seed(cfg.seed, epoch))?;
        let pgd = table.robust[0].accuracy;
        if let Some(last) = records.last_mut() {
            last.eval = Some(EvalBlock {
                clean: table.clean,
                pgd,
                cw: table.robust.get(1).map(|r| r.accuracy),
            });
        }
        if best.as_ref().is_none_or(|b| pgd > b.meta.robust_accuracy) {
            best = Some(Checkpoint {
                net: net.clone(),
                meta: CheckpointMeta {
                    epoch,
                    robust_accuracy: pgd,
                    seed: cfg.seed,
                },
            });
        }
        for r in &records {
            observer.record(r)?;
        }
        metrics.append(&mut records);
    }

    Ok(TrainOutcome {
        best: best.expect("at least one epoch"),
        last: net,
        threshold,
        metrics,
    })
}
