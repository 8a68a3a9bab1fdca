//! World-model maximum-likelihood training: minibatch Adam on the summed
//! next-action negative log-likelihood of recorded episodes.

use std::collections::VecDeque;

use rand::seq::SliceRandom;

use crate::env::bandit::level_index;
use crate::env::trace::EpisodeTrace;
use crate::error::{Error, Result};
use crate::nn::TapeBindings;
use crate::optim::Adam;
use crate::principal::WorldModel;
use crate::rng::SplitRng;
use crate::tape::Tape;

/// One episode reduced to what the world model consumes.
#[derive(Debug, Clone)]
pub struct WmExample {
    pub actions: Vec<usize>,
    pub levels: Vec<usize>,
}

impl WmExample {
    pub fn from_trace(trace: &EpisodeTrace, num_arms: usize) -> Result<Self> {
        let mut actions = Vec::with_capacity(trace.len());
        let mut levels = Vec::with_capacity(trace.len());
        for step in &trace.steps {
            if step.agent_action >= num_arms {
                return Err(Error::usage(format!(
                    "trace action {} out of range for {num_arms} arms",
                    step.agent_action
                )));
            }
            actions.push(step.agent_action);
            levels.push(level_index(step.intervention)?);
        }
        if actions.is_empty() {
            return Err(Error::usage("cannot train on an empty trace".to_string()));
        }
        Ok(WmExample { actions, levels })
    }
}

/// Bounded FIFO of training episodes; pushes past the cap drop the oldest.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    examples: VecDeque<WmExample>,
    cap: usize,
}

impl ReplayBuffer {
    pub fn new(cap: usize) -> Self {
        assert!(cap > 0, "replay buffer cap must be positive");
        ReplayBuffer { examples: VecDeque::new(), cap }
    }

    pub fn push(&mut self, example: WmExample) {
        if self.examples.len() == self.cap {
            self.examples.pop_front();
        }
        self.examples.push_back(example);
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, i: usize) -> &WmExample {
        &self.examples[i]
    }
}

/// One Adam step on the mean episode NLL of `chunk`; returns the
/// pre-update loss.
fn nll_step(wm: &mut WorldModel, adam: &mut Adam, chunk: &[&WmExample]) -> Result<f64> {
    let mut tape = Tape::new();
    let tp = TapeBindings::leaves(&mut tape, &wm.params)?;
    let mut terms = Vec::with_capacity(chunk.len());
    for ex in chunk {
        terms.push(wm.episode_nll_tape(&mut tape, &tp, &ex.actions, &ex.levels)?);
    }
    let total = tape.add_n(&terms);
    let loss = tape.scale(total, 1.0 / chunk.len() as f64);
    let grads = tape.grad(loss)?;
    wm.params = adam.step(&wm.params, &grads)?;
    tape.value(loss).as_scalar()
}

/// Incremental trainer: a replay buffer plus persistent Adam state, fed by
/// the meta-training loop one round per epoch.
#[derive(Debug)]
pub struct WmTrainer {
    pub wm: WorldModel,
    adam: Adam,
    pub buffer: ReplayBuffer,
    minibatch: usize,
}

impl WmTrainer {
    pub fn new(wm: WorldModel, lr: f64, buffer_cap: usize, minibatch: usize) -> Self {
        assert!(minibatch > 0, "minibatch must be positive");
        let adam = Adam::new(&wm.params, lr);
        WmTrainer { wm, adam, buffer: ReplayBuffer::new(buffer_cap), minibatch }
    }

    pub fn push_trace(&mut self, trace: &EpisodeTrace) -> Result<()> {
        let ex = WmExample::from_trace(trace, self.wm.num_arms())?;
        self.buffer.push(ex);
        Ok(())
    }

    /// One pass over at most `sample_cap` episodes drawn without
    /// replacement from the buffer. Returns the mean pre-update episode
    /// NLL, or None when the buffer is empty.
    pub fn train_round(&mut self, sample_cap: usize, rng: &mut SplitRng) -> Result<Option<f64>> {
        if self.buffer.is_empty() || sample_cap == 0 {
            return Ok(None);
        }
        let n = self.buffer.len().min(sample_cap);
        let mut order: Vec<usize> = (0..self.buffer.len()).collect();
        order.shuffle(rng);
        order.truncate(n);
        let mut loss_sum = 0.0;
        let mut batches = 0.0;
        for chunk_ids in order.chunks(self.minibatch) {
            let chunk: Vec<&WmExample> = chunk_ids.iter().map(|&i| self.buffer.get(i)).collect();
            loss_sum += nll_step(&mut self.wm, &mut self.adam, &chunk)?;
            batches += 1.0;
        }
        Ok(Some(loss_sum / batches))
    }
}

/// Train a world model on a fixed dataset for a number of epochs; returns
/// the trained model and its final mean episode NLL over the dataset.
pub fn train_world_model(
    traces: &[EpisodeTrace],
    wm: &WorldModel,
    epochs: usize,
    lr: f64,
    minibatch: usize,
    rng: &mut SplitRng,
) -> Result<(WorldModel, f64)> {
    if traces.is_empty() {
        return Err(Error::usage("world-model training needs a nonempty dataset"));
    }
    let examples: Vec<WmExample> = traces
        .iter()
        .map(|t| WmExample::from_trace(t, wm.num_arms()))
        .collect::<Result<_>>()?;
    let mut wm = wm.clone();
    let mut adam = Adam::new(&wm.params, lr);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk_ids in order.chunks(minibatch.max(1)) {
            let chunk: Vec<&WmExample> = chunk_ids.iter().map(|&i| &examples[i]).collect();
            nll_step(&mut wm, &mut adam, &chunk)?;
        }
    }
    let mut nll = 0.0;
    for ex in &examples {
        nll += wm.episode_nll(&ex.actions, &ex.levels)?;
    }
    Ok((wm, nll / examples.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::trace::TraceStep;

    fn constant_trace(arm: usize, len: usize) -> EpisodeTrace {
        let mut trace = EpisodeTrace::new();
        for t in 1..=len {
            trace.push(TraceStep {
                t,
                agent_action: arm,
                intervention: 0.0,
                cost: 0.0,
                agent_reward: 0.5,
                principal_reward: 0.0,
                logprob: 0.0,
                wm_prediction: None,
            });
        }
        trace
    }

    #[test]
    fn overfits_a_constant_arm_agent() {
        let mut rng = SplitRng::new(1);
        let wm = WorldModel::new(5, 8, 1, &mut rng);
        let traces: Vec<EpisodeTrace> = (0..8).map(|_| constant_trace(3, 30)).collect();
        let (trained, nll) =
            train_world_model(&traces, &wm, 40, 1e-2, 4, &mut rng.child(1)).unwrap();
        assert!(nll < 0.2 * 30.0, "nll {nll}");
        let mut session = trained.session();
        let mut hits = 0;
        let mut total = 0;
        let mut a_prev = None;
        for t in 1..=30 {
            let (_, pred) = session.predict(a_prev, a_prev.map(|_| 0)).unwrap();
            if t >= 2 {
                total += 1;
                if pred == 3 {
                    hits += 1;
                }
            }
            a_prev = Some(3);
        }
        assert!(hits as f64 / total as f64 > 0.95, "{hits}/{total}");
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut rng = SplitRng::new(2);
        let wm = WorldModel::new(4, 6, 1, &mut rng);
        let traces = vec![constant_trace(1, 10), constant_trace(2, 10)];
        let before = wm.params.checksum();
        let (same, nll0) = train_world_model(&traces, &wm, 1, 0.0, 2, &mut rng.child(3)).unwrap();
        assert_eq!(same.params.checksum(), before);
        let (_, nll1) = train_world_model(&traces, &wm, 0, 1.0, 2, &mut rng.child(4)).unwrap();
        assert_eq!(nll0, nll1);
    }

    #[test]
    fn untrained_model_scores_at_the_uniform_rate() {
        let mut rng = SplitRng::new(3);
        let wm = WorldModel::new(10, 8, 2, &mut rng);
        let traces = vec![constant_trace(7, 200)];
        let (_, nll) = train_world_model(&traces, &wm, 0, 1e-3, 1, &mut rng.child(1)).unwrap();
        let uniform = 200.0 * (10.0_f64).ln();
        assert!((nll - uniform).abs() / uniform < 0.01, "nll {nll} vs uniform {uniform}");
    }

    #[test]
    fn buffer_caps_and_drops_oldest() {
        let mut buf = ReplayBuffer::new(3);
        for arm in 0..5 {
            buf.push(WmExample::from_trace(&constant_trace(arm % 2, 4), 2).unwrap());
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.get(0).actions[0], 0);
        assert_eq!(buf.get(2).actions[0], 0);
    }

    #[test]
    fn trainer_round_reduces_nll_on_repetitive_data() {
        let mut rng = SplitRng::new(4);
        let wm = WorldModel::new(4, 8, 1, &mut rng);
        let mut trainer = WmTrainer::new(wm, 1e-2, 100, 4);
        for _ in 0..12 {
            trainer.push_trace(&constant_trace(2, 20)).unwrap();
        }
        let first = trainer.train_round(12, &mut rng.child(1)).unwrap().unwrap();
        let mut last = first;
        for i in 0..10 {
            last = trainer.train_round(12, &mut rng.child(2 + i)).unwrap().unwrap();
        }
        assert!(last < first, "nll {first} -> {last}");
    }

    #[test]
    fn rejects_out_of_range_actions() {
        assert!(WmExample::from_trace(&constant_trace(9, 5), 4).is_err());
    }
}
