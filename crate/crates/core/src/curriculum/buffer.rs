use std::collections::VecDeque;

use crate::conllu::Batch;
use crate::error::{Error, Result};

/// A batch together with its loss at the time it was queued. The loss goes
/// stale once the model is updated; it is never refreshed.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredBatch<'a> {
    pub batch: Batch<'a>,
    pub recorded_loss: f64,
    pub push_step: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueueCounters {
    pub pushes: u64,
    pub pops: u64,
    pub evictions: u64,
}

/// One bounded FIFO queue per task. Pushing onto a full queue evicts its
/// oldest entry.
#[derive(Clone, Debug)]
pub struct Buffer<'a> {
    queues: Vec<VecDeque<ScoredBatch<'a>>>,
    counters: Vec<QueueCounters>,
    capacity: usize,
}

impl<'a> Buffer<'a> {
    pub fn new(n_tasks: usize, capacity: usize) -> Result<Self> {
        if n_tasks == 0 || capacity == 0 {
            return Err(Error::invalid(
                "buffer needs at least one task and positive capacity",
            ));
        }
        Ok(Buffer {
            queues: (0..n_tasks)
                .map(|_| VecDeque::with_capacity(capacity))
                .collect(),
            counters: vec![QueueCounters::default(); n_tasks],
            capacity,
        })
    }

    pub fn n_tasks(&self) -> usize {
        self.queues.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, task: usize, item: ScoredBatch<'a>) {
        let queue = &mut self.queues[task];
        if queue.len() == self.capacity {
            queue.pop_front();
            self.counters[task].evictions += 1;
        }
        queue.push_back(item);
        self.counters[task].pushes += 1;
    }

    pub fn pop(&mut self, task: usize) -> Option<ScoredBatch<'a>> {
        let item = self.queues[task].pop_front();
        if item.is_some() {
            self.counters[task].pops += 1;
        }
        item
    }

    pub fn queue(&self, task: usize) -> &VecDeque<ScoredBatch<'a>> {
        &self.queues[task]
    }

    pub fn counters(&self, task: usize) -> QueueCounters {
        self.counters[task]
    }

    /// Recorded loss at the front of each queue, `None` for empty queues.
    pub fn front_losses(&self) -> Vec<Option<f64>> {
        self.queues
            .iter()
            .map(|q| q.front().map(|b| b.recorded_loss))
            .collect()
    }

    pub fn total_queued(&self) -> usize {
        self.queues.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_queued() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(loss: f64, step: u64) -> ScoredBatch<'static> {
        ScoredBatch {
            batch: Batch {
                task_id: "t",
                sentences: Vec::new(),
            },
            recorded_loss: loss,
            push_step: step,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = Buffer::new(2, 2).unwrap();
        for s in 0..5 {
            buf.push(0, item(s as f64, s));
        }
        let steps: Vec<u64> = buf.queue(0).iter().map(|b| b.push_step).collect();
        assert_eq!(steps, [3, 4]);
        assert_eq!(buf.counters(0).evictions, 3);
        assert_eq!(buf.front_losses(), [Some(3.0), None]);
        assert_eq!(buf.pop(0).unwrap().push_step, 3);
        assert!(buf.pop(1).is_none());
        assert_eq!(buf.counters(1), QueueCounters::default());
    }

    proptest::proptest! {
        #[test]
        fn conservation(ops in proptest::collection::vec((0usize..3, proptest::bool::ANY), 0..300), cap in 1usize..5) {
            let mut buf = Buffer::new(3, cap).unwrap();
            for (i, (task, push)) in ops.into_iter().enumerate() {
                if push {
                    buf.push(task, item(1.0, i as u64));
                } else {
                    buf.pop(task);
                }
                for t in 0..3 {
                    let c = buf.counters(t);
                    proptest::prop_assert_eq!((c.pushes - c.pops - c.evictions) as usize, buf.queue(t).len());
                    proptest::prop_assert!(buf.queue(t).len() <= cap);
                }
            }
        }
    }
}
