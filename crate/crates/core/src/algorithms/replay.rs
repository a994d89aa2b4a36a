use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Batch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayItem {
    pub input: Vec<f64>,
    pub label: usize,
    /// 1-based task the item came from.
    pub task_id: usize,
}

/// Fixed-capacity sample memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    pub capacity: usize,
    pub items: Vec<ReplayItem>,
    /// Items offered so far, stored or not.
    pub seen_count: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            seen_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Up to `n` distinct items drawn uniformly, as a classification batch.
    pub fn sample_batch<R: Rng>(&self, n: usize, rng: &mut R) -> Option<Batch> {
        if self.items.is_empty() || n == 0 {
            return None;
        }
        let take = n.min(self.items.len());
        let idx: Vec<usize> = sample(rng, self.items.len(), take).into_vec();
        Some(self.batch_of(&idx))
    }

    /// The whole buffer as a batch, in storage order.
    pub fn to_batch(&self) -> Option<Batch> {
        if self.items.is_empty() {
            return None;
        }
        Some(self.batch_of(&(0..self.items.len()).collect::<Vec<_>>()))
    }

    fn batch_of(&self, idx: &[usize]) -> Batch {
        let dim = self.items[0].input.len();
        let mut inputs = Vec::with_capacity(idx.len() * dim);
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            inputs.extend_from_slice(&self.items[i].input);
            labels.push(self.items[i].label);
        }
        Batch::classification(dim, inputs, labels).expect("buffer items share one input width")
    }
}

/// Classic reservoir sampling: once the buffer is full, the `n`-th offered
/// item replaces a uniformly chosen resident with probability `capacity / n`.
pub fn reservoir_insert<R: Rng>(buffer: &mut ReplayBuffer, item: ReplayItem, rng: &mut R) {
    buffer.seen_count += 1;
    if buffer.capacity == 0 {
        return;
    }
    if buffer.items.len() < buffer.capacity {
        buffer.items.push(item);
        return;
    }
    let j = rng.random_range(0..buffer.seen_count);
    if j < buffer.capacity {
        buffer.items[j] = item;
    }
}

/// Offers every sample of a labelled batch to the reservoir, in order.
pub fn reservoir_extend<R: Rng>(buffer: &mut ReplayBuffer, batch: &Batch, task_id: usize, rng: &mut R) -> Result<()> {
    let labels = batch
        .labels()
        .ok_or_else(|| Error::InvalidArgument("replay needs class labels".into()))?;
    for (i, &label) in labels.iter().enumerate() {
        let item = ReplayItem {
            input: batch.input(i).to_vec(),
            label,
            task_id,
        };
        reservoir_insert(buffer, item, rng);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn item(v: f64) -> ReplayItem {
        ReplayItem {
            input: vec![v],
            label: 0,
            task_id: 1,
        }
    }

    #[test]
    fn fills_before_replacing() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = ReplayBuffer::new(3);
        for i in 0..3 {
            reservoir_insert(&mut b, item(i as f64), &mut rng);
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.seen_count, 3);
        for i in 3..50 {
            reservoir_insert(&mut b, item(i as f64), &mut rng);
            assert_eq!(b.len(), 3);
        }
        assert_eq!(b.seen_count, 50);
    }

    #[test]
    fn zero_capacity_never_stores() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = ReplayBuffer::new(0);
        for i in 0..10 {
            reservoir_insert(&mut b, item(i as f64), &mut rng);
        }
        assert!(b.is_empty());
        assert_eq!(b.seen_count, 10);
        assert!(b.sample_batch(4, &mut rng).is_none());
    }

    #[test]
    fn sample_batch_is_distinct_and_capped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = ReplayBuffer::new(5);
        for i in 0..5 {
            reservoir_insert(&mut b, item(i as f64), &mut rng);
        }
        let batch = b.sample_batch(10, &mut rng).unwrap();
        assert_eq!(batch.len(), 5);
        let mut v: Vec<f64> = batch.inputs().to_vec();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }
}
