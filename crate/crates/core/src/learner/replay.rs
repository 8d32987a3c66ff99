//! Fixed-capacity FIFO replay storage with uniform sampling.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    /// Slot the next push overwrites once the buffer is full.
    cursor: usize,
}

impl<T> ReplayBuffer<T> {
    /// # Panics
    /// If `capacity` is zero.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest item when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Storage slot `slot` (not insertion order).
    pub fn slot(&self, slot: usize) -> Option<&T> {
        self.items.get(slot)
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let (newer, older) = self.items.split_at(self.cursor);
        older.iter().chain(newer)
    }

    /// `n` slots drawn uniformly with replacement.
    pub fn sample_slots(&self, n: usize, rng: &mut impl Rng) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Vec<&'a T> {
        self.sample_slots(n, rng).into_iter().map(|i| &self.items[i]).collect()
    }
}
