use crate::Pair;

/// Default capacity of a point-to-point edge buffer.
pub const DEFAULT_BUFFER_SIZE: usize = 128;

/// Fixed-capacity buffer of walk edges bound for one neighbor rank.
/// An empty buffer on the wire is the exit marker.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MessageBuffer {
    capacity: usize,
    entries: Vec<Pair>,
}

impl MessageBuffer {
    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self {
            capacity,
            entries: Vec::with_capacity(capacity),
        }
    }

    /// Zero-length message.
    pub fn exit_marker() -> Self {
        Self::default()
    }

    pub fn from_entries(capacity: usize, entries: Vec<Pair>) -> Self {
        assert!(entries.len() <= capacity, "buffer overfilled");
        Self { capacity, entries }
    }

    /// Appends an entry; returns it back when the buffer is full.
    pub fn push(&mut self, pair: Pair) -> Result<(), Pair> {
        if self.is_full() {
            return Err(pair);
        }
        self.entries.push(pair);
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn entries(&self) -> &[Pair] {
        &self.entries
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn into_entries(self) -> Vec<Pair> {
        self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_and_flush() {
        let mut b = MessageBuffer::with_capacity(2);
        assert!(b.push((0, 1)).is_ok());
        assert!(b.push((1, 2)).is_ok());
        assert!(b.is_full());
        assert_eq!(b.push((2, 3)), Err((2, 3)));
        b.clear();
        assert_eq!(b.len(), 0);
        assert!(MessageBuffer::exit_marker().is_empty());
    }
}
