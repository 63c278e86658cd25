use std::collections::BTreeMap;

/// Discrete-event clock. Events fire in `(time, sequence)` order, so two
/// events scheduled for the same instant fire in scheduling order.
#[derive(Debug)]
pub struct SimClock<E> {
    now_us: u64,
    seq: u64,
    pending: BTreeMap<(u64, u64), E>,
}

impl<E> Default for SimClock<E> {
    fn default() -> Self {
        Self {
            now_us: 0,
            seq: 0,
            pending: BTreeMap::new(),
        }
    }
}

impl<E> SimClock<E> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    /// Schedules `event` at `at_us`, clamped to the present.
    pub fn schedule(&mut self, at_us: u64, event: E) {
        let at = at_us.max(self.now_us);
        self.pending.insert((at, self.seq), event);
        self.seq += 1;
    }

    pub fn schedule_in(&mut self, delay_us: u64, event: E) {
        self.schedule(self.now_us + delay_us, event);
    }

    /// Next event, advancing time to it.
    pub fn pop(&mut self) -> Option<(u64, E)> {
        let ((t, _), e) = self.pending.pop_first()?;
        self.now_us = t;
        Some((t, e))
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.pending.keys().next().map(|k| k.0)
    }

    /// Moves time forward without an event (never backwards).
    pub fn advance_to(&mut self, t_us: u64) {
        self.now_us = self.now_us.max(t_us);
    }

    pub fn is_idle(&self) -> bool {
        self.pending.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_then_sequence_order() {
        let mut c = SimClock::new();
        c.schedule(20, "late");
        c.schedule(10, "first");
        c.schedule(10, "second");
        assert_eq!(c.pop(), Some((10, "first")));
        assert_eq!(c.pop(), Some((10, "second")));
        c.schedule(5, "clamped");
        assert_eq!(c.pop(), Some((10, "clamped")));
        assert_eq!(c.pop(), Some((20, "late")));
        assert!(c.pop().is_none());
        assert_eq!(c.now_us(), 20);
    }
}
