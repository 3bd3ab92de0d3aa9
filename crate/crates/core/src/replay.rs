//! Replay cache shared by the TGS and the base stations.

use std::collections::BTreeSet;

use crate::error::Rejection;
use crate::protocol::{NetAddress, Principal, Tick};

pub const DEFAULT_CAPACITY: usize = 4096;

/// Remembers `(client, address, timestamp)` triples for as long as their
/// timestamp could still pass the skew check.
///
/// Entries are ordered by timestamp, so eviction of everything older than
/// `now - window` is a prefix removal. When the cache is full of entries
/// that are still inside the window it refuses new ones instead of evicting:
/// dropping a live entry would reopen a replay.
#[derive(Debug, Clone)]
pub struct ReplayCache {
    window: Tick,
    capacity: usize,
    entries: BTreeSet<(Tick, Principal, NetAddress)>,
}

impl ReplayCache {
    pub fn new(window: Tick, capacity: usize) -> Self {
        ReplayCache {
            window,
            capacity,
            entries: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn evict_expired(&mut self, now: Tick) {
        let Some(oldest_live) = now.checked_sub(self.window) else {
            return;
        };
        while let Some(first) = self.entries.first() {
            if first.0 >= oldest_live {
                break;
            }
            self.entries.pop_first();
        }
    }

    /// Records the triple, failing if it was already seen.
    ///
    /// Callers must have already rejected timestamps outside the skew window.
    pub fn check_and_insert(
        &mut self,
        client: &Principal,
        addr: NetAddress,
        timestamp: Tick,
        now: Tick,
    ) -> Result<(), Rejection> {
        self.evict_expired(now);
        let entry = (timestamp, client.clone(), addr);
        if self.entries.contains(&entry) {
            return Err(Rejection::ReplayDetected);
        }
        if self.entries.len() >= self.capacity {
            return Err(Rejection::ReplayCacheFull);
        }
        self.entries.insert(entry);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alice() -> Principal {
        Principal::new("alice", "WSN").unwrap()
    }

    #[test]
    fn second_insert_is_replay() {
        let mut cache = ReplayCache::new(5, 16);
        assert_eq!(
            cache.check_and_insert(&alice(), NetAddress(1), 10, 10),
            Ok(())
        );
        assert_eq!(
            cache.check_and_insert(&alice(), NetAddress(1), 10, 12),
            Err(Rejection::ReplayDetected)
        );
        // different address or timestamp is a different triple
        assert_eq!(
            cache.check_and_insert(&alice(), NetAddress(2), 10, 12),
            Ok(())
        );
        assert_eq!(
            cache.check_and_insert(&alice(), NetAddress(1), 11, 12),
            Ok(())
        );
    }

    #[test]
    fn entries_outside_window_are_evicted() {
        let mut cache = ReplayCache::new(5, 16);
        cache
            .check_and_insert(&alice(), NetAddress(1), 10, 10)
            .unwrap();
        cache.evict_expired(15);
        assert_eq!(cache.len(), 1);
        cache.evict_expired(16);
        assert!(cache.is_empty());
    }

    #[test]
    fn full_cache_refuses_rather_than_forgets() {
        let mut cache = ReplayCache::new(5, 2);
        cache
            .check_and_insert(&alice(), NetAddress(1), 10, 10)
            .unwrap();
        cache
            .check_and_insert(&alice(), NetAddress(1), 11, 11)
            .unwrap();
        assert_eq!(
            cache.check_and_insert(&alice(), NetAddress(1), 12, 12),
            Err(Rejection::ReplayCacheFull)
        );
        // once the window slides past the old entries there is room again
        assert_eq!(
            cache.check_and_insert(&alice(), NetAddress(1), 17, 17),
            Ok(())
        );
    }
}
