//! Base-station energy accounting.
//!
//! All quantities are integer milliunits, so traces are bit-exact and the
//! conservation audit is an equality, not a tolerance.

mod experiments;

pub use experiments::{
    lifetime_vs_energy, run_lifetime_detailed, run_lifetime_experiment, traffic_vs_users,
    ExperimentError, LifetimeRun, QUERY_ATTRIBUTE,
};

use crate::protocol::Tick;

/// Linear radio cost model plus a flat per-verification CPU cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnergyParams {
    pub initial_energy: u64,
    pub cost_fixed_tx: u64,
    pub cost_per_byte: u64,
    pub verify_cost: u64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            initial_energy: 1_000_000,
            cost_fixed_tx: 100,
            cost_per_byte: 1,
            verify_cost: 10,
        }
    }
}

impl EnergyParams {
    /// A denied request must cost less than the smallest response the
    /// station could send (one reading of `reading_packet_size` bytes).
    pub fn validate(&self, reading_packet_size: u64) -> Result<(), String> {
        let min_response = tx_cost(self, reading_packet_size);
        if self.verify_cost >= min_response {
            return Err(format!(
                "energy.verify ({}) must be below the cost of the smallest response ({min_response})",
                self.verify_cost
            ));
        }
        Ok(())
    }
}

pub fn tx_cost(params: &EnergyParams, packet_bytes: u64) -> u64 {
    params
        .cost_fixed_tx
        .saturating_add(params.cost_per_byte.saturating_mul(packet_bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChargeKind {
    Verify,
    Transmit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Charge {
    pub tick: Tick,
    pub kind: ChargeKind,
    pub requested: u64,
    /// What was actually drawn; less than `requested` only on the charge
    /// that empties the battery.
    pub applied: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyState {
    initial: u64,
    remaining: u64,
    log: Vec<Charge>,
}

impl EnergyState {
    pub fn new(initial: u64) -> Self {
        EnergyState {
            initial,
            remaining: initial,
            log: Vec::new(),
        }
    }

    pub fn initial(&self) -> u64 {
        self.initial
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }

    pub fn is_depleted(&self) -> bool {
        self.remaining == 0
    }

    pub fn charges(&self) -> &[Charge] {
        &self.log
    }

    /// Draws `amount`, saturating at zero. Returns true if the full amount
    /// was available.
    pub fn charge(&mut self, tick: Tick, kind: ChargeKind, amount: u64) -> bool {
        let applied = amount.min(self.remaining);
        self.remaining -= applied;
        self.log.push(Charge {
            tick,
            kind,
            requested: amount,
            applied,
        });
        applied == amount
    }

    /// `initial - remaining` equals the sum of every logged draw.
    pub fn audit(&self) -> bool {
        let drawn: u128 = self.log.iter().map(|c| u128::from(c.applied)).sum();
        u128::from(self.initial - self.remaining) == drawn
    }
}

/// Remaining energy per tick for one experiment run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyTrace {
    /// `series[t]` is the energy left after tick `t`; `series[0]` is the
    /// initial energy.
    pub series: Vec<u64>,
    /// Number of ticks the station served with every operation fully
    /// powered. When the battery runs out exactly at the end of a tick that
    /// tick counts; when it runs out part-way through, it does not.
    pub lifetime: Tick,
    /// First tick whose series value is 0, if the battery ran out.
    pub depleted_at: Option<Tick>,
}

impl EnergyTrace {
    pub fn is_non_increasing(&self) -> bool {
        self.series.windows(2).all(|w| w[1] <= w[0])
    }

    /// Checks the lifetime against the series it was derived from.
    pub fn is_consistent(&self) -> bool {
        let first_zero = self.series.iter().position(|&e| e == 0).map(|t| t as Tick);
        if first_zero != self.depleted_at {
            return false;
        }
        match self.depleted_at {
            Some(d) => self.lifetime == d || self.lifetime + 1 == d,
            None => self.lifetime + 1 == self.series.len() as Tick,
        }
    }
}
