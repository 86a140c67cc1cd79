use serde::{Deserialize, Serialize};

/// Element counts for one round.
///
/// `uplink` counts real values only; sparse indices are reported separately
/// in `index_overhead`. Broadcast payloads (the global model and any basis
/// shared by all clients) are counted once; per-client payloads are counted
/// once per recipient.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerDelta {
    pub uplink_per_client: Vec<u64>,
    pub uplink: u64,
    pub index_overhead: u64,
    pub downlink_broadcast: u64,
    pub downlink_per_client: Vec<u64>,
    pub downlink: u64,
}

impl LedgerDelta {
    pub fn new(k: usize) -> Self {
        Self {
            uplink_per_client: vec![0; k],
            downlink_per_client: vec![0; k],
            ..Default::default()
        }
    }

    /// Recomputes the `uplink` and `downlink` totals from their parts.
    pub fn finish(&mut self) {
        self.uplink = self.uplink_per_client.iter().sum();
        self.downlink = self.downlink_broadcast + self.downlink_per_client.iter().sum::<u64>();
    }

    pub fn total(&self) -> u64 {
        self.uplink + self.downlink
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    pub rounds: Vec<LedgerDelta>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub uplink: u64,
    pub index_overhead: u64,
    pub downlink: u64,
    pub downlink_broadcast: u64,
}

impl LedgerTotals {
    pub fn total(&self) -> u64 {
        self.uplink + self.downlink
    }
}

impl CommLedger {
    pub fn record(&mut self, delta: LedgerDelta) {
        self.rounds.push(delta);
    }

    /// Totals over the first `rounds` rounds.
    pub fn totals_through(&self, rounds: usize) -> LedgerTotals {
        self.rounds.iter().take(rounds).fold(LedgerTotals::default(), |acc, d| LedgerTotals {
            uplink: acc.uplink + d.uplink,
            index_overhead: acc.index_overhead + d.index_overhead,
            downlink: acc.downlink + d.downlink,
            downlink_broadcast: acc.downlink_broadcast + d.downlink_broadcast,
        })
    }

    pub fn totals(&self) -> LedgerTotals {
        self.totals_through(self.rounds.len())
    }
}
