//! Append-only log of per-round, per-client measurements.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub slot_index: usize,
    pub slot: String,
    pub round: u32,
    pub epoch: u32,
    pub client_index: usize,
    pub client: String,
    pub metric: String,
    pub value: f64,
}

impl MetricRow {
    /// `(method, slot, round, epoch, client, metric)` ordering key.
    pub fn sort_key(&self) -> (&str, usize, u32, u32, usize, &str) {
        (&self.method, self.slot_index, self.round, self.epoch, self.client_index, &self.metric)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    rows: Vec<MetricRow>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: MetricRow) -> Result<()> {
        if !row.value.is_finite() {
            return Err(Error::Numeric(format!("metric {} for client {} is not finite", row.metric, row.client)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: MetricsLog) {
        self.rows.extend(other.rows);
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows in canonical `(method, slot, round, epoch, client, metric)` order.
    pub fn sorted(&self) -> Vec<&MetricRow> {
        let mut rows: Vec<&MetricRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        rows
    }

    pub fn filter<'a>(&'a self, pred: impl Fn(&MetricRow) -> bool + 'a) -> impl Iterator<Item = &'a MetricRow> + 'a {
        self.rows.iter().filter(move |r| pred(r))
    }

    /// Value of `metric` for each client at the last round of `slot_index` where it was recorded.
    pub fn final_values(&self, method: &str, slot_index: usize, metric: &str) -> Vec<(usize, f64)> {
        let mut last: std::collections::BTreeMap<usize, (u32, f64)> = Default::default();
        for r in self.filter(|r| r.method == method && r.slot_index == slot_index && r.metric == metric) {
            let e = last.entry(r.client_index).or_insert((r.round, r.value));
            if r.round >= e.0 {
                *e = (r.round, r.value);
            }
        }
        last.into_iter().map(|(c, (_, v))| (c, v)).collect()
    }
}
