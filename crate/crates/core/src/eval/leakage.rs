//! Time-leakage audit: how much of each test item's training signal
//! comes from the future.

use crate::ingest::InteractionDataset;

#[derive(Debug, Clone, serde::Serialize)]
pub struct LeakageReport {
    pub test_interactions: usize,
    /// Mean number of training interactions of the test item dated
    /// strictly after the test interaction.
    pub mean_future_count: f64,
    /// Mean proportion of the test item's training interactions that
    /// are in its future (0 when the item has none).
    pub mean_future_proportion: f64,
}

/// For each test interaction, count training interactions of the same
/// item with strictly later timestamps.
pub fn leakage_audit(ds: &InteractionDataset) -> LeakageReport {
    // item → sorted training timestamps
    let mut train_times: Vec<Vec<i64>> = vec![Vec::new(); ds.n_items()];
    for user in 0..ds.n_users() {
        for &(item, t) in ds.train_slice(user) {
            train_times[item as usize].push(t);
        }
    }
    for times in &mut train_times {
        times.sort_unstable();
    }
    let mut n = 0usize;
    let mut sum_count = 0.0f64;
    let mut sum_prop = 0.0f64;
    for user in 0..ds.n_users() {
        let Some(split) = ds.splits[user] else {
            continue;
        };
        let (item, t_test) = ds.sequences[user][split.test];
        let times = &train_times[item as usize];
        let future = times.len() - times.partition_point(|&t| t <= t_test);
        n += 1;
        sum_count += future as f64;
        if !times.is_empty() {
            sum_prop += future as f64 / times.len() as f64;
        }
    }
    LeakageReport {
        test_interactions: n,
        mean_future_count: if n > 0 { sum_count / n as f64 } else { 0.0 },
        mean_future_proportion: if n > 0 { sum_prop / n as f64 } else { 0.0 },
    }
}
