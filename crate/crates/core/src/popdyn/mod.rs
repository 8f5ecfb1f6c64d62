//! Popularity dynamics: per-period interaction counts, discounted
//! coarse popularity, cross-item percentiles, and the coarse/fine
//! percentile-window lookups that feed the item encoder.
//!
//! Tables are computed once over the full log. Freedom from time
//! leakage is enforced at lookup time: a window for a query at time `t`
//! only reads periods that ended at least `offset` fine periods before
//! `t`'s own fine period.

mod cache;

pub use cache::{load_pop_cache, save_pop_cache};

use crate::encoders::encode_percentile_k;
use crate::error::{Error, Result};
use crate::ingest::InteractionDataset;

const SECS_PER_DAY: i64 = 86_400;
const SECS_PER_WEEK: i64 = 7 * SECS_PER_DAY;

/// How timestamps map to coarse/fine period indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BucketingKind {
    /// Fixed-width periods anchored at the dataset's minimum timestamp
    /// (timezone-free, the default).
    FixedWidth,
    /// Calendar buckets: ISO weeks (fine) and calendar months (coarse),
    /// both UTC.
    Calendar,
}

/// Period layout. Fine and coarse periods are half-open intervals
/// `[start, end)`; an event exactly on a boundary belongs to the later
/// period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TimeBucketing {
    pub kind: BucketingKind,
    /// Dataset minimum timestamp.
    pub origin: i64,
    /// Seconds per fine period (fixed-width mode).
    pub fine_len: i64,
    /// Coarse period = this many fine periods (fixed-width mode).
    pub coarse_fine_ratio: u32,
    /// Monday 00:00 UTC of the origin's week (calendar mode).
    week_anchor: i64,
    /// `(year, month)` of the origin, encoded as `year*12 + month0`
    /// (calendar mode).
    origin_month: i64,
}

impl TimeBucketing {
    /// Fixed-width bucketing with explicit period lengths.
    pub fn fixed(origin: i64, fine_len: i64, coarse_fine_ratio: u32) -> Result<Self> {
        if fine_len <= 0 || coarse_fine_ratio == 0 {
            return Err(Error::config(format!(
                "bucketing needs fine_len > 0 and ratio > 0, got {fine_len}, {coarse_fine_ratio}"
            )));
        }
        Ok(TimeBucketing {
            kind: BucketingKind::FixedWidth,
            origin,
            fine_len,
            coarse_fine_ratio,
            week_anchor: 0,
            origin_month: 0,
        })
    }

    /// 7-day fine periods, 28-day coarse periods.
    pub fn fixed_default(origin: i64) -> Self {
        Self::fixed(origin, SECS_PER_WEEK, 4).expect("default bucketing is valid")
    }

    /// ISO weeks / calendar months, UTC.
    pub fn calendar(origin: i64) -> Result<Self> {
        use chrono::{Datelike, TimeZone, Utc};
        let dt = chrono::DateTime::from_timestamp(origin, 0)
            .ok_or_else(|| Error::config(format!("timestamp {origin} out of range")))?;
        let date = dt.date_naive();
        let days_from_monday = date.weekday().num_days_from_monday() as i64;
        let week_start = date - chrono::Duration::days(days_from_monday);
        let week_anchor = Utc
            .from_utc_datetime(&week_start.and_hms_opt(0, 0, 0).unwrap())
            .timestamp();
        let origin_month = date.year() as i64 * 12 + (date.month0() as i64);
        Ok(TimeBucketing {
            kind: BucketingKind::Calendar,
            origin,
            fine_len: SECS_PER_WEEK,
            coarse_fine_ratio: 4,
            week_anchor,
            origin_month,
        })
    }

    pub(crate) fn from_raw(
        kind: BucketingKind,
        origin: i64,
        fine_len: i64,
        coarse_fine_ratio: u32,
    ) -> Result<Self> {
        match kind {
            BucketingKind::FixedWidth => Self::fixed(origin, fine_len, coarse_fine_ratio),
            BucketingKind::Calendar => Self::calendar(origin),
        }
    }

    /// Fine period index of a timestamp (can be negative before the
    /// origin).
    pub fn fine_index(&self, t: i64) -> i64 {
        match self.kind {
            BucketingKind::FixedWidth => (t - self.origin).div_euclid(self.fine_len),
            BucketingKind::Calendar => (t - self.week_anchor).div_euclid(SECS_PER_WEEK),
        }
    }

    /// Coarse period index of a timestamp.
    pub fn coarse_index(&self, t: i64) -> i64 {
        match self.kind {
            BucketingKind::FixedWidth => {
                (t - self.origin).div_euclid(self.fine_len * self.coarse_fine_ratio as i64)
            }
            BucketingKind::Calendar => {
                use chrono::Datelike;
                let dt = chrono::DateTime::from_timestamp(t, 0)
                    .expect("timestamp out of chrono range");
                let date = dt.date_naive();
                date.year() as i64 * 12 + date.month0() as i64 - self.origin_month
            }
        }
    }

    /// Exclusive end instant of fine period `f`.
    pub fn fine_end(&self, f: i64) -> i64 {
        match self.kind {
            BucketingKind::FixedWidth => self.origin + (f + 1) * self.fine_len,
            BucketingKind::Calendar => self.week_anchor + (f + 1) * SECS_PER_WEEK,
        }
    }

    /// Largest coarse period fully ended at or before instant `t`.
    pub fn last_coarse_ended_by(&self, t: i64) -> i64 {
        self.coarse_index(t) - 1
    }
}

/// Percentile-table configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PopConfig {
    /// Discount factor γ for the coarse counts: 0 = current popularity,
    /// 1 = cumulative.
    pub gamma: f64,
    /// Rank against all items (never-seen ones counted as zero) instead
    /// of only the items active by the period.
    pub include_inactive: bool,
}

impl Default for PopConfig {
    fn default() -> Self {
        PopConfig {
            gamma: 0.5,
            include_inactive: false,
        }
    }
}

/// Window geometry for dynamics lookups: the last `m` coarse and `n`
/// fine percentile encodings of width `k`, ending `offset` fine periods
/// before the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct WindowParams {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub offset: i64,
}

impl WindowParams {
    pub fn new(k: usize, m: usize, n: usize, offset: i64) -> Result<Self> {
        if k < 2 {
            return Err(Error::config(format!("window k must be >= 2, got {k}")));
        }
        if m == 0 || n == 0 {
            return Err(Error::config(format!(
                "window sizes must be positive, got m={m}, n={n}"
            )));
        }
        if offset < 1 {
            return Err(Error::config(format!(
                "prediction-time offset must be >= 1 fine period, got {offset}"
            )));
        }
        Ok(WindowParams { k, m, n, offset })
    }

    /// Width of the concatenated feature row, `k(m+n)`.
    pub fn feature_width(&self) -> usize {
        self.k * (self.m + self.n)
    }
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            k: crate::encoders::PERCENTILE_DIM,
            m: 12,
            n: 4,
            offset: 1,
        }
    }
}

/// The coarse/fine percentile-encoding history feeding the item
/// encoder: exactly `m` coarse and `n` fine vectors of width `k`,
/// oldest first. Pre-origin (or never-active) periods are all-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsWindow {
    pub coarse: Vec<Vec<f64>>,
    pub fine: Vec<Vec<f64>>,
}

impl DynamicsWindow {
    /// Concatenated encoder input: coarse vectors then fine vectors,
    /// each oldest→newest.
    pub fn features<S: crate::numcore::Scalar>(&self) -> Vec<S> {
        self.coarse
            .iter()
            .chain(self.fine.iter())
            .flat_map(|v| v.iter().map(|&x| S::from_f64(x)))
            .collect()
    }
}

/// Per-item, per-period popularity statistics over the whole log:
/// raw counts, discounted coarse values, and cross-item percentiles.
/// Immutable after build; concurrent reads are safe.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityTable {
    pub bucketing: TimeBucketing,
    pub config: PopConfig,
    pub n_items: usize,
    pub n_fine: usize,
    pub n_coarse: usize,
    /// `c_b(v_j^t)`: raw counts per fine period, item-major.
    fine_counts: Vec<u32>,
    /// `c_a(v_j^m)`: raw counts per coarse period, item-major.
    coarse_counts: Vec<u32>,
    /// Discounted coarse popularity `a_j^t`, item-major.
    discounted: Vec<f64>,
    /// Percentiles of `a_j^t` in [0, 100]; -1 marks not-yet-active.
    pct_coarse: Vec<f32>,
    /// Percentiles of `b_j^t`; -1 marks not-yet-active.
    pct_fine: Vec<f32>,
    /// First fine/coarse period with an interaction (`i64::MAX` never).
    active_from_fine: Vec<i64>,
    active_from_coarse: Vec<i64>,
}

impl PopularityTable {
    /// Count, discount, and rank the full log.
    pub fn build(
        ds: &InteractionDataset,
        bucketing: TimeBucketing,
        config: PopConfig,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.gamma) {
            return Err(Error::config(format!(
                "discount factor gamma must be in [0, 1], got {}",
                config.gamma
            )));
        }
        if ds.n_interactions() == 0 {
            return Err(Error::data("cannot build popularity table: empty dataset"));
        }
        let n_items = ds.n_items();
        let max_t = ds.max_timestamp();
        let n_fine = (bucketing.fine_index(max_t) + 1).max(1) as usize;
        let n_coarse = (bucketing.coarse_index(max_t) + 1).max(1) as usize;

        let mut fine_counts = vec![0u32; n_items * n_fine];
        let mut coarse_counts = vec![0u32; n_items * n_coarse];
        let mut active_from_fine = vec![i64::MAX; n_items];
        let mut active_from_coarse = vec![i64::MAX; n_items];
        for seq in &ds.sequences {
            for &(item, t) in seq {
                let j = item as usize;
                let f = bucketing.fine_index(t);
                let c = bucketing.coarse_index(t);
                debug_assert!(f >= 0 && c >= 0, "event before bucketing origin");
                fine_counts[j * n_fine + f as usize] += 1;
                coarse_counts[j * n_coarse + c as usize] += 1;
                active_from_fine[j] = active_from_fine[j].min(f);
                active_from_coarse[j] = active_from_coarse[j].min(c);
            }
        }

        let discounted = discounted_coarse(&coarse_counts, n_items, n_coarse, config.gamma)?;

        let mut table = PopularityTable {
            bucketing,
            config,
            n_items,
            n_fine,
            n_coarse,
            fine_counts,
            coarse_counts,
            discounted,
            pct_coarse: vec![-1.0; n_items * n_coarse],
            pct_fine: vec![-1.0; n_items * n_fine],
            active_from_fine,
            active_from_coarse,
        };
        table.fill_percentiles();
        Ok(table)
    }

    fn fill_percentiles(&mut self) {
        for p in 0..self.n_coarse {
            let col = percentiles_over(
                (0..self.n_items).map(|j| self.discounted[j * self.n_coarse + p]),
                |j| self.active_from_coarse[j] <= p as i64,
                self.n_items,
                self.config.include_inactive,
            );
            for (j, pct) in col {
                self.pct_coarse[j * self.n_coarse + p] = pct as f32;
            }
        }
        for p in 0..self.n_fine {
            let col = percentiles_over(
                (0..self.n_items).map(|j| self.fine_counts[j * self.n_fine + p] as f64),
                |j| self.active_from_fine[j] <= p as i64,
                self.n_items,
                self.config.include_inactive,
            );
            for (j, pct) in col {
                self.pct_fine[j * self.n_fine + p] = pct as f32;
            }
        }
    }

    pub fn fine_count(&self, item: u32, period: usize) -> u32 {
        self.fine_counts[item as usize * self.n_fine + period]
    }

    pub fn coarse_count(&self, item: u32, period: usize) -> u32 {
        self.coarse_counts[item as usize * self.n_coarse + period]
    }

    /// Discounted coarse popularity `a_j^t`.
    pub fn discounted_at(&self, item: u32, period: usize) -> f64 {
        self.discounted[item as usize * self.n_coarse + period]
    }

    /// Coarse percentile `P(a_j^t)`, `None` before the item's first
    /// interaction.
    pub fn pct_coarse_at(&self, item: u32, period: usize) -> Option<f64> {
        let v = self.pct_coarse[item as usize * self.n_coarse + period];
        (v >= 0.0).then_some(v as f64)
    }

    /// Fine percentile `P(b_j^t)`, `None` before the item's first
    /// interaction.
    pub fn pct_fine_at(&self, item: u32, period: usize) -> Option<f64> {
        let v = self.pct_fine[item as usize * self.n_fine + period];
        (v >= 0.0).then_some(v as f64)
    }

    /// Global interaction count of an item over its training slice,
    /// used by the MostPop baseline (counts all periods here; the
    /// baseline restricts to training events itself).
    pub fn total_count(&self, item: u32) -> u64 {
        (0..self.n_fine)
            .map(|p| self.fine_count(item, p) as u64)
            .sum()
    }

    /// Fine period a query at `t_query` is allowed to see up to
    /// (inclusive), under the given offset.
    pub fn query_fine(&self, t_query: i64, offset: i64) -> i64 {
        self.bucketing.fine_index(t_query) - offset
    }

    /// The dynamics window for `item` at query time `t_query`: coarse
    /// periods end with the last coarse period fully contained in what
    /// the fine horizon reveals, fine periods end `offset` fine periods
    /// before the query's own. Unknown items (`None`) and pre-origin or
    /// pre-activity periods yield all-zero vectors — a cold item, not a
    /// failure.
    pub fn dynamics_at(&self, item: Option<u32>, t_query: i64, wp: &WindowParams) -> DynamicsWindow {
        let f_end = self.query_fine(t_query, wp.offset);
        self.dynamics_at_fine(item, f_end, wp)
    }

    /// Same as [`PopularityTable::dynamics_at`] but addressed directly
    /// by the last visible fine period (callers use this for caching:
    /// the window is a pure function of `(item, f_end)`).
    pub fn dynamics_at_fine(
        &self,
        item: Option<u32>,
        f_end: i64,
        wp: &WindowParams,
    ) -> DynamicsWindow {
        let c_end = self
            .bucketing
            .last_coarse_ended_by(self.bucketing.fine_end(f_end));
        let zero = || vec![0.0; wp.k];
        let coarse: Vec<Vec<f64>> = (0..wp.m as i64)
            .map(|i| {
                let p = c_end - (wp.m as i64 - 1) + i;
                match item {
                    Some(j) if (0..self.n_coarse as i64).contains(&p) => self
                        .pct_coarse_at(j, p as usize)
                        .map(|pct| encode_percentile_k(pct, wp.k))
                        .unwrap_or_else(zero),
                    _ => zero(),
                }
            })
            .collect();
        let fine: Vec<Vec<f64>> = (0..wp.n as i64)
            .map(|i| {
                let p = f_end - (wp.n as i64 - 1) + i;
                match item {
                    Some(j) if (0..self.n_fine as i64).contains(&p) => self
                        .pct_fine_at(j, p as usize)
                        .map(|pct| encode_percentile_k(pct, wp.k))
                        .unwrap_or_else(zero),
                    _ => zero(),
                }
            })
            .collect();
        DynamicsWindow { coarse, fine }
    }

    pub(crate) fn raw_parts(&self) -> RawParts<'_> {
        RawParts {
            fine_counts: &self.fine_counts,
            coarse_counts: &self.coarse_counts,
            discounted: &self.discounted,
            pct_coarse: &self.pct_coarse,
            pct_fine: &self.pct_fine,
            active_from_fine: &self.active_from_fine,
            active_from_coarse: &self.active_from_coarse,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_raw_parts(
        bucketing: TimeBucketing,
        config: PopConfig,
        n_items: usize,
        n_fine: usize,
        n_coarse: usize,
        fine_counts: Vec<u32>,
        coarse_counts: Vec<u32>,
        discounted: Vec<f64>,
        pct_coarse: Vec<f32>,
        pct_fine: Vec<f32>,
        active_from_fine: Vec<i64>,
        active_from_coarse: Vec<i64>,
    ) -> Self {
        PopularityTable {
            bucketing,
            config,
            n_items,
            n_fine,
            n_coarse,
            fine_counts,
            coarse_counts,
            discounted,
            pct_coarse,
            pct_fine,
            active_from_fine,
            active_from_coarse,
        }
    }
}

/// Memoized window-feature rows, keyed by `(item, last visible fine
/// period)` — the window is a pure function of that pair. Single-owner
/// use (training loop); evaluation recomputes windows directly.
type CachedRows<S> = std::collections::HashMap<(u32, i64), std::rc::Rc<Vec<S>>>;

pub struct FeatureCache<'a, S: crate::numcore::Scalar> {
    table: &'a PopularityTable,
    wp: WindowParams,
    cache: std::cell::RefCell<CachedRows<S>>,
    zero: std::rc::Rc<Vec<S>>,
}

impl<'a, S: crate::numcore::Scalar> FeatureCache<'a, S> {
    pub fn new(table: &'a PopularityTable, wp: WindowParams) -> Self {
        let zero = std::rc::Rc::new(vec![S::zero(); wp.feature_width()]);
        FeatureCache {
            table,
            wp,
            cache: Default::default(),
            zero,
        }
    }

    pub fn window_params(&self) -> &WindowParams {
        &self.wp
    }

    pub fn features(&self, item: Option<u32>, t_query: i64) -> std::rc::Rc<Vec<S>> {
        match item {
            None => self.zero.clone(),
            Some(j) => {
                let f_end = self.table.query_fine(t_query, self.wp.offset);
                self.cache
                    .borrow_mut()
                    .entry((j, f_end))
                    .or_insert_with(|| {
                        std::rc::Rc::new(
                            self.table.dynamics_at_fine(Some(j), f_end, &self.wp).features(),
                        )
                    })
                    .clone()
            }
        }
    }
}

pub(crate) struct RawParts<'a> {
    pub fine_counts: &'a [u32],
    pub coarse_counts: &'a [u32],
    pub discounted: &'a [f64],
    pub pct_coarse: &'a [f32],
    pub pct_fine: &'a [f32],
    pub active_from_fine: &'a [i64],
    pub active_from_coarse: &'a [i64],
}

/// `a_j^t = Σ_{m≤t} γ^{t-m} c_a(v_j^m)`, computed by the incremental
/// recurrence `a_j^t = γ·a_j^{t-1} + c_a(v_j^t)`.
pub fn discounted_coarse(
    coarse_counts: &[u32],
    n_items: usize,
    n_coarse: usize,
    gamma: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::config(format!(
            "discount factor gamma must be in [0, 1], got {gamma}"
        )));
    }
    let mut out = vec![0.0f64; n_items * n_coarse];
    for j in 0..n_items {
        let mut acc = 0.0f64;
        for p in 0..n_coarse {
            acc = gamma * acc + coarse_counts[j * n_coarse + p] as f64;
            out[j * n_coarse + p] = acc;
        }
    }
    Ok(out)
}

/// Mid-rank percentiles of one period's value column. Returns
/// `(item, percentile)` for every participating item that is active;
/// items outside the `active` predicate never receive a percentile.
/// With `include_inactive`, inactive items join the reference
/// distribution with value 0 but still get no percentile themselves.
fn percentiles_over<I>(
    values: I,
    active: impl Fn(usize) -> bool,
    n_items: usize,
    include_inactive: bool,
) -> Vec<(usize, f64)>
where
    I: Iterator<Item = f64>,
{
    let mut participants: Vec<(f64, usize)> = Vec::new();
    for (j, v) in values.enumerate().take(n_items) {
        if active(j) {
            participants.push((v, j));
        } else if include_inactive {
            participants.push((0.0, usize::MAX)); // reference-only
        }
    }
    let n = participants.len();
    if n == 0 {
        return Vec::new();
    }
    participants.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let denom = (n - 1).max(1) as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && participants[j].0 == participants[i].0 {
            j += 1;
        }
        // tie group [i, j): smaller = i, ties excluding self = j-i-1
        let pct = 100.0 * (i as f64 + 0.5 * (j - i - 1) as f64) / denom;
        for &(_, item) in &participants[i..j] {
            if item != usize::MAX {
                out.push((item, pct));
            }
        }
        i = j;
    }
    out.sort_by_key(|&(j, _)| j);
    out
}
