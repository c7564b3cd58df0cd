use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{MgsRecord, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::labels::NUM_LABELS;

/// Assigns every record to train or test, stratified by the 9-way label.
///
/// Per-label train counts are apportioned by largest remainder so that each
/// label's train count is the floor or ceiling of its exact share and the
/// total is within one record of `train_fraction * n`. Records are returned
/// in input order with `split` set.
pub fn assign_split(records: &[MgsRecord], spec: SplitSpec) -> Result<Vec<MgsRecord>> {
    if records.is_empty() {
        return Err(Error::InvalidInput("cannot split an empty corpus".into()));
    }
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }

    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); NUM_LABELS];
    for (i, r) in records.iter().enumerate() {
        groups[r.label.code()].push(i);
    }

    // floor shares, then hand out the remainder by largest fractional part
    let exact: Vec<f64> = groups.iter().map(|g| g.len() as f64 * spec.train_fraction).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let target = (records.len() as f64 * spec.train_fraction).round() as usize;
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..NUM_LABELS).filter(|&k| !groups[k].is_empty()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &k in order.iter().take(target.saturating_sub(assigned)) {
        if quota[k] < groups[k].len() {
            quota[k] += 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = vec![Split::Test; records.len()];
    for (k, group) in groups.iter_mut().enumerate() {
        group.shuffle(&mut rng);
        for &i in &group[..quota[k]] {
            split[i] = Split::Train;
        }
    }
    Ok(records
        .iter()
        .zip(split)
        .map(|(r, s)| MgsRecord {
            split: Some(s),
            ..r.clone()
        })
        .collect())
}

/// Stratified train/test partition; see [`assign_split`].
pub fn stratified_split(records: &[MgsRecord], spec: SplitSpec) -> Result<(Vec<MgsRecord>, Vec<MgsRecord>)> {
    let assigned = assign_split(records, spec)?;
    Ok(assigned.into_iter().partition(|r| r.split == Some(Split::Train)))
}
