use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_input, Result};
use crate::ingest::LabeledDataset;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Partition {
    #[default]
    Iid,
    /// Each client sees at most `labels_per_client` of the dataset's classes.
    LabelLimited { labels_per_client: usize },
}

/// Splits `0..n` into `k` contiguous chunks whose sizes differ by at most one.
fn even_chunks(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let (base, extra) = (items.len() / k, items.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for c in 0..k {
        let len = base + usize::from(c < extra);
        out.push(items[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Assigns sample indices of `ds` to `k` clients.
///
/// Label-limited partitioning shuffles the class order, gives client `c` the
/// classes `perm[(c·L + j) mod C]` for `j < L`, and splits each class's
/// samples evenly among the clients holding it. Classes that no client holds
/// (possible when `k·L < C`) are dropped.
pub fn partition<R: Rng>(ds: &LabeledDataset, k: usize, scheme: Partition, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    ensure_input!(k >= 1, "need at least one client");
    ensure_input!(ds.len() >= k, "{} samples cannot fill {k} clients", ds.len());
    match scheme {
        Partition::Iid => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(rng);
            Ok(even_chunks(&idx, k))
        }
        Partition::LabelLimited { labels_per_client } => {
            let (Some(classes), Some(ids)) = (ds.num_classes(), ds.class_ids()) else {
                return Err(crate::Error::InvalidInput(
                    "label-limited partitioning needs a classification dataset".into(),
                ));
            };
            ensure_input!(labels_per_client >= 1, "labels_per_client must be at least 1");
            ensure_input!(
                labels_per_client <= classes,
                "labels_per_client = {labels_per_client} exceeds the {classes} classes"
            );
            let mut perm: Vec<usize> = (0..classes).collect();
            perm.shuffle(rng);
            let mut holders = vec![Vec::new(); classes];
            for c in 0..k {
                for j in 0..labels_per_client {
                    holders[perm[(c * labels_per_client + j) % classes]].push(c);
                }
            }
            let mut by_class = vec![Vec::new(); classes];
            for (i, &y) in ids.iter().enumerate() {
                by_class[y].push(i);
            }
            let mut shards = vec![Vec::new(); k];
            for (class, mut samples) in by_class.into_iter().enumerate() {
                if holders[class].is_empty() {
                    continue;
                }
                samples.shuffle(rng);
                for (chunk, &client) in even_chunks(&samples, holders[class].len()).into_iter().zip(&holders[class]) {
                    shards[client].extend(chunk);
                }
            }
            Ok(shards)
        }
    }
}
