use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::{Dataset, Shard};
use crate::error::{Error, Result};
use crate::nn::Example;
use crate::seed::{self, Stream};

/// Class subset and shard size for one device under a non-IID scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeClasses {
    pub classes: Vec<usize>,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionSpec {
    /// Equal shards drawn uniformly without replacement; `per_node` defaults to `E / K`.
    Iid { per_node: Option<usize> },
    /// Uniform sampling with an explicit size per node.
    Sizes(Vec<usize>),
    /// Each node draws its size only from its own class subset.
    NonIid(Vec<NodeClasses>),
    /// Each node gets a uniformly random class subset whose size is uniform in
    /// `min_classes..=max_classes`, redrawn until every class is covered.
    RandomClasses {
        per_node: usize,
        min_classes: usize,
        max_classes: usize,
    },
}

impl PartitionSpec {
    pub fn iid() -> Self {
        PartitionSpec::Iid { per_node: None }
    }

    /// Random class subsets of size `2..=classes`.
    pub fn random_classes(per_node: usize, classes: usize) -> Self {
        PartitionSpec::RandomClasses {
            per_node,
            min_classes: 2.min(classes),
            max_classes: classes,
        }
    }
}

fn take_chunks(order: &[usize], sizes: &[usize], data: &Dataset) -> Vec<Shard> {
    let mut start = 0;
    sizes
        .iter()
        .enumerate()
        .map(|(owner, &n)| {
            let indices = order[start..start + n].to_vec();
            start += n;
            make_shard(owner, indices, data)
        })
        .collect()
}

fn make_shard(owner: usize, indices: Vec<usize>, data: &Dataset) -> Shard {
    let examples = indices.iter().map(|&i| data.examples()[i].clone()).collect();
    Shard {
        owner,
        indices,
        examples,
    }
}

fn uniform_sizes(data: &Dataset, sizes: &[usize], seed: u64) -> Result<Vec<Shard>> {
    let total: usize = sizes.iter().sum();
    if total > data.len() {
        return Err(Error::arg(format!(
            "requested {total} examples from a dataset of {}",
            data.len()
        )));
    }
    if let Some(node) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Partition {
            node,
            detail: "shard size must be at least 1".into(),
        });
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut seed::rng(seed, Stream::Partition, &[0]));
    Ok(take_chunks(&order, sizes, data))
}

fn class_limited(data: &Dataset, nodes: &[NodeClasses], seed: u64) -> Result<Vec<Shard>> {
    let c = data.class_count();
    let total: usize = nodes.iter().map(|n| n.size).sum();
    if total > data.len() {
        return Err(Error::arg(format!(
            "requested {total} examples from a dataset of {}",
            data.len()
        )));
    }
    let mut covered = BTreeSet::new();
    for (k, node) in nodes.iter().enumerate() {
        if node.classes.is_empty() {
            return Err(Error::Partition {
                node: k,
                detail: "empty class subset".into(),
            });
        }
        if node.size == 0 {
            return Err(Error::Partition {
                node: k,
                detail: "shard size must be at least 1".into(),
            });
        }
        if let Some(&bad) = node.classes.iter().find(|&&cls| cls >= c) {
            return Err(Error::Partition {
                node: k,
                detail: format!("class {bad} outside {c} classes"),
            });
        }
        covered.extend(node.classes.iter().copied());
    }
    if covered.len() != c {
        let missing: Vec<usize> = (0..c).filter(|x| !covered.contains(x)).collect();
        return Err(Error::arg(format!(
            "class subsets leave classes {missing:?} uncovered"
        )));
    }

    let mut used = vec![false; data.len()];
    let mut shards = Vec::with_capacity(nodes.len());
    for (k, node) in nodes.iter().enumerate() {
        let allowed: BTreeSet<usize> = node.classes.iter().copied().collect();
        let mut pool: Vec<usize> = (0..data.len())
            .filter(|&i| !used[i] && allowed.contains(&data.examples()[i].y))
            .collect();
        if pool.len() < node.size {
            return Err(Error::Partition {
                node: k,
                detail: format!(
                    "classes {:?} have {} unused examples, {} requested",
                    node.classes,
                    pool.len(),
                    node.size
                ),
            });
        }
        pool.shuffle(&mut seed::rng(seed, Stream::Partition, &[1, k as u64]));
        pool.truncate(node.size);
        pool.sort_unstable();
        for &i in &pool {
            used[i] = true;
        }
        shards.push(make_shard(k, pool, data));
    }
    Ok(shards)
}

/// Splits `data` into `k` disjoint shards. `seed` fully determines the result.
pub fn partition(data: &Dataset, k: usize, spec: &PartitionSpec, seed: u64) -> Result<Vec<Shard>> {
    if k == 0 {
        return Err(Error::arg("need at least one node"));
    }
    match spec {
        PartitionSpec::Iid { per_node } => {
            let n = per_node.unwrap_or(data.len() / k);
            if n == 0 {
                return Err(Error::Partition {
                    node: 0,
                    detail: format!("{} examples cannot fill {k} shards", data.len()),
                });
            }
            uniform_sizes(data, &vec![n; k], seed)
        }
        PartitionSpec::Sizes(sizes) => {
            if sizes.len() != k {
                return Err(Error::arg(format!("{} sizes for {k} nodes", sizes.len())));
            }
            uniform_sizes(data, sizes, seed)
        }
        PartitionSpec::NonIid(nodes) => {
            if nodes.len() != k {
                return Err(Error::arg(format!("{} class subsets for {k} nodes", nodes.len())));
            }
            class_limited(data, nodes, seed)
        }
        &PartitionSpec::RandomClasses {
            per_node,
            min_classes,
            max_classes,
        } => {
            let c = data.class_count();
            let hi = max_classes.min(c);
            if min_classes == 0 || min_classes > hi {
                return Err(Error::arg(format!(
                    "class subset size range {min_classes}..={max_classes} is empty for {c} classes"
                )));
            }
            let all: Vec<usize> = (0..c).collect();
            let mut rng = seed::rng(seed, Stream::Partition, &[2]);
            for _ in 0..100 {
                let nodes: Vec<NodeClasses> = (0..k)
                    .map(|_| {
                        let s = rng.random_range(min_classes..=hi);
                        let mut classes: Vec<usize> =
                            all.choose_multiple(&mut rng, s).copied().collect();
                        classes.sort_unstable();
                        NodeClasses {
                            classes,
                            size: per_node,
                        }
                    })
                    .collect();
                let covered: BTreeSet<usize> =
                    nodes.iter().flat_map(|n| n.classes.iter().copied()).collect();
                if covered.len() == c {
                    return class_limited(data, &nodes, seed);
                }
            }
            Err(Error::arg(format!(
                "could not cover all {c} classes with {k} random subsets"
            )))
        }
    }
}

/// Shuffled mini-batches covering `shard` once: `ceil(E_k / B)` batches, the
/// last one possibly short. The order depends only on `(seed, epoch, owner)`.
pub fn minibatches(shard: &Shard, batch: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<&Example>>> {
    if batch == 0 || batch > shard.len() {
        return Err(Error::arg(format!(
            "batch size {batch} must lie in 1..={} for node {}",
            shard.len(),
            shard.owner
        )));
    }
    let mut order: Vec<usize> = (0..shard.len()).collect();
    order.shuffle(&mut seed::rng(
        seed,
        Stream::Batches,
        &[epoch as u64, shard.owner as u64],
    ));
    Ok(order
        .chunks(batch)
        .map(|c| c.iter().map(|&i| &shard.examples[i]).collect())
        .collect())
}

/// The single batch a device uses in `round` to compute a gradient for `peer`.
/// Cycles through the round's mini-batches by `(round + peer)`.
pub fn probe_batch(shard: &Shard, batch: usize, seed: u64, round: usize, peer: usize) -> Result<Vec<&Example>> {
    let mut all = minibatches(shard, batch, seed, round)?;
    let pick = (round + peer) % all.len();
    Ok(all.swap_remove(pick))
}
