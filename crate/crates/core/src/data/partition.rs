//! Reference carve-out, test split, and non-IID client partitioning where each
//! client sees every class but one, and no two clients omit the same class.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use super::LabeledDataset;
use crate::distill::ReferenceSet;
use crate::error::{Error, Result};
use crate::ClientId;

/// Reference-row labels. Only the FedUnl baseline may read them.
#[derive(Debug, Clone, PartialEq)]
pub struct SealedLabels(Vec<usize>);

impl SealedLabels {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn unseal(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSplit {
    pub reference: ReferenceSet,
    pub sealed_labels: SealedLabels,
    /// Source rows that went into the reference set.
    pub reference_rows: Vec<usize>,
    /// Source rows left over, in shuffled order.
    pub remainder_rows: Vec<usize>,
}

/// Carves `ref_size` random rows off `data` as unlabeled reference features.
pub fn split_reference<R: Rng + ?Sized>(
    data: &LabeledDataset,
    ref_size: usize,
    rng: &mut R,
) -> Result<ReferenceSplit> {
    if ref_size >= data.len() {
        return Err(Error::Capacity(format!(
            "reference size {ref_size} needs more than the {} available rows",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let remainder_rows = order.split_off(ref_size);
    let reference_rows = order;
    Ok(ReferenceSplit {
        reference: ReferenceSet::new(data.features().select_rows(&reference_rows)),
        sealed_labels: SealedLabels(reference_rows.iter().map(|&i| data.labels()[i]).collect()),
        reference_rows,
        remainder_rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionPlan {
    pub n_clients: usize,
    pub ref_size: usize,
    /// Share of the post-reference rows held out for testing.
    pub test_fraction: f64,
    /// Rows per client; `None` splits the whole training pool evenly.
    pub samples_per_client: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientSplit {
    pub client: ClientId,
    pub data: LabeledDataset,
    /// Source rows of `data`, in the same order.
    pub rows: Vec<usize>,
    pub omitted_class: usize,
}

impl ClientSplit {
    /// Every class except the omitted one.
    pub fn class_menu(&self) -> Vec<usize> {
        (0..self.data.class_count())
            .filter(|&c| c != self.omitted_class)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDataset {
    pub clients: Vec<ClientSplit>,
    pub test: LabeledDataset,
    pub test_rows: Vec<usize>,
    pub reference: ReferenceSet,
    pub reference_rows: Vec<usize>,
    pub sealed_reference_labels: SealedLabels,
}

impl PartitionedDataset {
    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.test.feature_dim()
    }

    pub fn class_count(&self) -> usize {
        self.test.class_count()
    }

    /// Audit table with one `split,row` line per assigned source row.
    pub fn manifest_table(&self) -> String {
        let mut out = String::from("split,row\n");
        for c in &self.clients {
            for r in &c.rows {
                writeln!(out, "client_{},{r}", c.client).unwrap();
            }
        }
        for r in &self.test_rows {
            writeln!(out, "test,{r}").unwrap();
        }
        for r in &self.reference_rows {
            writeln!(out, "reference,{r}").unwrap();
        }
        out
    }
}

/// Splits `data` into reference, test and `N` non-IID client shards.
///
/// Client `i` draws only from the classes other than `σ(i)` for a seeded
/// permutation `σ`, so `N <= C` is required. Shards are equal-sized and
/// pairwise disjoint; each holds at least one row of every permitted class
/// whenever the pool allows it.
pub fn partition_noniid<R: Rng + ?Sized>(
    data: &LabeledDataset,
    plan: &PartitionPlan,
    rng: &mut R,
) -> Result<PartitionedDataset> {
    let n = plan.n_clients;
    let c = data.class_count();
    if n == 0 {
        return Err(Error::Config("need at least one client".into()));
    }
    if n > c {
        return Err(Error::Config(format!(
            "{n} clients cannot each omit a distinct class out of {c}"
        )));
    }
    if !(0.0..1.0).contains(&plan.test_fraction) {
        return Err(Error::Config(format!(
            "test_fraction must be in [0, 1), got {}",
            plan.test_fraction
        )));
    }

    let split = split_reference(data, plan.ref_size, rng)?;
    let mut remainder = split.remainder_rows;
    let n_test = (plan.test_fraction * remainder.len() as f64).round() as usize;
    if n_test == 0 {
        return Err(Error::Capacity("test split would be empty".into()));
    }
    let pool = remainder.split_off(n_test);
    let test_rows = remainder;

    let mut omitted: Vec<usize> = (0..c).collect();
    omitted.shuffle(rng);
    omitted.truncate(n);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for &r in &pool {
        by_class[data.labels()[r]].push(r);
    }
    let per_client = plan.samples_per_client.unwrap_or(pool.len() / n);
    if per_client == 0 {
        return Err(Error::Capacity("client shards would be empty".into()));
    }
    if per_client * n > pool.len() {
        return Err(Error::Capacity(format!(
            "{n} clients × {per_client} rows need {} rows, pool has {} (shortfall {})",
            per_client * n,
            pool.len(),
            per_client * n - pool.len()
        )));
    }
    let available: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let alloc = allocate(&available, &omitted, per_client)?;

    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (class, rows) in by_class.iter().enumerate() {
        let mut it = rows.iter();
        for (i, shard) in shards.iter_mut().enumerate() {
            shard.extend(it.by_ref().take(alloc[i][class]));
        }
    }

    let mut clients = Vec::with_capacity(n);
    for (i, rows) in shards.into_iter().enumerate() {
        clients.push(ClientSplit {
            client: ClientId(i as u32),
            data: data.subset(&rows)?,
            rows,
            omitted_class: omitted[i],
        });
    }
    Ok(PartitionedDataset {
        clients,
        test: data.subset(&test_rows)?,
        test_rows,
        reference: split.reference,
        reference_rows: split.reference_rows,
        sealed_reference_labels: split.sealed_labels,
    })
}

/// Rows of each class granted to each client: `out[client][class]`.
///
/// First every permitted (client, class) pair gets an equal floor share that
/// fits both the client's quota and the class supply; the rest is routed by
/// max-flow so every client reaches exactly `per_client` rows.
fn allocate(available: &[usize], omitted: &[usize], per_client: usize) -> Result<Vec<Vec<usize>>> {
    let n = omitted.len();
    let c = available.len();
    let permitted = |i: usize, k: usize| omitted[i] != k;
    let takers: Vec<usize> = (0..c)
        .map(|k| (0..n).filter(|&i| permitted(i, k)).count())
        .collect();

    let fair = per_client / (c - 1).max(1);
    let mut alloc = vec![vec![0usize; c]; n];
    let mut left = available.to_vec();
    for k in 0..c {
        if takers[k] == 0 {
            continue;
        }
        let share = fair.min(available[k] / takers[k]);
        for (i, row) in alloc.iter_mut().enumerate() {
            if permitted(i, k) {
                row[k] = share;
                left[k] -= share;
            }
        }
    }
    let demand: Vec<usize> = alloc.iter().map(|r| per_client - r.iter().sum::<usize>()).collect();

    // Nodes: source, clients, classes, sink.
    let (src, sink) = (0, n + c + 1);
    let mut cap = vec![vec![0i64; n + c + 2]; n + c + 2];
    for i in 0..n {
        cap[src][1 + i] = demand[i] as i64;
        for k in 0..c {
            if permitted(i, k) {
                cap[1 + i][1 + n + k] = i64::MAX / 4;
            }
        }
    }
    for k in 0..c {
        cap[1 + n + k][sink] = left[k] as i64;
    }
    let flow = max_flow(&mut cap, src, sink);
    let wanted: usize = demand.iter().sum();
    if (flow as usize) < wanted {
        return Err(Error::Capacity(format!(
            "class supply cannot satisfy the non-IID split: shortfall of {} rows",
            wanted - flow as usize
        )));
    }
    for (i, row) in alloc.iter_mut().enumerate() {
        for (k, slot) in row.iter_mut().enumerate() {
            if permitted(i, k) {
                // Residual capacity on the reverse edge equals the routed flow.
                *slot += cap[1 + n + k][1 + i] as usize;
            }
        }
    }
    Ok(alloc)
}

/// Edmonds–Karp on a dense capacity matrix; leaves residual capacities in `cap`.
fn max_flow(cap: &mut [Vec<i64>], src: usize, sink: usize) -> i64 {
    let nodes = cap.len();
    let mut total = 0;
    loop {
        let mut parent = vec![usize::MAX; nodes];
        parent[src] = src;
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            for v in 0..nodes {
                if parent[v] == usize::MAX && cap[u][v] > 0 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            return total;
        }
        let mut bottleneck = i64::MAX;
        let mut v = sink;
        while v != src {
            let u = parent[v];
            bottleneck = bottleneck.min(cap[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != src {
            let u = parent[v];
            cap[u][v] -= bottleneck;
            cap[v][u] += bottleneck;
            v = u;
        }
        total += bottleneck;
    }
}
