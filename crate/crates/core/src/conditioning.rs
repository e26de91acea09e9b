//! Maximin ordering and nearest-neighbor conditioning sets.
//!
//! Training plans are built block by block: a point may only condition on
//! points of its own block that precede it in that block's maximin order.
//! Prediction plans order the unthinned training set and the test set
//! separately and let each test point condition on its nearest points in
//! a pool that grows by one predicted test point at a time.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{sq_dist, Hyperparameters, ScaledInputs};
use crate::seed;
use crate::thinning::BlockPartition;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaximinOrder {
    pub order: Vec<usize>,
    pub seed: u64,
}

/// Greedy exact maximin ordering of rows `subset` of `points`, starting at
/// `subset[first]`. Ties go to the earliest entry of `subset`.
pub fn greedy_maximin(points: &ScaledInputs, subset: &[usize], first: usize) -> Vec<usize> {
    let k = subset.len();
    if k == 0 {
        return Vec::new();
    }
    let d = points.dim();
    let mut local = Vec::with_capacity(k * d);
    for &i in subset {
        local.extend_from_slice(points.row(i));
    }
    let mut min_d = vec![f64::INFINITY; k];
    let mut taken = vec![false; k];
    let mut order = Vec::with_capacity(k);
    let mut cur = first;
    loop {
        taken[cur] = true;
        order.push(subset[cur]);
        if order.len() == k {
            break;
        }
        let p = &local[cur * d..(cur + 1) * d];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..k {
            if taken[i] {
                continue;
            }
            let dist = sq_dist(&local[i * d..(i + 1) * d], p);
            if dist < min_d[i] {
                min_d[i] = dist;
            }
            if min_d[i] > best_d {
                best_d = min_d[i];
                best = i;
            }
        }
        cur = best;
    }
    order
}

/// Maximin order of `subset` with a seeded uniform first pick.
pub fn maximin_subset(points: &ScaledInputs, subset: &[usize], seed: u64) -> MaximinOrder {
    let first = if subset.is_empty() {
        0
    } else {
        seed::stream(seed, "maximin-first", 0).random_range(0..subset.len())
    };
    MaximinOrder {
        order: greedy_maximin(points, subset, first),
        seed,
    }
}

/// Maximin order of all rows of `x` under the lengthscales of `hp`.
pub fn maximin_order(x: &DMatrix<f64>, hp: &Hyperparameters, seed: u64) -> Result<MaximinOrder> {
    if x.ncols() != hp.dim() {
        return Err(Error::Parameter(format!(
            "x has {} columns but {} lengthscales",
            x.ncols(),
            hp.dim()
        )));
    }
    let s = ScaledInputs::new(x, &hp.lengthscales);
    let all: Vec<usize> = (0..s.len()).collect();
    Ok(maximin_subset(&s, &all, seed))
}

/// Per-block seed used for the first maximin pick.
pub fn block_seed(seed: u64, block: usize) -> u64 {
    seed::derive(seed, "maximin-block", block as u64)
}

pub fn block_orders(
    points: &ScaledInputs,
    partition: &BlockPartition,
    seed: u64,
) -> Vec<MaximinOrder> {
    partition
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(z, b)| maximin_subset(points, b, block_seed(seed, z)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist
            .total_cmp(&other.dist)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the `k` smallest `(distance, id)` pairs seen so far.
struct KNearest {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl KNearest {
    fn new(k: usize) -> Self {
        KNearest {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, dist: f64, id: usize) {
        if self.k == 0 {
            return;
        }
        let c = Candidate { dist, id };
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if c < *self.heap.peek().unwrap() {
            self.heap.pop();
            self.heap.push(c);
        }
    }

    /// Ids sorted by increasing distance.
    fn into_ids(self) -> Vec<usize> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| c.id)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    Training,
    Prediction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    /// Training record (training mode) or test row (prediction mode).
    pub index: usize,
    pub block: usize,
    /// Conditioning set, nearest first. In prediction mode ids below
    /// `n_train` are training records and `n_train + j` is test row `j`.
    pub neighbors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditioningPlan {
    pub mode: PlanMode,
    pub n_train: usize,
    /// Evaluation order: block by block in maximin order (training), or
    /// test points in maximin order (prediction).
    pub entries: Vec<PlanEntry>,
}

impl ConditioningPlan {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One line per point: `index block c1 c2 ...`.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mode = match self.mode {
            PlanMode::Training => "training",
            PlanMode::Prediction => "prediction",
        };
        writeln!(
            w,
            "# conditioning plan mode={mode} n_train={} points={}",
            self.n_train,
            self.len()
        )?;
        for e in &self.entries {
            write!(w, "{} {}", e.index, e.block)?;
            for c in &e.neighbors {
                write!(w, " {c}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Conditioning sets of size `min(j - 1, m)` from the block predecessors
/// of each point, under the scaled distance of `points`.
pub fn training_plan(
    partition: &BlockPartition,
    orders: &[MaximinOrder],
    points: &ScaledInputs,
    m: usize,
) -> Result<ConditioningPlan> {
    if orders.len() != partition.thinning() {
        return Err(Error::Parameter(format!(
            "{} orders supplied for {} blocks",
            orders.len(),
            partition.thinning()
        )));
    }
    if let Some(z) = partition.blocks().iter().position(Vec::is_empty) {
        return Err(Error::BlockTooSmall {
            block: z,
            size: 0,
            minimum: 1,
        });
    }
    if m == 0 {
        return Err(Error::Parameter(
            "conditioning set size m must be at least 1".into(),
        ));
    }
    let per_block: Vec<Vec<PlanEntry>> = orders
        .par_iter()
        .enumerate()
        .map(|(z, ord)| block_plan(z, &ord.order, points, m))
        .collect();
    Ok(ConditioningPlan {
        mode: PlanMode::Training,
        n_train: partition.n(),
        entries: per_block.into_iter().flatten().collect(),
    })
}

fn block_plan(block: usize, order: &[usize], points: &ScaledInputs, m: usize) -> Vec<PlanEntry> {
    let d = points.dim();
    let mut local = Vec::with_capacity(order.len() * d);
    for &i in order {
        local.extend_from_slice(points.row(i));
    }
    let mut out = Vec::with_capacity(order.len());
    for (j, &idx) in order.iter().enumerate() {
        let neighbors = if j <= m {
            let mut pred: Vec<Candidate> = (0..j)
                .map(|p| Candidate {
                    dist: sq_dist(&local[p * d..(p + 1) * d], &local[j * d..(j + 1) * d]),
                    id: order[p],
                })
                .collect();
            pred.sort();
            pred.into_iter().map(|c| c.id).collect()
        } else {
            let me = &local[j * d..(j + 1) * d];
            let mut knn = KNearest::new(m);
            for p in 0..j {
                knn.offer(sq_dist(&local[p * d..(p + 1) * d], me), order[p]);
            }
            knn.into_ids()
        };
        out.push(PlanEntry {
            index: idx,
            block,
            neighbors,
        });
    }
    out
}

/// Sequential prediction plan with augmentation by already-predicted test points.
pub fn prediction_plan(
    train: &ScaledInputs,
    test: &ScaledInputs,
    m_p: usize,
    seed: u64,
) -> Result<ConditioningPlan> {
    let n_train = train.len();
    if n_train == 0 {
        return Err(Error::EmptyData(
            "prediction needs at least one training point".into(),
        ));
    }
    if m_p == 0 {
        return Err(Error::Parameter(
            "prediction conditioning size m_p must be at least 1".into(),
        ));
    }
    if train.dim() != test.dim() {
        return Err(Error::Parameter(format!(
            "training inputs have {} columns, test inputs {}",
            train.dim(),
            test.dim()
        )));
    }
    let d = train.dim();
    let train_all: Vec<usize> = (0..n_train).collect();
    let test_all: Vec<usize> = (0..test.len()).collect();
    let train_order =
        maximin_subset(train, &train_all, seed::derive(seed, "predict-train", 0)).order;
    let test_order = maximin_subset(test, &test_all, seed::derive(seed, "predict-test", 0)).order;

    // Pool layout: ordered training points, then predicted test points.
    let mut pool = Vec::with_capacity((n_train + test.len()) * d);
    let mut pool_ids = Vec::with_capacity(n_train + test.len());
    for &i in &train_order {
        pool.extend_from_slice(train.row(i));
        pool_ids.push(i);
    }
    let mut entries = Vec::with_capacity(test.len());
    for &j in &test_order {
        let me = test.row(j);
        let size = pool_ids.len();
        let mut knn = KNearest::new(m_p.min(size));
        for p in 0..size {
            knn.offer(sq_dist(&pool[p * d..(p + 1) * d], me), p);
        }
        let neighbors = knn.into_ids().into_iter().map(|p| pool_ids[p]).collect();
        entries.push(PlanEntry {
            index: j,
            block: 0,
            neighbors,
        });
        pool.extend_from_slice(me);
        pool_ids.push(n_train + j);
    }
    Ok(ConditioningPlan {
        mode: PlanMode::Prediction,
        n_train,
        entries,
    })
}
