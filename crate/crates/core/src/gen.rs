//! Seeded generators for the four synthetic benchmark families.
//!
//! Every generator is a pure function of its parameters and seed. All
//! families are encoded as minimization problems; maximization objectives
//! (auction revenue, independent-set size) are negated.

use crate::milp::{Instance, Sense};
use crate::rng;
use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("infeasible specification: {0}")]
    InfeasibleSpec(String),
    #[error("unknown family '{0}'")]
    UnknownFamily(String),
    #[error("unknown preset '{0}' (expected tiny, easy or hard)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Setcover,
    Cauctions,
    Indset,
    Facilities,
}

impl Family {
    pub const ALL: [Family; 4] =
        [Family::Setcover, Family::Cauctions, Family::Indset, Family::Facilities];

    pub fn name(self) -> &'static str {
        match self {
            Family::Setcover => "setcover",
            Family::Cauctions => "cauctions",
            Family::Indset => "indset",
            Family::Facilities => "facilities",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = GenError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| GenError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FamilyParams {
    Setcover { rows: usize, cols: usize, density: f64 },
    Cauctions { items: usize, bids: usize },
    Indset { nodes: usize, affinity: usize },
    Facilities { n_fac: usize, n_cust: usize },
}

impl FamilyParams {
    pub fn family(&self) -> Family {
        match self {
            FamilyParams::Setcover { .. } => Family::Setcover,
            FamilyParams::Cauctions { .. } => Family::Cauctions,
            FamilyParams::Indset { .. } => Family::Indset,
            FamilyParams::Facilities { .. } => Family::Facilities,
        }
    }

    /// Named size presets: `tiny` for oracle-checkable tests, `easy` and
    /// `hard` at benchmark scale.
    pub fn preset(family: Family, preset: &str) -> Result<Self, GenError> {
        use FamilyParams::*;
        let p = match (family, preset) {
            (Family::Setcover, "tiny") => Setcover { rows: 20, cols: 40, density: 0.05 },
            (Family::Setcover, "easy") => Setcover { rows: 500, cols: 1000, density: 0.05 },
            (Family::Setcover, "hard") => Setcover { rows: 2000, cols: 1000, density: 0.05 },
            (Family::Cauctions, "tiny") => Cauctions { items: 10, bids: 30 },
            (Family::Cauctions, "easy") => Cauctions { items: 100, bids: 500 },
            (Family::Cauctions, "hard") => Cauctions { items: 300, bids: 1500 },
            (Family::Indset, "tiny") => Indset { nodes: 30, affinity: 2 },
            (Family::Indset, "easy") => Indset { nodes: 500, affinity: 4 },
            (Family::Indset, "hard") => Indset { nodes: 1500, affinity: 4 },
            (Family::Facilities, "tiny") => Facilities { n_fac: 5, n_cust: 8 },
            (Family::Facilities, "easy") => Facilities { n_fac: 100, n_cust: 100 },
            (Family::Facilities, "hard") => Facilities { n_fac: 100, n_cust: 400 },
            (_, other) => return Err(GenError::UnknownPreset(other.to_string())),
        };
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub params: FamilyParams,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(params: FamilyParams, seed: u64) -> Self {
        GenSpec { params, seed }
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }

    /// `count` specs with per-index seeds derived from `seed`.
    pub fn batch(params: FamilyParams, seed: u64, count: usize) -> Vec<GenSpec> {
        (0..count).map(|i| GenSpec::new(params, crate::rng::derive_seed(seed, &[i as u64]))).collect()
    }

    /// Generates a batch named `<family>_<index>`.
    pub fn generate_batch(params: FamilyParams, seed: u64, count: usize) -> Result<Vec<Instance>, GenError> {
        GenSpec::batch(params, seed, count)
            .iter()
            .enumerate()
            .map(|(i, spec)| {
                let mut inst = spec.generate()?;
                inst.name = format!("{}_{i:03}", params.family().name());
                Ok(inst)
            })
            .collect()
    }

    pub fn generate(&self) -> Result<Instance, GenError> {
        match self.params {
            FamilyParams::Setcover { rows, cols, density } => {
                gen_setcover(rows, cols, density, self.seed)
            }
            FamilyParams::Cauctions { items, bids } => gen_cauctions(items, bids, self.seed),
            FamilyParams::Indset { nodes, affinity } => gen_indset(nodes, affinity, self.seed),
            FamilyParams::Facilities { n_fac, n_cust } => {
                gen_facilities(n_fac, n_cust, self.seed)
            }
        }
    }
}

fn family_rng(family: Family, seed: u64) -> rng::Rng {
    rng::stream(seed, &[family as u64])
}

/// Minimum-cost set cover: every row must be covered by at least one chosen
/// column.
pub fn gen_setcover(rows: usize, cols: usize, density: f64, seed: u64) -> Result<Instance, GenError> {
    if rows == 0 || cols == 0 {
        return Err(GenError::InvalidSize(format!("setcover {rows}x{cols}")));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(GenError::InvalidSize(format!("density {density}")));
    }
    if density * cols as f64 + 1e-12 < 2.0 {
        return Err(GenError::InfeasibleSpec(format!(
            "density {density} x {cols} columns gives fewer than 2 expected entries per row"
        )));
    }
    let mut rng = family_rng(Family::Setcover, seed);
    let mut cover: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); rows];
    for row in cover.iter_mut() {
        for j in 0..cols {
            if rng.random::<f64>() < density {
                row.insert(j);
            }
        }
    }
    // Repair: at least two columns per row, no empty column.
    for row in cover.iter_mut() {
        while row.len() < 2 {
            row.insert(rng.random_range(0..cols));
        }
    }
    let mut used = vec![false; cols];
    for row in &cover {
        for &j in row {
            used[j] = true;
        }
    }
    for (j, u) in used.iter().enumerate() {
        if !u {
            let i = rng.random_range(0..rows);
            cover[i].insert(j);
        }
    }

    let mut inst = Instance::new(format!("setcover_{seed}"), cols);
    for j in 0..cols {
        inst.set_binary(j);
        inst.obj[j] = rng.random_range(1..=100) as f64;
    }
    for row in &cover {
        let coefs: Vec<(usize, f64)> = row.iter().map(|&j| (j, 1.0)).collect();
        inst.add_row(&coefs, Sense::Ge, 1.0);
    }
    Ok(inst)
}

/// Combinatorial auction: accept a revenue-maximizing set of bids such that
/// no item is sold twice.
pub fn gen_cauctions(items: usize, bids: usize, seed: u64) -> Result<Instance, GenError> {
    if items == 0 || bids == 0 {
        return Err(GenError::InvalidSize(format!("cauctions {items} items, {bids} bids")));
    }
    let mut rng = family_rng(Family::Cauctions, seed);
    let max_size = items.div_ceil(4).max(2).min(items);
    let min_size = 2.min(items);
    let mut per_item: Vec<Vec<usize>> = vec![Vec::new(); items];
    let mut inst = Instance::new(format!("cauctions_{seed}"), bids);
    for b in 0..bids {
        let size = rng.random_range(min_size..=max_size);
        let mut bundle = index::sample(&mut rng, items, size).into_vec();
        bundle.sort_unstable();
        for &i in &bundle {
            per_item[i].push(b);
        }
        let price = size as f64 * rng.random_range(0.5..1.5);
        inst.set_binary(b);
        inst.obj[b] = -price;
    }
    for bidders in &per_item {
        let coefs: Vec<(usize, f64)> = bidders.iter().map(|&b| (b, 1.0)).collect();
        inst.add_row(&coefs, Sense::Le, 1.0);
    }
    Ok(inst)
}

/// Edges of a Barabási–Albert graph where each new node attaches to
/// `affinity` distinct existing nodes.
pub fn barabasi_albert(nodes: usize, affinity: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = family_rng(Family::Indset, seed);
    let mut edges = Vec::with_capacity(affinity * nodes.saturating_sub(affinity));
    let mut repeated: Vec<usize> = Vec::new();
    let mut targets: Vec<usize> = (0..affinity).collect();
    for source in affinity..nodes {
        for &t in &targets {
            edges.push((t.min(source), t.max(source)));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat_n(source, affinity));
        let mut next = BTreeSet::new();
        while next.len() < affinity {
            next.insert(repeated[rng.random_range(0..repeated.len())]);
        }
        targets = next.into_iter().collect();
    }
    edges
}

/// Maximum independent set on a Barabási–Albert graph, one edge constraint
/// per edge.
pub fn gen_indset(nodes: usize, affinity: usize, seed: u64) -> Result<Instance, GenError> {
    if affinity == 0 || nodes <= affinity {
        return Err(GenError::InvalidSize(format!("indset {nodes} nodes, affinity {affinity}")));
    }
    let edges = barabasi_albert(nodes, affinity, seed);
    debug_assert_eq!(edges.len(), affinity * (nodes - affinity));
    let mut inst = Instance::new(format!("indset_{seed}"), nodes);
    for v in 0..nodes {
        inst.set_binary(v);
        inst.obj[v] = -1.0;
    }
    for &(u, v) in &edges {
        inst.add_row(&[(u, 1.0), (v, 1.0)], Sense::Le, 1.0);
    }
    Ok(inst)
}

/// Index of the assignment variable `x[f][c]` in a facilities instance.
pub fn facility_assign_index(n_fac: usize, n_cust: usize, f: usize, c: usize) -> usize {
    n_fac + f * n_cust + c
}

/// Capacitated facility location with fractional assignment. Variables are
/// the open flags `y_f` followed by the assignments `x[f][c]` in row-major
/// order.
pub fn gen_facilities(n_fac: usize, n_cust: usize, seed: u64) -> Result<Instance, GenError> {
    if n_fac == 0 || n_cust == 0 {
        return Err(GenError::InvalidSize(format!("facilities {n_fac}x{n_cust}")));
    }
    let mut rng = family_rng(Family::Facilities, seed);
    let cust_pos: Vec<(f64, f64)> =
        (0..n_cust).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let fac_pos: Vec<(f64, f64)> =
        (0..n_fac).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    let demand: Vec<f64> = (0..n_cust).map(|_| rng.random_range(5..=35) as f64).collect();
    let mut capacity: Vec<f64> = (0..n_fac).map(|_| rng.random_range(10..=160) as f64).collect();
    let total_demand: f64 = demand.iter().sum();
    let total_cap: f64 = capacity.iter().sum();
    if total_cap < 1.5 * total_demand {
        let scale = 1.5 * total_demand / total_cap;
        for c in capacity.iter_mut() {
            *c = (*c * scale).ceil();
        }
    }
    let fixed: Vec<f64> = capacity
        .iter()
        .map(|cap| {
            let base = rng.random_range(100..=110) as f64 * cap.sqrt();
            (base + rng.random_range(0..=90) as f64).round()
        })
        .collect();

    let n = n_fac + n_fac * n_cust;
    let mut inst = Instance::new(format!("facilities_{seed}"), n);
    for f in 0..n_fac {
        inst.set_binary(f);
        inst.obj[f] = fixed[f];
        for c in 0..n_cust {
            let (dx, dy) = (fac_pos[f].0 - cust_pos[c].0, fac_pos[f].1 - cust_pos[c].1);
            let j = facility_assign_index(n_fac, n_cust, f, c);
            inst.ub[j] = 1.0;
            inst.obj[j] = ((dx * dx + dy * dy).sqrt() * 10.0 * demand[c] * 100.0).round() / 100.0;
        }
    }
    for c in 0..n_cust {
        let coefs: Vec<(usize, f64)> =
            (0..n_fac).map(|f| (facility_assign_index(n_fac, n_cust, f, c), 1.0)).collect();
        inst.add_row(&coefs, Sense::Eq, 1.0);
    }
    for f in 0..n_fac {
        let mut coefs: Vec<(usize, f64)> = (0..n_cust)
            .map(|c| (facility_assign_index(n_fac, n_cust, f, c), demand[c]))
            .collect();
        coefs.push((f, -capacity[f]));
        inst.add_row(&coefs, Sense::Le, 0.0);
    }
    Ok(inst)
}
