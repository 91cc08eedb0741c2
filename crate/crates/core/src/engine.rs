use std::time::Instant;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{assign_nearest, choose_k, ward_cluster};
use crate::error::{Error, Result};
use crate::genotype::GenotypeMatrix;
use crate::spectral::{build_eigenmap, nystrom_project, Eigenmap};

/// Recursion flavor: stop on cluster size, or recurse until no node shows
/// significant structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineMode {
    DacGem,
    ClusterGem,
}

/// Driver parameters. `base_size` is the marked-sample size N, `max_cluster`
/// the size B at or above which a cluster is re-split in `DacGem` mode.
#[derive(Debug, Clone, Serialize)]
pub struct EngineConfig {
    pub base_size: usize,
    pub max_cluster: usize,
    pub alpha: f64,
    pub seed: u64,
    pub full_base_factor: f64,
    pub min_split_size: usize,
    pub max_depth: usize,
    pub mode: EngineMode,
}

impl EngineConfig {
    pub fn new(base_size: usize, max_cluster: usize, alpha: f64, seed: u64, mode: EngineMode) -> Self {
        Self {
            base_size,
            max_cluster,
            alpha,
            seed,
            full_base_factor: 2.0,
            min_split_size: 10,
            max_depth: 32,
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_size < 2 {
            return Err(Error::Argument("base size must be at least 2".into()));
        }
        if self.max_cluster < 1 {
            return Err(Error::Argument("max cluster size must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Argument(format!(
                "alpha {} outside (0, 0.5)",
                self.alpha
            )));
        }
        if self.full_base_factor < 1.0 {
            return Err(Error::Argument(
                "full base factor must be at least 1".into(),
            ));
        }
        if self.min_split_size < 2 {
            return Err(Error::Argument("min split size must be at least 2".into()));
        }
        Ok(())
    }
}

/// Why a node became a leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    BelowMaxCluster,
    NoStructure,
    BelowMinSplit,
    MaxDepth,
    DegeneratePanel,
}

/// One cluster in the recursion record. `subjects` and `base` hold row
/// indices into the genotype matrix, sorted ascending. `d` is None for
/// nodes whose eigenmap was never built.
#[derive(Debug, Clone)]
pub struct ClusterNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub subjects: Vec<usize>,
    pub base: Vec<usize>,
    pub d: Option<usize>,
    pub eigenvalues: Vec<f64>,
    pub children: Vec<usize>,
    pub stop_reason: Option<StopReason>,
}

impl ClusterNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn size(&self) -> usize {
        self.subjects.len()
    }

    pub fn k(&self) -> usize {
        self.children.len()
    }
}

/// The full recursion record. Node ids follow creation order (breadth
/// first); the root is node 0 and owns every subject.
#[derive(Debug, Clone)]
pub struct ClusterTree {
    pub nodes: Vec<ClusterNode>,
    pub n_subjects: usize,
    pub mode: EngineMode,
}

impl ClusterTree {
    pub fn root(&self) -> &ClusterNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &ClusterNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// `/`-joined child-index path from the root; the root itself is the
    /// empty string.
    pub fn node_path(&self, id: usize) -> String {
        let mut segments = Vec::new();
        let mut cur = id;
        while let Some(parent) = self.nodes[cur].parent {
            let pos = self.nodes[parent]
                .children
                .iter()
                .position(|&c| c == cur)
                .expect("child listed under its parent");
            segments.push(pos.to_string());
            cur = parent;
        }
        segments.reverse();
        segments.join("/")
    }

    /// Leaf id per subject index.
    pub fn leaf_of_subject(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.n_subjects];
        for node in self.leaves() {
            for &s in &node.subjects {
                out[s] = node.id;
            }
        }
        out
    }

    /// `(subject index, node path, leaf id)` rows in subject order.
    pub fn assignments(&self) -> Vec<(usize, String, usize)> {
        let leaf_of = self.leaf_of_subject();
        (0..self.n_subjects)
            .map(|s| (s, self.node_path(leaf_of[s]), leaf_of[s]))
            .collect()
    }
}

/// Eigenmap artifact of one expanded node: coordinates for the node's
/// subjects (rows follow `subjects` order) over all retained dimensions.
/// When the node split, projected subjects are included; otherwise the rows
/// cover the base sample only.
#[derive(Debug, Clone)]
pub struct NodeMap {
    pub node_id: usize,
    pub subjects: Vec<usize>,
    pub coords: Array2<f64>,
    pub map: Eigenmap,
}

/// Observability counters for a run.
#[derive(Debug, Clone, Default)]
pub struct EngineStats {
    /// Largest dense symmetric order handed to the eigensolver.
    pub peak_matrix_order: usize,
    /// Seconds spent per attempted node split, in node-id order.
    pub node_timings: Vec<(usize, f64)>,
}

/// A run's full output: the tree, per-node eigenmap artifacts (expanded
/// nodes only, in node-id order), and runtime counters.
#[derive(Debug, Clone)]
pub struct EngineRun {
    pub tree: ClusterTree,
    pub node_maps: Vec<NodeMap>,
    pub stats: EngineStats,
}

/// Uniform base sample without replacement by partial Fisher-Yates over the
/// sorted subject list, returned sorted ascending. Nodes no larger than
/// `full_base_factor * n_base` keep every subject as base, skipping the
/// Nystrom path entirely.
pub fn select_base(
    subjects: &[usize],
    n_base: usize,
    full_base_factor: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut sorted: Vec<usize> = subjects.to_vec();
    sorted.sort_unstable();
    if sorted.len() as f64 <= full_base_factor * n_base as f64 {
        return sorted;
    }
    for i in 0..n_base {
        let j = rng.gen_range(i..sorted.len());
        sorted.swap(i, j);
    }
    let mut picked = sorted[..n_base].to_vec();
    picked.sort_unstable();
    picked
}

/// Outcome of one node's split attempt.
#[derive(Debug, Clone)]
pub enum NodeSplit {
    /// No polymorphic SNPs within the node.
    Degenerate,
    /// Eigenmap built but no significant structure (D = 0); coordinates
    /// cover the base sample.
    NoStructure { artifact: NodeMap },
    /// Node partitioned into `k` groups; `labels` align with the node's
    /// sorted subject list and the artifact covers every node subject.
    Split {
        artifact: NodeMap,
        labels: Vec<usize>,
        k: usize,
    },
}

/// Steps 1-5 on one node: mark a base sample, build its eigenmap, Ward-cut
/// it into D+1 groups, project the unmarked subjects and group each with the
/// nearest base cluster.
pub fn split_node(
    g: &GenotypeMatrix,
    node_id: usize,
    subjects: &[usize],
    cfg: &EngineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<NodeSplit> {
    let mut sorted: Vec<usize> = subjects.to_vec();
    sorted.sort_unstable();
    let base = select_base(&sorted, cfg.base_size, cfg.full_base_factor, rng);

    let map = match build_eigenmap(g, &base, cfg.alpha) {
        Ok(map) => map,
        Err(Error::DegeneratePanel(_)) => return Ok(NodeSplit::Degenerate),
        Err(e) => return Err(e),
    };
    let d = map.d_significant;

    if d == 0 {
        let coords = map.coords.clone();
        return Ok(NodeSplit::NoStructure {
            artifact: NodeMap {
                node_id,
                subjects: base.clone(),
                coords,
                map,
            },
        });
    }

    let k = choose_k(d);
    let base_sig = map.coords.slice(ndarray::s![.., ..d]);
    let base_labels = ward_cluster(base_sig, k)?;

    let unmarked: Vec<usize> = sorted
        .iter()
        .copied()
        .filter(|s| base.binary_search(s).is_err())
        .collect();

    let (proj_all, proj_labels) = if unmarked.is_empty() {
        (Array2::zeros((0, map.retained_dims())), Vec::new())
    } else {
        let proj = nystrom_project(&map, g, &unmarked)?;
        let labels = assign_nearest(
            proj.slice(ndarray::s![.., ..d]),
            base_sig,
            &base_labels,
        )?;
        (proj, labels)
    };

    // stitch base and projected rows back into node subject order
    let mut coords = Array2::zeros((sorted.len(), map.retained_dims()));
    let mut labels = vec![0usize; sorted.len()];
    let mut base_cursor = 0usize;
    let mut proj_cursor = 0usize;
    for (row, &s) in sorted.iter().enumerate() {
        if base_cursor < base.len() && base[base_cursor] == s {
            coords.row_mut(row).assign(&map.coords.row(base_cursor));
            labels[row] = base_labels.labels[base_cursor];
            base_cursor += 1;
        } else {
            coords.row_mut(row).assign(&proj_all.row(proj_cursor));
            labels[row] = proj_labels[proj_cursor];
            proj_cursor += 1;
        }
    }

    Ok(NodeSplit::Split {
        artifact: NodeMap {
            node_id,
            subjects: sorted,
            coords,
            map,
        },
        labels,
        k,
    })
}

/// Divide-and-conquer driver: re-split every cluster of `max_cluster` or
/// more subjects until all clusters are smaller, or no structure remains.
pub fn dac_gem(g: &GenotypeMatrix, cfg: &EngineConfig) -> Result<EngineRun> {
    run(g, &EngineConfig { mode: EngineMode::DacGem, ..cfg.clone() })
}

/// Recursive driver that keeps splitting any node with D > 0, so every leaf
/// is homogeneous or explains itself with a stop reason.
pub fn cluster_gem(g: &GenotypeMatrix, cfg: &EngineConfig) -> Result<EngineRun> {
    run(g, &EngineConfig { mode: EngineMode::ClusterGem, ..cfg.clone() })
}

fn pre_split_stop(size: usize, depth: usize, cfg: &EngineConfig) -> Option<StopReason> {
    if cfg.mode == EngineMode::DacGem && size < cfg.max_cluster {
        return Some(StopReason::BelowMaxCluster);
    }
    if size < cfg.min_split_size {
        return Some(StopReason::BelowMinSplit);
    }
    if depth >= cfg.max_depth {
        return Some(StopReason::MaxDepth);
    }
    None
}

fn run(g: &GenotypeMatrix, cfg: &EngineConfig) -> Result<EngineRun> {
    cfg.validate()?;
    if g.n() < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 subjects, got {}",
            g.n()
        )));
    }

    let mut nodes = vec![ClusterNode {
        id: 0,
        parent: None,
        depth: 0,
        subjects: (0..g.n()).collect(),
        base: Vec::new(),
        d: None,
        eigenvalues: Vec::new(),
        children: Vec::new(),
        stop_reason: None,
    }];
    let mut node_maps: Vec<NodeMap> = Vec::new();
    let mut stats = EngineStats::default();
    let mut frontier = vec![0usize];

    while !frontier.is_empty() {
        let mut to_split = Vec::new();
        for &id in &frontier {
            let node = &nodes[id];
            match pre_split_stop(node.size(), node.depth, cfg) {
                Some(reason) => nodes[id].stop_reason = Some(reason),
                None => to_split.push(id),
            }
        }

        // split attempts are independent given per-node seed streams, so the
        // frontier can fan out across threads without affecting results
        let outcomes: Vec<(usize, Result<NodeSplit>, f64)> = to_split
            .par_iter()
            .map(|&id| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(id as u64);
                let started = Instant::now();
                let outcome = split_node(g, id, &nodes[id].subjects, cfg, &mut rng);
                (id, outcome, started.elapsed().as_secs_f64())
            })
            .collect();

        let mut next_frontier = Vec::new();
        for (id, outcome, seconds) in outcomes {
            stats.node_timings.push((id, seconds));
            match outcome? {
                NodeSplit::Degenerate => {
                    nodes[id].stop_reason = Some(StopReason::DegeneratePanel);
                }
                NodeSplit::NoStructure { artifact } => {
                    stats.peak_matrix_order = stats.peak_matrix_order.max(artifact.map.base_index.len());
                    nodes[id].base = artifact.map.base_index.clone();
                    nodes[id].d = Some(0);
                    nodes[id].eigenvalues = artifact.map.eigenvalues.clone();
                    nodes[id].stop_reason = Some(StopReason::NoStructure);
                    node_maps.push(artifact);
                }
                NodeSplit::Split { artifact, labels, k } => {
                    stats.peak_matrix_order = stats.peak_matrix_order.max(artifact.map.base_index.len());
                    nodes[id].base = artifact.map.base_index.clone();
                    nodes[id].d = Some(artifact.map.d_significant);
                    nodes[id].eigenvalues = artifact.map.eigenvalues.clone();

                    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
                    for (row, &s) in artifact.subjects.iter().enumerate() {
                        groups[labels[row]].push(s);
                    }
                    groups.sort_by_key(|grp| grp[0]);
                    let depth = nodes[id].depth + 1;
                    for group in groups {
                        let child_id = nodes.len();
                        nodes[id].children.push(child_id);
                        nodes.push(ClusterNode {
                            id: child_id,
                            parent: Some(id),
                            depth,
                            subjects: group,
                            base: Vec::new(),
                            d: None,
                            eigenvalues: Vec::new(),
                            children: Vec::new(),
                            stop_reason: None,
                        });
                        next_frontier.push(child_id);
                    }
                    node_maps.push(artifact);
                }
            }
        }
        frontier = next_frontier;
    }

    Ok(EngineRun {
        tree: ClusterTree {
            nodes,
            n_subjects: g.n(),
            mode: cfg.mode,
        },
        node_maps,
        stats,
    })
}
