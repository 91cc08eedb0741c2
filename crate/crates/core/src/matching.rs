use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::ClusterTree;
use crate::error::{Error, Result};
use crate::flow::MinCostFlow;
use crate::genotype::{GenotypeMatrix, PhenotypeTable, Status};
use crate::spectral::build_eigenmap;

/// Matching parameters. `min_dim` is the user floor D* on the eigenmap
/// dimension; ratio bounds of `None` are unbounded.
#[derive(Debug, Clone, Serialize)]
pub struct MatchConfig {
    pub min_dim: usize,
    pub max_controls_per_case: Option<usize>,
    pub max_cases_per_control: Option<usize>,
    pub cost_scale: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            min_dim: 2,
            max_controls_per_case: None,
            max_cases_per_control: None,
            cost_scale: 1_000_000,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_controls_per_case == Some(0) {
            return Err(Error::Argument(
                "max controls per case must be at least 1".into(),
            ));
        }
        if self.max_cases_per_control == Some(0) {
            return Err(Error::Argument(
                "max cases per control must be at least 1".into(),
            ));
        }
        if self.cost_scale == 0 {
            return Err(Error::Argument("cost scale must be positive".into()));
        }
        Ok(())
    }
}

/// Dimension of the matching map: the significant count with the user floor
/// applied. Callers clamp the result to the dimensions their map retains.
pub fn match_dimension(d_significant: usize, cfg: &MatchConfig) -> usize {
    d_significant.max(cfg.min_dim)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnmatchedReason {
    SingleArm,
    NoPhenotype,
}

impl UnmatchedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            UnmatchedReason::SingleArm => "single_arm",
            UnmatchedReason::NoPhenotype => "no_phenotype",
        }
    }
}

/// One matched set: at least one case and at least one control of like
/// ancestry.
#[derive(Debug, Clone, Serialize)]
pub struct MatchedSet {
    pub set_id: usize,
    pub cases: Vec<String>,
    pub controls: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Unmatched {
    pub subject_id: String,
    pub status: Option<Status>,
    pub reason: UnmatchedReason,
}

/// Result of matching one cluster.
#[derive(Debug, Clone, Serialize, Default)]
pub struct MatchResult {
    pub sets: Vec<MatchedSet>,
    pub total_cost: f64,
    /// The integer optimum actually minimized by the flow,
    /// `sum(round(cost_scale * distance))` over used case-control arcs.
    pub total_cost_scaled: i64,
    /// Number of case-control arcs in the solution.
    pub arcs_used: usize,
    pub unmatched: Vec<Unmatched>,
}

impl MatchResult {
    pub fn mean_within_set_distance(&self) -> f64 {
        if self.arcs_used == 0 {
            0.0
        } else {
            self.total_cost / self.arcs_used as f64
        }
    }
}

/// Optimal full matching of one cluster by minimum-cost flow.
///
/// Rows of `coords` align with `ids` and `statuses`; distances are Euclidean
/// in that space, scaled to integers by `cfg.cost_scale` with half-even
/// rounding. Every case links to at least one control and vice versa;
/// connected case-control components of the solution form the matched sets.
/// With zero columns all distances vanish and controls are dealt round-robin
/// to cases (or cases to controls, whichever arm is larger).
pub fn cc_match(
    ids: &[String],
    coords: ArrayView2<'_, f64>,
    statuses: &[Status],
    cfg: &MatchConfig,
) -> Result<MatchResult> {
    cfg.validate()?;
    if ids.len() != statuses.len() || coords.nrows() != ids.len() {
        return Err(Error::Argument(format!(
            "mismatched cluster arrays: {} ids, {} coordinate rows, {} statuses",
            ids.len(),
            coords.nrows(),
            statuses.len()
        )));
    }

    let cases: Vec<usize> = (0..ids.len())
        .filter(|&i| statuses[i] == Status::Case)
        .collect();
    let controls: Vec<usize> = (0..ids.len())
        .filter(|&i| statuses[i] == Status::Control)
        .collect();
    let (nc, nt) = (cases.len(), controls.len());

    if nc == 0 || nt == 0 {
        return Ok(MatchResult {
            unmatched: (0..ids.len())
                .map(|i| Unmatched {
                    subject_id: ids[i].clone(),
                    status: Some(statuses[i]),
                    reason: UnmatchedReason::SingleArm,
                })
                .collect(),
            ..MatchResult::default()
        });
    }

    let u_case = cfg.max_controls_per_case.unwrap_or(nt).min(nt);
    let u_ctrl = cfg.max_cases_per_control.unwrap_or(nc).min(nc);
    if nt > nc * u_case {
        return Err(Error::Constraint(format!(
            "max_controls_per_case = {u_case} cannot cover {nt} controls with {nc} cases"
        )));
    }
    if nc > nt * u_ctrl {
        return Err(Error::Constraint(format!(
            "max_cases_per_control = {u_ctrl} cannot cover {nc} cases with {nt} controls"
        )));
    }

    if coords.ncols() == 0 {
        return Ok(round_robin(ids, statuses, &cases, &controls));
    }

    let distance = |a: usize, b: usize| -> f64 {
        let mut d = 0.0;
        for c in 0..coords.ncols() {
            let diff = coords[(a, c)] - coords[(b, c)];
            d += diff * diff;
        }
        d.sqrt()
    };

    // circulation with lower bound 1 on every source->case and control->sink
    // arc, reduced to plain min-cost max-flow between two auxiliary nodes
    let (s, t, s2, t2) = (0, 1, 2, 3);
    let case_node = |i: usize| 4 + i;
    let ctrl_node = |j: usize| 4 + nc + j;
    let mut net = MinCostFlow::new(4 + nc + nt);
    net.add_edge(t, s, i64::MAX / 4, 0);
    for i in 0..nc {
        net.add_edge(s, case_node(i), (u_case - 1) as i64, 0);
    }
    for i in 0..nc {
        net.add_edge(s2, case_node(i), 1, 0);
    }
    net.add_edge(s, t2, nc as i64, 0);
    for j in 0..nt {
        net.add_edge(ctrl_node(j), t, (u_ctrl - 1) as i64, 0);
    }
    for j in 0..nt {
        net.add_edge(ctrl_node(j), t2, 1, 0);
    }
    net.add_edge(s2, t, nt as i64, 0);

    let mut pair_edges = Vec::with_capacity(nc * nt);
    for (ci, &case) in cases.iter().enumerate() {
        for (cj, &ctrl) in controls.iter().enumerate() {
            let w = (cfg.cost_scale as f64 * distance(case, ctrl)).round_ties_even() as i64;
            let edge = net.add_edge(case_node(ci), ctrl_node(cj), 1, w);
            pair_edges.push((ci, cj, edge, distance(case, ctrl)));
        }
    }

    let (flow, scaled_cost) = net.solve(s2, t2);
    if flow != (nc + nt) as i64 {
        return Err(Error::Constraint(format!(
            "matching flow infeasible: routed {flow} of {} required units",
            nc + nt
        )));
    }

    let mut total_cost = 0.0;
    let mut arcs_used = 0usize;
    let mut pair_lists: Vec<Vec<usize>> = vec![Vec::new(); nc]; // controls per case
    for &(ci, cj, edge, dist) in &pair_edges {
        if net.edge_flow(edge) == 1 {
            total_cost += dist;
            arcs_used += 1;
            pair_lists[ci].push(cj);
        }
    }

    let sets = components_to_sets(ids, &cases, &controls, &pair_lists);
    Ok(MatchResult {
        sets,
        total_cost,
        total_cost_scaled: scaled_cost,
        arcs_used,
        unmatched: Vec::new(),
    })
}

/// Distance-free grouping for zero-dimensional maps: one set per member of
/// the smaller arm, with the larger arm dealt round-robin by index.
fn round_robin(
    ids: &[String],
    statuses: &[Status],
    cases: &[usize],
    controls: &[usize],
) -> MatchResult {
    let (nc, nt) = (cases.len(), controls.len());
    let mut pair_lists: Vec<Vec<usize>> = vec![Vec::new(); nc];
    let mut arcs = 0usize;
    if nc <= nt {
        for (j, _) in controls.iter().enumerate() {
            pair_lists[j % nc].push(j);
            arcs += 1;
        }
    } else {
        for (i, _) in cases.iter().enumerate() {
            pair_lists[i].push(i % nt);
            arcs += 1;
        }
    }
    let sets = components_to_sets(ids, cases, controls, &pair_lists);
    MatchResult {
        sets,
        total_cost: 0.0,
        total_cost_scaled: 0,
        arcs_used: arcs,
        unmatched: Vec::new(),
    }
}

/// Connected case-control components of the pairing graph, as matched sets
/// ordered by their smallest cluster member index.
fn components_to_sets(
    ids: &[String],
    cases: &[usize],
    controls: &[usize],
    pair_lists: &[Vec<usize>],
) -> Vec<MatchedSet> {
    let (nc, nt) = (cases.len(), controls.len());
    let mut comp = vec![usize::MAX; nc + nt]; // cases then controls
    let mut n_comp = 0usize;
    for start in 0..nc {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = n_comp;
        n_comp += 1;
        let mut stack = vec![start];
        comp[start] = id;
        while let Some(v) = stack.pop() {
            if v < nc {
                for &cj in &pair_lists[v] {
                    if comp[nc + cj] == usize::MAX {
                        comp[nc + cj] = id;
                        stack.push(nc + cj);
                    }
                }
            } else {
                let cj = v - nc;
                for (ci, list) in pair_lists.iter().enumerate() {
                    if list.contains(&cj) && comp[ci] == usize::MAX {
                        comp[ci] = id;
                        stack.push(ci);
                    }
                }
            }
        }
    }

    let mut groups: Vec<(usize, Vec<usize>, Vec<usize>)> = (0..n_comp)
        .map(|c| {
            let set_cases: Vec<usize> = (0..nc).filter(|&i| comp[i] == c).collect();
            let set_ctrls: Vec<usize> = (0..nt).filter(|&j| comp[nc + j] == c).collect();
            let min_member = set_cases
                .iter()
                .map(|&i| cases[i])
                .chain(set_ctrls.iter().map(|&j| controls[j]))
                .min()
                .unwrap();
            (min_member, set_cases, set_ctrls)
        })
        .collect();
    groups.sort_by_key(|(min_member, _, _)| *min_member);
    groups
        .into_iter()
        .enumerate()
        .map(|(set_id, (_, set_cases, set_ctrls))| MatchedSet {
            set_id,
            cases: set_cases.iter().map(|&i| ids[cases[i]].clone()).collect(),
            controls: set_ctrls.iter().map(|&j| ids[controls[j]].clone()).collect(),
        })
        .collect()
}

/// Per-leaf matching outcome. `d` is the map dimension actually used.
#[derive(Debug)]
pub struct LeafReport {
    pub leaf_id: usize,
    pub d: usize,
    pub n_members: usize,
    pub outcome: Result<MatchResult>,
}

/// Matches cases to controls independently inside every leaf of a finished
/// tree. Each leaf gets a fresh eigenmap over all its members (full base, no
/// projection); the matching space is the leading `max(D, D*)` dimensions,
/// clamped to what the map retains. Leaves with a single arm report their
/// members unmatched; a leaf whose panel is degenerate falls back to
/// distance-free matching; any other leaf failure is recorded without
/// aborting its siblings.
pub fn match_all_leaves(
    tree: &ClusterTree,
    g: &GenotypeMatrix,
    phenotypes: &PhenotypeTable,
    cfg: &MatchConfig,
    alpha: f64,
) -> Result<Vec<LeafReport>> {
    cfg.validate()?;
    let leaves: Vec<&crate::engine::ClusterNode> = tree.leaves().collect();
    let reports: Vec<LeafReport> = leaves
        .par_iter()
        .map(|leaf| match_one_leaf(leaf, g, phenotypes, cfg, alpha))
        .collect();
    Ok(reports)
}

fn match_one_leaf(
    leaf: &crate::engine::ClusterNode,
    g: &GenotypeMatrix,
    phenotypes: &PhenotypeTable,
    cfg: &MatchConfig,
    alpha: f64,
) -> LeafReport {
    let member_ids: Vec<String> = leaf
        .subjects
        .iter()
        .map(|&s| g.subject_ids[s].clone())
        .collect();
    let mut pheno_rows = Vec::new();
    let mut pheno_ids = Vec::new();
    let mut pheno_statuses = Vec::new();
    let mut no_pheno = Vec::new();
    for (row, id) in member_ids.iter().enumerate() {
        match phenotypes.status(id) {
            Some(status) => {
                pheno_rows.push(row);
                pheno_ids.push(id.clone());
                pheno_statuses.push(status);
            }
            None => no_pheno.push(Unmatched {
                subject_id: id.clone(),
                status: None,
                reason: UnmatchedReason::NoPhenotype,
            }),
        }
    }

    let n_cases = pheno_statuses.iter().filter(|s| **s == Status::Case).count();
    let n_controls = pheno_statuses.len() - n_cases;
    if n_cases == 0 || n_controls == 0 {
        let mut unmatched: Vec<Unmatched> = pheno_ids
            .iter()
            .zip(&pheno_statuses)
            .map(|(id, status)| Unmatched {
                subject_id: id.clone(),
                status: Some(*status),
                reason: UnmatchedReason::SingleArm,
            })
            .collect();
        unmatched.extend(no_pheno);
        return LeafReport {
            leaf_id: leaf.id,
            d: 0,
            n_members: leaf.subjects.len(),
            outcome: Ok(MatchResult {
                unmatched,
                ..MatchResult::default()
            }),
        };
    }

    // fresh map over every leaf member; degenerate panels mean all members
    // share ancestry exactly, so distances collapse to zero
    let (d, coords) = match build_eigenmap(g, &leaf.subjects, alpha) {
        Ok(map) => {
            let d = match_dimension(map.d_significant, cfg).min(map.retained_dims());
            let mut sub = ndarray::Array2::zeros((pheno_rows.len(), d));
            for (out_r, &row) in pheno_rows.iter().enumerate() {
                for c in 0..d {
                    sub[(out_r, c)] = map.coords[(row, c)];
                }
            }
            (d, sub)
        }
        Err(Error::DegeneratePanel(_)) => (0, ndarray::Array2::zeros((pheno_rows.len(), 0))),
        Err(e) => {
            return LeafReport {
                leaf_id: leaf.id,
                d: 0,
                n_members: leaf.subjects.len(),
                outcome: Err(e),
            }
        }
    };

    let outcome = cc_match(&pheno_ids, coords.view(), &pheno_statuses, cfg).map(|mut r| {
        r.unmatched.extend(no_pheno);
        r
    });
    LeafReport {
        leaf_id: leaf.id,
        d,
        n_members: leaf.subjects.len(),
        outcome,
    }
}
