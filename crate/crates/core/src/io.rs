use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::engine::{ClusterNode, ClusterTree, EngineMode, StopReason};
use crate::error::{Error, Result};
use crate::genotype::{GenotypeMatrix, PhenotypeTable, Status, MISSING};
use crate::matching::LeafReport;
use crate::spectral::{TwReport, MAX_D};

/// Supported genotype table layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenotypeFormat {
    /// Header `subject_id<TAB>snp...`, one row per subject, values 0|1|2|NA.
    Tsv,
    /// Whitespace-delimited with the six standard leading columns
    /// `FID IID PAT MAT SEX PHENOTYPE`; IID becomes the subject id.
    PlinkRaw,
}

pub fn load_genotypes(path: &Path, format: GenotypeFormat) -> Result<GenotypeMatrix> {
    parse_genotypes(BufReader::new(File::open(path)?), format)
}

pub fn parse_genotypes<R: BufRead>(reader: R, format: GenotypeFormat) -> Result<GenotypeMatrix> {
    match format {
        GenotypeFormat::Tsv => parse_genotype_tsv(reader),
        GenotypeFormat::PlinkRaw => parse_plink_raw(reader),
    }
}

fn genotype_token(tok: &str, line: usize) -> Result<u8> {
    match tok {
        "0" => Ok(0),
        "1" => Ok(1),
        "2" => Ok(2),
        "NA" => Ok(MISSING),
        other => Err(Error::Value {
            line,
            msg: format!("genotype token \"{other}\" is not 0, 1, 2 or NA"),
        }),
    }
}

fn read_trimmed_lines<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    for line in reader.lines() {
        let line = line?;
        lines.push(line.trim_end_matches('\r').to_string());
    }
    Ok(lines)
}

fn parse_genotype_tsv<R: BufRead>(reader: R) -> Result<GenotypeMatrix> {
    let lines = read_trimmed_lines(reader)?;
    let header = lines.first().ok_or(Error::Parse {
        line: 1,
        msg: "missing header line".into(),
    })?;
    let fields: Vec<&str> = header.split('\t').collect();
    if fields.is_empty() || fields[0].is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with a subject-id column".into(),
        });
    }
    let snp_ids: Vec<String> = fields[1..].iter().map(|s| s.to_string()).collect();
    let m = snp_ids.len();

    let mut subject_ids = Vec::new();
    let mut rows: Vec<u8> = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != m + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} columns, found {}", m + 1, fields.len()),
            });
        }
        subject_ids.push(fields[0].to_string());
        for tok in &fields[1..] {
            rows.push(genotype_token(tok, lineno)?);
        }
    }
    let n = subject_ids.len();
    let values = Array2::from_shape_vec((n, m), rows)
        .expect("row-major buffer matches parsed dimensions");
    GenotypeMatrix::new(subject_ids, snp_ids, values)
}

const PLINK_LEADING: [&str; 6] = ["FID", "IID", "PAT", "MAT", "SEX", "PHENOTYPE"];

fn parse_plink_raw<R: BufRead>(reader: R) -> Result<GenotypeMatrix> {
    let lines = read_trimmed_lines(reader)?;
    let header = lines.first().ok_or(Error::Parse {
        line: 1,
        msg: "missing header line".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() < PLINK_LEADING.len() {
        return Err(Error::Parse {
            line: 1,
            msg: format!(
                "header has {} columns, expected at least {}",
                fields.len(),
                PLINK_LEADING.len()
            ),
        });
    }
    for (got, want) in fields.iter().zip(PLINK_LEADING.iter()) {
        if got != want {
            return Err(Error::Parse {
                line: 1,
                msg: format!("leading column \"{got}\" should be \"{want}\""),
            });
        }
    }
    let snp_ids: Vec<String> = fields[PLINK_LEADING.len()..]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let m = snp_ids.len();

    let mut subject_ids = Vec::new();
    let mut rows: Vec<u8> = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "blank line".into(),
            });
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != PLINK_LEADING.len() + m {
            return Err(Error::Parse {
                line: lineno,
                msg: format!(
                    "expected {} columns, found {}",
                    PLINK_LEADING.len() + m,
                    fields.len()
                ),
            });
        }
        subject_ids.push(fields[1].to_string());
        for tok in &fields[PLINK_LEADING.len()..] {
            rows.push(genotype_token(tok, lineno)?);
        }
    }
    let n = subject_ids.len();
    let values = Array2::from_shape_vec((n, m), rows)
        .expect("row-major buffer matches parsed dimensions");
    GenotypeMatrix::new(subject_ids, snp_ids, values)
}

pub fn save_genotypes<W: Write>(mut w: W, g: &GenotypeMatrix) -> Result<()> {
    write!(w, "subject_id")?;
    for id in &g.snp_ids {
        write!(w, "\t{id}")?;
    }
    writeln!(w)?;
    for (i, id) in g.subject_ids.iter().enumerate() {
        write!(w, "{id}")?;
        for j in 0..g.m() {
            let v = g.values[(i, j)];
            if v == MISSING {
                write!(w, "\tNA")?;
            } else {
                write!(w, "\t{v}")?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_genotypes_path(path: &Path, g: &GenotypeMatrix) -> Result<()> {
    save_genotypes(std::io::BufWriter::new(File::create(path)?), g)
}

pub fn load_phenotypes(path: &Path) -> Result<PhenotypeTable> {
    parse_phenotypes(BufReader::new(File::open(path)?))
}

/// `subject_id<TAB>status` with status 1 = case, 0 = control; no header.
pub fn parse_phenotypes<R: BufRead>(reader: R) -> Result<PhenotypeTable> {
    let lines = read_trimmed_lines(reader)?;
    let mut entries = Vec::new();
    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 2 columns, found {}", fields.len()),
            });
        }
        let status = match fields[1] {
            "1" => Status::Case,
            "0" => Status::Control,
            other => {
                return Err(Error::Value {
                    line: lineno,
                    msg: format!("status token \"{other}\" is not 0 or 1"),
                })
            }
        };
        entries.push((fields[0].to_string(), status));
    }
    PhenotypeTable::new(entries)
}

/// Truth labels for simulated panels: `subject_id<TAB>pop_index`.
pub fn save_labels<W: Write>(mut w: W, ids: &[String], labels: &[usize]) -> Result<()> {
    for (id, label) in ids.iter().zip(labels) {
        writeln!(w, "{id}\t{label}")?;
    }
    Ok(())
}

const ASSIGNMENTS_HEADER: &str = "subject_id\tnode_path\tleaf_id";

pub fn write_assignments<W: Write>(
    mut w: W,
    rows: &[(String, String, usize)],
) -> Result<()> {
    writeln!(w, "{ASSIGNMENTS_HEADER}")?;
    for (subject, path, leaf) in rows {
        writeln!(w, "{subject}\t{path}\t{leaf}")?;
    }
    Ok(())
}

pub fn parse_assignments<R: BufRead>(reader: R) -> Result<Vec<(String, String, usize)>> {
    let lines = read_trimmed_lines(reader)?;
    let header = lines.first().ok_or(Error::Parse {
        line: 1,
        msg: "missing header line".into(),
    })?;
    if header != ASSIGNMENTS_HEADER {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header \"{header}\""),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 3 columns, found {}", fields.len()),
            });
        }
        let leaf: usize = fields[2].parse().map_err(|_| Error::Value {
            line: lineno,
            msg: format!("leaf id \"{}\" is not an integer", fields[2]),
        })?;
        rows.push((fields[0].to_string(), fields[1].to_string(), leaf));
    }
    Ok(rows)
}

/// One node of the serialized tree. Leaf records carry their subject ids;
/// internal membership is recovered from the children.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeNodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub size: usize,
    pub d: Option<usize>,
    pub eigenvalues: Vec<f64>,
    pub k: usize,
    pub children: Vec<usize>,
    pub stop_reason: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subjects: Option<Vec<String>>,
}

pub fn tree_records(tree: &ClusterTree, subject_ids: &[String]) -> Vec<TreeNodeRecord> {
    tree.nodes
        .iter()
        .map(|n| TreeNodeRecord {
            id: n.id,
            parent: n.parent,
            depth: n.depth,
            size: n.size(),
            d: n.d,
            eigenvalues: n.eigenvalues.iter().copied().take(MAX_D).collect(),
            k: n.k(),
            children: n.children.clone(),
            stop_reason: n.stop_reason,
            subjects: n.is_leaf().then(|| {
                n.subjects
                    .iter()
                    .map(|&s| subject_ids[s].clone())
                    .collect()
            }),
        })
        .collect()
}

pub fn write_tree<W: Write>(w: W, tree: &ClusterTree, subject_ids: &[String]) -> Result<()> {
    serde_json::to_writer_pretty(w, &tree_records(tree, subject_ids))?;
    Ok(())
}

pub fn parse_tree<R: Read>(reader: R) -> Result<Vec<TreeNodeRecord>> {
    Ok(serde_json::from_reader(reader)?)
}

pub fn load_tree(path: &Path) -> Result<Vec<TreeNodeRecord>> {
    parse_tree(BufReader::new(File::open(path)?))
}

/// Rebuilds an engine tree from serialized records against the genotype
/// panel it was computed on. The leaf subject sets must exist in the panel
/// and partition it exactly.
pub fn tree_from_records(
    records: &[TreeNodeRecord],
    g: &GenotypeMatrix,
    mode: EngineMode,
) -> Result<ClusterTree> {
    if records.is_empty() {
        return Err(Error::Validation("tree has no nodes".into()));
    }
    for (i, r) in records.iter().enumerate() {
        if r.id != i {
            return Err(Error::Validation(format!(
                "node ids must be dense and ordered; found {} at position {i}",
                r.id
            )));
        }
        for &c in &r.children {
            if c <= r.id || c >= records.len() {
                return Err(Error::Validation(format!(
                    "node {} lists invalid child {c}",
                    r.id
                )));
            }
        }
        if r.id == 0 && r.parent.is_some() {
            return Err(Error::Validation("root must have no parent".into()));
        }
        if r.id > 0 && r.parent.is_none() {
            return Err(Error::Validation(format!("node {} has no parent", r.id)));
        }
    }

    let index_of: HashMap<&str, usize> = g
        .subject_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut subjects: Vec<Vec<usize>> = vec![Vec::new(); records.len()];
    let mut unknown = Vec::new();
    for r in records {
        if !r.children.is_empty() {
            continue;
        }
        let Some(listed) = &r.subjects else {
            return Err(Error::Validation(format!(
                "leaf {} is missing its subject list",
                r.id
            )));
        };
        let mut idx = Vec::with_capacity(listed.len());
        for id in listed {
            match index_of.get(id.as_str()) {
                Some(&i) => idx.push(i),
                None => unknown.push(id.clone()),
            }
        }
        idx.sort_unstable();
        subjects[r.id] = idx;
    }
    if !unknown.is_empty() {
        let shown: Vec<String> = unknown.iter().take(10).cloned().collect();
        return Err(Error::Validation(format!(
            "{} tree subjects missing from the genotype panel: {}",
            unknown.len(),
            shown.join(", ")
        )));
    }

    // children always carry larger ids, so a reverse sweep fills parents
    for i in (0..records.len()).rev() {
        if records[i].children.is_empty() {
            continue;
        }
        let mut merged = Vec::new();
        for &c in &records[i].children {
            merged.extend_from_slice(&subjects[c]);
        }
        merged.sort_unstable();
        merged.dedup();
        let total: usize = records[i].children.iter().map(|&c| subjects[c].len()).sum();
        if merged.len() != total {
            return Err(Error::Validation(format!("children of node {i} overlap")));
        }
        subjects[i] = merged;
    }
    if subjects[0].len() != g.n() {
        return Err(Error::Validation(format!(
            "tree covers {} of {} subjects in the panel",
            subjects[0].len(),
            g.n()
        )));
    }

    let nodes = records
        .iter()
        .zip(subjects)
        .map(|(r, subj)| ClusterNode {
            id: r.id,
            parent: r.parent,
            depth: r.depth,
            subjects: subj,
            base: Vec::new(),
            d: r.d,
            eigenvalues: r.eigenvalues.clone(),
            children: r.children.clone(),
            stop_reason: r.stop_reason,
        })
        .collect();
    Ok(ClusterTree {
        nodes,
        n_subjects: g.n(),
        mode,
    })
}

/// Graphviz rendering of the recursion: one node per cluster labeled
/// "id / size / D".
pub fn write_tree_dot<W: Write>(mut w: W, tree: &ClusterTree) -> Result<()> {
    writeln!(w, "digraph clusters {{")?;
    writeln!(w, "  node [shape=circle];")?;
    for node in &tree.nodes {
        let d = node
            .d
            .map_or_else(|| "-".to_string(), |d| d.to_string());
        writeln!(
            w,
            "  n{} [label=\"{} / {} / {}\"];",
            node.id,
            node.id,
            node.size(),
            d
        )?;
    }
    for node in &tree.nodes {
        for &c in &node.children {
            writeln!(w, "  n{} -> n{};", node.id, c)?;
        }
    }
    writeln!(w, "}}")?;
    Ok(())
}

/// Per-node eigenmap coordinates: `subject_id<TAB>c1...cK` over the node's
/// subjects.
pub fn write_node_coords<W: Write>(
    mut w: W,
    subject_ids: &[String],
    subjects: &[usize],
    coords: ArrayView2<'_, f64>,
) -> Result<()> {
    write!(w, "subject_id")?;
    for c in 1..=coords.ncols() {
        write!(w, "\tc{c}")?;
    }
    writeln!(w)?;
    for (row, &s) in subjects.iter().enumerate() {
        write!(w, "{}", subject_ids[s])?;
        for c in 0..coords.ncols() {
            write!(w, "\t{}", coords[(row, c)])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct NodeMapSidecar<'a> {
    node: usize,
    d: usize,
    alpha: f64,
    eigenvalues: &'a [f64],
    tw: &'a TwReport,
}

/// JSON sidecar with the spectrum and significance evidence behind one
/// node's coordinates.
pub fn write_node_map_json<W: Write>(
    w: W,
    node: usize,
    d: usize,
    eigenvalues: &[f64],
    tw: &TwReport,
) -> Result<()> {
    serde_json::to_writer_pretty(
        w,
        &NodeMapSidecar {
            node,
            d,
            alpha: tw.alpha,
            eigenvalues,
            tw,
        },
    )?;
    Ok(())
}

const MATCHES_HEADER: &str = "leaf_id\tset_id\tsubject_id\trole\treason";

/// Matched sets and unmatched subjects across all leaves. Matched rows carry
/// reason `-`; unmatched rows carry set id `-` and the reason.
pub fn write_matches<W: Write>(mut w: W, reports: &[LeafReport]) -> Result<()> {
    writeln!(w, "{MATCHES_HEADER}")?;
    for report in reports {
        let Ok(result) = &report.outcome else {
            continue;
        };
        for set in &result.sets {
            for id in &set.cases {
                writeln!(w, "{}\t{}\t{}\tcase\t-", report.leaf_id, set.set_id, id)?;
            }
            for id in &set.controls {
                writeln!(w, "{}\t{}\t{}\tcontrol\t-", report.leaf_id, set.set_id, id)?;
            }
        }
        for u in &result.unmatched {
            let role = u.status.map_or("-", |s| s.as_str());
            writeln!(
                w,
                "{}\t-\t{}\t{}\t{}",
                report.leaf_id,
                u.subject_id,
                role,
                u.reason.as_str()
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct LeafSummary<'a> {
    leaf_id: usize,
    d: usize,
    n_members: usize,
    sets: usize,
    matched_cases: usize,
    matched_controls: usize,
    unmatched: usize,
    mean_within_set_distance: f64,
    total_cost: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

/// Per-leaf matching summary as a JSON array.
pub fn write_match_summary<W: Write>(w: W, reports: &[LeafReport]) -> Result<()> {
    let mut errors: Vec<String> = Vec::new();
    for r in reports {
        if let Err(e) = &r.outcome {
            errors.push(e.to_string());
        }
    }
    let mut err_iter = errors.iter();
    let rows: Vec<LeafSummary> = reports
        .iter()
        .map(|r| match &r.outcome {
            Ok(result) => LeafSummary {
                leaf_id: r.leaf_id,
                d: r.d,
                n_members: r.n_members,
                sets: result.sets.len(),
                matched_cases: result.sets.iter().map(|s| s.cases.len()).sum(),
                matched_controls: result.sets.iter().map(|s| s.controls.len()).sum(),
                unmatched: result.unmatched.len(),
                mean_within_set_distance: result.mean_within_set_distance(),
                total_cost: result.total_cost,
                error: None,
            },
            Err(_) => LeafSummary {
                leaf_id: r.leaf_id,
                d: r.d,
                n_members: r.n_members,
                sets: 0,
                matched_cases: 0,
                matched_controls: 0,
                unmatched: 0,
                mean_within_set_distance: 0.0,
                total_cost: 0.0,
                error: err_iter.next().map(|s| s.as_str()),
            },
        })
        .collect();
    serde_json::to_writer_pretty(w, &rows)?;
    Ok(())
}
