use std::collections::{HashMap, HashSet};

use log::warn;
use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Sentinel for a missing genotype call.
pub const MISSING: u8 = u8::MAX;

/// Subjects x SNPs matrix of minor-allele counts in {0, 1, 2}, with
/// [`MISSING`] marking absent calls.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeMatrix {
    pub subject_ids: Vec<String>,
    pub snp_ids: Vec<String>,
    pub values: Array2<u8>,
}

impl GenotypeMatrix {
    /// Builds a matrix and checks the container invariants: dimensions match
    /// the id lists, ids are unique, and every entry is 0, 1, 2 or MISSING.
    pub fn new(
        subject_ids: Vec<String>,
        snp_ids: Vec<String>,
        values: Array2<u8>,
    ) -> Result<Self> {
        if values.nrows() != subject_ids.len() {
            return Err(Error::Validation(format!(
                "row count {} does not match subject count {}",
                values.nrows(),
                subject_ids.len()
            )));
        }
        if values.ncols() != snp_ids.len() {
            return Err(Error::Validation(format!(
                "column count {} does not match SNP count {}",
                values.ncols(),
                snp_ids.len()
            )));
        }
        check_unique(&subject_ids, "subject id")?;
        check_unique(&snp_ids, "SNP id")?;
        if let Some(bad) = values.iter().find(|&&v| v > 2 && v != MISSING) {
            return Err(Error::Validation(format!(
                "genotype value {bad} outside {{0,1,2,NA}}"
            )));
        }
        Ok(Self {
            subject_ids,
            snp_ids,
            values,
        })
    }

    /// Subject count.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// SNP count.
    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    /// Index of a subject id, if present.
    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.subject_ids.iter().position(|s| s == id)
    }

    /// Minor allele frequency of one column over its non-missing entries:
    /// `min(p, 1-p)` with `p = mean(count)/2`. `None` if every call is missing.
    pub fn column_maf(&self, snp: usize) -> Option<f64> {
        let col = self.values.column(snp);
        let (sum, count) = col
            .iter()
            .filter(|&&v| v != MISSING)
            .fold((0u64, 0u64), |(s, c), &v| (s + v as u64, c + 1));
        if count == 0 {
            return None;
        }
        let p = sum as f64 / (2.0 * count as f64);
        Some(p.min(1.0 - p))
    }

    /// Retains exactly the SNPs whose MAF is strictly greater than
    /// `threshold`. All-missing SNPs are dropped with a warning. The subject
    /// set is unchanged.
    pub fn maf_filter(&self, threshold: f64) -> Result<GenotypeMatrix> {
        if !(0.0..=0.5).contains(&threshold) {
            return Err(Error::Argument(format!(
                "MAF threshold {threshold} outside [0, 0.5]"
            )));
        }
        let mut keep = Vec::new();
        for j in 0..self.m() {
            match self.column_maf(j) {
                Some(maf) if maf > threshold => keep.push(j),
                Some(_) => {}
                None => warn!(
                    "SNP {} has no non-missing calls; dropped from the panel",
                    self.snp_ids[j]
                ),
            }
        }
        let snp_ids = keep.iter().map(|&j| self.snp_ids[j].clone()).collect();
        let mut values = Array2::zeros((self.n(), keep.len()));
        for (out_j, &j) in keep.iter().enumerate() {
            values.column_mut(out_j).assign(&self.values.column(j));
        }
        GenotypeMatrix::new(self.subject_ids.clone(), snp_ids, values)
    }

    /// Dense real copy with each MISSING entry replaced by the supplied
    /// per-SNP mean.
    pub fn impute_missing(&self, means: &[f64]) -> Result<Array2<f64>> {
        if means.len() != self.m() {
            return Err(Error::Argument(format!(
                "means vector has length {}, expected {}",
                means.len(),
                self.m()
            )));
        }
        let mut out = Array2::zeros((self.n(), self.m()));
        for ((i, j), &v) in self.values.indexed_iter() {
            out[(i, j)] = if v == MISSING { means[j] } else { v as f64 };
        }
        Ok(out)
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::Validation(format!("duplicate {what} \"{id}\"")));
        }
    }
    Ok(())
}

/// Case/control status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Status {
    Case,
    Control,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Case => "case",
            Status::Control => "control",
        }
    }
}

/// Case/control labels keyed by subject id, in file order.
#[derive(Debug, Clone, Default)]
pub struct PhenotypeTable {
    entries: Vec<(String, Status)>,
    by_id: HashMap<String, Status>,
}

impl PhenotypeTable {
    pub fn new(entries: Vec<(String, Status)>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(entries.len());
        for (id, status) in &entries {
            if by_id.insert(id.clone(), *status).is_some() {
                return Err(Error::Validation(format!("duplicate subject \"{id}\"")));
            }
        }
        Ok(Self { entries, by_id })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn status(&self, subject_id: &str) -> Option<Status> {
        self.by_id.get(subject_id).copied()
    }

    pub fn entries(&self) -> &[(String, Status)] {
        &self.entries
    }

    /// Subjects named in the phenotype table but absent from the genotype
    /// panel, in table order. Callers decide whether these warrant a warning
    /// or a hard error.
    pub fn unknown_subjects(&self, genotypes: &GenotypeMatrix) -> Vec<String> {
        let known: HashSet<&str> = genotypes.subject_ids.iter().map(String::as_str).collect();
        self.entries
            .iter()
            .filter(|(id, _)| !known.contains(id.as_str()))
            .map(|(id, _)| id.clone())
            .collect()
    }
}

/// Mean minor-allele count per column over non-missing entries of the given
/// rows. Columns with no non-missing entry in the selection report 0.
pub fn column_means(values: &Array2<u8>, rows: &[usize]) -> Vec<f64> {
    (0..values.ncols())
        .map(|j| {
            let col = values.column(j);
            column_mean(&col, rows)
        })
        .collect()
}

fn column_mean(col: &ArrayView1<u8>, rows: &[usize]) -> f64 {
    let mut sum = 0u64;
    let mut count = 0u64;
    for &i in rows {
        let v = col[i];
        if v != MISSING {
            sum += v as u64;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum as f64 / count as f64
    }
}
