//! Genetic eigenmap toolkit: ancestry structure estimation from SNP genotype
//! matrices by recursive spectral clustering, with case-control matching of
//! like-ancestry subjects inside homogeneous clusters.
//!
//! The pipeline builds a standardized genetic-similarity kernel over a small
//! *base* sample, eigen-decomposes it, selects the number of significant
//! dimensions with a Tracy-Widom test, clusters the base subjects with Ward
//! linkage, and extends the map to everyone else with the Nystrom
//! approximation. The recursion repeats inside each cluster, so no dense
//! matrix ever grows beyond the base-sample order.
//!
//! Modules:
//! - [`genotype`]: genotype/phenotype containers, MAF filtering, imputation
//! - [`io`]: text formats (genotype TSV, PLINK .raw, phenotypes, trees)
//! - [`spectral`]: normalization, kernel, eigendecomposition, Tracy-Widom
//!   dimension selection, Nystrom projection
//! - [`cluster`]: Ward agglomeration and nearest-base assignment
//! - [`engine`]: the recursive divide-and-conquer drivers
//! - [`matching`]: optimal full matching of cases to controls per leaf
//! - [`simulate`]: Balding-Nichols panels with known structure

pub mod cluster;
pub mod engine;
pub mod error;
pub mod flow;
pub mod genotype;
pub mod io;
pub mod matching;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
