use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::genotype::{GenotypeMatrix, MISSING};

/// Balding-Nichols panel parameters. `fst` is the per-population divergence
/// from the ancestral frequency; 0 collapses every population onto it.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub n_pops: usize,
    pub subjects_per_pop: Vec<usize>,
    pub m: usize,
    pub fst: f64,
    pub ancestral_maf_range: (f64, f64),
    pub missing_rate: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pops == 0 {
            return Err(Error::Argument("need at least one population".into()));
        }
        if self.subjects_per_pop.len() != self.n_pops {
            return Err(Error::Argument(format!(
                "{} population sizes given for {} populations",
                self.subjects_per_pop.len(),
                self.n_pops
            )));
        }
        if self.subjects_per_pop.iter().any(|&s| s == 0) {
            return Err(Error::Argument("population sizes must be positive".into()));
        }
        if self.m == 0 {
            return Err(Error::Argument("need at least one SNP".into()));
        }
        if !(0.0..1.0).contains(&self.fst) {
            return Err(Error::Argument(format!(
                "fst {} outside [0, 1)",
                self.fst
            )));
        }
        let (lo, hi) = self.ancestral_maf_range;
        if !(lo > 0.0 && lo <= hi && hi <= 0.5) {
            return Err(Error::Argument(format!(
                "ancestral MAF range ({lo}, {hi}) not within (0, 0.5]"
            )));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::Argument(format!(
                "missing rate {} outside [0, 1)",
                self.missing_rate
            )));
        }
        Ok(())
    }
}

/// One Balding-Nichols frequency draw: Beta(p(1-F)/F, (1-p)(1-F)/F) around
/// the ancestral frequency `p`, or `p` itself when F = 0.
pub fn bn_frequency(rng: &mut ChaCha8Rng, p: f64, fst: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&fst) {
        return Err(Error::Argument(format!("fst {fst} outside [0, 1)")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!(
            "ancestral frequency {p} outside (0, 1)"
        )));
    }
    if fst == 0.0 {
        return Ok(p);
    }
    let c = (1.0 - fst) / fst;
    let beta = Beta::new(p * c, (1.0 - p) * c)
        .map_err(|e| Error::Argument(format!("invalid Beta parameters: {e}")))?;
    Ok(beta.sample(rng))
}

/// Simulated panel plus its true population labels and the per-population
/// allele frequencies actually drawn (populations x SNPs).
pub struct SimPanel {
    pub genotypes: GenotypeMatrix,
    pub labels: Vec<usize>,
    pub pop_frequencies: Array2<f64>,
}

/// Draws a panel under the Balding-Nichols model. Every SNP column runs on
/// its own stream keyed by (seed, SNP index), so columns are independent and
/// the full panel is reproducible from the config alone.
pub fn balding_nichols(cfg: &SimConfig) -> Result<(GenotypeMatrix, Vec<usize>)> {
    balding_nichols_with_frequencies(cfg).map(|p| (p.genotypes, p.labels))
}

pub fn balding_nichols_with_frequencies(cfg: &SimConfig) -> Result<SimPanel> {
    cfg.validate()?;
    let n: usize = cfg.subjects_per_pop.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (pop, &count) in cfg.subjects_per_pop.iter().enumerate() {
        labels.extend(std::iter::repeat(pop).take(count));
    }

    let width = n.to_string().len().max(4);
    let subject_ids: Vec<String> = (0..n).map(|i| format!("s{i:0width$}")).collect();
    let snp_ids: Vec<String> = (0..cfg.m).map(|j| format!("snp{j}")).collect();

    let mut values = Array2::zeros((n, cfg.m));
    let mut pop_frequencies = Array2::zeros((cfg.n_pops, cfg.m));
    let (lo, hi) = cfg.ancestral_maf_range;
    for j in 0..cfg.m {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(j as u64);
        let p = if lo == hi { lo } else { rng.gen_range(lo..hi) };
        let mut freqs = Vec::with_capacity(cfg.n_pops);
        for _ in 0..cfg.n_pops {
            freqs.push(bn_frequency(&mut rng, p, cfg.fst)?);
        }
        for (i, &pop) in labels.iter().enumerate() {
            let q = freqs[pop];
            let mut count = 0u8;
            if rng.gen::<f64>() < q {
                count += 1;
            }
            if rng.gen::<f64>() < q {
                count += 1;
            }
            let missing = rng.gen::<f64>() < cfg.missing_rate;
            values[(i, j)] = if missing { MISSING } else { count };
        }
        for (pop, &q) in freqs.iter().enumerate() {
            pop_frequencies[(pop, j)] = q;
        }
    }

    Ok(SimPanel {
        genotypes: GenotypeMatrix::new(subject_ids, snp_ids, values)?,
        labels,
        pop_frequencies,
    })
}
