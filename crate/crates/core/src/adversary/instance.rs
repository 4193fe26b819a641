//! The random hard instance: a uniform concept on `[2m]` and a hypothesis
//! matrix of `p` blocks, each `R·⌈exp(C_s d)⌉` uniform rows followed by `R`
//! rows biased toward the concept.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bits::PackedRow;
use crate::error::{param, Error, Result};
use crate::rng;

/// Default cap on the packed matrix, in bytes.
pub const DEFAULT_MAX_MATRIX_BYTES: u128 = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub c_s: f64,
    pub c_b: f64,
    pub c_l: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c_s: 1.0,
            c_b: 1.0,
            c_l: 1.0,
        }
    }
}

impl Constants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C_s", self.c_s), ("C_b", self.c_b), ("C_l", self.c_l)] {
            if !(v >= 1.0) || !v.is_finite() {
                return Err(param(format!("{name} must be a finite value >= 1, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    /// Training-sample size; the domain is `[2m]`.
    pub m: usize,
    pub d: f64,
    pub p: usize,
    pub r: usize,
    pub gamma: f64,
    pub constants: Constants,
    /// Append `c` as the last row, modeling `W(H ∪ c)`.
    pub append_concept: bool,
}

impl InstanceParams {
    pub fn new(m: usize, d: f64, p: usize, r: usize, gamma: f64) -> Self {
        Self {
            m,
            d,
            p,
            r,
            gamma,
            constants: Constants::default(),
            append_concept: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        if self.m == 0 || self.p == 0 || self.r == 0 {
            return Err(param("m, p and R must be at least 1"));
        }
        if !(self.d > 0.0) || !self.d.is_finite() {
            return Err(param(format!("d must be positive, got {}", self.d)));
        }
        let limit = 1.0 / (4.0 * self.constants.c_b);
        if !(self.gamma > 0.0 && self.gamma < limit) {
            return Err(param(format!(
                "gamma must lie in (0, 1/(4 C_b)) = (0, {limit}), got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn domain(&self) -> usize {
        2 * self.m
    }

    /// `⌈exp(C_s d)⌉`.
    pub fn uniform_factor(&self) -> f64 {
        (self.constants.c_s * self.d).exp().ceil()
    }

    /// Rows in one block: `R·⌈exp(C_s d)⌉` uniform plus `R` biased.
    pub fn block_rows(&self) -> f64 {
        self.r as f64 * self.uniform_factor() + self.r as f64
    }

    /// Rows of `H`, excluding any appended concept.
    pub fn hypothesis_rows(&self) -> f64 {
        self.p as f64 * self.block_rows()
    }

    /// `C_b γ`.
    pub fn bias(&self) -> f64 {
        self.constants.c_b * self.gamma
    }
}

/// Which rows of the matrix are biased, as a function of the layout only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub uniform_per_block: usize,
    pub biased_per_block: usize,
    pub blocks: usize,
}

impl Layout {
    pub fn block_len(&self) -> usize {
        self.uniform_per_block + self.biased_per_block
    }

    pub fn rows(&self) -> usize {
        self.blocks * self.block_len()
    }

    pub fn is_biased(&self, row: usize) -> bool {
        row < self.rows() && row % self.block_len() >= self.uniform_per_block
    }

    pub fn biased_rows(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.blocks).flat_map(move |b| {
            let start = b * self.block_len() + self.uniform_per_block;
            start..start + self.biased_per_block
        })
    }
}

#[derive(Clone, Debug)]
pub struct HardInstance {
    pub params: InstanceParams,
    pub layout: Layout,
    concept: PackedRow,
    rows: Vec<PackedRow>,
}

impl HardInstance {
    /// Draws a concept and matrix. `max_bytes` caps the packed matrix.
    pub fn generate(params: InstanceParams, seed: u64, max_bytes: u128) -> Result<Self> {
        params.validate()?;
        let rows_f = params.hypothesis_rows() + f64::from(u8::from(params.append_concept));
        let bytes = rows_f * (params.domain().div_ceil(64) * 8) as f64;
        if !(bytes <= max_bytes as f64) {
            return Err(Error::Resource(format!(
                "hypothesis matrix needs {bytes:.3e} bytes (budget {max_bytes})"
            )));
        }
        let layout = Layout {
            uniform_per_block: params.r * params.uniform_factor() as usize,
            biased_per_block: params.r,
            blocks: params.p,
        };
        let n = params.domain();
        let mut rng = rng::stream(seed, &[]);
        let concept = PackedRow::uniform(n, &mut rng);
        let disagree = 0.5 - params.bias();
        let mut rows = Vec::with_capacity(layout.rows() + 1);
        for _ in 0..layout.blocks {
            for _ in 0..layout.uniform_per_block {
                rows.push(PackedRow::uniform(n, &mut rng));
            }
            for _ in 0..layout.biased_per_block {
                rows.push(concept.xor(&PackedRow::bernoulli(n, disagree, &mut rng)));
            }
        }
        if params.append_concept {
            rows.push(concept.clone());
        }
        Ok(Self {
            params,
            layout,
            concept,
            rows,
        })
    }

    /// Swaps in a hand-written matrix. All rows count as unbiased and no
    /// concept row is appended.
    pub fn replace_rows(&mut self, rows: Vec<PackedRow>) {
        assert!(!rows.is_empty() && rows.iter().all(|r| r.len() == self.domain()));
        self.layout = Layout {
            uniform_per_block: rows.len(),
            biased_per_block: 0,
            blocks: 1,
        };
        self.params.append_concept = false;
        self.rows = rows;
    }

    /// Domain size `2m`.
    pub fn domain(&self) -> usize {
        self.params.domain()
    }

    pub fn concept(&self) -> &PackedRow {
        &self.concept
    }

    /// All matrix rows, including an appended concept.
    pub fn rows(&self) -> &[PackedRow] {
        &self.rows
    }

    /// Rows of `H` only.
    pub fn hypothesis_rows(&self) -> &[PackedRow] {
        &self.rows[..self.layout.rows()]
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// `c(i)` for each listed index.
    pub fn labels_of(&self, indices: &[usize]) -> Vec<i8> {
        indices.iter().map(|&i| self.concept.get(i)).collect()
    }

    /// Agreement count of the biased rows with the concept, and the
    /// number of entries inspected.
    pub fn biased_agreement(&self) -> (usize, usize) {
        let n = self.domain();
        let mut agree = 0;
        let mut total = 0;
        for i in self.layout.biased_rows() {
            agree += n - self.rows[i].hamming(&self.concept);
            total += n;
        }
        (agree, total)
    }

    /// Standardized deviation of the biased rows' agreement rate from
    /// `½ + C_b γ` under the binomial model.
    pub fn bias_z_score(&self) -> f64 {
        let (agree, total) = self.biased_agreement();
        let q = 0.5 + self.params.bias();
        let n = total as f64;
        (agree as f64 - n * q) / (n * q * (1.0 - q)).sqrt()
    }
}

/// `m` indices drawn uniformly with replacement from `[2m]`.
pub fn draw_training_sample<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<usize> {
    (0..m).map(|_| rng.gen_range(0..2 * m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions() {
        let mut p = InstanceParams::new(10, 1.0, 2, 3, 0.1);
        let inst = HardInstance::generate(p, 1, DEFAULT_MAX_MATRIX_BYTES).unwrap();
        assert_eq!(inst.num_rows(), 24);
        assert_eq!(inst.layout.biased_rows().collect::<Vec<_>>(), vec![9, 10, 11, 21, 22, 23]);
        p.append_concept = true;
        let inst = HardInstance::generate(p, 1, DEFAULT_MAX_MATRIX_BYTES).unwrap();
        assert_eq!(inst.num_rows(), 25);
        assert_eq!(inst.rows()[24], *inst.concept());
    }

    #[test]
    fn gamma_bounds() {
        for g in [0.0, 0.25, 0.3, -0.1] {
            assert!(HardInstance::generate(InstanceParams::new(10, 1.0, 1, 1, g), 0, 1 << 20).is_err());
        }
        let mut p = InstanceParams::new(10, 1.0, 1, 1, 0.2);
        p.constants.c_b = 2.0;
        assert!(HardInstance::generate(p, 0, 1 << 20).is_err());
    }

    #[test]
    fn memory_budget() {
        let p = InstanceParams::new(1000, 30.0, 1, 1, 0.1);
        assert!(matches!(
            HardInstance::generate(p, 0, DEFAULT_MAX_MATRIX_BYTES),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn bias_within_four_sigma() {
        for seed in 0..20 {
            let inst = HardInstance::generate(InstanceParams::new(100, 1.0, 3, 4, 0.1), seed, 1 << 20).unwrap();
            assert!(inst.bias_z_score().abs() <= 4.0);
        }
    }

    #[test]
    fn reproducible() {
        let p = InstanceParams::new(50, 2.0, 2, 2, 0.1);
        let a = HardInstance::generate(p, 9, 1 << 20).unwrap();
        let b = HardInstance::generate(p, 9, 1 << 20).unwrap();
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.concept(), b.concept());
    }
}
