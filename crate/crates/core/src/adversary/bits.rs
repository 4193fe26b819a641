//! Packed `±1` vectors: bit set means `+1`.

use rand::Rng;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PackedRow {
    words: Vec<u64>,
    len: usize,
}

fn words_for(len: usize) -> usize {
    len.div_ceil(64)
}

fn tail_mask(len: usize) -> u64 {
    match len % 64 {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

impl PackedRow {
    /// All `−1`.
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; words_for(len)],
            len,
        }
    }

    /// All `+1`.
    pub fn ones(len: usize) -> Self {
        let mut row = Self {
            words: vec![u64::MAX; words_for(len)],
            len,
        };
        row.clear_tail();
        row
    }

    pub fn from_signs(signs: &[i8]) -> Self {
        let mut row = Self::zeros(signs.len());
        for (i, &s) in signs.iter().enumerate() {
            if s > 0 {
                row.words[i / 64] |= 1 << (i % 64);
            }
        }
        row
    }

    pub(crate) fn from_words(words: Vec<u64>, len: usize) -> Self {
        debug_assert_eq!(words.len(), words_for(len));
        let mut row = Self { words, len };
        row.clear_tail();
        row
    }

    /// Independent uniform signs.
    pub fn uniform<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self::from_words((0..words_for(len)).map(|_| rng.gen()).collect(), len)
    }

    /// Each bit set independently with probability `q`.
    pub fn bernoulli<R: Rng + ?Sized>(len: usize, q: f64, rng: &mut R) -> Self {
        let mut row = Self::zeros(len);
        for i in 0..len {
            if rng.gen::<f64>() < q {
                row.words[i / 64] |= 1 << (i % 64);
            }
        }
        row
    }

    fn clear_tail(&mut self) {
        if let Some(last) = self.words.last_mut() {
            *last &= tail_mask(self.len);
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> i8 {
        if self.words[i / 64] >> (i % 64) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn to_signs(&self) -> Vec<i8> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// Entrywise `a ⊕ b` (set where they disagree).
    pub fn xor(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len, other.len);
        Self {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
            len: self.len,
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of positions in `mask` where the two rows disagree.
    pub fn disagreements_within(&self, other: &Self, mask: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .zip(&mask.words)
            .map(|((a, b), m)| ((a ^ b) & m).count_ones() as usize)
            .sum()
    }

    /// Number of positions where the rows disagree.
    pub fn hamming(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn set(&mut self, i: usize, value: i8) {
        if value > 0 {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_and_counts() {
        let signs: Vec<i8> = (0..130).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let row = PackedRow::from_signs(&signs);
        assert_eq!(row.to_signs(), signs);
        assert_eq!(row.count_ones(), 44);
        assert_eq!(PackedRow::ones(130).count_ones(), 130);
        let flip = row.xor(&PackedRow::ones(130));
        assert_eq!(flip.count_ones(), 86);
        assert_eq!(row.hamming(&PackedRow::ones(130)), 86);
        let mut mask = PackedRow::zeros(130);
        mask.set(0, 1);
        mask.set(1, 1);
        assert_eq!(row.disagreements_within(&PackedRow::ones(130), &mask), 1);
    }

    #[test]
    fn uniform_tail_is_clear() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in [1, 63, 64, 65, 200] {
            let r = PackedRow::uniform(len, &mut rng);
            assert!(r.count_ones() <= len);
        }
    }
}
