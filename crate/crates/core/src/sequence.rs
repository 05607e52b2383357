//! Finitely supported sequences with `u_0 = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `u_1, ..., u_L` with `u_0 = 0` and `u_n = 0` for `n > L`.
///
/// Index 0 is not stored, so the boundary condition holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSeq {
    values: Vec<f64>,
}

impl FiniteSeq {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("sequence entries must be finite".into()));
        }
        Ok(FiniteSeq { values })
    }

    /// Build from `u_0, u_1, ...`; rejects a nonzero `u_0`.
    pub fn from_with_origin(values: &[f64]) -> Result<Self> {
        match values.split_first() {
            None => Ok(FiniteSeq { values: vec![] }),
            Some((&u0, rest)) if u0 == 0.0 => Self::new(rest.to_vec()),
            Some(_) => Err(Error::Domain("u_0 must vanish".into())),
        }
    }

    pub fn delta(k: u64) -> Self {
        assert!(k >= 1, "delta sequences start at n = 1");
        let mut v = vec![0.0; k as usize];
        v[k as usize - 1] = 1.0;
        FiniteSeq { values: v }
    }

    /// `u_n` for any `n >= 0`.
    #[inline]
    pub fn get(&self, n: u64) -> f64 {
        if n == 0 || n as usize > self.values.len() {
            0.0
        } else {
            self.values[n as usize - 1]
        }
    }

    /// Last stored index `L`.
    pub fn len(&self) -> u64 {
        self.values.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// First index with `u_n != 0`.
    pub fn first_nonzero(&self) -> Option<u64> {
        self.values.iter().position(|&v| v != 0.0).map(|i| i as u64 + 1)
    }

    pub fn scaled(&self, c: f64) -> Self {
        FiniteSeq {
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Iterator over `(n, u_n)` for `n = 1..=L`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.values.iter().enumerate().map(|(i, &v)| (i as u64 + 1, v))
    }
}

/// Shape parameters for random test sequences.
#[derive(Debug, Clone, Copy)]
pub struct RandomSeqSpec {
    /// Maximum support end.
    pub max_len: u64,
    /// Entries forced to zero at the start (`u_1 .. u_{vanish}`).
    pub vanish: u64,
}

/// Seeded generator of test sequences (ChaCha8 stream).
///
/// Each draw picks a support end uniformly in `[vanish + 1, max_len]`, a
/// random zero prefix at least `vanish` long and entries in `[-1, 1]`;
/// a quarter of draws use a smooth bump instead of white noise.
pub struct SeqGenerator {
    rng: ChaCha8Rng,
    spec: RandomSeqSpec,
}

impl SeqGenerator {
    pub fn new(seed: u64, spec: RandomSeqSpec) -> Self {
        assert!(spec.max_len > spec.vanish, "support must leave room past the vanishing prefix");
        SeqGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spec,
        }
    }

    pub fn next_seq(&mut self) -> FiniteSeq {
        let len = self.rng.gen_range(self.spec.vanish + 1..=self.spec.max_len);
        let start = self.rng.gen_range(self.spec.vanish + 1..=len);
        let smooth = self.rng.gen_bool(0.25);
        let mut values = vec![0.0; len as usize];
        let width = (len - start + 1) as f64;
        for n in start..=len {
            values[n as usize - 1] = if smooth {
                let x = (n - start + 1) as f64 / (width + 1.0);
                (std::f64::consts::PI * x).sin()
            } else {
                self.rng.gen_range(-1.0..=1.0)
            };
        }
        if values.iter().all(|&v| v == 0.0) {
            values[len as usize - 1] = 1.0;
        }
        FiniteSeq { values }
    }
}
