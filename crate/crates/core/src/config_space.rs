//! Discrete configuration space: four knobs, row-major indexing and the
//! one-step neighborhood used by the local search.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Knob {
    NBig,
    NLittle,
    FBig,
    FLittle,
}

impl Knob {
    pub const ALL: [Knob; 4] = [Knob::NBig, Knob::NLittle, Knob::FBig, Knob::FLittle];

    pub fn position(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Knob::NBig => "n_big",
            Knob::NLittle => "n_little",
            Knob::FBig => "f_big",
            Knob::FLittle => "f_little",
        }
    }
}

/// Frequencies are in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub n_big: u32,
    pub n_little: u32,
    pub f_big: u32,
    pub f_little: u32,
}

impl Configuration {
    pub const fn new(n_big: u32, n_little: u32, f_big: u32, f_little: u32) -> Self {
        Configuration { n_big, n_little, f_big, f_little }
    }

    pub fn get(&self, knob: Knob) -> u32 {
        match knob {
            Knob::NBig => self.n_big,
            Knob::NLittle => self.n_little,
            Knob::FBig => self.f_big,
            Knob::FLittle => self.f_little,
        }
    }

    fn with(mut self, knob: Knob, value: u32) -> Self {
        match knob {
            Knob::NBig => self.n_big = value,
            Knob::NLittle => self.n_little = value,
            Knob::FBig => self.f_big = value,
            Knob::FLittle => self.f_little = value,
        }
        self
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.n_big, self.n_little, self.f_big, self.f_little)
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(Error::domain(format!("expected \"nB,nL,fB,fL\", got {s:?}")));
        }
        let mut v = [0u32; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p
                .trim()
                .parse()
                .map_err(|_| Error::domain(format!("bad configuration field {p:?} in {s:?}")))?;
        }
        Ok(Configuration::new(v[0], v[1], v[2], v[3]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSpace {
    levels: [Vec<u32>; 4],
}

impl Default for ConfigSpace {
    fn default() -> Self {
        ConfigSpace {
            levels: [
                vec![1, 2, 3, 4],
                vec![1, 2, 3, 4],
                (600..=2000).step_by(200).collect(),
                (600..=1400).step_by(200).collect(),
            ],
        }
    }
}

impl ConfigSpace {
    /// Builds a space from arbitrary level lists. Each list must be non-empty
    /// and strictly increasing.
    pub fn new(n_big: Vec<u32>, n_little: Vec<u32>, f_big: Vec<u32>, f_little: Vec<u32>) -> Result<Self> {
        let levels = [n_big, n_little, f_big, f_little];
        for (knob, l) in Knob::ALL.iter().zip(&levels) {
            if l.is_empty() {
                return Err(Error::domain(format!("{} has no levels", knob.name())));
            }
            if l.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::domain(format!("{} levels must be strictly increasing", knob.name())));
            }
        }
        if levels[0][0] == 0 || levels[1][0] == 0 {
            return Err(Error::domain("core counts start at 1"));
        }
        Ok(ConfigSpace { levels })
    }

    pub fn levels(&self, knob: Knob) -> &[u32] {
        &self.levels[knob.position()]
    }

    pub fn level_count(&self, knob: Knob) -> usize {
        self.levels[knob.position()].len()
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_config(&self) -> Configuration {
        self.from_index(0)
    }

    pub fn max_config(&self) -> Configuration {
        self.from_index(self.len() - 1)
    }

    pub fn contains(&self, c: &Configuration) -> bool {
        Knob::ALL.iter().all(|&k| self.levels(k).contains(&c.get(k)))
    }

    pub fn knob_level_index(&self, c: &Configuration, knob: Knob) -> Option<usize> {
        self.levels(knob).iter().position(|&v| v == c.get(knob))
    }

    pub fn level_indices(&self, c: &Configuration) -> Result<[usize; 4]> {
        let mut out = [0; 4];
        for k in Knob::ALL {
            out[k.position()] = self
                .knob_level_index(c, k)
                .ok_or_else(|| Error::domain(format!("configuration {c} is not in the space")))?;
        }
        Ok(out)
    }

    pub fn from_level_indices(&self, idx: [usize; 4]) -> Configuration {
        Configuration::new(
            self.levels[0][idx[0]],
            self.levels[1][idx[1]],
            self.levels[2][idx[2]],
            self.levels[3][idx[3]],
        )
    }

    pub fn index_of(&self, c: &Configuration) -> Result<usize> {
        let li = self.level_indices(c)?;
        Ok(self.levels.iter().zip(li).fold(0, |idx, (levels, l)| idx * levels.len() + l))
    }

    /// Panics if `index >= len()`.
    pub fn from_index(&self, index: usize) -> Configuration {
        assert!(index < self.len(), "configuration index {index} out of range");
        let mut rem = index;
        let mut li = [0; 4];
        for k in (0..4).rev() {
            let n = self.levels[k].len();
            li[k] = rem % n;
            rem /= n;
        }
        self.from_level_indices(li)
    }

    pub fn enumerate(&self) -> Vec<Configuration> {
        (0..self.len()).map(|i| self.from_index(i)).collect()
    }

    /// Configurations differing from `c` in exactly one knob by exactly one
    /// level, in index order.
    pub fn neighbors(&self, c: &Configuration) -> Result<Vec<Configuration>> {
        let li = self.level_indices(c)?;
        let mut out = Vec::with_capacity(8);
        for k in Knob::ALL {
            let levels = self.levels(k);
            let i = li[k.position()];
            if i > 0 {
                out.push(c.with(k, levels[i - 1]));
            }
            if i + 1 < levels.len() {
                out.push(c.with(k, levels[i + 1]));
            }
        }
        out.sort_by_key(|n| self.index_of(n).expect("neighbor in space"));
        Ok(out)
    }

    pub fn neighbor_indices(&self, index: usize) -> Vec<usize> {
        let c = self.from_index(index);
        self.neighbors(&c)
            .expect("valid index")
            .iter()
            .map(|n| self.index_of(n).expect("neighbor in space"))
            .collect()
    }
}
