//! Freely reduced words over signed generator ordinals.
//!
//! A letter is a nonzero `i32`: `k` is the k-th generator (1-based) and `-k`
//! its inverse. The component a word lives in is tracked by its owner.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Generator {
    pub component: usize,
    pub ordinal: usize,
    pub sign: i8,
}

impl Generator {
    pub fn new(component: usize, ordinal: usize, sign: i8) -> Self {
        Generator {
            component,
            ordinal,
            sign,
        }
    }

    pub fn letter(&self) -> i32 {
        let k = self.ordinal as i32 + 1;
        if self.sign < 0 {
            -k
        } else {
            k
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(pub Vec<i32>);

/// Reduces a raw letter sequence, rejecting letters from different components.
pub fn reduce_letters(raw: &[Generator]) -> Result<(usize, Word), Error> {
    let component = raw.first().map(|g| g.component).unwrap_or(0);
    if raw.iter().any(|g| g.component != component) {
        return Err(Error::MixedComponents);
    }
    Ok((
        component,
        Word::from_letters(raw.iter().map(|g| g.letter())),
    ))
}

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn gen(k: i32) -> Self {
        Word(vec![k])
    }

    /// Builds the reduced word of a letter stream.
    pub fn from_letters<I: IntoIterator<Item = i32>>(letters: I) -> Self {
        let mut out: Vec<i32> = Vec::new();
        for l in letters {
            debug_assert!(l != 0);
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn letters(&self) -> &[i32] {
        &self.0
    }

    pub fn is_reduced(&self) -> bool {
        self.0.windows(2).all(|w| w[0] != -w[1]) && self.0.iter().all(|&l| l != 0)
    }

    pub fn reduce(&self) -> Word {
        Word::from_letters(self.0.iter().copied())
    }

    pub fn inverse(&self) -> Word {
        Word(self.0.iter().rev().map(|l| -l).collect())
    }

    pub fn mul(&self, other: &Word) -> Word {
        let mut out = self.0.clone();
        for &l in &other.0 {
            if out.last() == Some(&-l) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    /// In-place `self · other`, freely reduced at the junction.
    pub fn append(&mut self, other: &Word) {
        for &l in &other.0 {
            if self.0.last() == Some(&-l) {
                self.0.pop();
            } else {
                self.0.push(l);
            }
        }
    }

    pub fn conj(&self, by: &Word) -> Word {
        by.mul(self).mul(&by.inverse())
    }

    pub fn pow(&self, n: i64) -> Word {
        let base = if n < 0 { self.inverse() } else { self.clone() };
        let mut out = Word::empty();
        for _ in 0..n.unsigned_abs() {
            out = out.mul(&base);
        }
        out
    }

    /// Returns `(core, conjugator)` with `self = conjugator · core · conjugator⁻¹`
    /// and `core` cyclically reduced.
    pub fn cyclic_reduce(&self) -> (Word, Word) {
        let w = &self.0;
        let n = w.len();
        let mut i = 0;
        while i < n / 2 && w[i] == -w[n - 1 - i] {
            i += 1;
        }
        (Word(w[i..n - i].to_vec()), Word(w[..i].to_vec()))
    }

    pub fn cyclic_len(&self) -> usize {
        self.cyclic_reduce().0.len()
    }

    pub fn is_cyclically_reduced(&self) -> bool {
        self.0.len() < 2 || self.0[0] != -self.0[self.0.len() - 1]
    }

    /// Conjugacy test: cyclic cores must be rotations of each other.
    pub fn is_conjugate(&self, other: &Word) -> bool {
        let (a, _) = self.cyclic_reduce();
        let (b, _) = other.cyclic_reduce();
        if a.len() != b.len() {
            return false;
        }
        if a.is_empty() {
            return true;
        }
        let n = a.len();
        (0..n).any(|r| (0..n).all(|i| a.0[(i + r) % n] == b.0[i]))
    }

    /// Finds `u` with `u · self · u⁻¹ = other`, if the words are conjugate.
    pub fn conjugator_to(&self, other: &Word) -> Option<Word> {
        let (a, ca) = self.cyclic_reduce();
        let (b, cb) = other.cyclic_reduce();
        if a.len() != b.len() {
            return None;
        }
        if a.is_empty() {
            return Some(Word::empty());
        }
        let n = a.len();
        for r in 0..n {
            if (0..n).all(|i| a.0[(i + r) % n] == b.0[i]) {
                // b = rot_r(a) = p⁻¹ a p with p = a[..r]
                let p = Word(a.0[..r].to_vec());
                return Some(cb.mul(&p.inverse()).mul(&ca.inverse()));
            }
        }
        None
    }

    /// Largest generator ordinal used (1-based), 0 for the empty word.
    pub fn max_gen(&self) -> usize {
        self.0
            .iter()
            .map(|l| l.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Generator names use `names[k-1]`, inverses get a trailing `'`.
    pub fn display_with(&self, names: &[String]) -> String {
        if self.0.is_empty() {
            return "1".to_string();
        }
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|&l| {
                let name = names
                    .get(l.unsigned_abs() as usize - 1)
                    .cloned()
                    .unwrap_or_else(|| format!("x{}", l.unsigned_abs()));
                if l < 0 {
                    format!("{name}'")
                } else {
                    name
                }
            })
            .collect();
        parts.join(" ")
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = default_names(self.max_gen());
        write!(f, "{}", self.display_with(&names))
    }
}

/// `a, b, ..., z, a1, b1, ...` for ranks beyond 26.
pub fn default_names(rank: usize) -> Vec<String> {
    (0..rank)
        .map(|i| {
            let c = (b'a' + (i % 26) as u8) as char;
            if i < 26 {
                c.to_string()
            } else {
                format!("{c}{}", i / 26)
            }
        })
        .collect()
}

/// All reduced words over `rank` generators of length at most `max_len`, in shortlex order.
pub fn enumerate_words(rank: usize, max_len: usize) -> Vec<Word> {
    let mut out = vec![Word::empty()];
    let mut layer = vec![Word::empty()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &layer {
            for g in 1..=rank as i32 {
                for l in [g, -g] {
                    if w.0.last() != Some(&-l) {
                        let mut v = w.0.clone();
                        v.push(l);
                        next.push(Word(v));
                    }
                }
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}
