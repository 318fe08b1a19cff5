//! Free group systems, subgroup systems and their automorphisms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stallings::SubgroupGraph;
use crate::word::{default_names, Word};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeGroupSystem {
    pub ranks: Vec<usize>,
    pub names: Vec<Vec<String>>,
}

impl FreeGroupSystem {
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() || ranks.contains(&0) {
            return Err(Error::Invalid(
                "a system needs at least one component, each of rank >= 1".into(),
            ));
        }
        let mut names = Vec::new();
        let mut offset = 0;
        for &r in &ranks {
            // distinct names across components: continue the default alphabet
            let all = default_names(offset + r);
            names.push(all[offset..].to_vec());
            offset += r;
        }
        Ok(FreeGroupSystem { ranks, names })
    }

    pub fn single(rank: usize) -> Self {
        FreeGroupSystem::new(vec![rank]).expect("rank >= 1")
    }

    pub fn with_names(names: Vec<Vec<String>>) -> Result<Self> {
        if names.is_empty() || names.iter().any(|n| n.is_empty()) {
            return Err(Error::Invalid("empty component".into()));
        }
        Ok(FreeGroupSystem {
            ranks: names.iter().map(|n| n.len()).collect(),
            names,
        })
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn complexity(&self) -> i64 {
        self.ranks.iter().map(|&r| complexity_of_rank(r)).sum()
    }

    pub fn display(&self, comp: usize, w: &Word) -> String {
        w.display_with(&self.names[comp])
    }
}

/// `c(H) = 2 · rank(H) − 1`; the trivial group gets −1.
pub fn complexity_of_rank(rank: usize) -> i64 {
    2 * rank as i64 - 1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupSystem {
    pub members: Vec<(usize, Vec<Word>)>,
}

impl SubgroupSystem {
    pub fn empty() -> Self {
        SubgroupSystem {
            members: Vec::new(),
        }
    }

    /// Checks each member's generators are a free basis of the subgroup they generate.
    pub fn new(members: Vec<(usize, Vec<Word>)>) -> Result<Self> {
        for (c, gens) in &members {
            if gens.is_empty() {
                return Err(Error::Invalid(format!(
                    "member in component {c} has no generators"
                )));
            }
            let g = SubgroupGraph::new(gens);
            if !g.is_free_basis() || g.rank() != gens.len() {
                return Err(Error::Invalid(format!(
                    "member in component {c} is not given by a free basis"
                )));
            }
        }
        Ok(SubgroupSystem { members })
    }

    pub fn complexity(&self) -> i64 {
        self.members
            .iter()
            .map(|(_, g)| complexity_of_rank(g.len()))
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Automorphism {
    pub system: FreeGroupSystem,
    pub sigma: Vec<usize>,
    pub images: Vec<Vec<Word>>,
    #[serde(default)]
    pub verified: bool,
}

impl Automorphism {
    /// Builds an unverified map after shape checks.
    pub fn new(system: FreeGroupSystem, sigma: Vec<usize>, images: Vec<Vec<Word>>) -> Result<Self> {
        let n = system.len();
        if sigma.len() != n || images.len() != n {
            return Err(Error::SystemMismatch);
        }
        let mut seen = vec![false; n];
        for &s in &sigma {
            if s >= n || seen[s] {
                return Err(Error::Invalid("sigma is not a permutation".into()));
            }
            seen[s] = true;
        }
        for (i, imgs) in images.iter().enumerate() {
            if imgs.len() != system.ranks[i] {
                return Err(Error::SystemMismatch);
            }
            let target_rank = system.ranks[sigma[i]];
            if imgs.iter().any(|w| w.max_gen() > target_rank) {
                return Err(Error::Invalid(format!(
                    "image of component {i} leaves component {}",
                    sigma[i]
                )));
            }
        }
        let images = images
            .into_iter()
            .map(|v| v.into_iter().map(|w| w.reduce()).collect())
            .collect();
        Ok(Automorphism {
            system,
            sigma,
            images,
            verified: false,
        })
    }

    pub fn identity(system: FreeGroupSystem) -> Self {
        let images = system
            .ranks
            .iter()
            .map(|&r| (1..=r as i32).map(Word::gen).collect())
            .collect();
        let sigma = (0..system.len()).collect();
        Automorphism {
            system,
            sigma,
            images,
            verified: true,
        }
    }

    /// Single-component convenience constructor from letter vectors.
    pub fn from_images(images: &[&[i32]]) -> Result<Self> {
        let system = FreeGroupSystem::single(images.len());
        let imgs = images.iter().map(|v| Word(v.to_vec())).collect();
        Automorphism::new(system, vec![0], vec![imgs])
    }

    pub fn rank(&self) -> usize {
        self.system.ranks[0]
    }

    /// Image of a word in component `comp`; the result lies in `sigma[comp]`.
    pub fn apply(&self, comp: usize, w: &Word) -> Word {
        let imgs = &self.images[comp];
        let inverses: Vec<Word> = imgs.iter().map(|x| x.inverse()).collect();
        let mut out = Word::empty();
        for &l in &w.0 {
            let k = l.unsigned_abs() as usize - 1;
            out.append(if l > 0 { &imgs[k] } else { &inverses[k] });
        }
        out
    }

    /// Single-component shorthand for `apply(0, w)`.
    pub fn on(&self, w: &Word) -> Word {
        self.apply(0, w)
    }

    pub fn iterate(&self, comp: usize, w: &Word, n: usize) -> (usize, Word) {
        let mut c = comp;
        let mut x = w.clone();
        for _ in 0..n {
            x = self.apply(c, &x);
            c = self.sigma[c];
        }
        (c, x)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Automorphism) -> Result<Automorphism> {
        if self.system.ranks != other.system.ranks {
            return Err(Error::SystemMismatch);
        }
        let n = self.system.len();
        let sigma = (0..n).map(|i| self.sigma[other.sigma[i]]).collect();
        let images = (0..n)
            .map(|i| {
                other.images[i]
                    .iter()
                    .map(|w| self.apply(other.sigma[i], w))
                    .collect()
            })
            .collect();
        Ok(Automorphism {
            system: self.system.clone(),
            sigma,
            images,
            verified: self.verified && other.verified,
        })
    }

    pub fn power(&self, n: usize) -> Automorphism {
        let mut out = Automorphism::identity(self.system.clone());
        for _ in 0..n {
            out = self.compose(&out).expect("same system");
        }
        out
    }

    /// Folds the images of each component; true iff each folded graph is the
    /// full rose of the target component.
    pub fn is_automorphism(&self) -> bool {
        (0..self.system.len()).all(|i| {
            let target_rank = self.system.ranks[self.sigma[i]];
            if self.system.ranks[i] != target_rank {
                return false;
            }
            let g = SubgroupGraph::new(&self.images[i]);
            g.is_free_basis() && g.is_whole_group(target_rank)
        })
    }

    pub fn verify(mut self) -> Result<Automorphism> {
        if self.is_automorphism() {
            self.verified = true;
            Ok(self)
        } else {
            Err(Error::NotAnAutomorphism)
        }
    }

    pub fn invert(&self) -> Result<Automorphism> {
        if !self.is_automorphism() {
            return Err(Error::NotAnAutomorphism);
        }
        let n = self.system.len();
        let mut sigma = vec![0; n];
        let mut images = vec![Vec::new(); n];
        for i in 0..n {
            let j = self.sigma[i];
            sigma[j] = i;
            let g = SubgroupGraph::new(&self.images[i]);
            images[j] = (1..=self.system.ranks[j] as i32)
                .map(|k| g.express(&Word::gen(k)).expect("whole group"))
                .collect();
        }
        Ok(Automorphism {
            system: self.system.clone(),
            sigma,
            images,
            verified: true,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.sigma.iter().enumerate().all(|(i, &s)| i == s)
            && self.images.iter().all(|imgs| {
                imgs.iter()
                    .enumerate()
                    .all(|(k, w)| *w == Word::gen(k as i32 + 1))
            })
    }

    /// Largest image length, the Lipschitz constant of the rose representative.
    pub fn max_image_len(&self) -> usize {
        self.images
            .iter()
            .flatten()
            .map(|w| w.len())
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[i32]) -> Word {
        Word(v.to_vec())
    }

    fn golden() -> Automorphism {
        Automorphism::from_images(&[&[1, 2], &[1]]).unwrap()
    }

    #[test]
    fn apply_examples() {
        let phi = golden();
        assert_eq!(phi.on(&w(&[1])), w(&[1, 2]));
        assert_eq!(phi.on(&w(&[-2])), w(&[-1]));
        assert_eq!(phi.on(&w(&[1, 2])), w(&[1, 2, 1]));
    }

    #[test]
    fn compose_examples() {
        let phi = golden();
        let id = Automorphism::identity(phi.system.clone());
        assert_eq!(id.compose(&phi).unwrap().images, phi.images);
        let sq = phi.compose(&phi).unwrap();
        assert_eq!(sq.images[0], vec![w(&[1, 2, 1]), w(&[1, 2])]);
        let inv = phi.invert().unwrap();
        assert!(phi.compose(&inv).unwrap().is_identity());
        assert!(inv.compose(&phi).unwrap().is_identity());
    }

    #[test]
    fn automorphism_check() {
        assert!(golden().is_automorphism());
        assert!(!Automorphism::from_images(&[&[1, 1], &[2]])
            .unwrap()
            .is_automorphism());
        assert!(Automorphism::identity(FreeGroupSystem::single(3)).is_automorphism());
    }

    #[test]
    fn invert_examples() {
        let inv = golden().invert().unwrap();
        assert_eq!(inv.images[0], vec![w(&[2]), w(&[-2, 1])]);
        let id = Automorphism::identity(FreeGroupSystem::single(2));
        assert!(id.invert().unwrap().is_identity());
        let flip = Automorphism::from_images(&[&[-1], &[2]]).unwrap();
        assert_eq!(flip.invert().unwrap().images, flip.images);
        let bad = Automorphism::from_images(&[&[1, 1], &[2]]).unwrap();
        assert_eq!(bad.invert(), Err(Error::NotAnAutomorphism));
    }

    #[test]
    fn complexity_examples() {
        assert_eq!(FreeGroupSystem::single(2).complexity(), 3);
        assert_eq!(complexity_of_rank(0), -1);
        assert_eq!(FreeGroupSystem::new(vec![2, 1]).unwrap().complexity(), 4);
    }

    #[test]
    fn infinite_or_empty_systems_rejected() {
        assert!(FreeGroupSystem::new(vec![]).is_err());
        assert!(FreeGroupSystem::new(vec![2, 0]).is_err());
    }

    #[test]
    fn multi_component_sigma() {
        let sys = FreeGroupSystem::new(vec![1, 1]).unwrap();
        let phi = Automorphism::new(sys, vec![1, 0], vec![vec![w(&[-1])], vec![w(&[1])]]).unwrap();
        assert!(phi.is_automorphism());
        let sq = phi.compose(&phi).unwrap();
        assert_eq!(sq.sigma, vec![0, 1]);
        assert_eq!(sq.images, vec![vec![w(&[-1])], vec![w(&[-1])]]);
    }
}
