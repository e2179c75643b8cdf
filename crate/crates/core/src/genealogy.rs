//! Ulam–Harris style labels built from (level, event count, sibling index) triples.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct Label {
    triples: Vec<(u32, u32, u32)>,
}

impl Label {
    pub fn root() -> Self {
        Label { triples: Vec::new() }
    }

    pub fn from_triples(triples: Vec<(u32, u32, u32)>) -> Result<Self> {
        if triples.iter().any(|&(m, k, i)| m == 0 || k == 0 || i == 0) {
            return Err(Error::Config(format!("label components must be positive: {triples:?}")));
        }
        Ok(Label { triples })
    }

    pub fn triples(&self) -> &[(u32, u32, u32)] {
        &self.triples
    }

    pub fn generation(&self) -> usize {
        self.triples.len()
    }

    pub fn is_root(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn child(&self, m: u32, k: u32, i: u32) -> Label {
        assert!(m >= 1 && k >= 1 && i >= 1, "label components must be positive");
        let mut triples = Vec::with_capacity(self.triples.len() + 1);
        triples.extend_from_slice(&self.triples);
        triples.push((m, k, i));
        Label { triples }
    }

    pub fn parent(&self) -> Option<Label> {
        if self.triples.is_empty() {
            None
        } else {
            Some(Label { triples: self.triples[..self.triples.len() - 1].to_vec() })
        }
    }

    /// u ⪯ v
    pub fn is_prefix(&self, v: &Label) -> bool {
        v.triples.starts_with(&self.triples)
    }

    /// ML(u): the largest level among the triples, 0 for the root.
    pub fn max_level(&self) -> u32 {
        self.triples.iter().map(|t| t.0).max().unwrap_or(0)
    }

    pub fn prefix(&self, len: usize) -> Label {
        Label { triples: self.triples[..len].to_vec() }
    }

    /// Bit m−1 set whenever some triple has level m.
    pub fn level_mask(&self) -> u64 {
        self.triples.iter().fold(0u64, |acc, t| acc | 1u64 << (t.0 - 1).min(63))
    }

    /// Stable 64-bit key used to select a per-particle RNG stream.
    pub fn stream_key(&self) -> u64 {
        let mut h = 0x6a09_e667_f3bc_c908u64;
        for &(m, k, i) in &self.triples {
            for v in [m, k, i] {
                h = splitmix(h ^ v as u64);
            }
            h = splitmix(h.rotate_left(17));
        }
        h
    }
}

pub(crate) fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.triples.is_empty() {
            return write!(f, "∅");
        }
        for (m, k, i) in &self.triples {
            write!(f, "({m},{k},{i})")?;
        }
        Ok(())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "∅" || s.is_empty() {
            return Ok(Label::root());
        }
        let bad = || Error::Config(format!("cannot parse label {s:?}"));
        let mut triples = Vec::new();
        let mut rest = s;
        while !rest.is_empty() {
            let inner = rest.strip_prefix('(').ok_or_else(bad)?;
            let end = inner.find(')').ok_or_else(bad)?;
            let parts: Vec<u32> = inner[..end]
                .split(',')
                .map(|p| p.trim().parse::<u32>().map_err(|_| bad()))
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                return Err(bad());
            }
            triples.push((parts[0], parts[1], parts[2]));
            rest = &inner[end + 1..];
        }
        Label::from_triples(triples)
    }
}

/// Anc(s; v): the longest prefix of `v` whose birth time is at most `s`.
///
/// `history` maps prefixes of `v` to their birth times; the root defaults to time 0.
pub fn ancestor_at(history: &HashMap<Label, f64>, s: f64, v: &Label) -> Result<Label> {
    let root_birth = history.get(&Label::root()).copied().unwrap_or(0.0);
    if root_birth > s {
        return Err(Error::NotAlive(s));
    }
    let mut best = 0;
    for len in 1..=v.generation() {
        match history.get(&v.prefix(len)) {
            Some(&birth) if birth <= s => best = len,
            _ => break,
        }
    }
    Ok(v.prefix(best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let u = Label::root().child(2, 1, 1).child(1, 3, 2);
        assert_eq!(u.to_string(), "(2,1,1)(1,3,2)");
        assert_eq!(u.to_string().parse::<Label>().unwrap(), u);
        assert_eq!("∅".parse::<Label>().unwrap(), Label::root());
        assert!("(0,1,1)".parse::<Label>().is_err());
    }

    #[test]
    fn stream_keys_differ() {
        let a = Label::root().child(1, 1, 1);
        let b = Label::root().child(1, 1, 2);
        assert_ne!(a.stream_key(), b.stream_key());
        assert_ne!(Label::root().stream_key(), a.stream_key());
    }
}
