use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &str = "meshplan-perm 1";

/// A bijection on `0..n`. `forward[old] = new`, `inverse[new] = old`.
/// Serialized as the forward array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(forward: Vec<usize>) -> Result<Self> {
        Permutation::from_forward(forward)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Vec<usize> {
        p.forward
    }
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        let forward: Vec<usize> = (0..n).collect();
        Permutation {
            inverse: forward.clone(),
            forward,
        }
    }

    /// Builds a permutation from its forward array (`forward[old] = new`).
    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (old, &new) in forward.iter().enumerate() {
            if new >= n {
                return Err(Error::InvalidPermutation(format!(
                    "target {new} out of range for size {n}"
                )));
            }
            if inverse[new] != usize::MAX {
                return Err(Error::InvalidPermutation(format!(
                    "target {new} hit by both {} and {old}",
                    inverse[new]
                )));
            }
            inverse[new] = old;
        }
        Ok(Permutation { forward, inverse })
    }

    /// Builds a permutation from a visiting order: `order[new] = old`.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let p = Permutation::from_forward(order)?;
        Ok(p.inverted())
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    #[inline]
    pub fn new_of(&self, old: usize) -> usize {
        self.forward[old]
    }

    #[inline]
    pub fn old_of(&self, new: usize) -> usize {
        self.inverse[new]
    }

    pub fn inverted(&self) -> Permutation {
        Permutation {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// `self` followed by `then`: old index `i` maps to `then[self[i]]`.
    pub fn then(&self, then: &Permutation) -> Permutation {
        assert_eq!(
            self.len(),
            then.len(),
            "composing permutations of different sizes"
        );
        let forward: Vec<usize> = self.forward.iter().map(|&m| then.forward[m]).collect();
        let mut inverse = vec![0; forward.len()];
        for (old, &new) in forward.iter().enumerate() {
            inverse[new] = old;
        }
        Permutation { forward, inverse }
    }

    /// Newline-separated forward array with a leading magic line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * 7 + 16);
        out.push_str(MAGIC);
        out.push('\n');
        for v in &self.forward {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected `{MAGIC}`"),
                })
            }
        }
        let mut forward = Vec::new();
        for (i, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            forward.push(line.parse::<usize>().map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Permutation::from_forward(forward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_bijection() {
        assert!(Permutation::from_forward(vec![0, 0]).is_err());
        assert!(Permutation::from_forward(vec![0, 2]).is_err());
    }

    #[test]
    fn order_and_forward_agree() {
        let p = Permutation::from_order(vec![2, 0, 1]).unwrap();
        // element 2 goes first
        assert_eq!(p.new_of(2), 0);
        assert_eq!(p.old_of(1), 0);
        assert!(p.then(&p.inverted()).is_identity());
    }

    #[test]
    fn text_round_trip() {
        let p = Permutation::from_forward(vec![3, 1, 0, 2]).unwrap();
        assert_eq!(Permutation::from_text(&p.to_text()).unwrap(), p);
        assert!(Permutation::from_text("0\n1\n").is_err());
    }
}
