//! Permutations of `{0, …, d-1}` and their matrices.
//!
//! The permutation matrix of σ has a one at `(i, σ(i))`, so the 3-cycle
//! written `(123)` has ones at (1,2), (2,3), (3,1) in one-based indexing.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation {
    image: Vec<usize>,
}

impl Permutation {
    pub fn identity(d: usize) -> Self {
        Permutation { image: (0..d).collect() }
    }

    /// `image[i]` is σ(i), zero-based.
    pub fn from_images(image: Vec<usize>) -> Result<Self> {
        let d = image.len();
        let mut seen = vec![false; d];
        for &j in &image {
            if j >= d || seen[j] {
                return Err(Error::Parse(format!("{image:?} is not a permutation")));
            }
            seen[j] = true;
        }
        Ok(Permutation { image })
    }

    /// Parses cycle notation with one-based labels.
    ///
    /// Accepted forms: `id`, `123` (a single cycle of single-digit labels),
    /// `(12)(34)`, and `(1 2 10)` / `(1,2,10)` for multi-digit labels.
    pub fn from_cycles(text: &str, d: usize) -> Result<Self> {
        let text = text.trim();
        let mut image: Vec<usize> = (0..d).collect();
        if text.is_empty() || text.eq_ignore_ascii_case("id") || text == "()" {
            return Ok(Permutation { image });
        }
        let groups: Vec<&str> = if text.contains('(') {
            text.split(['(', ')'])
                .map(str::trim)
                .filter(|g| !g.is_empty())
                .collect()
        } else {
            vec![text]
        };
        let mut used = vec![false; d];
        for group in groups {
            let labels: Vec<usize> = if group.contains([' ', ',']) {
                group
                    .split([' ', ','])
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse::<usize>().map_err(|_| Error::Parse(format!("bad label {t:?}"))))
                    .collect::<Result<_>>()?
            } else {
                group
                    .chars()
                    .map(|ch| {
                        ch.to_digit(10)
                            .map(|v| v as usize)
                            .ok_or_else(|| Error::Parse(format!("bad label {ch:?} in {text:?}")))
                    })
                    .collect::<Result<_>>()?
            };
            for &l in &labels {
                if l == 0 || l > d {
                    return Err(Error::Parse(format!("label {l} outside 1..={d}")));
                }
                if used[l - 1] {
                    return Err(Error::Parse(format!("label {l} repeated in {text:?}")));
                }
                used[l - 1] = true;
            }
            for w in 0..labels.len() {
                let from = labels[w] - 1;
                let to = labels[(w + 1) % labels.len()] - 1;
                image[from] = to;
            }
        }
        Ok(Permutation { image })
    }

    /// Recovers σ from a 0/1 matrix, entries compared against `eps`.
    pub fn from_matrix(m: &DMatrix<f64>, eps: f64) -> Option<Self> {
        let d = m.nrows();
        if m.ncols() != d {
            return None;
        }
        let mut image = Vec::with_capacity(d);
        for i in 0..d {
            let mut hit = None;
            for j in 0..d {
                let v = m[(i, j)];
                if (v - 1.0).abs() <= eps {
                    if hit.is_some() {
                        return None;
                    }
                    hit = Some(j);
                } else if v.abs() > eps {
                    return None;
                }
            }
            image.push(hit?);
        }
        Permutation::from_images(image).ok()
    }

    pub fn d(&self) -> usize {
        self.image.len()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.image[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.image
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.d()];
        for (i, &j) in self.image.iter().enumerate() {
            inv[j] = i;
        }
        Permutation { image: inv }
    }

    /// `self ∘ other`, i.e. `i ↦ self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Self {
        Permutation {
            image: other.image.iter().map(|&j| self.image[j]).collect(),
        }
    }

    /// Cycles as zero-based label lists, fixed points included, each cycle
    /// starting at its smallest label.
    pub fn cycles(&self) -> Vec<Vec<usize>> {
        let d = self.d();
        let mut seen = vec![false; d];
        let mut out = Vec::new();
        for start in 0..d {
            if seen[start] {
                continue;
            }
            let mut cyc = vec![start];
            seen[start] = true;
            let mut j = self.image[start];
            while j != start {
                seen[j] = true;
                cyc.push(j);
                j = self.image[j];
            }
            out.push(cyc);
        }
        out
    }

    pub fn cycle_lengths(&self) -> Vec<usize> {
        self.cycles().iter().map(Vec::len).collect()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.d();
        let mut m = DMatrix::zeros(d, d);
        for (i, &j) in self.image.iter().enumerate() {
            m[(i, j)] = 1.0;
        }
        m
    }
}

impl fmt::Display for Permutation {
    /// Cycle notation with one-based labels; fixed points omitted.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles: Vec<Vec<usize>> = self.cycles().into_iter().filter(|c| c.len() > 1).collect();
        if cycles.is_empty() {
            return f.write_str("id");
        }
        let sep = if self.d() > 9 { " " } else { "" };
        for c in cycles {
            let labels: Vec<String> = c.iter().map(|l| (l + 1).to_string()).collect();
            write!(f, "({})", labels.join(sep))?;
        }
        Ok(())
    }
}
