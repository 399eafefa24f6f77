//! Three-letter orientation codes ("RAS", "LPI", ...).
//!
//! Each letter names the physical direction a voxel axis increases toward,
//! with +x = Right, +y = Anterior, +z = Superior in world space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Affine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    L,
    R,
    P,
    A,
    I,
    S,
}

impl Direction {
    /// World axis this direction lies on (0 = x, 1 = y, 2 = z).
    pub fn axis(self) -> usize {
        match self {
            Direction::L | Direction::R => 0,
            Direction::P | Direction::A => 1,
            Direction::I | Direction::S => 2,
        }
    }

    /// True when the direction points along the positive world axis.
    pub fn is_positive(self) -> bool {
        matches!(self, Direction::R | Direction::A | Direction::S)
    }

    pub fn from_axis(axis: usize, positive: bool) -> Direction {
        match (axis, positive) {
            (0, true) => Direction::R,
            (0, false) => Direction::L,
            (1, true) => Direction::A,
            (1, false) => Direction::P,
            (2, true) => Direction::S,
            (2, false) => Direction::I,
            _ => unreachable!("world axis out of range"),
        }
    }

    pub fn opposite(self) -> Direction {
        Direction::from_axis(self.axis(), !self.is_positive())
    }

    fn letter(self) -> char {
        match self {
            Direction::L => 'L',
            Direction::R => 'R',
            Direction::P => 'P',
            Direction::A => 'A',
            Direction::I => 'I',
            Direction::S => 'S',
        }
    }

    fn from_letter(c: char) -> Option<Direction> {
        Some(match c.to_ascii_uppercase() {
            'L' => Direction::L,
            'R' => Direction::R,
            'P' => Direction::P,
            'A' => Direction::A,
            'I' => Direction::I,
            'S' => Direction::S,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Orientation([Direction; 3]);

impl Orientation {
    pub const RAS: Orientation = Orientation([Direction::R, Direction::A, Direction::S]);
    pub const LPI: Orientation = Orientation([Direction::L, Direction::P, Direction::I]);

    pub fn new(axes: [Direction; 3]) -> Result<Self> {
        let mut seen = [false; 3];
        for d in axes {
            if std::mem::replace(&mut seen[d.axis()], true) {
                return Err(Error::Argument(format!(
                    "orientation {} uses a world axis twice",
                    Orientation(axes)
                )));
            }
        }
        Ok(Orientation(axes))
    }

    pub fn axes(&self) -> [Direction; 3] {
        self.0
    }

    /// All 48 valid codes (6 axis permutations × 8 sign patterns).
    pub fn all() -> Vec<Orientation> {
        const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut out = Vec::with_capacity(48);
        for perm in PERMS {
            for signs in 0..8u8 {
                let d = |k: usize| Direction::from_axis(perm[k], signs & (1 << k) != 0);
                out.push(Orientation([d(0), d(1), d(2)]));
            }
        }
        out
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{}", d.letter())?;
        }
        Ok(())
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters: Vec<char> = s.trim().chars().collect();
        if letters.len() != 3 {
            return Err(Error::Argument(format!("orientation code {s:?} must have 3 letters")));
        }
        let mut axes = [Direction::R; 3];
        for (slot, c) in axes.iter_mut().zip(letters) {
            *slot = Direction::from_letter(c)
                .ok_or_else(|| Error::Argument(format!("invalid orientation letter {c:?} in {s:?}")))?;
        }
        Orientation::new(axes)
    }
}

impl Serialize for Orientation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Orientation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn linear_part(affine: &Affine) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (r, row) in m.iter_mut().enumerate() {
        row.copy_from_slice(&affine[r][..3]);
    }
    m
}

/// Orientation code of the dominant world direction of each voxel axis.
///
/// Axes are assigned greedily by the largest normalized matrix entry, so
/// oblique affines still yield a valid permutation.
pub fn orientation_of(affine: &Affine) -> Result<Orientation> {
    let m = linear_part(affine);
    let mut norms = [0.0f64; 3];
    for (c, n) in norms.iter_mut().enumerate() {
        *n = (0..3).map(|r| m[r][c] * m[r][c]).sum::<f64>().sqrt();
    }
    let scale = norms.iter().product::<f64>();
    if !(scale > 0.0) || !scale.is_finite() || det3(&m).abs() <= 1e-9 * scale {
        return Err(Error::Geometry("affine linear part is singular".into()));
    }

    let mut dirs: [Option<Direction>; 3] = [None; 3];
    let mut row_used = [false; 3];
    for _ in 0..3 {
        let mut best: Option<(usize, usize, f64)> = None;
        for c in (0..3).filter(|&c| dirs[c].is_none()) {
            for r in (0..3).filter(|&r| !row_used[r]) {
                let v = m[r][c] / norms[c];
                if best.is_none_or(|(_, _, b)| v.abs() > b.abs()) {
                    best = Some((r, c, v));
                }
            }
        }
        let (r, c, v) = best.expect("three axes to assign");
        row_used[r] = true;
        dirs[c] = Some(Direction::from_axis(r, v > 0.0));
    }
    Ok(Orientation(dirs.map(|d| d.expect("assigned"))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(x: f64, y: f64, z: f64) -> Affine {
        [
            [x, 0.0, 0.0, 0.0],
            [0.0, y, 0.0, 0.0],
            [0.0, 0.0, z, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    #[test]
    fn identity_is_ras() {
        assert_eq!(orientation_of(&diag(1.0, 1.0, 1.0)).unwrap(), Orientation::RAS);
    }

    #[test]
    fn negated_identity_is_lpi() {
        assert_eq!(orientation_of(&diag(-1.0, -1.0, -1.0)).unwrap(), Orientation::LPI);
    }

    #[test]
    fn singular_affine_rejected() {
        let err = orientation_of(&diag(1.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn parse_and_display() {
        let o: Orientation = "lpi".parse().unwrap();
        assert_eq!(o.to_string(), "LPI");
        assert!("LLI".parse::<Orientation>().is_err());
        assert!("LP".parse::<Orientation>().is_err());
        assert!("LPX".parse::<Orientation>().is_err());
    }

    #[test]
    fn forty_eight_distinct_codes() {
        let mut all = Orientation::all();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 48);
    }

    // Direct oracle: a signed permutation affine with spacing `s` has, in
    // column k, a single nonzero entry whose row and sign name the letter.
    #[test]
    fn signed_permutations_match_direct_oracle() {
        for code in Orientation::all() {
            let mut a = diag(0.0, 0.0, 0.0);
            a[3][3] = 1.0;
            let spacing = [0.8, 1.3, 2.1];
            for (k, d) in code.axes().into_iter().enumerate() {
                a[d.axis()][k] = if d.is_positive() { spacing[k] } else { -spacing[k] };
            }
            let expected: String = (0..3)
                .map(|k| {
                    let r = (0..3).find(|&r| a[r][k] != 0.0).unwrap();
                    let pos = a[r][k] > 0.0;
                    ["LR", "PA", "IS"][r].chars().nth(pos as usize).unwrap()
                })
                .collect();
            assert_eq!(orientation_of(&a).unwrap().to_string(), expected);
        }
    }

    #[test]
    fn mildly_oblique_affine_uses_dominant_axes() {
        let t = 0.2f64;
        let a = [
            [t.cos(), -t.sin(), 0.0, 3.0],
            [t.sin(), t.cos(), 0.0, -2.0],
            [0.0, 0.0, -1.0, 5.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        assert_eq!(orientation_of(&a).unwrap().to_string(), "RAI");
    }
}
