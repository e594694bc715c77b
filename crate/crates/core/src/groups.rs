//! Finite groups of pixel permutations: quarter-turn rotations, reflections
//! and circular shifts.
//!
//! An element is stored in the normal form `(rotation, flip, shift)` and acts
//! on pixel positions as `shift ∘ flip ∘ rotation`: rotate first, then mirror
//! left-right, then translate. With `N` the side of a square image:
//!
//! * rotation (counter-clockwise): `out[i, j] = x[j, N-1-i]`
//! * horizontal flip: `out[i, j] = x[i, W-1-j]`
//! * shift `(dy, dx)`: `out[i, j] = x[(i-dy) mod H, (j-dx) mod W]`
//!
//! A vertical flip is `(rotation 2, flip)`, so the flip group works on
//! rectangular images as well.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DenseMatrix, Image};
use crate::rng::SeededRng;

/// Largest pixel count for which explicit permutation matrices are built.
pub const MATRIX_PIXEL_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GroupElement {
    rotation: u8,
    flip: bool,
    shift: (i64, i64),
}

type Linear = [[i64; 2]; 2];

fn linear_part(rotation: u8, flip: bool) -> Linear {
    // rotation: (dr, dc) -> (-dc, dr); flip: (dr, dc) -> (dr, -dc)
    let r: Linear = [[0, -1], [1, 0]];
    let mut l: Linear = [[1, 0], [0, 1]];
    for _ in 0..rotation {
        l = mul2(&r, &l);
    }
    if flip {
        l = mul2(&[[1, 0], [0, -1]], &l);
    }
    l
}

fn mul2(a: &Linear, b: &Linear) -> Linear {
    let mut out = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

impl GroupElement {
    pub const IDENTITY: GroupElement = GroupElement {
        rotation: 0,
        flip: false,
        shift: (0, 0),
    };

    pub fn new(rotation_quarter_turns: u8, flip_horizontal: bool, shift: (i64, i64)) -> Self {
        Self {
            rotation: rotation_quarter_turns % 4,
            flip: flip_horizontal,
            shift,
        }
    }

    pub fn rotation(quarter_turns: u8) -> Self {
        Self::new(quarter_turns, false, (0, 0))
    }

    pub fn flip_horizontal() -> Self {
        Self::new(0, true, (0, 0))
    }

    pub fn flip_vertical() -> Self {
        Self::new(2, true, (0, 0))
    }

    pub fn translation(dy: i64, dx: i64) -> Self {
        Self::new(0, false, (dy, dx))
    }

    pub fn rotation_quarter_turns(&self) -> u8 {
        self.rotation
    }

    pub fn flips(&self) -> bool {
        self.flip
    }

    pub fn shift(&self) -> (i64, i64) {
        self.shift
    }

    pub fn is_identity_on(&self, height: usize, width: usize) -> bool {
        self.reduced(height, width) == Self::IDENTITY
    }

    /// Same element with the shift reduced into `0..height` x `0..width`.
    pub fn reduced(&self, height: usize, width: usize) -> Self {
        Self {
            shift: (
                self.shift.0.rem_euclid(height as i64),
                self.shift.1.rem_euclid(width as i64),
            ),
            ..*self
        }
    }

    /// `g.compose(h)` acts as `g` after `h`.
    pub fn compose(&self, h: &GroupElement) -> GroupElement {
        let l = linear_part(self.rotation, self.flip);
        let moved = (
            l[0][0] * h.shift.0 + l[0][1] * h.shift.1,
            l[1][0] * h.shift.0 + l[1][1] * h.shift.1,
        );
        let shift = (self.shift.0 + moved.0, self.shift.1 + moved.1);
        let (flip, rotation) = if h.flip {
            (!self.flip, (h.rotation + 4 - self.rotation) % 4)
        } else {
            (self.flip, (self.rotation + h.rotation) % 4)
        };
        GroupElement {
            rotation,
            flip,
            shift,
        }
    }

    pub fn inverse(&self) -> GroupElement {
        let rotflip_inverse = if self.flip {
            GroupElement::new(self.rotation, true, (0, 0))
        } else {
            GroupElement::rotation((4 - self.rotation) % 4)
        };
        rotflip_inverse.compose(&GroupElement::translation(-self.shift.0, -self.shift.1))
    }

    fn check_shape(&self, height: usize, width: usize) -> Result<()> {
        if self.rotation % 2 == 1 && height != width {
            return Err(Error::NonSquareRotation { height, width });
        }
        Ok(())
    }

    /// Source pixel index for every destination pixel: `out[k] = x[perm[k]]`.
    pub fn permutation(&self, height: usize, width: usize) -> Result<Vec<usize>> {
        self.check_shape(height, width)?;
        let (h, w) = (height as i64, width as i64);
        let mut perm = Vec::with_capacity(height * width);
        for i in 0..h {
            for j in 0..w {
                let mut r = (i - self.shift.0).rem_euclid(h);
                let mut c = (j - self.shift.1).rem_euclid(w);
                if self.flip {
                    c = w - 1 - c;
                }
                (r, c) = match self.rotation {
                    0 => (r, c),
                    1 => (c, w - 1 - r),
                    2 => (h - 1 - r, w - 1 - c),
                    _ => (w - 1 - c, r),
                };
                perm.push((r * w + c) as usize);
            }
        }
        Ok(perm)
    }

    /// `T_g x`.
    pub fn apply(&self, x: &Image) -> Result<Image> {
        if *self == Self::IDENTITY {
            return Ok(x.clone());
        }
        let perm = self.permutation(x.height(), x.width())?;
        Ok(gather(x, &perm))
    }

    /// `T_g^{-1} x`.
    pub fn apply_inverse(&self, x: &Image) -> Result<Image> {
        if *self == Self::IDENTITY {
            return Ok(x.clone());
        }
        let perm = self.permutation(x.height(), x.width())?;
        let mut out = vec![0.0; x.len()];
        for (k, &src) in perm.iter().enumerate() {
            out[src] = x.data()[k];
        }
        Ok(Image::from_vec_unchecked(x.height(), x.width(), out))
    }

    /// Explicit permutation matrix `P` with `vec(T_g x) = P vec(x)`.
    pub fn matrix_of(&self, height: usize, width: usize) -> Result<DenseMatrix> {
        let n = height * width;
        if n > MATRIX_PIXEL_CAP {
            return Err(Error::SizeCap {
                what: "permutation matrix pixel count",
                size: n,
                cap: MATRIX_PIXEL_CAP,
            });
        }
        let perm = self.permutation(height, width)?;
        let mut m = DenseMatrix::zeros(n, n);
        for (k, &src) in perm.iter().enumerate() {
            m.set(k, src, 1.0);
        }
        Ok(m)
    }
}

fn gather(x: &Image, perm: &[usize]) -> Image {
    let data = perm.iter().map(|&src| x.data()[src]).collect();
    Image::from_vec_unchecked(x.height(), x.width(), data)
}

/// `T_g^{-1} M T_g` computed through the permutation of `g`.
pub(crate) fn conjugate_matrix(m: &DenseMatrix, perm: &[usize]) -> DenseMatrix {
    // (P^T M P)[i, j] = M[inv[i], inv[j]] with P[k, perm[k]] = 1
    let n = perm.len();
    let mut inv = vec![0; n];
    for (k, &src) in perm.iter().enumerate() {
        inv[src] = k;
    }
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, m.get(inv[i], inv[j]));
        }
    }
    out
}

/// Built-in group families, as they appear in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GroupSpec {
    Trivial,
    /// Identity, horizontal, vertical and double reflection.
    Flips,
    C4,
    D4,
    /// Circular shifts by multiples of `stride` (stride 1 = all `H*W` shifts).
    Shifts {
        stride: usize,
    },
    D4Shifts {
        stride: usize,
    },
    FlipsShifts {
        stride: usize,
    },
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let with_stride = |f: &mut fmt::Formatter<'_>, base: &str, stride: usize| {
            if stride == 1 {
                write!(f, "{base}")
            } else {
                write!(f, "{base}:{stride}")
            }
        };
        match *self {
            GroupSpec::Trivial => write!(f, "trivial"),
            GroupSpec::Flips => write!(f, "flips"),
            GroupSpec::C4 => write!(f, "c4"),
            GroupSpec::D4 => write!(f, "d4"),
            GroupSpec::Shifts { stride } => with_stride(f, "shifts", stride),
            GroupSpec::D4Shifts { stride } => with_stride(f, "d4_shifts", stride),
            GroupSpec::FlipsShifts { stride } => with_stride(f, "flips_shifts", stride),
        }
    }
}

impl FromStr for GroupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownName {
            kind: "group",
            name: s.to_string(),
        };
        let (base, stride) = match s.split_once(':') {
            Some((b, st)) => {
                let stride: usize = st.parse().map_err(|_| unknown())?;
                if stride == 0 {
                    return Err(unknown());
                }
                (b, Some(stride))
            }
            None => (s, None),
        };
        let spec = match (base, stride) {
            ("trivial", None) => GroupSpec::Trivial,
            ("flips", None) => GroupSpec::Flips,
            ("c4", None) => GroupSpec::C4,
            ("d4", None) => GroupSpec::D4,
            ("shifts", st) => GroupSpec::Shifts {
                stride: st.unwrap_or(1),
            },
            ("d4_shifts", st) => GroupSpec::D4Shifts {
                stride: st.unwrap_or(1),
            },
            ("flips_shifts", st) => GroupSpec::FlipsShifts {
                stride: st.unwrap_or(1),
            },
            _ => return Err(unknown()),
        };
        Ok(spec)
    }
}

impl TryFrom<String> for GroupSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GroupSpec> for String {
    fn from(g: GroupSpec) -> String {
        g.to_string()
    }
}

impl GroupSpec {
    /// Enumerates the group for images of size `height x width`.
    pub fn build(&self, height: usize, width: usize) -> Result<Group> {
        let rotations = |flip_too: bool| -> Vec<GroupElement> {
            let flips: &[bool] = if flip_too { &[false, true] } else { &[false] };
            flips
                .iter()
                .flat_map(|&f| (0..4).map(move |k| GroupElement::new(k, f, (0, 0))))
                .collect()
        };
        let flips = vec![
            GroupElement::IDENTITY,
            GroupElement::flip_horizontal(),
            GroupElement::flip_vertical(),
            GroupElement::rotation(2),
        ];
        let shifts = |stride: usize| -> Result<Vec<GroupElement>> {
            if !height.is_multiple_of(stride) || !width.is_multiple_of(stride) {
                return Err(Error::InvalidArgument(format!(
                    "shift stride {stride} does not divide {height}x{width}"
                )));
            }
            let mut out = Vec::new();
            for dy in (0..height).step_by(stride) {
                for dx in (0..width).step_by(stride) {
                    out.push(GroupElement::translation(dy as i64, dx as i64));
                }
            }
            Ok(out)
        };
        let product = |shifts: Vec<GroupElement>, base: Vec<GroupElement>| -> Vec<GroupElement> {
            shifts
                .iter()
                .flat_map(|s| base.iter().map(move |b| s.compose(b)))
                .collect()
        };
        let needs_square = matches!(
            self,
            GroupSpec::C4 | GroupSpec::D4 | GroupSpec::D4Shifts { .. }
        );
        if needs_square && height != width {
            return Err(Error::NonSquareRotation { height, width });
        }
        let (elements, modulus) = match *self {
            GroupSpec::Trivial => (vec![GroupElement::IDENTITY], None),
            GroupSpec::Flips => (flips, None),
            GroupSpec::C4 => (rotations(false), None),
            GroupSpec::D4 => (rotations(true), None),
            GroupSpec::Shifts { stride } => (shifts(stride)?, Some((height, width))),
            GroupSpec::D4Shifts { stride } => (
                product(shifts(stride)?, rotations(true)),
                Some((height, width)),
            ),
            GroupSpec::FlipsShifts { stride } => {
                (product(shifts(stride)?, flips), Some((height, width)))
            }
        };
        Group::new(self.to_string(), elements, modulus)
    }
}

/// `built_in_group("d4", 8, 8)` and friends.
pub fn built_in_group(name: &str, height: usize, width: usize) -> Result<Group> {
    name.parse::<GroupSpec>()?.build(height, width)
}

/// A finite group of image transformations containing the identity.
///
/// Elements are kept in normal form, not as pixel permutations, so on
/// degenerate sizes the action need not be faithful: on a 1x1 image every
/// element of `d4` is the identity, and on 2x2 images flips coincide with
/// shifts. Such elements are all kept, which leaves uniform averages over
/// the group unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    name: String,
    elements: Vec<GroupElement>,
    shift_modulus: Option<(usize, usize)>,
}

impl Group {
    /// `shift_modulus` is the torus shifts are reduced on; `None` for groups
    /// without translations.
    pub fn new(
        name: impl Into<String>,
        elements: Vec<GroupElement>,
        shift_modulus: Option<(usize, usize)>,
    ) -> Result<Self> {
        let group = Group {
            name: name.into(),
            elements,
            shift_modulus,
        };
        if group.elements.is_empty() || !group.contains(&GroupElement::IDENTITY) {
            return Err(Error::InvalidArgument(format!(
                "group `{}` must contain the identity",
                group.name
            )));
        }
        Ok(group)
    }

    pub fn trivial() -> Self {
        Group {
            name: "trivial".into(),
            elements: vec![GroupElement::IDENTITY],
            shift_modulus: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    fn canonical(&self, g: &GroupElement) -> GroupElement {
        match self.shift_modulus {
            Some((h, w)) => g.reduced(h, w),
            None => *g,
        }
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        let g = self.canonical(g);
        self.elements.iter().any(|e| self.canonical(e) == g)
    }

    /// Exhaustive closure / inverse / identity check.
    pub fn verify_axioms(&self) -> Result<()> {
        if !self.contains(&GroupElement::IDENTITY) {
            return Err(Error::InvalidArgument("missing identity".into()));
        }
        for g in &self.elements {
            if !self.contains(&g.inverse()) {
                return Err(Error::InvalidArgument(format!("inverse of {g:?} missing")));
            }
            for h in &self.elements {
                if !self.contains(&g.compose(h)) {
                    return Err(Error::InvalidArgument(format!(
                        "{g:?} ∘ {h:?} not in group"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Uniform draw; consumes exactly one index draw, even for the trivial group.
    pub fn sample(&self, rng: &mut SeededRng) -> GroupElement {
        self.elements[rng.index(self.elements.len())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(h: usize, w: usize, v: &[f64]) -> Image {
        Image::new(h, w, v.to_vec()).unwrap()
    }

    #[test]
    fn rot90_convention() {
        let x = img(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let y = GroupElement::rotation(1).apply(&x).unwrap();
        assert_eq!(y.data(), &[2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn flips_on_row_vector() {
        let x = img(1, 2, &[5.0, 7.0]);
        assert_eq!(
            GroupElement::flip_horizontal().apply(&x).unwrap().data(),
            &[7.0, 5.0]
        );
        let m = GroupElement::flip_horizontal().matrix_of(1, 2).unwrap();
        assert_eq!(m.entries(), &[0.0, 1.0, 1.0, 0.0]);
        let v = img(3, 2, &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(
            GroupElement::flip_vertical().apply(&v).unwrap().data(),
            &[5., 6., 3., 4., 1., 2.]
        );
    }

    #[test]
    fn shift_convention() {
        let x = img(1, 4, &[1., 2., 3., 4.]);
        let y = GroupElement::translation(0, 1).apply(&x).unwrap();
        assert_eq!(y.data(), &[4., 1., 2., 3.]);
    }

    #[test]
    fn inverse_and_compose_examples() {
        assert_eq!(
            GroupElement::rotation(1).inverse(),
            GroupElement::rotation(3)
        );
        assert_eq!(
            GroupElement::flip_horizontal().inverse(),
            GroupElement::flip_horizontal()
        );
        assert_eq!(
            GroupElement::rotation(1).compose(&GroupElement::rotation(1)),
            GroupElement::rotation(2)
        );
    }

    #[test]
    fn odd_rotation_needs_square() {
        let x = Image::zeros(2, 3);
        assert!(matches!(
            GroupElement::rotation(1).apply(&x),
            Err(Error::NonSquareRotation { .. })
        ));
        assert!(GroupElement::rotation(2).apply(&x).is_ok());
        assert!(built_in_group("d4", 2, 3).is_err());
    }

    #[test]
    fn group_orders() {
        assert_eq!(built_in_group("trivial", 3, 3).unwrap().order(), 1);
        assert_eq!(built_in_group("flips", 3, 5).unwrap().order(), 4);
        assert_eq!(built_in_group("c4", 3, 3).unwrap().order(), 4);
        assert_eq!(built_in_group("d4", 3, 3).unwrap().order(), 8);
        assert_eq!(built_in_group("shifts", 4, 4).unwrap().order(), 16);
        assert_eq!(built_in_group("shifts:2", 4, 4).unwrap().order(), 4);
        assert_eq!(built_in_group("d4_shifts", 4, 4).unwrap().order(), 128);
        assert_eq!(built_in_group("flips_shifts", 4, 4).unwrap().order(), 64);
        assert!(matches!(
            built_in_group("so3", 4, 4),
            Err(Error::UnknownName { .. })
        ));
        assert!(built_in_group("shifts:3", 4, 4).is_err());
    }

    #[test]
    fn spec_strings_roundtrip() {
        for s in [
            "trivial",
            "flips",
            "c4",
            "d4",
            "shifts",
            "shifts:8",
            "d4_shifts",
            "flips_shifts:2",
        ] {
            assert_eq!(s.parse::<GroupSpec>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn trivial_sampling_still_draws() {
        let g = Group::trivial();
        let mut a = SeededRng::new(1);
        let mut b = SeededRng::new(1);
        assert_eq!(g.sample(&mut a), GroupElement::IDENTITY);
        b.index(1);
        assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
    }

    #[test]
    fn sampling_is_uniform_on_d4() {
        let g = built_in_group("d4", 4, 4).unwrap();
        let mut rng = SeededRng::new(2024);
        let mut counts = [0usize; 8];
        let draws = 100_000;
        for _ in 0..draws {
            let e = g.sample(&mut rng);
            let k = g.elements().iter().position(|x| *x == e).unwrap();
            counts[k] += 1;
        }
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 0.125).abs() < 0.01, "frequency {f}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = built_in_group("d4_shifts", 4, 4).unwrap();
        let mut a = SeededRng::new(9);
        let mut b = SeededRng::new(9);
        for _ in 0..200 {
            assert_eq!(g.sample(&mut a), g.sample(&mut b));
        }
    }

    #[test]
    fn matrix_cap() {
        assert!(matches!(
            GroupElement::IDENTITY.matrix_of(65, 64),
            Err(Error::SizeCap { .. })
        ));
        let id = GroupElement::IDENTITY.matrix_of(3, 3).unwrap();
        assert_eq!(id, DenseMatrix::identity(9));
    }
}
