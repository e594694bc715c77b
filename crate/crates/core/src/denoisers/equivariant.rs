//! Group-equivariant wrappers around an arbitrary denoiser.

use super::{check_sigma, Denoiser};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, ExecPolicy};
use crate::grid::Image;
use crate::groups::{Group, GroupElement};
use crate::rng::SeededRng;

/// Largest group the exact average is computed over.
pub const REYNOLDS_GROUP_LIMIT: usize = 256;

/// Pairwise (tree) sum in index order. Sums of `2^k` identical terms are exact.
fn pairwise_sum(terms: &[Image]) -> Image {
    match terms.len() {
        1 => terms[0].clone(),
        len => {
            let (lo, hi) = terms.split_at(len / 2);
            let mut acc = pairwise_sum(lo);
            acc.axpy(1.0, &pairwise_sum(hi))
                .expect("terms share a shape");
            acc
        }
    }
}

/// `D_G(x) = (1/|G|) sum_g T_g^{-1} D(T_g x)`.
///
/// Base evaluations may run in parallel; the sum is always reduced in
/// group-enumeration order.
#[derive(Debug, Clone)]
pub struct ReynoldsEquivariantDenoiser<D> {
    base: D,
    group: Group,
    policy: ExecPolicy,
    name: String,
}

impl<D: Denoiser> ReynoldsEquivariantDenoiser<D> {
    pub fn new(base: D, group: Group) -> Result<Self> {
        if group.order() > REYNOLDS_GROUP_LIMIT {
            return Err(Error::GroupTooLarge {
                order: group.order(),
                limit: REYNOLDS_GROUP_LIMIT,
            });
        }
        let name = format!("reynolds[{}]({})", group.name(), base.name());
        Ok(Self {
            base,
            group,
            policy: ExecPolicy::default(),
            name,
        })
    }

    pub fn with_policy(mut self, policy: ExecPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn base(&self) -> &D {
        &self.base
    }

    pub fn group(&self) -> &Group {
        &self.group
    }
}

impl<D: Denoiser> Denoiser for ReynoldsEquivariantDenoiser<D> {
    fn denoise(&self, x: &Image, sigma: f64) -> Result<Image> {
        check_sigma(sigma)?;
        let elements = self.group.elements();
        let terms = try_map_indexed(self.policy, elements.len(), |k| {
            let g = &elements[k];
            let moved = g.apply(x)?;
            g.apply_inverse(&self.base.denoise(&moved, sigma)?)
        })?;
        Ok(pairwise_sum(&terms).scale(1.0 / elements.len() as f64))
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// `D~(x) = T_g^{-1} D(T_g x)` with a fresh uniform `g` on every call.
///
/// Owns its random stream; each call consumes exactly one group draw.
#[derive(Debug, Clone)]
pub struct MonteCarloEquivariantDenoiser<D> {
    base: D,
    group: Group,
    rng: SeededRng,
    last: Option<GroupElement>,
}

impl<D: Denoiser> MonteCarloEquivariantDenoiser<D> {
    pub fn new(base: D, group: Group, rng: SeededRng) -> Self {
        Self {
            base,
            group,
            rng,
            last: None,
        }
    }

    pub fn denoise(&mut self, x: &Image, sigma: f64) -> Result<Image> {
        check_sigma(sigma)?;
        let g = self.group.sample(&mut self.rng);
        self.last = Some(g);
        let moved = g.apply(x)?;
        g.apply_inverse(&self.base.denoise(&moved, sigma)?)
    }

    /// Element drawn by the most recent call.
    pub fn last_element(&self) -> Option<GroupElement> {
        self.last
    }

    pub fn rng(&self) -> &SeededRng {
        &self.rng
    }

    pub fn base(&self) -> &D {
        &self.base
    }

    pub fn group(&self) -> &Group {
        &self.group
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::{LinearMatrixDenoiser, TinyConvDenoiser};
    use crate::grid::DenseMatrix;
    use crate::groups::built_in_group;

    fn p1() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![-0.228, -0.023], vec![0.066, 0.1]]).unwrap()
    }

    fn assembled(d: &impl Denoiser, h: usize, w: usize) -> DenseMatrix {
        let cols: Vec<Vec<f64>> = (0..h * w)
            .map(|k| {
                d.denoise(&Image::basis(h, w, k / w, k % w), 0.0)
                    .unwrap()
                    .into_data()
            })
            .collect();
        DenseMatrix::from_columns(h * w, &cols).unwrap()
    }

    #[test]
    fn first_toy_perturbation_average() {
        let group = built_in_group("flips", 1, 2).unwrap();
        let base = LinearMatrixDenoiser::new(p1()).unwrap();
        let avg = ReynoldsEquivariantDenoiser::new(base, group).unwrap();
        let m = assembled(&avg, 1, 2);
        let want = [-0.064, 0.022, 0.022, -0.064];
        for (a, b) in m.entries().iter().zip(want) {
            assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        }
    }

    #[test]
    fn second_toy_perturbation_average() {
        let p = DenseMatrix::from_rows(&[vec![0.0275, 0.0244], vec![0.0112, -0.1842]]).unwrap();
        let group = built_in_group("flips", 1, 2).unwrap();
        let avg =
            ReynoldsEquivariantDenoiser::new(LinearMatrixDenoiser::new(p).unwrap(), group).unwrap();
        let m = assembled(&avg, 1, 2);
        let want = [-0.0783, 0.0178, 0.0178, -0.0783];
        for (a, b) in m.entries().iter().zip(want) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn trivial_group_is_the_base() {
        let base = TinyConvDenoiser::reference();
        let mut rng = SeededRng::new(1);
        let x = Image::from_fn(6, 6, |_, _| rng.uniform());
        let avg = ReynoldsEquivariantDenoiser::new(&base, Group::trivial()).unwrap();
        assert_eq!(
            avg.denoise(&x, 0.1).unwrap(),
            base.denoise(&x, 0.1).unwrap()
        );
    }

    #[test]
    fn mc_trivial_group_advances_rng() {
        let base = TinyConvDenoiser::reference();
        let x = Image::filled(4, 4, 0.3);
        let mut mc = MonteCarloEquivariantDenoiser::new(&base, Group::trivial(), SeededRng::new(8));
        let y = mc.denoise(&x, 0.1).unwrap();
        assert_eq!(y, base.denoise(&x, 0.1).unwrap());
        let mut expected = SeededRng::new(8);
        expected.index(1);
        assert_eq!(
            mc.rng().clone().uniform().to_bits(),
            expected.uniform().to_bits()
        );
    }

    #[test]
    fn group_too_large() {
        let g = built_in_group("shifts", 32, 32).unwrap();
        let err = ReynoldsEquivariantDenoiser::new(TinyConvDenoiser::reference(), g).unwrap_err();
        assert!(matches!(err, Error::GroupTooLarge { order: 1024, .. }));
    }

    #[test]
    fn pairwise_sum_is_exact_for_powers_of_two() {
        let a = Image::from_slice_row(&[0.1, 1.0 / 3.0, std::f64::consts::PI]);
        let terms = vec![a.clone(); 8];
        assert_eq!(pairwise_sum(&terms).scale(1.0 / 8.0), a);
    }
}
