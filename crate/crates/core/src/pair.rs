//! Pair-state model: Stark-tuned Förster defect, resonant dipolar coupling and
//! the rotating-frame Hamiltonian of the two-atom excitation ladder.

use std::f64::consts::SQRT_2;

use nalgebra::Matrix4;
use num_complex::Complex64;

use crate::{Error, Result};

/// Physics knobs of the pair model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Resonant coupling constant, MHz·µm³.
    pub c3: f64,
    /// Förster defect `(E_pf − E_dd)/h` at zero field, MHz.
    pub delta0: f64,
    /// Field at which the defect vanishes, mV/cm.
    pub f_res: f64,
    /// Exponent `p` of the defect model `Δ0·(1 − (F/F_res)^p)`.
    pub stark_exponent: u32,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            c3: 2540.0,
            delta0: 8.5,
            f_res: 32.0,
            stark_exponent: 4,
        }
    }
}

impl PhysicalParams {
    pub fn new(c3: f64, delta0: f64, f_res: f64, stark_exponent: u32) -> Result<Self> {
        let params = Self {
            c3,
            delta0,
            f_res,
            stark_exponent,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c3.is_finite() && self.c3 > 0.0) {
            return Err(Error::Domain(format!("c3 must be positive, got {}", self.c3)));
        }
        if !self.delta0.is_finite() {
            return Err(Error::Domain(format!("delta0 must be finite, got {}", self.delta0)));
        }
        if !(self.f_res.is_finite() && self.f_res > 0.0) {
            return Err(Error::Domain(format!("f_res must be positive, got {}", self.f_res)));
        }
        if self.stark_exponent < 2 {
            return Err(Error::Domain(format!(
                "stark_exponent must be at least 2, got {}",
                self.stark_exponent
            )));
        }
        Ok(())
    }

    /// Förster defect `Δ(F) = Δ0·(1 − (F/F_res)^p)` in MHz.
    pub fn forster_defect(&self, field: f64) -> Result<f64> {
        if !(field >= 0.0 && field.is_finite()) {
            return Err(Error::Domain(format!(
                "field must be finite and non-negative, got {field} mV/cm"
            )));
        }
        let ratio = field / self.f_res;
        Ok(self.delta0 * (1.0 - ratio.powi(self.stark_exponent as i32)))
    }

    /// Off-diagonal element `⟨dd|V|p̃f⟩ = √2·C3/R³` in MHz.
    pub fn dipole_coupling(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!(
                "distance must be finite and positive, got {r} µm"
            )));
        }
        Ok(SQRT_2 * self.c3 / (r * r * r))
    }

    /// Hamiltonian (MHz) in the [`PairBasis`] order for a two-atom laser
    /// detuning `delta` and single-atom Rabi frequency `omega`.
    pub fn build_hamiltonian(
        &self,
        delta: f64,
        omega: f64,
        field: f64,
        r: f64,
    ) -> Result<HamiltonianMatrix> {
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::Domain(format!(
                "Rabi frequency must be finite and non-negative, got {omega} MHz"
            )));
        }
        if !delta.is_finite() {
            return Err(Error::Domain(format!("detuning must be finite, got {delta} MHz")));
        }
        let defect = self.forster_defect(field)?;
        let coupling = self.dipole_coupling(r)?;
        Ok(HamiltonianMatrix::from_parts(delta, omega, defect, coupling))
    }

    /// Diagonalizes the `{|dd⟩, |p̃f⟩}` block at field `field` and distance `r`.
    pub fn pair_eigensplitting(&self, field: f64, r: f64) -> Result<Eigensplitting> {
        let defect = self.forster_defect(field)?;
        let coupling = self.dipole_coupling(r)?;
        Ok(Eigensplitting::from_block(defect, coupling))
    }

    /// Shift of the `|dd⟩`-like branch relative to the unperturbed `|dd⟩` level.
    pub fn vdw_shift(&self, field: f64, r: f64, mode: VdwMode) -> Result<f64> {
        let defect = self.forster_defect(field)?;
        let coupling = self.dipole_coupling(r)?;
        match mode {
            VdwMode::Perturbative => {
                if defect == 0.0 {
                    return Err(Error::Singularity);
                }
                if coupling.abs() >= defect.abs() {
                    log::warn!(
                        "perturbative van der Waals shift outside its validity range: |V| = {coupling} MHz ≥ |Δ| = {} MHz",
                        defect.abs()
                    );
                }
                Ok(-coupling * coupling / defect)
            }
            VdwMode::Exact => Ok(exact_dd_branch(defect, coupling)),
        }
    }

    /// Root of `Δ(F) = 0` on `[0, 4·F_res]` by bisection.
    pub fn find_resonance_field(&self) -> Result<f64> {
        const TOLERANCE: f64 = 1e-9;
        let upper = 4.0 * self.f_res;
        let (mut lo, mut hi) = (0.0, upper);
        let mut f_lo = self.forster_defect(lo)?;
        let f_hi = self.forster_defect(hi)?;
        if f_lo.abs() < TOLERANCE {
            return Ok(lo);
        }
        if f_hi.abs() < TOLERANCE {
            return Ok(hi);
        }
        if f_lo.signum() == f_hi.signum() {
            return Err(Error::ResonanceNotFound { upper });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f_mid = self.forster_defect(mid)?;
            if f_mid.abs() < TOLERANCE || hi - lo <= f64::EPSILON * upper {
                return Ok(mid);
            }
            if f_mid.signum() == f_lo.signum() {
                lo = mid;
                f_lo = f_mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Eigenvalue of the `|dd⟩`-like branch of `[[0, V], [V, Δ]]`.
fn exact_dd_branch(defect: f64, coupling: f64) -> f64 {
    let sign = if defect < 0.0 { -1.0 } else { 1.0 };
    0.5 * defect - sign * (0.25 * defect * defect + coupling * coupling).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VdwMode {
    Perturbative,
    Exact,
}

/// Eigenstructure of the resonant 2×2 block `[[0, V], [V, Δ]]` (MHz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigensplitting {
    /// Lower and upper eigenvalue, MHz. They sum to `Δ(F)`.
    pub eigenvalues: [f64; 2],
    /// `ΔE = √(Δ² + 4V²)`, MHz.
    pub splitting: f64,
    /// Mixing angle in `[0, π/4]`; `π/4` at resonance, `0` without coupling.
    pub mixing_angle: f64,
}

impl Eigensplitting {
    pub fn from_block(defect: f64, coupling: f64) -> Self {
        let splitting = defect.hypot(2.0 * coupling);
        let mean = 0.5 * defect;
        Self {
            eigenvalues: [mean - 0.5 * splitting, mean + 0.5 * splitting],
            splitting,
            mixing_angle: 0.5 * (2.0 * coupling.abs()).atan2(defect.abs()),
        }
    }
}

/// Interatomic distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    /// Distance, µm.
    pub r: f64,
}

impl Geometry {
    /// Distances for which the single-channel pair model is intended.
    pub const VALID_RANGE: (f64, f64) = (5.0, 20.0);

    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!(
                "distance must be finite and positive, got {r} µm"
            )));
        }
        Ok(Self { r })
    }

    pub fn in_valid_range(&self) -> bool {
        (Self::VALID_RANGE.0..=Self::VALID_RANGE.1).contains(&self.r)
    }
}

/// Two-atom basis labels. The discriminant is the matrix index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairBasis {
    Gg = 0,
    /// `(|dg⟩ + |gd⟩)/√2`
    DgSym = 1,
    Dd = 2,
    /// `(|pf⟩ + |fp⟩)/√2`
    PfSym = 3,
}

impl PairBasis {
    pub const ALL: [PairBasis; 4] = [
        PairBasis::Gg,
        PairBasis::DgSym,
        PairBasis::Dd,
        PairBasis::PfSym,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn label(self) -> &'static str {
        match self {
            PairBasis::Gg => "gg",
            PairBasis::DgSym => "dg_sym",
            PairBasis::Dd => "dd",
            PairBasis::PfSym => "pf_sym",
        }
    }
}

/// Hermitian 4×4 Hamiltonian, entries are `E/h` in MHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianMatrix(pub Matrix4<Complex64>);

impl HamiltonianMatrix {
    /// Assembles the ladder Hamiltonian from an already evaluated defect and coupling.
    pub fn from_parts(delta: f64, omega: f64, defect: f64, coupling: f64) -> Self {
        let link = Complex64::new(SQRT_2 * omega / 2.0, 0.0);
        let v = Complex64::new(coupling, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let d = |x: f64| Complex64::new(x, 0.0);
        #[rustfmt::skip]
        let m = Matrix4::new(
            zero, link,           zero,     zero,
            link, d(-delta / 2.0), link,    zero,
            zero, link,           d(-delta), v,
            zero, zero,           v,        d(-delta + defect),
        );
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }

    pub fn get(&self, row: PairBasis, col: PairBasis) -> Complex64 {
        self.0[(row.index(), col.index())]
    }

    /// Largest deviation from Hermiticity relative to the largest entry.
    pub fn hermiticity_error(&self) -> f64 {
        let scale = self.0.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let diff = (self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn defaults() -> PhysicalParams {
        PhysicalParams::default()
    }

    #[test]
    fn defect_examples() {
        let p = defaults();
        assert_eq!(p.forster_defect(0.0).unwrap(), 8.5);
        assert_eq!(p.forster_defect(32.0).unwrap(), 0.0);
        assert_relative_eq!(p.forster_defect(64.0).unwrap(), -127.5, epsilon = 1e-12);
        assert_relative_eq!(
            p.forster_defect(20.0).unwrap(),
            8.5 * (1.0 - 0.625f64.powi(4)),
            epsilon = 1e-12
        );
        assert!((p.forster_defect(20.0).unwrap() - 7.203).abs() < 5e-4);
        assert!(matches!(p.forster_defect(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn defect_strictly_decreasing() {
        let p = defaults();
        let mut prev = p.forster_defect(0.0).unwrap();
        for i in 1..200 {
            let cur = p.forster_defect(i as f64 * 0.5).unwrap();
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn coupling_examples() {
        let p = defaults();
        assert!((p.dipole_coupling(8.1).unwrap() - 6.759).abs() < 5e-4);
        assert!((p.dipole_coupling(10.0).unwrap() - 3.592).abs() < 5e-4);
        let v = p.dipole_coupling(7.0).unwrap();
        assert_relative_eq!(p.dipole_coupling(14.0).unwrap(), v / 8.0, max_relative = 1e-14);
        assert!(p.dipole_coupling(0.0).is_err());
        assert!(p.dipole_coupling(-3.0).is_err());
    }

    #[test]
    fn hamiltonian_layout() {
        let p = defaults();
        let h = p.build_hamiltonian(2.0, 1.0, 0.0, 8.1).unwrap();
        let link = SQRT_2 / 2.0;
        assert_eq!(h.get(PairBasis::Gg, PairBasis::Gg).re, 0.0);
        assert_eq!(h.get(PairBasis::DgSym, PairBasis::DgSym).re, -1.0);
        assert_eq!(h.get(PairBasis::Dd, PairBasis::Dd).re, -2.0);
        assert_eq!(h.get(PairBasis::PfSym, PairBasis::PfSym).re, -2.0 + 8.5);
        assert_relative_eq!(h.get(PairBasis::Gg, PairBasis::DgSym).re, link);
        assert_relative_eq!(h.get(PairBasis::DgSym, PairBasis::Dd).re, link);
        assert_relative_eq!(
            h.get(PairBasis::Dd, PairBasis::PfSym).re,
            p.dipole_coupling(8.1).unwrap()
        );
        assert_eq!(h.get(PairBasis::Gg, PairBasis::Dd).norm(), 0.0);
        assert_eq!(h.get(PairBasis::Gg, PairBasis::PfSym).norm(), 0.0);
        assert_eq!(h.get(PairBasis::DgSym, PairBasis::PfSym).norm(), 0.0);
        assert!(h.hermiticity_error() <= 1e-12);
        assert!(h.matrix().iter().all(|z| z.im == 0.0));
        assert!(p.build_hamiltonian(0.0, -1.0, 0.0, 8.1).is_err());
    }

    #[test]
    fn resonant_block_eigenvalues_are_plus_minus_coupling() {
        let p = defaults();
        let h = p.build_hamiltonian(0.0, 0.0, 32.0, 8.1).unwrap();
        let block = nalgebra::Matrix2::new(
            h.get(PairBasis::Dd, PairBasis::Dd).re,
            h.get(PairBasis::Dd, PairBasis::PfSym).re,
            h.get(PairBasis::PfSym, PairBasis::Dd).re,
            h.get(PairBasis::PfSym, PairBasis::PfSym).re,
        );
        let mut ev: Vec<f64> = block.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 6.759).abs() < 5e-4);
        assert!((ev[1] - 6.759).abs() < 5e-4);
    }

    #[test]
    fn uncoupled_hamiltonian_is_diagonal() {
        let p = defaults();
        let h = p.build_hamiltonian(3.3, 0.0, 10.0, 1e6).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!(h.0[(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn eigensplitting_examples() {
        let p = defaults();
        let at_res = p.pair_eigensplitting(32.0, 8.1).unwrap();
        assert_relative_eq!(
            at_res.splitting,
            2.0 * SQRT_2 * 2540.0 / 531.441,
            max_relative = 1e-12
        );
        assert!((at_res.splitting - 13.518).abs() < 5e-4);
        assert_relative_eq!(at_res.mixing_angle, std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
        let at_10 = p.pair_eigensplitting(32.0, 10.0).unwrap();
        assert!((at_10.splitting / 2.0 - 3.59).abs() < 5e-3);

        let uncoupled = Eigensplitting::from_block(-4.0, 0.0);
        assert_eq!(uncoupled.splitting, 4.0);
        assert_eq!(uncoupled.mixing_angle, 0.0);
    }

    #[test]
    fn vdw_examples() {
        let p = defaults();
        let exact = p.vdw_shift(0.0, 8.1, VdwMode::Exact).unwrap();
        let v = p.dipole_coupling(8.1).unwrap();
        assert_relative_eq!(exact, 4.25 - (4.25f64 * 4.25 + v * v).sqrt(), epsilon = 1e-12);
        assert!((exact + 3.734).abs() < 5e-4);
        let pert = p.vdw_shift(0.0, 8.1, VdwMode::Perturbative).unwrap();
        assert!((pert + 5.375).abs() < 5e-4);
        let far = p.vdw_shift(64.0, 10.0, VdwMode::Perturbative).unwrap();
        assert!((far - 0.101).abs() < 5e-4);
        assert!(matches!(
            p.vdw_shift(32.0, 8.1, VdwMode::Perturbative),
            Err(Error::Singularity)
        ));
        assert_eq!(exact_dd_branch(5.0, 0.0), 0.0);
        assert_eq!(exact_dd_branch(-5.0, 0.0), 0.0);
    }

    #[test]
    fn resonance_field_examples() {
        let p = defaults();
        assert_eq!(p.find_resonance_field().unwrap(), 32.0);
        let doubled = PhysicalParams { delta0: 17.0, ..p };
        assert_eq!(doubled.find_resonance_field().unwrap(), 32.0);
        let quadratic = PhysicalParams { stark_exponent: 2, ..p };
        assert_eq!(quadratic.find_resonance_field().unwrap(), 32.0);
        let odd = PhysicalParams { f_res: 27.3, ..p };
        let root = odd.find_resonance_field().unwrap();
        assert!(odd.forster_defect(root).unwrap().abs() < 1e-9);
        let flat = PhysicalParams { delta0: 0.0, ..p };
        assert_eq!(flat.find_resonance_field().unwrap(), 0.0);
    }

    #[test]
    fn params_validation() {
        assert!(PhysicalParams::new(-1.0, 8.5, 32.0, 4).is_err());
        assert!(PhysicalParams::new(2540.0, 8.5, 0.0, 4).is_err());
        assert!(PhysicalParams::new(2540.0, 8.5, 32.0, 1).is_err());
        assert!(PhysicalParams::new(2540.0, 8.5, 32.0, 2).is_ok());
        assert!(Geometry::new(0.0).is_err());
        assert!(Geometry::new(8.1).unwrap().in_valid_range());
        assert!(!Geometry::new(30.0).unwrap().in_valid_range());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hamiltonian_is_hermitian(
                delta in -50.0..50.0f64,
                omega in 0.0..5.0f64,
                field in 0.0..80.0f64,
                r in 5.0..20.0f64,
            ) {
                let h = defaults().build_hamiltonian(delta, omega, field, r).unwrap();
                prop_assert!(h.hermiticity_error() <= 1e-12);
            }

            #[test]
            fn resonant_splitting_follows_inverse_cube(r in 5.0..20.0f64) {
                let p = defaults();
                let split = p.pair_eigensplitting(32.0, r).unwrap().splitting;
                let expected = 2.0 * SQRT_2 * p.c3;
                prop_assert!(((split * r * r * r) - expected).abs() <= 1e-9 * expected);
            }

            #[test]
            fn avoided_crossing_minimum_at_resonance(field in 0.0..80.0f64, r in 5.0..20.0f64) {
                let p = defaults();
                let e = p.pair_eigensplitting(field, r).unwrap();
                let two_v = 2.0 * p.dipole_coupling(r).unwrap();
                prop_assert!(e.splitting >= two_v);
                if (field - 32.0).abs() > 1e-6 {
                    prop_assert!(e.splitting > two_v);
                }
            }

            #[test]
            fn eigenvalues_sum_to_defect(field in 0.0..80.0f64, r in 5.0..20.0f64) {
                let p = defaults();
                let e = p.pair_eigensplitting(field, r).unwrap();
                let defect = p.forster_defect(field).unwrap();
                prop_assert!((e.eigenvalues[0] + e.eigenvalues[1] - defect).abs() <= 1e-9 * (1.0 + defect.abs()));
            }

            #[test]
            fn perturbative_matches_exact_at_weak_coupling(ratio in 1e-3..0.1f64, defect_sign in prop::bool::ANY) {
                let defect: f64 = if defect_sign { 40.0 } else { -40.0 };
                let coupling = ratio * defect.abs();
                let exact = exact_dd_branch(defect, coupling);
                let pert = -coupling * coupling / defect;
                prop_assert!((exact - pert).abs() / pert.abs() < 2.0 * ratio * ratio);
            }
        }
    }
}
