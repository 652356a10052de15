//! Accuracy certificates for the quadratic early-time map.
//!
//! The reduced atomic evolution is a linear map, so its Choi state is
//! assembled by pushing every basis matrix |i><j| through the map and
//! placing the images into blocks; this equals acting on half of the
//! normalized maximally entangled state. The exact map propagates
//! |i><j| (x) vacuum through the joint dynamics and reduces back; the
//! quadratic map adds (gt)^2 times the dissipator. Their trace distance is
//! the channel-level error; the difference of excitation numbers under both
//! maps is the cheaper observable-level error.

use crate::dynamics::{
    apply_channel_power, dissipator, integrate_raw, quad_map, single_pair_channel, CommonEngine,
    IntegratorConfig,
};
use crate::linalg::{
    hermitian_eigenvalues, partial_trace_raw, tensor_product, trace_distance_raw, ComplexMatrix,
    DensityMatrix, C64, ONE, ZERO,
};
use crate::model::{atomic_lowering, collective_lowering, Liouvillian, SystemSpec, Topology};
use crate::{tol, Error, Result};

/// Which construction produced a Choi matrix. The exact map is CPTP and its
/// Choi state is positive; the quadratic map may dip slightly negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapTag {
    Exact,
    Quad,
}

/// Normalized Choi state of a map on N atoms: trace 1, dimension 4^N.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    mat: ComplexMatrix,
    atom_dim: usize,
    pub tag: MapTag,
}

impl ChoiMatrix {
    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn atom_dim(&self) -> usize {
        self.atom_dim
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = hermitian_eigenvalues(&self.mat)?;
        Ok(eig.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Hermiticity and unit trace always; positivity only for the exact map.
    pub fn validate(&self) -> Result<()> {
        let defect = self.mat.hermiticity_defect();
        if defect > 1e-10 {
            return Err(Error::Config(format!("Choi matrix hermiticity defect {defect:.3e}")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > 1e-9 || tr.im.abs() > 1e-9 {
            return Err(Error::Config(format!("Choi trace {tr} should be 1")));
        }
        if self.tag == MapTag::Exact && self.min_eigenvalue()? < tol::PSD_FLOOR {
            return Err(Error::Config("exact-map Choi matrix is not positive".into()));
        }
        Ok(())
    }
}

/// Assembles the normalized Choi state of a linear map given column by
/// column on basis matrices.
pub fn choi_of_map(
    n_atoms: usize,
    tag: MapTag,
    mut map: impl FnMut(&ComplexMatrix) -> Result<ComplexMatrix>,
) -> Result<ChoiMatrix> {
    if n_atoms == 0 {
        return Err(Error::Config("Choi assembly needs at least one atom".into()));
    }
    let d = 1usize << n_atoms;
    let dd = d
        .checked_mul(d)
        .filter(|&v| v <= tol::MAX_DENSE_DIM)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "Choi matrix dimension 4^{n_atoms} exceeds the dense budget {}",
                tol::MAX_DENSE_DIM
            ))
        })?;
    let weight = C64::new(1.0 / d as f64, 0.0);
    let mut mat = ComplexMatrix::zeros(dd, dd);
    let mut basis = ComplexMatrix::zeros(d, d);
    for k in 0..d {
        for l in 0..d {
            basis.set(k, l, ONE);
            let image = map(&basis)?;
            basis.set(k, l, ZERO);
            for i in 0..d {
                for j in 0..d {
                    let v = image.get(i, j);
                    if v != ZERO {
                        mat.set(i * d + k, j * d + l, v * weight);
                    }
                }
            }
        }
    }
    Ok(ChoiMatrix { mat, atom_dim: d, tag })
}

fn env_vacuum(env_dim: usize) -> ComplexMatrix {
    let mut v = ComplexMatrix::zeros(env_dim, env_dim);
    v.set(0, 0, ONE);
    v
}

/// Choi state of the exact reduced map at time gt, integrated column by
/// column on the joint space.
pub fn exact_choi(spec: &SystemSpec, gt: f64, cfg: &IntegratorConfig) -> Result<ChoiMatrix> {
    spec.validate()?;
    let gen = Liouvillian::for_spec(spec)?;
    let n = spec.n_atoms;
    let d = 1usize << n;
    let env0 = env_vacuum(gen.dim() / d);
    let atom_factors: Vec<usize> = (0..n).collect();
    let run_cfg = IntegratorConfig { probe_times: Vec::new(), ..cfg.clone() };
    choi_of_map(n, MapTag::Exact, |e| {
        let joint0 = tensor_product(e, &env0)?;
        let yt = integrate_raw(
            &gen,
            joint0,
            gt,
            &run_cfg,
            spec.gamma_over_g(),
            |_, _| {},
            |_, _| {},
        )?;
        partial_trace_raw(&yt, gen.dims(), &atom_factors)
    })
}

fn quad_generators(spec: &SystemSpec) -> Result<Vec<ComplexMatrix>> {
    Ok(match spec.topology {
        Topology::CommonCavity => vec![collective_lowering(spec.n_atoms)?],
        Topology::IndependentCavities => (0..spec.n_atoms)
            .map(|k| atomic_lowering(spec.n_atoms, k))
            .collect::<Result<_>>()?,
    })
}

/// Choi state of the quadratic map rho + (gt)^2 D[rho].
pub fn quad_choi(spec: &SystemSpec, gt: f64) -> Result<ChoiMatrix> {
    spec.validate()?;
    let ops = quad_generators(spec)?;
    let scale = C64::new(gt * gt, 0.0);
    choi_of_map(spec.n_atoms, MapTag::Quad, |e| {
        let mut out = e.clone();
        for l in &ops {
            out = out.add(&dissipator(l, e).scale(scale));
        }
        Ok(out)
    })
}

#[derive(Debug, Clone, Default)]
pub struct ChoiOptions {
    /// Full Choi assembly beyond N = 2 multiplies 4^N column integrations;
    /// opt in explicitly for the hours-scale cases.
    pub long_running: bool,
    pub integrator: IntegratorConfig,
}

fn gate_columns(spec: &SystemSpec, opts: &ChoiOptions) -> Result<()> {
    if spec.n_atoms > 2 && !opts.long_running {
        return Err(Error::Capacity(format!(
            "full Choi assembly for N = {} runs 4^N column integrations; \
             enable long_running or use excitation_error",
            spec.n_atoms
        )));
    }
    Ok(())
}

/// Trace distance between the exact and quadratic Choi states at time gt.
pub fn choi_error(spec: &SystemSpec, gt: f64) -> Result<f64> {
    choi_error_opts(spec, gt, &ChoiOptions::default())
}

pub fn choi_error_opts(spec: &SystemSpec, gt: f64, opts: &ChoiOptions) -> Result<f64> {
    gate_columns(spec, opts)?;
    let exact = exact_choi(spec, gt, &opts.integrator)?;
    let quad = quad_choi(spec, gt)?;
    Ok(trace_distance_raw(exact.matrix(), quad.matrix()))
}

/// Choi error at several times, one integration per basis column with
/// probes at every requested time.
pub fn choi_error_curve(spec: &SystemSpec, times: &[f64], opts: &ChoiOptions) -> Result<Vec<f64>> {
    gate_columns(spec, opts)?;
    spec.validate()?;
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let gen = Liouvillian::for_spec(spec)?;
    let n = spec.n_atoms;
    let d = 1usize << n;
    let dd = d * d;
    if dd > tol::MAX_DENSE_DIM {
        return Err(Error::Capacity(format!(
            "Choi matrix dimension {dd} exceeds the dense budget {}",
            tol::MAX_DENSE_DIM
        )));
    }
    let env0 = env_vacuum(gen.dim() / d);
    let atom_factors: Vec<usize> = (0..n).collect();
    let duration = *times.last().unwrap();
    let cfg = opts.integrator.clone().with_probes(times);
    let weight = C64::new(1.0 / d as f64, 0.0);
    let mut exact_at: Vec<ComplexMatrix> =
        (0..times.len()).map(|_| ComplexMatrix::zeros(dd, dd)).collect();
    let mut basis = ComplexMatrix::zeros(d, d);
    for k in 0..d {
        for l in 0..d {
            basis.set(k, l, ONE);
            let joint0 = tensor_product(&basis, &env0)?;
            basis.set(k, l, ZERO);
            let mut bail = Ok(());
            integrate_raw(
                &gen,
                joint0,
                duration,
                &cfg,
                spec.gamma_over_g(),
                |_, _| {},
                |idx, y| {
                    if bail.is_err() {
                        return;
                    }
                    match partial_trace_raw(y, gen.dims(), &atom_factors) {
                        Ok(image) => {
                            for i in 0..d {
                                for j in 0..d {
                                    let v = image.get(i, j);
                                    if v != ZERO {
                                        exact_at[idx].set(i * d + k, j * d + l, v * weight);
                                    }
                                }
                            }
                        }
                        Err(e) => bail = Err(e),
                    }
                },
            )?;
            bail?;
        }
    }
    times
        .iter()
        .zip(&exact_at)
        .map(|(gt, exact)| Ok(trace_distance_raw(exact, quad_choi(spec, *gt)?.matrix())))
        .collect()
}

/// |N_ex^quad - N_ex^exact| at time gt: the observable-level error of the
/// quadratic map, cheap enough for any N within dynamics capacity.
pub fn excitation_error(spec: &SystemSpec, rho0: &DensityMatrix, gt: f64) -> Result<f64> {
    spec.validate()?;
    if !(gt >= 0.0) || !gt.is_finite() {
        return Err(Error::Config(format!("bad time {gt}")));
    }
    if gt == 0.0 {
        return Ok(0.0);
    }
    let n = spec.n_atoms;
    let exdiag: Vec<f64> = (0..(1usize << n))
        .map(|b| (n as u32 - (b as u32).count_ones()) as f64)
        .collect();
    let quad_nex = quad_map(spec, rho0, gt)?.matrix().weighted_diag(&exdiag).re;
    let cfg = IntegratorConfig::default();
    let exact_nex = match spec.topology {
        Topology::CommonCavity => {
            let (engine, atoms0) = CommonEngine::select(spec, rho0)?;
            engine.evolve(&atoms0, gt, &cfg, spec.gamma_over_g())?.final_n_ex()
        }
        Topology::IndependentCavities => {
            let phi = single_pair_channel(spec.gamma_over_g(), gt, &cfg)?;
            apply_channel_power(&phi, rho0)?.matrix().weighted_diag(&exdiag).re
        }
    };
    Ok((quad_nex - exact_nex).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Superoperator;
    use crate::model::{build_initial, HalfInt, InitialState};

    fn identity_choi(n: usize) -> ChoiMatrix {
        choi_of_map(n, MapTag::Exact, |e| Ok(e.clone())).unwrap()
    }

    fn fully_excited(n: usize) -> DensityMatrix {
        let spec = SystemSpec::new(n, 1.0, 0.0).unwrap();
        let j = HalfInt::from_doubled(n as i32);
        build_initial(&spec, &InitialState::Dicke { j, m: j }).unwrap()
    }

    #[test]
    fn identity_map_gives_maximally_entangled_state() {
        let choi = identity_choi(1);
        assert!((choi.trace().re - 1.0).abs() < 1e-14);
        for (i, j, want) in [
            (0usize, 0usize, 0.5),
            (0, 3, 0.5),
            (3, 0, 0.5),
            (3, 3, 0.5),
            (0, 1, 0.0),
            (1, 1, 0.0),
            (2, 3, 0.0),
        ] {
            let got = choi.matrix().get(i, j);
            assert!(
                (got - C64::new(want, 0.0)).norm() < 1e-14,
                "entry ({i},{j}) = {got}, want {want}"
            );
        }
        choi.validate().unwrap();
    }

    #[test]
    fn quad_map_at_zero_time_is_the_identity_channel() {
        let spec = SystemSpec::new(2, 1.0, 3.0).unwrap();
        let quad = quad_choi(&spec, 0.0).unwrap();
        let id = identity_choi(2);
        assert!(quad.matrix().max_abs_diff(id.matrix()) < 1e-14);
    }

    #[test]
    fn exact_single_atom_choi_is_a_valid_state() {
        let spec = SystemSpec::new(1, 1.0, 0.0).unwrap();
        let choi = exact_choi(&spec, 0.5, &IntegratorConfig::default()).unwrap();
        choi.validate().unwrap();
        let eig = hermitian_eigenvalues(choi.matrix()).unwrap();
        let sum: f64 = eig.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(eig.iter().all(|l| *l >= tol::PSD_FLOOR));
    }

    #[test]
    fn exact_choi_matches_single_pair_channel_construction() {
        // one atom with a two-level mode: the joint-integration Choi and
        // the superoperator-based channel describe the same map
        for gr in [0.0, 2.0] {
            let spec = SystemSpec::new(1, 1.0, gr).unwrap();
            let gt = 0.37;
            let direct = exact_choi(&spec, gt, &IntegratorConfig::default()).unwrap();
            let phi: Superoperator =
                single_pair_channel(gr, gt, &IntegratorConfig::default()).unwrap();
            let via_channel =
                choi_of_map(1, MapTag::Exact, |e| Ok(phi.apply(e))).unwrap();
            let diff = direct.matrix().max_abs_diff(via_channel.matrix());
            assert!(diff < 1e-9, "constructions disagree by {diff} at gamma/g = {gr}");
        }
    }

    #[test]
    fn choi_error_small_monotone_in_dissipation_and_time() {
        let mut errs = Vec::new();
        for gr in [0.0, 1.0, 10.0] {
            let spec = SystemSpec::new(2, 1.0, gr).unwrap();
            let err = choi_error(&spec, 0.01).unwrap();
            assert!(err < 1e-5, "error {err} at gamma/g = {gr}");
            errs.push(err);
        }
        assert!(errs[0] < errs[1] && errs[1] < errs[2], "errors not monotone: {errs:?}");

        let spec = SystemSpec::new(2, 1.0, 1.0).unwrap();
        let small = choi_error(&spec, 0.003).unwrap();
        let large = choi_error(&spec, 0.03).unwrap();
        assert!(small < large);
    }

    #[test]
    fn choi_error_curve_matches_pointwise_errors() {
        let spec = SystemSpec::new(1, 1.0, 0.5).unwrap();
        let times = [0.005, 0.01, 0.02];
        let curve = choi_error_curve(&spec, &times, &ChoiOptions::default()).unwrap();
        for (t, got) in times.iter().zip(&curve) {
            let want = choi_error(&spec, *t).unwrap();
            assert!((got - want).abs() < 1e-9, "curve {got} vs pointwise {want} at {t}");
        }
    }

    #[test]
    fn column_count_gate_and_long_running_override() {
        let spec = SystemSpec::new(3, 1.0, 0.0).unwrap();
        assert!(matches!(choi_error(&spec, 0.01), Err(Error::Capacity(_))));
        let opts = ChoiOptions { long_running: true, ..Default::default() };
        let err = choi_error_opts(&spec, 0.01, &opts).unwrap();
        assert!(err.is_finite() && err >= 0.0);
    }

    #[test]
    fn excitation_error_examples() {
        for gr in [0.0, 1.0, 10.0] {
            let spec = SystemSpec::new(2, 1.0, gr).unwrap();
            let err = excitation_error(&spec, &fully_excited(2), 0.01).unwrap();
            assert!(err < 1e-5, "Error_ex = {err} at gamma/g = {gr}");
        }
        let spec2 = SystemSpec::new(2, 1.0, 0.0).unwrap();
        assert_eq!(excitation_error(&spec2, &fully_excited(2), 0.0).unwrap(), 0.0);
        let spec6 = SystemSpec::new(6, 1.0, 0.0).unwrap();
        let e2 = excitation_error(&spec2, &fully_excited(2), 0.01).unwrap();
        let e6 = excitation_error(&spec6, &fully_excited(6), 0.01).unwrap();
        assert!(e6 > e2, "more atoms should hurt the quadratic map: {e6} vs {e2}");
    }
}
