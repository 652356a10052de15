//! Radiation observables: emitted photon numbers, the degree of
//! superradiance S = N_P / N_P^ind, and emission-rate maxima.
//!
//! S compares the common-cavity photon number against N atoms each feeding
//! an identical private cavity from the same single-atom marginal. In the
//! early-time regime both sides have closed forms; in the near-Markovian
//! regime S is a ratio of photon-number plateaus; in the strongly
//! non-Markovian regime it is a ratio of peak emission rates.

use crate::dynamics::{
    evolve_generator, sector_ensemble, CommonEngine, IntegratorConfig, Regime, Trajectory,
};
use crate::linalg::{tensor_product, ComplexMatrix, DensityMatrix, C64, ONE, ZERO};
use crate::memory::{plateau_extract, PlateauReport};
use crate::model::{
    build_initial, collective_lowering, ladder_density, InitialState, Liouvillian, SystemSpec,
};
use crate::symmetry::single_atom_matrix;
use crate::{Error, Result};

/// Ladder weight f(X) = (J+X)(J-X+1), the squared collective lowering
/// matrix element out of |J, X>.
pub fn f_value(j: f64, x: f64) -> f64 {
    (j + x) * (j - x + 1.0)
}

/// Early-time common-cavity photon number per (gt)^2: the expectation of
/// S+S- in the initial state.
pub fn np_early(init: &InitialState) -> Result<f64> {
    init.validate()?;
    Ok(match init {
        InitialState::Dicke { j, m } => f_value(j.value(), m.value()),
        InitialState::DephasedDicke { j, m, lambda } => {
            (j.value() + m.value()) * ((j.value() - m.value()) * lambda + 1.0)
        }
        InitialState::DickeMixture { j, populations } => {
            let jv = j.value();
            populations
                .iter()
                .enumerate()
                .map(|(idx, p)| p * f_value(jv, -jv + idx as f64))
                .sum()
        }
        InitialState::FactorizedIdentical { n_atoms, rho_ee, rho_eg } => {
            let nf = *n_atoms as f64;
            nf * (nf - 1.0) * rho_eg.norm_sqr() + nf * rho_ee
        }
        InitialState::Raw { state } => {
            let s = collective_lowering(init.n_atoms())?;
            state.matrix().trace_product(&s.dagger().mul(&s)).re
        }
    })
}

/// Early-time photon number per (gt)^2 for independent cavities: the total
/// initial excitation.
pub fn np_early_independent(init: &InitialState) -> Result<f64> {
    init.validate()?;
    Ok(match init {
        InitialState::Dicke { j, m } | InitialState::DephasedDicke { j, m, .. } => {
            j.value() + m.value()
        }
        InitialState::DickeMixture { populations, .. } => {
            populations.iter().enumerate().map(|(idx, p)| p * idx as f64).sum()
        }
        InitialState::FactorizedIdentical { n_atoms, rho_ee, .. } => *n_atoms as f64 * rho_ee,
        InitialState::Raw { state } => {
            let n = init.n_atoms();
            let diag: Vec<f64> = (0..state.dim())
                .map(|b| (n as u32 - (b as u32).count_ones()) as f64)
                .collect();
            state.matrix().weighted_diag(&diag).re
        }
    })
}

/// Early-time degree of superradiance; None for states holding no
/// excitation, where the ratio is undefined.
pub fn degree_early(init: &InitialState) -> Result<Option<f64>> {
    let den = np_early_independent(init)?;
    if den <= 1e-300 {
        return Ok(None);
    }
    Ok(Some(np_early(init)? / den))
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Slope at t0 of the least-squares quadratic through (ts, ys); exact when
/// the data is quadratic.
fn quad_slope(ts: &[f64], ys: &[f64], t0: f64) -> f64 {
    let mut s = [0.0f64; 5];
    let mut r = [0.0f64; 3];
    for (&t, &y) in ts.iter().zip(ys) {
        let x = t - t0;
        let x2 = x * x;
        s[0] += 1.0;
        s[1] += x;
        s[2] += x2;
        s[3] += x2 * x;
        s[4] += x2 * x2;
        r[0] += y;
        r[1] += y * x;
        r[2] += y * x2;
    }
    let det = det3([[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]]);
    if det.abs() < 1e-300 {
        let dt = ts[ts.len() - 1] - ts[0];
        return if dt.abs() > 0.0 { (ys[ys.len() - 1] - ys[0]) / dt } else { 0.0 };
    }
    det3([[s[0], r[0], s[2]], [s[1], r[1], s[3]], [s[2], r[2], s[4]]]) / det
}

/// Emission rate R(t) = -dN_ex/dt in units of g, estimated per sample from
/// a centered five-point quadratic fit (shorter stencils at the ends).
pub fn emission_rate_series(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len().min(values.len());
    if n < 3 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            -quad_slope(&times[lo..=hi], &values[lo..=hi], times[i])
        })
        .collect()
}

/// Parabolic refinement of the discrete maximum at index i; keeps the
/// sample when the three-point fit is not an interior peak.
pub fn refine_max(times: &[f64], values: &[f64], i: usize) -> (f64, f64) {
    let n = times.len();
    if i == 0 || i + 1 >= n {
        return (times[i], values[i]);
    }
    let (t0, t1, t2) = (times[i - 1], times[i], times[i + 1]);
    let (f0, f1, f2) = (values[i - 1], values[i], values[i + 1]);
    let d0 = (f1 - f0) / (t1 - t0);
    let d1 = (f2 - f1) / (t2 - t1);
    let c = (d1 - d0) / (t2 - t0);
    if !(c < 0.0) {
        return (t1, f1);
    }
    let t_star = 0.5 * (t0 + t1) - d0 / (2.0 * c);
    if t_star < t0 || t_star > t2 {
        return (t1, f1);
    }
    (t_star, f0 + d0 * (t_star - t0) + c * (t_star - t0) * (t_star - t1))
}

fn series_max(times: &[f64], values: &[f64]) -> (f64, f64, bool) {
    let mut i = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[i] {
            i = k;
        }
    }
    let boundary = i == 0 || i + 1 == values.len();
    let (t, v) = refine_max(times, values, i);
    (t, v, boundary)
}

fn two_by_two(p_e: f64, coh: C64) -> ComplexMatrix {
    ComplexMatrix::from_rows(&[
        &[C64::new(p_e, 0.0), coh],
        &[coh.conj(), C64::new(1.0 - p_e, 0.0)],
    ])
}

/// Single-atom marginals with multiplicities. Permutation-symmetric
/// families produce one entry; raw states get a marginal per atom, merged
/// when identical.
fn atom_marginals(init: &InitialState) -> Result<Vec<(ComplexMatrix, usize)>> {
    init.validate()?;
    let n = init.n_atoms();
    Ok(match init {
        InitialState::Dicke { j, m } | InitialState::DephasedDicke { j, m, .. } => {
            vec![(two_by_two((j.value() + m.value()) / (2.0 * j.value()), ZERO), n)]
        }
        InitialState::DickeMixture { j, populations } => {
            let jv = j.value();
            let p_e = populations
                .iter()
                .enumerate()
                .map(|(idx, p)| p * idx as f64 / (2.0 * jv))
                .sum();
            vec![(two_by_two(p_e, ZERO), n)]
        }
        InitialState::FactorizedIdentical { n_atoms, rho_ee, rho_eg } => {
            vec![(two_by_two(*rho_ee, *rho_eg), *n_atoms)]
        }
        InitialState::Raw { state } => {
            let mut out: Vec<(ComplexMatrix, usize)> = Vec::new();
            for k in 0..n {
                let m = state.partial_trace(&[k])?.into_matrix();
                match out.iter_mut().find(|(seen, _)| seen.max_abs_diff(&m) < 1e-12) {
                    Some(entry) => entry.1 += 1,
                    None => out.push((m, 1)),
                }
            }
            out
        }
    })
}

fn pair_trajectory(
    gamma_over_g: f64,
    marginal: &ComplexMatrix,
    duration: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let vac = {
        let mut v = ComplexMatrix::zeros(2, 2);
        v.set(0, 0, ONE);
        v
    };
    let joint = DensityMatrix::new_unchecked(tensor_product(marginal, &vac)?, vec![2, 2]);
    let gen = Liouvillian::single_pair(gamma_over_g);
    evolve_generator(&gen, &joint, duration, cfg, gamma_over_g, &[0])
}

fn common_trajectory(
    spec: &SystemSpec,
    init: &InitialState,
    duration: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let gr = spec.gamma_over_g();
    if let InitialState::FactorizedIdentical { n_atoms, rho_ee, rho_eg } = init {
        if ladder_density(init).is_err() {
            // mixed product state: sum spin-sector runs on a shared grid
            let ens = sector_ensemble(*n_atoms, &single_atom_matrix(*rho_ee, *rho_eg), gr)?;
            return ens.observables(duration, 2000, cfg);
        }
    }
    match CommonEngine::sector_from_init(spec, init) {
        Ok((engine, atoms0)) => engine.evolve(&atoms0, duration, cfg, gr),
        Err(_) => {
            let rho = build_initial(spec, init)?;
            let (engine, atoms0) = CommonEngine::select(spec, &rho)?;
            engine.evolve(&atoms0, duration, cfg, gr)
        }
    }
}

/// Sums pair observables over the marginals, all runs sharing one probe
/// grid so the series add pointwise.
fn independent_observables(
    gamma_over_g: f64,
    marginals: &[(ComplexMatrix, usize)],
    duration: f64,
    samples: usize,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let times: Vec<f64> = (1..=samples)
        .map(|i| duration * i as f64 / samples as f64)
        .collect();
    let mut n_ex = vec![0.0; samples + 1];
    let mut n_p = vec![0.0; samples + 1];
    let mut grid = vec![0.0];
    grid.extend_from_slice(&times);
    for (marginal, count) in marginals {
        let run_cfg = cfg.clone().with_probes(&times);
        let traj = pair_trajectory(gamma_over_g, marginal, duration, &run_cfg)?;
        let w = *count as f64;
        n_ex[0] += w * marginal.get(0, 0).re;
        // probe times are forced accepted steps, so sampling the recorded
        // series at grid times is exact
        for (k, t) in times.iter().enumerate() {
            let (e, p) = sample_observables(&traj, *t);
            n_ex[k + 1] += w * e;
            n_p[k + 1] += w * p;
        }
    }
    Ok(Trajectory {
        times: grid,
        n_ex,
        n_p,
        probes: vec![],
        regime: Regime::classify(gamma_over_g, duration),
        gamma_over_g,
    })
}

fn sample_observables(traj: &Trajectory, t: f64) -> (f64, f64) {
    traj.sample(t)
}

/// Default plateau window for near-Markovian runs, in units of gt: the
/// early stage spans [50, 200] photon lifetimes.
pub fn default_plateau_window(gamma_over_g: f64) -> (f64, f64) {
    (50.0 / gamma_over_g, 200.0 / gamma_over_g)
}

/// Near-Markovian degree of superradiance from photon-number plateaus.
#[derive(Debug, Clone)]
pub struct NearMarkovReport {
    pub s: f64,
    pub n_p_steady: f64,
    pub common: PlateauReport,
    pub independent: PlateauReport,
}

pub fn degree_near_markovian(
    spec: &SystemSpec,
    init: &InitialState,
    window: (f64, f64),
) -> Result<NearMarkovReport> {
    degree_near_markovian_opts(spec, init, window, &IntegratorConfig::default())
}

pub fn degree_near_markovian_opts(
    spec: &SystemSpec,
    init: &InitialState,
    window: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<NearMarkovReport> {
    let gr = spec.gamma_over_g();
    if gr <= 0.0 {
        return Err(Error::Usage("plateaus need a dissipative run".into()));
    }
    let duration = window.1 * 1.02;
    let common_traj = common_trajectory(spec, init, duration, cfg)?;
    let common = plateau_extract(&common_traj, window)?;
    let marginals = atom_marginals(init)?;
    let samples = 800;
    let ind_traj = independent_observables(gr, &marginals, duration, samples, cfg)?;
    let independent = plateau_extract(&ind_traj, window)?;
    if independent.n_p_steady <= 1e-300 {
        return Err(Error::Usage(
            "degree of superradiance is undefined without excitation".into(),
        ));
    }
    Ok(NearMarkovReport {
        s: common.n_p_steady / independent.n_p_steady,
        n_p_steady: common.n_p_steady,
        common,
        independent,
    })
}

/// First-pulse observables in the strongly non-Markovian regime.
#[derive(Debug, Clone)]
pub struct StrongReport {
    /// R_max / R_max_ind; None when the independent side never radiates.
    pub s: Option<f64>,
    pub r_max: f64,
    pub t_r_max: f64,
    pub r_max_ind: f64,
    pub n_p_max: f64,
    pub t_n_p_max: f64,
    /// Set when a maximum sits at the horizon edge; extend the horizon.
    pub boundary: bool,
    /// Set when the atomic excitation rises again after a fall.
    pub backflow: bool,
}

pub fn degree_strong(spec: &SystemSpec, init: &InitialState, horizon: f64) -> Result<StrongReport> {
    degree_strong_opts(spec, init, horizon, &IntegratorConfig::default())
}

pub fn degree_strong_opts(
    spec: &SystemSpec,
    init: &InitialState,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<StrongReport> {
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
    }
    let gr = spec.gamma_over_g();
    let common = common_trajectory(spec, init, horizon, cfg)?;
    let rates = emission_rate_series(&common.times, &common.n_ex);
    let (t_r_max, r_max, b1) = series_max(&common.times, &rates);
    let (t_n_p_max, n_p_max, b2) = series_max(&common.times, &common.n_p);

    let marginals = atom_marginals(init)?;
    let ind = independent_observables(gr, &marginals, horizon, 2000, cfg)?;
    let ind_rates = emission_rate_series(&ind.times, &ind.n_ex);
    let (_, r_max_ind, b3) = series_max(&ind.times, &ind_rates);

    // backflow: the excitation climbs back above its running minimum
    let mut floor = f64::INFINITY;
    let mut backflow = false;
    let rise = 1e-6 * common.n_ex.first().copied().unwrap_or(1.0).max(1.0);
    for &e in &common.n_ex {
        if e > floor + rise {
            backflow = true;
            break;
        }
        floor = floor.min(e);
    }
    Ok(StrongReport {
        s: (r_max_ind > 1e-300).then(|| r_max / r_max_ind),
        r_max,
        t_r_max,
        r_max_ind,
        n_p_max,
        t_n_p_max,
        boundary: b1 || b2 || b3,
        backflow,
    })
}

/// Radiation summary for one state and regime. `f_values` lists the ladder
/// weights f(M) behind the closed forms when the state is Dicke-diagonal.
#[derive(Debug, Clone)]
pub struct RadiationReport {
    pub n_p: f64,
    pub n_p_ind: f64,
    pub s: Option<f64>,
    /// Peak emission rate in units of g over the reporting window.
    pub r_max: f64,
    pub regime: Regime,
    pub f_values: Vec<f64>,
}

fn ladder_f_values(init: &InitialState) -> Vec<f64> {
    match init {
        InitialState::Dicke { j, m } | InitialState::DephasedDicke { j, m, .. } => {
            vec![f_value(j.value(), m.value())]
        }
        InitialState::DickeMixture { j, populations } => {
            let jv = j.value();
            (0..populations.len()).map(|idx| f_value(jv, -jv + idx as f64)).collect()
        }
        _ => vec![],
    }
}

/// Early-time radiation summary; photon numbers are per (gt)^2 and the
/// peak rate is evaluated at the window edge where it is largest.
pub fn radiation_early(init: &InitialState, window: f64) -> Result<RadiationReport> {
    let n_p = np_early(init)?;
    Ok(RadiationReport {
        n_p,
        n_p_ind: np_early_independent(init)?,
        s: degree_early(init)?,
        r_max: 2.0 * window * n_p,
        regime: Regime::EarlyTime,
        f_values: ladder_f_values(init),
    })
}

pub fn radiation_near_markovian(
    spec: &SystemSpec,
    init: &InitialState,
    window: (f64, f64),
) -> Result<RadiationReport> {
    let report = degree_near_markovian(spec, init, window)?;
    Ok(RadiationReport {
        n_p: report.common.n_p_steady,
        n_p_ind: report.independent.n_p_steady,
        s: Some(report.s),
        r_max: report.common.r_steady * spec.gamma_over_g(),
        regime: Regime::NearMarkovian,
        f_values: ladder_f_values(init),
    })
}

pub fn radiation_strong(
    spec: &SystemSpec,
    init: &InitialState,
    horizon: f64,
) -> Result<RadiationReport> {
    let report = degree_strong(spec, init, horizon)?;
    Ok(RadiationReport {
        n_p: report.n_p_max,
        n_p_ind: f64::NAN,
        s: report.s,
        r_max: report.r_max,
        regime: Regime::StronglyNonMarkovian,
        f_values: ladder_f_values(init),
    })
}
