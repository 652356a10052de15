//! Initial-state-conditioned memory effects.
//!
//! The protocol behind every surface here: evolution A runs the joint
//! atom-cavity system uninterrupted for tau10 + tau21; evolution C branches
//! at t1 = tau10 by re-tensoring the reduced atomic state with a vacuum
//! cavity and running the remaining tau21. The trace distance of the two
//! reduced states at t2, maximized over tau10 + tau21 <= window, is the
//! memory measure N_M. One A run supplies both the comparison states and
//! every C-restart snapshot on the grid.
//!
//! The independent-cavity counterpart replaces joint integration with
//! tensor powers of the single-pair channel: a reset at t1 is then exactly
//! the composition of two channel applications.

use crate::dynamics::{
    apply_channel_power, dissipator, sector_ensemble, single_pair_channel_family, CommonEngine,
    IntegratorConfig, Regime, SectorEnsemble, Trajectory,
};
use crate::linalg::{trace_distance_raw, trace_norm, ComplexMatrix, DensityMatrix, C64};
use crate::model::{
    atomic_lowering, build_initial, collective_lowering, dicke_isometry, ladder_density,
    ladder_lowering, sigma_minus, InitialState, SystemSpec,
};
use crate::symmetry::{factorized_blocks, factorized_blocks_paired, single_atom_matrix};
use crate::{tol, Error, Result};

fn f_weight(j: f64, x: f64) -> f64 {
    (j + x) * (j - x + 1.0)
}

fn atoms_only(init: &InitialState) -> Result<DensityMatrix> {
    let spec = SystemSpec::new(init.n_atoms(), 1.0, 0.0)?;
    build_initial(&spec, init)
}

/// Trace norm of the collective dissipator applied to the initial state,
/// computed in the ladder basis when the state lives there.
fn collective_norm(init: &InitialState) -> Result<f64> {
    if let Ok(ladder) = ladder_density(init) {
        let low = ladder_lowering(init.n_atoms());
        return Ok(trace_norm(&dissipator(&low, &ladder)));
    }
    if let InitialState::FactorizedIdentical { n_atoms, rho_ee, rho_eg } = init {
        // mixed product state: spin-sector dissipator norms add with
        // multiplicities, no 2^N matrix required
        let blocks = factorized_blocks(*n_atoms, &single_atom_matrix(*rho_ee, *rho_eg))?;
        return Ok(blocks
            .map(|j2, op| dissipator(&ladder_lowering(j2 as usize), op))
            .trace_norm());
    }
    let rho = atoms_only(init)?;
    let low = collective_lowering(init.n_atoms())?;
    Ok(trace_norm(&dissipator(&low, rho.matrix())))
}

/// Early-time memory measure per (gt)^2 for a common cavity.
///
/// Dicke and dephased-Dicke states have closed forms; Dicke mixtures reduce
/// to a ladder-diagonal sum; the rest evaluate the trace norm of the
/// collective dissipator directly.
pub fn nm_early_closed(init: &InitialState) -> Result<f64> {
    init.validate()?;
    Ok(match init {
        InitialState::Dicke { j, m } => 0.5 * f_weight(j.value(), m.value()),
        InitialState::DephasedDicke { j, m, lambda } => {
            0.5 * (j.value() + m.value()) * ((j.value() - m.value()) * lambda + 1.0)
        }
        InitialState::DickeMixture { j, populations } => {
            let jv = j.value();
            // ladder-diagonal image: entry at M gains p_{M+1} f(M+1) from
            // above, loses p_M f(M); the top entry only loses
            let count = populations.len();
            let mut total = 0.0;
            for idx in 0..count - 1 {
                let m = -jv + idx as f64;
                total +=
                    (populations[idx + 1] * f_weight(jv, m + 1.0) - populations[idx] * f_weight(jv, m)).abs();
            }
            total += populations[count - 1] * f_weight(jv, jv);
            0.25 * total
        }
        _ => 0.25 * collective_norm(init)?,
    })
}

/// Early-time memory measure per (gt)^2 when every atom radiates into its
/// own cavity. Dicke and dephased-Dicke states give (J+M)/2 independent of
/// the dephasing; others evaluate the summed single-atom dissipators.
pub fn nm_early_independent(init: &InitialState) -> Result<f64> {
    init.validate()?;
    Ok(match init {
        InitialState::Dicke { j, m } | InitialState::DephasedDicke { j, m, .. } => {
            0.5 * (j.value() + m.value())
        }
        InitialState::FactorizedIdentical { n_atoms, rho_ee, rho_eg } => {
            // the summed one-site dissipator image of a product state has
            // the same sector structure as the state itself
            let rho1 = single_atom_matrix(*rho_ee, *rho_eg);
            let x1 = dissipator(&sigma_minus(), &rho1);
            let (_, sum) = factorized_blocks_paired(*n_atoms, &rho1, Some(&x1))?;
            0.25 * sum.expect("paired recursion returns the sum").trace_norm()
        }
        _ => {
            let rho = atoms_only(init)?;
            let n = init.n_atoms();
            let dim = 1usize << n;
            let mut acc = ComplexMatrix::zeros(dim, dim);
            for k in 0..n {
                acc = acc.add(&dissipator(&atomic_lowering(n, k)?, rho.matrix()));
            }
            0.25 * trace_norm(&acc)
        }
    })
}

/// Common-cavity engine plus the bookkeeping the grid needs.
struct Protocol {
    engine: CommonEngine,
    gamma_over_g: f64,
    exdiag: Vec<f64>,
    integrator: IntegratorConfig,
}

impl Protocol {
    fn from_state(
        spec: &SystemSpec,
        rho_atoms: &DensityMatrix,
        integrator: IntegratorConfig,
    ) -> Result<(Self, ComplexMatrix)> {
        let (engine, atoms0) = CommonEngine::select(spec, rho_atoms)?;
        Ok((
            Self {
                exdiag: engine.atom_excitation_diag(),
                engine,
                gamma_over_g: spec.gamma_over_g(),
                integrator,
            },
            atoms0,
        ))
    }

    fn from_init(
        spec: &SystemSpec,
        init: &InitialState,
        integrator: IntegratorConfig,
    ) -> Result<(Self, ComplexMatrix)> {
        match CommonEngine::sector_from_init(spec, init) {
            Ok((engine, atoms0)) => Ok((
                Self {
                    exdiag: engine.atom_excitation_diag(),
                    engine,
                    gamma_over_g: spec.gamma_over_g(),
                    integrator,
                },
                atoms0,
            )),
            Err(_) => Self::from_state(spec, &build_initial(spec, init)?, integrator),
        }
    }

    fn run(&self, atoms0: &ComplexMatrix, duration: f64, probes: &[f64]) -> Result<Trajectory> {
        let cfg = self.integrator.clone().with_probes(probes);
        self.engine.evolve(atoms0, duration, &cfg, self.gamma_over_g)
    }

    fn n_ex(&self, atoms: &ComplexMatrix) -> f64 {
        atoms.weighted_diag(&self.exdiag).re
    }

    /// One fresh reset comparison: (trace distance, |excitation difference|).
    fn triplet(&self, atoms0: &ComplexMatrix, tau10: f64, tau21: f64) -> Result<(f64, f64)> {
        if tau10 <= 0.0 || tau21 <= 0.0 {
            return Ok((0.0, 0.0));
        }
        let t2 = tau10 + tau21;
        let a = self.run(atoms0, t2, &[tau10, t2])?;
        let c = self.run(a.probes[0].atoms.matrix(), tau21, &[tau21])?;
        let ca = c.probes[0].atoms.matrix();
        let aa = a.probes[1].atoms.matrix();
        Ok((
            trace_distance_raw(ca, aa),
            (self.n_ex(ca) - self.n_ex(aa)).abs(),
        ))
    }

    fn to_computational(&self, engine_atoms: &ComplexMatrix) -> Result<DensityMatrix> {
        match &self.engine {
            CommonEngine::Full { n, .. } => {
                Ok(DensityMatrix::new_unchecked(engine_atoms.clone(), vec![2; *n]))
            }
            CommonEngine::Sector { n, .. } => {
                let v = dicke_isometry(*n)?;
                Ok(DensityMatrix::new_unchecked(
                    v.mul(engine_atoms).mul(&v.dagger()),
                    vec![2; *n],
                ))
            }
        }
    }
}

/// Reset comparisons for mixed factorized states: every spin sector runs
/// the protocol on its own ladder; distances add with multiplicities and
/// excitation differences add signed before the absolute value.
struct BlockProtocol {
    ensemble: SectorEnsemble,
    integrator: IntegratorConfig,
}

impl BlockProtocol {
    fn new(
        n_atoms: usize,
        rho_ee: f64,
        rho_eg: C64,
        gamma_over_g: f64,
        integrator: IntegratorConfig,
    ) -> Result<Self> {
        let rho1 = single_atom_matrix(rho_ee, rho_eg);
        Ok(Self { ensemble: sector_ensemble(n_atoms, &rho1, gamma_over_g)?, integrator })
    }

    fn run(
        &self,
        sector_idx: usize,
        atoms0: &ComplexMatrix,
        duration: f64,
        probes: &[f64],
    ) -> Result<Trajectory> {
        let s = &self.ensemble.sectors[sector_idx];
        let cfg = self.integrator.clone().with_probes(probes);
        s.engine.evolve(atoms0, duration, &cfg, self.ensemble.gamma_over_g)
    }

    fn triplet(&self, tau10: f64, tau21: f64) -> Result<(f64, f64)> {
        if tau10 <= 0.0 || tau21 <= 0.0 {
            return Ok((0.0, 0.0));
        }
        let t2 = tau10 + tau21;
        let mut d = 0.0;
        let mut dn = 0.0;
        for (si, s) in self.ensemble.sectors.iter().enumerate() {
            let exdiag = s.engine.atom_excitation_diag();
            let a = self.run(si, &s.atoms0, t2, &[tau10, t2])?;
            let c = self.run(si, a.probes[0].atoms.matrix(), tau21, &[tau21])?;
            let ca = c.probes[0].atoms.matrix();
            let aa = a.probes[1].atoms.matrix();
            d += s.weight * trace_distance_raw(ca, aa);
            dn += s.weight * (ca.weighted_diag(&exdiag).re - aa.weighted_diag(&exdiag).re);
        }
        Ok((d, dn.abs()))
    }
}

fn block_grid(
    bp: &BlockProtocol,
    window: f64,
    opts: &MemoryOptions,
) -> Result<(MemoryGrid, Trajectory)> {
    let k = opts.grid_points;
    if k < 2 {
        return Err(Error::Config("memory grid needs at least 2 points per axis".into()));
    }
    if !(window > 0.0) {
        return Err(Error::Config(format!("memory window must be positive, got {window}")));
    }
    let taus = grid_times(window, k);
    let delta = taus[1];
    let a_dur = opts.a_duration.unwrap_or(window).max(window);

    let mut d = vec![vec![f64::NAN; k]; k];
    let mut dn_signed = vec![vec![f64::NAN; k]; k];
    for i in 0..k {
        for j in 0..k - i {
            d[i][j] = 0.0;
            dn_signed[i][j] = 0.0;
        }
    }
    for (si, s) in bp.ensemble.sectors.iter().enumerate() {
        let exdiag = s.engine.atom_excitation_diag();
        let n_ex = |m: &ComplexMatrix| m.weighted_diag(&exdiag).re;
        let a_traj = bp.run(si, &s.atoms0, a_dur, &taus)?;
        let a_states: Vec<&ComplexMatrix> =
            a_traj.probes.iter().map(|p| p.atoms.matrix()).collect();
        let nex_a: Vec<f64> = a_states.iter().map(|m| n_ex(m)).collect();
        for i in 1..k - 1 {
            let jmax = k - 1 - i;
            let c_traj = bp.run(si, a_states[i], taus[jmax], &taus[1..=jmax])?;
            for j in 1..=jmax {
                let cm = c_traj.probes[j - 1].atoms.matrix();
                d[i][j] += s.weight * trace_distance_raw(cm, a_states[i + j]);
                dn_signed[i][j] += s.weight * (n_ex(cm) - nex_a[i + j]);
            }
        }
    }
    let mut dnex = dn_signed;
    for row in &mut dnex {
        for v in row.iter_mut() {
            *v = v.abs();
        }
    }
    for i in 0..k {
        d[i][0] = 0.0;
        dnex[i][0] = 0.0;
        d[0][i] = 0.0;
        dnex[0][i] = 0.0;
    }

    let diagonal_search = bp.ensemble.gamma_over_g >= 100.0;
    let scan = scan_surfaces(k, diagonal_search, d, dnex);
    let (bi, bj, grid_max) = scan.best;
    let mut max_d = grid_max;
    let mut argmax = (taus[bi], taus[bj]);
    if opts.refine && grid_max > 0.0 {
        let mut f = |x: f64, y: f64| bp.triplet(x, y).map(|t| t.0);
        let (arg, v) = refine_peak(&mut f, argmax, grid_max, delta, window, diagonal_search)?;
        if v > max_d {
            max_d = v;
            argmax = arg;
        }
    }
    let samples = (4 * k).max(800);
    let a_traj = bp.ensemble.observables(a_dur, samples, &bp.integrator)?;
    let grid = MemoryGrid {
        tau10s: taus.clone(),
        tau21s: taus.clone(),
        d: scan.d,
        dnex: scan.dnex,
        max_d: max_d.min(1.0),
        argmax,
        max_dnex: scan.best_dnex.2,
        argmax_dnex: (taus[scan.best_dnex.0], taus[scan.best_dnex.1]),
        window,
    };
    Ok((grid, a_traj))
}

/// Reduced states of one reset comparison: the uninterrupted state at t2
/// and the state that was restarted from a fresh vacuum at t1 = tau10.
pub fn evolution_triplet(
    spec: &SystemSpec,
    rho0: &DensityMatrix,
    tau10: f64,
    tau21: f64,
) -> Result<(DensityMatrix, DensityMatrix)> {
    if tau10 < 0.0 || tau21 < 0.0 {
        return Err(Error::Config("tau10 and tau21 must be non-negative".into()));
    }
    let (proto, atoms0) = Protocol::from_state(spec, rho0, IntegratorConfig::default())?;
    let t2 = tau10 + tau21;
    if tau10 == 0.0 || tau21 == 0.0 {
        // a reset at the endpoints erases no history
        if t2 == 0.0 {
            let out = proto.to_computational(&atoms0)?;
            return Ok((out.clone(), out));
        }
        let a = proto.run(&atoms0, t2, &[t2])?;
        let out = proto.to_computational(a.probes[0].atoms.matrix())?;
        return Ok((out.clone(), out));
    }
    let a = proto.run(&atoms0, t2, &[tau10, t2])?;
    let c = proto.run(a.probes[0].atoms.matrix(), tau21, &[tau21])?;
    Ok((
        proto.to_computational(a.probes[1].atoms.matrix())?,
        proto.to_computational(c.probes[0].atoms.matrix())?,
    ))
}

/// Reset-comparison surfaces over the triangular domain
/// tau10 + tau21 <= window. Entries outside the domain are NaN.
#[derive(Debug, Clone)]
pub struct MemoryGrid {
    pub tau10s: Vec<f64>,
    pub tau21s: Vec<f64>,
    /// Trace distance D(tau10, tau21).
    pub d: Vec<Vec<f64>>,
    /// |excitation difference| at the same grid points.
    pub dnex: Vec<Vec<f64>>,
    /// Largest D after refinement.
    pub max_d: f64,
    pub argmax: (f64, f64),
    pub max_dnex: f64,
    pub argmax_dnex: (f64, f64),
    pub window: f64,
}

#[derive(Debug, Clone)]
pub struct MemoryOptions {
    pub grid_points: usize,
    /// Extend the A run beyond the grid window (plateau extraction reads
    /// observables past the last grid point).
    pub a_duration: Option<f64>,
    pub refine: bool,
    pub integrator: IntegratorConfig,
}

impl Default for MemoryOptions {
    fn default() -> Self {
        Self {
            grid_points: 41,
            a_duration: None,
            refine: true,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Window and grid defaults per regime: the near-Markovian early stage
/// spans 100 photon lifetimes, the strongly non-Markovian window covers the
/// first few emission pulses.
pub fn default_window(gamma_over_g: f64) -> f64 {
    if gamma_over_g >= 100.0 {
        100.0 / gamma_over_g
    } else {
        12.0
    }
}

fn grid_times(window: f64, k: usize) -> Vec<f64> {
    let delta = window / (k - 1) as f64;
    (0..k)
        .map(|i| if i == k - 1 { window } else { i as f64 * delta })
        .collect()
}

fn golden_max(f: &mut dyn FnMut(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<(f64, f64)> {
    const INV: f64 = 0.618_033_988_749_894_9;
    if !(hi > lo) {
        return Ok((lo, f(lo)?));
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV * (b - a);
    let mut d = a + INV * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..12 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

/// Local maximization around a grid cell: optional scan along the
/// tau10 = tau21 diagonal first, then golden sections on each axis, all
/// constrained to the triangle.
fn refine_peak(
    f: &mut dyn FnMut(f64, f64) -> Result<f64>,
    start: (f64, f64),
    start_val: f64,
    delta: f64,
    window: f64,
    diagonal_first: bool,
) -> Result<((f64, f64), f64)> {
    let (mut x, mut y) = start;
    let mut best = start_val;
    if diagonal_first && (x - y).abs() < delta / 2.0 {
        let lo = (x - delta).max(0.0);
        let hi = (x + delta).min(window / 2.0);
        let (s, v) = golden_max(&mut |s| f(s, s), lo, hi)?;
        if v > best {
            best = v;
            x = s;
            y = s;
        }
    }
    for _ in 0..2 {
        let before = best;
        let (nx, vx) = golden_max(&mut |t| f(t, y), (x - delta).max(0.0), (x + delta).min(window - y))?;
        if vx > best {
            best = vx;
            x = nx;
        }
        let (ny, vy) = golden_max(&mut |t| f(x, t), (y - delta).max(0.0), (y + delta).min(window - x))?;
        if vy > best {
            best = vy;
            y = ny;
        }
        if best - before <= tol::REFINE_REL * before {
            break;
        }
    }
    Ok(((x, y), best))
}

struct SurfaceScan {
    d: Vec<Vec<f64>>,
    dnex: Vec<Vec<f64>>,
    best: (usize, usize, f64),
    best_dnex: (usize, usize, f64),
}

fn scan_surfaces(k: usize, diagonal_search: bool, d: Vec<Vec<f64>>, dnex: Vec<Vec<f64>>) -> SurfaceScan {
    let mut best = (0usize, 0usize, 0.0f64);
    let mut best_dnex = (0usize, 0usize, 0.0f64);
    for i in 0..k {
        for j in 0..k - i {
            if dnex[i][j] > best_dnex.2 {
                best_dnex = (i, j, dnex[i][j]);
            }
            if diagonal_search && i != j {
                continue;
            }
            if d[i][j] > best.2 {
                best = (i, j, d[i][j]);
            }
        }
    }
    SurfaceScan { d, dnex, best, best_dnex }
}

fn grid_with_protocol(
    proto: &Protocol,
    atoms0: &ComplexMatrix,
    window: f64,
    opts: &MemoryOptions,
) -> Result<(MemoryGrid, Trajectory)> {
    let k = opts.grid_points;
    if k < 2 {
        return Err(Error::Config("memory grid needs at least 2 points per axis".into()));
    }
    if !(window > 0.0) {
        return Err(Error::Config(format!("memory window must be positive, got {window}")));
    }
    let taus = grid_times(window, k);
    let delta = taus[1];
    let a_dur = opts.a_duration.unwrap_or(window).max(window);
    let a_traj = proto.run(atoms0, a_dur, &taus)?;
    let a_states: Vec<&ComplexMatrix> =
        a_traj.probes.iter().map(|p| p.atoms.matrix()).collect();
    let nex_a: Vec<f64> = a_states.iter().map(|m| proto.n_ex(m)).collect();

    let mut d = vec![vec![f64::NAN; k]; k];
    let mut dnex = vec![vec![f64::NAN; k]; k];
    for i in 0..k {
        d[i][0] = 0.0;
        dnex[i][0] = 0.0;
    }
    for j in 0..k {
        d[0][j] = 0.0;
        dnex[0][j] = 0.0;
    }
    for i in 1..k - 1 {
        let jmax = k - 1 - i;
        let c_traj = proto.run(a_states[i], taus[jmax], &taus[1..=jmax])?;
        for j in 1..=jmax {
            let cm = c_traj.probes[j - 1].atoms.matrix();
            d[i][j] = trace_distance_raw(cm, a_states[i + j]);
            dnex[i][j] = (proto.n_ex(cm) - nex_a[i + j]).abs();
        }
    }

    // once the photon lifetime is short the maximum is a single flat top on
    // the diagonal; searching there avoids plateau noise
    let diagonal_search = proto.gamma_over_g >= 100.0;
    let scan = scan_surfaces(k, diagonal_search, d, dnex);
    let (bi, bj, grid_max) = scan.best;
    let mut max_d = grid_max;
    let mut argmax = (taus[bi], taus[bj]);
    if opts.refine && grid_max > 0.0 {
        let mut f = |x: f64, y: f64| proto.triplet(atoms0, x, y).map(|t| t.0);
        let (arg, v) = refine_peak(&mut f, argmax, grid_max, delta, window, diagonal_search)?;
        if v > max_d {
            max_d = v;
            argmax = arg;
        }
    }
    let grid = MemoryGrid {
        tau10s: taus.clone(),
        tau21s: taus,
        d: scan.d,
        dnex: scan.dnex,
        max_d: max_d.min(1.0),
        argmax,
        max_dnex: scan.best_dnex.2,
        argmax_dnex: (
            grid_times(window, k)[scan.best_dnex.0],
            grid_times(window, k)[scan.best_dnex.1],
        ),
        window,
    };
    Ok((grid, a_traj))
}

/// Common-cavity reset-comparison grid per the plain signature; defaults
/// everywhere else.
pub fn memory_grid(
    spec: &SystemSpec,
    rho0: &DensityMatrix,
    t_window: f64,
    grid_points: usize,
) -> Result<MemoryGrid> {
    let opts = MemoryOptions { grid_points, ..Default::default() };
    memory_grid_opts(spec, rho0, t_window, &opts).map(|(g, _)| g)
}

/// As `memory_grid`, with full options; also returns the A trajectory so
/// callers can extract plateau observables from the same run.
pub fn memory_grid_opts(
    spec: &SystemSpec,
    rho0: &DensityMatrix,
    t_window: f64,
    opts: &MemoryOptions,
) -> Result<(MemoryGrid, Trajectory)> {
    let (proto, atoms0) = Protocol::from_state(spec, rho0, opts.integrator.clone())?;
    grid_with_protocol(&proto, &atoms0, t_window, opts)
}

/// Grid entry point that routes ladder-supported named states straight to
/// the sector engine, and mixed factorized states to the spin-sector sum,
/// without materializing the 2^N state.
pub fn memory_grid_init(
    spec: &SystemSpec,
    init: &InitialState,
    t_window: f64,
    opts: &MemoryOptions,
) -> Result<(MemoryGrid, Trajectory)> {
    init.validate()?;
    if let InitialState::FactorizedIdentical { n_atoms, rho_ee, rho_eg } = init {
        if ladder_density(init).is_err() {
            let bp = BlockProtocol::new(
                *n_atoms,
                *rho_ee,
                *rho_eg,
                spec.gamma_over_g(),
                opts.integrator.clone(),
            )?;
            return block_grid(&bp, t_window, opts);
        }
    }
    let (proto, atoms0) = Protocol::from_init(spec, init, opts.integrator.clone())?;
    grid_with_protocol(&proto, &atoms0, t_window, opts)
}

/// Independent-cavity reset grid through tensor powers of the single-pair
/// channel. Same surface conventions as the common grid.
pub fn channel_memory_grid(
    gamma_over_g: f64,
    rho0: &DensityMatrix,
    t_window: f64,
    opts: &MemoryOptions,
) -> Result<MemoryGrid> {
    let k = opts.grid_points;
    if k < 2 {
        return Err(Error::Config("memory grid needs at least 2 points per axis".into()));
    }
    if !(t_window > 0.0) {
        return Err(Error::Config(format!("memory window must be positive, got {t_window}")));
    }
    let dim = rho0.dim();
    if !dim.is_power_of_two() {
        return Err(Error::Usage(format!("atom dimension {dim} is not 2^N")));
    }
    let n = dim.trailing_zeros() as usize;
    let exdiag: Vec<f64> = (0..dim).map(|b| (n as u32 - (b as u32).count_ones()) as f64).collect();
    let n_ex = |m: &ComplexMatrix| m.weighted_diag(&exdiag).re;

    let taus = grid_times(t_window, k);
    let delta = taus[1];
    let phis = single_pair_channel_family(gamma_over_g, &taus[1..], &opts.integrator)?;
    let mut a_states: Vec<DensityMatrix> = Vec::with_capacity(k);
    a_states.push(rho0.clone());
    for phi in &phis {
        a_states.push(apply_channel_power(phi, rho0)?);
    }
    let nex_a: Vec<f64> = a_states.iter().map(|s| n_ex(s.matrix())).collect();

    let mut d = vec![vec![f64::NAN; k]; k];
    let mut dnex = vec![vec![f64::NAN; k]; k];
    for i in 0..k {
        d[i][0] = 0.0;
        dnex[i][0] = 0.0;
    }
    for j in 0..k {
        d[0][j] = 0.0;
        dnex[0][j] = 0.0;
    }
    for i in 1..k - 1 {
        let jmax = k - 1 - i;
        for j in 1..=jmax {
            let c = apply_channel_power(&phis[j - 1], &a_states[i])?;
            d[i][j] = trace_distance_raw(c.matrix(), a_states[i + j].matrix());
            dnex[i][j] = (n_ex(c.matrix()) - nex_a[i + j]).abs();
        }
    }

    let diagonal_search = gamma_over_g >= 100.0;
    let scan = scan_surfaces(k, diagonal_search, d, dnex);
    let (bi, bj, grid_max) = scan.best;
    let mut max_d = grid_max;
    let mut argmax = (taus[bi], taus[bj]);
    if opts.refine && grid_max > 0.0 {
        let mut f = |x: f64, y: f64| -> Result<f64> {
            let mut ts = vec![x, y, x + y];
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
            let fam = single_pair_channel_family(gamma_over_g, &ts, &opts.integrator)?;
            let at = |t: f64| &fam[ts.iter().position(|&u| (u - t).abs() < 1e-15).unwrap()];
            let a2 = apply_channel_power(at(x + y), rho0)?;
            let c1 = apply_channel_power(at(x), rho0)?;
            let c2 = apply_channel_power(at(y), &c1)?;
            Ok(trace_distance_raw(c2.matrix(), a2.matrix()))
        };
        let (arg, v) = refine_peak(&mut f, argmax, grid_max, delta, t_window, diagonal_search)?;
        if v > max_d {
            max_d = v;
            argmax = arg;
        }
    }
    Ok(MemoryGrid {
        tau10s: taus.clone(),
        tau21s: taus.clone(),
        d: scan.d,
        dnex: scan.dnex,
        max_d: max_d.min(1.0),
        argmax,
        max_dnex: scan.best_dnex.2,
        argmax_dnex: (taus[scan.best_dnex.0], taus[scan.best_dnex.1]),
        window: t_window,
    })
}

/// Independent-cavity reset grid for factorized identical states. The
/// channel acts atom by atom, so the state stays a tensor power of one
/// evolving 2x2 state and distances follow from its spin-sector blocks.
pub fn factorized_channel_grid(
    gamma_over_g: f64,
    n_atoms: usize,
    rho_ee: f64,
    rho_eg: C64,
    t_window: f64,
    opts: &MemoryOptions,
) -> Result<MemoryGrid> {
    let k = opts.grid_points;
    if k < 2 {
        return Err(Error::Config("memory grid needs at least 2 points per axis".into()));
    }
    if !(t_window > 0.0) {
        return Err(Error::Config(format!("memory window must be positive, got {t_window}")));
    }
    let rho1 = DensityMatrix::new(single_atom_matrix(rho_ee, rho_eg), vec![2])?;
    let dist = |x: &DensityMatrix, y: &DensityMatrix| -> Result<f64> {
        let bx = factorized_blocks(n_atoms, x.matrix())?;
        let by = factorized_blocks(n_atoms, y.matrix())?;
        Ok(0.5 * bx.sub(&by)?.trace_norm())
    };
    let n_ex = |s: &DensityMatrix| n_atoms as f64 * s.matrix().get(0, 0).re;

    let taus = grid_times(t_window, k);
    let delta = taus[1];
    let phis = single_pair_channel_family(gamma_over_g, &taus[1..], &opts.integrator)?;
    let mut a1: Vec<DensityMatrix> = Vec::with_capacity(k);
    a1.push(rho1.clone());
    for phi in &phis {
        a1.push(apply_channel_power(phi, &rho1)?);
    }
    let nex_a: Vec<f64> = a1.iter().map(&n_ex).collect();

    let mut d = vec![vec![f64::NAN; k]; k];
    let mut dnex = vec![vec![f64::NAN; k]; k];
    for i in 0..k {
        d[i][0] = 0.0;
        dnex[i][0] = 0.0;
        d[0][i] = 0.0;
        dnex[0][i] = 0.0;
    }
    for i in 1..k - 1 {
        let jmax = k - 1 - i;
        for j in 1..=jmax {
            let c1 = apply_channel_power(&phis[j - 1], &a1[i])?;
            d[i][j] = dist(&c1, &a1[i + j])?;
            dnex[i][j] = (n_ex(&c1) - nex_a[i + j]).abs();
        }
    }

    let diagonal_search = gamma_over_g >= 100.0;
    let scan = scan_surfaces(k, diagonal_search, d, dnex);
    let (bi, bj, grid_max) = scan.best;
    let mut max_d = grid_max;
    let mut argmax = (taus[bi], taus[bj]);
    if opts.refine && grid_max > 0.0 {
        let mut f = |x: f64, y: f64| -> Result<f64> {
            let mut ts = vec![x, y, x + y];
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            ts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
            let fam = single_pair_channel_family(gamma_over_g, &ts, &opts.integrator)?;
            let at = |t: f64| &fam[ts.iter().position(|&u| (u - t).abs() < 1e-15).unwrap()];
            let a2 = apply_channel_power(at(x + y), &rho1)?;
            let c1 = apply_channel_power(at(x), &rho1)?;
            let c2 = apply_channel_power(at(y), &c1)?;
            dist(&c2, &a2)
        };
        let (arg, v) = refine_peak(&mut f, argmax, grid_max, delta, t_window, diagonal_search)?;
        if v > max_d {
            max_d = v;
            argmax = arg;
        }
    }
    Ok(MemoryGrid {
        tau10s: taus.clone(),
        tau21s: taus.clone(),
        d: scan.d,
        dnex: scan.dnex,
        max_d: max_d.min(1.0),
        argmax,
        max_dnex: scan.best_dnex.2,
        argmax_dnex: (taus[scan.best_dnex.0], taus[scan.best_dnex.1]),
        window: t_window,
    })
}

/// Headline memory quantities for one initial state: the common-cavity
/// measure, its independent-cavity counterpart, their ratio, and the
/// largest excitation-difference manifestation.
#[derive(Debug, Clone)]
pub struct MemoryReport {
    pub n_m: f64,
    pub n_m_ind: f64,
    /// n_m / n_m_ind, or 0 when the independent measure vanishes.
    pub enhancement: f64,
    pub manifestation_max: f64,
    pub regime: Regime,
    pub window: f64,
    pub argmax: (f64, f64),
    pub argmax_ind: (f64, f64),
}

fn compose_report(
    gamma_over_g: f64,
    window: f64,
    common: &MemoryGrid,
    independent: &MemoryGrid,
) -> MemoryReport {
    let enhancement = if independent.max_d > 1e-12 {
        common.max_d / independent.max_d
    } else {
        0.0
    };
    MemoryReport {
        n_m: common.max_d,
        n_m_ind: independent.max_d,
        enhancement,
        manifestation_max: common.max_dnex,
        regime: Regime::classify(gamma_over_g, window),
        window,
        argmax: common.argmax,
        argmax_ind: independent.argmax,
    }
}

pub fn memory_measure(
    spec: &SystemSpec,
    rho0: &DensityMatrix,
    t_window: f64,
    grid_points: usize,
) -> Result<MemoryReport> {
    let opts = MemoryOptions { grid_points, ..Default::default() };
    memory_measure_opts(spec, rho0, t_window, &opts)
}

pub fn memory_measure_opts(
    spec: &SystemSpec,
    rho0: &DensityMatrix,
    t_window: f64,
    opts: &MemoryOptions,
) -> Result<MemoryReport> {
    let (common, _) = memory_grid_opts(spec, rho0, t_window, opts)?;
    let independent = channel_memory_grid(spec.gamma_over_g(), rho0, t_window, opts)?;
    Ok(compose_report(spec.gamma_over_g(), t_window, &common, &independent))
}

/// Measure entry point for named states; grids and report as
/// `memory_measure`, plus the surfaces and A trajectory for export.
pub fn memory_measure_init(
    spec: &SystemSpec,
    init: &InitialState,
    t_window: f64,
    opts: &MemoryOptions,
) -> Result<(MemoryReport, MemoryGrid, MemoryGrid, Trajectory)> {
    let (common, a_traj) = memory_grid_init(spec, init, t_window, opts)?;
    let independent = match init {
        InitialState::FactorizedIdentical { n_atoms, rho_ee, rho_eg } => {
            factorized_channel_grid(spec.gamma_over_g(), *n_atoms, *rho_ee, *rho_eg, t_window, opts)?
        }
        _ => {
            let rho0 = build_initial(spec, init)?;
            channel_memory_grid(spec.gamma_over_g(), &rho0, t_window, opts)?
        }
    };
    let report = compose_report(spec.gamma_over_g(), t_window, &common, &independent);
    Ok((report, common, independent, a_traj))
}

/// Steady-state observables of a near-Markovian run, averaged over a
/// window inside the plateau.
#[derive(Debug, Clone)]
pub struct PlateauReport {
    pub n_p_steady: f64,
    /// Emission rate per unit gamma t; on a plateau it equals n_p_steady.
    pub r_steady: f64,
    /// Steady excitation-difference manifestation. Not derivable from a
    /// single trajectory; see `steady_manifestation` for the grid version.
    pub dnex_steady: Option<f64>,
    /// Set when the photon number drifts by more than 1% across the window.
    pub drift: bool,
}

pub fn plateau_extract(traj: &Trajectory, window: (f64, f64)) -> Result<PlateauReport> {
    let (lo, hi) = window;
    if !(hi > lo) || lo < 0.0 {
        return Err(Error::Config(format!("bad plateau window [{lo}, {hi}]")));
    }
    if traj.gamma_over_g <= 0.0 {
        return Err(Error::Usage("plateau extraction needs a dissipative run".into()));
    }
    let last = *traj.times.last().unwrap_or(&0.0);
    if hi > last * (1.0 + 1e-9) {
        return Err(Error::Config(format!(
            "plateau window end {hi} exceeds trajectory length {last}"
        )));
    }
    let idx: Vec<usize> = (0..traj.times.len())
        .filter(|&i| traj.times[i] >= lo && traj.times[i] <= hi)
        .collect();
    if idx.len() < 10 {
        return Err(Error::Config("plateau window holds fewer than 10 samples".into()));
    }
    let rates = crate::superradiance::emission_rate_series(&traj.times, &traj.n_ex);
    let mean = |v: &dyn Fn(usize) -> f64| idx.iter().map(|&i| v(i)).sum::<f64>() / idx.len() as f64;
    let n_p_steady = mean(&|i| traj.n_p[i]);
    let r_steady = mean(&|i| rates[i]) / traj.gamma_over_g;
    // drift: compare first and last deciles of the window
    let dec = (idx.len() / 10).max(1);
    let head: f64 = idx[..dec].iter().map(|&i| traj.n_p[i]).sum::<f64>() / dec as f64;
    let tail: f64 = idx[idx.len() - dec..].iter().map(|&i| traj.n_p[i]).sum::<f64>() / dec as f64;
    let drift = if n_p_steady.abs() > 1e-300 {
        ((tail - head) / n_p_steady).abs() > 0.01
    } else {
        false
    };
    Ok(PlateauReport { n_p_steady, r_steady, dnex_steady: None, drift })
}

/// Mean excitation-difference manifestation over the diagonal cells with
/// tau10 = tau21 >= tau_floor; None when no such cell exists.
pub fn steady_manifestation(grid: &MemoryGrid, tau_floor: f64) -> Option<f64> {
    let k = grid.tau10s.len();
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..k {
        if 2 * i > k - 1 || grid.tau10s[i] < tau_floor {
            continue;
        }
        acc += grid.dnex[i][i];
        count += 1;
    }
    (count > 0).then(|| acc / count as f64)
}

/// Which regime column of the characteristics tables to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableColumn {
    /// Values normalized by (gt)^2.
    EarlyTime,
    /// Early stage of a near-Markovian run, normalized by (g tau_E)^2:
    /// photon numbers scale by 4, memory measures by 16, ratios unchanged.
    EarlyStageMarkov,
}

#[derive(Debug, Clone)]
pub struct TableRow {
    pub n_p: f64,
    pub n_m: f64,
    pub n_p_ind: f64,
    pub n_m_ind: f64,
    /// Degree of superradiance; None when the state holds no excitation.
    pub s: Option<f64>,
    /// n_m / n_m_ind; None when the independent measure vanishes.
    pub enhancement: Option<f64>,
}

/// Closed-form characteristics rows for the dephased-Dicke and factorized
/// families (a pure Dicke state is the dephased row at lambda = 1).
pub fn table_evaluator(init: &InitialState, column: TableColumn) -> Result<TableRow> {
    match init {
        InitialState::Dicke { .. }
        | InitialState::DephasedDicke { .. }
        | InitialState::FactorizedIdentical { .. } => {}
        _ => {
            return Err(Error::Usage(
                "table rows are defined for dephased Dicke and factorized identical states".into(),
            ))
        }
    }
    let mut n_p = crate::superradiance::np_early(init)?;
    let mut n_m = nm_early_closed(init)?;
    let mut n_p_ind = crate::superradiance::np_early_independent(init)?;
    let mut n_m_ind = nm_early_independent(init)?;
    let s = crate::superradiance::degree_early(init)?;
    let enhancement = (n_m_ind > 1e-300).then(|| n_m / n_m_ind);
    if column == TableColumn::EarlyStageMarkov {
        n_p *= 4.0;
        n_p_ind *= 4.0;
        n_m *= 16.0;
        n_m_ind *= 16.0;
    }
    Ok(TableRow { n_p, n_m, n_p_ind, n_m_ind, s, enhancement })
}
