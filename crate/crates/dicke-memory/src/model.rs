//! System description: N two-level atoms, a cavity mode starting in the
//! vacuum, resonant exchange coupling, photon loss at rate gamma.
//!
//! Everything downstream works in interaction-picture units with g = 1, so
//! durations are g*t and the only decay parameter is gamma/g. The joint
//! Hamiltonian is H = sum_n (sigma_n^+ b + sigma_n^- b^dagger) with either a
//! shared mode b (common cavity) or one mode per atom (independent
//! cavities). Index convention: atoms first, atom 1 slowest, cavity factors
//! last, atomic level 0 is the excited state, Fock levels ascend.

use crate::linalg::{tensor_chain, tensor_product, ComplexMatrix, DensityMatrix, C64, ONE, ZERO};
use crate::{tol, Error, Result};

/// Half-integer spin labels stored as doubled integers, so J = 3/2 is 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfInt(i32);

impl HalfInt {
    pub fn from_doubled(doubled: i32) -> Self {
        Self(doubled)
    }

    /// Accepts values that are exactly integer or half-integer.
    pub fn try_from_f64(x: f64) -> Result<Self> {
        let doubled = 2.0 * x;
        if !doubled.is_finite() || doubled.fract() != 0.0 || doubled.abs() > i32::MAX as f64 {
            return Err(Error::Config(format!("{x} is not a half-integer")));
        }
        Ok(Self(doubled as i32))
    }

    pub fn doubled(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl std::fmt::Display for HalfInt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// All atoms exchange with one shared cavity mode.
    CommonCavity,
    /// Atom n exchanges with its own cavity mode, two Fock levels each.
    IndependentCavities,
}

/// Physical parameters of one simulation.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub n_atoms: usize,
    pub g: f64,
    pub gamma: f64,
    pub n_fock: usize,
    pub topology: Topology,
}

impl SystemSpec {
    /// Common cavity with the vacuum-exact default of N+1 Fock levels.
    pub fn new(n_atoms: usize, g: f64, gamma: f64) -> Result<Self> {
        let spec = Self {
            n_atoms,
            g,
            gamma,
            n_fock: n_atoms + 1,
            topology: Topology::CommonCavity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_n_fock(mut self, n_fock: usize) -> Result<Self> {
        self.n_fock = n_fock;
        self.validate()?;
        Ok(self)
    }

    pub fn with_topology(mut self, topology: Topology) -> Self {
        self.topology = topology;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::Config("n_atoms must be at least 1".into()));
        }
        if !(self.g > 0.0) || !self.g.is_finite() {
            return Err(Error::Config(format!("coupling g must be positive, got {}", self.g)));
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "decay rate gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if self.n_fock < 2 {
            return Err(Error::Config("n_fock must be at least 2".into()));
        }
        Ok(())
    }

    pub fn gamma_over_g(&self) -> f64 {
        self.gamma / self.g
    }

    pub fn j(&self) -> HalfInt {
        HalfInt::from_doubled(self.n_atoms as i32)
    }

    /// Dimension of the joint space the full-space engine would use.
    pub fn full_dim(&self) -> usize {
        match self.topology {
            Topology::CommonCavity => (1usize << self.n_atoms) * self.n_fock,
            Topology::IndependentCavities => 1usize << (2 * self.n_atoms),
        }
    }
}

/// Initial atomic states the library understands natively.
#[derive(Debug, Clone)]
pub enum InitialState {
    /// |J, M> on the maximal ladder J = N/2.
    Dicke { j: HalfInt, m: HalfInt },
    /// lambda |J,M><J,M| + (1 - lambda) diag(|J,M><J,M|).
    DephasedDicke { j: HalfInt, m: HalfInt, lambda: f64 },
    /// sum_M p_M |J,M><J,M| with populations ascending in M from -J to J.
    DickeMixture { j: HalfInt, populations: Vec<f64> },
    /// rho_1^(tensor N) with identical single-atom states.
    FactorizedIdentical { n_atoms: usize, rho_ee: f64, rho_eg: C64 },
    /// Any explicit N-atom state.
    Raw { state: DensityMatrix },
}

impl InitialState {
    pub fn dicke(n_atoms: usize, m: HalfInt) -> Self {
        InitialState::Dicke { j: HalfInt::from_doubled(n_atoms as i32), m }
    }

    pub fn n_atoms(&self) -> usize {
        match self {
            InitialState::Dicke { j, .. }
            | InitialState::DephasedDicke { j, .. }
            | InitialState::DickeMixture { j, .. } => j.doubled().max(0) as usize,
            InitialState::FactorizedIdentical { n_atoms, .. } => *n_atoms,
            InitialState::Raw { state } => {
                let mut n = 0;
                let mut d = state.dim();
                while d > 1 {
                    d /= 2;
                    n += 1;
                }
                n
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InitialState::Dicke { j, m } => check_jm(*j, *m),
            InitialState::DephasedDicke { j, m, lambda } => {
                check_jm(*j, *m)?;
                if !(0.0..=1.0).contains(lambda) {
                    return Err(Error::Config(format!(
                        "dephasing weight lambda must lie in [0, 1], got {lambda}"
                    )));
                }
                Ok(())
            }
            InitialState::DickeMixture { j, populations } => {
                if j.doubled() < 1 {
                    return Err(Error::Config("mixture needs at least one atom".into()));
                }
                let want = j.doubled() as usize + 1;
                if populations.len() != want {
                    return Err(Error::Config(format!(
                        "mixture over J = {j} needs {want} populations, got {}",
                        populations.len()
                    )));
                }
                if populations.iter().any(|p| *p < -1e-12 || !p.is_finite()) {
                    return Err(Error::Config("mixture populations must be non-negative".into()));
                }
                let sum: f64 = populations.iter().sum();
                if (sum - 1.0).abs() > tol::TRACE {
                    return Err(Error::Config(format!(
                        "mixture populations sum to {sum}, expected 1"
                    )));
                }
                Ok(())
            }
            InitialState::FactorizedIdentical { n_atoms, rho_ee, rho_eg } => {
                if *n_atoms == 0 {
                    return Err(Error::Config("factorized state needs at least one atom".into()));
                }
                if !(0.0..=1.0).contains(rho_ee) {
                    return Err(Error::Config(format!(
                        "population rho_ee must lie in [0, 1], got {rho_ee}"
                    )));
                }
                let bound = rho_ee * (1.0 - rho_ee);
                if rho_eg.norm_sqr() > bound + 1e-12 {
                    return Err(Error::Config(format!(
                        "|rho_eg|^2 = {:.3e} violates positivity bound {:.3e}",
                        rho_eg.norm_sqr(),
                        bound
                    )));
                }
                Ok(())
            }
            InitialState::Raw { state } => {
                if !state.dim().is_power_of_two() {
                    return Err(Error::Config(format!(
                        "raw atomic state dimension {} is not 2^N",
                        state.dim()
                    )));
                }
                state.validate()
            }
        }
    }
}

fn check_jm(j: HalfInt, m: HalfInt) -> Result<()> {
    if j.doubled() < 1 {
        return Err(Error::Config(format!("J must be at least 1/2, got {j}")));
    }
    if (j.doubled() - m.doubled()) % 2 != 0 {
        return Err(Error::Config(format!("J - M must be an integer, got J = {j}, M = {m}")));
    }
    if m.doubled().abs() > j.doubled() {
        return Err(Error::Config(format!("|M| must not exceed J, got J = {j}, M = {m}")));
    }
    Ok(())
}

fn factorial(n: u32) -> f64 {
    (1..=n as u64).map(|k| k as f64).product()
}

/// Binomial coefficient in f64, exact for the sizes used here.
pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

const SIGMA_MINUS: [[f64; 2]; 2] = [[0.0, 0.0], [1.0, 0.0]];

/// Single-atom lowering operator |g><e| with the excited level at index 0.
pub fn sigma_minus() -> ComplexMatrix {
    ComplexMatrix::from_fn(2, 2, |i, j| C64::new(SIGMA_MINUS[i][j], 0.0))
}

/// Lowering operator of atom `k` (zero-based, atom 0 slowest) on 2^N.
pub fn atomic_lowering(n_atoms: usize, k: usize) -> Result<ComplexMatrix> {
    if k >= n_atoms {
        return Err(Error::Usage(format!("atom index {k} out of range for N = {n_atoms}")));
    }
    let dims = vec![2usize; n_atoms];
    embed(&dims, &[(k, &sigma_minus())])
}

/// Collective lowering operator, the sum of all atomic lowerings.
pub fn collective_lowering(n_atoms: usize) -> Result<ComplexMatrix> {
    let mut acc = ComplexMatrix::zeros(1 << n_atoms, 1 << n_atoms);
    for k in 0..n_atoms {
        acc = acc.add(&atomic_lowering(n_atoms, k)?);
    }
    Ok(acc)
}

/// Annihilator on an n_fock-level truncated mode, b|k> = sqrt(k)|k-1>.
pub fn cavity_annihilator(n_fock: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(n_fock, n_fock, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

/// Places operators on selected factors and fills the rest with identities.
pub fn embed(dims: &[usize], placed: &[(usize, &ComplexMatrix)]) -> Result<ComplexMatrix> {
    let mut factors: Vec<ComplexMatrix> = dims.iter().map(|&d| ComplexMatrix::identity(d)).collect();
    for (f, op) in placed {
        assert_eq!(op.rows(), dims[*f], "operator does not fit factor {f}");
        factors[*f] = (*op).clone();
    }
    let refs: Vec<&ComplexMatrix> = factors.iter().collect();
    tensor_chain(&refs)
}

/// Symmetric Dicke state |J = N/2, M> as a 2^N column vector, built by
/// repeated collective lowering from the fully excited state and normalized
/// with the closed-form factor sqrt((J+M)!/(N!(J-M)!)).
pub fn dicke_state(n_atoms: usize, m: HalfInt) -> Result<ComplexMatrix> {
    let j = HalfInt::from_doubled(n_atoms as i32);
    check_jm(j, m)?;
    let dim = 1usize << n_atoms;
    if dim > tol::MAX_DENSE_DIM {
        return Err(Error::Capacity(format!(
            "2^{n_atoms} exceeds the dense budget {}",
            tol::MAX_DENSE_DIM
        )));
    }
    let k = ((j.doubled() - m.doubled()) / 2) as u32;
    let lower = collective_lowering(n_atoms)?;
    let mut v = ComplexMatrix::zeros(dim, 1);
    v.set(0, 0, ONE);
    for _ in 0..k {
        v = lower.mul(&v);
    }
    let jm_exc = ((j.doubled() + m.doubled()) / 2) as u32;
    let norm = (factorial(jm_exc) / (factorial(n_atoms as u32) * factorial(k))).sqrt();
    Ok(v.scale(C64::new(norm, 0.0)))
}

/// Materializes an initial atomic state on the 2^N computational space.
pub fn build_initial(spec: &SystemSpec, init: &InitialState) -> Result<DensityMatrix> {
    init.validate()?;
    let n = spec.n_atoms;
    if init.n_atoms() != n {
        return Err(Error::Config(format!(
            "initial state is for {} atoms, spec has {}",
            init.n_atoms(),
            n
        )));
    }
    let dims = vec![2usize; n];
    match init {
        InitialState::Dicke { m, .. } => {
            let v = dicke_state(n, *m)?;
            DensityMatrix::pure(&v, dims)
        }
        InitialState::DephasedDicke { m, lambda, .. } => {
            // rho = lambda * pure + (1 - lambda) * diag(pure)
            let v = dicke_state(n, *m)?;
            let pure = v.mul(&v.dagger());
            let mut rho = pure.scale(C64::new(*lambda, 0.0));
            for i in 0..rho.rows() {
                let d = rho.get(i, i) + pure.get(i, i) * (1.0 - lambda);
                rho.set(i, i, d);
            }
            DensityMatrix::new(rho, dims)
        }
        InitialState::DickeMixture { j, populations } => {
            let mut rho = ComplexMatrix::zeros(1 << n, 1 << n);
            for (idx, p) in populations.iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                let m = HalfInt::from_doubled(-j.doubled() + 2 * idx as i32);
                let v = dicke_state(n, m)?;
                let proj = v.mul(&v.dagger());
                rho = rho.add(&proj.scale(C64::new(*p, 0.0)));
            }
            DensityMatrix::new(rho, dims)
        }
        InitialState::FactorizedIdentical { rho_ee, rho_eg, .. } => {
            let one = ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) => C64::new(*rho_ee, 0.0),
                (0, 1) => *rho_eg,
                (1, 0) => rho_eg.conj(),
                _ => C64::new(1.0 - rho_ee, 0.0),
            });
            let mut rho = one.clone();
            for _ in 1..n {
                rho = tensor_product(&rho, &one)?;
            }
            DensityMatrix::new(rho, dims)
        }
        InitialState::Raw { state } => {
            if state.dim() != 1 << n {
                return Err(Error::Config(format!(
                    "raw state dimension {} does not match 2^{n}",
                    state.dim()
                )));
            }
            DensityMatrix::new(state.matrix().clone(), dims)
        }
    }
}

/// Spontaneous-emission rate of |J,M> in the Markov limit,
/// W = Gamma (J+M)(J-M+1).
pub fn markov_emission_rate(j: HalfInt, m: HalfInt, big_gamma: f64) -> Result<f64> {
    check_jm(j, m)?;
    let jv = j.value();
    let mv = m.value();
    Ok(big_gamma * (jv + mv) * (jv - mv + 1.0))
}

// Maximal-spin ladder basis. Index k = 0 is M = J (all excited), k = N is
// M = -J. Dynamics generated by the exchange Hamiltonian and photon loss
// never leaves this sector when the initial atomic state lives in it.

/// Collective lowering restricted to the ladder, an (N+1)^2 matrix.
pub fn ladder_lowering(n_atoms: usize) -> ComplexMatrix {
    let j = n_atoms as f64 / 2.0;
    ComplexMatrix::from_fn(n_atoms + 1, n_atoms + 1, |i, jcol| {
        if i == jcol + 1 {
            let m = j - jcol as f64;
            C64::new((j * (j + 1.0) - m * (m - 1.0)).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

/// Number of excited atoms for each ladder index.
pub fn ladder_excitation_diag(n_atoms: usize) -> Vec<f64> {
    (0..=n_atoms).map(|k| (n_atoms - k) as f64).collect()
}

/// Isometry from the ladder basis into the 2^N computational basis.
pub fn dicke_isometry(n_atoms: usize) -> Result<ComplexMatrix> {
    let dim = 1usize << n_atoms;
    let mut v = ComplexMatrix::zeros(dim, n_atoms + 1);
    for k in 0..=n_atoms {
        let m = HalfInt::from_doubled(n_atoms as i32 - 2 * k as i32);
        let col = dicke_state(n_atoms, m)?;
        for i in 0..dim {
            v.set(i, k, col.get(i, 0));
        }
    }
    Ok(v)
}

/// Max-abs deviation of a 2^N state from its maximal-ladder projection.
pub fn sector_support_defect(rho_atoms: &DensityMatrix) -> Result<f64> {
    let n = rho_atoms
        .dim()
        .trailing_zeros() as usize;
    let v = dicke_isometry(n)?;
    let ladder = v.dagger().mul(rho_atoms.matrix()).mul(&v);
    let back = v.mul(&ladder).mul(&v.dagger());
    Ok(back.max_abs_diff(rho_atoms.matrix()))
}

/// Ladder-basis density matrix for sector-supported initial states
/// (Dicke, Dicke mixtures, pure factorized states).
pub fn ladder_density(init: &InitialState) -> Result<ComplexMatrix> {
    init.validate()?;
    let n = init.n_atoms();
    match init {
        InitialState::Dicke { j, m } => {
            let k = ((j.doubled() - m.doubled()) / 2) as usize;
            let mut rho = ComplexMatrix::zeros(n + 1, n + 1);
            rho.set(k, k, ONE);
            Ok(rho)
        }
        InitialState::DickeMixture { j, populations } => {
            let mut rho = ComplexMatrix::zeros(n + 1, n + 1);
            for (idx, p) in populations.iter().enumerate() {
                // populations ascend in M, ladder index descends in M
                let k = j.doubled() as usize - idx;
                rho.set(k, k, C64::new(*p, 0.0));
            }
            Ok(rho)
        }
        InitialState::FactorizedIdentical { n_atoms, rho_ee, rho_eg } => {
            let purity_gap = rho_ee * (1.0 - rho_ee) - rho_eg.norm_sqr();
            if purity_gap.abs() > 1e-12 {
                return Err(Error::Usage(
                    "only pure factorized states live on the maximal ladder".into(),
                ));
            }
            let alpha = rho_ee.sqrt();
            let beta = if alpha > 1e-15 {
                rho_eg.conj() / alpha
            } else {
                ONE
            };
            let amps: Vec<C64> = (0..=*n_atoms)
                .map(|k| {
                    let n_exc = (n_atoms - k) as u32;
                    let comb = binomial(*n_atoms as u32, n_exc).sqrt();
                    C64::new(comb, 0.0)
                        * alpha.powi(n_exc as i32)
                        * beta.powu(k as u32)
                })
                .collect();
            let v = ComplexMatrix::column(&amps);
            Ok(v.mul(&v.dagger()))
        }
        _ => Err(Error::Usage("state is not supported on the maximal ladder".into())),
    }
}

enum HalfM {
    Diag(Vec<f64>),
    Dense { m: ComplexMatrix, m_t: ComplexMatrix },
}

struct Jump {
    rate: f64,
    l: ComplexMatrix,
    /// conj(L) = (L^dagger)^T, cached for the sandwich product.
    l_conj: ComplexMatrix,
    m: HalfM,
}

/// Cached generator of one Lindblad equation in units of g.
///
/// rhs(rho) = -i [H, rho] + sum_k rate_k (L rho L^dag - {L^dag L, rho}/2).
/// Products with operator factors run through the sparse-left kernel; the
/// dense-by-sparse cases use (B^T A^T)^T so the sparse factor stays left.
pub struct Liouvillian {
    dims: Vec<usize>,
    h: ComplexMatrix,
    h_t: ComplexMatrix,
    jumps: Vec<Jump>,
    n_ex_diag: Vec<f64>,
    n_ph_diag: Vec<f64>,
}

impl Liouvillian {
    fn assemble(
        dims: Vec<usize>,
        h: ComplexMatrix,
        collapse: Vec<(f64, ComplexMatrix)>,
        n_ex_diag: Vec<f64>,
        n_ph_diag: Vec<f64>,
    ) -> Self {
        let jumps = collapse
            .into_iter()
            .filter(|(rate, _)| *rate != 0.0)
            .map(|(rate, l)| {
                let m_full = l.dagger().mul(&l);
                let mut diag = Vec::with_capacity(m_full.rows());
                let mut is_diag = true;
                for i in 0..m_full.rows() {
                    for j in 0..m_full.cols() {
                        let v = m_full.get(i, j);
                        if i == j {
                            diag.push(v.re);
                        } else if v != ZERO {
                            is_diag = false;
                        }
                    }
                }
                let m = if is_diag {
                    HalfM::Diag(diag)
                } else {
                    HalfM::Dense { m_t: m_full.transpose(), m: m_full }
                };
                Jump { rate, l_conj: l.conj(), l, m }
            })
            .collect();
        Self { h_t: h.transpose(), dims, h, jumps, n_ex_diag, n_ph_diag }
    }

    /// Shared-mode generator on 2^N * n_fock.
    pub fn common(spec: &SystemSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_atoms;
        let dim = spec.full_dim();
        if dim > tol::MAX_DENSE_DIM {
            return Err(Error::Capacity(format!(
                "full common-cavity space is {dim}, budget {}",
                tol::MAX_DENSE_DIM
            )));
        }
        let b = cavity_annihilator(spec.n_fock);
        let sm = collective_lowering(n)?;
        let h = tensor_product(&sm.dagger(), &b)?.add(&tensor_product(&sm, &b.dagger())?);
        let l = tensor_product(&ComplexMatrix::identity(1 << n), &b)?;
        let mut n_ex = Vec::with_capacity(dim);
        let mut n_ph = Vec::with_capacity(dim);
        for a in 0..(1usize << n) {
            let exc = (n as u32 - (a as u32).count_ones()) as f64;
            for f in 0..spec.n_fock {
                n_ex.push(exc);
                n_ph.push(f as f64);
            }
        }
        let mut dims = vec![2usize; n];
        dims.push(spec.n_fock);
        Ok(Self::assemble(dims, h, vec![(spec.gamma_over_g(), l)], n_ex, n_ph))
    }

    /// Maximal-ladder generator on (N+1) * n_fock.
    pub fn symmetric(spec: &SystemSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_atoms;
        let b = cavity_annihilator(spec.n_fock);
        let sm = ladder_lowering(n);
        let h = tensor_product(&sm.dagger(), &b)?.add(&tensor_product(&sm, &b.dagger())?);
        let l = tensor_product(&ComplexMatrix::identity(n + 1), &b)?;
        let exc = ladder_excitation_diag(n);
        let dim = (n + 1) * spec.n_fock;
        let mut n_ex = Vec::with_capacity(dim);
        let mut n_ph = Vec::with_capacity(dim);
        for e in &exc {
            for f in 0..spec.n_fock {
                n_ex.push(*e);
                n_ph.push(f as f64);
            }
        }
        Ok(Self::assemble(
            vec![n + 1, spec.n_fock],
            h,
            vec![(spec.gamma_over_g(), l)],
            n_ex,
            n_ph,
        ))
    }

    /// One atom with its own two-level mode, the channel building block.
    pub fn single_pair(gamma_over_g: f64) -> Self {
        let b = cavity_annihilator(2);
        let sm = sigma_minus();
        let h = tensor_product(&sm.dagger(), &b)
            .unwrap()
            .add(&tensor_product(&sm, &b.dagger()).unwrap());
        let l = tensor_product(&ComplexMatrix::identity(2), &b).unwrap();
        Self::assemble(
            vec![2, 2],
            h,
            vec![(gamma_over_g, l)],
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
        )
    }

    /// Full joint generator for independent cavities, atoms first then one
    /// two-level mode per atom. Exponential in N, used as an oracle for the
    /// tensor-power channel route.
    pub fn independent_full(spec: &SystemSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_atoms;
        let dim = 1usize << (2 * n);
        if dim > tol::MAX_DENSE_DIM {
            return Err(Error::Capacity(format!(
                "full independent-cavity space is {dim}, budget {}",
                tol::MAX_DENSE_DIM
            )));
        }
        let dims = vec![2usize; 2 * n];
        let b = cavity_annihilator(2);
        let sm = sigma_minus();
        let mut h = ComplexMatrix::zeros(dim, dim);
        let mut collapse = Vec::new();
        for k in 0..n {
            let up = embed(&dims, &[(k, &sm.dagger()), (n + k, &b)])?;
            let down = embed(&dims, &[(k, &sm), (n + k, &b.dagger())])?;
            h = h.add(&up).add(&down);
            collapse.push((spec.gamma_over_g(), embed(&dims, &[(n + k, &b)])?));
        }
        let mut n_ex = vec![0.0; dim];
        let mut n_ph = vec![0.0; dim];
        for idx in 0..dim {
            let atoms = idx >> n;
            let cavs = idx & ((1 << n) - 1);
            n_ex[idx] = (n as u32 - (atoms as u32).count_ones()) as f64;
            n_ph[idx] = (cavs as u32).count_ones() as f64;
        }
        Ok(Self::assemble(dims, h, collapse, n_ex, n_ph))
    }

    /// Generator for the configured topology on the full joint space.
    pub fn for_spec(spec: &SystemSpec) -> Result<Self> {
        match spec.topology {
            Topology::CommonCavity => Self::common(spec),
            Topology::IndependentCavities => Self::independent_full(spec),
        }
    }

    pub fn dim(&self) -> usize {
        self.h.rows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn n_ex_diag(&self) -> &[f64] {
        &self.n_ex_diag
    }

    pub fn n_ph_diag(&self) -> &[f64] {
        &self.n_ph_diag
    }

    /// Evaluates the master-equation right-hand side. Linear, so it accepts
    /// arbitrary (not necessarily Hermitian) matrices.
    pub fn rhs(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        let rho_t = rho.transpose();
        let h_rho = self.h.mul(rho);
        let rho_h = self.h_t.mul(&rho_t).transpose();
        let mut acc = h_rho.sub(&rho_h).scale(C64::new(0.0, -1.0));
        for jump in &self.jumps {
            let l_rho = jump.l.mul(rho);
            let sandwich = jump.l_conj.mul(&l_rho.transpose()).transpose();
            acc.scaled_add_assign(C64::new(jump.rate, 0.0), &sandwich);
            match &jump.m {
                HalfM::Diag(d) => {
                    let dim = rho.rows();
                    let half = -0.5 * jump.rate;
                    for i in 0..dim {
                        for j in 0..dim {
                            let w = d[i] + d[j];
                            if w != 0.0 {
                                let v = acc.get(i, j) + rho.get(i, j) * (half * w);
                                acc.set(i, j, v);
                            }
                        }
                    }
                }
                HalfM::Dense { m, m_t } => {
                    let m_rho = m.mul(rho);
                    let rho_m = m_t.mul(&rho_t).transpose();
                    acc.scaled_add_assign(C64::new(-0.5 * jump.rate, 0.0), &m_rho.add(&rho_m));
                }
            }
        }
        acc
    }
}

/// One-shot right-hand-side evaluation for the configured topology.
pub fn lindblad_rhs(spec: &SystemSpec, rho_se: &ComplexMatrix) -> Result<ComplexMatrix> {
    let gen = Liouvillian::for_spec(spec)?;
    if rho_se.rows() != gen.dim() || !rho_se.is_square() {
        return Err(Error::Usage(format!(
            "joint state must be {0}x{0}, got {1}x{2}",
            gen.dim(),
            rho_se.rows(),
            rho_se.cols()
        )));
    }
    Ok(gen.rhs(rho_se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, partial_trace_raw};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn half(x: f64) -> HalfInt {
        HalfInt::try_from_f64(x).unwrap()
    }

    #[test]
    fn half_int_parsing() {
        assert_eq!(half(0.5).doubled(), 1);
        assert_eq!(half(-2.0).doubled(), -4);
        assert!(HalfInt::try_from_f64(0.3).is_err());
        assert_eq!(format!("{}", half(1.5)), "3/2");
        assert_eq!(format!("{}", half(2.0)), "2");
    }

    #[test]
    fn dicke_state_three_atoms_single_excitation() {
        // |3/2, -1/2> = (|egg> + |geg> + |gge>) / sqrt(3)
        let v = dicke_state(3, half(-0.5)).unwrap();
        let amp = 1.0 / 3.0f64.sqrt();
        for idx in 0..8 {
            let want = match idx {
                3 | 5 | 6 => amp,
                _ => 0.0,
            };
            assert!(
                (v.get(idx, 0) - c(want, 0.0)).norm() < 1e-14,
                "index {idx}: {}",
                v.get(idx, 0)
            );
        }
    }

    #[test]
    fn dicke_state_fully_excited_is_first_basis_vector() {
        let v = dicke_state(4, half(2.0)).unwrap();
        assert!((v.get(0, 0) - ONE).norm() < 1e-15);
        assert!((1..16).all(|i| v.get(i, 0) == ZERO));
    }

    #[test]
    fn dicke_state_is_spin_eigenvector() {
        // D^2 and D_z built explicitly from Pauli sums.
        let n = 4;
        let dims = vec![2usize; n];
        let sz = ComplexMatrix::from_rows(&[&[ONE, ZERO], &[ZERO, c(-1.0, 0.0)]]);
        let mut dz = ComplexMatrix::zeros(16, 16);
        for k in 0..n {
            dz = dz.add(&embed(&dims, &[(k, &sz)]).unwrap().scale(c(0.5, 0.0)));
        }
        let dm = collective_lowering(n).unwrap();
        let dp = dm.dagger();
        let d2 = dm.mul(&dp).add(&dz.mul(&dz)).add(&dz);
        let v = dicke_state(n, half(1.0)).unwrap();
        let jv = 2.0;
        let d2v = d2.mul(&v);
        let dzv = dz.mul(&v);
        assert!(d2v.max_abs_diff(&v.scale(c(jv * (jv + 1.0), 0.0))) < 1e-12);
        assert!(dzv.max_abs_diff(&v.scale(c(1.0, 0.0))) < 1e-12);
    }

    #[test]
    fn dicke_state_rejects_invalid_m() {
        assert!(dicke_state(2, half(1.5)).is_err());
        assert!(dicke_state(2, half(2.0)).is_err());
    }

    #[test]
    fn collective_lowering_single_atom_and_ladder_action() {
        let sm = collective_lowering(1).unwrap();
        assert_eq!(sm.get(1, 0), ONE);
        assert_eq!(sm.data().iter().filter(|z| **z != ZERO).count(), 1);

        // sigma^- |2,0> = sqrt(6) |2,-1>
        let v = dicke_state(4, half(0.0)).unwrap();
        let lowered = collective_lowering(4).unwrap().mul(&v);
        let want = dicke_state(4, half(-1.0)).unwrap().scale(c(6.0f64.sqrt(), 0.0));
        assert!(lowered.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn ladder_lowering_matches_full_space_restriction() {
        let n = 3;
        let v = dicke_isometry(n).unwrap();
        let full = collective_lowering(n).unwrap();
        let restricted = v.dagger().mul(&full).mul(&v);
        assert!(restricted.max_abs_diff(&ladder_lowering(n)) < 1e-12);
    }

    #[test]
    fn cavity_annihilator_number_operator() {
        let b = cavity_annihilator(5);
        let num = b.dagger().mul(&b);
        for k in 0..5 {
            assert!((num.get(k, k) - c(k as f64, 0.0)).norm() < 1e-14);
        }
        assert!((b.get(2, 3) - c(3.0f64.sqrt(), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn build_initial_dephased_limits() {
        let spec = SystemSpec::new(2, 1.0, 0.0).unwrap();
        let full = build_initial(
            &spec,
            &InitialState::DephasedDicke { j: half(1.0), m: half(0.0), lambda: 1.0 },
        )
        .unwrap();
        let pure = build_initial(&spec, &InitialState::Dicke { j: half(1.0), m: half(0.0) }).unwrap();
        assert!(full.matrix().max_abs_diff(pure.matrix()) < 1e-14);

        let dephased = build_initial(
            &spec,
            &InitialState::DephasedDicke { j: half(1.0), m: half(0.0), lambda: 0.0 },
        )
        .unwrap();
        // Fully dephased |1,0>: half weight each on |eg> and |ge|.
        let mut want = ComplexMatrix::zeros(4, 4);
        want.set(1, 1, c(0.5, 0.0));
        want.set(2, 2, c(0.5, 0.0));
        assert!(dephased.matrix().max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn build_initial_mixture_single_atom() {
        let spec = SystemSpec::new(1, 1.0, 0.0).unwrap();
        let rho = build_initial(
            &spec,
            &InitialState::DickeMixture { j: half(0.5), populations: vec![0.5, 0.5] },
        )
        .unwrap();
        let want = ComplexMatrix::identity(2).scale(c(0.5, 0.0));
        assert!(rho.matrix().max_abs_diff(&want) < 1e-14);
    }

    #[test]
    fn build_initial_factorized_limits_and_bounds() {
        let spec = SystemSpec::new(3, 1.0, 0.0).unwrap();
        let excited = build_initial(
            &spec,
            &InitialState::FactorizedIdentical { n_atoms: 3, rho_ee: 1.0, rho_eg: ZERO },
        )
        .unwrap();
        let dicke = build_initial(&spec, &InitialState::Dicke { j: half(1.5), m: half(1.5) }).unwrap();
        assert!(excited.matrix().max_abs_diff(dicke.matrix()) < 1e-14);

        let bad = InitialState::FactorizedIdentical { n_atoms: 3, rho_ee: 0.5, rho_eg: c(0.6, 0.0) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mixture_population_validation() {
        let bad_len = InitialState::DickeMixture { j: half(1.0), populations: vec![0.5, 0.5] };
        assert!(bad_len.validate().is_err());
        let bad_sum = InitialState::DickeMixture { j: half(1.0), populations: vec![0.5, 0.2, 0.2] };
        assert!(bad_sum.validate().is_err());
    }

    #[test]
    fn ladder_density_matches_full_space_projection() {
        // pure factorized state: |rho_eg| saturates the positivity bound
        let mag = (0.4f64 * 0.6).sqrt();
        let phase = C64::new(0.0, 0.7).exp();
        let init = InitialState::FactorizedIdentical { n_atoms: 3, rho_ee: 0.4, rho_eg: phase * mag };
        let ladder = ladder_density(&init).unwrap();
        let spec = SystemSpec::new(3, 1.0, 0.0).unwrap();
        let full = build_initial(&spec, &init).unwrap();
        let v = dicke_isometry(3).unwrap();
        let projected = v.dagger().mul(full.matrix()).mul(&v);
        assert!(ladder.max_abs_diff(&projected) < 1e-12);
        assert!((ladder.trace().re - 1.0).abs() < 1e-12);
        // mixed single-atom states are rejected
        let mixed = InitialState::FactorizedIdentical { n_atoms: 3, rho_ee: 0.4, rho_eg: ZERO };
        assert!(ladder_density(&mixed).is_err());
    }

    #[test]
    fn sector_support_classification() {
        let spec = SystemSpec::new(2, 1.0, 0.0).unwrap();
        let dicke = build_initial(&spec, &InitialState::Dicke { j: half(1.0), m: half(0.0) }).unwrap();
        assert!(sector_support_defect(&dicke).unwrap() < 1e-14);

        let dephased = build_initial(
            &spec,
            &InitialState::DephasedDicke { j: half(1.0), m: half(0.0), lambda: 0.5 },
        )
        .unwrap();
        assert!(sector_support_defect(&dephased).unwrap() > 1e-3);
    }

    #[test]
    fn lindblad_rhs_fixed_points_and_trace() {
        let spec = SystemSpec::new(2, 1.0, 0.7).unwrap();
        let gen = Liouvillian::common(&spec).unwrap();
        // Ground state with empty cavity is stationary.
        let dim = gen.dim();
        let mut ground = ComplexMatrix::zeros(dim, dim);
        // atoms |gg> is atom index 3, vacuum fock 0
        ground.set(3 * spec.n_fock, 3 * spec.n_fock, ONE);
        assert!(gen.rhs(&ground).max_abs() < 1e-14);

        // The generator is trace-free on arbitrary Hermitian inputs.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let g = crate::linalg::tests::random_matrix(&mut rng, dim);
        let h = g.add(&g.dagger());
        let out = gen.rhs(&h);
        assert!(out.trace().norm() < 1e-10 * h.max_abs().max(1.0));
    }

    #[test]
    fn excitation_curvature_matches_exchange_oscillation() {
        // d^2 <N_ex>/dt^2 at t = 0 equals -2 g^2 for one excited atom.
        let spec = SystemSpec::new(1, 1.0, 0.0).unwrap();
        let gen = Liouvillian::common(&spec).unwrap();
        let dim = gen.dim();
        let mut rho = ComplexMatrix::zeros(dim, dim);
        rho.set(0, 0, ONE); // |e, 0>
        let first = gen.rhs(&rho);
        assert!(first.weighted_diag(gen.n_ex_diag()).norm() < 1e-14);
        let second = gen.rhs(&first);
        let curv = second.weighted_diag(gen.n_ex_diag()).re;
        assert!((curv + 2.0).abs() < 1e-12, "curvature {curv}");
    }

    #[test]
    fn independent_generator_preserves_pair_structure() {
        let spec = SystemSpec::new(2, 1.0, 0.3).unwrap().with_topology(Topology::IndependentCavities);
        let gen = Liouvillian::independent_full(&spec).unwrap();
        assert_eq!(gen.dim(), 16);
        // Hamiltonian commutes with total excitation number.
        let n_op = ComplexMatrix::from_fn(16, 16, |i, j| {
            if i == j {
                c(gen.n_ex_diag()[i] + gen.n_ph_diag()[i], 0.0)
            } else {
                ZERO
            }
        });
        let comm = gen.hamiltonian().mul(&n_op).sub(&n_op.mul(gen.hamiltonian()));
        assert!(comm.max_abs() < 1e-14);
    }

    #[test]
    fn hamiltonian_conserves_total_excitation_common() {
        let spec = SystemSpec::new(3, 1.0, 0.0).unwrap();
        let gen = Liouvillian::common(&spec).unwrap();
        let dim = gen.dim();
        let n_op = ComplexMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                c(gen.n_ex_diag()[i] + gen.n_ph_diag()[i], 0.0)
            } else {
                ZERO
            }
        });
        let comm = gen.hamiltonian().mul(&n_op).sub(&n_op.mul(gen.hamiltonian()));
        assert!(comm.max_abs() < 1e-12);
    }

    #[test]
    fn markov_rate_values() {
        let w = markov_emission_rate(half(2.0), half(0.0), 1.5).unwrap();
        assert!((w - 1.5 * 6.0).abs() < 1e-12);
        // Half-deexcited Dicke states outshine the fully excited one.
        let mid = markov_emission_rate(half(2.0), half(0.0), 1.0).unwrap();
        let top = markov_emission_rate(half(2.0), half(2.0), 1.0).unwrap();
        assert!(mid > top);
        assert!((top - 4.0).abs() < 1e-12);
        assert!(markov_emission_rate(half(1.0), half(1.5), 1.0).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(SystemSpec::new(0, 1.0, 0.0).is_err());
        assert!(SystemSpec::new(2, 0.0, 0.0).is_err());
        assert!(SystemSpec::new(2, 1.0, -0.1).is_err());
        assert!(SystemSpec::new(2, 1.0, 0.0).unwrap().with_n_fock(1).is_err());
        let s = SystemSpec::new(4, 1.0, 2.0).unwrap();
        assert_eq!(s.n_fock, 5);
        assert!((s.gamma_over_g() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dephased_diagonal_weights_follow_amplitudes() {
        // lambda = 0 keeps the Dicke amplitudes squared on the diagonal.
        let spec = SystemSpec::new(3, 1.0, 0.0).unwrap();
        let rho = build_initial(
            &spec,
            &InitialState::DephasedDicke { j: half(1.5), m: half(-0.5), lambda: 0.0 },
        )
        .unwrap();
        for idx in [3usize, 5, 6] {
            assert!((rho.matrix().get(idx, idx).re - 1.0 / 3.0).abs() < 1e-14);
        }
        let off = rho.matrix().get(3, 5).norm();
        assert!(off < 1e-15);
    }

    #[test]
    fn raw_state_roundtrip() {
        let spec = SystemSpec::new(2, 1.0, 0.0).unwrap();
        let m = ComplexMatrix::identity(4).scale(c(0.25, 0.0));
        let raw = InitialState::Raw { state: DensityMatrix::new(m.clone(), vec![4]).unwrap() };
        let rho = build_initial(&spec, &raw).unwrap();
        assert!(rho.matrix().max_abs_diff(&m) < 1e-15);
        assert_eq!(rho.dims(), &[2, 2]);
    }

    #[test]
    fn reduced_atom_of_factorized_initial_is_single_atom_state() {
        let spec = SystemSpec::new(3, 1.0, 0.0).unwrap();
        let init = InitialState::FactorizedIdentical { n_atoms: 3, rho_ee: 0.3, rho_eg: c(0.2, 0.1) };
        let rho = build_initial(&spec, &init).unwrap();
        let one = partial_trace_raw(rho.matrix(), &[2, 2, 2], &[1]).unwrap();
        assert!((one.get(0, 0).re - 0.3).abs() < 1e-14);
        assert!((one.get(0, 1) - c(0.2, 0.1)).norm() < 1e-14);
    }

    #[test]
    fn build_initial_outputs_are_valid_density_matrices() {
        let spec = SystemSpec::new(4, 1.0, 0.0).unwrap();
        let states = [
            InitialState::Dicke { j: half(2.0), m: half(-1.0) },
            InitialState::DephasedDicke { j: half(2.0), m: half(1.0), lambda: 0.35 },
            InitialState::DickeMixture {
                j: half(2.0),
                populations: vec![0.1, 0.2, 0.3, 0.25, 0.15],
            },
            InitialState::FactorizedIdentical { n_atoms: 4, rho_ee: 0.6, rho_eg: c(0.1, -0.3) },
        ];
        for init in &states {
            let rho = build_initial(&spec, init).unwrap();
            rho.validate().unwrap();
            let eig = hermitian_eigenvalues(rho.matrix()).unwrap();
            assert!(eig[0] > tol::PSD_FLOOR);
        }
    }
}
