//! Declarative experiment runner: TOML configs, a catalog of named data
//! products, CSV + JSON-manifest persistence, and content-addressed result
//! caching.
//!
//! A config names an experiment and overrides its defaults. Resolution
//! materializes every default, so two configs that mean the same run hash
//! identically; the hash keys the output directory `<out>/<hash>/`.
//! Data files are CSV (comma separator, `.` decimal, scientific notation
//! with 13 significant digits) and byte-identical across repeated runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::choi::{choi_error_curve, excitation_error, ChoiOptions};
use crate::dynamics::{IntegratorConfig, Regime};
use crate::linalg::C64;
use crate::memory::{
    memory_measure_init, nm_early_closed, nm_early_independent, plateau_extract,
    steady_manifestation, table_evaluator, MemoryGrid, MemoryOptions, MemoryReport, TableColumn,
};
use crate::model::{build_initial, HalfInt, InitialState, SystemSpec, Topology};
use crate::superradiance::{
    default_plateau_window, degree_early, degree_near_markovian, degree_strong,
    emission_rate_series, np_early, np_early_independent, radiation_early,
    radiation_near_markovian, radiation_strong, RadiationReport,
};
use crate::{Error, Result};

/// Environment variable that overrides the result cache root.
pub const CACHE_ENV: &str = "DICKE_MEMORY_RESULTS";

const DEFAULT_OUT: &str = "results";

pub fn regime_name(regime: Regime) -> &'static str {
    match regime {
        Regime::EarlyTime => "early_time",
        Regime::NearMarkovian => "near_markovian",
        Regime::StronglyNonMarkovian => "strongly_non_markovian",
    }
}

// ---------------------------------------------------------------------------
// Config schema

/// One experiment description as parsed from TOML. Every field is optional;
/// unset fields take per-experiment defaults during resolution. Unknown
/// keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// fig2..fig12, table1, table2, or custom.
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<WindowSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n_atoms: Option<usize>,
    pub gamma_over_g: Option<f64>,
    pub n_fock: Option<usize>,
    /// "common" or "independent"; selects the joint topology where a single
    /// one is integrated (error curves, trajectory export).
    pub topology: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StateSection {
    /// dicke | dephased | mixture | factorized | ground | excited
    pub kind: Option<String>,
    pub j: Option<f64>,
    pub m: Option<f64>,
    pub lambda: Option<f64>,
    /// Ladder populations ascending in M, for kind = mixture.
    pub populations: Option<Vec<f64>>,
    pub rho_ee: Option<f64>,
    /// Coherence magnitude |rho_eg|.
    pub rho_eg: Option<f64>,
    /// Coherence phase in radians.
    pub rho_eg_phase: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    /// Memory-grid window in units of 1/g.
    pub t_window: Option<f64>,
    /// Extend the uninterrupted run past the grid window.
    pub a_duration: Option<f64>,
    /// Plateau-averaging window [lo, hi] in units of 1/g.
    pub plateau: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Points per memory-grid axis.
    pub points: Option<usize>,
    pub refine: Option<bool>,
    /// Points per axis of (rho_ee, |rho_eg|) surfaces.
    pub surface_points: Option<usize>,
    /// Samples along error curves.
    pub curve_points: Option<usize>,
    /// Atom-number sweep for the sweep experiments.
    pub atoms: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Opt into the hours-scale variants (Choi assembly beyond N = 2).
    pub long_running: Option<bool>,
    /// Worker threads; 0 means all logical cores.
    pub jobs: Option<usize>,
}

// ---------------------------------------------------------------------------
// Resolution

/// A config with every default materialized. This is the hashed object, so
/// omitting a field and writing its default produce the same hash.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub experiment: String,
    pub n_atoms: usize,
    pub gamma_over_g: f64,
    pub n_fock: Option<usize>,
    pub topology: String,
    pub state: ResolvedState,
    pub t_window: f64,
    pub a_duration: Option<f64>,
    pub plateau: [f64; 2],
    pub grid_points: usize,
    pub refine: bool,
    pub surface_points: usize,
    pub curve_points: usize,
    pub atoms: Vec<usize>,
    pub long_running: bool,
    pub jobs: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedState {
    pub kind: String,
    pub j: f64,
    pub m: f64,
    pub lambda: f64,
    pub populations: Vec<f64>,
    pub rho_ee: f64,
    pub rho_eg: f64,
    pub rho_eg_phase: f64,
}

struct Defaults {
    n_atoms: usize,
    gamma_over_g: f64,
    state_kind: &'static str,
    grid_points: usize,
    surface_points: usize,
    curve_points: usize,
    atoms: Vec<usize>,
}

fn experiment_defaults(id: &str) -> Result<Defaults> {
    let d = |n_atoms, gamma_over_g, state_kind, grid_points, atoms: Vec<usize>| Defaults {
        n_atoms,
        gamma_over_g,
        state_kind,
        grid_points,
        surface_points: 21,
        curve_points: 25,
        atoms,
    };
    Ok(match id {
        "fig2" => d(2, 0.0, "excited", 41, vec![2]),
        "fig3" => d(2, 0.0, "excited", 41, vec![2, 6]),
        "fig4" | "fig5" => d(4, 0.0, "dicke", 41, (1..=15).collect()),
        "fig6" => d(2, 0.0, "factorized", 41, vec![1, 2, 11]),
        "fig7" => d(2, 0.0, "factorized", 41, vec![2, 3, 12]),
        "fig8" => d(4, 1000.0, "dicke", 41, vec![4]),
        "fig9" => d(4, 0.5, "dicke", 41, vec![4]),
        "fig10" => d(4, 0.5, "dicke", 21, (1..=10).collect()),
        "fig11" => Defaults { surface_points: 11, ..d(2, 0.5, "factorized", 21, vec![2, 7]) },
        "fig12" => Defaults { surface_points: 11, ..d(2, 0.5, "factorized", 21, vec![2, 7]) },
        "table1" => d(4, 0.0, "dicke", 41, vec![4]),
        "table2" => d(2, 0.0, "factorized", 41, vec![2, 3]),
        "custom" => d(2, 0.5, "excited", 41, vec![2]),
        other => {
            return Err(Error::Config(format!(
                "unknown experiment id '{other}'; expected fig2..fig12, table1, table2, or custom"
            )))
        }
    })
}

pub fn resolve(config: &ExperimentConfig) -> Result<Resolved> {
    let defaults = experiment_defaults(&config.experiment)?;
    let sys = config.system.clone().unwrap_or_default();
    let st = config.state.clone().unwrap_or_default();
    let win = config.window.clone().unwrap_or_default();
    let grid = config.grid.clone().unwrap_or_default();
    let run = config.run.clone().unwrap_or_default();

    let n_atoms = sys.n_atoms.unwrap_or(defaults.n_atoms);
    let gamma_over_g = sys.gamma_over_g.unwrap_or(defaults.gamma_over_g);
    let topology = sys.topology.unwrap_or_else(|| "common".into());
    if topology != "common" && topology != "independent" {
        return Err(Error::Config(format!(
            "topology must be 'common' or 'independent', got '{topology}'"
        )));
    }

    let kind = st.kind.unwrap_or_else(|| defaults.state_kind.into());
    let half_n = n_atoms as f64 / 2.0;
    let (j_default, m_default) = match kind.as_str() {
        "excited" => (half_n, half_n),
        "ground" => (half_n, -half_n),
        _ => (half_n, 0.0),
    };
    let state = ResolvedState {
        kind: kind.clone(),
        j: st.j.unwrap_or(j_default),
        m: st.m.unwrap_or(m_default),
        lambda: st.lambda.unwrap_or(1.0),
        populations: st.populations.unwrap_or_default(),
        rho_ee: st.rho_ee.unwrap_or(0.5),
        rho_eg: st.rho_eg.unwrap_or(0.0),
        rho_eg_phase: st.rho_eg_phase.unwrap_or(0.0),
    };

    let t_window = win
        .t_window
        .unwrap_or_else(|| crate::memory::default_window(gamma_over_g));
    let default_plateau = default_plateau_window(gamma_over_g.max(1.0));
    let plateau = win.plateau.unwrap_or([default_plateau.0, default_plateau.1]);
    let resolved = Resolved {
        experiment: config.experiment.clone(),
        n_atoms,
        gamma_over_g,
        n_fock: sys.n_fock,
        topology,
        state,
        t_window,
        a_duration: win.a_duration.or_else(|| {
            (config.experiment == "fig8" || gamma_over_g >= 100.0).then(|| 200.0 / gamma_over_g)
        }),
        plateau,
        grid_points: grid.points.unwrap_or(defaults.grid_points),
        refine: grid.refine.unwrap_or(true),
        surface_points: grid.surface_points.unwrap_or(defaults.surface_points),
        curve_points: grid.curve_points.unwrap_or(defaults.curve_points),
        atoms: grid.atoms.unwrap_or(defaults.atoms),
        long_running: run.long_running.unwrap_or(false),
        jobs: run.jobs.unwrap_or(0),
    };
    resolved.validate()?;
    Ok(resolved)
}

impl Resolved {
    fn validate(&self) -> Result<()> {
        self.sysspec()?;
        let init = self.init()?;
        init.validate()?;
        if init.n_atoms() != self.n_atoms {
            return Err(Error::Config(format!(
                "state section describes {} atoms (j = {}), system.n_atoms is {}",
                init.n_atoms(),
                self.state.j,
                self.n_atoms
            )));
        }
        if !(self.t_window > 0.0) {
            return Err(Error::Config(format!(
                "window.t_window must be positive, got {}",
                self.t_window
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::Config("grid.points must be at least 2".into()));
        }
        if self.surface_points < 2 {
            return Err(Error::Config("grid.surface_points must be at least 2".into()));
        }
        if self.curve_points < 2 {
            return Err(Error::Config("grid.curve_points must be at least 2".into()));
        }
        if self.atoms.is_empty() {
            return Err(Error::Config("grid.atoms must not be empty".into()));
        }
        if self.plateau[1] <= self.plateau[0] || self.plateau[0] < 0.0 {
            return Err(Error::Config(format!(
                "window.plateau must be an ascending non-negative pair, got {:?}",
                self.plateau
            )));
        }
        Ok(())
    }

    pub fn sysspec(&self) -> Result<SystemSpec> {
        self.sysspec_for(self.n_atoms, self.gamma_over_g)
    }

    fn sysspec_for(&self, n_atoms: usize, gamma_over_g: f64) -> Result<SystemSpec> {
        let mut spec = SystemSpec::new(n_atoms, 1.0, gamma_over_g)?;
        if let Some(nf) = self.n_fock {
            spec = spec.with_n_fock(nf)?;
        }
        if self.topology == "independent" {
            spec = spec.with_topology(Topology::IndependentCavities);
        }
        Ok(spec)
    }

    pub fn init(&self) -> Result<InitialState> {
        let s = &self.state;
        let j = HalfInt::try_from_f64(s.j)?;
        let m = HalfInt::try_from_f64(s.m)?;
        Ok(match s.kind.as_str() {
            "dicke" | "excited" | "ground" => InitialState::Dicke { j, m },
            "dephased" => InitialState::DephasedDicke { j, m, lambda: s.lambda },
            "mixture" => InitialState::DickeMixture { j, populations: s.populations.clone() },
            "factorized" => InitialState::FactorizedIdentical {
                n_atoms: self.n_atoms,
                rho_ee: s.rho_ee,
                rho_eg: C64::from_polar(s.rho_eg, s.rho_eg_phase),
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown state kind '{other}'; expected dicke, dephased, mixture, \
                     factorized, ground, or excited"
                )))
            }
        })
    }

    fn memory_options(&self) -> MemoryOptions {
        MemoryOptions {
            grid_points: self.grid_points,
            a_duration: self.a_duration,
            refine: self.refine,
            integrator: IntegratorConfig::default(),
        }
    }
}

// ---------------------------------------------------------------------------
// Catalog

pub struct CatalogEntry {
    pub id: &'static str,
    pub summary: &'static str,
    /// Hours-scale at defaults on one core.
    pub expensive: bool,
}

pub fn catalog() -> &'static [CatalogEntry] {
    const ENTRIES: &[CatalogEntry] = &[
        CatalogEntry {
            id: "fig2",
            summary: "quadratic-map channel error vs gt for gamma/g in {0, 1, 10}",
            expensive: false,
        },
        CatalogEntry {
            id: "fig3",
            summary: "quadratic-map excitation error vs gt, fully excited N = 2 and 6",
            expensive: false,
        },
        CatalogEntry {
            id: "fig4",
            summary: "early-time memory measure and photon number over all Dicke states, N <= 15",
            expensive: false,
        },
        CatalogEntry {
            id: "fig5",
            summary: "early-time degree of superradiance and memory enhancement, Dicke states",
            expensive: false,
        },
        CatalogEntry {
            id: "fig6",
            summary: "early-time surfaces over (rho_ee, |rho_eg|) for factorized states",
            expensive: false,
        },
        CatalogEntry {
            id: "fig7",
            summary: "early-time degree and enhancement surfaces for factorized states",
            expensive: false,
        },
        CatalogEntry {
            id: "fig8",
            summary: "near-Markovian study: memory surface, plateau, degree (N = 4, gamma/g = 1000)",
            expensive: false,
        },
        CatalogEntry {
            id: "fig9",
            summary: "strongly non-Markovian study: memory surface, backflow, rate maxima (gamma/g = 0.5)",
            expensive: false,
        },
        CatalogEntry {
            id: "fig10",
            summary: "strong-regime sweep over Dicke states, N <= 10: N_M, R_max, S, enhancement",
            expensive: true,
        },
        CatalogEntry {
            id: "fig11",
            summary: "strong-regime memory surfaces over (rho_ee, |rho_eg|), N = 2 and 7",
            expensive: false,
        },
        CatalogEntry {
            id: "fig12",
            summary: "strong-regime radiation surfaces over (rho_ee, |rho_eg|), N = 2 and 7",
            expensive: false,
        },
        CatalogEntry {
            id: "table1",
            summary: "closed-form characteristics of dephased Dicke states, both regime columns",
            expensive: false,
        },
        CatalogEntry {
            id: "table2",
            summary: "closed-form characteristics of factorized states, both regime columns",
            expensive: false,
        },
        CatalogEntry {
            id: "custom",
            summary: "memory + radiation study of the configured system and state",
            expensive: false,
        },
    ];
    ENTRIES
}

// ---------------------------------------------------------------------------
// Output assembly

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    /// (file name, file contents), emitted in this order.
    pub files: Vec<(String, String)>,
    pub headline: BTreeMap<String, f64>,
}

/// Scientific notation with 13 significant digits; the CSV number format.
pub fn fmt_sci(x: f64) -> String {
    format!("{x:.12e}")
}

fn csv(header: &str, rows: &[Vec<f64>]) -> String {
    let mut out = String::with_capacity(rows.len() * 64 + header.len() + 1);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            out.push_str(&fmt_sci(*v));
            first = false;
        }
        out.push('\n');
    }
    out
}

fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let ratio = hi / lo;
    (0..k)
        .map(|i| {
            if i == k - 1 {
                hi
            } else {
                lo * ratio.powf(i as f64 / (k - 1) as f64)
            }
        })
        .collect()
}

const SURFACE_HEADER: &str = "tau10 (1/g),tau21 (1/g),trace_distance (dimensionless),\
excitation_difference (atoms)";

fn surface_rows(grid: &MemoryGrid) -> Vec<Vec<f64>> {
    let k = grid.tau10s.len();
    let mut rows = Vec::new();
    for i in 0..k {
        for j in 0..k - i {
            rows.push(vec![grid.tau10s[i], grid.tau21s[j], grid.d[i][j], grid.dnex[i][j]]);
        }
    }
    rows
}

const TRAJECTORY_HEADER: &str =
    "t (1/g),n_ex (atoms),n_p (photons),emission_rate (photons per 1/g)";

fn trajectory_rows(traj: &crate::dynamics::Trajectory) -> Vec<Vec<f64>> {
    let rates = emission_rate_series(&traj.times, &traj.n_ex);
    traj.times
        .iter()
        .zip(&traj.n_ex)
        .zip(&traj.n_p)
        .zip(&rates)
        .map(|(((t, e), p), r)| vec![*t, *e, *p, *r])
        .collect()
}

fn insert_finite(map: &mut BTreeMap<String, f64>, key: &str, value: f64) {
    if value.is_finite() {
        map.insert(key.into(), value);
    }
}

// ---------------------------------------------------------------------------
// Experiment executors

fn dicke_init(n: usize, m2: i32) -> InitialState {
    InitialState::Dicke {
        j: HalfInt::from_doubled(n as i32),
        m: HalfInt::from_doubled(m2),
    }
}

fn exec_choi_error(r: &Resolved) -> Result<ExperimentOutput> {
    let gammas = [0.0, 1.0, 10.0];
    let times = log_grid(1e-3, 1.0, r.curve_points);
    let copts = ChoiOptions { long_running: r.long_running, ..Default::default() };
    let curves = gammas
        .par_iter()
        .map(|&gr| choi_error_curve(&r.sysspec_for(r.n_atoms, gr)?, &times, &copts))
        .collect::<Result<Vec<_>>>()?;
    let mut files = Vec::new();
    let mut headline = BTreeMap::new();
    for (gi, gr) in gammas.iter().enumerate() {
        let rows: Vec<Vec<f64>> = times
            .iter()
            .zip(&curves[gi])
            .map(|(t, e)| vec![*t, *e])
            .collect();
        files.push((
            format!("choi_error_gamma{gr}.csv"),
            csv("gt (dimensionless),choi_error (dimensionless)", &rows),
        ));
        // the log grid hits gt = 0.01 exactly when curve_points = 25
        let idx = times
            .iter()
            .position(|t| (t - 0.01).abs() < 1e-12)
            .unwrap_or(times.len() / 3);
        insert_finite(&mut headline, &format!("choi_error_gamma{gr}_at_0p01"), curves[gi][idx]);
    }
    Ok(ExperimentOutput { files, headline })
}

fn exec_excitation_error(r: &Resolved) -> Result<ExperimentOutput> {
    let gammas = [0.0, 1.0, 10.0];
    let times = log_grid(1e-3, 0.3, r.curve_points);
    let mut files = Vec::new();
    let mut headline = BTreeMap::new();
    for &n in &r.atoms {
        let init = dicke_init(n, n as i32);
        let curves = gammas
            .par_iter()
            .map(|&gr| -> Result<Vec<f64>> {
                let spec = r.sysspec_for(n, gr)?;
                let rho0 = build_initial(&spec, &init)?;
                times.iter().map(|&gt| excitation_error(&spec, &rho0, gt)).collect()
            })
            .collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<f64>> = times
            .iter()
            .enumerate()
            .map(|(i, t)| vec![*t, curves[0][i], curves[1][i], curves[2][i]])
            .collect();
        files.push((
            format!("excitation_error_n{n}.csv"),
            csv(
                "gt (dimensionless),error_gamma0 (atoms),error_gamma1 (atoms),\
                 error_gamma10 (atoms)",
                &rows,
            ),
        ));
        let idx = times
            .iter()
            .position(|t| (t - 0.01).abs() < 1e-9)
            .unwrap_or(times.len() / 2);
        insert_finite(&mut headline, &format!("excitation_error_n{n}_at_0p01"), curves[2][idx]);
    }
    Ok(ExperimentOutput { files, headline })
}

fn exec_dicke_early_landscape(r: &Resolved) -> Result<ExperimentOutput> {
    let mut rows = Vec::new();
    let mut headline = BTreeMap::new();
    for &n in &r.atoms {
        let j = n as f64 / 2.0;
        for m2 in (-(n as i32)..=n as i32).step_by(2) {
            let m = m2 as f64 / 2.0;
            let init = dicke_init(n, m2);
            let nm = nm_early_closed(&init)?;
            let np = np_early(&init)?;
            rows.push(vec![n as f64, j, m, nm, np]);
            if n == 4 && m2 == 0 {
                headline.insert("n_m_per_gt2_n4_m0".into(), nm);
                headline.insert("n_p_per_gt2_n4_m0".into(), np);
            }
        }
    }
    let best = rows
        .iter()
        .max_by(|a, b| a[3].partial_cmp(&b[3]).unwrap())
        .expect("non-empty atom sweep");
    headline.insert("n_m_per_gt2_peak".into(), best[3]);
    Ok(ExperimentOutput {
        files: vec![(
            "dicke_early_landscape.csv".into(),
            csv(
                "n_atoms (count),j (dimensionless),m (dimensionless),\
                 n_m_per_gt2 (dimensionless),n_p_per_gt2 (photons per gt^2)",
                &rows,
            ),
        )],
        headline,
    })
}

fn exec_dicke_early_degree(r: &Resolved) -> Result<ExperimentOutput> {
    let mut rows = Vec::new();
    let mut headline = BTreeMap::new();
    for &n in &r.atoms {
        let j = n as f64 / 2.0;
        // superradiance needs excitation: skip M = -J
        for m2 in (-(n as i32) + 2..=n as i32).step_by(2) {
            let m = m2 as f64 / 2.0;
            let init = dicke_init(n, m2);
            let s = degree_early(&init)?.expect("excited Dicke state radiates");
            let enhancement = nm_early_closed(&init)? / nm_early_independent(&init)?;
            rows.push(vec![n as f64, j, m, s, enhancement]);
            if n == 4 && m2 == 0 {
                headline.insert("degree_n4_m0".into(), s);
            }
        }
    }
    Ok(ExperimentOutput {
        files: vec![(
            "dicke_early_degree.csv".into(),
            csv(
                "n_atoms (count),j (dimensionless),m (dimensionless),\
                 degree_of_superradiance (dimensionless),memory_enhancement (dimensionless)",
                &rows,
            ),
        )],
        headline,
    })
}

/// Valid (rho_ee, |rho_eg|) surface samples: the coherence is bounded by
/// the single-atom positivity condition |rho_eg|^2 <= rho_ee (1 - rho_ee).
fn factorized_surface_points(sp: usize) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for ei in 0..sp {
        let rho_ee = ei as f64 / (sp - 1) as f64;
        let bound = (rho_ee * (1.0 - rho_ee)).sqrt();
        for ci in 0..sp {
            let rho_eg = 0.5 * ci as f64 / (sp - 1) as f64;
            if rho_eg <= bound + 1e-15 {
                pts.push((rho_ee, rho_eg.min(bound)));
            }
        }
    }
    pts
}

fn exec_factorized_early_surface(r: &Resolved) -> Result<ExperimentOutput> {
    let pts = factorized_surface_points(r.surface_points);
    let mut rows = Vec::new();
    let mut headline = BTreeMap::new();
    for &n in &r.atoms {
        let chunk = pts
            .par_iter()
            .map(|&(rho_ee, rho_eg)| -> Result<Vec<f64>> {
                let init = InitialState::FactorizedIdentical {
                    n_atoms: n,
                    rho_ee,
                    rho_eg: C64::new(rho_eg, 0.0),
                };
                Ok(vec![n as f64, rho_ee, rho_eg, np_early(&init)?, nm_early_closed(&init)?])
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(best) = chunk.iter().max_by(|a, b| a[4].partial_cmp(&b[4]).unwrap()) {
            insert_finite(&mut headline, &format!("n_m_per_gt2_peak_n{n}"), best[4]);
        }
        rows.extend(chunk);
    }
    Ok(ExperimentOutput {
        files: vec![(
            "factorized_early_surface.csv".into(),
            csv(
                "n_atoms (count),rho_ee (population),rho_eg_abs (coherence),\
                 n_p_per_gt2 (photons per gt^2),n_m_per_gt2 (dimensionless)",
                &rows,
            ),
        )],
        headline,
    })
}

fn exec_factorized_early_degree(r: &Resolved) -> Result<ExperimentOutput> {
    let pts: Vec<(f64, f64)> = factorized_surface_points(r.surface_points)
        .into_iter()
        .filter(|&(rho_ee, _)| rho_ee > 0.0)
        .collect();
    let mut rows = Vec::new();
    let mut headline = BTreeMap::new();
    for &n in &r.atoms {
        let chunk = pts
            .par_iter()
            .map(|&(rho_ee, rho_eg)| -> Result<Vec<f64>> {
                let init = InitialState::FactorizedIdentical {
                    n_atoms: n,
                    rho_ee,
                    rho_eg: C64::new(rho_eg, 0.0),
                };
                let s = degree_early(&init)?.expect("rho_ee > 0 radiates");
                let enhancement = nm_early_closed(&init)? / nm_early_independent(&init)?;
                Ok(vec![n as f64, rho_ee, rho_eg, s, enhancement])
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(best) = chunk.iter().max_by(|a, b| a[3].partial_cmp(&b[3]).unwrap()) {
            insert_finite(&mut headline, &format!("degree_peak_n{n}"), best[3]);
        }
        rows.extend(chunk);
    }
    Ok(ExperimentOutput {
        files: vec![(
            "factorized_early_degree.csv".into(),
            csv(
                "n_atoms (count),rho_ee (population),rho_eg_abs (coherence),\
                 degree_of_superradiance (dimensionless),memory_enhancement (dimensionless)",
                &rows,
            ),
        )],
        headline,
    })
}

fn memory_study_files(
    report: &MemoryReport,
    common: &MemoryGrid,
    independent: &MemoryGrid,
    traj: &crate::dynamics::Trajectory,
) -> (Vec<(String, String)>, BTreeMap<String, f64>) {
    let files = vec![
        ("memory_surface.csv".into(), csv(SURFACE_HEADER, &surface_rows(common))),
        (
            "memory_surface_independent.csv".into(),
            csv(SURFACE_HEADER, &surface_rows(independent)),
        ),
        ("trajectory.csv".into(), csv(TRAJECTORY_HEADER, &trajectory_rows(traj))),
    ];
    let mut headline = BTreeMap::new();
    headline.insert("n_m".into(), report.n_m);
    headline.insert("n_m_ind".into(), report.n_m_ind);
    headline.insert("enhancement".into(), report.enhancement);
    headline.insert("manifestation_max".into(), report.manifestation_max);
    headline.insert("argmax_tau10".into(), report.argmax.0);
    headline.insert("argmax_tau21".into(), report.argmax.1);
    (files, headline)
}

fn exec_near_markovian_study(r: &Resolved) -> Result<ExperimentOutput> {
    let spec = r.sysspec()?;
    let init = r.init()?;
    let (report, common, independent, traj) =
        memory_measure_init(&spec, &init, r.t_window, &r.memory_options())?;
    let (files, mut headline) = memory_study_files(&report, &common, &independent, &traj);
    let plate = plateau_extract(&traj, self_plateau(r))?;
    insert_finite(&mut headline, "n_p_steady", plate.n_p_steady);
    insert_finite(&mut headline, "r_steady", plate.r_steady);
    headline.insert("plateau_drift".into(), plate.drift as u8 as f64);
    let near = degree_near_markovian(&spec, &init, self_plateau(r))?;
    insert_finite(&mut headline, "degree_of_superradiance", near.s);
    if let Some(dnex) = steady_manifestation(&common, 10.0 / r.gamma_over_g) {
        insert_finite(&mut headline, "manifestation_steady", dnex);
    }
    Ok(ExperimentOutput { files, headline })
}

fn self_plateau(r: &Resolved) -> (f64, f64) {
    (r.plateau[0], r.plateau[1])
}

fn exec_strong_study(r: &Resolved) -> Result<ExperimentOutput> {
    let spec = r.sysspec()?;
    let init = r.init()?;
    let (report, common, independent, traj) =
        memory_measure_init(&spec, &init, r.t_window, &r.memory_options())?;
    let (files, mut headline) = memory_study_files(&report, &common, &independent, &traj);
    let strong = degree_strong(&spec, &init, r.t_window)?;
    if let Some(s) = strong.s {
        insert_finite(&mut headline, "degree_of_superradiance", s);
    }
    insert_finite(&mut headline, "r_max", strong.r_max);
    insert_finite(&mut headline, "t_r_max", strong.t_r_max);
    insert_finite(&mut headline, "r_max_ind", strong.r_max_ind);
    insert_finite(&mut headline, "n_p_max", strong.n_p_max);
    insert_finite(&mut headline, "t_n_p_max", strong.t_n_p_max);
    headline.insert("backflow".into(), strong.backflow as u8 as f64);
    Ok(ExperimentOutput { files, headline })
}

fn exec_strong_dicke_sweep(r: &Resolved) -> Result<ExperimentOutput> {
    let mut pairs = Vec::new();
    for &n in &r.atoms {
        for m2 in (-(n as i32) + 2..=n as i32).step_by(2) {
            pairs.push((n, m2));
        }
    }
    let rows = pairs
        .par_iter()
        .map(|&(n, m2)| -> Result<Vec<f64>> {
            let spec = r.sysspec_for(n, r.gamma_over_g)?;
            let init = dicke_init(n, m2);
            let (report, _, _, _) =
                memory_measure_init(&spec, &init, r.t_window, &r.memory_options())?;
            let strong = degree_strong(&spec, &init, r.t_window)?;
            Ok(vec![
                n as f64,
                n as f64 / 2.0,
                m2 as f64 / 2.0,
                report.n_m,
                report.n_m_ind,
                report.enhancement,
                strong.r_max,
                strong.r_max_ind,
                strong.s.unwrap_or(f64::NAN),
                strong.n_p_max,
                strong.backflow as u8 as f64,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut headline = BTreeMap::new();
    if let Some(best) = rows.iter().max_by(|a, b| a[3].partial_cmp(&b[3]).unwrap()) {
        headline.insert("n_m_peak".into(), best[3]);
        headline.insert("n_m_peak_n_atoms".into(), best[0]);
        headline.insert("n_m_peak_m".into(), best[2]);
    }
    Ok(ExperimentOutput {
        files: vec![(
            "strong_dicke_sweep.csv".into(),
            csv(
                "n_atoms (count),j (dimensionless),m (dimensionless),n_m (dimensionless),\
                 n_m_ind (dimensionless),enhancement (dimensionless),r_max (photons per 1/g),\
                 r_max_ind (photons per 1/g),degree_of_superradiance (dimensionless),\
                 n_p_max (photons),backflow (flag)",
                &rows,
            ),
        )],
        headline,
    })
}

fn exec_factorized_strong_memory(r: &Resolved) -> Result<ExperimentOutput> {
    let pts = factorized_surface_points(r.surface_points);
    let mut rows = Vec::new();
    let mut headline = BTreeMap::new();
    for &n in &r.atoms {
        let chunk = pts
            .par_iter()
            .map(|&(rho_ee, rho_eg)| -> Result<Vec<f64>> {
                let spec = r.sysspec_for(n, r.gamma_over_g)?;
                let init = InitialState::FactorizedIdentical {
                    n_atoms: n,
                    rho_ee,
                    rho_eg: C64::new(rho_eg, 0.0),
                };
                let (report, _, _, _) =
                    memory_measure_init(&spec, &init, r.t_window, &r.memory_options())?;
                Ok(vec![n as f64, rho_ee, rho_eg, report.n_m, report.n_m_ind, report.enhancement])
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(best) = chunk.iter().max_by(|a, b| a[3].partial_cmp(&b[3]).unwrap()) {
            insert_finite(&mut headline, &format!("n_m_peak_n{n}"), best[3]);
        }
        rows.extend(chunk);
    }
    Ok(ExperimentOutput {
        files: vec![(
            "factorized_strong_memory.csv".into(),
            csv(
                "n_atoms (count),rho_ee (population),rho_eg_abs (coherence),\
                 n_m (dimensionless),n_m_ind (dimensionless),enhancement (dimensionless)",
                &rows,
            ),
        )],
        headline,
    })
}

fn exec_factorized_strong_radiation(r: &Resolved) -> Result<ExperimentOutput> {
    let pts: Vec<(f64, f64)> = factorized_surface_points(r.surface_points)
        .into_iter()
        .filter(|&(rho_ee, _)| rho_ee > 0.0)
        .collect();
    let mut rows = Vec::new();
    let mut headline = BTreeMap::new();
    for &n in &r.atoms {
        let chunk = pts
            .par_iter()
            .map(|&(rho_ee, rho_eg)| -> Result<Vec<f64>> {
                let spec = r.sysspec_for(n, r.gamma_over_g)?;
                let init = InitialState::FactorizedIdentical {
                    n_atoms: n,
                    rho_ee,
                    rho_eg: C64::new(rho_eg, 0.0),
                };
                let strong = degree_strong(&spec, &init, r.t_window)?;
                Ok(vec![
                    n as f64,
                    rho_ee,
                    rho_eg,
                    strong.s.unwrap_or(f64::NAN),
                    strong.r_max,
                    strong.r_max_ind,
                    strong.n_p_max,
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(best) = chunk
            .iter()
            .filter(|row| row[3].is_finite())
            .max_by(|a, b| a[3].partial_cmp(&b[3]).unwrap())
        {
            insert_finite(&mut headline, &format!("degree_peak_n{n}"), best[3]);
        }
        rows.extend(chunk);
    }
    Ok(ExperimentOutput {
        files: vec![(
            "factorized_strong_radiation.csv".into(),
            csv(
                "n_atoms (count),rho_ee (population),rho_eg_abs (coherence),\
                 degree_of_superradiance (dimensionless),r_max (photons per 1/g),\
                 r_max_ind (photons per 1/g),n_p_max (photons)",
                &rows,
            ),
        )],
        headline,
    })
}

fn table_row_values(init: &InitialState) -> Result<[f64; 10]> {
    let early = table_evaluator(init, TableColumn::EarlyTime)?;
    let markov = table_evaluator(init, TableColumn::EarlyStageMarkov)?;
    Ok([
        early.n_p,
        early.n_p_ind,
        early.n_m,
        early.n_m_ind,
        early.s.unwrap_or(f64::NAN),
        early.enhancement.unwrap_or(f64::NAN),
        markov.n_p,
        markov.n_p_ind,
        markov.n_m,
        markov.n_m_ind,
    ])
}

const TABLE_VALUE_COLUMNS: &str = "n_p_early (photons per gt^2),\
n_p_ind_early (photons per gt^2),n_m_early (dimensionless),\
n_m_ind_early (dimensionless),degree_of_superradiance (dimensionless),\
memory_enhancement (dimensionless),n_p_markov (photons per (g tau_E)^2),\
n_p_ind_markov (photons per (g tau_E)^2),n_m_markov (dimensionless),\
n_m_ind_markov (dimensionless)";

fn exec_table_dephased(r: &Resolved) -> Result<ExperimentOutput> {
    let j = r.state.j;
    if j < 1.0 {
        return Err(Error::Config(format!(
            "the dephased characteristics table needs j >= 1, got {j}"
        )));
    }
    let jh = HalfInt::try_from_f64(j)?;
    let mut rows = Vec::new();
    for dm in [1.0, 2.0] {
        let m = HalfInt::try_from_f64(j - dm)?;
        for lambda in [1.0, 0.5, 0.0] {
            let init = InitialState::DephasedDicke { j: jh, m, lambda };
            let vals = table_row_values(&init)?;
            let mut row = vec![j, j - dm, lambda];
            row.extend_from_slice(&vals);
            rows.push(row);
        }
    }
    let mut headline = BTreeMap::new();
    headline.insert("rows".into(), rows.len() as f64);
    Ok(ExperimentOutput {
        files: vec![(
            "dephased_dicke_characteristics.csv".into(),
            csv(
                &format!(
                    "j (dimensionless),m (dimensionless),lambda (dimensionless),{TABLE_VALUE_COLUMNS}"
                ),
                &rows,
            ),
        )],
        headline,
    })
}

fn exec_table_factorized(r: &Resolved) -> Result<ExperimentOutput> {
    let rho_ee = r.state.rho_ee;
    let bound = (rho_ee * (1.0 - rho_ee)).sqrt();
    let mut rows = Vec::new();
    for &n in &r.atoms {
        for rho_eg in [bound, 0.5 * bound, 0.0] {
            let init = InitialState::FactorizedIdentical {
                n_atoms: n,
                rho_ee,
                rho_eg: C64::new(rho_eg, 0.0),
            };
            let vals = table_row_values(&init)?;
            let mut row = vec![n as f64, rho_ee, rho_eg];
            row.extend_from_slice(&vals);
            rows.push(row);
        }
    }
    let mut headline = BTreeMap::new();
    headline.insert("rows".into(), rows.len() as f64);
    Ok(ExperimentOutput {
        files: vec![(
            "factorized_characteristics.csv".into(),
            csv(
                &format!(
                    "n_atoms (count),rho_ee (population),rho_eg_abs (coherence),{TABLE_VALUE_COLUMNS}"
                ),
                &rows,
            ),
        )],
        headline,
    })
}

/// Memory report plus the regime-matched radiation report; the shared body
/// of the custom experiment and the `measure` subcommand.
pub struct MeasureOutcome {
    pub report: MemoryReport,
    pub radiation: RadiationReport,
    pub common: MemoryGrid,
    pub independent: MemoryGrid,
    pub trajectory: crate::dynamics::Trajectory,
}

pub fn measure_state(
    spec: &SystemSpec,
    init: &InitialState,
    t_window: f64,
    opts: &MemoryOptions,
    plateau: Option<(f64, f64)>,
) -> Result<MeasureOutcome> {
    let (report, common, independent, trajectory) =
        memory_measure_init(spec, init, t_window, opts)?;
    let radiation = if np_early_independent(init)? <= 1e-300 {
        // nothing radiates: all observables vanish identically
        RadiationReport {
            n_p: 0.0,
            n_p_ind: 0.0,
            s: None,
            r_max: 0.0,
            regime: report.regime,
            f_values: vec![],
        }
    } else {
        match report.regime {
            Regime::EarlyTime => radiation_early(init, t_window)?,
            Regime::NearMarkovian => {
                let window =
                    plateau.unwrap_or_else(|| default_plateau_window(spec.gamma_over_g()));
                radiation_near_markovian(spec, init, window)?
            }
            Regime::StronglyNonMarkovian => radiation_strong(spec, init, t_window)?,
        }
    };
    Ok(MeasureOutcome { report, radiation, common, independent, trajectory })
}

fn exec_custom(r: &Resolved) -> Result<ExperimentOutput> {
    let spec = r.sysspec()?;
    let init = r.init()?;
    let outcome = measure_state(&spec, &init, r.t_window, &r.memory_options(), Some(self_plateau(r)))?;
    let (files, mut headline) = memory_study_files(
        &outcome.report,
        &outcome.common,
        &outcome.independent,
        &outcome.trajectory,
    );
    insert_finite(&mut headline, "n_p", outcome.radiation.n_p);
    insert_finite(&mut headline, "n_p_ind", outcome.radiation.n_p_ind);
    insert_finite(&mut headline, "r_max", outcome.radiation.r_max);
    if let Some(s) = outcome.radiation.s {
        insert_finite(&mut headline, "degree_of_superradiance", s);
    }
    Ok(ExperimentOutput { files, headline })
}

pub fn execute(r: &Resolved) -> Result<ExperimentOutput> {
    match r.experiment.as_str() {
        "fig2" => exec_choi_error(r),
        "fig3" => exec_excitation_error(r),
        "fig4" => exec_dicke_early_landscape(r),
        "fig5" => exec_dicke_early_degree(r),
        "fig6" => exec_factorized_early_surface(r),
        "fig7" => exec_factorized_early_degree(r),
        "fig8" => exec_near_markovian_study(r),
        "fig9" => exec_strong_study(r),
        "fig10" => exec_strong_dicke_sweep(r),
        "fig11" => exec_factorized_strong_memory(r),
        "fig12" => exec_factorized_strong_radiation(r),
        "table1" => exec_table_dephased(r),
        "table2" => exec_table_factorized(r),
        "custom" => exec_custom(r),
        other => Err(Error::Config(format!("unknown experiment id '{other}'"))),
    }
}

// ---------------------------------------------------------------------------
// Hashing, caching, persistence

/// First 16 hex characters of the SHA-256 over the canonical (sorted-key
/// JSON) serialization of the resolved config.
pub fn canonical_hash(resolved: &Resolved) -> Result<String> {
    let value = serde_json::to_value(resolved)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    let canon = serde_json::to_string(&value)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    let digest = Sha256::digest(canon.as_bytes());
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultManifest {
    pub config_hash: String,
    pub version: String,
    pub experiment: String,
    pub wall_seconds: f64,
    pub files: Vec<String>,
    pub headline: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_override: Option<PathBuf>,
    pub force: bool,
    /// Worker threads; 0 keeps the config value (whose 0 means all cores).
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub experiment: String,
    pub hash: String,
    pub dir: PathBuf,
    pub cached: bool,
    pub files: Vec<String>,
    pub wall_seconds: f64,
    pub headline: BTreeMap<String, f64>,
}

/// Loads a config from a TOML file, or synthesizes the default config when
/// the argument is a catalog id instead of a path.
pub fn load_config(path_or_id: &str) -> Result<ExperimentConfig> {
    let path = Path::new(path_or_id);
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        return toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())));
    }
    if catalog().iter().any(|c| c.id == path_or_id) {
        return Ok(ExperimentConfig { experiment: path_or_id.into(), ..Default::default() });
    }
    Err(Error::Config(format!(
        "'{path_or_id}' is neither a config file nor a known experiment id; \
         see the `list` subcommand"
    )))
}

fn out_root(opts: &RunOptions, config: &ExperimentConfig) -> PathBuf {
    if let Some(dir) = &opts.out_override {
        return dir.clone();
    }
    if let Ok(dir) = std::env::var(CACHE_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(config.out_dir.clone().unwrap_or_else(|| DEFAULT_OUT.into()))
}

fn cache_hit(dir: &Path, hash: &str) -> Option<ResultManifest> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).ok()?;
    let manifest: ResultManifest = serde_json::from_str(&text).ok()?;
    if manifest.config_hash != hash {
        return None;
    }
    manifest
        .files
        .iter()
        .all(|f| dir.join(f).is_file())
        .then_some(manifest)
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Usage(format!("worker pool: {e}")))?;
    pool.install(f)
}

/// Parses, resolves, executes, and persists one experiment. Re-running with
/// an unchanged config and intact cache directory is a no-op.
pub fn run_experiment(path_or_id: &str, opts: &RunOptions) -> Result<RunSummary> {
    let config = load_config(path_or_id)?;
    let resolved = resolve(&config)?;
    let hash = canonical_hash(&resolved)?;
    let dir = out_root(opts, &config).join(&hash);

    if !opts.force {
        if let Some(manifest) = cache_hit(&dir, &hash) {
            return Ok(RunSummary {
                experiment: resolved.experiment,
                hash,
                dir,
                cached: true,
                files: manifest.files,
                wall_seconds: manifest.wall_seconds,
                headline: manifest.headline,
            });
        }
    }

    let jobs = opts.jobs.unwrap_or(resolved.jobs);
    let started = Instant::now();
    let output = with_pool(jobs, || execute(&resolved)).map_err(|e| match e {
        Error::Capacity(msg) => Error::Capacity(format!(
            "{msg}; reduce n_atoms or grid sizes, or set run.long_running = true"
        )),
        other => other,
    })?;
    let wall_seconds = started.elapsed().as_secs_f64();

    std::fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    for (name, contents) in &output.files {
        std::fs::write(dir.join(name), contents)?;
        files.push(name.clone());
    }
    let manifest = ResultManifest {
        config_hash: hash.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: resolved.experiment.clone(),
        wall_seconds,
        files: files.clone(),
        headline: output.headline.clone(),
    };
    let manifest_text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    std::fs::write(dir.join("manifest.json"), manifest_text)?;

    Ok(RunSummary {
        experiment: resolved.experiment,
        hash,
        dir,
        cached: false,
        files,
        wall_seconds,
        headline: output.headline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> ExperimentConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<ExperimentConfig>(
            "experiment = \"fig4\"\nbanana = 3\n",
        );
        assert!(err.is_err());
        let err = toml::from_str::<ExperimentConfig>(
            "experiment = \"fig4\"\n[grid]\npoints = 11\nextra = 1\n",
        );
        assert!(err.is_err());
    }

    #[test]
    fn hash_ignores_key_order_and_materialized_defaults() {
        let a = config("experiment = \"fig9\"\n[grid]\npoints = 41\nrefine = true\n");
        let b = config("experiment = \"fig9\"\n[grid]\nrefine = true\npoints = 41\n");
        let c = config("experiment = \"fig9\"\n");
        let ha = canonical_hash(&resolve(&a).unwrap()).unwrap();
        let hb = canonical_hash(&resolve(&b).unwrap()).unwrap();
        let hc = canonical_hash(&resolve(&c).unwrap()).unwrap();
        assert_eq!(ha, hb);
        // fig9 defaults are exactly points = 41, refine = true
        assert_eq!(ha, hc);
        assert_eq!(ha.len(), 16);
        assert!(ha.chars().all(|ch| ch.is_ascii_hexdigit()));

        let d = config("experiment = \"fig9\"\n[grid]\npoints = 17\n");
        assert_ne!(canonical_hash(&resolve(&d).unwrap()).unwrap(), ha);
    }

    #[test]
    fn resolve_rejects_bad_values() {
        assert!(resolve(&config("experiment = \"fig99\"\n")).is_err());
        assert!(resolve(&config(
            "experiment = \"custom\"\n[system]\ntopology = \"ring\"\n"
        ))
        .is_err());
        assert!(resolve(&config(
            "experiment = \"custom\"\n[state]\nkind = \"squeezed\"\n"
        ))
        .is_err());
        assert!(resolve(&config(
            "experiment = \"custom\"\n[state]\nkind = \"factorized\"\nrho_ee = 1.4\n"
        ))
        .is_err());
        assert!(resolve(&config(
            "experiment = \"custom\"\n[window]\nt_window = -2.0\n"
        ))
        .is_err());
    }

    #[test]
    fn catalog_ids_resolve() {
        for entry in catalog() {
            let cfg = ExperimentConfig { experiment: entry.id.into(), ..Default::default() };
            let resolved = resolve(&cfg).unwrap();
            assert_eq!(resolved.experiment, entry.id);
            canonical_hash(&resolved).unwrap();
        }
    }

    #[test]
    fn closed_form_tables_run_instantly_and_hold_the_spot_values() {
        let r = resolve(&config("experiment = \"fig4\"\n")).unwrap();
        let out = execute(&r).unwrap();
        assert_eq!(out.headline["n_m_per_gt2_n4_m0"], 3.0);
        assert_eq!(out.headline["n_p_per_gt2_n4_m0"], 6.0);
        let (name, body) = &out.files[0];
        assert_eq!(name, "dicke_early_landscape.csv");
        // 15 atom numbers, N+1 states each
        let rows: Vec<&str> = body.lines().collect();
        assert!(rows[0].contains("(dimensionless)"));
        assert_eq!(rows.len() - 1, (1..=15usize).map(|n| n + 1).sum::<usize>());

        let r5 = resolve(&config("experiment = \"fig5\"\n")).unwrap();
        let out5 = execute(&r5).unwrap();
        assert_eq!(out5.headline["degree_n4_m0"], 3.0);
    }

    #[test]
    fn dephased_table_has_six_rows_and_exact_scalings() {
        let r = resolve(&config("experiment = \"table1\"\n")).unwrap();
        let out = execute(&r).unwrap();
        let (name, body) = &out.files[0];
        assert_eq!(name, "dephased_dicke_characteristics.csv");
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines.len(), 7, "header plus six rows");
        for line in &lines[1..] {
            let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            // markov columns are the early ones scaled by 4 (photons)
            // and 16 (memory measures)
            assert!((vals[9] - 4.0 * vals[3]).abs() < 1e-12);
            assert!((vals[10] - 4.0 * vals[4]).abs() < 1e-12);
            assert!((vals[11] - 16.0 * vals[5]).abs() < 1e-12);
            assert!((vals[12] - 16.0 * vals[6]).abs() < 1e-12);
        }
    }

    #[test]
    fn factorized_table_rows_cover_the_coherence_range() {
        let r = resolve(&config("experiment = \"table2\"\n")).unwrap();
        let out = execute(&r).unwrap();
        let body = &out.files[0].1;
        let lines: Vec<&str> = body.lines().collect();
        assert_eq!(lines.len(), 7);
        let first: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
        // pure row at rho_ee = 0.5: S = 1 + (N-1) |rho_eg|^2 / rho_ee
        assert!((first[7] - (1.0 + 1.0 * 0.25 / 0.5)).abs() < 1e-12);
    }

    #[test]
    fn csv_numbers_use_scientific_notation() {
        assert_eq!(fmt_sci(3.0), "3.000000000000e0");
        assert_eq!(fmt_sci(-4.5e-5), "-4.500000000000e-5");
        let r = resolve(&config("experiment = \"fig4\"\n")).unwrap();
        let out = execute(&r).unwrap();
        let line = out.files[0].1.lines().nth(1).unwrap();
        for cell in line.split(',') {
            assert!(cell.contains('e'), "cell {cell} not scientific");
        }
    }

    #[test]
    fn surface_points_respect_the_positivity_bound() {
        for (rho_ee, rho_eg) in factorized_surface_points(21) {
            assert!(rho_eg * rho_eg <= rho_ee * (1.0 - rho_ee) + 1e-12);
        }
        // the fully mixed column reaches the maximal coherence 0.5
        assert!(factorized_surface_points(21)
            .iter()
            .any(|&(e, c)| e == 0.5 && c == 0.5));
    }

    #[test]
    fn log_grid_hits_both_ends_and_the_headline_time() {
        let g = log_grid(1e-3, 1.0, 25);
        assert_eq!(g[0], 1e-3);
        assert_eq!(g[24], 1.0);
        assert!(g.iter().any(|t| (t - 0.01).abs() < 1e-12));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
