//! Closed-form early-time landscape for Dicke registers, cross-checked
//! against the integrator at small gt.

use dicke_memory::dynamics::{evolve_symmetric, IntegratorConfig};
use dicke_memory::memory::{nm_early_closed, nm_early_independent};
use dicke_memory::model::{ladder_density, HalfInt, InitialState, SystemSpec};
use dicke_memory::superradiance::{degree_early, np_early, np_early_independent};

fn main() -> dicke_memory::Result<()> {
    let n = 4;
    println!("N = {n} Dicke states |J, M>, leading coefficients per (gt)^2");
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "M", "N_P", "N_P_ind", "N_M", "N_M_ind", "S"
    );
    for m2 in (-(n as i32)..=n as i32).step_by(2) {
        let init = InitialState::Dicke {
            j: HalfInt::from_doubled(n as i32),
            m: HalfInt::from_doubled(m2),
        };
        let np = np_early(&init)?;
        let np_ind = np_early_independent(&init)?;
        let nm = nm_early_closed(&init)?;
        let nm_ind = nm_early_independent(&init)?;
        let s = degree_early(&init)?;
        println!(
            "{:>6} {np:>10.3} {np_ind:>10.3} {nm:>10.3} {nm_ind:>10.3} {:>8}",
            m2 as f64 / 2.0,
            s.map_or("-".into(), |v| format!("{v:.3}")),
        );
    }

    // numeric check: the photon number at gt = 1e-3 should match np * (gt)^2
    let gt = 1e-3;
    let init = InitialState::Dicke {
        j: HalfInt::from_doubled(n as i32),
        m: HalfInt::from_doubled(0),
    };
    let spec = SystemSpec::new(n, 1.0, 0.0)?;
    let cfg = IntegratorConfig::default().with_probes(&[gt]);
    let traj = evolve_symmetric(&spec, &ladder_density(&init)?, gt, &cfg)?;
    let coeff = traj.final_n_p() / (gt * gt);
    println!(
        "\nintegrator at gt = {gt}: N_p/(gt)^2 = {coeff:.6} (closed form {:.6})",
        np_early(&init)?
    );
    Ok(())
}
