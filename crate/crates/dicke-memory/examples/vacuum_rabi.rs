//! One excited atom exchanging a quantum with a lossy cavity.

use dicke_memory::dynamics::{evolve_common, IntegratorConfig, Regime};
use dicke_memory::model::{InitialState, SystemSpec};

fn main() -> dicke_memory::Result<()> {
    for gamma in [0.0, 0.5] {
        let spec = SystemSpec::new(1, 1.0, gamma)?;
        let init = InitialState::Dicke {
            j: dicke_memory::model::HalfInt::from_doubled(1),
            m: dicke_memory::model::HalfInt::from_doubled(1),
        };
        let rho = dicke_memory::model::build_initial(&spec, &init)?;

        let horizon = 3.0 * std::f64::consts::PI;
        let probes: Vec<f64> = (0..=12).map(|k| horizon * k as f64 / 12.0).collect();
        let cfg = IntegratorConfig::default().with_probes(&probes);
        let traj = evolve_common(&spec, &rho, horizon, &cfg)?;

        println!(
            "gamma/g = {gamma}  ({})",
            Regime::classify(gamma, horizon).label()
        );
        println!("{:>8} {:>10} {:>10}", "gt", "N_ex", "N_p");
        for t in &probes {
            let (n_ex, n_p) = traj.sample(*t);
            println!("{t:8.3} {n_ex:10.6} {n_p:10.6}");
        }
        // the quantum flows back: N_ex recovers after the first collapse
        let (bottom, _) = traj.sample(std::f64::consts::PI / 2.0);
        let (revived, _) = traj.sample(std::f64::consts::PI);
        println!("backflow: N_ex {bottom:.4} -> {revived:.4}\n");
    }
    Ok(())
}
