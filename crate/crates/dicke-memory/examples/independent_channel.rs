//! Independent-cavity reference dynamics as a tensor power of one
//! atom-cavity channel, checked against the full joint generator.

use dicke_memory::dynamics::{
    apply_channel_power, evolve_generator, single_pair_channel, IntegratorConfig,
};
use dicke_memory::linalg::{tensor_product, trace_distance, C64, ComplexMatrix, DensityMatrix};
use dicke_memory::model::{build_initial, InitialState, Liouvillian, SystemSpec, Topology};

fn main() -> dicke_memory::Result<()> {
    let gr = 0.8;
    let spec = SystemSpec::new(2, 1.0, gr)?.with_topology(Topology::IndependentCavities);
    let init = InitialState::FactorizedIdentical {
        n_atoms: 2,
        rho_ee: 0.55,
        rho_eg: C64::new(0.2, 0.1),
    };
    let rho0 = build_initial(&spec, &init)?;

    let duration = 1.3;
    let cfg = IntegratorConfig::default();

    // route 1: solve one atom + one cavity, take the N-th tensor power
    let phi = single_pair_channel(gr, duration, &cfg)?;
    let via_channel = apply_channel_power(&phi, &rho0)?;

    // route 2: the joint atoms x cavities generator, then trace the cavities
    let gen = Liouvillian::independent_full(&spec)?;
    let mut vac = ComplexMatrix::zeros(2, 2);
    vac.set(0, 0, C64::new(1.0, 0.0));
    let joint = tensor_product(&tensor_product(rho0.matrix(), &vac)?, &vac)?;
    let joint0 = DensityMatrix::new(joint, vec![2, 2, 2, 2])?;
    let mut cfg_p = cfg.clone();
    cfg_p.probe_times = vec![duration];
    let traj = evolve_generator(&gen, &joint0, duration, &cfg_p, gr, &[0, 1])?;
    let via_joint = &traj.probes[0].atoms;

    let d = trace_distance(&via_channel, via_joint);
    println!("gamma/g = {gr}, duration {duration} (gt)");
    println!("trace distance between the two routes: {d:.2e}");
    println!(
        "channel route N_ex = {:.6}, joint route N_ex = {:.6}",
        expect_nex(&via_channel),
        expect_nex(via_joint),
    );
    Ok(())
}

// excited level sits at index 0, so set bits count ground atoms
fn expect_nex(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    let n = rho.dims().len() as u32;
    let mut total = 0.0;
    for idx in 0..m.rows() {
        let ground = (idx as u32).count_ones();
        total += (n - ground) as f64 * m.get(idx, idx).re;
    }
    total
}
