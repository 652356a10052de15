//! Lossy-cavity limit: the memory measure saturates on a plateau and the
//! steady emission rate equals the steady photon number.

use dicke_memory::memory::{memory_measure_init, plateau_extract, MemoryOptions};
use dicke_memory::model::{HalfInt, InitialState, SystemSpec};
use dicke_memory::superradiance::degree_near_markovian;

fn main() -> dicke_memory::Result<()> {
    let gr = 1000.0;
    let spec = SystemSpec::new(4, 1.0, gr)?;
    let init = InitialState::Dicke {
        j: HalfInt::from_doubled(4),
        m: HalfInt::from_doubled(0),
    };

    let window = 100.0 / gr;
    let plateau = (50.0 / gr, 200.0 / gr);
    let opts = MemoryOptions {
        grid_points: 41,
        a_duration: Some(plateau.1),
        ..Default::default()
    };
    let (report, common, _ind, traj) = memory_measure_init(&spec, &init, window, &opts)?;
    let plate = plateau_extract(&traj, plateau)?;
    let near = degree_near_markovian(&spec, &init, plateau)?;

    println!("gamma/g = {gr}, N = 4, |2, 0>");
    println!("N_M                  = {:.6e}", report.n_m);
    println!("argmax (tau10,tau21) = ({:.5}, {:.5})  [~20 photon lifetimes]", common.argmax.0, common.argmax.1);
    println!("N_P steady           = {:.6e} (drift: {})", plate.n_p_steady, plate.drift);
    println!("R steady             = {:.6e} (equals N_P steady)", plate.r_steady);
    println!("degree of superradiance S = {:.4}", near.s);

    // both saturate at fixed multiples of their early-time coefficients
    let early_nm = dicke_memory::memory::nm_early_closed(&init)?;
    let early_np = dicke_memory::superradiance::np_early(&init)?;
    println!(
        "\nsaturation: N_M / (16 nm (g/gamma)^2) = {:.4},  N_P / (4 np (g/gamma)^2) = {:.4}",
        report.n_m / (16.0 * early_nm / (gr * gr)),
        plate.n_p_steady / (4.0 * early_np / (gr * gr)),
    );
    Ok(())
}
