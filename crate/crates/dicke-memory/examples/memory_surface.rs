//! Trace-distance memory surface over the (tau10, tau21) triangle for a
//! fully excited pair, collective cavity vs independent cavities.

use dicke_memory::memory::{memory_measure_init, MemoryOptions};
use dicke_memory::model::{HalfInt, InitialState, SystemSpec};

fn main() -> dicke_memory::Result<()> {
    let spec = SystemSpec::new(2, 1.0, 0.5)?;
    let init = InitialState::Dicke {
        j: HalfInt::from_doubled(2),
        m: HalfInt::from_doubled(2),
    };
    let opts = MemoryOptions { grid_points: 13, ..Default::default() };
    let window = 8.0;
    let (report, common, independent, _traj) =
        memory_measure_init(&spec, &init, window, &opts)?;

    println!("window = {window} (gt), grid {0} x {0}", common.tau10s.len());
    println!("N_M           = {:.6}  at (tau10, tau21) = {:?}", report.n_m, report.argmax);
    println!("N_M (indep.)  = {:.6}  at (tau10, tau21) = {:?}", report.n_m_ind, report.argmax_ind);
    println!("enhancement   = {:.4}", report.enhancement);
    println!("manifestation = {:.6} (largest |excitation difference|)", report.manifestation_max);

    // coarse picture of the collective surface; dots mark tau21 > window - tau10
    println!("\nD(tau10, tau21) * 1e2:");
    print!("{:>7}", "");
    for t10 in &common.tau10s {
        print!("{t10:>7.2}");
    }
    println!();
    for (j, t21) in common.tau21s.iter().enumerate() {
        print!("{t21:>7.2}");
        for i in 0..common.tau10s.len() {
            let d = common.d[i][j];
            if d.is_nan() {
                print!("{:>7}", ".");
            } else {
                print!("{:>7.3}", 100.0 * d);
            }
        }
        println!();
    }
    let _ = independent;
    Ok(())
}
