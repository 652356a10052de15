//! Spin-sector decomposition of permutation-invariant atomic states.
//!
//! Any operator commuting with all atom permutations splits over total-spin
//! sectors as a direct sum of blocks tensored with multiplicity identities.
//! For identical product states rho_1^(x)N the blocks follow from a spin
//! addition recursion, one atom at a time, and every collective quantity
//! (trace norms, excitation, common-cavity dynamics) reduces to per-sector
//! work on matrices of dimension 2J+1 instead of 2^N.
//!
//! Sector bases use the ladder convention: index k runs from M = J (k = 0)
//! down to M = -J. A sector with doubled spin j2 behaves exactly like the
//! maximal ladder of j2 atoms, so the existing ladder operators apply.

use crate::linalg::{trace_norm, ComplexMatrix, C64};
use crate::model::binomial;
use crate::{Error, Result};

/// One total-spin sector of a permutation-invariant operator.
#[derive(Debug, Clone)]
pub struct SpinBlock {
    /// Doubled sector spin, so the block dimension is j2 + 1.
    pub j2: i32,
    /// Number of identical copies of this block in the full space.
    pub multiplicity: f64,
    /// The (j2+1) x (j2+1) block; its trace times the multiplicity is the
    /// sector weight.
    pub op: ComplexMatrix,
}

/// A permutation-invariant operator as its sector blocks, descending in J.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    pub n_atoms: usize,
    pub blocks: Vec<SpinBlock>,
}

impl BlockOperator {
    pub fn trace(&self) -> C64 {
        self.blocks
            .iter()
            .map(|b| b.op.trace() * C64::new(b.multiplicity, 0.0))
            .fold(C64::new(0.0, 0.0), |acc, v| acc + v)
    }

    /// Sum of sector trace norms with multiplicities: the trace norm of the
    /// full operator, since the sectors are orthogonal.
    pub fn trace_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.multiplicity * trace_norm(&b.op)).sum()
    }

    /// Total atomic excitation <sum sigma+ sigma->. Within a sector the
    /// internal ladder counts J+M; the global count adds N/2 - J.
    pub fn n_ex(&self) -> f64 {
        let half_n = self.n_atoms as f64 / 2.0;
        self.blocks
            .iter()
            .map(|b| {
                let dim = b.j2 as usize + 1;
                let j = b.j2 as f64 / 2.0;
                let ladder: Vec<f64> = (0..dim).map(|k| (b.j2 - k as i32) as f64).collect();
                let internal = b.op.weighted_diag(&ladder).re;
                let offset = (half_n - j) * b.op.trace().re;
                b.multiplicity * (internal + offset)
            })
            .sum()
    }

    /// Applies f to every block, keeping spins and multiplicities.
    pub fn map(&self, mut f: impl FnMut(i32, &ComplexMatrix) -> ComplexMatrix) -> Self {
        Self {
            n_atoms: self.n_atoms,
            blocks: self
                .blocks
                .iter()
                .map(|b| SpinBlock { j2: b.j2, multiplicity: b.multiplicity, op: f(b.j2, &b.op) })
                .collect(),
        }
    }

    /// Sector-aligned difference; both operands must come from the same
    /// atom count so the block structure matches.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.n_atoms != other.n_atoms || self.blocks.len() != other.blocks.len() {
            return Err(Error::Usage("sector structures do not match".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                debug_assert_eq!(a.j2, b.j2);
                SpinBlock { j2: a.j2, multiplicity: a.multiplicity, op: a.op.sub(&b.op) }
            })
            .collect();
        Ok(Self { n_atoms: self.n_atoms, blocks })
    }
}

/// The 2x2 density matrix of one atom with excited population rho_ee and
/// coherence rho_eg.
pub fn single_atom_matrix(rho_ee: f64, rho_eg: C64) -> ComplexMatrix {
    ComplexMatrix::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => C64::new(rho_ee, 0.0),
        (0, 1) => rho_eg,
        (1, 0) => rho_eg.conj(),
        _ => C64::new(1.0 - rho_ee, 0.0),
    })
}

/// Multiplicity of the spin-J sector of N spin-1/2 atoms.
pub fn sector_multiplicity(n_atoms: usize, j2: i32) -> f64 {
    let n = n_atoms as i32;
    if j2 < 0 || j2 > n || (n - j2) % 2 != 0 {
        return 0.0;
    }
    let k = ((n - j2) / 2) as u32;
    let c = binomial(n as u32, k);
    let c_prev = if k == 0 { 0.0 } else { binomial(n as u32, k - 1) };
    c - c_prev
}

/// Projects X (x) Y onto the child sector one half-spin up or down, where X
/// lives on the parent ladder (doubled spin j2) and Y on one atom.
fn project_child(x: &ComplexMatrix, y: &ComplexMatrix, j2: i32, up: bool) -> ComplexMatrix {
    let d = (j2 + 1) as usize;
    let df = d as f64;
    let xv = |k: i32, l: i32| -> C64 {
        if k < 0 || l < 0 || k >= d as i32 || l >= d as i32 {
            C64::new(0.0, 0.0)
        } else {
            x.get(k as usize, l as usize)
        }
    };
    if up {
        // |k'> = a(k') |k'>|e> + b(k') |k'-1>|g>
        let a = |k: usize| ((d - k) as f64 / df).max(0.0).sqrt();
        let b = |k: usize| (k as f64 / df).sqrt();
        ComplexMatrix::from_fn(d + 1, d + 1, |k, l| {
            a(k) * a(l) * xv(k as i32, l as i32) * y.get(0, 0)
                + a(k) * b(l) * xv(k as i32, l as i32 - 1) * y.get(0, 1)
                + b(k) * a(l) * xv(k as i32 - 1, l as i32) * y.get(1, 0)
                + b(k) * b(l) * xv(k as i32 - 1, l as i32 - 1) * y.get(1, 1)
        })
    } else {
        // |k'> = -alpha(k') |k'+1>|e> + beta(k') |k'>|g>
        let alpha = |k: usize| ((k + 1) as f64 / df).sqrt();
        let beta = |k: usize| ((d - 1 - k) as f64 / df).max(0.0).sqrt();
        ComplexMatrix::from_fn(d - 1, d - 1, |k, l| {
            alpha(k) * alpha(l) * xv(k as i32 + 1, l as i32 + 1) * y.get(0, 0)
                - alpha(k) * beta(l) * xv(k as i32 + 1, l as i32) * y.get(0, 1)
                - beta(k) * alpha(l) * xv(k as i32, l as i32 + 1) * y.get(1, 0)
                + beta(k) * beta(l) * xv(k as i32, l as i32) * y.get(1, 1)
        })
    }
}

fn check_single_atom(m: &ComplexMatrix, what: &str) -> Result<()> {
    if m.rows() != 2 || m.cols() != 2 {
        return Err(Error::Config(format!("{what} must be 2x2, got {}x{}", m.rows(), m.cols())));
    }
    Ok(())
}

/// Sector blocks of rho_1^(x)N.
pub fn factorized_blocks(n_atoms: usize, rho1: &ComplexMatrix) -> Result<BlockOperator> {
    Ok(factorized_blocks_paired(n_atoms, rho1, None)?.0)
}

/// Sector blocks of rho_1^(x)N together with those of sum_k X_k, where X_k
/// acts as x1 on atom k and as rho1 elsewhere. Used for one-site sums such
/// as the independent-cavity dissipator image of a product state.
pub fn factorized_blocks_paired(
    n_atoms: usize,
    rho1: &ComplexMatrix,
    x1: Option<&ComplexMatrix>,
) -> Result<(BlockOperator, Option<BlockOperator>)> {
    if n_atoms == 0 {
        return Err(Error::Config("sector decomposition needs at least one atom".into()));
    }
    check_single_atom(rho1, "single-atom state")?;
    if let Some(x) = x1 {
        check_single_atom(x, "single-atom operator")?;
    }
    // per level: blocks descending in j2, paired with the one-site-sum block
    let mut t: Vec<(i32, ComplexMatrix)> = vec![(1, rho1.clone())];
    let mut a: Vec<ComplexMatrix> = vec![x1.cloned().unwrap_or_else(|| ComplexMatrix::zeros(2, 2))];
    for level in 2..=n_atoms {
        let parent_of = |j2: i32| -> Option<usize> {
            t.iter().position(|(pj, _)| *pj == j2)
        };
        let mut nt: Vec<(i32, ComplexMatrix)> = Vec::new();
        let mut na: Vec<ComplexMatrix> = Vec::new();
        let mut j2 = level as i32;
        while j2 >= 0 {
            // prefer the parent below (child reached by adding spin up)
            let (pidx, up) = match parent_of(j2 - 1) {
                Some(i) => (i, true),
                None => match parent_of(j2 + 1) {
                    Some(i) => (i, false),
                    None => {
                        j2 -= 2;
                        continue;
                    }
                },
            };
            let pj2 = t[pidx].0;
            nt.push((j2, project_child(&t[pidx].1, rho1, pj2, up)));
            if let Some(x) = x1 {
                let from_a = project_child(&a[pidx], rho1, pj2, up);
                let from_t = project_child(&t[pidx].1, x, pj2, up);
                na.push(from_a.add(&from_t));
            }
            j2 -= 2;
        }
        t = nt;
        a = na;
    }
    let wrap = |ops: Vec<(i32, ComplexMatrix)>| BlockOperator {
        n_atoms,
        blocks: ops
            .into_iter()
            .map(|(j2, op)| SpinBlock {
                j2,
                multiplicity: sector_multiplicity(n_atoms, j2),
                op,
            })
            .collect(),
    };
    let t_j2: Vec<i32> = t.iter().map(|(j, _)| *j).collect();
    let state = wrap(t);
    let sum = x1.map(|_| {
        wrap(t_j2.into_iter().zip(a).collect())
    });
    Ok((state, sum))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::dissipator;
    use crate::linalg::{tensor_chain, trace_distance_raw, ONE, ZERO};
    use crate::model::{atomic_lowering, collective_lowering, ladder_lowering, sigma_minus};

    fn single(rho_ee: f64, re: f64, im: f64) -> ComplexMatrix {
        ComplexMatrix::from_rows(&[
            &[C64::new(rho_ee, 0.0), C64::new(re, im)],
            &[C64::new(re, -im), C64::new(1.0 - rho_ee, 0.0)],
        ])
    }

    fn product(rho1: &ComplexMatrix, n: usize) -> ComplexMatrix {
        let factors: Vec<&ComplexMatrix> = (0..n).map(|_| rho1).collect();
        tensor_chain(&factors).unwrap()
    }

    #[test]
    fn multiplicities_follow_the_catalan_triangle() {
        assert_eq!(sector_multiplicity(2, 2), 1.0);
        assert_eq!(sector_multiplicity(2, 0), 1.0);
        assert_eq!(sector_multiplicity(3, 3), 1.0);
        assert_eq!(sector_multiplicity(3, 1), 2.0);
        assert_eq!(sector_multiplicity(4, 0), 2.0);
        assert_eq!(sector_multiplicity(4, 2), 3.0);
        assert_eq!(sector_multiplicity(4, 4), 1.0);
        assert_eq!(sector_multiplicity(4, 1), 0.0);
        // recursion consistency: dimensions add up to 2^N
        for n in 1..=10usize {
            let total: f64 = (0..=n as i32)
                .map(|j2| sector_multiplicity(n, j2) * (j2 + 1) as f64)
                .sum();
            assert_eq!(total, (1usize << n) as f64);
        }
    }

    #[test]
    fn blocks_carry_the_right_invariants() {
        let rho1 = single(0.35, 0.2, -0.1);
        for n in [2usize, 3, 4, 5] {
            let blocks = factorized_blocks(n, &rho1).unwrap();
            let full = product(&rho1, n);
            assert!((blocks.trace().re - 1.0).abs() < 1e-12);
            assert!(blocks.trace().im.abs() < 1e-14);
            // purity
            let purity_blocks: f64 = blocks
                .blocks
                .iter()
                .map(|b| b.multiplicity * b.op.mul(&b.op).trace().re)
                .sum();
            let purity_full = full.mul(&full).trace().re;
            assert!(
                (purity_blocks - purity_full).abs() < 1e-12,
                "purity {purity_blocks} vs {purity_full} at N = {n}"
            );
            // excitation
            let exdiag: Vec<f64> = (0..(1usize << n))
                .map(|b| (n as u32 - (b as u32).count_ones()) as f64)
                .collect();
            let nex_full = full.weighted_diag(&exdiag).re;
            assert!(
                (blocks.n_ex() - nex_full).abs() < 1e-12,
                "n_ex {} vs {nex_full} at N = {n}",
                blocks.n_ex()
            );
        }
    }

    #[test]
    fn pure_product_states_live_on_the_maximal_sector() {
        let rho_ee = 0.4f64;
        let coh = (rho_ee * (1.0 - rho_ee)).sqrt();
        let rho1 = single(rho_ee, coh, 0.0);
        let blocks = factorized_blocks(5, &rho1).unwrap();
        assert_eq!(blocks.blocks[0].j2, 5);
        assert!((blocks.blocks[0].op.trace().re - 1.0).abs() < 1e-12);
        for b in &blocks.blocks[1..] {
            assert!(b.op.trace().norm() < 1e-12, "sector {} should be empty", b.j2);
        }
    }

    #[test]
    fn up_and_down_parent_projections_agree() {
        // the j2 = 1 sector of three atoms is reachable from both parents;
        // permutation invariance forces the same block either way
        let rho1 = single(0.6, 0.15, 0.25);
        let two = factorized_blocks(2, &rho1).unwrap();
        let triplet = &two.blocks[0];
        let singlet = &two.blocks[1];
        assert_eq!((triplet.j2, singlet.j2), (2, 0));
        let via_up = project_child(&singlet.op, &rho1, 0, true);
        let via_down = project_child(&triplet.op, &rho1, 2, false);
        assert!(
            via_up.max_abs_diff(&via_down) < 1e-12,
            "parent paths disagree: {:?}",
            via_up.max_abs_diff(&via_down)
        );
    }

    #[test]
    fn block_distance_matches_full_space_distance() {
        let a1 = single(0.5, 0.3, 0.1);
        let b1 = single(0.42, 0.25, -0.2);
        for n in [2usize, 3, 4] {
            let da = factorized_blocks(n, &a1).unwrap();
            let db = factorized_blocks(n, &b1).unwrap();
            let block_dist = 0.5 * da.sub(&db).unwrap().trace_norm();
            let full_dist = trace_distance_raw(&product(&a1, n), &product(&b1, n));
            assert!(
                (block_dist - full_dist).abs() < 1e-10,
                "distance {block_dist} vs {full_dist} at N = {n}"
            );
        }
    }

    #[test]
    fn collective_dissipator_norm_through_blocks() {
        let rho1 = single(0.45, 0.2, 0.05);
        for n in [2usize, 3, 4] {
            let blocks = factorized_blocks(n, &rho1).unwrap();
            let block_norm: f64 = blocks
                .blocks
                .iter()
                .map(|b| {
                    let low = ladder_lowering(b.j2 as usize);
                    b.multiplicity * trace_norm(&dissipator(&low, &b.op))
                })
                .sum();
            let full = product(&rho1, n);
            let low = collective_lowering(n).unwrap();
            let full_norm = trace_norm(&dissipator(&low, &full));
            assert!(
                (block_norm - full_norm).abs() < 1e-10,
                "collective norm {block_norm} vs {full_norm} at N = {n}"
            );
        }
    }

    #[test]
    fn one_site_sums_through_the_paired_recursion() {
        let rho1 = single(0.45, 0.2, 0.05);
        let x1 = dissipator(&sigma_minus(), &rho1);
        for n in [2usize, 3, 4] {
            let (_, sum) = factorized_blocks_paired(n, &rho1, Some(&x1)).unwrap();
            let sum = sum.unwrap();
            let full = {
                let dim = 1usize << n;
                let mut acc = ComplexMatrix::zeros(dim, dim);
                let rho_n = product(&rho1, n);
                for k in 0..n {
                    acc = acc.add(&dissipator(&atomic_lowering(n, k).unwrap(), &rho_n));
                }
                acc
            };
            // compare trace norms and traces; the blocks are basis-fixed so
            // the norm identity is the load-bearing check
            let eig_sum: f64 = sum.trace_norm();
            let eig_full = trace_norm(&full);
            assert!(
                (eig_sum - eig_full).abs() < 1e-10,
                "one-site-sum norm {eig_sum} vs {eig_full} at N = {n}"
            );
            assert!((sum.trace().re - full.trace().re).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = ComplexMatrix::from_rows(&[&[ONE, ZERO, ZERO], &[ZERO, ONE, ZERO], &[ZERO, ZERO, ONE]]);
        assert!(factorized_blocks(2, &bad).is_err());
        assert!(factorized_blocks(0, &ComplexMatrix::identity(2)).is_err());
    }
}
