//! Sector state against syndromes and active sets computed straight from the
//! lattice incidence, plus reproducibility of whole experiments.

use dmem_core::toric4d::{lifetime_experiment, static_experiment, StaticConvention};
use dmem_core::{
    CellKind, Lattice4D, Parallelism, RngStream, Sector, SectorKind, SectorState, ToomParams,
};
use rand::Rng;

/// Violated checks of an error set, by walking each check's coboundary.
fn oracle_syndromes(lat: &Lattice4D, kind: SectorKind, errors: &[bool]) -> Vec<bool> {
    let checks = match kind {
        SectorKind::Edge => lat.num_edges(),
        SectorKind::Cube => lat.num_cubes(),
    };
    (0..checks as u32)
        .map(|c| {
            let faces = match kind {
                SectorKind::Edge => lat.edge_faces(lat.edge(c)).unwrap(),
                SectorKind::Cube => lat.cube_faces(lat.cube(c)).unwrap(),
            };
            faces
                .iter()
                .filter(|f| errors[lat.index(**f) as usize])
                .count()
                % 2
                == 1
        })
        .collect()
}

/// Faces whose two lower-side checks are both violated.
fn oracle_active(lat: &Lattice4D, kind: SectorKind, syn: &[bool]) -> Vec<usize> {
    (0..lat.num_faces() as u32)
        .filter(|&f| {
            let face = lat.face(f);
            assert_eq!(face.kind(), CellKind::Face);
            let lower = match kind {
                SectorKind::Edge => lat.face_edges(face).unwrap(),
                SectorKind::Cube => lat.face_cubes(face).unwrap(),
            };
            lower[..2].iter().all(|c| syn[lat.index(*c) as usize])
        })
        .map(|f| f as usize)
        .collect()
}

#[test]
fn random_error_sets_match_incidence_oracle() {
    for n in [2, 3, 4] {
        let lat = Lattice4D::build(n).unwrap();
        for kind in [SectorKind::Edge, SectorKind::Cube] {
            let sector = Sector::new(&lat, kind);
            let mut rng = RngStream::new(9, n as u64);
            for density in [0.01, 0.1, 0.5] {
                let errors: Vec<bool> = (0..lat.num_faces())
                    .map(|_| rng.random_bool(density))
                    .collect();
                let st = SectorState::from_errors(&sector, errors.clone());
                let syn = oracle_syndromes(&lat, kind, &errors);
                assert_eq!(st.syndromes(), &syn[..]);
                assert_eq!(st.active_faces(), oracle_active(&lat, kind, &syn));
            }
        }
    }
}

#[test]
fn incremental_state_survives_long_fuzz() {
    for n in [2, 3] {
        let lat = Lattice4D::build(n).unwrap();
        for kind in [SectorKind::Edge, SectorKind::Cube] {
            let sector = Sector::new(&lat, kind);
            let mut st = SectorState::new(&sector);
            let mut rng = RngStream::new(21, n as u64);
            for step in 0..100_000 {
                if st.active_count() > 0 && rng.random_bool(0.5) {
                    let k = rng.random_range(0..st.active_count());
                    let r = st.nth_active(k);
                    st.apply_flip(r);
                } else {
                    st.apply_flip(rng.random_range(0..sector.num_faces()));
                }
                if step % 10_000 == 0 {
                    assert!(st.is_consistent());
                }
            }
            assert!(st.is_consistent());
            let syn = oracle_syndromes(&lat, kind, st.errors());
            assert_eq!(st.syndromes(), &syn[..]);
        }
    }
}

#[test]
fn isolated_errors_are_removed() {
    let lat = Lattice4D::build(5).unwrap();
    let sector = Sector::new(&lat, SectorKind::Edge);
    for f in [0usize, 17, 999, lat.num_faces() - 1] {
        let mut errors = vec![false; lat.num_faces()];
        errors[f] = true;
        let mut st = SectorState::from_errors(&sector, errors);
        let rep = st.full_recovery(20);
        assert!(rep.converged);
        assert_eq!(st.error_count(), 0);
        assert_eq!(st.raw_parity(), 0);
    }
}

#[test]
fn experiments_do_not_depend_on_thread_count() {
    let params = ToomParams::new(3, 0.02, 200.0);
    let (a, oa) = lifetime_experiment(&params, 24, 5, Parallelism(1)).unwrap();
    let (b, ob) = lifetime_experiment(&params, 24, 5, Parallelism(3)).unwrap();
    assert_eq!(oa, ob);
    assert_eq!(a, b);
    let s1 = static_experiment(3, 0.1, StaticConvention::Half, 12, 40, 2, Parallelism(1)).unwrap();
    let s2 = static_experiment(3, 0.1, StaticConvention::Half, 12, 40, 2, Parallelism(0)).unwrap();
    assert_eq!(s1, s2);
}
