use aliasplan_core::belief::{build_zeta_table, marginal_likelihood, predict, zeta};
use aliasplan_core::oracle::{brute_force_associations, brute_force_eta, brute_force_objective, brute_force_zeta_table, mc_zeta, OracleReport};
use aliasplan_core::planner::{evaluate_objective_exact, sample_future_observations};
use aliasplan_core::rng::stream;
use aliasplan_core::verify::random_planning_instance;
use aliasplan_core::world::{
    predict_measurement, AssociationVector, ClassId, Landmark, LandmarkMap, Measurement, MotionModel, MotionPrimitive,
    ObservationModel, ObservationSet, WorldModel,
};
use aliasplan_core::{GaussianComponent, ZetaTable};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::Rng;

#[test]
fn marginal_likelihood_on_a_large_table() {
    let mut rng = stream(7, 1, 0);
    let (l, m) = (50, 50);
    let values: Vec<f64> = (0..l * m).map(|_| 10f64.powf(rng.random_range(-8.0..2.0))).collect();
    let mut weights: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let table = ZetaTable::new(vec![AssociationVector::default(); l], m, values.clone(), vec![true; l * m]).unwrap();
    let rows: Vec<Vec<f64>> = values.chunks(m).map(|r| r.to_vec()).collect();
    let report = OracleReport::new("eta", brute_force_eta(&rows, &weights), marginal_likelihood(&weights, &table).unwrap());
    assert!(report.within(1e-12), "{report:?}");
}

#[test]
fn enumeration_and_zeta_tables_match_the_oracle() {
    let mut checked = 0;
    for index in 0..60 {
        let (world, belief, actions) = random_planning_instance(21, index);
        for &a in &actions {
            let predicted = predict(&world, &belief, a).unwrap();
            let gaussians = predicted.gaussians();
            let raw: Vec<_> = gaussians.iter().map(|g| (g.mean, g.covariance)).collect();
            let samples = sample_future_observations(&world, &belief, a, 3, index).unwrap();
            for s in &samples.samples {
                let z = &s.observations;
                let mine = world.enumerate_associations(&gaussians, z).unwrap();
                assert_eq!(mine, brute_force_associations(&world, &raw, z));
                let table = build_zeta_table(&world, &predicted, z).unwrap();
                let (_, rows) = brute_force_zeta_table(&world, &belief, a, z).unwrap();
                assert_eq!(rows.len(), table.rows());
                for (i, row) in rows.iter().enumerate() {
                    for (j, reference) in row.iter().enumerate() {
                        let r = OracleReport::new("zeta", *reference, table.value(i, j));
                        assert!(r.within(1e-9), "instance {index}: {r:?}");
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 100, "only {checked} entries compared");
}

#[test]
fn exact_objective_matches_the_oracle() {
    for index in 0..40 {
        let (world, belief, actions) = random_planning_instance(22, index);
        for &a in &actions {
            let samples = sample_future_observations(&world, &belief, a, 8, 5).unwrap();
            let exact = evaluate_objective_exact(&world, &belief, a, &samples).unwrap();
            let z: Vec<_> = samples.samples.iter().map(|s| s.observations.clone()).collect();
            let reference = brute_force_objective(&world, &belief, a, &z).unwrap();
            let r = OracleReport::new("objective", reference.value, exact);
            assert!((r.reference - r.candidate).abs() <= 1e-9 * r.reference.abs().max(1.0), "instance {index}: {r:?}");
        }
    }
}

fn narrow_world() -> WorldModel {
    let map = LandmarkMap::new(vec![Landmark::new(1, 0, 2.0, 0.3), Landmark::new(2, 0, 1.5, -1.0)]).unwrap();
    let motion = MotionModel::new(
        vec![MotionPrimitive::new("stay", 0.0, 0.0, 0.0)],
        Matrix3::from_diagonal(&Vector3::new(1e-4, 1e-4, 1e-5)),
    )
    .unwrap();
    let observation = ObservationModel::new(Matrix2::identity() * 0.01, 4.0, 1.4).unwrap();
    WorldModel::new(map, motion, observation)
}

#[test]
fn analytic_zeta_agrees_with_monte_carlo() {
    let world = narrow_world();
    let g = GaussianComponent::new(Vector3::new(0.0, 0.0, 0.1), Matrix3::from_diagonal(&Vector3::new(0.002, 0.002, 2e-4))).unwrap();
    let landmarks = world.map.landmarks().to_vec();
    for seed in 0..10u64 {
        let mut rng = stream(seed, 2, 0);
        let mut z = Vec::new();
        let mut ids = Vec::new();
        for l in &landmarks {
            let noise = Vector2::new(rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15));
            z.push(Measurement {
                z: predict_measurement(&g.pose(), l) + noise,
                class: ClassId(0),
            });
            ids.push(l.id);
        }
        let z = ObservationSet::new(z);
        let beta = AssociationVector(ids);
        let value = zeta(&world, &g, &beta, &z).unwrap();
        let (mc, se) = mc_zeta(&world, &g, &beta, &z, 200_000, seed).unwrap();
        assert!((value - mc).abs() <= 3.0 * se, "seed {seed}: analytic {value}, mc {mc} +- {se}");
    }
}
