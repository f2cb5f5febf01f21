//! Property tests for the structural invariants: simplex closure of the
//! integrator and the chain, symmetry of the coupling matrix, graph/coupling
//! round trips, and exact trajectory serialization.

use coupled_wf::chain::{chain_params_from_diffusion, sampling_probabilities, step_chain};
use coupled_wf::diffusion::em_step_with_noise;
use coupled_wf::model::{
    build_coupling_matrix, graph_to_couplings, interaction_graph, occupancy_to_frequency,
    validate_model, CouplingBlock, FrequencyState, LocusSpec, ModelSpec, OccupancyState,
};
use coupled_wf::seeds::stream_rng;
use coupled_wf::trajectory::Trajectory;
use proptest::prelude::*;

fn pair_model(u: f64, h: f64) -> coupled_wf::model::ValidatedModel {
    validate_model(&ModelSpec {
        loci: vec![
            LocusSpec::neutral(vec![u, u]),
            LocusSpec::neutral(vec![u, u]),
        ],
        couplings: vec![CouplingBlock {
            pair: (0, 1),
            values: nalgebra::dmatrix![h, 0.0; 0.0, 0.0],
        }],
    })
    .unwrap()
}

proptest! {
    #[test]
    fn em_step_lands_on_the_simplex(
        u in 0.05f64..2.0,
        h in -1.0f64..1.0,
        x1 in 0.001f64..0.999,
        x2 in 0.001f64..0.999,
        dt in 1e-4f64..0.05,
        n1 in -4.0f64..4.0,
        n2 in -4.0f64..4.0,
    ) {
        let model = pair_model(u, h);
        let x = FrequencyState::new(vec![vec![x1, 1.0 - x1], vec![x2, 1.0 - x2]]).unwrap();
        let out = em_step_with_noise(&model, &x, dt, &[n1, n2]).unwrap();
        // Re-validate through the public constructor.
        FrequencyState::new(out.state.per_locus().to_vec()).unwrap();
    }

    #[test]
    fn sampling_probabilities_form_a_distribution(
        u in 0.05f64..2.0,
        h in -1.0f64..1.0,
        n in 10u64..5000,
        x1 in 0.0f64..1.0,
        x2 in 0.0f64..1.0,
    ) {
        let model = pair_model(u, h);
        let params = chain_params_from_diffusion(&model, n).unwrap();
        let x = FrequencyState::new(vec![vec![x1, 1.0 - x1], vec![x2, 1.0 - x2]]).unwrap();
        for locus in sampling_probabilities(&params, &x) {
            let sum: f64 = locus.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(locus.iter().all(|&p| (-1e-15..=1.0 + 1e-12).contains(&p)));
        }
    }

    #[test]
    fn chain_counts_close_under_stepping(
        u in 0.05f64..1.5,
        h in -1.0f64..1.0,
        n in 5u64..500,
        seed in 0u64..1000,
    ) {
        let model = pair_model(u, h);
        let params = chain_params_from_diffusion(&model, n).unwrap();
        let mut rng = stream_rng(seed, 0);
        let mut state = OccupancyState::even(model.shape(), n);
        for _ in 0..5 {
            state = step_chain(&params, &state, &mut rng);
            for i in 0..state.num_loci() {
                prop_assert_eq!(state.locus(i).iter().sum::<u64>(), n);
            }
        }
    }

    #[test]
    fn occupancy_frequencies_satisfy_state_invariants(
        counts in prop::collection::vec(prop::collection::vec(0u64..200, 2..5), 1..4),
    ) {
        // Per-locus sums differ; use the first locus sum as N and rescale
        // the rest by padding the final allele.
        let n: u64 = counts[0].iter().sum::<u64>().max(1);
        let adjusted: Vec<Vec<u64>> = counts
            .iter()
            .map(|c| {
                let mut c = c.clone();
                let s: u64 = c.iter().sum();
                let last = c.len() - 1;
                if s > n {
                    let mut excess = s - n;
                    for v in c.iter_mut().rev() {
                        let take = excess.min(*v);
                        *v -= take;
                        excess -= take;
                    }
                } else {
                    c[last] += n - s;
                }
                c
            })
            .collect();
        let occ = OccupancyState::new(adjusted, n).unwrap();
        let x = occupancy_to_frequency(&occ);
        FrequencyState::new(x.per_locus().to_vec()).unwrap();
    }

    #[test]
    fn coupling_matrix_is_symmetric_and_graph_round_trips(
        mask in 0u8..64,
        scales in prop::array::uniform6(0.1f64..2.0),
    ) {
        // Up to six scalar-coupled edges over four biallelic loci.
        let loci: Vec<LocusSpec> = (0..4).map(|_| LocusSpec::neutral(vec![0.5, 0.5])).collect();
        let pairs = [(0usize, 1usize), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let mut edges = Vec::new();
        for (bit, &(i, j)) in pairs.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                edges.push((i, j, nalgebra::dmatrix![scales[bit], 0.0; 0.0, 0.0]));
            }
        }
        let couplings = graph_to_couplings(&loci, &edges).unwrap();
        let model = validate_model(&ModelSpec { loci, couplings }).unwrap();
        let a = build_coupling_matrix(&model);
        prop_assert_eq!(&a.matrix().transpose(), a.matrix());
        let got: Vec<(usize, usize)> = interaction_graph(&a).edges().collect();
        let want: Vec<(usize, usize)> = pairs
            .iter()
            .enumerate()
            .filter(|(bit, _)| mask & (1 << bit) != 0)
            .map(|(_, &p)| p)
            .collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn trajectory_csv_round_trips_exactly(
        rows in prop::collection::vec(
            (0.0f64..1.0, 0.0f64..1.0, 0.0f64..10.0),
            1..20,
        ),
    ) {
        let states: Vec<FrequencyState> = rows
            .iter()
            .map(|&(a, b, _)| {
                FrequencyState::new(vec![vec![a, 1.0 - a], vec![b, 1.0 - b]]).unwrap()
            })
            .collect();
        let traj = Trajectory {
            times: rows.iter().map(|r| r.2).collect(),
            states,
            clamp_events: 0,
        };
        let back = Trajectory::from_csv_str(&traj.to_csv_string()).unwrap();
        prop_assert_eq!(back.times, traj.times);
        prop_assert_eq!(back.states, traj.states);
    }
}
