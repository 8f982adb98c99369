//! Aggregation, persistence and the federated runner on small synthetic data.

use std::sync::Arc;

use pepi_core::data::{synth_blobs, MultiViewDataset, NoiseSpec};
use pepi_core::federation::checkpoint::{from_bytes, to_bytes};
use pepi_core::federation::{
    aggregate, evaluate, load_checkpoint, local_train, run_schedule, save_checkpoint, ClientData, ClientState,
    GlobalParams, LayerParams, LocalUpdate, Method, Network, RunConfig, TrainHyper,
};
use pepi_core::pepi::ArchSpec;
use pepi_core::seed::rng_for;
use pepi_core::topology::scenario::{fixed, two_slot};
use pepi_core::topology::SlotMode;
use pepi_core::Error;

fn arch() -> ArchSpec {
    ArchSpec { in_channels: 1, side: 16, conv_channels: vec![2, 3], hidden: vec![6], classes: 3 }
}

fn hyper() -> TrainHyper {
    TrainHyper { lr: 0.05, lr_decay: 0.99, train_batch: 8, test_batch: 16, local_epochs_per_round: 1, test_every: 2, clip_norm: Some(5.0) }
}

fn client_data(seed: u64, clients: usize) -> Vec<ClientData> {
    (0..clients as u64)
        .map(|i| {
            let mk = |n, tag| {
                let ds = synth_blobs(3, 256, 3.0, 1.0, n, &mut rng_for(seed, &[i, tag])).unwrap();
                Arc::new(MultiViewDataset::prepare(&ds, 5, &NoiseSpec::new(0.0), seed ^ (i << 8) ^ tag).unwrap())
            };
            ClientData { train: mk(24, 0), test: mk(9, 1) }
        })
        .collect()
}

fn pepi_update(id: usize, weight: u64, values: [f32; 3]) -> LocalUpdate {
    let [s, o, b] = values;
    let layer = LayerParams::Pepi { in_dim: 1, out_dim: 1, s: vec![s], o: vec![o], bias: vec![b] };
    LocalUpdate { client_id: id, params: GlobalParams { layers: vec![layer] }, weight }
}

#[test]
fn weighted_mean_of_hand_computed_case() {
    // (1*0 + 2*3 + 3*6) / 6 = 4
    let ups = [pepi_update(0, 1, [0.0; 3]), pepi_update(1, 2, [3.0; 3]), pepi_update(2, 3, [6.0; 3])];
    let g = aggregate(&ups).unwrap();
    assert_eq!(g.layers[0].arrays(), vec![&[4.0f32][..], &[4.0][..], &[4.0][..]]);
}

#[test]
fn identical_updates_are_a_fixpoint() {
    let net = Network::new(Method::Proposed, &arch(), 4, &mut rng_for(3, &[])).unwrap();
    let p = net.to_params();
    let ups: Vec<LocalUpdate> =
        (0..4).map(|i| LocalUpdate { client_id: i, params: p.clone(), weight: 1 + i as u64 * 7 }).collect();
    assert!(aggregate(&ups).unwrap().bit_identical(&p));
}

#[test]
fn aggregation_ignores_upload_order() {
    let ups: Vec<LocalUpdate> = (0..5).map(|i| pepi_update(i, 3 + i as u64, [i as f32 * 0.1, -0.3, 1.0 / (i + 1) as f32])).collect();
    let mut rev = ups.clone();
    rev.reverse();
    assert!(aggregate(&ups).unwrap().bit_identical(&aggregate(&rev).unwrap()));
}

#[test]
fn payload_per_layer_does_not_depend_on_scale() {
    let mut net = Network::new(Method::Proposed, &ArchSpec::mnist(), 7, &mut rng_for(1, &[])).unwrap();
    let reference = net.to_params().payload_len();
    for k in 1..=7 {
        net.rescale(k).unwrap();
        let p = net.to_params();
        assert_eq!(p.payload_len(), reference);
        for layer in &p.layers {
            if let LayerParams::Pepi { in_dim, out_dim, .. } = layer {
                let (b, a) = (*in_dim as usize, *out_dim as usize);
                assert_eq!(layer.payload_len(), 2 * a * b + a);
            }
        }
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    for method in Method::ALL {
        let net = Network::new(method, &arch(), 5, &mut rng_for(9, &[method as u64])).unwrap();
        let p = net.to_params();
        assert!(from_bytes(&to_bytes(&p)).unwrap().bit_identical(&p));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pepi");
        save_checkpoint(&p, &path).unwrap();
        assert!(load_checkpoint(&path).unwrap().bit_identical(&p));
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let p = Network::new(Method::Proposed, &arch(), 2, &mut rng_for(1, &[])).unwrap().to_params();
    let bytes = to_bytes(&p);
    assert!(matches!(from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Truncated(_))));
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(from_bytes(&bad_magic), Err(Error::Format(_))));
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    assert!(matches!(from_bytes(&bad_version), Err(Error::Version { .. })));
    let mut trailing = bytes;
    trailing.push(0);
    assert!(matches!(from_bytes(&trailing), Err(Error::Format(_))));
}

fn state(data: &ClientData, active: bool) -> ClientState {
    let mut model = Network::new(Method::Proposed, &arch(), 3, &mut rng_for(2, &[])).unwrap();
    model.rescale(3).unwrap();
    ClientState { id: 0, name: "A".into(), active, model, train: data.train.clone(), test: data.test.clone() }
}

#[test]
fn local_training_is_deterministic_and_respects_activity() {
    let data = client_data(1, 1);
    let mut a = state(&data[0], true);
    let mut b = state(&data[0], true);
    let (ua, _) = local_train(&mut a, 2, &hyper(), 0, 5, 0).unwrap();
    let (ub, _) = local_train(&mut b, 2, &hyper(), 0, 5, 0).unwrap();
    assert!(ua.params.bit_identical(&ub.params));
    assert_eq!(ua.weight, 24);

    let mut idle = state(&data[0], true);
    let before = idle.model.to_params();
    let (u, _) = local_train(&mut idle, 0, &hyper(), 0, 5, 0).unwrap();
    assert!(u.params.bit_identical(&before));
    assert_eq!(u.weight, 24);

    let mut off = state(&data[0], false);
    assert!(matches!(local_train(&mut off, 1, &hyper(), 0, 5, 0), Err(Error::Precondition(_))));
    let (acc, loss) = evaluate(&a.model, &a.test).unwrap();
    assert!((0.0..=1.0).contains(&acc) && loss.is_finite());
}

fn config(method: Method, parallel: bool) -> RunConfig {
    RunConfig { method, arch: arch(), hyper: hyper(), seed: 17, parallel }
}

#[test]
fn transition_rescales_and_skips_departed_client() {
    let schedule = two_slot(2, 2, SlotMode::Train);
    let report = run_schedule(&config(Method::Proposed, false), &schedule, &client_data(4, 5)).unwrap();
    let moved: Vec<(usize, usize, usize, bool)> =
        report.transitions.iter().map(|t| (t.client, t.from_k, t.to_k, t.params_identical)).collect();
    assert_eq!(moved, vec![(1, 4, 3, true), (2, 5, 4, true)]);
    assert_eq!(report.log.filter(|r| r.slot_index == 1 && r.client == "D").count(), 0);
    assert!(report.log.filter(|r| r.slot_index == 0 && r.client == "D").count() > 0);
    assert_eq!(report.checkpoints.len(), 2);

    // every evaluation emits accuracy, loss and (when training) train_loss per active client:
    // slot 0 evaluates at epochs 2 (last round), slot 1 at epoch 4 (last round)
    let evals = 5 + 4;
    assert_eq!(report.log.len(), 3 * evals);
}

#[test]
fn inference_slots_evaluate_every_round_without_training() {
    let schedule = two_slot(2, 3, SlotMode::Inference);
    let report = run_schedule(&config(Method::Proposed, false), &schedule, &client_data(4, 5)).unwrap();
    let rounds: Vec<u32> = {
        let mut r: Vec<u32> = report.log.filter(|r| r.slot_index == 1).map(|r| r.round).collect();
        r.dedup();
        r
    };
    assert_eq!(rounds, vec![2, 3, 4]);
    assert_eq!(report.log.filter(|r| r.slot_index == 1 && r.metric == "train_loss").count(), 0);
    assert!(report.checkpoints[0].params.bit_identical(&report.checkpoints[1].params));
}

#[test]
fn parallel_and_serial_runs_agree() {
    let schedule = fixed(3);
    let data = client_data(8, 5);
    for method in [Method::Baseline2, Method::Baseline3, Method::Proposed] {
        let s = run_schedule(&config(method, false), &schedule, &data).unwrap();
        let p = run_schedule(&config(method, true), &schedule, &data).unwrap();
        assert_eq!(s.log, p.log, "{method}");
        assert!(s.checkpoints[0].params.bit_identical(&p.checkpoints[0].params));
    }
}

#[test]
fn baseline1_needs_a_single_client() {
    let err = run_schedule(&config(Method::Baseline1, false), &fixed(1), &client_data(1, 5)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn mismatched_data_is_rejected_before_training() {
    let err = run_schedule(&config(Method::Proposed, false), &fixed(1), &client_data(1, 4)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}
