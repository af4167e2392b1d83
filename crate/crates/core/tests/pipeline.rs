use chanae_core::experiment::*;
use chanae_core::modem::{build_autoencoder, encode};
use chanae_core::*;

fn small_arch() -> ModemArch {
    ModemArch {
        filters: 4,
        kernel_len: 3,
        ..ModemArch::cnn(16)
    }
}

#[test]
fn full_dataset_bits_are_fair() {
    let d = generate_dataset(100_000, 128, 11).unwrap();
    assert_eq!((d.train.len(), d.test.len()), (80_000, 20_000));
    let ones: u64 = d
        .train
        .iter()
        .chain(&d.test)
        .map(|f| f.bits().iter().map(|&b| u64::from(b)).sum::<u64>())
        .sum();
    let mean = ones as f64 / 12_800_000.0;
    assert!((mean - 0.5).abs() < 0.005, "mean bit {mean}");
}

#[test]
fn training_changes_basis_and_checkpoint_restores_it() {
    let net = build_autoencoder(small_arch(), ChannelConfig::awgn(5.0), LossKind::mse(), DecodeMode::Soft, 1).unwrap();
    let before = basis_rows(&net).unwrap();
    let data = generate_dataset(200, 16, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 16,
        ..TrainConfig::desk(3)
    };
    let trained = train(net, &data, &cfg).unwrap();
    assert_eq!(trained.history.epochs.len(), 2);
    assert!(trained.history.epochs.iter().all(|e| e.val_loss.is_finite()));
    let after = basis_rows(&trained.network).unwrap();
    assert_ne!(before, after);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    trained.network.to_checkpoint().unwrap().save(&path).unwrap();
    let back = Network::from_checkpoint(&autodiff::Checkpoint::read(&path).unwrap()).unwrap();
    assert_eq!(back, trained.network);
    let bits = vec![BitFrame::random(16, &mut rng::seeded(5))];
    assert_eq!(encode(&back, &bits).unwrap(), encode(&trained.network, &bits).unwrap());
}

#[test]
fn single_value_study_matches_direct_sweep() {
    let spec = modem::NetworkSpec {
        arch: small_arch(),
        channel: ChannelConfig::awgn(5.0),
        loss: LossKind::mse(),
        decode_mode: DecodeMode::Soft,
        rtn: None,
    };
    let base = StudyBase {
        spec: spec.clone(),
        init_seed: 4,
        data: generate_dataset(100, 16, 5).unwrap(),
        train: TrainConfig {
            epochs: 1,
            batch_size: 10,
            ..TrainConfig::desk(6)
        },
        sweep: SweepConfig {
            max_bits: 5_000,
            ..SweepConfig::new(vec![0.0, 6.0], 7)
        },
    };
    let curves = study(StudyKind::TrainingSnr, &[5.0], &base).unwrap();
    let trained = train(Network::build(spec.clone(), 4).unwrap(), &base.data, &base.train).unwrap();
    let direct = ber_sweep(&trained.network, &spec.channel, &base.sweep).unwrap();
    assert_eq!(curves[0].curve.points, direct.points);
    assert_eq!(curves[0].curve.label, "train_snr_db=5");
}

#[test]
fn ber_csv_schema_and_precision() {
    let net = Network::identity_toy(8).unwrap();
    let sweep = SweepConfig::new(vec![0.0, 4.0], 1);
    let curve = ber_sweep(&net, &ChannelConfig::awgn(0.0), &sweep).unwrap();
    let mut rows = curve_rows(&curve);
    rows.extend(baseline_rows(&sweep.snr_db, 1.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ber.csv");
    write_ber_csv(&path, &rows).unwrap();
    let mut rd = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        rd.headers().unwrap().iter().collect::<Vec<_>>(),
        ["snr_db", "bits_tested", "bit_errors", "ber", "label"]
    );
    let recs: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(recs.len(), 6);
    for (rec, row) in recs.iter().zip(&rows) {
        assert_eq!(rec[3].parse::<f64>().unwrap(), row.ber);
        assert_eq!(&rec[4], row.label);
    }
    assert_eq!(recs[3][3].parse::<f64>().unwrap(), baselines::qpsk_ber(4.0));
}
