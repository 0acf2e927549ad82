use objectomaly::corpus::{read_sample, synthesize, write_sample, ClutterHost, SynthConfig};
use objectomaly::metrics::auprc;
use objectomaly::synth::CorruptionSpec;

fn mean_coarse_auprc(cfg: &SynthConfig, seeds: std::ops::Range<u64>) -> f64 {
    let n = seeds.end - seeds.start;
    seeds
        .map(|seed| {
            let s = synthesize(cfg, seed).unwrap();
            auprc(&s.coarse, &s.gt).unwrap().unwrap()
        })
        .sum::<f64>()
        / n as f64
}

#[test]
fn stronger_clutter_never_helps_coarse_scores() {
    for host in [ClutterHost::Distractors, ClutterHost::Background] {
        let values: Vec<f64> = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|&amp| {
                let cfg = SynthConfig {
                    corruption: CorruptionSpec {
                        clutter_amplitude: amp,
                        ..Default::default()
                    },
                    clutter_host: host,
                    ..Default::default()
                };
                mean_coarse_auprc(&cfg, 0..50)
            })
            .collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]), "{host:?}: {values:?}");
    }
}

#[test]
fn samples_survive_disk_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let sample = synthesize(&SynthConfig::default(), 5).unwrap();
    write_sample(tmp.path(), &sample, &serde_json::json!({ "seed": 5 })).unwrap();
    let back = read_sample(&tmp.path().join("5")).unwrap();
    assert_eq!(back.masks, sample.masks);
    assert_eq!(back.gt, sample.gt);
    let rounded = sample.coarse.map(|v| v as f32 as f64);
    assert_eq!(back.coarse, rounded);
}
