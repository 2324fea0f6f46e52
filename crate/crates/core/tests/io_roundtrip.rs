use proptest::prelude::*;

use enex::io::{parse_detections, parse_ground_truth, write_detections, write_ground_truth};
use enex::synth::{self, presets, NoiseSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn simulator_output_roundtrips(seed in any::<u64>(), sigma in 0.0..4.0f64, miss in 0.0..0.3f64, fp in 0.0..0.5f64) {
        let mut script = presets::balanced(1, NoiseSpec { position_sigma: sigma, miss_probability: miss, false_positives_per_frame: fp }, seed);
        script.camera1 = Some(synth::CameraSpec { homography: presets::OPPOSITE_VIEW });
        let sc = synth::generate(&script).unwrap();

        let mut buf = Vec::new();
        write_detections(&mut buf, &sc.detections).unwrap();
        prop_assert_eq!(parse_detections(buf.as_slice()).unwrap(), sc.detections);

        let mut buf = Vec::new();
        write_ground_truth(&mut buf, &sc.ground_truth).unwrap();
        prop_assert_eq!(parse_ground_truth(buf.as_slice()).unwrap(), sc.ground_truth);
    }
}
