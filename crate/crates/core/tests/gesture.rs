use std::collections::HashMap;

use knitpad::gesture::*;
use knitpad::mesh::MeshConfig;

#[test]
fn protocol_sample_counts() {
    let cfg = MeshConfig::default();
    let three = synth_dataset(&cfg, &SubjectProfile::cohort("e", 3, 10), 20).unwrap();
    assert_eq!(three.len(), 720);
    let mut per_class: HashMap<GestureClass, usize> = HashMap::new();
    for s in &three {
        *per_class.entry(s.class).or_default() += 1;
    }
    assert_eq!(per_class.len(), 12);
    assert!(per_class.values().all(|&n| n == 60));

    let five = synth_dataset(&MeshConfig::with_size(8, 8), &SubjectProfile::cohort("t", 5, 11), 45).unwrap();
    assert_eq!(five.len(), 2700);
}

#[test]
fn gesture_frames_sit_below_lead_in_frames() {
    let subjects = SubjectProfile::cohort("s", 2, 3);
    let data = synth_dataset(&MeshConfig::default(), &subjects, 2).unwrap();
    for (i, sample) in data.iter().enumerate() {
        let subject = subjects.iter().find(|s| s.id == sample.subject).unwrap();
        let trial = i % 2;
        let traj = sample_trajectory(
            &path_for_class(sample.class),
            &subject.for_trial(&[sample.class.index() as u64, trial as u64]),
            1.0,
            250.0,
        );
        let first = traj.iter().position(|t| t.touch.present).unwrap();
        let last = traj.iter().rposition(|t| t.touch.present).unwrap();
        let mean = |frames: &[[f64; 4]]| frames.iter().flatten().sum::<f64>() / (4 * frames.len()) as f64;
        let frames = sample.series.frames();
        assert!(mean(&frames[first..=last]) < mean(&frames[..first]), "sample {i}");
        assert!(mean(&frames[first..=last]) < mean(&frames[last + 1..]), "sample {i}");
    }
}

#[test]
fn worn_samples_are_tagged_and_differ() {
    let subjects = SubjectProfile::cohort("w", 1, 5);
    let bench = synth_dataset(&MeshConfig::with_size(8, 8), &subjects, 1).unwrap();
    let worn = synth_dataset(&MeshConfig::with_size(8, 8).worn(), &subjects, 1).unwrap();
    assert!(bench.iter().all(|s| s.condition == Condition::Benchtop));
    assert!(worn.iter().all(|s| s.condition == Condition::Worn));
    assert!(worn[0].baseline.channel_means()[0] < bench[0].baseline.channel_means()[0]);
}
