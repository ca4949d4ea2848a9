use emocap_core::scene::{
    dataset_statistics, resolve_ground_truth, AgeGroup, GroundTruthSample, Interaction, Judgment,
    OtherDescriptor, PersonAnnotation, Resolution, SceneAnnotation, SceneKind, Sex,
};
use emocap_core::taxonomy::{EmotionLabel, SignalLexicon};
use proptest::prelude::*;

fn judgment(annotator: &str, label: &str) -> Judgment {
    Judgment {
        scene_id: "s".into(),
        person_key: "red".into(),
        annotator_id: annotator.into(),
        label: EmotionLabel::new(label),
    }
}

fn person(key: &str, interacting: bool) -> PersonAnnotation {
    PersonAnnotation {
        person_key: key.into(),
        display_name: String::new(),
        perceived_sex: Sex::Female,
        perceived_age: AgeGroup::Adult,
        social_identity: None,
        signals: vec![],
        interactions: if interacting {
            vec![Interaction {
                other_name: String::new(),
                other: OtherDescriptor::Demographic { text: String::new(), age: AgeGroup::Child, sex: Sex::Male },
                action: "standing nearby".into(),
                actor: Default::default(),
            }]
        } else {
            vec![]
        },
        environment: None,
    }
}

fn scene(id: String, persons: Vec<PersonAnnotation>) -> SceneAnnotation {
    SceneAnnotation {
        scene_id: id,
        image_uri: String::new(),
        persons,
        annotator_id: String::new(),
        emotion_judgment: Default::default(),
        revision: 0,
    }
}

#[test]
fn scene_kind_depends_on_other_people() {
    assert_eq!(scene("a".into(), vec![person("red", false)]).kind(), SceneKind::OnePerson);
    assert_eq!(scene("b".into(), vec![person("red", true)]).kind(), SceneKind::MultiplePeople);
    assert_eq!(
        scene("c".into(), vec![person("red", false), person("blue", false)]).kind(),
        SceneKind::MultiplePeople
    );
}

#[test]
fn same_emotion_twice_in_one_image_counts_twice() {
    let lexicon = SignalLexicon::default_lexicon();
    let scenes = vec![scene("beach".into(), vec![person("red", false), person("blue", false)])];
    let samples: Vec<_> = ["red", "blue"]
        .iter()
        .map(|k| GroundTruthSample {
            scene_id: "beach".into(),
            person_key: k.to_string(),
            label: EmotionLabel::new("Sadness"),
        })
        .collect();
    let stats = dataset_statistics(&samples, &scenes, &lexicon.labels()).unwrap();
    let row = stats.row(&EmotionLabel::new("Sadness")).unwrap();
    assert_eq!((row.multiple_people, row.total), (2, 2));
    assert_eq!(stats.unique_scenes, 1);
}

proptest! {
    #[test]
    fn resolution_is_symmetric(a in 0usize..13, b in 0usize..13) {
        let labels = SignalLexicon::default_lexicon().labels();
        let x = judgment("ann-1", labels[a].as_str());
        let y = judgment("ann-2", labels[b].as_str());
        let xy = resolve_ground_truth(&x, &y).unwrap();
        let yx = resolve_ground_truth(&y, &x).unwrap();
        match (xy, yx) {
            (Resolution::Agreed(s), Resolution::Agreed(t)) => {
                prop_assert_eq!(a, b);
                prop_assert_eq!(&s, &t);
                prop_assert_eq!(&s.label, &labels[a]);
            }
            (Resolution::Excluded(d), Resolution::Excluded(e)) => {
                prop_assert_ne!(a, b);
                prop_assert_eq!(d.labels[0].clone(), e.labels[1].clone());
                prop_assert_eq!(d.annotators[1].clone(), e.annotators[0].clone());
            }
            _ => prop_assert!(false, "asymmetric resolution"),
        }
    }

    #[test]
    fn statistics_conserve_samples(
        layout in prop::collection::vec((1usize..4, any::<bool>()), 1..20),
        picks in prop::collection::vec((0usize..13, any::<bool>()), 0..60),
    ) {
        let labels = SignalLexicon::default_lexicon().labels();
        let scenes: Vec<_> = layout
            .iter()
            .enumerate()
            .map(|(i, (n, interacting))| {
                let persons = (0..*n).map(|k| person(&format!("p{k}"), *interacting)).collect();
                scene(format!("s{i}"), persons)
            })
            .collect();
        let mut samples = Vec::new();
        for (j, (label, keep)) in picks.iter().enumerate() {
            if !keep {
                continue;
            }
            let s = &scenes[j % scenes.len()];
            let p = &s.persons[j % s.persons.len()];
            samples.push(GroundTruthSample {
                scene_id: s.scene_id.clone(),
                person_key: p.person_key.clone(),
                label: labels[*label].clone(),
            });
        }
        let stats = dataset_statistics(&samples, &scenes, &labels).unwrap();
        prop_assert_eq!(stats.total, samples.len());
        prop_assert_eq!(stats.one_person + stats.multiple_people, stats.total);
        for row in &stats.rows {
            prop_assert_eq!(row.one_person + row.multiple_people, row.total);
            let expected = samples.iter().filter(|s| s.label == row.label).count();
            prop_assert_eq!(row.total, expected);
        }
        let scenes_used: std::collections::HashSet<_> = samples.iter().map(|s| &s.scene_id).collect();
        prop_assert_eq!(stats.unique_scenes, scenes_used.len());
    }
}
