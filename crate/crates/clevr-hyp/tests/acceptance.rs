//! Acceptance gate: end-to-end checks of the generator, executor,
//! validity filter, balancing, determinism, and evaluation harness.
//! Each test prints one pass line; a failure fails the test.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clevr_hyp::dataset::{compute_stats, read_samples, write_samples, write_samples_to, ExportMode};
use clevr_hyp::eval::{score, Prediction};
use clevr_hyp::executor::{
    execute_action, execute_action_sequence, execute_question, Answer, ANSWER_LABELS,
};
use clevr_hyp::generator::{
    balance, generate_split, generate_split_sequential, validate_pair, GenConfig, Reject, Sample,
    SplitKind,
};
use clevr_hyp::program::{parse_program, serialize_program};
use clevr_hyp::scene::{Color, Material, ObjectRecord, Scene, Shape, Size};

fn pass(n: u32, what: &str) {
    println!("criterion {n:02} ({what}): pass");
}

fn original_corpus() -> &'static Vec<Sample> {
    static CACHE: OnceLock<Vec<Sample>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let cfg = GenConfig { seed: 0, n_images: 100, split: SplitKind::Original };
        generate_split(&cfg).expect("original corpus generates")
    })
}

fn balanced_corpus() -> &'static Vec<Sample> {
    static CACHE: OnceLock<Vec<Sample>> = OnceLock::new();
    CACHE.get_or_init(|| {
        let cfg = GenConfig { seed: 0, n_images: 460, split: SplitKind::Balanced };
        balance(&generate_split(&cfg).expect("balanced corpus generates"))
            .expect("balancing succeeds")
    })
}

fn obj(
    id: &str,
    size: Size,
    color: Color,
    material: Material,
    shape: Shape,
    x: f64,
    y: f64,
) -> ObjectRecord {
    ObjectRecord { id: id.into(), size, color, material, shape, x, y, on_base: None }
}

#[test]
fn criterion_01_reference_evaluator_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for i in 0..1000 {
        let scene = common::random_scene(&mut rng);
        let q = common::random_question(&mut rng, 4);
        let fast = execute_question(&q, &scene);
        let slow = common::reference_answer(&q, &scene);
        match (&fast, &slow) {
            (Ok(a), Ok(b)) => assert_eq!(
                &a.label().to_string(),
                b,
                "pair {i}: {} on {scene:?}",
                serialize_program(&q)
            ),
            (Err(_), Err(_)) => {}
            _ => panic!(
                "pair {i}: evaluators disagree on {}: {fast:?} vs {slow:?}",
                serialize_program(&q)
            ),
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "equivalence sweep took {elapsed:?}");
    pass(1, "reference evaluator agrees on 1000 random questions");
}

#[test]
fn criterion_02_worked_examples() {
    // paint the green sphere cyan; cyan and yellow counts then tie
    let scene = Scene {
        seed: 1,
        objects: vec![
            obj("g", Size::Small, Color::Green, Material::Rubber, Shape::Sphere, 0.0, 0.0),
            obj("p", Size::Big, Color::Purple, Material::Metal, Shape::Cube, 2.0, 0.0),
            obj("y", Size::Big, Color::Yellow, Material::Rubber, Shape::Cube, -2.0, 0.0),
        ],
    };
    let a = parse_program(
        "change_color(filter_size(small,filter_color(green,filter_shape(sphere,scene()))),cyan)",
    )
    .unwrap();
    let q = parse_program(
        "equal_integer(count(filter_color(cyan,scene())),count(filter_color(yellow,scene())))",
    )
    .unwrap();
    let post = execute_action(&a, &scene).unwrap();
    assert_eq!(execute_question(&q, &post).unwrap(), Answer::Bool(true));

    // add a small brown cube; the brown-or-small pool grows from 5 to 6
    let scene = Scene {
        seed: 2,
        objects: vec![
            obj("o1", Size::Big, Color::Brown, Material::Rubber, Shape::Cube, -2.0, -2.0),
            obj("o2", Size::Big, Color::Brown, Material::Metal, Shape::Cylinder, -1.0, 2.0),
            obj("o3", Size::Small, Color::Gray, Material::Metal, Shape::Sphere, 0.0, 0.0),
            obj("o4", Size::Small, Color::Red, Material::Rubber, Shape::Cube, 1.0, -1.0),
            obj("o5", Size::Small, Color::Purple, Material::Metal, Shape::Cylinder, 2.0, 1.0),
            obj("o6", Size::Big, Color::Blue, Material::Metal, Shape::Sphere, -2.0, 1.0),
            obj("o7", Size::Big, Color::Green, Material::Rubber, Shape::Cylinder, 2.0, -2.0),
        ],
    };
    let a = parse_program(
        "add_rel(scene(),make_object(small,brown,rubber,cube),unique(filter_color(blue,filter_shape(sphere,scene()))),behind)",
    )
    .unwrap();
    let q = parse_program("count(or(filter_color(brown,scene()),filter_size(small,scene())))")
        .unwrap();
    assert_eq!(execute_question(&q, &scene).unwrap(), Answer::Count(5));
    let post = execute_action(&a, &scene).unwrap();
    assert_eq!(execute_question(&q, &post).unwrap(), Answer::Count(6));

    // move the red cylinder onto the yellow cube; what is now below it?
    let scene = Scene {
        seed: 3,
        objects: vec![
            obj("r", Size::Small, Color::Red, Material::Metal, Shape::Cylinder, 0.0, 0.0),
            obj("p", Size::Big, Color::Purple, Material::Rubber, Shape::Cylinder, -1.0, 1.0),
            obj("y", Size::Big, Color::Yellow, Material::Rubber, Shape::Cube, 1.0, 1.0),
            obj("g", Size::Big, Color::Green, Material::Rubber, Shape::Sphere, -2.0, -1.0),
        ],
    };
    let a = parse_program(
        "change_loc(scene(),unique(filter_color(red,scene())),unique(filter_color(yellow,scene())),on)",
    )
    .unwrap();
    let q = parse_program("query_color(unique(relate(unique(filter_color(red,scene())),below)))")
        .unwrap();
    let post = execute_action(&a, &scene).unwrap();
    assert_eq!(
        execute_question(&q, &post).unwrap(),
        Answer::Attr(clevr_hyp::scene::AttrValue::Color(Color::Yellow))
    );
    pass(2, "worked action/question examples yield yes, 6, yellow");
}

#[test]
fn criterion_03_bias_filter_on_the_removal_example() {
    let scene = Scene {
        seed: 4,
        objects: vec![
            obj("s", Size::Big, Color::Red, Material::Rubber, Shape::Sphere, -2.0, 0.0),
            obj("c", Size::Big, Color::Blue, Material::Metal, Shape::Cube, 2.0, 0.0),
            obj("g", Size::Small, Color::Green, Material::Rubber, Shape::Cube, 0.0, 1.0),
            obj("y", Size::Small, Color::Yellow, Material::Metal, Shape::Cylinder, 0.0, -1.0),
        ],
    };
    let a = parse_program("remove(filter_material(rubber,scene()))").unwrap();
    let post = execute_action(&a, &scene).unwrap();
    // the big sphere was rubber: its existence flips, so the pair is kept
    let q1 = parse_program("exist(filter_size(big,filter_shape(sphere,scene())))").unwrap();
    assert!(matches!(validate_pair(&scene, &post, &q1), Ok(Answer::Bool(false))));
    // the big cube is metal: the answer cannot depend on the action
    let q2 = parse_program("exist(filter_size(big,filter_shape(cube,scene())))").unwrap();
    assert!(matches!(validate_pair(&scene, &post, &q2), Err(Reject::Bias)));
    pass(3, "validity filter keeps the flipped question and drops the unaffected one");
}

#[test]
fn criterion_04_original_split_shape() {
    let samples = original_corpus();
    assert_eq!(samples.len(), 2500);
    for image in 0..100u64 {
        let per: Vec<&Sample> = samples.iter().filter(|s| s.image_id == image).collect();
        assert_eq!(per.len(), 25, "image {image}");
        for at in ["add", "remove", "change", "move_in_plane", "move_on"] {
            for qt in ["count", "exist", "compare_integer", "query_attr", "compare_attr"] {
                assert_eq!(
                    per.iter().filter(|s| s.action_type == at && s.question_type == qt).count(),
                    1,
                    "image {image} cell {at}/{qt}"
                );
            }
        }
    }
    pass(4, "100 images give 2500 samples over a uniform 5x5 type grid");
}

#[test]
fn criterion_05_balanced_answer_distribution() {
    let samples = balanced_corpus();
    assert!(samples.len() >= 2700, "only {} balanced samples", samples.len());
    let mut counts = [0f64; 27];
    for s in samples.iter() {
        counts[s.answer.index()] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    let expected = total / 27.0;
    let mut chi2 = 0.0;
    for (label, c) in ANSWER_LABELS.iter().zip(counts) {
        let share = c / total;
        assert!(
            (share - 1.0 / 27.0).abs() <= 0.03 * (1.0 / 27.0),
            "answer {label} holds {share:.4} of the corpus"
        );
        chi2 += (c - expected) * (c - expected) / expected;
    }
    // chi-squared critical value, 26 degrees of freedom, alpha = 0.01
    assert!(chi2 < 45.64, "chi-squared {chi2:.2}");
    pass(5, "balanced split is uniform over the 27 answers");
}

#[test]
fn criterion_06_corpus_statistics_envelope() {
    let original = compute_stats(original_corpus());
    assert!(
        (6.0..=7.0).contains(&original.avg_objects),
        "original avg objects {}",
        original.avg_objects
    );
    assert!(
        (10.0..=16.0).contains(&original.avg_action_len),
        "avg action words {}",
        original.avg_action_len
    );
    let balanced = compute_stats(balanced_corpus());
    assert!(
        balanced.avg_objects >= original.avg_objects,
        "balanced scenes smaller on average ({} vs {})",
        balanced.avg_objects,
        original.avg_objects
    );
    pass(6, "object counts and action lengths sit in the expected envelope");
}

#[test]
fn criterion_07_text_pair_uniqueness() {
    let stats = compute_stats(original_corpus());
    assert!(stats.unique_pair_ratio >= 0.60, "uniqueness {}", stats.unique_pair_ratio);
    pass(7, "at least 60% of (action, question) text pairs are unique");
}

#[test]
fn criterion_08_byte_identical_determinism() {
    let cfg = GenConfig { seed: 0, n_images: 20, split: SplitKind::Original };
    let a = generate_split(&cfg).unwrap();
    let b = generate_split(&cfg).unwrap();
    let c = generate_split_sequential(&cfg).unwrap();
    let mut bytes_a = Vec::new();
    let mut bytes_b = Vec::new();
    let mut bytes_c = Vec::new();
    write_samples_to(&mut bytes_a, &a, ExportMode::Full).unwrap();
    write_samples_to(&mut bytes_b, &b, ExportMode::Full).unwrap();
    write_samples_to(&mut bytes_c, &c, ExportMode::Full).unwrap();
    assert_eq!(bytes_a, bytes_b);
    assert_eq!(bytes_a, bytes_c);
    pass(8, "repeated and sequential generation are byte-identical");
}

#[test]
fn criterion_09_gold_answers_self_verify() {
    for s in original_corpus() {
        let actions: Vec<_> =
            s.action_programs.iter().map(|p| parse_program(p).unwrap()).collect();
        let post = execute_action_sequence(&actions, &s.scene).unwrap();
        let q = parse_program(&s.question_program).unwrap();
        assert_eq!(execute_question(&q, &post).unwrap(), s.answer, "image {}", s.image_id);
    }
    pass(9, "every stored answer re-derives from its programs");
}

#[test]
fn criterion_10_random_baseline_accuracy() {
    let samples = balanced_corpus();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let predictions: Vec<Prediction> = samples
        .iter()
        .map(|s| Prediction {
            image_id: s.image_id,
            pair_index: s.pair_index,
            answer: ANSWER_LABELS[rng.gen_range(0..27)].to_string(),
        })
        .collect();
    let report = score(samples, &predictions).unwrap();
    let expected = 1.0 / 27.0;
    assert!(
        (report.accuracy - expected).abs() <= 0.010,
        "random baseline accuracy {:.4}",
        report.accuracy
    );
    pass(10, "uniform random guessing scores 3.7% within a point");
}

#[test]
fn criterion_11_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..10_000 {
        let p = if i % 2 == 0 {
            common::random_question(&mut rng, 4)
        } else {
            common::random_action(&mut rng, 3)
        };
        let text = serialize_program(&p);
        let back = parse_program(&text).unwrap();
        assert_eq!(text, serialize_program(&back), "program {i}");
        assert_eq!(p.dialect, back.dialect);
    }
    let samples = original_corpus();
    assert!(samples.len() >= 1000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("roundtrip.jsonl");
    write_samples(&path, samples, ExportMode::Full).unwrap();
    assert_eq!(&read_samples(&path).unwrap(), samples);
    pass(11, "10k programs and a 1k-sample corpus survive round trips");
}

#[test]
fn criterion_12_two_hop_composition_is_consistent() {
    let cfg = GenConfig { seed: 0, n_images: 34, split: SplitKind::TwoHopTa };
    let samples = generate_split(&cfg).unwrap();
    assert!(samples.len() >= 500, "only {} two-hop samples", samples.len());
    for s in &samples {
        assert_eq!(s.action_programs.len(), 2);
        let p1 = parse_program(&s.action_programs[0]).unwrap();
        let p2 = parse_program(&s.action_programs[1]).unwrap();
        // composing step-by-step must equal running the sequence
        let mid = execute_action(&p1, &s.scene).unwrap();
        let stepwise = execute_action(&p2, &mid).unwrap();
        let sequenced =
            execute_action_sequence(&[p1, p2], &s.scene).unwrap();
        assert_eq!(stepwise, sequenced, "image {} pair {}", s.image_id, s.pair_index);
        let q = parse_program(&s.question_program).unwrap();
        assert_eq!(execute_question(&q, &sequenced).unwrap(), s.answer);
    }
    pass(12, "two-hop actions compose consistently on 500+ samples");
}
