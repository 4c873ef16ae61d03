use dglmnet::glm::class_probability;
use dglmnet::ingest::ExampleSet;
use dglmnet::metrics::{evaluate, log_loss};
use dglmnet::synth::{generate, SynthSpec};

#[test]
fn true_probabilities_have_the_lowest_expected_log_loss() {
    let s = generate(&SynthSpec::new(40_000, 50, 8, 77));
    let set = ExampleSet::from_parsed(&s.data);
    let truth = set.margins(&s.true_beta);
    let best = evaluate(&truth, set.labels()).unwrap().log_loss;
    let probs = |m: &[f64]| m.iter().map(|&v| class_probability(v).unwrap()).collect::<Vec<_>>();
    let alternatives = [
        truth.iter().map(|m| 0.5 * m).collect::<Vec<_>>(),
        truth.iter().map(|m| 1.5 * m).collect(),
        truth.iter().map(|m| m + 0.7).collect(),
        vec![0.0; truth.len()],
    ];
    for alt in &alternatives {
        let other = log_loss(&probs(alt), set.labels()).unwrap();
        assert!(best <= other + 1e-2, "true {best} vs {other}");
    }
}
