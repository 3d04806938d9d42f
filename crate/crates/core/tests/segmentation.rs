use groupscope_core::corpus::split_text;
use groupscope_core::text::collapse_whitespace;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    language: String,
    text: String,
    sentences: Vec<String>,
}

fn cases() -> Vec<Case> {
    serde_json::from_str(include_str!("fixtures/segmentation.json")).unwrap()
}

#[test]
fn matches_hand_segmentation() {
    let cases = cases();
    let total: usize = cases.iter().map(|c| c.sentences.len()).sum();
    assert!(total >= 50);
    for c in &cases {
        assert_eq!(split_text(&c.text, &c.language), c.sentences, "text: {:?}", c.text);
    }
}

#[test]
fn fixture_reconstructs_and_is_idempotent() {
    for c in cases() {
        let got = split_text(&c.text, &c.language);
        assert_eq!(got.join(" "), collapse_whitespace(&c.text));
        for s in &got {
            assert_eq!(split_text(s, &c.language), vec![s.clone()]);
        }
    }
}
