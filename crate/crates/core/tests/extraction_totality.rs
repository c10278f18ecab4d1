//! Extraction must return a payload or a malformed-output error for any
//! input, never panic.

use exrefine::llm::{extract_stage_output, LlmError, StageKind};
use proptest::prelude::*;

fn noisy_text() -> impl Strategy<Value = String> {
    let pieces = prop_oneof![
        Just("```".to_string()),
        Just("```isabelle\n".to_string()),
        Just("\n".to_string()),
        Just("relevant: ".to_string()),
        Just("keep:".to_string()),
        Just("f1: ".to_string()),
        Just("then have \"".to_string()),
        Just("show ?thesis using asm by blast".to_string()),
        Just("∀x. P(x) → ".to_string()),
        Just("\\<forall>".to_string()),
        "[ -~]{0,12}",
        any::<char>().prop_map(String::from),
    ];
    prop::collection::vec(pieces, 0..30).prop_map(|v| v.concat())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn extraction_is_total(raw in noisy_text()) {
        for stage in StageKind::ALL {
            match extract_stage_output(stage, &raw) {
                Ok(_) | Err(LlmError::MalformedStageOutput { .. }) => {}
                Err(other) => prop_assert!(false, "unexpected error {other:?}"),
            }
        }
    }
}
