use manip_core::grounding::Instruction;
use manip_core::router::{
    build_prompt, parse_labels, rule_labels, select_skills, PromptTemplate, RuleClient,
};
use manip_core::skills::SkillLabel;

// Literal pairs, outputs kept exactly as they are written in the reference listing.
const LISTING: [(&str, &str); 9] = [
    ("Pick up the lemon", r#"["pick"]"#),
    ("Put the screwdriver away", r#"["pick", place"]"#),
    (
        "Pls grab me the screwdriver and put it away",
        r#"["pick", "place"]"#,
    ),
    ("Grab the green bowl", r#"["grasp"]"#),
    ("Put the lemon in the bowl", r#"["pick", "place"]"#),
    ("Open the top drawer", r#"["open"]"#),
    ("Pls shut the drawer", r#"["close"]"#),
    ("put the expo marker away", r#"["pick", "place"]"#),
    ("put the Blue lego in the cabinet", r#"["pick", "place"]"#),
];

#[test]
fn rule_router_reproduces_listing_pairs() {
    let template = PromptTemplate::standard();
    for (input, output) in LISTING {
        let want = parse_labels(output).unwrap();
        assert_eq!(
            rule_labels(input).as_deref(),
            Some(want.as_slice()),
            "{input}"
        );
        let got = select_skills(&Instruction::new(input).unwrap(), &RuleClient, &template).unwrap();
        assert_eq!(got, want, "{input}");
    }
}

#[test]
fn standard_prompt_matches_golden_file() {
    let golden = include_str!("golden/standard_prompt.txt");
    let prompt = build_prompt(
        &Instruction::new("Pick up the lemon").unwrap(),
        &PromptTemplate::standard(),
    );
    assert_eq!(prompt, golden);
    let examples: usize = LISTING
        .iter()
        .map(|(i, _)| {
            let labels = rule_labels(i).unwrap();
            let rendered: Vec<String> = labels
                .iter()
                .map(|l| format!("\"{}\"", l.as_str()))
                .collect();
            format!("Input: \"{i}\"\nOutput: [{}]\n\n", rendered.join(", ")).len()
        })
        .sum();
    let stanza = "Input: \"Pick up the lemon\"\nOutput:".len();
    assert_eq!(prompt.len(), examples + stanza);
}

#[test]
fn template_labels_are_library_labels() {
    for ex in PromptTemplate::standard().examples {
        for l in ex.labels {
            assert!(SkillLabel::ALL.contains(&l));
        }
    }
}
