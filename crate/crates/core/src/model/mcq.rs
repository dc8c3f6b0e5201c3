use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Choice label. Exactly four exist and they always appear in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
    C,
    D,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::A, Label::B, Label::C, Label::D];

    pub fn as_char(self) -> char {
        match self {
            Label::A => 'A',
            Label::B => 'B',
            Label::C => 'C',
            Label::D => 'D',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Parses a bare label, tolerating surrounding whitespace, parentheses and case.
    pub fn parse(s: &str) -> Option<Label> {
        let s = s.trim().trim_matches(|c| c == '(' || c == ')' || c == '.');
        match s {
            "A" | "a" => Some(Label::A),
            "B" | "b" => Some(Label::B),
            "C" | "c" => Some(Label::C),
            "D" | "d" => Some(Label::D),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub label: Label,
    pub text: String,
}

/// A validated multiple-choice question: stem, four choices, answer, explanation.
///
/// Only [`validate_mcq`] constructs one from untrusted input, so every value
/// of this type satisfies the structural invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Value")]
pub struct Mcq {
    pub id: String,
    pub question: String,
    pub choices: [Choice; 4],
    pub answer: Label,
    pub explanation: String,
    pub subject: String,
}

impl TryFrom<Value> for Mcq {
    type Error = String;

    fn try_from(value: Value) -> Result<Self, Self::Error> {
        validate_mcq(&value).map_err(|errs| {
            errs.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ")
        })
    }
}

impl Mcq {
    pub fn choice(&self, label: Label) -> &Choice {
        &self.choices[label.index()]
    }

    pub fn answer_text(&self) -> &str {
        &self.choice(self.answer).text
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("Mcq serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(tag = "error", rename_all = "snake_case")]
pub enum ValidationError {
    #[error("missing field `{field}`")]
    MissingField { field: String },
    #[error("field `{field}` has the wrong type, expected {expected}")]
    WrongType { field: String, expected: String },
    #[error("`choices` must hold exactly 4 entries, found {found}")]
    WrongChoiceCount { found: usize },
    #[error("duplicate choice label `{label}` in `{field}`")]
    DuplicateLabel { field: String, label: String },
    #[error("`{field}` has label `{found}`, expected `{expected}`")]
    MisorderedLabel {
        field: String,
        expected: String,
        found: String,
    },
    #[error("`answer` is `{answer}`, which is not one of the choice labels")]
    AnswerNotInChoices { answer: String },
    #[error("`{field}` is empty")]
    EmptyText { field: String },
}

fn text_field<'a>(
    obj: &'a serde_json::Map<String, Value>,
    key: &str,
    name: &str,
    errors: &mut Vec<ValidationError>,
) -> Option<&'a str> {
    match obj.get(key) {
        None | Some(Value::Null) => {
            errors.push(ValidationError::MissingField { field: name.into() });
            None
        }
        Some(Value::String(s)) => {
            if s.trim().is_empty() {
                errors.push(ValidationError::EmptyText { field: name.into() });
            }
            Some(s)
        }
        Some(_) => {
            errors.push(ValidationError::WrongType {
                field: name.into(),
                expected: "string".into(),
            });
            None
        }
    }
}

fn parse_label(s: &str) -> Option<Label> {
    match s.trim() {
        "A" => Some(Label::A),
        "B" => Some(Label::B),
        "C" => Some(Label::C),
        "D" => Some(Label::D),
        _ => None,
    }
}

/// Checks a parsed JSON record against the question invariants.
///
/// Every violation is collected; the record is accepted only when the list
/// is empty. Text is kept verbatim so that re-validating the serialized
/// form of an accepted question is the identity.
pub fn validate_mcq(raw: &Value) -> Result<Mcq, Vec<ValidationError>> {
    let mut errors = Vec::new();
    let Some(obj) = raw.as_object() else {
        return Err(vec![ValidationError::WrongType {
            field: "<root>".into(),
            expected: "object".into(),
        }]);
    };

    let id = text_field(obj, "id", "id", &mut errors);
    let question = text_field(obj, "question", "question", &mut errors);
    let explanation = text_field(obj, "explanation", "explanation", &mut errors);

    let subject = match obj.get("subject") {
        None | Some(Value::Null) => Some(""),
        Some(Value::String(s)) => Some(s.as_str()),
        Some(_) => {
            errors.push(ValidationError::WrongType {
                field: "subject".into(),
                expected: "string".into(),
            });
            None
        }
    };

    let mut choices: Vec<Choice> = Vec::new();
    match obj.get("choices") {
        None | Some(Value::Null) => errors.push(ValidationError::MissingField {
            field: "choices".into(),
        }),
        Some(Value::Array(items)) => {
            if items.len() != 4 {
                errors.push(ValidationError::WrongChoiceCount { found: items.len() });
            }
            let mut seen: Vec<String> = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let field = format!("choices[{i}]");
                let Some(c) = item.as_object() else {
                    errors.push(ValidationError::WrongType {
                        field,
                        expected: "object with `label` and `text`".into(),
                    });
                    continue;
                };
                let label_field = format!("{field}.label");
                let label = text_field(c, "label", &label_field, &mut errors).map(str::trim);
                let text = text_field(c, "text", &format!("{field}.text"), &mut errors);
                let Some(label) = label else { continue };
                if seen.iter().any(|s| s == label) {
                    errors.push(ValidationError::DuplicateLabel {
                        field: label_field.clone(),
                        label: label.to_string(),
                    });
                }
                seen.push(label.to_string());
                let expected = Label::ALL.get(i).copied();
                let parsed = parse_label(label);
                if parsed.is_none() || parsed != expected {
                    errors.push(ValidationError::MisorderedLabel {
                        field: label_field,
                        expected: expected.map(|l| l.to_string()).unwrap_or_else(|| "-".into()),
                        found: label.to_string(),
                    });
                }
                if let (Some(l), Some(t)) = (parsed, text) {
                    choices.push(Choice {
                        label: l,
                        text: t.to_string(),
                    });
                }
            }
        }
        Some(_) => errors.push(ValidationError::WrongType {
            field: "choices".into(),
            expected: "array".into(),
        }),
    }

    let answer = match obj.get("answer") {
        None | Some(Value::Null) => {
            errors.push(ValidationError::MissingField {
                field: "answer".into(),
            });
            None
        }
        Some(Value::String(s)) => {
            let found = parse_label(s);
            if found.is_none() {
                errors.push(ValidationError::AnswerNotInChoices { answer: s.clone() });
            }
            found
        }
        Some(_) => {
            errors.push(ValidationError::WrongType {
                field: "answer".into(),
                expected: "string".into(),
            });
            None
        }
    };

    if !errors.is_empty() {
        return Err(errors);
    }
    // All four choices parsed in order, so the conversion cannot fail here.
    let choices: [Choice; 4] = choices.try_into().map_err(|_| {
        vec![ValidationError::WrongChoiceCount { found: 0 }]
    })?;
    Ok(Mcq {
        id: id.unwrap_or_default().to_string(),
        question: question.unwrap_or_default().to_string(),
        choices,
        answer: answer.expect("answer checked"),
        explanation: explanation.unwrap_or_default().to_string(),
        subject: subject.unwrap_or_default().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use serde_json::json;

    fn raw() -> Value {
        json!({
            "id": "q1",
            "question": "What is 6 x 7?",
            "choices": [
                {"label": "A", "text": "40"},
                {"label": "B", "text": "42"},
                {"label": "C", "text": "44"},
                {"label": "D", "text": "48"}
            ],
            "answer": "B",
            "explanation": "6 × 7 = 42, so the answer is B.",
            "subject": "arithmetic"
        })
    }

    #[test]
    fn accepts_well_formed_record() {
        let mcq = validate_mcq(&raw()).unwrap();
        assert_eq!(mcq.answer, Label::B);
        assert_eq!(mcq.answer_text(), "42");
    }

    #[test]
    fn three_choices_is_wrong_count() {
        let mut r = raw();
        r["choices"].as_array_mut().unwrap().pop();
        let errs = validate_mcq(&r).unwrap_err();
        assert!(errs.contains(&ValidationError::WrongChoiceCount { found: 3 }));
    }

    #[test]
    fn answer_e_not_in_choices() {
        let mut r = raw();
        r["answer"] = json!("E");
        let errs = validate_mcq(&r).unwrap_err();
        assert_eq!(
            errs,
            vec![ValidationError::AnswerNotInChoices { answer: "E".into() }]
        );
    }

    #[test]
    fn duplicate_and_missing_fields_are_all_reported() {
        let mut r = raw();
        r["choices"][2]["label"] = json!("B");
        r.as_object_mut().unwrap().remove("explanation");
        r["question"] = json!("   ");
        let errs = validate_mcq(&r).unwrap_err();
        assert!(errs.contains(&ValidationError::MissingField {
            field: "explanation".into()
        }));
        assert!(errs.contains(&ValidationError::EmptyText {
            field: "question".into()
        }));
        assert!(errs.iter().any(|e| matches!(e, ValidationError::DuplicateLabel { label, .. } if label == "B")));
    }

    #[test]
    fn empty_choice_text_names_the_choice() {
        let mut r = raw();
        r["choices"][3]["text"] = json!("");
        let errs = validate_mcq(&r).unwrap_err();
        assert_eq!(
            errs,
            vec![ValidationError::EmptyText {
                field: "choices[3].text".into()
            }]
        );
    }

    #[test]
    fn deserialize_goes_through_validation() {
        let mut r = raw();
        r["answer"] = json!("Z");
        assert!(serde_json::from_value::<Mcq>(r).is_err());
        assert!(serde_json::from_value::<Mcq>(raw()).is_ok());
    }

    fn text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 .,=×+/°\\-]{0,20}[a-zA-Z0-9]".prop_map(|s| s)
    }

    proptest! {
        #[test]
        fn validation_is_idempotent_and_round_trips(
            id in "[a-z0-9-]{1,8}",
            q in text(),
            cs in proptest::array::uniform4(text()),
            ans in 0usize..4,
            e in text(),
            subj in "[A-Za-z ]{0,10}",
        ) {
            let r = json!({
                "id": id, "question": q,
                "choices": Label::ALL.iter().zip(cs.iter())
                    .map(|(l, t)| json!({"label": l.to_string(), "text": t}))
                    .collect::<Vec<_>>(),
                "answer": Label::ALL[ans].to_string(),
                "explanation": e, "subject": subj,
            });
            let mcq = validate_mcq(&r).unwrap();
            let s1 = mcq.to_json();
            let again: Mcq = serde_json::from_str(&s1).unwrap();
            prop_assert_eq!(&again, &mcq);
            prop_assert_eq!(again.to_json(), s1);
        }
    }
}
