use serde_json::Value;

use crate::corpus::{dedup_topics, Topic};
use crate::error::{Error, Result};

/// Extracts the `{"topics": [...]}` object from a completion, tolerating
/// surrounding prose, code fences and single-quoted pseudo-JSON.
pub fn parse_topics(completion: &str) -> Result<Vec<Topic>> {
    let candidates = [completion.to_string(), completion.replace('\'', "\"")];
    for text in &candidates {
        for (start, _) in text.match_indices('{') {
            let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
            let Some(Ok(value)) = stream.next() else {
                continue;
            };
            if let Some(topics) = topics_from(&value) {
                return topics;
            }
        }
    }
    Err(Error::TopicParse(format!(
        "no JSON object with a \"topics\" array in completion: {}",
        truncate(completion, 120)
    )))
}

fn topics_from(value: &Value) -> Option<Result<Vec<Topic>>> {
    let arr = value.as_object()?.get("topics")?.as_array()?;
    let mut out = Vec::with_capacity(arr.len());
    for item in arr {
        let label = item.as_str()?;
        if let Ok(t) = Topic::new(label) {
            out.push(t);
        }
    }
    let out = dedup_topics(out);
    if out.is_empty() {
        return Some(Err(Error::TopicParse("topics array is empty".into())));
    }
    Some(Ok(out))
}

fn truncate(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        s.to_string()
    } else {
        format!("{}...", s.chars().take(n).collect::<String>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(ts: &[Topic]) -> Vec<&str> {
        ts.iter().map(Topic::label).collect()
    }

    #[test]
    fn case_fold_dedup() {
        let t = parse_topics(r#"{"topics": ["A", "a", "B"]}"#).unwrap();
        assert_eq!(labels(&t), vec!["a", "b"]);
    }

    #[test]
    fn fenced_json_inside_prose() {
        let completion = "Here you go: ```json {\"topics\":[\"x\"]}```";
        // oracle: the JSON substring cut out by hand
        let by_hand = &completion[completion.find('{').unwrap()..=completion.rfind('}').unwrap()];
        assert_eq!(by_hand, "{\"topics\":[\"x\"]}");
        let expected: Value = serde_json::from_str(by_hand).unwrap();
        let got = parse_topics(completion).unwrap();
        assert_eq!(labels(&got), vec![expected["topics"][0].as_str().unwrap()]);
    }

    #[test]
    fn single_quoted_like_the_prompt_example() {
        let t = parse_topics("{\n'topics': ['Accident Reporting', 'penalties']\n}").unwrap();
        assert_eq!(labels(&t), vec!["accident reporting", "penalties"]);
    }

    #[test]
    fn skips_unrelated_objects() {
        let t = parse_topics(r#"{"note": 1} then {"topics": ["y"]}"#).unwrap();
        assert_eq!(labels(&t), vec!["y"]);
    }

    #[test]
    fn failures() {
        assert!(matches!(parse_topics("no json here"), Err(Error::TopicParse(_))));
        assert!(parse_topics(r#"{"topics": []}"#).is_err());
        assert!(parse_topics(r#"{"topics": [1, 2]}"#).is_err());
        assert!(parse_topics(r#"{"subjects": ["a"]}"#).is_err());
    }
}
