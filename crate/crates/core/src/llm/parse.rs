use std::fmt;

use serde_json::Value;
use thiserror::Error;

use crate::design_space::Param;
use crate::lumina::{Move, StrategyDirective};
use crate::perf_model::Resource;

/// Why a reply could not be read, with the byte offset in the reply.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub position: usize,
    pub reason: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "at byte {}: {}", self.position, self.reason)
    }
}

fn err(position: usize, reason: impl Into<String>) -> ParseError {
    ParseError {
        position,
        reason: reason.into(),
    }
}

/// Locates the JSON object in a reply: the first fenced code block if there
/// is one, otherwise the first balanced `{...}`. Returns the block and its
/// byte offset.
pub fn extract_json_block(text: &str) -> Result<(&str, usize), ParseError> {
    if text.trim().is_empty() {
        return Err(err(0, "empty reply"));
    }
    if let Some(fence) = text.find("```") {
        let after = fence + 3;
        // skip an info string such as `json`
        let body_start = text[after..].find('\n').map_or(after, |n| after + n + 1);
        let Some(close) = text[body_start..].find("```") else {
            return Err(err(fence, "unterminated code fence"));
        };
        return Ok((&text[body_start..body_start + close], body_start));
    }
    let Some(open) = text.find('{') else {
        return Err(err(0, "no JSON object in reply"));
    };
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[open..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok((&text[open..open + i + 1], open));
                }
            }
            _ => {}
        }
    }
    Err(err(open, "unbalanced braces"))
}

fn line_col_to_offset(block: &str, line: usize, col: usize) -> usize {
    let mut offset = 0;
    for (i, l) in block.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return offset + col.saturating_sub(1).min(l.len());
        }
        offset += l.len();
    }
    block.len()
}

fn parse_move(v: &Value, at: usize, what: &str) -> Result<Move, ParseError> {
    let obj = v
        .as_object()
        .ok_or_else(|| err(at, format!("{what} must be an object with param and steps")))?;
    let name = obj
        .get("param")
        .and_then(Value::as_str)
        .ok_or_else(|| err(at, format!("{what} is missing a string `param`")))?;
    let param: Param = name
        .parse()
        .map_err(|_| err(at, format!("unknown parameter `{name}`")))?;
    let steps = match obj.get("steps") {
        None => 1,
        Some(s) => s
            .as_i64()
            .ok_or_else(|| err(at, format!("{what} `steps` must be an integer")))?,
    };
    if steps == 0 || steps.abs() > 8 {
        return Err(err(
            at,
            format!("{what} `steps` must be a nonzero integer in [-8, 8]"),
        ));
    }
    Ok(Move {
        param,
        steps: steps as i32,
    })
}

/// Parses a directive from the structured block of an LLM reply.
///
/// A tradeoff given with positive steps is read as a decrease.
pub fn parse_directive(text: &str) -> Result<StrategyDirective, ParseError> {
    let (block, offset) = extract_json_block(text)?;
    let value: Value = serde_json::from_str(block).map_err(|e| {
        err(
            offset + line_col_to_offset(block, e.line(), e.column()),
            e.to_string(),
        )
    })?;
    let obj = value
        .as_object()
        .ok_or_else(|| err(offset, "top level must be a JSON object"))?;
    let field_at = |name: &str| {
        text[offset..]
            .find(&format!("\"{name}\""))
            .map_or(offset, |i| offset + i)
    };

    for key in obj.keys() {
        if !["target_bottleneck", "boosts", "tradeoff", "rationale"].contains(&key.as_str()) {
            return Err(err(field_at(key), format!("unexpected field `{key}`")));
        }
    }
    let target_name = obj
        .get("target_bottleneck")
        .and_then(Value::as_str)
        .ok_or_else(|| err(offset, "missing string field `target_bottleneck`"))?;
    let target_bottleneck = Resource::parse(target_name).ok_or_else(|| {
        err(
            field_at("target_bottleneck"),
            format!("unknown resource `{target_name}` (expected tensor_compute, vector_compute, memory_bw or interconnect)"),
        )
    })?;

    let at = field_at("boosts");
    let boosts_v = obj
        .get("boosts")
        .and_then(Value::as_array)
        .ok_or_else(|| err(at, "missing array field `boosts`"))?;
    if boosts_v.is_empty() {
        return Err(err(at, "`boosts` must not be empty"));
    }
    let mut boosts = Vec::new();
    for b in boosts_v {
        let m = parse_move(b, at, "boost")?;
        if m.steps < 0 {
            return Err(err(
                at,
                format!("boost on `{}` must have positive steps", m.param),
            ));
        }
        boosts.push(m);
    }

    let at = field_at("tradeoff");
    let tradeoff = match obj.get("tradeoff") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let m = parse_move(v, at, "tradeoff")?;
            Some(Move {
                param: m.param,
                steps: -m.steps.abs(),
            })
        }
    };
    let rationale = obj
        .get("rationale")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let d = StrategyDirective {
        target_bottleneck,
        boosts,
        tradeoff,
        rationale,
    };
    d.check().map_err(|e| err(offset, e.to_string()))?;
    Ok(d)
}

/// Like [`parse_directive`], but also rejects directives touching more than
/// `max_params` parameters.
pub fn parse_directive_in(text: &str, max_params: usize) -> Result<StrategyDirective, ParseError> {
    let d = parse_directive(text)?;
    if d.aggressiveness() > max_params {
        return Err(err(
            0,
            format!(
                "directive changes {} parameters; at most {max_params} allowed",
                d.aggressiveness()
            ),
        ));
    }
    Ok(d)
}

/// Canonical payload text; the inverse of [`parse_directive`].
pub fn serialize_directive(d: &StrategyDirective) -> String {
    d.to_json()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fenced_payload() {
        let text = "Here is my plan.\n```json\n{\"target_bottleneck\": \"interconnect\", \"boosts\": [{\"param\": \"link_count\", \"steps\": 1}], \"tradeoff\": {\"param\": \"core_count\", \"steps\": -1}, \"rationale\": \"more links\"}\n```\n";
        let d = parse_directive(text).unwrap();
        assert_eq!(d.target_bottleneck, Resource::Interconnect);
        assert_eq!(
            d.boosts,
            vec![Move {
                param: Param::LinkCount,
                steps: 1
            }]
        );
        assert_eq!(
            d.tradeoff,
            Some(Move {
                param: Param::CoreCount,
                steps: -1
            })
        );
        assert_eq!(d.rationale, "more links");
    }

    #[test]
    fn parses_bare_payload_with_prose() {
        let text = "I think {\"target_bottleneck\":\"memory_bw\",\"boosts\":[{\"param\":\"mem_channels\",\"steps\":1}],\"tradeoff\":null} works {best}.";
        let d = parse_directive(text).unwrap();
        assert_eq!(d.boosts[0].param, Param::MemChannels);
        assert!(d.tradeoff.is_none());
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let text = r#"{"target_bottleneck":"memory_bw","boosts":[{"param":"l2_cache","steps":1}]}"#;
        let e = parse_directive(text).unwrap_err();
        assert!(e.reason.contains("l2_cache"));
        assert_eq!(e.position, text.find("\"boosts\"").unwrap());
    }

    #[test]
    fn empty_and_broken_text() {
        assert_eq!(parse_directive("").unwrap_err().position, 0);
        assert!(parse_directive("no json here").is_err());
        let e = parse_directive("{\"target_bottleneck\": }").unwrap_err();
        assert!(e.position > 0);
        assert!(parse_directive("```json\n{}").is_err());
    }

    #[test]
    fn round_trip() {
        let d = StrategyDirective {
            target_bottleneck: Resource::TensorCompute,
            boosts: vec![
                Move {
                    param: Param::SystolicDim,
                    steps: 1,
                },
                Move {
                    param: Param::SublaneCount,
                    steps: 2,
                },
            ],
            tradeoff: Some(Move {
                param: Param::SramKb,
                steps: -1,
            }),
            rationale: "quote \" and brace }".into(),
        };
        let s = serialize_directive(&d);
        assert_eq!(serialize_directive(&parse_directive(&s).unwrap()), s);
    }
}
