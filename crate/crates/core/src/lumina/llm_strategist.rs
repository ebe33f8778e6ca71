use serde::Deserialize;

use super::engine::{Proposal, Strategist};
use super::influence::{InfluenceMap, InfluenceRow, Metric, Sign, Source};
use super::strategy::{se_propose_rule, SeContext};
use super::LuminaError;
use crate::design_space::Param;
use crate::llm::{
    extract_json_block, parse_directive_in, prompts, ChatMessage, ChatRequest, Gateway, ParseError,
};

/// Asks an LLM for each directive. A reply that does not parse or is not
/// admissible gets one corrective re-prompt; after that, or on any gateway
/// error, the rule strategist answers and the sample is flagged.
pub struct LlmStrategist {
    gateway: Gateway,
    pub temperature: f64,
    pub recent: usize,
}

impl LlmStrategist {
    pub fn new(gateway: Gateway) -> Self {
        LlmStrategist {
            gateway,
            temperature: 0.0,
            recent: 6,
        }
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    fn user_prompt(&self, ctx: &SeContext) -> String {
        let phase = ctx.phase();
        let stalls = crate::perf_model::Resource::ALL
            .iter()
            .map(|&r| format!("{r}={:.3}", phase.stall_share.get(r)))
            .collect::<Vec<_>>()
            .join(", ");
        let influence = ctx
            .ahk
            .rows()
            .iter()
            .filter(|r| r.sign != Sign::Zero)
            .map(|r| {
                let mag = r
                    .magnitude
                    .map(|m| format!("{m:.4e}"))
                    .unwrap_or_else(|| "?".into());
                format!("{}, {}, {}, {}", r.param, r.metric, r.sign.symbol(), mag)
            })
            .collect::<Vec<_>>()
            .join("\n");
        let failures = if ctx.tm.failures().is_empty() {
            "none".to_string()
        } else {
            ctx.tm
                .failures()
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join("\n")
        };
        let samples = ctx.tm.samples();
        let recent = samples[samples.len().saturating_sub(self.recent)..]
            .iter()
            .map(|s| {
                let o = s.objectives().0;
                format!(
                    "{} -> ({:.3}, {:.3}, {:.3}), {:?}",
                    s.design, o[0], o[1], o[2], s.outcome
                )
            })
            .collect::<Vec<_>>()
            .join("\n");
        let m = ctx.metrics;
        prompts::render(
            prompts::STRATEGIST_USER,
            &[
                ("target", ctx.target.to_string()),
                ("design", ctx.base.to_string()),
                (
                    "metrics",
                    format!("({:.4}, {:.4}, {:.4})", m.ttft_n, m.tpot_n, m.area_n),
                ),
                (
                    "phase",
                    if ctx.target == Metric::Ttft {
                        "prefill".into()
                    } else {
                        "decode".into()
                    },
                ),
                ("stalls", stalls),
                ("dominant", phase.dominant_resource.to_string()),
                ("influence", influence),
                ("failures", failures),
                ("recent", recent),
            ],
        )
    }
}

impl Strategist for LlmStrategist {
    fn propose(&mut self, ctx: &SeContext) -> Result<Proposal, LuminaError> {
        let system = prompts::render(
            prompts::STRATEGIST_SYSTEM,
            &[("aggressiveness", ctx.aggressiveness.to_string())],
        );
        let mut req = ChatRequest::new(self.gateway.model_name(), system, self.user_prompt(ctx));
        req.temperature = self.temperature;

        for attempt in 0..2 {
            let reply = match self.gateway.complete(&req) {
                Ok(c) => c.text,
                Err(e) => {
                    log::warn!("LLM strategist unavailable ({e}); using rules");
                    break;
                }
            };
            let problem = match parse_directive_in(&reply, ctx.aggressiveness) {
                Ok(d) => match ctx.admissible(&d) {
                    Ok(_) => {
                        return Ok(Proposal {
                            directive: d,
                            llm_fallback: false,
                        })
                    }
                    Err(e) => e.to_string(),
                },
                Err(e) => e.to_string(),
            };
            log::info!(
                "LLM directive rejected (attempt {}): {problem}",
                attempt + 1
            );
            req.messages.push(ChatMessage::assistant(reply));
            req.messages.push(ChatMessage::user(format!(
                "That directive was rejected: {problem}. Reply again with one corrected JSON directive."
            )));
        }
        se_propose_rule(ctx).map(|directive| Proposal {
            directive,
            llm_fallback: true,
        })
    }
}

#[derive(Deserialize)]
struct MapReply {
    entries: Vec<MapEntry>,
}

#[derive(Deserialize)]
struct MapEntry {
    param: String,
    metric: String,
    sign: String,
}

/// Asks the LLM for the qualitative influence signs. A map that contradicts
/// a structural hard zero is rejected with `LlmMapInvalid`; callers fall
/// back to [`InfluenceMap::structural`].
pub fn quale_llm(gateway: &mut Gateway) -> Result<InfluenceMap, LuminaError> {
    let req = ChatRequest::new(
        gateway.model_name(),
        prompts::QUALE_SYSTEM,
        prompts::MODEL_DESCRIPTION,
    );
    let text = gateway.complete(&req)?.text;
    let (block, offset) = extract_json_block(&text).map_err(crate::llm::LlmError::from)?;
    let reply: MapReply = serde_json::from_str(block).map_err(|e| {
        crate::llm::LlmError::from(ParseError {
            position: offset,
            reason: e.to_string(),
        })
    })?;
    let mut rows = Vec::with_capacity(reply.entries.len());
    for e in reply.entries {
        let bad = |reason: String| {
            crate::llm::LlmError::from(ParseError {
                position: offset,
                reason,
            })
        };
        let param: Param = e
            .param
            .parse()
            .map_err(|_| bad(format!("unknown parameter `{}`", e.param)))?;
        let metric = Metric::parse(&e.metric)
            .ok_or_else(|| bad(format!("unknown metric `{}`", e.metric)))?;
        let sign = Sign::parse(&e.sign).ok_or_else(|| bad(format!("unknown sign `{}`", e.sign)))?;
        rows.push(InfluenceRow {
            param,
            metric,
            sign,
            magnitude: None,
            source: Source::Structural,
        });
    }
    InfluenceMap::from_rows(&rows)
}
