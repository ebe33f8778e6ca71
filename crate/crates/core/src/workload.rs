//! Per-GPU operator chains for one transformer layer.
//!
//! Counts are design independent: activation traffic is recorded untiled and
//! unbuffered, and the performance model decides per design how much of it
//! actually reaches DRAM (see `perf_model`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorkloadError {
    #[error("invalid model config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: u64,
    pub n_head: u64,
    pub d_head: u64,
    pub d_ffn: u64,
    pub elem_bytes: u64,
    pub tp_degree: u64,
}

impl Default for ModelConfig {
    /// GPT-3 175B layer, FP16, 8-way tensor parallel.
    fn default() -> Self {
        ModelConfig {
            d_model: 12288,
            n_head: 96,
            d_head: 128,
            d_ffn: 49152,
            elem_bytes: 2,
            tp_degree: 8,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let err = |m: String| Err(WorkloadError::Config(m));
        if self.d_model == 0 || self.n_head == 0 || self.d_head == 0 || self.d_ffn == 0 {
            return err("dimensions must be positive".into());
        }
        if self.d_model != self.n_head * self.d_head {
            return err(format!(
                "d_model {} != n_head {} * d_head {}",
                self.d_model, self.n_head, self.d_head
            ));
        }
        if self.elem_bytes == 0 {
            return err("elem_bytes must be positive".into());
        }
        if self.tp_degree == 0
            || self.n_head % self.tp_degree != 0
            || self.d_ffn % self.tp_degree != 0
        {
            return err(format!(
                "tp_degree {} must divide n_head {} and d_ffn {}",
                self.tp_degree, self.n_head, self.d_ffn
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitClass {
    Tensor,
    Vector,
    Comm,
}

/// `count` independent (M x K) * (K x N) products.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GemmDims {
    pub m: u64,
    pub k: u64,
    pub n: u64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub name: String,
    pub unit_class: UnitClass,
    pub flops: f64,
    /// Parameter bytes streamed once per execution.
    pub weight_bytes: f64,
    /// Activation plus cache traffic: `act_in_bytes + act_out_bytes + state_bytes`.
    pub io_bytes: f64,
    pub act_in_bytes: f64,
    pub act_out_bytes: f64,
    /// KV-cache reads; always served from DRAM.
    pub state_bytes: f64,
    /// Collective payload before the ring factor.
    pub comm_bytes: f64,
    pub gemm_dims: Option<GemmDims>,
}

impl OperatorSpec {
    /// Tensor-unit operator. `weights` marks the K x N operand as parameters.
    pub fn matmul(name: &str, dims: GemmDims, elem_bytes: u64, weights: bool) -> Self {
        let eb = elem_bytes as f64;
        let (m, k, n, c) = (
            dims.m as f64,
            dims.k as f64,
            dims.n as f64,
            dims.count as f64,
        );
        let weight_bytes = if weights { k * n * eb * c } else { 0.0 };
        let act_in = if weights {
            m * k * eb * c
        } else {
            (m * k + k * n) * eb * c
        };
        let act_out = m * n * eb * c;
        OperatorSpec {
            name: name.to_string(),
            unit_class: UnitClass::Tensor,
            flops: 2.0 * m * k * n * c,
            weight_bytes,
            io_bytes: act_in + act_out,
            act_in_bytes: act_in,
            act_out_bytes: act_out,
            state_bytes: 0.0,
            comm_bytes: 0.0,
            gemm_dims: Some(dims),
        }
    }

    /// Row-wise layernorm over `rows x width` elements.
    pub fn layernorm(name: &str, rows: u64, width: u64, elem_bytes: u64) -> Self {
        let elems = (rows * width) as f64;
        Self::vector(name, 5.0 * elems, elems * elem_bytes as f64)
    }

    fn vector(name: &str, flops: f64, tensor_bytes: f64) -> Self {
        OperatorSpec {
            name: name.to_string(),
            unit_class: UnitClass::Vector,
            flops,
            weight_bytes: 0.0,
            io_bytes: 2.0 * tensor_bytes,
            act_in_bytes: tensor_bytes,
            act_out_bytes: tensor_bytes,
            state_bytes: 0.0,
            comm_bytes: 0.0,
            gemm_dims: None,
        }
    }

    fn allreduce(name: &str, payload: f64) -> Self {
        OperatorSpec {
            name: name.to_string(),
            unit_class: UnitClass::Comm,
            flops: 0.0,
            weight_bytes: 0.0,
            io_bytes: 0.0,
            act_in_bytes: 0.0,
            act_out_bytes: 0.0,
            state_bytes: 0.0,
            comm_bytes: payload,
            gemm_dims: None,
        }
    }

    /// Attention product whose operands are activations or cached keys/values.
    fn attention(
        name: &str,
        dims: GemmDims,
        flops: f64,
        act_in: f64,
        act_out: f64,
        state: f64,
    ) -> Self {
        OperatorSpec {
            name: name.to_string(),
            unit_class: UnitClass::Tensor,
            flops,
            weight_bytes: 0.0,
            io_bytes: act_in + act_out + state,
            act_in_bytes: act_in,
            act_out_bytes: act_out,
            state_bytes: state,
            comm_bytes: 0.0,
            gemm_dims: Some(dims),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Prefill,
    Decode,
}

/// Operators run back to back in list order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGraph {
    pub phase: Phase,
    pub batch: u64,
    pub seq_or_kv_len: u64,
    pub operators: Vec<OperatorSpec>,
}

impl PhaseGraph {
    /// A graph holding one operator, for operator-level targets.
    pub fn single(phase: Phase, op: OperatorSpec) -> Self {
        PhaseGraph {
            phase,
            batch: 1,
            seq_or_kv_len: 1,
            operators: vec![op],
        }
    }

    pub fn total_flops(&self) -> f64 {
        self.operators.iter().map(|o| o.flops).sum()
    }
}

/// Builds the attention + FFN chain for `q_len` query tokens attending to
/// `kv_len` keys. Decode reads keys and values from the cache.
fn layer_chain(
    cfg: &ModelConfig,
    batch: u64,
    q_len: u64,
    kv_len: u64,
    decode: bool,
) -> Vec<OperatorSpec> {
    let d = cfg.d_model;
    let tp = cfg.tp_degree;
    let eb = cfg.elem_bytes;
    let heads = cfg.n_head / tp;
    let dh = cfg.d_head;
    let tokens = batch * q_len;

    // Prefill runs one (S x dh x L) product per sequence and head. Decode
    // stacks the batch's single-token queries, giving M = batch per head.
    let (score_dims, av_dims) = if decode {
        (
            GemmDims {
                m: batch,
                k: dh,
                n: kv_len,
                count: heads,
            },
            GemmDims {
                m: batch,
                k: kv_len,
                n: dh,
                count: heads,
            },
        )
    } else {
        (
            GemmDims {
                m: q_len,
                k: dh,
                n: kv_len,
                count: batch * heads,
            },
            GemmDims {
                m: q_len,
                k: kv_len,
                n: dh,
                count: batch * heads,
            },
        )
    };
    let ebf = eb as f64;
    let attn_flops = 2.0 * (batch * heads * q_len * kv_len * dh) as f64;
    let kv_bytes = (batch * heads * kv_len * dh) as f64 * ebf;
    let q_bytes = (batch * heads * q_len * dh) as f64 * ebf;
    let score_elems = (batch * heads * q_len * kv_len) as f64;
    let score_bytes = score_elems * ebf;

    // Prefill keys/values are fresh activations; decode reads them from the cache.
    let (qk, av) = if decode {
        (
            OperatorSpec::attention(
                "qk_t",
                score_dims,
                attn_flops,
                q_bytes,
                score_bytes,
                kv_bytes,
            ),
            OperatorSpec::attention(
                "attn_v",
                av_dims,
                attn_flops,
                score_bytes,
                q_bytes,
                kv_bytes,
            ),
        )
    } else {
        (
            OperatorSpec::attention(
                "qk_t",
                score_dims,
                attn_flops,
                q_bytes + kv_bytes,
                score_bytes,
                0.0,
            ),
            OperatorSpec::attention(
                "attn_v",
                av_dims,
                attn_flops,
                score_bytes + kv_bytes,
                q_bytes,
                0.0,
            ),
        )
    };

    let softmax = OperatorSpec::vector("softmax", 5.0 * score_elems, score_bytes);
    let payload = (tokens * d) as f64 * ebf;

    vec![
        OperatorSpec::matmul(
            "qkv_proj",
            GemmDims {
                m: tokens,
                k: d,
                n: 3 * d / tp,
                count: 1,
            },
            eb,
            true,
        ),
        qk,
        softmax,
        av,
        OperatorSpec::matmul(
            "out_proj",
            GemmDims {
                m: tokens,
                k: d / tp,
                n: d,
                count: 1,
            },
            eb,
            true,
        ),
        OperatorSpec::allreduce("allreduce_attn", payload),
        OperatorSpec::layernorm("layernorm_1", tokens, d, eb),
        OperatorSpec::matmul(
            "ffn_up",
            GemmDims {
                m: tokens,
                k: d,
                n: cfg.d_ffn / tp,
                count: 1,
            },
            eb,
            true,
        ),
        OperatorSpec::matmul(
            "ffn_down",
            GemmDims {
                m: tokens,
                k: cfg.d_ffn / tp,
                n: d,
                count: 1,
            },
            eb,
            true,
        ),
        OperatorSpec::allreduce("allreduce_ffn", payload),
        OperatorSpec::layernorm("layernorm_2", tokens, d, eb),
    ]
}

/// Prefill of `seq_len` prompt tokens for `batch` sequences.
pub fn build_prefill(
    cfg: &ModelConfig,
    batch: u64,
    seq_len: u64,
) -> Result<PhaseGraph, WorkloadError> {
    cfg.validate()?;
    if batch == 0 || seq_len == 0 {
        return Err(WorkloadError::Config(
            "batch and seq_len must be >= 1".into(),
        ));
    }
    Ok(PhaseGraph {
        phase: Phase::Prefill,
        batch,
        seq_or_kv_len: seq_len,
        operators: layer_chain(cfg, batch, seq_len, seq_len, false),
    })
}

/// One decode step attending to `kv_len` cached tokens.
pub fn build_decode(
    cfg: &ModelConfig,
    batch: u64,
    kv_len: u64,
) -> Result<PhaseGraph, WorkloadError> {
    cfg.validate()?;
    if batch == 0 || kv_len == 0 {
        return Err(WorkloadError::Config(
            "batch and kv_len must be >= 1".into(),
        ));
    }
    Ok(PhaseGraph {
        phase: Phase::Decode,
        batch,
        seq_or_kv_len: kv_len,
        operators: layer_chain(cfg, batch, 1, kv_len, true),
    })
}

/// Batch, prompt length and decode position of the evaluation scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub batch: u64,
    pub seq_len: u64,
    /// Index of the generated token whose latency is reported.
    pub output_token: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            batch: 8,
            seq_len: 2048,
            output_token: 1024,
        }
    }
}

impl Scenario {
    /// Inclusive convention: the 1024th token after a 2048-token prompt
    /// attends to 3072 positions.
    pub fn decode_kv_len(&self) -> u64 {
        self.seq_len + self.output_token
    }

    pub fn build(&self, cfg: &ModelConfig) -> Result<(PhaseGraph, PhaseGraph), WorkloadError> {
        Ok((
            build_prefill(cfg, self.batch, self.seq_len)?,
            build_decode(cfg, self.batch, self.decode_kv_len())?,
        ))
    }
}
