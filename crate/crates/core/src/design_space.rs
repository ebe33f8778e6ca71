//! Discrete GPU-node design lattice.
//!
//! A design is one choice per [`Param`] from that parameter's ordered list of
//! allowed values. The reference design may carry values that are not on the
//! lattice (the A100 analogue's 40 MB global buffer); such values validate but
//! are never enumerated or proposed by a search.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The eight tunable parameters of a GPU node, in lattice order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    LinkCount,
    CoreCount,
    SublaneCount,
    SystolicDim,
    VectorWidth,
    SramKb,
    GlobalBufferMb,
    MemChannels,
}

impl Param {
    pub const ALL: [Param; 8] = [
        Param::LinkCount,
        Param::CoreCount,
        Param::SublaneCount,
        Param::SystolicDim,
        Param::VectorWidth,
        Param::SramKb,
        Param::GlobalBufferMb,
        Param::MemChannels,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::LinkCount => "link_count",
            Param::CoreCount => "core_count",
            Param::SublaneCount => "sublane_count",
            Param::SystolicDim => "systolic_dim",
            Param::VectorWidth => "vector_width",
            Param::SramKb => "sram_kb",
            Param::GlobalBufferMb => "global_buffer_mb",
            Param::MemChannels => "mem_channels",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Param::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| SpaceError::UnknownParam(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("{param} moved {delta:+} steps from {from} leaves the allowed values")]
    OutOfRange { param: Param, from: u32, delta: i32 },
    #[error("invalid space spec: {0}")]
    InvalidSpec(String),
}

/// One architecture configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DesignPoint {
    pub link_count: u32,
    pub core_count: u32,
    pub sublane_count: u32,
    pub systolic_dim: u32,
    pub vector_width: u32,
    pub sram_kb: u32,
    pub global_buffer_mb: u32,
    pub mem_channels: u32,
}

impl DesignPoint {
    /// Builds a design from values in [`Param::ALL`] order.
    pub const fn from_array(v: [u32; 8]) -> Self {
        DesignPoint {
            link_count: v[0],
            core_count: v[1],
            sublane_count: v[2],
            systolic_dim: v[3],
            vector_width: v[4],
            sram_kb: v[5],
            global_buffer_mb: v[6],
            mem_channels: v[7],
        }
    }

    pub fn to_array(&self) -> [u32; 8] {
        [
            self.link_count,
            self.core_count,
            self.sublane_count,
            self.systolic_dim,
            self.vector_width,
            self.sram_kb,
            self.global_buffer_mb,
            self.mem_channels,
        ]
    }

    pub fn get(&self, p: Param) -> u32 {
        self.to_array()[p.index()]
    }

    pub fn with(&self, p: Param, value: u32) -> DesignPoint {
        let mut v = self.to_array();
        v[p.index()] = value;
        DesignPoint::from_array(v)
    }

    /// Parameters on which `self` and `other` differ.
    pub fn diff(&self, other: &DesignPoint) -> Vec<Param> {
        Param::ALL
            .iter()
            .copied()
            .filter(|&p| self.get(p) != other.get(p))
            .collect()
    }
}

impl fmt::Display for DesignPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_array();
        write!(
            f,
            "({}, {}, {}, {}, {}, {}, {}, {})",
            v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]
        )
    }
}

/// The NVIDIA A100 analogue used as reference design.
pub const A100: DesignPoint = DesignPoint::from_array([12, 108, 4, 16, 32, 128, 40, 5]);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub param: Param,
    pub allowed_values: Vec<u32>,
}

impl ParameterSpec {
    fn new(param: Param, allowed_values: Vec<u32>) -> Result<Self, SpaceError> {
        if allowed_values.is_empty() {
            return Err(SpaceError::InvalidSpec(format!(
                "{param} has no allowed values"
            )));
        }
        if allowed_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SpaceError::InvalidSpec(format!(
                "{param} values must be strictly increasing"
            )));
        }
        Ok(ParameterSpec {
            param,
            allowed_values,
        })
    }

    pub fn position(&self, value: u32) -> Option<usize> {
        self.allowed_values.binary_search(&value).ok()
    }
}

/// A field whose value is outside its allowed list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub param: Param,
    pub value: u32,
}

/// The design lattice plus the reference design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceSpec {
    parameters: Vec<ParameterSpec>,
    reference_design: DesignPoint,
}

/// On-disk form: parameter name -> value list, plus the reference design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpecFile {
    pub parameters: BTreeMap<String, Vec<u32>>,
    pub reference_design: DesignPoint,
}

impl Default for SpaceSpec {
    fn default() -> Self {
        SpaceSpec::default_lattice()
    }
}

impl SpaceSpec {
    /// The 8-GPU node lattice with the A100 reference.
    pub fn default_lattice() -> Self {
        let lists: [Vec<u32>; 8] = [
            vec![6, 12, 18, 24],
            vec![1, 2, 4, 8, 16, 32, 64, 96, 108, 128, 132, 136, 140, 256],
            vec![1, 2, 4, 8],
            vec![4, 8, 16, 32, 64, 128],
            vec![4, 8, 16, 32, 64, 128],
            vec![32, 64, 128, 192, 256, 512, 1024],
            vec![32, 64, 128, 256, 320, 512, 1024],
            (1..=12).collect(),
        ];
        let parameters = Param::ALL
            .iter()
            .zip(lists)
            .map(|(&p, v)| ParameterSpec {
                param: p,
                allowed_values: v,
            })
            .collect();
        SpaceSpec {
            parameters,
            reference_design: A100,
        }
    }

    pub fn new(lists: [Vec<u32>; 8], reference_design: DesignPoint) -> Result<Self, SpaceError> {
        let parameters = Param::ALL
            .iter()
            .zip(lists)
            .map(|(&p, v)| ParameterSpec::new(p, v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SpaceSpec {
            parameters,
            reference_design,
        })
    }

    /// Copy of this spec with one parameter restricted to `values`.
    pub fn restricted(&self, param: Param, values: Vec<u32>) -> Result<Self, SpaceError> {
        let mut lists: [Vec<u32>; 8] = Default::default();
        for p in Param::ALL {
            lists[p.index()] = self.values(p).to_vec();
        }
        lists[param.index()] = values;
        SpaceSpec::new(lists, self.reference_design)
    }

    pub fn from_file(file: SpaceSpecFile) -> Result<Self, SpaceError> {
        let mut lists: [Option<Vec<u32>>; 8] = Default::default();
        for (name, values) in file.parameters {
            let p: Param = name.parse()?;
            lists[p.index()] = Some(values);
        }
        let mut out: [Vec<u32>; 8] = Default::default();
        for p in Param::ALL {
            out[p.index()] = lists[p.index()]
                .take()
                .ok_or_else(|| SpaceError::InvalidSpec(format!("missing parameter {p}")))?;
        }
        SpaceSpec::new(out, file.reference_design)
    }

    pub fn to_file(&self) -> SpaceSpecFile {
        SpaceSpecFile {
            parameters: self
                .parameters
                .iter()
                .map(|ps| (ps.param.name().to_string(), ps.allowed_values.clone()))
                .collect(),
            reference_design: self.reference_design,
        }
    }

    pub fn parameters(&self) -> &[ParameterSpec] {
        &self.parameters
    }

    pub fn reference(&self) -> DesignPoint {
        self.reference_design
    }

    pub fn values(&self, p: Param) -> &[u32] {
        &self.parameters[p.index()].allowed_values
    }

    /// Number of lattice points. Reference-extension values are not counted.
    pub fn cardinality(&self) -> u64 {
        self.parameters
            .iter()
            .map(|p| p.allowed_values.len() as u64)
            .product()
    }

    /// Every field outside its allowed list, unless it equals the reference
    /// design's value for that field.
    pub fn validate(&self, d: &DesignPoint) -> Result<(), Vec<Violation>> {
        let violations: Vec<Violation> = Param::ALL
            .iter()
            .copied()
            .filter_map(|p| {
                let v = d.get(p);
                let on_lattice = self.parameters[p.index()].position(v).is_some();
                if on_lattice || v == self.reference_design.get(p) {
                    None
                } else {
                    Some(Violation { param: p, value: v })
                }
            })
            .collect();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    pub fn is_on_lattice(&self, d: &DesignPoint) -> bool {
        Param::ALL
            .iter()
            .all(|&p| self.parameters[p.index()].position(d.get(p)).is_some())
    }

    /// Moves `param` by `delta` positions along its ordered value list.
    ///
    /// An off-lattice value sits between its two lattice neighbours: `+1`
    /// lands on the next larger allowed value and `-1` on the next smaller.
    pub fn step_neighbor(
        &self,
        d: &DesignPoint,
        param: Param,
        delta: i32,
    ) -> Result<DesignPoint, SpaceError> {
        if delta == 0 {
            return Ok(*d);
        }
        let values = self.values(param);
        let current = d.get(param);
        let out_of_range = SpaceError::OutOfRange {
            param,
            from: current,
            delta,
        };
        let target = match values.binary_search(&current) {
            Ok(pos) => pos as i64 + delta as i64,
            // `ins` is the index of the first value larger than `current`.
            Err(ins) if delta > 0 => ins as i64 + delta as i64 - 1,
            Err(ins) => ins as i64 + delta as i64,
        };
        if target < 0 || target >= values.len() as i64 {
            return Err(out_of_range);
        }
        Ok(d.with(param, values[target as usize]))
    }

    /// Like [`Self::step_neighbor`] but clamps to the ends of the value list.
    /// Returns the new design and whether clamping happened.
    pub fn step_clamped(&self, d: &DesignPoint, param: Param, delta: i32) -> (DesignPoint, bool) {
        match self.step_neighbor(d, param, delta) {
            Ok(next) => (next, false),
            Err(_) => {
                let values = self.values(param);
                let edge = if delta > 0 {
                    values[values.len() - 1]
                } else {
                    values[0]
                };
                (d.with(param, edge), true)
            }
        }
    }

    /// Uniform draw over the lattice.
    pub fn random_design_with<R: Rng + ?Sized>(&self, rng: &mut R) -> DesignPoint {
        let mut v = [0u32; 8];
        for p in Param::ALL {
            let values = self.values(p);
            v[p.index()] = values[rng.gen_range(0..values.len())];
        }
        DesignPoint::from_array(v)
    }

    pub fn random_design(&self, seed: u64) -> DesignPoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.random_design_with(&mut rng)
    }

    /// Decodes a lattice index (mixed radix, last parameter fastest).
    pub fn design_at(&self, mut index: u64) -> Option<DesignPoint> {
        if index >= self.cardinality() {
            return None;
        }
        let mut v = [0u32; 8];
        for p in Param::ALL.iter().rev() {
            let values = self.values(*p);
            let radix = values.len() as u64;
            v[p.index()] = values[(index % radix) as usize];
            index /= radix;
        }
        Some(DesignPoint::from_array(v))
    }

    /// Lattice position of each field, or `None` for an off-lattice design.
    pub fn positions(&self, d: &DesignPoint) -> Option<[usize; 8]> {
        let mut out = [0usize; 8];
        for p in Param::ALL {
            out[p.index()] = self.parameters[p.index()].position(d.get(p))?;
        }
        Some(out)
    }

    /// Inverse of [`Self::positions`]. Positions past the end clamp to the
    /// largest value.
    pub fn design_from_positions(&self, pos: &[usize; 8]) -> DesignPoint {
        let mut v = [0u32; 8];
        for p in Param::ALL {
            let values = self.values(p);
            v[p.index()] = values[pos[p.index()].min(values.len() - 1)];
        }
        DesignPoint::from_array(v)
    }

    /// Half the distance between the two lattice neighbours of the reference
    /// value of `p` (one-sided at the ends). Used to express per-step
    /// sensitivities at the reference.
    pub fn reference_step_width(&self, p: Param) -> f64 {
        self.step_width_at(&self.reference_design, p)
    }

    /// Like [`Self::reference_step_width`] around an arbitrary design.
    pub fn step_width_at(&self, d: &DesignPoint, p: Param) -> f64 {
        let up = self.step_neighbor(d, p, 1).ok().map(|d| d.get(p) as f64);
        let down = self.step_neighbor(d, p, -1).ok().map(|d| d.get(p) as f64);
        let here = d.get(p) as f64;
        match (down, up) {
            (Some(lo), Some(hi)) => (hi - lo) / 2.0,
            (None, Some(hi)) => hi - here,
            (Some(lo), None) => here - lo,
            (None, None) => 1.0,
        }
    }
}
