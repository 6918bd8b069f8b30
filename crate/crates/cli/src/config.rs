//! Experiment configuration: one TOML tree with per-module sections,
//! command-line overrides, full invariant validation, and a canonical hash
//! that is stable under key reordering.

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use sft_core::interaction::VertexParams;
use sft_core::measure::FieldParams;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalSection {
    pub d: u8,
    pub m: f64,
    pub l0: f64,
    pub l_inf: f64,
    pub seed: u64,
    /// 0 = rayon default.
    pub workers: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockSection {
    pub cutoff: f64,
    pub basis_capacity: usize,
    /// Heat times for the trace diagnostics.
    pub trace_times: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSection {
    pub kappa: f64,
    pub n_cells: usize,
    pub t_half: f64,
    pub n_t: usize,
    pub n_samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VertexSection {
    pub eps: f64,
    pub t_window: f64,
    pub v: f64,
    pub n_theta: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphsSection {
    pub n_max: usize,
    pub moment_order: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfacesSection {
    /// "theta" (glued genus-2 surface) or "torus".
    pub kind: String,
    pub h: f64,
    pub fixture_len: f64,
    pub eigen_count: usize,
    pub fem_capacity: usize,
    pub tube_t: Vec<f64>,
    pub tube_ell: Vec<f64>,
    pub torus_l: f64,
    pub torus_beta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchySection {
    pub cutoffs: Vec<f64>,
    pub kappas: Vec<f64>,
    pub n_samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub lambda_max: f64,
    pub n_lambda: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConjectureSection {
    pub m_schedule: Vec<f64>,
    pub v_schedule: Vec<f64>,
    pub max_mismatch: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub global: GlobalSection,
    pub fock: FockSection,
    pub measure: MeasureSection,
    pub vertex: VertexSection,
    pub graphs: GraphsSection,
    pub surfaces: SurfacesSection,
    pub cauchy: CauchySection,
    pub partition: PartitionSection,
    pub conjecture: ConjectureSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            global: GlobalSection {
                d: 1,
                m: 1.0,
                l0: 1.0,
                l_inf: 2.25,
                seed: 42,
                workers: 0,
            },
            fock: FockSection {
                cutoff: 2.5,
                basis_capacity: 200_000,
                trace_times: vec![0.5, 1.0, 2.0],
            },
            measure: MeasureSection {
                kappa: 4.0,
                n_cells: 25,
                t_half: 1.0,
                n_t: 9,
                n_samples: 2000,
            },
            vertex: VertexSection {
                eps: 0.05,
                t_window: 1.0,
                v: 0.24,
                n_theta: 3,
            },
            graphs: GraphsSection {
                n_max: 1,
                moment_order: 2,
            },
            surfaces: SurfacesSection {
                kind: "theta".into(),
                h: 0.05,
                fixture_len: 0.15,
                eigen_count: 200,
                fem_capacity: 3200,
                tube_t: vec![0.35, 0.35, 0.35],
                tube_ell: vec![2.2, 1.1, 1.1],
                torus_l: 1.0,
                torus_beta: 1.0,
            },
            cauchy: CauchySection {
                cutoffs: vec![1.5, 2.5, 4.5, 6.0],
                kappas: vec![2.5, 3.2, 4.0, 4.8],
                n_samples: 1500,
            },
            partition: PartitionSection {
                lambda_max: 2.0,
                n_lambda: 21,
            },
            conjecture: ConjectureSection {
                m_schedule: vec![1.0, 0.85, 0.7],
                v_schedule: vec![0.24, 0.2, 0.16],
                max_mismatch: 0.03,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        // toml reports line/column in its parse errors
        toml::from_str(&text).map_err(|e| anyhow!("config parse error: {e}"))
    }

    /// Apply one `--set section.key=value` override onto the TOML tree.
    pub fn apply_override(&mut self, spec: &str) -> anyhow::Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("override must look like section.key=value, got `{spec}`"))?;
        let mut tree: toml::Value =
            toml::Value::try_from(&*self).context("config serialization")?;
        let mut cursor = &mut tree;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            if i + 1 == parts.len() {
                let table = cursor
                    .as_table_mut()
                    .ok_or_else(|| anyhow!("`{path}` does not address a table entry"))?;
                let existing = table
                    .get(*part)
                    .ok_or_else(|| anyhow!("unknown config key `{path}`"))?;
                let parsed: toml::Value = match existing {
                    toml::Value::Float(_) => toml::Value::Float(value.parse()?),
                    toml::Value::Integer(_) => toml::Value::Integer(value.parse()?),
                    toml::Value::Boolean(_) => toml::Value::Boolean(value.parse()?),
                    toml::Value::String(_) => toml::Value::String(value.to_string()),
                    _ => toml::from_str(&format!("x = {value}"))
                        .map(|t: toml::Table| t["x"].clone())
                        .map_err(|e| anyhow!("cannot parse `{value}`: {e}"))?,
                };
                table.insert(part.to_string(), parsed);
            } else {
                cursor = cursor
                    .as_table_mut()
                    .and_then(|t| t.get_mut(*part))
                    .ok_or_else(|| anyhow!("unknown config section `{part}`"))?;
            }
        }
        *self = tree.try_into().context("override produced invalid config")?;
        Ok(())
    }

    pub fn field_params(&self) -> FieldParams {
        FieldParams {
            d: self.global.d,
            m: self.global.m,
            l0: self.global.l0,
            l_inf: self.global.l_inf,
            cutoff: self.fock.cutoff,
            kappa: self.measure.kappa,
            t_half: self.measure.t_half,
            n_t: self.measure.n_t,
            n_cells: self.measure.n_cells,
            seed: self.global.seed,
        }
    }

    pub fn vertex_params(&self) -> VertexParams {
        VertexParams {
            eps: self.vertex.eps,
            t_window: self.vertex.t_window,
            v: self.vertex.v,
        }
    }

    /// Every violated invariant, one message per violation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.global.m <= 0.0 {
            out.push(format!(
                "global.m = {}: m > 0 required throughout",
                self.global.m
            ));
        }
        if !(self.global.l0 > 0.0 && self.global.l_inf > self.global.l0) {
            out.push(format!(
                "lengths need 0 < L0 < L∞, got L0 = {}, L∞ = {}",
                self.global.l0, self.global.l_inf
            ));
        }
        if self.global.d == 0 {
            out.push("global.d must be ≥ 1".into());
        }
        if !(self.vertex.v > 0.0 && self.vertex.v < self.global.l0 / 4.0) {
            out.push(format!(
                "vertex.v = {}: the smear requires v ∈ (0, L0/4) = (0, {})",
                self.vertex.v,
                self.global.l0 / 4.0
            ));
        }
        if self.global.m > 0.0 {
            if let Err(e) = self.field_params().validate() {
                out.push(e.to_string());
            } else if let Err(e) = self.vertex_params().validate(&self.field_params()) {
                out.push(e.to_string());
            }
        }
        if self.cauchy.cutoffs.len() != self.cauchy.kappas.len() || self.cauchy.cutoffs.len() < 2 {
            out.push("cauchy schedule needs equally many cutoffs and kappas (≥ 2)".into());
        }
        if self.cauchy.cutoffs.windows(2).any(|w| w[1] < w[0])
            || self.cauchy.kappas.windows(2).any(|w| w[1] < w[0])
        {
            out.push("cauchy schedule must escalate: M and κ nondecreasing".into());
        }
        if self.conjecture.m_schedule.len() != self.conjecture.v_schedule.len() {
            out.push("conjecture schedules must have equal length".into());
        }
        if self
            .conjecture
            .v_schedule
            .iter()
            .any(|&v| !(v > 0.0 && v < self.global.l0 / 4.0))
        {
            out.push("conjecture.v_schedule entries must lie in (0, L0/4)".into());
        }
        if self.surfaces.kind != "theta" && self.surfaces.kind != "torus" {
            out.push(format!(
                "surfaces.kind = {:?}: expected \"theta\" or \"torus\"",
                self.surfaces.kind
            ));
        }
        if self.surfaces.tube_t.len() != 3 || self.surfaces.tube_ell.len() != 3 {
            out.push("surfaces.tube_t and tube_ell must have 3 entries (theta graph)".into());
        }
        if self.partition.n_lambda == 0 {
            out.push("partition.n_lambda must be ≥ 1".into());
        }
        if self.measure.n_samples == 0 || self.cauchy.n_samples == 0 {
            out.push("sample counts must be ≥ 1".into());
        }
        out
    }

    /// SHA-256 of the canonical (sorted-key) JSON rendering.
    pub fn canonical_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canon = canonical_json(&value);
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        hex::encode(h.finalize())
    }
}

mod hex {
    pub fn encode(bytes: impl AsRef<[u8]>) -> String {
        bytes
            .as_ref()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Deterministic JSON with object keys sorted at every level.
pub fn canonical_json(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let inner: Vec<String> = keys
                .iter()
                .map(|k| format!("{}:{}", serde_json::to_string(k).unwrap(), canonical_json(&map[*k])))
                .collect();
            format!("{{{}}}", inner.join(","))
        }
        serde_json::Value::Array(items) => {
            let inner: Vec<String> = items.iter().map(canonical_json).collect();
            format!("[{}]", inner.join(","))
        }
        other => serde_json::to_string(other).unwrap(),
    }
}
