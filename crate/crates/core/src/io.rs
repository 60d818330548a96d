//! Instance JSON and trace CSV.
//!
//! ```json
//! {"n": 2, "Q": "identity", "q": [0, 0], "r": 0,
//!  "lmo": {"variant": "box", "half_width": [1, 1], "intercept_range": [-1, 1]},
//!  "x0": [0, 0]}
//! ```
//! `Q` is `"identity"`, a flat row-major array or a list of rows.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::densela::SymMatrix;
use crate::error::{Error, Result};
use crate::lmo::LmoDescriptor;
use crate::model::{InstanceMeta, IterationRecord, PolicyKind, ProblemInstance, QuadraticObjective, ReferenceOpt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QSpec {
    Named(String),
    Flat(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    #[serde(rename = "Q")]
    pub q_mat: QSpec,
    pub q: Vec<f64>,
    pub r: f64,
    pub lmo: LmoDescriptor,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_opt: Option<ReferenceOpt>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<InstanceMeta>,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<ProblemInstance> {
        let n = self.n;
        let q_mat = match self.q_mat {
            QSpec::Named(s) if s == "identity" => SymMatrix::identity(n),
            QSpec::Named(s) => return Err(Error::Invalid(format!("unknown Q shorthand {s:?}"))),
            QSpec::Flat(v) => SymMatrix::from_row_major(n, v)?,
            QSpec::Rows(rows) => {
                if rows.len() != n {
                    return Err(Error::Dimension(format!("Q has {} rows, n = {n}", rows.len())));
                }
                SymMatrix::from_rows(&rows)?
            }
        };
        if self.q.len() != n {
            return Err(Error::Dimension(format!("q has length {}, n = {n}", self.q.len())));
        }
        let obj = QuadraticObjective::new(q_mat, self.q, self.r)?;
        let mut inst = ProblemInstance::new(obj, self.lmo, self.x0)?;
        if let Some(r) = self.reference_opt {
            inst = inst.with_reference(r)?;
        }
        if let Some(m) = self.meta {
            inst = inst.with_meta(m);
        }
        Ok(inst)
    }

    pub fn from_instance(inst: &ProblemInstance) -> Self {
        let q = inst.objective.q_mat();
        let n = inst.dim();
        let q_mat = if q.is_identity() {
            QSpec::Named("identity".into())
        } else {
            QSpec::Rows((0..n).map(|i| q.row(i).to_vec()).collect())
        };
        InstanceFile {
            n,
            q_mat,
            q: inst.objective.linear().to_vec(),
            r: inst.objective.constant(),
            lmo: inst.lmo.clone(),
            x0: inst.x0.clone(),
            reference_opt: inst.reference_opt.clone(),
            meta: inst.meta.clone(),
        }
    }
}

pub fn parse_instance(text: &str) -> Result<ProblemInstance> {
    serde_json::from_str::<InstanceFile>(text)?.into_instance()
}

pub fn read_instance(path: &Path) -> Result<ProblemInstance> {
    let mut s = String::new();
    std::fs::File::open(path)?.read_to_string(&mut s)?;
    parse_instance(&s)
}

pub fn instance_to_json(inst: &ProblemInstance) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceFile::from_instance(inst))?)
}

pub fn write_instance(path: &Path, inst: &ProblemInstance) -> Result<()> {
    std::fs::write(path, instance_to_json(inst)? + "\n")?;
    Ok(())
}

/// `<instance>.ref.json` next to the instance file.
pub fn reference_path(instance_path: &Path) -> PathBuf {
    let stem = instance_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    instance_path.with_file_name(format!("{stem}.ref.json"))
}

pub fn read_reference(path: &Path) -> Result<ReferenceOpt> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn write_reference(path: &Path, r: &ReferenceOpt) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(r)? + "\n")?;
    Ok(())
}

pub const TRACE_COLUMNS: [&str; 9] =
    ["iter", "step_type", "model_gap", "obj_value", "bundle_size_pre", "bundle_size_post", "prox_move", "fw_gap_dual", "wall_time_ns"];
pub const MPBFA_EXTRA_COLUMNS: [&str; 3] = ["policy", "serious_count_so_far", "certificate_bound"];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes a trace; `policy` adds the proximal-bundle columns.
pub fn write_trace_csv<W: Write>(out: W, trace: &[IterationRecord], policy: Option<PolicyKind>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = TRACE_COLUMNS.to_vec();
    if policy.is_some() {
        header.extend(MPBFA_EXTRA_COLUMNS);
    }
    w.write_record(&header)?;
    for r in trace {
        let mut row = vec![
            r.iter.to_string(),
            r.step_type.as_str().to_string(),
            r.model_gap.to_string(),
            r.obj_value.to_string(),
            r.bundle_size_pre.to_string(),
            r.bundle_size_post.to_string(),
            r.prox_move.to_string(),
            opt(r.fw_gap_dual),
            r.wall_time_ns.to_string(),
        ];
        if let Some(p) = policy {
            row.push(p.as_str().to_string());
            row.push(r.serious_count_so_far.map(|c| c.to_string()).unwrap_or_default());
            row.push(opt(r.certificate_bound));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(path: &Path, trace: &[IterationRecord], policy: Option<PolicyKind>) -> Result<()> {
    write_trace_csv(std::fs::File::create(path)?, trace, policy)
}
