//! On-disk instance files.
//!
//! Floats are written in the shortest decimal form that parses back to the
//! same bits, so a load after a save reproduces every number exactly.

use serde::{Deserialize, Serialize};

use crate::model::{ProgramMetadata, SeparableProgram};
use crate::problems::{Instance, ProblemKind};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("malformed instance file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("instance file declares {field} = {declared} but the payload has {actual}")]
    Mismatch { field: &'static str, declared: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub kind: ProblemKind,
    pub n: usize,
    pub k: usize,
    /// Right-hand side of the coupling constraints. Overrides whatever the
    /// payload would imply.
    pub b: Vec<f64>,
    /// Overrides the class metadata computed from the payload.
    pub metadata: ProgramMetadata,
    pub payload: serde_json::Value,
    pub seed: Option<u64>,
}

impl InstanceFile {
    pub fn from_instance(instance: &Instance, seed: Option<u64>) -> Self {
        let program = instance.to_program();
        InstanceFile {
            kind: instance.kind(),
            n: instance.n(),
            k: program.k,
            b: program.b,
            metadata: program.metadata,
            payload: instance.payload(),
            seed,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance files serialize to plain JSON");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn instance(&self) -> Result<Instance, FormatError> {
        let instance = Instance::from_payload(self.kind, self.payload.clone())?;
        if instance.n() != self.n {
            return Err(FormatError::Mismatch { field: "n", declared: self.n, actual: instance.n() });
        }
        Ok(instance)
    }

    /// The program described by the file, with its declared `b` and metadata.
    pub fn program(&self) -> Result<SeparableProgram, FormatError> {
        let mut program = self.instance()?.to_program();
        if program.k != self.k {
            return Err(FormatError::Mismatch { field: "k", declared: self.k, actual: program.k });
        }
        if self.b.len() != self.k {
            return Err(FormatError::Mismatch { field: "k", declared: self.k, actual: self.b.len() });
        }
        program.b = self.b.clone();
        program.metadata = self.metadata;
        Ok(program)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{generate, GenParams};

    #[test]
    fn every_kind_round_trips() {
        for kind in ProblemKind::ALL {
            let inst = generate(kind, GenParams::new(4, 2), 11).unwrap();
            let file = InstanceFile::from_instance(&inst, Some(11));
            let text = file.to_json();
            let back = InstanceFile::from_json(&text).unwrap();
            assert_eq!(back, file, "{kind}");
            assert_eq!(back.instance().unwrap(), inst, "{kind}");
            assert_eq!(back.to_json(), text, "{kind}");
        }
    }

    #[test]
    fn awkward_floats_survive() {
        let inst = generate(ProblemKind::Knapsack, GenParams::new(3, 1), 7).unwrap();
        let mut file = InstanceFile::from_instance(&inst, Some(7));
        file.b = vec![0.1 + 0.2];
        file.metadata.tau = f64::MIN_POSITIVE;
        let back = InstanceFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back.b[0].to_bits(), (0.1f64 + 0.2).to_bits());
        assert_eq!(back.metadata.tau.to_bits(), f64::MIN_POSITIVE.to_bits());
    }

    #[test]
    fn declared_fields_override_and_are_checked() {
        let inst = generate(ProblemKind::Knapsack, GenParams::new(3, 1), 7).unwrap();
        let mut file = InstanceFile::from_instance(&inst, None);
        file.b = vec![9.0];
        assert_eq!(file.program().unwrap().b, vec![9.0]);
        file.n = 4;
        assert!(matches!(file.program(), Err(FormatError::Mismatch { field: "n", .. })));
    }
}
