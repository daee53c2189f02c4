//! File formats: models, processes and integrand tables.
//!
//! A model document lists outcomes, weights, the partition blocks per time
//! (by outcome label) and named process value tables. Serialization goes
//! through JSON with shortest-round-trip float formatting, so decimal-
//! authored models load back bit for bit. Predictable functions travel as
//! quadruple tables (time, atom index within P_{t-1}, mark, value).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump::{Mark, PredictableFunction};
use crate::model::{AdaptedProcess, FiniteModel, PathArray};

/// On-disk form of a finite model plus named processes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelFile {
    pub outcomes: Vec<String>,
    pub weights: Vec<f64>,
    /// Partition blocks per time, each block a list of outcome labels.
    pub partitions: Vec<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub processes: BTreeMap<String, ProcessFile>,
}

/// Value table of one process: per outcome label, per time, per coordinate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ProcessFile {
    pub dim: usize,
    pub values: BTreeMap<String, Vec<Vec<f64>>>,
}

impl ModelFile {
    pub fn from_model(model: &FiniteModel) -> Self {
        let label = |omega: usize| model.outcomes()[omega].clone();
        Self {
            outcomes: model.outcomes().to_vec(),
            weights: model.weights().to_vec(),
            partitions: (0..=model.horizon())
                .map(|t| {
                    model
                        .atoms(t)
                        .iter()
                        .map(|atom| atom.iter().map(|&omega| label(omega)).collect())
                        .collect()
                })
                .collect(),
            processes: BTreeMap::new(),
        }
    }

    pub fn with_process(mut self, name: &str, process: &AdaptedProcess) -> Self {
        let horizon = process.horizon();
        let values = self
            .outcomes
            .iter()
            .enumerate()
            .map(|(omega, label)| {
                let rows = (0..=horizon)
                    .map(|t| {
                        (0..process.dim())
                            .map(|k| process.value(omega, t, k))
                            .collect()
                    })
                    .collect();
                (label.clone(), rows)
            })
            .collect();
        self.processes.insert(
            name.to_string(),
            ProcessFile {
                dim: process.dim(),
                values,
            },
        );
        self
    }

    pub fn to_model(&self) -> Result<FiniteModel> {
        let index: BTreeMap<&str, usize> = self
            .outcomes
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if index.len() != self.outcomes.len() {
            return Err(Error::Config("duplicate outcome labels".into()));
        }
        let mut partitions = Vec::with_capacity(self.partitions.len());
        for blocks in &self.partitions {
            let mut atoms = Vec::with_capacity(blocks.len());
            for block in blocks {
                let atom: Result<Vec<usize>> = block
                    .iter()
                    .map(|label| {
                        index
                            .get(label.as_str())
                            .copied()
                            .ok_or_else(|| Error::Config(format!("unknown outcome '{label}'")))
                    })
                    .collect();
                atoms.push(atom?);
            }
            partitions.push(atoms);
        }
        FiniteModel::new(self.outcomes.clone(), self.weights.clone(), partitions)
    }

    /// Loads a named process checked against the model.
    pub fn process(&self, model: &FiniteModel, name: &str) -> Result<AdaptedProcess> {
        let spec = self
            .processes
            .get(name)
            .ok_or_else(|| Error::Config(format!("model has no process '{name}'")))?;
        let mut data = PathArray::zeros(model.n_outcomes(), model.horizon(), spec.dim);
        for (omega, label) in self.outcomes.iter().enumerate() {
            let rows = spec.values.get(label).ok_or_else(|| {
                Error::Config(format!("process '{name}' misses outcome '{label}'"))
            })?;
            if rows.len() != model.horizon() + 1 {
                return Err(Error::Config(format!(
                    "process '{name}' has {} time slices, model needs {}",
                    rows.len(),
                    model.horizon() + 1
                )));
            }
            for (t, row) in rows.iter().enumerate() {
                if row.len() != spec.dim {
                    return Err(Error::Config(format!(
                        "process '{name}' row has {} coordinates, declared {}",
                        row.len(),
                        spec.dim
                    )));
                }
                for (k, &v) in row.iter().enumerate() {
                    data.set(omega, t, k, v);
                }
            }
        }
        AdaptedProcess::new(model, data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// On-disk quadruple table of a predictable function.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IntegrandFile {
    pub dim_mark: usize,
    /// (time, atom index within P_{t-1}, mark, value)
    pub entries: Vec<(usize, usize, Vec<f64>, f64)>,
}

impl IntegrandFile {
    pub fn from_function(f: &PredictableFunction) -> Self {
        Self {
            dim_mark: f.dim_mark,
            entries: f
                .entries()
                .map(|(t, a, mark, v)| (t, a, mark.components().to_vec(), v))
                .collect(),
        }
    }

    pub fn to_function(&self) -> PredictableFunction {
        PredictableFunction::from_entries(
            self.dim_mark,
            self.entries
                .iter()
                .map(|(t, a, mark, v)| (*t, *a, Mark::new(mark), *v)),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trip_is_lossless() {
        let model = FiniteModel::with_default_labels(
            vec![0.3, 0.3, 0.4],
            vec![
                vec![vec![0, 1, 2]],
                vec![vec![0, 1], vec![2]],
                vec![vec![0], vec![1], vec![2]],
            ],
        )
        .unwrap();
        let x = {
            let m = model.clone();
            AdaptedProcess::scalar_from_fn(&model, move |omega, t| {
                // Awkward decimals, constant per atom, to exercise the float
                // round trip.
                [0.1, -0.25, 1.0 / 3.0][m.atom_of(t, omega)] * t as f64
            })
            .unwrap()
        };
        let file = ModelFile::from_model(&model).with_process("X", &x);
        let json = file.to_json();
        let reloaded = ModelFile::from_json(&json).unwrap();
        assert_eq!(file, reloaded);

        let model2 = reloaded.to_model().unwrap();
        assert_eq!(model2.weights(), model.weights());
        let x2 = reloaded.process(&model2, "X").unwrap();
        for omega in 0..3 {
            for t in 0..=2 {
                // Bitwise equality: shortest-round-trip floats.
                assert_eq!(x2.scalar(omega, t), x.scalar(omega, t));
            }
        }
    }

    #[test]
    fn unknown_labels_rejected() {
        let mut file = ModelFile::from_model(&FiniteModel::coin());
        file.partitions[1][0] = vec!["nope".into()];
        assert!(matches!(file.to_model(), Err(Error::Config(_))));
    }

    #[test]
    fn integrand_table_round_trip() {
        let entries = vec![
            (1usize, 0usize, vec![1.0], 0.5),
            (1, 0, vec![-1.0], -0.125),
            (2, 1, vec![2.0], 0.3),
        ];
        let file = IntegrandFile {
            dim_mark: 1,
            entries: entries.clone(),
        };
        let f = file.to_function();
        assert_eq!(f.eval(1, 0, &Mark::new(&[1.0])).unwrap(), 0.5);
        assert_eq!(f.eval(2, 1, &Mark::new(&[2.0])).unwrap(), 0.3);
        let back = IntegrandFile::from_function(&f);
        // Entries come back sorted by (t, atom, mark).
        assert_eq!(back.entries.len(), 3);
        assert!(back.entries.contains(&entries[1]));
    }
}
