//! Maps schema-ordered raw values to the model input: continuous features
//! standardized with training-split statistics, categoricals one-hot in
//! vocabulary order, binary features as a single 0/1 column.

use serde::{Deserialize, Serialize};

use crate::data::{DataSchema, Dataset, FeatureKind, Instance};
use crate::error::{Error, Result};
use crate::util;

/// Floor on the median absolute deviation used by distances.
pub const MAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedFeature {
    pub name: String,
    pub kind: FeatureKind,
    /// First encoded column of this feature.
    pub offset: usize,
    /// Number of encoded columns (vocabulary size for categoricals).
    pub width: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub mad: f64,
    /// Modal category index (categorical/binary).
    pub mode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputEncoder {
    pub features: Vec<EncodedFeature>,
    pub width: usize,
}

impl InputEncoder {
    /// Fits standardization statistics on the complete training rows.
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let rows: Vec<Vec<f64>> = ds
            .train()
            .map(|i| i.dense_values(&ds.schema))
            .collect::<Result<_>>()?;
        if rows.is_empty() {
            return Err(Error::Data("training split is empty".into()));
        }
        Self::fit_rows(&ds.schema, &rows)
    }

    pub fn fit_rows(schema: &DataSchema, rows: &[Vec<f64>]) -> Result<Self> {
        let mut features = Vec::with_capacity(schema.len());
        let mut offset = 0;
        for (j, spec) in schema.features.iter().enumerate() {
            let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let width = match spec.kind {
                FeatureKind::Continuous | FeatureKind::Binary => 1,
                FeatureKind::Categorical => spec.levels().map_or(0, <[String]>::len),
            };
            let (mut mean, mut std, mut mad, mut mode) = (0.0, 1.0, 1.0, 0);
            let median;
            match spec.kind {
                FeatureKind::Continuous => {
                    mean = util::mean(&column);
                    let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / column.len() as f64;
                    std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
                    median = util::median(&column);
                    let dev: Vec<f64> = column.iter().map(|v| (v - median).abs()).collect();
                    mad = util::median(&dev).max(MAD_FLOOR);
                }
                FeatureKind::Categorical | FeatureKind::Binary => {
                    let levels = spec.levels().map_or(0, <[String]>::len);
                    let mut counts = vec![0usize; levels];
                    for v in &column {
                        if spec.admits(*v) {
                            counts[*v as usize] += 1;
                        } else {
                            return Err(Error::Data(format!(
                                "`{}` value {v} outside its vocabulary",
                                spec.name
                            )));
                        }
                    }
                    // First level wins ties.
                    mode = counts
                        .iter()
                        .enumerate()
                        .fold((0, 0), |best, (i, &c)| if c > best.1 { (i, c) } else { best })
                        .0;
                    median = mode as f64;
                }
            }
            features.push(EncodedFeature {
                name: spec.name.clone(),
                kind: spec.kind,
                offset,
                width,
                mean,
                std,
                median,
                mad,
                mode,
            });
            offset += width;
        }
        Ok(InputEncoder {
            features,
            width: offset,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    /// Encodes one complete row of raw values.
    pub fn encode(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        for (f, &v) in self.features.iter().zip(values) {
            match f.kind {
                FeatureKind::Continuous => out[f.offset] = (v - f.mean) / f.std,
                FeatureKind::Binary => out[f.offset] = v,
                FeatureKind::Categorical => {
                    let k = v as usize;
                    if k < f.width {
                        out[f.offset + k] = 1.0;
                    }
                }
            }
        }
        out
    }

    /// Encodes an instance; missing or unparseable cells are errors.
    pub fn encode_instance(&self, inst: &Instance) -> Result<Vec<f64>> {
        Ok(self.encode(&self.raw_values(inst)?))
    }

    pub fn raw_values(&self, inst: &Instance) -> Result<Vec<f64>> {
        if inst.values.len() != self.features.len() {
            return Err(Error::Data(format!(
                "record `{}` has {} values, model expects {}",
                inst.id,
                inst.values.len(),
                self.features.len()
            )));
        }
        inst.values
            .iter()
            .zip(&self.features)
            .map(|(v, f)| {
                v.filter(|x| x.is_finite()).ok_or_else(|| {
                    Error::Data(format!(
                        "record `{}` has a missing or invalid `{}` cell",
                        inst.id, f.name
                    ))
                })
            })
            .collect()
    }

    /// Schema feature owning each encoded column.
    pub fn column_owner(&self) -> Vec<usize> {
        let mut owner = Vec::with_capacity(self.width);
        for (j, f) in self.features.iter().enumerate() {
            owner.extend(std::iter::repeat_n(j, f.width));
        }
        owner
    }

    /// Sums encoded-column scores into per-feature scores, column order.
    pub fn fold(&self, encoded: &[f64]) -> Vec<f64> {
        self.features
            .iter()
            .map(|f| {
                let mut acc = 0.0;
                for v in &encoded[f.offset..f.offset + f.width] {
                    acc += *v;
                }
                acc
            })
            .collect()
    }

    /// Raw-value row of training medians (modal category for discrete
    /// features).
    pub fn median_row(&self) -> Vec<f64> {
        self.features
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Continuous => f.median,
                _ => f.mode as f64,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSpec;

    fn schema() -> DataSchema {
        DataSchema::new(vec![
            FeatureSpec::continuous("x", "", -10.0, 10.0, true),
            FeatureSpec::categorical("c", &["a", "b", "c"], true),
            FeatureSpec::binary("flag", "no", "yes", true),
        ])
        .unwrap()
    }

    #[test]
    fn encodes_and_folds() {
        let rows = vec![
            vec![1.0, 0.0, 1.0],
            vec![3.0, 2.0, 0.0],
            vec![5.0, 2.0, 1.0],
        ];
        let enc = InputEncoder::fit_rows(&schema(), &rows).unwrap();
        assert_eq!(enc.width, 5);
        assert_eq!(enc.features[0].mean, 3.0);
        assert_eq!(enc.features[0].median, 3.0);
        assert_eq!(enc.features[0].mad, 2.0);
        assert_eq!(enc.features[1].mode, 2);
        let e = enc.encode(&[3.0, 1.0, 1.0]);
        assert_eq!(e, vec![0.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(enc.fold(&[1.0, 2.0, 3.0, 4.0, 5.0]), vec![1.0, 9.0, 5.0]);
        assert_eq!(enc.column_owner(), vec![0, 1, 1, 1, 2]);
        assert_eq!(enc.median_row(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn constant_column_has_unit_std() {
        let rows = vec![vec![2.0, 0.0, 0.0], vec![2.0, 1.0, 1.0]];
        let enc = InputEncoder::fit_rows(&schema(), &rows).unwrap();
        assert_eq!(enc.features[0].std, 1.0);
        assert_eq!(enc.features[0].mad, MAD_FLOOR);
    }
}
