//! Multi-QoI datasets, monotonicity tables and the synthetic monotone
//! benchmark data.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::sampling::{latin_hypercube, Bounds};

/// Inputs and several responses sharing the same rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiQoiData {
    pub input_names: Vec<String>,
    pub qoi_names: Vec<String>,
    /// n×d inputs.
    pub x: DMatrix<f64>,
    /// n×m responses.
    pub q: DMatrix<f64>,
}

impl MultiQoiData {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn num_inputs(&self) -> usize {
        self.x.ncols()
    }

    pub fn num_qois(&self) -> usize {
        self.q.ncols()
    }

    /// Parses a CSV with a header row. Columns whose name starts with `q`
    /// are responses; all others are inputs.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let is_qoi: Vec<bool> = header
            .iter()
            .map(|h| h.starts_with('q') || h.starts_with('Q'))
            .collect();
        let input_names: Vec<String> = header.iter().zip(&is_qoi).filter(|(_, q)| !**q).map(|(h, _)| h.clone()).collect();
        let qoi_names: Vec<String> = header.iter().zip(&is_qoi).filter(|(_, q)| **q).map(|(h, _)| h.clone()).collect();
        if input_names.is_empty() || qoi_names.is_empty() {
            return Err(Error::InvalidInput(
                "dataset needs input columns and at least one q-prefixed response column".into(),
            ));
        }
        let mut xs = Vec::new();
        let mut qs = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            for (col, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::InvalidInput(format!("row {}: `{field}` is not a number", line + 2))
                })?;
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!("row {}: non-finite value", line + 2)));
                }
                if is_qoi[col] {
                    qs.push(v);
                } else {
                    xs.push(v);
                }
            }
        }
        let n = xs.len() / input_names.len();
        Ok(MultiQoiData {
            x: DMatrix::from_row_slice(n, input_names.len(), &xs),
            q: DMatrix::from_row_slice(n, qoi_names.len(), &qs),
            input_names,
            qoi_names,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = self
            .input_names
            .iter()
            .chain(&self.qoi_names)
            .cloned()
            .collect::<Vec<_>>()
            .join(",");
        out.push('\n');
        for i in 0..self.len() {
            let row: Vec<String> = self
                .x
                .row(i)
                .iter()
                .chain(self.q.row(i).iter())
                .map(|v| v.to_string())
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Expert monotonicity table: `entries[v][q]` is +1 (increasing), -1
/// (decreasing) or 0 (no prior) for input `v` and response `q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonotonicityTable {
    pub variables: Vec<String>,
    pub qois: Vec<String>,
    pub entries: Vec<Vec<i8>>,
}

impl MonotonicityTable {
    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != self.variables.len()
            || self.entries.iter().any(|r| r.len() != self.qois.len())
        {
            return Err(Error::Shape("monotonicity table shape does not match its labels".into()));
        }
        if self.entries.iter().flatten().any(|e| !matches!(e, -1..=1)) {
            return Err(Error::InvalidInput("monotonicity entries must be +1, -1 or 0".into()));
        }
        Ok(())
    }

    pub fn entry(&self, var: usize, qoi: usize) -> i8 {
        self.entries[var][qoi]
    }

    /// First column names the variable; remaining header cells name QoIs.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let qois: Vec<String> = reader.headers()?.iter().skip(1).map(str::to_owned).collect();
        let mut variables = Vec::new();
        let mut entries = Vec::new();
        for record in reader.records() {
            let record = record?;
            let mut fields = record.iter();
            variables.push(fields.next().unwrap_or_default().to_owned());
            let row = fields
                .map(|f| match f {
                    "+1" | "1" => Ok(1),
                    "-1" => Ok(-1),
                    "0" => Ok(0),
                    other => Err(Error::InvalidInput(format!(
                        "monotonicity entry `{other}` is not +1, -1 or 0"
                    ))),
                })
                .collect::<Result<Vec<i8>>>()?;
            entries.push(row);
        }
        let table = MonotonicityTable {
            variables,
            qois,
            entries,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("variable");
        for q in &self.qois {
            out.push(',');
            out.push_str(q);
        }
        out.push('\n');
        for (v, row) in self.variables.iter().zip(&self.entries) {
            out.push_str(v);
            for e in row {
                out.push_str(match e {
                    1 => ",+1",
                    -1 => ",-1",
                    _ => ",0",
                });
            }
            out.push('\n');
        }
        out
    }
}

pub const SYNTHETIC_INPUTS: usize = 17;
pub const SYNTHETIC_QOIS: usize = 5;
const RELEVANT_PER_QOI: usize = 5;
const NOISE_STD: f64 = 0.05;

fn shape(k: usize, t: f64) -> f64 {
    match k % 5 {
        0 => t,
        1 => t * t,
        2 => (1.0 + 3.0 * t).ln(),
        3 => t.exp() - 1.0,
        _ => (3.0 * (t - 0.5)).tanh(),
    }
}

/// Relevant inputs and their signs for response `q` of the synthetic data.
fn synthetic_structure(q: usize) -> Vec<(usize, i8)> {
    const SIGNS: [i8; RELEVANT_PER_QOI] = [1, -1, 1, 1, -1];
    (0..RELEVANT_PER_QOI)
        .map(|k| ((3 * q + 2 * k) % SYNTHETIC_INPUTS, SIGNS[(k + q) % RELEVANT_PER_QOI]))
        .collect()
}

/// Noise-free synthetic response `q` at `x` in the unit cube.
pub fn synthetic_response(q: usize, x: &[f64]) -> f64 {
    let amplitudes = [3.0, 2.5, 2.0, 1.5, 1.0];
    10.0 + synthetic_structure(q)
        .iter()
        .enumerate()
        .map(|(k, &(v, s))| s as f64 * amplitudes[k] * shape(k + q, x[v]))
        .sum::<f64>()
}

/// `n` Latin hypercube rows in `[0, 1]^17` with five responses, each
/// monotone in five inputs plus seeded Gaussian noise, and the matching
/// monotonicity table.
pub fn synthetic_dataset(n: usize, seed: u64) -> Result<(MultiQoiData, MonotonicityTable)> {
    if n < 3 {
        return Err(Error::InvalidInput("synthetic data needs at least 3 rows".into()));
    }
    let rows = latin_hypercube(&Bounds(vec![[0.0, 1.0]; SYNTHETIC_INPUTS]), n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_a015e);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid normal");
    let x = DMatrix::from_fn(n, SYNTHETIC_INPUTS, |i, j| rows[i][j]);
    let mut q = DMatrix::zeros(n, SYNTHETIC_QOIS);
    for i in 0..n {
        for k in 0..SYNTHETIC_QOIS {
            q[(i, k)] = synthetic_response(k, &rows[i]) + noise.sample(&mut rng);
        }
    }
    let input_names: Vec<String> = (1..=SYNTHETIC_INPUTS).map(|j| format!("x{j}")).collect();
    let qoi_names: Vec<String> = (1..=SYNTHETIC_QOIS).map(|k| format!("q{k}")).collect();
    let mut entries = vec![vec![0i8; SYNTHETIC_QOIS]; SYNTHETIC_INPUTS];
    for k in 0..SYNTHETIC_QOIS {
        for (v, s) in synthetic_structure(k) {
            entries[v][k] = s;
        }
    }
    Ok((
        MultiQoiData {
            input_names: input_names.clone(),
            qoi_names: qoi_names.clone(),
            x,
            q,
        },
        MonotonicityTable {
            variables: input_names,
            qois: qoi_names,
            entries,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let (data, table) = synthetic_dataset(6, 1).unwrap();
        assert_eq!(MultiQoiData::from_csv(&data.to_csv()).unwrap(), data);
        assert_eq!(MonotonicityTable::from_csv(&table.to_csv()).unwrap(), table);
    }

    #[test]
    fn table_rejects_bad_entries() {
        assert!(MonotonicityTable::from_csv("variable,q1\nx1,2\n").is_err());
        assert!(MonotonicityTable::from_csv("variable,q1,q2\nx1,+1\n").is_err());
        let t = MonotonicityTable::from_csv("variable,q1,q2\nx1,+1,-1\nx2,0,1\n").unwrap();
        assert_eq!(t.entries, vec![vec![1, -1], vec![0, 1]]);
    }

    #[test]
    fn synthetic_table_matches_response_slopes() {
        let (_, table) = synthetic_dataset(5, 0).unwrap();
        let base = vec![0.5; SYNTHETIC_INPUTS];
        for q in 0..SYNTHETIC_QOIS {
            assert_eq!(table.entries.iter().filter(|r| r[q] != 0).count(), RELEVANT_PER_QOI);
            for v in 0..SYNTHETIC_INPUTS {
                let mut up = base.clone();
                let mut down = base.clone();
                up[v] = 0.9;
                down[v] = 0.1;
                let diff = synthetic_response(q, &up) - synthetic_response(q, &down);
                match table.entry(v, q) {
                    0 => assert_eq!(diff, 0.0),
                    s => assert!(diff * s as f64 > 0.0),
                }
            }
        }
    }

    #[test]
    fn synthetic_is_seeded() {
        assert_eq!(synthetic_dataset(8, 3).unwrap(), synthetic_dataset(8, 3).unwrap());
        assert_ne!(synthetic_dataset(8, 3).unwrap().0, synthetic_dataset(8, 4).unwrap().0);
    }

    #[test]
    fn non_numeric_field_rejected() {
        assert!(MultiQoiData::from_csv("x1,q1\n1,abc\n").is_err());
    }
}
