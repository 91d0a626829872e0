//! JSON schemas for instances and schemes.
//!
//! Instance files carry `states`, `actions`, `prior`, `sender_utility`,
//! `receiver_utility` (row-major, one row per state) and `delta`; scheme
//! files carry `signal_labels` and `conditionals` (row-major per state).
//! Numbers are emitted with 12 significant digits, below every tolerance
//! used by the solvers, and re-parse into identical values. Generated
//! hardness instances additionally embed their integer construction so the
//! exact-arithmetic evaluator can rebuild them without rounding.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use persuasion_core::instances::{subset_sum_instance_rational, SubsetSumInput};
use persuasion_core::model::rational::{RationalInstance, RationalScheme};
use persuasion_core::model::{InstanceData, PersuasionInstance, SignalingScheme};
use serde::{Deserialize, Serialize};

/// Round to 12 significant digits via decimal formatting.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_paper: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub prior: Vec<f64>,
    pub sender_utility: Vec<Vec<f64>>,
    pub receiver_utility: Vec<Vec<f64>>,
    pub delta: f64,
    /// Present on generated hardness instances; lets the exact evaluator
    /// rebuild the construction in rational arithmetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorInfo>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeFile {
    pub signal_labels: Vec<String>,
    pub conditionals: Vec<Vec<f64>>,
}

fn round_matrix(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter()
        .map(|row| row.iter().map(|&v| sig12(v)).collect())
        .collect()
}

impl InstanceFile {
    pub fn from_instance(instance: &PersuasionInstance, generator: Option<GeneratorInfo>) -> Self {
        let data = instance.to_data();
        InstanceFile {
            states: data.states,
            actions: data.actions,
            prior: data.prior.iter().map(|&v| sig12(v)).collect(),
            sender_utility: round_matrix(&data.sender_utility),
            receiver_utility: round_matrix(&data.receiver_utility),
            delta: sig12(data.delta),
            generator,
        }
    }

    pub fn into_instance(self) -> Result<PersuasionInstance, String> {
        persuasion_core::model::validate_instance(InstanceData {
            states: self.states,
            actions: self.actions,
            prior: self.prior,
            sender_utility: self.sender_utility,
            receiver_utility: self.receiver_utility,
            delta: self.delta,
        })
        .map_err(|e| e.to_string())
    }

    /// Exact-rational reconstruction. Hardness instances rebuild their
    /// construction from the embedded integers; any other file evaluates
    /// its decimal literals exactly.
    pub fn to_rational(&self) -> Result<RationalInstance, String> {
        if let Some(gen) = &self.generator {
            if gen.kind == "subset-sum" {
                let values = gen.values.clone().ok_or("generator block lacks values")?;
                let delta = gen.delta_paper.ok_or("generator block lacks delta")?;
                let input = SubsetSumInput::new(values).map_err(|e| e.to_string())?;
                let (inst, _) =
                    subset_sum_instance_rational(&input, delta).map_err(|e| e.to_string())?;
                return Ok(inst);
            }
        }
        let conv_row = |row: &[f64]| -> Result<Vec<BigRational>, String> {
            row.iter().map(|&v| decimal_to_rational(v)).collect()
        };
        Ok(RationalInstance {
            prior: conv_row(&self.prior)?,
            sender: self
                .sender_utility
                .iter()
                .map(|r| conv_row(r))
                .collect::<Result<_, _>>()?,
            receiver: self
                .receiver_utility
                .iter()
                .map(|r| conv_row(r))
                .collect::<Result<_, _>>()?,
            delta: decimal_to_rational(self.delta)?,
        })
    }
}

impl SchemeFile {
    pub fn from_scheme(scheme: &SignalingScheme) -> Self {
        SchemeFile {
            signal_labels: scheme.signal_labels().to_vec(),
            conditionals: round_matrix(&scheme.to_rows()),
        }
    }

    pub fn into_scheme(self) -> Result<SignalingScheme, String> {
        // serialization rounds to 12 significant digits, which can push a
        // row sum slightly past the validator's tolerance; renormalize
        // within the same budget the solvers use
        let mut conditionals = self.conditionals;
        for (state, row) in conditionals.iter_mut().enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-8 {
                return Err(format!("conditional row {state} sums to {sum}"));
            }
            if sum > 0.0 {
                for v in row.iter_mut() {
                    *v /= sum;
                }
            }
        }
        SignalingScheme::new(self.signal_labels, conditionals).map_err(|e| e.to_string())
    }

    pub fn to_rational(&self) -> Result<RationalScheme, String> {
        Ok(RationalScheme {
            conditionals: self
                .conditionals
                .iter()
                .map(|row| row.iter().map(|&v| decimal_to_rational(v)).collect())
                .collect::<Result<_, _>>()?,
        })
    }
}

/// Interpret a float's shortest decimal representation as an exact
/// rational (so `0.25` becomes 1/4 and `0.1` becomes 1/10).
pub fn decimal_to_rational(x: f64) -> Result<BigRational, String> {
    if !x.is_finite() {
        return Err(format!("non-finite number {x}"));
    }
    let text = format!("{x}");
    let (mantissa, exp) = match text.split_once(['e', 'E']) {
        Some((m, e)) => (m.to_string(), e.parse::<i64>().map_err(|e| e.to_string())?),
        None => (text, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i.to_string(), f.to_string()),
        None => (mantissa, String::new()),
    };
    let digits: String = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().map_err(|e| format!("{e}"))?;
    let shift = exp - frac_part.len() as i64;
    let ten = BigInt::from(10);
    let mut value = BigRational::new(numer, BigInt::one());
    if shift >= 0 {
        value *= BigRational::new(ten.pow(shift as u32), BigInt::one());
    } else {
        value /= BigRational::new(ten.pow((-shift) as u32), BigInt::one());
    }
    if value.is_zero() {
        value = BigRational::zero();
    }
    Ok(value)
}
