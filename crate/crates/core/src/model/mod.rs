//! Core domain types and the evaluation semantics of the robust persuasion
//! game.
//!
//! The sender commits to a [`SignalingScheme`]; the receiver observes a
//! signal, Bayes-updates the prior to a [`Posterior`], and may play *any*
//! action whose expected utility is strictly within `delta` of the best
//! response. [`robust_utility`] evaluates a scheme against the adversarial
//! choice from that set: each signal independently contributes the
//! sender-worst action of its delta-best-response set.
//!
//! Everything here is immutable after construction and all operations are
//! pure functions, so values can be shared freely across threads.

pub mod rational;

use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

/// Tolerance for prior/row normalization checks.
pub const NORMALIZATION_TOL: f64 = 1e-12;
/// Tolerance for the Bayes plausibility identity over a whole scheme.
pub const BAYES_PLAUSIBILITY_TOL: f64 = 1e-9;

/// Dense row-major `rows x cols` matrix of utilities.
#[derive(Debug, Clone, PartialEq)]
pub struct RowMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RowMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Option<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return None;
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend(row);
        }
        Some(RowMatrix {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// One invariant violation found while validating instance data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("negative probability at state {index}: {value}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("prior does not sum to 1 (sum = {sum})")]
    UnnormalizedPrior { sum: f64 },
    #[error("{side} utility out of [0,1] at state {state}, action {action}: {value}")]
    UtilityOutOfRange {
        side: &'static str,
        state: usize,
        action: usize,
        value: f64,
    },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("robustness level must be positive, got {delta}")]
    NonpositiveDelta { delta: f64 },
}

/// All invariant violations of a rejected instance.
#[derive(Debug, Clone, Error)]
pub struct ValidationReport {
    pub violations: Vec<ValidationError>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid instance: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Raw, not-yet-validated instance fields.
#[derive(Debug, Clone)]
pub struct InstanceData {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub prior: Vec<f64>,
    pub sender_utility: Vec<Vec<f64>>,
    pub receiver_utility: Vec<Vec<f64>>,
    pub delta: f64,
}

/// A validated persuasion instance: states, actions, common prior, both
/// utility matrices (entries in `[0,1]`) and the robustness level `delta`.
#[derive(Debug, Clone)]
pub struct PersuasionInstance {
    states: Vec<String>,
    actions: Vec<String>,
    prior: Vec<f64>,
    sender: RowMatrix,
    receiver: RowMatrix,
    delta: f64,
}

/// Validate raw instance data, returning either the immutable instance or
/// the full list of violated invariants.
pub fn validate_instance(data: InstanceData) -> Result<PersuasionInstance, ValidationReport> {
    let mut violations = Vec::new();
    let m = data.states.len();
    let n = data.actions.len();
    if m == 0 {
        violations.push(ValidationError::DimensionMismatch {
            what: "states",
            expected: 1,
            got: 0,
        });
    }
    if n == 0 {
        violations.push(ValidationError::DimensionMismatch {
            what: "actions",
            expected: 1,
            got: 0,
        });
    }
    if data.prior.len() != m {
        violations.push(ValidationError::DimensionMismatch {
            what: "prior",
            expected: m,
            got: data.prior.len(),
        });
    } else {
        let mut sum = 0.0;
        for (i, &p) in data.prior.iter().enumerate() {
            if p < 0.0 || !p.is_finite() {
                violations.push(ValidationError::NegativeProbability { index: i, value: p });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            violations.push(ValidationError::UnnormalizedPrior { sum });
        }
    }
    let mut check_matrix = |side: &'static str, rows: &Vec<Vec<f64>>| -> Option<RowMatrix> {
        if rows.len() != m {
            violations.push(ValidationError::DimensionMismatch {
                what: side,
                expected: m,
                got: rows.len(),
            });
            return None;
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                violations.push(ValidationError::DimensionMismatch {
                    what: side,
                    expected: n,
                    got: row.len(),
                });
                return None;
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    violations.push(ValidationError::UtilityOutOfRange {
                        side,
                        state: i,
                        action: j,
                        value: v,
                    });
                }
            }
        }
        RowMatrix::from_rows(rows.clone())
    };
    let sender = check_matrix("sender", &data.sender_utility);
    let receiver = check_matrix("receiver", &data.receiver_utility);
    if !(data.delta > 0.0) || !data.delta.is_finite() {
        violations.push(ValidationError::NonpositiveDelta { delta: data.delta });
    }
    if !violations.is_empty() {
        return Err(ValidationReport { violations });
    }
    Ok(PersuasionInstance {
        states: data.states,
        actions: data.actions,
        prior: data.prior,
        sender: sender.expect("validated"),
        receiver: receiver.expect("validated"),
        delta: data.delta,
    })
}

impl PersuasionInstance {
    pub fn new(
        states: Vec<String>,
        actions: Vec<String>,
        prior: Vec<f64>,
        sender_utility: Vec<Vec<f64>>,
        receiver_utility: Vec<Vec<f64>>,
        delta: f64,
    ) -> Result<Self, ValidationReport> {
        validate_instance(InstanceData {
            states,
            actions,
            prior,
            sender_utility,
            receiver_utility,
            delta,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn sender_matrix(&self) -> &RowMatrix {
        &self.sender
    }

    pub fn receiver_matrix(&self) -> &RowMatrix {
        &self.receiver
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Same instance with a different robustness level.
    pub fn with_delta(&self, delta: f64) -> Result<Self, ValidationReport> {
        let mut data = self.to_data();
        data.delta = delta;
        validate_instance(data)
    }

    pub fn to_data(&self) -> InstanceData {
        InstanceData {
            states: self.states.clone(),
            actions: self.actions.clone(),
            prior: self.prior.clone(),
            sender_utility: self.sender.to_rows(),
            receiver_utility: self.receiver.to_rows(),
            delta: self.delta,
        }
    }

    /// Expected sender utility of `action` under belief `dist`.
    #[inline]
    pub fn sender_value(&self, dist: &[f64], action: usize) -> f64 {
        expected_utility(&self.sender, dist, action)
    }

    /// Expected receiver utility of `action` under belief `dist`.
    #[inline]
    pub fn receiver_value(&self, dist: &[f64], action: usize) -> f64 {
        expected_utility(&self.receiver, dist, action)
    }
}

/// Dot product of `dist` with the `action` column of `matrix`.
#[inline]
pub fn expected_utility(matrix: &RowMatrix, dist: &[f64], action: usize) -> f64 {
    debug_assert_eq!(matrix.rows(), dist.len());
    let mut acc = 0.0;
    for (state, &p) in dist.iter().enumerate() {
        if p != 0.0 {
            acc += p * matrix.at(state, action);
        }
    }
    acc
}

/// Receiver's best response at belief `dist`; ties break to the lowest
/// action index (only the maximal receiver value matters downstream).
pub fn best_response(instance: &PersuasionInstance, dist: &[f64]) -> usize {
    let mut best = 0;
    let mut best_val = instance.receiver_value(dist, 0);
    for a in 1..instance.num_actions() {
        let v = instance.receiver_value(dist, a);
        if v > best_val {
            best = a;
            best_val = v;
        }
    }
    best
}

/// The delta-best-response set at belief `dist`: all actions whose receiver
/// value is strictly above `best - delta - tie_tolerance`. `tie_tolerance`
/// (default 0) widens the comparison for robustness experiments; the set
/// always contains the best response because `delta > 0`.
pub fn br_delta_set(instance: &PersuasionInstance, dist: &[f64], tie_tolerance: f64) -> Vec<usize> {
    let best = best_response(instance, dist);
    let threshold = instance.receiver_value(dist, best) - instance.delta() - tie_tolerance;
    (0..instance.num_actions())
        .filter(|&a| instance.receiver_value(dist, a) > threshold)
        .collect()
}

/// Sender-worst action within the delta-BR set at `dist`, with its value.
/// Ties break to the lowest action index.
pub fn worst_case_sender_value(
    instance: &PersuasionInstance,
    dist: &[f64],
    tie_tolerance: f64,
) -> (f64, usize) {
    let set = br_delta_set(instance, dist, tie_tolerance);
    let mut worst = set[0];
    let mut worst_val = instance.sender_value(dist, worst);
    for &a in &set[1..] {
        let v = instance.sender_value(dist, a);
        if v < worst_val {
            worst = a;
            worst_val = v;
        }
    }
    (worst_val, worst)
}

#[derive(Debug, Clone, Error)]
pub enum SchemeError {
    #[error("conditional row {state} sums to {sum}, expected 1")]
    UnnormalizedRow { state: usize, sum: f64 },
    #[error("negative conditional probability at state {state}, signal {signal}: {value}")]
    NegativeEntry {
        state: usize,
        signal: usize,
        value: f64,
    },
    #[error("dimension mismatch: {what}")]
    DimensionMismatch { what: &'static str },
}

/// A signaling scheme: per-state conditional distributions over labeled
/// signals (`conditionals[state][signal]`).
#[derive(Debug, Clone)]
pub struct SignalingScheme {
    signal_labels: Vec<String>,
    num_states: usize,
    conditionals: Vec<f64>, // row-major num_states x num_signals
}

impl SignalingScheme {
    pub fn new(
        signal_labels: Vec<String>,
        conditionals: Vec<Vec<f64>>,
    ) -> Result<Self, SchemeError> {
        let k = signal_labels.len();
        let m = conditionals.len();
        if m == 0 {
            return Err(SchemeError::DimensionMismatch {
                what: "scheme needs at least one state row",
            });
        }
        let mut flat = Vec::with_capacity(m * k);
        for (state, row) in conditionals.iter().enumerate() {
            if row.len() != k {
                return Err(SchemeError::DimensionMismatch {
                    what: "conditional row length != number of signal labels",
                });
            }
            let mut sum = 0.0;
            for (signal, &v) in row.iter().enumerate() {
                if v < 0.0 || !v.is_finite() {
                    return Err(SchemeError::NegativeEntry {
                        state,
                        signal,
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(SchemeError::UnnormalizedRow { state, sum });
            }
            flat.extend_from_slice(row);
        }
        Ok(SignalingScheme {
            signal_labels,
            num_states: m,
            conditionals: flat,
        })
    }

    /// Deterministic full revelation: one signal per state.
    pub fn full_revelation(instance: &PersuasionInstance) -> Self {
        let m = instance.num_states();
        let labels = instance
            .states()
            .iter()
            .map(|s| format!("reveal:{s}"))
            .collect();
        let mut conditionals = vec![0.0; m * m];
        for i in 0..m {
            conditionals[i * m + i] = 1.0;
        }
        SignalingScheme {
            signal_labels: labels,
            num_states: m,
            conditionals,
        }
    }

    /// Single-signal scheme; the posterior equals the prior.
    pub fn uninformative(instance: &PersuasionInstance) -> Self {
        SignalingScheme {
            signal_labels: vec!["all".to_string()],
            num_states: instance.num_states(),
            conditionals: vec![1.0; instance.num_states()],
        }
    }

    pub fn num_signals(&self) -> usize {
        self.signal_labels.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn signal_labels(&self) -> &[String] {
        &self.signal_labels
    }

    #[inline]
    pub fn conditional(&self, state: usize, signal: usize) -> f64 {
        self.conditionals[state * self.num_signals() + signal]
    }

    pub fn state_row(&self, state: usize) -> &[f64] {
        let k = self.num_signals();
        &self.conditionals[state * k..(state + 1) * k]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_states)
            .map(|i| self.state_row(i).to_vec())
            .collect()
    }
}

/// Posterior induced by one signal: the Bayes update of the prior plus the
/// signal's marginal probability. A zero-marginal signal has no well-defined
/// distribution and is skipped by every evaluator.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub distribution: Option<Vec<f64>>,
    pub marginal: f64,
}

#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {what}")]
    DimensionMismatch { what: &'static str },
    #[error("strategy is missing a response for positive-marginal signal {signal}")]
    MissingResponse { signal: String },
}

/// Bayes update for one signal of a scheme.
pub fn posterior(
    instance: &PersuasionInstance,
    scheme: &SignalingScheme,
    signal: usize,
) -> Result<Posterior, ModelError> {
    if scheme.num_states() != instance.num_states() {
        return Err(ModelError::DimensionMismatch {
            what: "scheme state count != instance state count",
        });
    }
    if signal >= scheme.num_signals() {
        return Err(ModelError::DimensionMismatch {
            what: "signal index out of range",
        });
    }
    let m = instance.num_states();
    let mut marginal = 0.0;
    for state in 0..m {
        marginal += instance.prior()[state] * scheme.conditional(state, signal);
    }
    if marginal <= 0.0 {
        return Ok(Posterior {
            distribution: None,
            marginal: 0.0,
        });
    }
    let mut dist = Vec::with_capacity(m);
    for state in 0..m {
        dist.push(instance.prior()[state] * scheme.conditional(state, signal) / marginal);
    }
    Ok(Posterior {
        distribution: Some(dist),
        marginal,
    })
}

/// Per-signal outcome of a robust evaluation.
#[derive(Debug, Clone)]
pub struct SignalOutcome {
    pub signal: usize,
    pub label: String,
    pub marginal: f64,
    pub posterior: Vec<f64>,
    pub br_set: Vec<usize>,
    pub worst_action: usize,
    pub sender_value: f64,
}

/// Robust (worst-case) evaluation of a scheme.
#[derive(Debug, Clone)]
pub struct RobustEvaluation {
    pub value: f64,
    pub per_signal: Vec<SignalOutcome>,
}

/// Worst-case expected sender utility of `scheme`: each positive-marginal
/// signal contributes its marginal times the sender-worst action of the
/// posterior's delta-BR set. Returns the witness worst action per signal.
pub fn robust_utility(
    instance: &PersuasionInstance,
    scheme: &SignalingScheme,
) -> Result<RobustEvaluation, ModelError> {
    robust_utility_with(instance, scheme, 0.0)
}

/// [`robust_utility`] with a nonzero tie tolerance in the BR-set comparison.
pub fn robust_utility_with(
    instance: &PersuasionInstance,
    scheme: &SignalingScheme,
    tie_tolerance: f64,
) -> Result<RobustEvaluation, ModelError> {
    let mut value = 0.0;
    let mut per_signal = Vec::new();
    for sig in 0..scheme.num_signals() {
        let post = posterior(instance, scheme, sig)?;
        let Some(dist) = post.distribution else {
            continue;
        };
        let br = br_delta_set(instance, &dist, tie_tolerance);
        let mut worst = br[0];
        let mut worst_val = instance.sender_value(&dist, worst);
        for &a in &br[1..] {
            let v = instance.sender_value(&dist, a);
            if v < worst_val {
                worst = a;
                worst_val = v;
            }
        }
        value += post.marginal * worst_val;
        per_signal.push(SignalOutcome {
            signal: sig,
            label: scheme.signal_labels()[sig].clone(),
            marginal: post.marginal,
            posterior: dist,
            br_set: br,
            worst_action: worst,
            sender_value: worst_val,
        });
    }
    Ok(RobustEvaluation { value, per_signal })
}

/// A receiver strategy: a response per signal label.
#[derive(Debug, Clone, Default)]
pub struct ReceiverStrategy {
    pub responses: BTreeMap<String, usize>,
}

impl ReceiverStrategy {
    pub fn from_pairs<I: IntoIterator<Item = (String, usize)>>(pairs: I) -> Self {
        ReceiverStrategy {
            responses: pairs.into_iter().collect(),
        }
    }
}

/// Expected sender utility when the receiver plays the fixed responses of
/// `strategy`. Every positive-marginal signal must have a response.
pub fn strategy_utility(
    instance: &PersuasionInstance,
    scheme: &SignalingScheme,
    strategy: &ReceiverStrategy,
) -> Result<f64, ModelError> {
    let mut value = 0.0;
    for sig in 0..scheme.num_signals() {
        let post = posterior(instance, scheme, sig)?;
        let Some(dist) = post.distribution else {
            continue;
        };
        let label = &scheme.signal_labels()[sig];
        let Some(&action) = strategy.responses.get(label) else {
            return Err(ModelError::MissingResponse {
                signal: label.clone(),
            });
        };
        value += post.marginal * instance.sender_value(&dist, action);
    }
    Ok(value)
}

/// A candidate pair `(A, best)`: a delta-BR set together with the best
/// response inside it. `set` is a bitmask over action indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetActionTuple {
    set: u32,
    best: usize,
}

impl SubsetActionTuple {
    /// Build from a bitmask and member action; `best` must be in `set`.
    pub fn new(set: u32, best: usize) -> Option<Self> {
        if set == 0 || best >= 32 || set & (1 << best) == 0 {
            return None;
        }
        Some(SubsetActionTuple { set, best })
    }

    pub fn from_actions<I: IntoIterator<Item = usize>>(actions: I, best: usize) -> Option<Self> {
        let mut set = 0u32;
        for a in actions {
            if a >= 32 {
                return None;
            }
            set |= 1 << a;
        }
        Self::new(set, best)
    }

    pub fn mask(&self) -> u32 {
        self.set
    }

    pub fn best(&self) -> usize {
        self.best
    }

    pub fn contains(&self, action: usize) -> bool {
        action < 32 && self.set & (1 << action) != 0
    }

    pub fn len(&self) -> usize {
        self.set.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.set == 0
    }

    pub fn actions(&self) -> impl Iterator<Item = usize> + '_ {
        (0..32).filter(move |&a| self.set & (1 << a) != 0)
    }

    /// Human-readable label using the instance's action names.
    pub fn label(&self, actions: &[String]) -> String {
        let members: Vec<&str> = self.actions().map(|a| actions[a].as_str()).collect();
        format!("A={{{}}}|br={}", members.join(","), actions[self.best])
    }
}

impl fmt::Display for SubsetActionTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let members: Vec<String> = self.actions().map(|a| format!("a{a}")).collect();
        write!(f, "({{{}}}, a{})", members.join(","), self.best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    fn direct_fail() -> PersuasionInstance {
        instances::direct_revelation_example(0.01).unwrap()
    }

    #[test]
    fn apples_instance_is_valid() {
        assert!(instances::apples_instance(0.1).is_ok());
    }

    #[test]
    fn unnormalized_prior_is_rejected() {
        let err = PersuasionInstance::new(
            vec!["s0".into(), "s1".into()],
            vec!["a0".into()],
            vec![0.5, 0.6],
            vec![vec![0.0], vec![0.0]],
            vec![vec![0.0], vec![0.0]],
            0.5,
        )
        .unwrap_err();
        assert!(err
            .violations
            .iter()
            .any(|v| matches!(v, ValidationError::UnnormalizedPrior { .. })));
    }

    #[test]
    fn zero_delta_is_rejected() {
        let err = PersuasionInstance::new(
            vec!["s0".into()],
            vec!["a0".into()],
            vec![1.0],
            vec![vec![0.5]],
            vec![vec![0.5]],
            0.0,
        )
        .unwrap_err();
        assert!(err
            .violations
            .iter()
            .any(|v| matches!(v, ValidationError::NonpositiveDelta { .. })));
    }

    #[test]
    fn posterior_of_partially_revealing_scheme() {
        // good apples always get "probably good"; bad ones with prob 0.499
        let instance = instances::apples_instance(0.1).unwrap();
        let scheme = SignalingScheme::new(
            vec!["PG".into(), "DB".into()],
            vec![vec![1.0, 0.0], vec![0.499, 0.501]],
        )
        .unwrap();
        let post = posterior(&instance, &scheme, 0).unwrap();
        assert!((post.marginal - 0.666).abs() < 1e-9);
        let dist = post.distribution.unwrap();
        assert!((dist[0] - (1.0 / 3.0) / 0.666).abs() < 1e-12);
        assert!(dist[0] > 0.5 && (dist[0] - 0.50050).abs() < 1e-5);
    }

    #[test]
    fn full_revelation_posteriors_are_degenerate() {
        let instance = direct_fail();
        let scheme = SignalingScheme::full_revelation(&instance);
        for sig in 0..3 {
            let post = posterior(&instance, &scheme, sig).unwrap();
            let dist = post.distribution.unwrap();
            assert_eq!(dist[sig], 1.0);
            assert_eq!(dist.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn uninformative_posterior_is_prior() {
        let instance = direct_fail();
        let scheme = SignalingScheme::uninformative(&instance);
        let post = posterior(&instance, &scheme, 0).unwrap();
        assert!((post.marginal - 1.0).abs() < 1e-12);
        let dist = post.distribution.unwrap();
        for (p, q) in dist.iter().zip(instance.prior()) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_utility_examples() {
        let instance = direct_fail();
        // degenerate distribution picks out the matrix entry
        assert_eq!(
            expected_utility(instance.receiver_matrix(), &[0.0, 1.0, 0.0], 0),
            1.0
        );
        // uniform over the two decisive states, action a0
        assert!(
            (expected_utility(instance.receiver_matrix(), &[0.0, 0.5, 0.5], 0) - 0.5).abs() < 1e-12
        );
        // apples: receiver value of buying at the prior
        let apples = instances::apples_instance(0.1).unwrap();
        let v = expected_utility(apples.receiver_matrix(), apples.prior(), 0);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn best_response_tie_breaks_to_lowest_index() {
        let instance = direct_fail();
        // degenerate on the zero-utility state: both actions give 0
        assert_eq!(best_response(&instance, &[1.0, 0.0, 0.0]), 0);
        // degenerate on the a0-state
        assert_eq!(best_response(&instance, &[0.0, 1.0, 0.0]), 0);
        // degenerate on the a1-state
        assert_eq!(best_response(&instance, &[0.0, 0.0, 1.0]), 1);
    }

    #[test]
    fn br_delta_set_matches_worked_example() {
        let instance = direct_fail(); // delta = 1
        assert_eq!(br_delta_set(&instance, &[1.0, 0.0, 0.0], 0.0), vec![0, 1]);
        assert_eq!(br_delta_set(&instance, &[0.0, 1.0, 0.0], 0.0), vec![0]);
        assert_eq!(br_delta_set(&instance, &[0.0, 0.0, 1.0], 0.0), vec![1]);
    }

    #[test]
    fn br_delta_set_saturates_for_huge_delta() {
        let instance = instances::apples_instance(1.0).unwrap();
        for dist in [[1.0, 0.0], [0.0, 1.0], [0.4, 0.6]] {
            assert_eq!(br_delta_set(&instance, &dist, 0.0), vec![0, 1]);
        }
    }

    #[test]
    fn robust_utility_full_revelation_direct_fail() {
        let instance = direct_fail();
        let eval = robust_utility(&instance, &SignalingScheme::full_revelation(&instance)).unwrap();
        assert!((eval.value - 0.99).abs() < 1e-12);
        // the zero state contributes the worst of both actions
        assert_eq!(eval.per_signal[0].br_set, vec![0, 1]);
    }

    #[test]
    fn robust_utility_uninformative_direct_fail() {
        // at the prior both decisive actions are within delta=1; the worst
        // action yields min{mu(w0), mu(w1)} = (1-eps)/2
        let instance = direct_fail();
        let eval = robust_utility(&instance, &SignalingScheme::uninformative(&instance)).unwrap();
        assert!((eval.value - 0.495).abs() < 1e-12);
    }

    #[test]
    fn robust_utility_single_action_instance() {
        let instance = PersuasionInstance::new(
            vec!["s0".into(), "s1".into()],
            vec!["a0".into()],
            vec![0.25, 0.75],
            vec![vec![0.2], vec![0.8]],
            vec![vec![1.0], vec![0.0]],
            0.3,
        )
        .unwrap();
        let expected = 0.25 * 0.2 + 0.75 * 0.8;
        for scheme in [
            SignalingScheme::uninformative(&instance),
            SignalingScheme::full_revelation(&instance),
        ] {
            let eval = robust_utility(&instance, &scheme).unwrap();
            assert!((eval.value - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn strategy_utility_brackets_robust_value() {
        let instance = direct_fail();
        let scheme = SignalingScheme::full_revelation(&instance);
        let eval = robust_utility(&instance, &scheme).unwrap();

        // worst-witness strategy reproduces the robust value
        let worst = ReceiverStrategy::from_pairs(
            eval.per_signal
                .iter()
                .map(|s| (s.label.clone(), s.worst_action)),
        );
        let worst_val = strategy_utility(&instance, &scheme, &worst).unwrap();
        assert!((worst_val - eval.value).abs() < 1e-12);

        // sender-best responses within the BR set dominate the robust value
        let friendly = ReceiverStrategy::from_pairs(eval.per_signal.iter().map(|s| {
            let best_for_sender = s
                .br_set
                .iter()
                .copied()
                .max_by(|&a, &b| {
                    instance
                        .sender_value(&s.posterior, a)
                        .total_cmp(&instance.sender_value(&s.posterior, b))
                })
                .unwrap();
            (s.label.clone(), best_for_sender)
        }));
        let friendly_val = strategy_utility(&instance, &scheme, &friendly).unwrap();
        assert!(friendly_val >= eval.value - 1e-12);

        // matching responses on full revelation achieve 1 - eps
        let matching = ReceiverStrategy::from_pairs(vec![
            ("reveal:w_bot".to_string(), 0),
            ("reveal:w0".to_string(), 0),
            ("reveal:w1".to_string(), 1),
        ]);
        let v = strategy_utility(&instance, &scheme, &matching).unwrap();
        assert!((v - 0.99).abs() < 1e-12);
    }

    #[test]
    fn strategy_missing_response_is_an_error() {
        let instance = direct_fail();
        let scheme = SignalingScheme::full_revelation(&instance);
        let strategy = ReceiverStrategy::from_pairs(vec![("reveal:w0".to_string(), 0)]);
        assert!(matches!(
            strategy_utility(&instance, &scheme, &strategy),
            Err(ModelError::MissingResponse { .. })
        ));
    }

    #[test]
    fn subset_action_tuple_requires_membership() {
        assert!(SubsetActionTuple::new(0b011, 0).is_some());
        assert!(SubsetActionTuple::new(0b010, 0).is_none());
        assert!(SubsetActionTuple::new(0, 0).is_none());
        let t = SubsetActionTuple::from_actions([0, 2], 2).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.contains(2) && !t.contains(1));
        assert_eq!(t.to_string(), "({a0,a2}, a2)");
    }
}
