//! Exact-rational twin of the evaluation semantics.
//!
//! Instances whose inputs are rationals (the hardness generator in
//! particular) can be evaluated with no rounding at all, which matters when
//! a value sits exactly on the 1/2 decision threshold. Only evaluation is
//! supported here; the LP solvers stay in floating point.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Instance data in exact arithmetic (same shape as the float instance).
#[derive(Debug, Clone)]
pub struct RationalInstance {
    pub prior: Vec<BigRational>,
    pub sender: Vec<Vec<BigRational>>,
    pub receiver: Vec<Vec<BigRational>>,
    pub delta: BigRational,
}

/// A scheme with exact conditional probabilities.
#[derive(Debug, Clone)]
pub struct RationalScheme {
    /// `conditionals[state][signal]`
    pub conditionals: Vec<Vec<BigRational>>,
}

impl RationalInstance {
    pub fn num_states(&self) -> usize {
        self.prior.len()
    }

    pub fn num_actions(&self) -> usize {
        self.receiver[0].len()
    }

    pub fn receiver_value(&self, dist: &[BigRational], action: usize) -> BigRational {
        dist.iter()
            .enumerate()
            .map(|(s, p)| p * &self.receiver[s][action])
            .sum()
    }

    pub fn sender_value(&self, dist: &[BigRational], action: usize) -> BigRational {
        dist.iter()
            .enumerate()
            .map(|(s, p)| p * &self.sender[s][action])
            .sum()
    }

    pub fn best_response(&self, dist: &[BigRational]) -> usize {
        let mut best = 0;
        let mut best_val = self.receiver_value(dist, 0);
        for a in 1..self.num_actions() {
            let v = self.receiver_value(dist, a);
            if v > best_val {
                best = a;
                best_val = v;
            }
        }
        best
    }

    /// Exact strict-inequality delta-BR set.
    pub fn br_delta_set(&self, dist: &[BigRational]) -> Vec<usize> {
        let best = self.best_response(dist);
        let threshold = self.receiver_value(dist, best) - &self.delta;
        (0..self.num_actions())
            .filter(|&a| self.receiver_value(dist, a) > threshold)
            .collect()
    }

    /// Exact robust utility of a scheme; zero-marginal signals are skipped.
    pub fn robust_utility(&self, scheme: &RationalScheme) -> BigRational {
        let m = self.num_states();
        let num_signals = scheme.conditionals[0].len();
        let mut total = BigRational::zero();
        for sig in 0..num_signals {
            let mut marginal = BigRational::zero();
            for state in 0..m {
                marginal += &self.prior[state] * &scheme.conditionals[state][sig];
            }
            if marginal.is_zero() {
                continue;
            }
            let dist: Vec<BigRational> = (0..m)
                .map(|state| &self.prior[state] * &scheme.conditionals[state][sig] / &marginal)
                .collect();
            let br = self.br_delta_set(&dist);
            let worst = br
                .iter()
                .map(|&a| self.sender_value(&dist, a))
                .min()
                .expect("BR set is nonempty");
            total += marginal * worst;
        }
        total
    }

    /// Convert to floating point instance data (nearest f64 per entry).
    pub fn to_float_parts(&self) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>, f64) {
        let to_f = |x: &BigRational| -> f64 {
            let num = x.numer();
            let den = x.denom();
            // entries here are small fractions; direct conversion is exact
            // whenever denominators are powers of two and very close otherwise
            let nf: f64 = num.to_string().parse().unwrap();
            let df: f64 = den.to_string().parse().unwrap();
            nf / df
        };
        (
            self.prior.iter().map(to_f).collect(),
            self.sender
                .iter()
                .map(|r| r.iter().map(to_f).collect())
                .collect(),
            self.receiver
                .iter()
                .map(|r| r.iter().map(to_f).collect())
                .collect(),
            to_f(&self.delta),
        )
    }
}

/// Exact uniform distribution over the given support indices.
pub fn uniform_on(m: usize, support: &[usize]) -> Vec<BigRational> {
    let w = BigRational::new(BigInt::one(), BigInt::from(support.len() as i64));
    let mut dist = vec![BigRational::zero(); m];
    for &i in support {
        dist[i] = w.clone();
    }
    dist
}
