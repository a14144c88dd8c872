//! Linear-chain CRF over the four boundary tags, with exact inference.
//!
//! A sequence's score is `start[t1] + sum_i em[i][ti] + sum_i T[ti][ti+1]
//! + end[tn]`. The log-partition runs a forward recursion in log space,
//! gradients come from forward-backward marginals, and decoding is Viterbi
//! with a first-maximum tie-break (smallest tag index wins), so the all-zero
//! model deterministically emits all-`B`.

use serde::{Deserialize, Serialize};

use crate::annotation::Tag;
use crate::nn::{logsumexp, ParamCursor};

/// Number of boundary tags (`B`, `I`, `O`, `E`).
pub const NUM_TAGS: usize = 4;

/// Transition, start, and end scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    /// `trans[a][b]` scores tag `a` followed by tag `b`.
    pub trans: [[f64; NUM_TAGS]; NUM_TAGS],
    pub start: [f64; NUM_TAGS],
    pub end: [f64; NUM_TAGS],
}

impl CrfParams {
    pub fn zeros() -> Self {
        CrfParams {
            trans: [[0.0; NUM_TAGS]; NUM_TAGS],
            start: [0.0; NUM_TAGS],
            end: [0.0; NUM_TAGS],
        }
    }

    /// Unnormalized log-score of one tag sequence.
    pub fn sequence_score(&self, emissions: &[[f64; NUM_TAGS]], tags: &[Tag]) -> f64 {
        assert_eq!(emissions.len(), tags.len());
        assert!(!tags.is_empty(), "cannot score an empty sequence");
        let mut score = self.start[tags[0].index()];
        for (i, tag) in tags.iter().enumerate() {
            score += emissions[i][tag.index()];
            if i + 1 < tags.len() {
                score += self.trans[tag.index()][tags[i + 1].index()];
            }
        }
        score + self.end[tags[tags.len() - 1].index()]
    }

    /// Log of the sum of `exp(score)` over all `4^n` tag sequences.
    pub fn log_partition(&self, emissions: &[[f64; NUM_TAGS]]) -> f64 {
        let alpha = self.forward(emissions);
        let last = &alpha[alpha.len() - 1];
        let terms: Vec<f64> = (0..NUM_TAGS).map(|t| last[t] + self.end[t]).collect();
        logsumexp(&terms)
    }

    /// Log-likelihood of `tags` under the model.
    pub fn log_likelihood(&self, emissions: &[[f64; NUM_TAGS]], tags: &[Tag]) -> f64 {
        self.sequence_score(emissions, tags) - self.log_partition(emissions)
    }

    fn forward(&self, emissions: &[[f64; NUM_TAGS]]) -> Vec<[f64; NUM_TAGS]> {
        assert!(!emissions.is_empty(), "cannot run an empty sequence");
        let n = emissions.len();
        let mut alpha = vec![[0.0; NUM_TAGS]; n];
        for t in 0..NUM_TAGS {
            alpha[0][t] = self.start[t] + emissions[0][t];
        }
        let mut terms = [0.0; NUM_TAGS];
        for i in 1..n {
            for t in 0..NUM_TAGS {
                for (s, term) in terms.iter_mut().enumerate() {
                    *term = alpha[i - 1][s] + self.trans[s][t];
                }
                alpha[i][t] = emissions[i][t] + logsumexp(&terms);
            }
        }
        alpha
    }

    fn backward_pass(&self, emissions: &[[f64; NUM_TAGS]]) -> Vec<[f64; NUM_TAGS]> {
        let n = emissions.len();
        let mut beta = vec![[0.0; NUM_TAGS]; n];
        beta[n - 1] = self.end;
        let mut terms = [0.0; NUM_TAGS];
        for i in (0..n - 1).rev() {
            for t in 0..NUM_TAGS {
                for (s, term) in terms.iter_mut().enumerate() {
                    *term = self.trans[t][s] + emissions[i + 1][s] + beta[i + 1][s];
                }
                beta[i][t] = logsumexp(&terms);
            }
        }
        beta
    }

    /// Most probable tag sequence. Ties resolve to the smallest tag index,
    /// both at each backpointer and at the final position.
    pub fn viterbi(&self, emissions: &[[f64; NUM_TAGS]]) -> Vec<Tag> {
        assert!(!emissions.is_empty(), "cannot decode an empty sequence");
        let n = emissions.len();
        let mut score = vec![[0.0; NUM_TAGS]; n];
        let mut back = vec![[0usize; NUM_TAGS]; n];
        for t in 0..NUM_TAGS {
            score[0][t] = self.start[t] + emissions[0][t];
        }
        for i in 1..n {
            for t in 0..NUM_TAGS {
                let mut best_s = 0;
                let mut best = score[i - 1][0] + self.trans[0][t];
                for s in 1..NUM_TAGS {
                    let cand = score[i - 1][s] + self.trans[s][t];
                    if cand > best {
                        best = cand;
                        best_s = s;
                    }
                }
                score[i][t] = best + emissions[i][t];
                back[i][t] = best_s;
            }
        }
        let mut best_t = 0;
        let mut best = score[n - 1][0] + self.end[0];
        for t in 1..NUM_TAGS {
            let cand = score[n - 1][t] + self.end[t];
            if cand > best {
                best = cand;
                best_t = t;
            }
        }
        let mut tags = vec![Tag::from_index(best_t); n];
        let mut t = best_t;
        for i in (1..n).rev() {
            t = back[i][t];
            tags[i - 1] = Tag::from_index(t);
        }
        tags
    }

    /// Negative log-likelihood of `tags`, accumulating `scale *
    /// (marginal - gold indicator)` into the CRF and emission gradients.
    pub fn nll_and_grad(
        &self,
        emissions: &[[f64; NUM_TAGS]],
        tags: &[Tag],
        scale: f64,
        grad: &mut CrfGrad,
        grad_em: &mut [[f64; NUM_TAGS]],
    ) -> f64 {
        assert_eq!(emissions.len(), tags.len());
        assert_eq!(grad_em.len(), tags.len());
        let n = tags.len();
        let alpha = self.forward(emissions);
        let beta = self.backward_pass(emissions);
        let last = &alpha[n - 1];
        let terms: Vec<f64> = (0..NUM_TAGS).map(|t| last[t] + self.end[t]).collect();
        let log_z = logsumexp(&terms);
        let nll = log_z - self.sequence_score(emissions, tags);

        // Unary marginals drive the emission, start, and end gradients.
        for i in 0..n {
            for t in 0..NUM_TAGS {
                let p = (alpha[i][t] + beta[i][t] - log_z).exp();
                grad_em[i][t] += scale * p;
                if i == 0 {
                    grad.start[t] += scale * p;
                }
                if i == n - 1 {
                    grad.end[t] += scale * p;
                }
            }
            grad_em[i][tags[i].index()] -= scale;
        }
        grad.start[tags[0].index()] -= scale;
        grad.end[tags[n - 1].index()] -= scale;

        // Pairwise marginals drive the transition gradient.
        for i in 0..n - 1 {
            for a in 0..NUM_TAGS {
                for b in 0..NUM_TAGS {
                    let p = (alpha[i][a]
                        + self.trans[a][b]
                        + emissions[i + 1][b]
                        + beta[i + 1][b]
                        - log_z)
                        .exp();
                    grad.trans[a][b] += scale * p;
                }
            }
            grad.trans[tags[i].index()][tags[i + 1].index()] -= scale;
        }
        nll
    }

    pub fn sgd_step(&mut self, grad: &CrfGrad, lr: f64) {
        for a in 0..NUM_TAGS {
            for b in 0..NUM_TAGS {
                self.trans[a][b] -= lr * grad.trans[a][b];
            }
            self.start[a] -= lr * grad.start[a];
            self.end[a] -= lr * grad.end[a];
        }
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for row in &self.trans {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.start);
        out.extend_from_slice(&self.end);
    }

    pub fn read_params(&mut self, cursor: &mut ParamCursor) {
        for row in self.trans.iter_mut() {
            cursor.take_into(row);
        }
        cursor.take_into(&mut self.start);
        cursor.take_into(&mut self.end);
    }
}

/// Gradient accumulator shaped like [`CrfParams`].
#[derive(Debug, Clone, Default)]
pub struct CrfGrad {
    pub trans: [[f64; NUM_TAGS]; NUM_TAGS],
    pub start: [f64; NUM_TAGS],
    pub end: [f64; NUM_TAGS],
}

impl CrfGrad {
    pub fn zeros() -> Self {
        CrfGrad::default()
    }

    pub fn clear(&mut self) {
        self.trans = [[0.0; NUM_TAGS]; NUM_TAGS];
        self.start = [0.0; NUM_TAGS];
        self.end = [0.0; NUM_TAGS];
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for row in &self.trans {
            out.extend_from_slice(row);
        }
        out.extend_from_slice(&self.start);
        out.extend_from_slice(&self.end);
    }
}
