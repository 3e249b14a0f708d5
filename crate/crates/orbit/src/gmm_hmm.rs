//! Discriminative training of CD-HMM/GMM acoustic models.
//!
//! Each mixture component of each state's emission model is reparameterized
//! as one symmetric matrix over augmented frames `z = (x, 1)`:
//!
//! ```text
//! Phi = [ Sigma^-1          -Sigma^-1 mu            ]
//!       [ -mu' Sigma^-1     mu' Sigma^-1 mu + pi    ]
//! ```
//!
//! so that `z' Phi z = (x - mu)' Sigma^-1 (x - mu) + pi` and the per-frame
//! emission score becomes the unconstrained log-sum-exp
//! `log sum_c exp(-z' Phi_c z)`. The sequence discriminant is
//!
//! ```text
//! D(x, y) = log_init[y_1] + sum_t log_trans[y_t, y_{t+1}]
//!                         + sum_t emission(z_t, y_t),
//! ```
//!
//! decoded exactly by Viterbi. Training moves only the Phi matrices
//! (transition and initial-state parameters stay frozen) along the
//! discriminant-difference gradient: a perceptron step `Theta + eta * g` or
//! a cost-scaled orbit step `Theta + eta * cost * g`, with
//! `g = d/dTheta [D(x, y) - D(x, y_hat)]`. Updates are unconstrained: a Phi
//! may lose positive definiteness of its top-left block, scoring stays
//! well-defined (a pure quadratic form), and only conversion back to
//! `(mu, Sigma, pi)` form demands definiteness.

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::costs::CostFunction;
use crate::error::{Error, Result};
use crate::losses::{RuleKind, StepContext};

/// Frozen transition-side parameters of the HMM, in log domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmmParams {
    log_init: Vec<f64>,
    /// Row `s` holds `log P(next | current = s)`.
    log_trans: Vec<Vec<f64>>,
}

impl HmmParams {
    /// Validates shapes and that both the initial distribution and every
    /// transition row are normalized within 1e-9 in probability space.
    pub fn new(log_init: Vec<f64>, log_trans: Vec<Vec<f64>>) -> Result<Self> {
        let s = log_init.len();
        if s == 0 {
            return Err(Error::Config("need at least 1 state".into()));
        }
        if log_trans.len() != s {
            return Err(Error::DimMismatch {
                expected: s,
                got: log_trans.len(),
            });
        }
        let check_row = |row: &[f64], what: &str| -> Result<()> {
            if row.iter().any(|v| !v.is_finite() && *v != f64::NEG_INFINITY) {
                return Err(Error::NonFinite("hmm log probability"));
            }
            let total: f64 = row.iter().map(|v| v.exp()).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "{what} sums to {total}, expected 1 within 1e-9"
                )));
            }
            Ok(())
        };
        check_row(&log_init, "initial distribution")?;
        for (i, row) in log_trans.iter().enumerate() {
            if row.len() != s {
                return Err(Error::DimMismatch {
                    expected: s,
                    got: row.len(),
                });
            }
            check_row(row, &format!("transition row {i}"))?;
        }
        Ok(Self {
            log_init,
            log_trans,
        })
    }

    /// Uniform initial and transition distributions over `s` states.
    pub fn uniform(s: usize) -> Result<Self> {
        if s == 0 {
            return Err(Error::Config("need at least 1 state".into()));
        }
        let v = -(s as f64).ln();
        Self::new(vec![v; s], vec![vec![v; s]; s])
    }

    pub fn num_states(&self) -> usize {
        self.log_init.len()
    }

    pub fn log_init(&self) -> &[f64] {
        &self.log_init
    }

    pub fn log_trans(&self, from: usize, to: usize) -> f64 {
        self.log_trans[from][to]
    }
}

/// One mixture component's parameters as a symmetric (p+1)x(p+1) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponentPhi {
    matrix: DMatrix<f64>,
}

impl GmmComponentPhi {
    /// Wraps a matrix, validating squareness, finiteness, and symmetry
    /// within 1e-10 (the matrix is stored exactly as given).
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        let (r, c) = matrix.shape();
        if r != c || r < 2 {
            return Err(Error::DimMismatch {
                expected: r.max(2),
                got: c,
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("component matrix"));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-10 {
                    return Err(Error::Config(format!(
                        "component matrix asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Frame dimension p (matrix is (p+1)x(p+1)).
    pub fn frame_dim(&self) -> usize {
        self.matrix.nrows() - 1
    }

    /// The quadratic form `z' Phi z`.
    pub fn quadratic_form(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.matrix.nrows() {
            return Err(Error::DimMismatch {
                expected: self.matrix.nrows(),
                got: z.len(),
            });
        }
        Ok((&self.matrix * z).dot(z))
    }
}

/// Assembles the block matrix from mean, covariance, and log-weight offset.
pub fn build_phi(mu: &[f64], sigma: &DMatrix<f64>, pi_w: f64) -> Result<GmmComponentPhi> {
    let p = mu.len();
    if p == 0 {
        return Err(Error::Config("mean must have dimension >= 1".into()));
    }
    if sigma.shape() != (p, p) {
        return Err(Error::DimMismatch {
            expected: p,
            got: sigma.nrows(),
        });
    }
    if !pi_w.is_finite() || mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("component parameters"));
    }
    for i in 0..p {
        for j in (i + 1)..p {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 {
                return Err(Error::NonSpd);
            }
        }
    }
    let chol = nalgebra::Cholesky::new(sigma.clone()).ok_or(Error::NonSpd)?;
    let inv = chol.inverse();
    let mu_v = DVector::from_column_slice(mu);
    let b = &inv * &mu_v; // Sigma^-1 mu
    let corner = b.dot(&mu_v) + pi_w;

    let mut m = DMatrix::zeros(p + 1, p + 1);
    m.view_mut((0, 0), (p, p)).copy_from(&inv);
    for i in 0..p {
        m[(i, p)] = -b[i];
        m[(p, i)] = -b[i];
    }
    m[(p, p)] = corner;
    // The Cholesky inverse is symmetric only to rounding; enforce exact
    // symmetry so the stored matrix satisfies the type invariant outright.
    let m = (&m + m.transpose()) * 0.5;
    GmmComponentPhi::from_matrix(m)
}

/// Recovers `(mu, sigma, pi_w)` from a component matrix whose top-left
/// block is still positive definite.
pub fn decompose_phi(component: &GmmComponentPhi) -> Result<(Vec<f64>, DMatrix<f64>, f64)> {
    let p = component.frame_dim();
    let m = component.matrix();
    let a = m.view((0, 0), (p, p)).into_owned(); // Sigma^-1
    let chol = nalgebra::Cholesky::new(a.clone()).ok_or(Error::NonSpd)?;
    let sigma = chol.inverse();
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let b: DVector<f64> = DVector::from_fn(p, |i, _| m[(i, p)]); // -Sigma^-1 mu
    let mu = -(&sigma * &b);
    let pi_w = m[(p, p)] - (&a * &mu).dot(&mu);
    Ok((mu.iter().copied().collect(), sigma, pi_w))
}

/// Augments a frame with a constant 1: `z = (x, 1)`.
pub fn augment(x: &[f64]) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + 1);
    for (i, &v) in x.iter().enumerate() {
        z[i] = v;
    }
    z[x.len()] = 1.0;
    z
}

/// Log-sum-exp emission score `log sum_c exp(-z' Phi_c z)`, max-shifted.
pub fn emission_score(z: &DVector<f64>, components: &[GmmComponentPhi]) -> Result<f64> {
    if components.is_empty() {
        return Err(Error::Config("state must have at least 1 component".into()));
    }
    let mut vals = Vec::with_capacity(components.len());
    for c in components {
        vals.push(-c.quadratic_form(z)?);
    }
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = vals.iter().map(|v| (v - m).exp()).sum();
    Ok(m + sum.ln())
}

/// Emission parameters for all states: `states[y]` lists state y's
/// component matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmStateModel {
    states: Vec<Vec<GmmComponentPhi>>,
}

impl GmmStateModel {
    /// Validates at least one state, at least one component per state, and
    /// a consistent frame dimension throughout.
    pub fn new(states: Vec<Vec<GmmComponentPhi>>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Config("need at least 1 state".into()));
        }
        let dim = states
            .first()
            .and_then(|c| c.first())
            .map(|c| c.frame_dim())
            .ok_or_else(|| Error::Config("state 0 has no components".into()))?;
        for (s, comps) in states.iter().enumerate() {
            if comps.is_empty() {
                return Err(Error::Config(format!("state {s} has no components")));
            }
            for c in comps {
                if c.frame_dim() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        got: c.frame_dim(),
                    });
                }
            }
        }
        Ok(Self { states })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Frame dimension p shared by all components.
    pub fn frame_dim(&self) -> usize {
        self.states[0][0].frame_dim()
    }

    pub fn components(&self, state: usize) -> &[GmmComponentPhi] {
        &self.states[state]
    }

    pub fn states(&self) -> &[Vec<GmmComponentPhi>] {
        &self.states
    }
}

impl Serialize for GmmStateModel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let dim = self.frame_dim();
        let states: Vec<Vec<Vec<f64>>> = self
            .states
            .iter()
            .map(|comps| {
                comps
                    .iter()
                    .map(|c| {
                        // Row-major flattening of the (p+1)x(p+1) matrix.
                        let m = c.matrix();
                        let n = m.nrows();
                        (0..n * n).map(|i| m[(i / n, i % n)]).collect()
                    })
                    .collect()
            })
            .collect();
        let mut st = serializer.serialize_struct("GmmStateModel", 2)?;
        st.serialize_field("dim", &dim)?;
        st.serialize_field("states", &states)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for GmmStateModel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        struct Raw {
            dim: usize,
            states: Vec<Vec<Vec<f64>>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let n = raw.dim + 1;
        let mut states = Vec::with_capacity(raw.states.len());
        for comps in raw.states {
            let mut out = Vec::with_capacity(comps.len());
            for flat in comps {
                if flat.len() != n * n {
                    return Err(D::Error::custom(format!(
                        "component matrix has {} entries, expected {}",
                        flat.len(),
                        n * n
                    )));
                }
                let m = DMatrix::from_row_slice(n, n, &flat);
                out.push(GmmComponentPhi::from_matrix(m).map_err(D::Error::custom)?);
            }
            states.push(out);
        }
        GmmStateModel::new(states).map_err(D::Error::custom)
    }
}

/// One training utterance: frames plus the reference state sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub frames: Vec<Vec<f64>>,
    pub transcript: Vec<usize>,
}

fn validate_sequence(
    frames: &[Vec<f64>],
    seq: &[usize],
    hmm: &HmmParams,
    gmm: &GmmStateModel,
) -> Result<()> {
    if hmm.num_states() != gmm.num_states() {
        return Err(Error::DimMismatch {
            expected: hmm.num_states(),
            got: gmm.num_states(),
        });
    }
    if frames.len() != seq.len() {
        return Err(Error::DimMismatch {
            expected: frames.len(),
            got: seq.len(),
        });
    }
    if frames.is_empty() {
        return Err(Error::Data("empty utterance".into()));
    }
    for state in seq {
        if *state >= hmm.num_states() {
            return Err(Error::Data(format!(
                "state {state} out of range for {} states",
                hmm.num_states()
            )));
        }
    }
    Ok(())
}

/// Sequence discriminant `D(x, y)`: log-joint of the frozen HMM transitions
/// and the Phi-parameterized emissions.
pub fn discriminant(
    frames: &[Vec<f64>],
    seq: &[usize],
    hmm: &HmmParams,
    gmm: &GmmStateModel,
) -> Result<f64> {
    validate_sequence(frames, seq, hmm, gmm)?;
    let z0 = augment(&frames[0]);
    let mut total = hmm.log_init()[seq[0]] + emission_score(&z0, gmm.components(seq[0]))?;
    for t in 1..frames.len() {
        let z = augment(&frames[t]);
        total += hmm.log_trans(seq[t - 1], seq[t]);
        total += emission_score(&z, gmm.components(seq[t]))?;
    }
    Ok(total)
}

/// Viterbi decode plus the score of the decoded sequence.
///
/// Predecessor scans run in ascending state order keeping the first strict
/// maximum, so ties prefer the smaller state index at every backtrace step.
// Explicit state indices keep the recurrence aligned with its standard
// textbook form; iterator rewrites obscure the (t, s, prev) structure.
#[allow(clippy::needless_range_loop)]
pub fn viterbi_decode_scored(
    frames: &[Vec<f64>],
    hmm: &HmmParams,
    gmm: &GmmStateModel,
) -> Result<(Vec<usize>, f64)> {
    if frames.is_empty() {
        return Err(Error::Data("empty utterance".into()));
    }
    if hmm.num_states() != gmm.num_states() {
        return Err(Error::DimMismatch {
            expected: hmm.num_states(),
            got: gmm.num_states(),
        });
    }
    let t_max = frames.len();
    let s_max = hmm.num_states();

    // Emission table, computed once per (frame, state).
    let mut em = vec![vec![0.0; s_max]; t_max];
    for (t, frame) in frames.iter().enumerate() {
        let z = augment(frame);
        for (s, slot) in em[t].iter_mut().enumerate() {
            *slot = emission_score(&z, gmm.components(s))?;
        }
    }

    let mut delta = vec![vec![f64::NEG_INFINITY; s_max]; t_max];
    let mut psi = vec![vec![0usize; s_max]; t_max];
    for s in 0..s_max {
        delta[0][s] = hmm.log_init()[s] + em[0][s];
    }
    for t in 1..t_max {
        for s in 0..s_max {
            let mut best = f64::NEG_INFINITY;
            let mut best_prev = 0usize;
            for prev in 0..s_max {
                let cand = delta[t - 1][prev] + hmm.log_trans(prev, s);
                if cand > best {
                    best = cand;
                    best_prev = prev;
                }
            }
            delta[t][s] = best + em[t][s];
            psi[t][s] = best_prev;
        }
    }

    let mut best_state = 0usize;
    let mut best_score = delta[t_max - 1][0];
    for s in 1..s_max {
        if delta[t_max - 1][s] > best_score {
            best_score = delta[t_max - 1][s];
            best_state = s;
        }
    }
    let mut seq = vec![0usize; t_max];
    seq[t_max - 1] = best_state;
    for t in (1..t_max).rev() {
        seq[t - 1] = psi[t][seq[t]];
    }
    Ok((seq, best_score))
}

/// Viterbi decode: `argmax_y D(x, y)`.
pub fn viterbi_decode(
    frames: &[Vec<f64>],
    hmm: &HmmParams,
    gmm: &GmmStateModel,
) -> Result<Vec<usize>> {
    Ok(viterbi_decode_scored(frames, hmm, gmm)?.0)
}

/// Gradient of the discriminant with respect to every component matrix:
/// `d D / d Phi_{s,c} = sum_{t: y_t = s} r_{t,c} * (-z_t z_t')`, where
/// `r_{t,c}` is the softmax over components of `-z' Phi_{s,c} z` at frame t.
pub fn discriminant_gradient(
    frames: &[Vec<f64>],
    seq: &[usize],
    gmm: &GmmStateModel,
) -> Result<Vec<Vec<DMatrix<f64>>>> {
    if frames.len() != seq.len() {
        return Err(Error::DimMismatch {
            expected: frames.len(),
            got: seq.len(),
        });
    }
    let n = gmm.frame_dim() + 1;
    let mut grad: Vec<Vec<DMatrix<f64>>> = gmm
        .states()
        .iter()
        .map(|comps| vec![DMatrix::zeros(n, n); comps.len()])
        .collect();
    for (frame, &state) in frames.iter().zip(seq.iter()) {
        if state >= gmm.num_states() {
            return Err(Error::Data(format!(
                "state {state} out of range for {} states",
                gmm.num_states()
            )));
        }
        let z = augment(frame);
        let comps = gmm.components(state);
        let mut vals = Vec::with_capacity(comps.len());
        for c in comps {
            vals.push(-c.quadratic_form(&z)?);
        }
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut weights: Vec<f64> = vals.iter().map(|v| (v - m).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let outer = &z * z.transpose();
        for (c, r) in weights.iter().enumerate() {
            grad[state][c] -= &outer * *r;
        }
    }
    Ok(grad)
}

/// One online update of the emission parameters. Decodes with Viterbi, then
/// moves every Phi along the discriminant-difference gradient:
/// perceptron `Theta + eta * g`, orbit `Theta + eta * cost(y, y_hat) * g`.
/// Transition parameters are frozen; only the state model is returned.
pub fn gmm_update<C: CostFunction<Vec<usize>>>(
    utt: &Utterance,
    hmm: &HmmParams,
    gmm: &GmmStateModel,
    cost: &C,
    ctx: &StepContext,
    rule: RuleKind,
) -> Result<GmmStateModel> {
    if !matches!(rule, RuleKind::Perceptron | RuleKind::Orbit) {
        return Err(Error::UnsupportedTask(
            "gmm updates support only PERCEPTRON and ORBIT",
        ));
    }
    validate_sequence(&utt.frames, &utt.transcript, hmm, gmm)?;
    let decoded = viterbi_decode(&utt.frames, hmm, gmm)?;
    if decoded == utt.transcript {
        return Ok(gmm.clone());
    }
    let factor = match rule {
        RuleKind::Perceptron => ctx.eta(),
        RuleKind::Orbit => ctx.eta() * cost.cost(&utt.transcript, &decoded),
        _ => unreachable!(),
    };
    let grad_ref = discriminant_gradient(&utt.frames, &utt.transcript, gmm)?;
    let grad_dec = discriminant_gradient(&utt.frames, &decoded, gmm)?;
    let mut states = Vec::with_capacity(gmm.num_states());
    for (s, comps) in gmm.states().iter().enumerate() {
        let mut out = Vec::with_capacity(comps.len());
        for (c, phi) in comps.iter().enumerate() {
            let step = (&grad_ref[s][c] - &grad_dec[s][c]) * factor;
            out.push(GmmComponentPhi::from_matrix(phi.matrix() + step)?);
        }
        states.push(out);
    }
    GmmStateModel::new(states)
}

/// Fraction of mismatched positions between two equal-length sequences.
pub fn normalized_hamming(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Data("empty sequences".into()));
    }
    let mismatches = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
    Ok(mismatches as f64 / a.len() as f64)
}

/// [`CostFunction`] form of [`normalized_hamming`]; panics on length
/// mismatch (sequences over the same frames always agree in length).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NormalizedHammingCost;

impl CostFunction<Vec<usize>> for NormalizedHammingCost {
    fn cost(&self, target: &Vec<usize>, predicted: &Vec<usize>) -> f64 {
        normalized_hamming(target, predicted).expect("sequences must have equal nonzero length")
    }
}
