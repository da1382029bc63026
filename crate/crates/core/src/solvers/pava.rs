//! Weighted least-squares isotonic regression by pool-adjacent-violators.

use crate::{Error, Result};

/// Responses in sorted-x order with positive weights (weights default to one;
/// duplicates merged upstream carry their multiplicity here).
#[derive(Debug, Clone)]
pub struct IsotonicProblem {
    responses: Vec<f64>,
    weights: Vec<f64>,
}

impl IsotonicProblem {
    pub fn new(responses: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if responses.is_empty() {
            return Err(Error::InvalidInput("isotonic problem must be nonempty".into()));
        }
        if responses.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("isotonic responses"));
        }
        let weights = match weights {
            Some(w) => {
                if w.len() != responses.len() {
                    return Err(Error::LengthMismatch { expected: responses.len(), got: w.len() });
                }
                if w.iter().any(|&wi| !(wi > 0.0) || !wi.is_finite()) {
                    return Err(Error::InvalidInput("isotonic weights must be positive".into()));
                }
                w
            }
            None => vec![1.0; responses.len()],
        };
        Ok(Self { responses, weights })
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// The unique minimizer of `sum_i w_i (z_i - d_i)^2` over non-decreasing `d`.
///
/// Linear-time pool-merge: blocks carry weighted sums, and a new block is
/// merged backwards while it undercuts its predecessor's mean. The output is
/// non-decreasing exactly (block means are emitted verbatim).
pub fn pava(problem: &IsotonicProblem) -> Result<Vec<f64>> {
    let z = problem.responses();
    let w = problem.weights();
    let m = z.len();

    struct Block {
        wsum: f64,
        wzsum: f64,
        mean: f64,
        count: usize,
    }

    let mut blocks: Vec<Block> = Vec::with_capacity(m);
    for i in 0..m {
        blocks.push(Block { wsum: w[i], wzsum: w[i] * z[i], mean: z[i], count: 1 });
        while blocks.len() >= 2 {
            let last = blocks.len() - 1;
            if blocks[last - 1].mean > blocks[last].mean {
                let b = blocks.pop().unwrap();
                let a = blocks.last_mut().unwrap();
                a.wsum += b.wsum;
                a.wzsum += b.wzsum;
                a.count += b.count;
                a.mean = a.wzsum / a.wsum;
            } else {
                break;
            }
        }
    }

    let mut out = Vec::with_capacity(m);
    for b in &blocks {
        for _ in 0..b.count {
            out.push(b.mean);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn already_monotone_is_unchanged() {
        let z = vec![-1.0, 0.0, 0.0, 2.5];
        let p = IsotonicProblem::new(z.clone(), None).unwrap();
        assert_eq!(pava(&p).unwrap(), z);
    }

    #[test]
    fn two_point_violation_pools_to_mean() {
        let p = IsotonicProblem::new(vec![3.0, 1.0], None).unwrap();
        assert_eq!(pava(&p).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn weighted_pool_respects_weights() {
        let p = IsotonicProblem::new(vec![3.0, 0.0], Some(vec![1.0, 3.0])).unwrap();
        let d = pava(&p).unwrap();
        assert_abs_diff_eq!(d[0], 0.75, epsilon = 1e-15);
        assert_eq!(d[0], d[1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(IsotonicProblem::new(vec![], None).is_err());
        assert!(IsotonicProblem::new(vec![1.0], Some(vec![0.0])).is_err());
        assert!(IsotonicProblem::new(vec![1.0], Some(vec![1.0, 2.0])).is_err());
        assert!(IsotonicProblem::new(vec![f64::NAN], None).is_err());
    }

    /// KKT structure: output is non-decreasing, block means equal weighted
    /// response means, and adjacent block means strictly increase.
    #[test]
    fn kkt_block_structure_on_random_inputs() {
        let mut rng = crate::rngutil::substream(100, &[0]);
        for trial in 0..50 {
            let m = rng.gen_range(1..40);
            let z: Vec<f64> = (0..m).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..4.0)).collect();
            let p = IsotonicProblem::new(z.clone(), Some(w.clone())).unwrap();
            let d = pava(&p).unwrap();
            assert!(d.windows(2).all(|v| v[0] <= v[1]), "trial {trial} not monotone");
            // identify blocks and check their means
            let mut i = 0;
            let mut prev_mean: Option<f64> = None;
            while i < m {
                let mut j = i;
                while j + 1 < m && d[j + 1] == d[i] {
                    j += 1;
                }
                let wsum: f64 = w[i..=j].iter().sum();
                let wz: f64 = (i..=j).map(|k| w[k] * z[k]).sum();
                assert_abs_diff_eq!(d[i], wz / wsum, epsilon = 1e-10);
                if let Some(pm) = prev_mean {
                    assert!(d[i] > pm);
                }
                prev_mean = Some(d[i]);
                i = j + 1;
            }
        }
    }
}
