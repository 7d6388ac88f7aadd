use nalgebra::{DMatrix, DVector};

use super::gaussian::{mat_vec, CholGaussian};
use super::{ClosedForms, StateSpaceModel};
use crate::error::{Result, SmcError};
use crate::sampling::RngStream;
use crate::State;

/// Gaussian posterior of one block given a Gaussian prior and `y = H x + v`.
#[derive(Debug, Clone)]
struct Conditioning {
    gain: DMatrix<f64>,
    posterior: CholGaussian,
    predictive: CholGaussian,
}

impl Conditioning {
    fn new(prior_cov: &DMatrix<f64>, h: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<Self> {
        let s = h * prior_cov * h.transpose() + r;
        let s_inv = s
            .clone()
            .try_inverse()
            .ok_or_else(|| SmcError::InvalidArgument("singular innovation covariance".into()))?;
        let gain = prior_cov * h.transpose() * s_inv;
        let id = DMatrix::<f64>::identity(prior_cov.nrows(), prior_cov.nrows());
        let post = (&id - &gain * h) * prior_cov;
        Ok(Conditioning {
            gain,
            posterior: CholGaussian::new(&post)?,
            predictive: CholGaussian::new(&s)?,
        })
    }
}

/// Linear-Gaussian model `x_k = F x_{k-1} + w`, `y_k = H x_k + v`, with
/// `w ~ N(0, Q)`, `v ~ N(0, R)` and `x_0 ~ N(m_0, P_0)`.
///
/// The model can be a block-diagonal replication of one block: `l` copies
/// evolve and are observed independently. Samplers and densities work
/// block by block, so the cost is linear in the number of blocks; the
/// dense matrices are assembled only for the Kalman filter.
#[derive(Debug, Clone)]
pub struct LinearGaussianSSM {
    f: DMatrix<f64>,
    h: DMatrix<f64>,
    q: CholGaussian,
    r: CholGaussian,
    init_mean: DVector<f64>,
    init: CholGaussian,
    blocks: usize,
    from_transition: Conditioning,
    from_initial: Conditioning,
}

/// Constant-velocity `(F, Q)` for the state `[p_x, v_x, p_y, v_y]`.
pub fn constant_velocity(tau: f64, sigma_q2: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let f = DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, tau, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, tau, //
            0.0, 0.0, 0.0, 1.0,
        ],
    );
    let (t3, t2) = (tau.powi(3) / 3.0, tau.powi(2) / 2.0);
    let q = DMatrix::from_row_slice(
        4,
        4,
        &[
            t3, t2, 0.0, 0.0, //
            t2, tau, 0.0, 0.0, //
            0.0, 0.0, t3, t2, //
            0.0, 0.0, t2, tau,
        ],
    ) * sigma_q2;
    (f, q)
}

/// Position/velocity prior `N(0, diag(100, 1, 100, 1))` used by the tracking models.
pub fn default_tracking_prior() -> (DVector<f64>, DMatrix<f64>) {
    (
        DVector::zeros(4),
        DMatrix::from_diagonal(&DVector::from_row_slice(&[100.0, 1.0, 100.0, 1.0])),
    )
}

impl LinearGaussianSSM {
    pub fn new(
        f: DMatrix<f64>,
        q: DMatrix<f64>,
        h: DMatrix<f64>,
        r: DMatrix<f64>,
        init_mean: DVector<f64>,
        init_cov: DMatrix<f64>,
    ) -> Result<Self> {
        let n = f.nrows();
        if f.ncols() != n
            || q.shape() != (n, n)
            || h.ncols() != n
            || r.shape() != (h.nrows(), h.nrows())
            || init_mean.len() != n
            || init_cov.shape() != (n, n)
        {
            return Err(SmcError::InvalidArgument(
                "inconsistent linear-Gaussian dimensions".into(),
            ));
        }
        Ok(LinearGaussianSSM {
            from_transition: Conditioning::new(&q, &h, &r)?,
            from_initial: Conditioning::new(&init_cov, &h, &r)?,
            q: CholGaussian::new(&q)?,
            r: CholGaussian::new(&r)?,
            init: CholGaussian::new(&init_cov)?,
            init_mean,
            f,
            h,
            blocks: 1,
        })
    }

    /// Block-diagonal replication of this model `blocks` times.
    pub fn replicated(mut self, blocks: usize) -> Result<Self> {
        if blocks == 0 {
            return Err(SmcError::InvalidArgument("at least one block".into()));
        }
        self.blocks *= blocks;
        Ok(self)
    }

    /// Independent constant-velocity targets observed in Cartesian
    /// coordinates, `dim = 4 * blocks`.
    pub fn cartesian_tracking(
        blocks: usize,
        sigma_q2: f64,
        sigma_x2: f64,
        sigma_y2: f64,
    ) -> Result<Self> {
        let (f, q) = constant_velocity(1.0, sigma_q2);
        let h = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let r = DMatrix::from_diagonal(&DVector::from_row_slice(&[sigma_x2, sigma_y2]));
        let (m0, p0) = default_tracking_prior();
        LinearGaussianSSM::new(f, q, h, r, m0, p0)?.replicated(blocks)
    }

    /// `sigma_Q^2 = 25`, `sigma_x^2 = sigma_y^2 = 4`, `l` blocks.
    pub fn high_dimensional(blocks: usize) -> Result<Self> {
        Self::cartesian_tracking(blocks, 25.0, 4.0, 4.0)
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    fn bx(&self) -> usize {
        self.f.nrows()
    }

    fn by(&self) -> usize {
        self.h.nrows()
    }

    fn block_diag(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        let (r, c) = block.shape();
        let mut out = DMatrix::zeros(r * self.blocks, c * self.blocks);
        for b in 0..self.blocks {
            out.view_mut((b * r, b * c), (r, c)).copy_from(block);
        }
        out
    }

    pub fn transition_matrix(&self) -> DMatrix<f64> {
        self.block_diag(&self.f)
    }

    pub fn process_covariance(&self) -> DMatrix<f64> {
        self.block_diag(self.q.covariance())
    }

    pub fn observation_matrix(&self) -> DMatrix<f64> {
        self.block_diag(&self.h)
    }

    pub fn measurement_covariance(&self) -> DMatrix<f64> {
        self.block_diag(self.r.covariance())
    }

    pub fn initial_mean(&self) -> DVector<f64> {
        let n = self.bx();
        DVector::from_fn(n * self.blocks, |i, _| self.init_mean[i % n])
    }

    pub fn initial_covariance(&self) -> DMatrix<f64> {
        self.block_diag(self.init.covariance())
    }

    /// Prior mean of block `b` at the next step.
    fn prior_mean(&self, prev: Option<&State>, b: usize, out: &mut [f64]) {
        let n = self.bx();
        match prev {
            Some(p) => mat_vec(&self.f, &p.as_slice()[b * n..(b + 1) * n], out),
            None => out.copy_from_slice(self.init_mean.as_slice()),
        }
    }

    fn conditioning(&self, prev: Option<&State>) -> &Conditioning {
        if prev.is_some() {
            &self.from_transition
        } else {
            &self.from_initial
        }
    }

    /// Residual of `y_b` against `H m` for a block mean `m`.
    fn innovation(&self, y: &[f64], mean: &[f64], out: &mut [f64]) {
        mat_vec(&self.h, mean, out);
        for (o, yi) in out.iter_mut().zip(y) {
            *o = yi - *o;
        }
    }

    /// Mean of the optimal proposal for block `b`, written into `mean`.
    fn optimal_mean(&self, prev: Option<&State>, y: &State, b: usize, mean: &mut [f64]) {
        let (n, d) = (self.bx(), self.by());
        self.prior_mean(prev, b, mean);
        let mut innov = vec![0.0; d];
        self.innovation(&y.as_slice()[b * d..(b + 1) * d], mean, &mut innov);
        let gain = &self.conditioning(prev).gain;
        for (i, m) in mean.iter_mut().enumerate().take(n) {
            *m += (0..d).map(|j| gain[(i, j)] * innov[j]).sum::<f64>();
        }
    }
}

impl StateSpaceModel for LinearGaussianSSM {
    fn state_dim(&self) -> usize {
        self.bx() * self.blocks
    }

    fn obs_dim(&self) -> usize {
        self.by() * self.blocks
    }

    fn sample_initial(&self, rng: &mut RngStream) -> State {
        let n = self.bx();
        let mut out = State::zeros(self.state_dim());
        for b in 0..self.blocks {
            let blk = &mut out.as_mut_slice()[b * n..(b + 1) * n];
            blk.copy_from_slice(self.init_mean.as_slice());
            self.init.add_noise(blk, rng);
        }
        out
    }

    fn log_initial(&self, x: &State) -> f64 {
        let n = self.bx();
        let mut res = vec![0.0; n];
        (0..self.blocks)
            .map(|b| {
                for i in 0..n {
                    res[i] = x[b * n + i] - self.init_mean[i];
                }
                self.init.log_pdf_residual(&mut res)
            })
            .sum()
    }

    fn sample_transition(&self, prev: &State, rng: &mut RngStream) -> State {
        let n = self.bx();
        let mut out = State::zeros(self.state_dim());
        for b in 0..self.blocks {
            let blk = &mut out.as_mut_slice()[b * n..(b + 1) * n];
            mat_vec(&self.f, &prev.as_slice()[b * n..(b + 1) * n], blk);
            self.q.add_noise(blk, rng);
        }
        out
    }

    fn log_transition(&self, x: &State, prev: &State) -> f64 {
        let n = self.bx();
        let mut res = vec![0.0; n];
        (0..self.blocks)
            .map(|b| {
                mat_vec(&self.f, &prev.as_slice()[b * n..(b + 1) * n], &mut res);
                for i in 0..n {
                    res[i] = x[b * n + i] - res[i];
                }
                self.q.log_pdf_residual(&mut res)
            })
            .sum()
    }

    fn sample_observation(&self, x: &State, rng: &mut RngStream) -> State {
        let (n, d) = (self.bx(), self.by());
        let mut out = State::zeros(self.obs_dim());
        for b in 0..self.blocks {
            let blk = &mut out.as_mut_slice()[b * d..(b + 1) * d];
            mat_vec(&self.h, &x.as_slice()[b * n..(b + 1) * n], blk);
            self.r.add_noise(blk, rng);
        }
        out
    }

    fn log_likelihood(&self, y: &State, x: &State) -> f64 {
        let (n, d) = (self.bx(), self.by());
        let mut res = vec![0.0; d];
        (0..self.blocks)
            .map(|b| {
                self.innovation(
                    &y.as_slice()[b * d..(b + 1) * d],
                    &x.as_slice()[b * n..(b + 1) * n],
                    &mut res,
                );
                self.r.log_pdf_residual(&mut res)
            })
            .sum()
    }

    fn closed_forms(&self) -> Option<&dyn ClosedForms> {
        Some(self)
    }
}

impl ClosedForms for LinearGaussianSSM {
    fn predictive_loglik(&self, y: &State, prev: Option<&State>) -> f64 {
        let (n, d) = (self.bx(), self.by());
        let mut mean = vec![0.0; n];
        let mut res = vec![0.0; d];
        let pred = &self.conditioning(prev).predictive;
        (0..self.blocks)
            .map(|b| {
                self.prior_mean(prev, b, &mut mean);
                self.innovation(&y.as_slice()[b * d..(b + 1) * d], &mean, &mut res);
                pred.log_pdf_residual(&mut res)
            })
            .sum()
    }

    fn sample_optimal(&self, prev: Option<&State>, y: &State, rng: &mut RngStream) -> State {
        let n = self.bx();
        let post = &self.conditioning(prev).posterior;
        let mut out = State::zeros(self.state_dim());
        for b in 0..self.blocks {
            let blk = &mut out.as_mut_slice()[b * n..(b + 1) * n];
            self.optimal_mean(prev, y, b, blk);
            post.add_noise(blk, rng);
        }
        out
    }

    fn log_optimal(&self, x: &State, prev: Option<&State>, y: &State) -> f64 {
        let n = self.bx();
        let post = &self.conditioning(prev).posterior;
        let mut mean = vec![0.0; n];
        (0..self.blocks)
            .map(|b| {
                self.optimal_mean(prev, y, b, &mut mean);
                for i in 0..n {
                    mean[i] = x[b * n + i] - mean[i];
                }
                post.log_pdf_residual(&mut mean)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_vec(rng: &mut RngStream, n: usize, scale: f64) -> State {
        State::from_fn(n, |_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn factorization_identity_holds_per_block() {
        let m = LinearGaussianSSM::high_dimensional(3).unwrap();
        let mut rng = RngStream::new(2, 2);
        for _ in 0..100 {
            let xp = random_vec(&mut rng, 12, 10.0);
            let x = random_vec(&mut rng, 12, 10.0);
            let y = random_vec(&mut rng, 6, 10.0);
            for prev in [Some(&xp), None] {
                let lhs = m.log_optimal(&x, prev, &y) + m.predictive_loglik(&y, prev);
                let rhs = m.log_prior(&x, prev) + m.log_likelihood(&y, &x);
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn blocks_match_dense_densities() {
        let m = LinearGaussianSSM::high_dimensional(2).unwrap();
        let mut rng = RngStream::new(3, 3);
        let xp = random_vec(&mut rng, 8, 5.0);
        let x = random_vec(&mut rng, 8, 5.0);
        let y = random_vec(&mut rng, 4, 5.0);
        let dense = |cov: DMatrix<f64>, r: DVector<f64>| {
            let mut r = r.as_slice().to_vec();
            CholGaussian::new(&cov).unwrap().log_pdf_residual(&mut r)
        };
        let ft = m.transition_matrix();
        assert_abs_diff_eq!(
            m.log_transition(&x, &xp),
            dense(m.process_covariance(), &x - &ft * &xp),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            m.log_likelihood(&y, &x),
            dense(m.measurement_covariance(), &y - m.observation_matrix() * &x),
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            m.log_initial(&x),
            dense(m.initial_covariance(), &x - m.initial_mean()),
            epsilon = 1e-10
        );
    }

    #[test]
    fn rejects_bad_shapes() {
        let eye = DMatrix::<f64>::identity(2, 2);
        assert!(LinearGaussianSSM::new(
            eye.clone(),
            eye.clone(),
            DMatrix::identity(1, 3),
            DMatrix::identity(1, 1),
            DVector::zeros(2),
            eye
        )
        .is_err());
    }
}
