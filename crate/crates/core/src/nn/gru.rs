use rand::Rng;

use super::{sigmoid, uniform_init, Matrix, Parameterized};

/// Gated recurrent unit with the reset gate applied to the hidden state
/// before the candidate projection:
///
/// ```text
/// z  = σ(x W_zᵀ + h U_zᵀ + b_z)
/// r  = σ(x W_rᵀ + h U_rᵀ + b_r)
/// h̃  = tanh(x W_hᵀ + (r ⊙ h) U_hᵀ + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Matrix,
    pub b_r: Matrix,
    pub b_h: Matrix,
}

#[derive(Clone, Debug)]
pub struct GruStepCache {
    x: Matrix,
    h_prev: Matrix,
    z: Matrix,
    r: Matrix,
    candidate: Matrix,
    reset_hidden: Matrix,
}

impl GruStepCache {
    pub fn update_gate(&self) -> &Matrix {
        &self.z
    }

    pub fn reset_gate(&self) -> &Matrix {
        &self.r
    }

    pub fn candidate(&self) -> &Matrix {
        &self.candidate
    }
}

/// Record of a masked multi-step pass. `mask[t][b]` is false for padded
/// steps, where the hidden state is carried through unchanged.
#[derive(Clone, Debug)]
pub struct GruSequenceCache {
    steps: Vec<GruStepCache>,
    mask: Vec<Vec<bool>>,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut w = || uniform_init(hidden, input, input, rng);
        let (w_z, w_r, w_h) = (w(), w(), w());
        let mut u = || uniform_init(hidden, hidden, hidden, rng);
        let (u_z, u_r, u_h) = (u(), u(), u());
        let mut b = || uniform_init(1, hidden, hidden, rng);
        let (b_z, b_r, b_h) = (b(), b(), b());
        Self {
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Matrix::zeros(hidden, input);
        let u = || Matrix::zeros(hidden, hidden);
        let b = || Matrix::zeros(1, hidden);
        Self {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.u_z.rows()
    }

    fn gate(&self, x: &Matrix, w: &Matrix, h: &Matrix, u: &Matrix, b: &Matrix) -> Matrix {
        let mut a = x.matmul_nt(w);
        a.add_assign(&h.matmul_nt(u));
        a.add_row_broadcast(b);
        a
    }

    pub fn step(&self, x: &Matrix, h_prev: &Matrix) -> (Matrix, GruStepCache) {
        assert_eq!(x.cols(), self.input_size(), "GRU input width mismatch");
        assert_eq!(h_prev.cols(), self.hidden_size(), "GRU hidden width mismatch");
        assert_eq!(x.rows(), h_prev.rows(), "GRU batch mismatch");
        let z = self
            .gate(x, &self.w_z, h_prev, &self.u_z, &self.b_z)
            .map(sigmoid);
        let r = self
            .gate(x, &self.w_r, h_prev, &self.u_r, &self.b_r)
            .map(sigmoid);
        let reset_hidden = r.zip_map(h_prev, |r, h| r * h);
        let candidate = self
            .gate(x, &self.w_h, &reset_hidden, &self.u_h, &self.b_h)
            .map(f64::tanh);
        let mut h = h_prev.clone();
        for ((hv, &zv), &cv) in h
            .data_mut()
            .iter_mut()
            .zip(z.data())
            .zip(candidate.data())
        {
            *hv = (1.0 - zv) * *hv + zv * cv;
        }
        let cache = GruStepCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            z,
            r,
            candidate,
            reset_hidden,
        };
        (h, cache)
    }

    /// Returns `(∂L/∂x, ∂L/∂h_prev)` and accumulates parameter gradients.
    pub fn backward_step(
        &self,
        cache: &GruStepCache,
        dh: &Matrix,
        grads: &mut GruCell,
    ) -> (Matrix, Matrix) {
        let GruStepCache {
            x,
            h_prev,
            z,
            r,
            candidate,
            reset_hidden,
        } = cache;

        let mut dh_prev = dh.zip_map(z, |g, z| g * (1.0 - z));
        let d_cand_pre = Matrix::from_vec(
            dh.rows(),
            dh.cols(),
            dh.data()
                .iter()
                .zip(z.data())
                .zip(candidate.data())
                .map(|((&g, &z), &c)| g * z * (1.0 - c * c))
                .collect(),
        );
        let dz_pre = Matrix::from_vec(
            dh.rows(),
            dh.cols(),
            dh.data()
                .iter()
                .zip(z.data())
                .zip(candidate.data().iter().zip(h_prev.data()))
                .map(|((&g, &z), (&c, &h))| g * (c - h) * z * (1.0 - z))
                .collect(),
        );

        d_cand_pre.matmul_tn_into(x, &mut grads.w_h);
        d_cand_pre.matmul_tn_into(reset_hidden, &mut grads.u_h);
        grads.b_h.add_assign(&d_cand_pre.sum_rows());
        let mut dx = d_cand_pre.matmul(&self.w_h);
        let d_reset_hidden = d_cand_pre.matmul(&self.u_h);

        let dr_pre = Matrix::from_vec(
            dh.rows(),
            dh.cols(),
            d_reset_hidden
                .data()
                .iter()
                .zip(h_prev.data())
                .zip(r.data())
                .map(|((&g, &h), &r)| g * h * r * (1.0 - r))
                .collect(),
        );
        dh_prev.add_assign(&d_reset_hidden.zip_map(r, |g, r| g * r));

        for (d_pre, w, u, gw, gu, gb) in [
            (&dz_pre, &self.w_z, &self.u_z, &mut grads.w_z, &mut grads.u_z, &mut grads.b_z),
            (&dr_pre, &self.w_r, &self.u_r, &mut grads.w_r, &mut grads.u_r, &mut grads.b_r),
        ] {
            d_pre.matmul_tn_into(x, gw);
            d_pre.matmul_tn_into(h_prev, gu);
            gb.add_assign(&d_pre.sum_rows());
            dx.add_assign(&d_pre.matmul(w));
            dh_prev.add_assign(&d_pre.matmul(u));
        }
        (dx, dh_prev)
    }

    /// Runs the cell over `inputs` from a zero state and returns every hidden
    /// state. Rows whose mask entry is false keep their previous state.
    pub fn forward_sequence(
        &self,
        inputs: &[Matrix],
        mask: &[Vec<bool>],
    ) -> (Vec<Matrix>, GruSequenceCache) {
        assert_eq!(inputs.len(), mask.len(), "mask length mismatch");
        let batch = inputs.first().map_or(0, Matrix::rows);
        let mut h = Matrix::zeros(batch, self.hidden_size());
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut steps = Vec::with_capacity(inputs.len());
        for (x, active) in inputs.iter().zip(mask) {
            let (mut next, cache) = self.step(x, &h);
            for (b, &on) in active.iter().enumerate() {
                if !on {
                    next.row_mut(b).copy_from_slice(h.row(b));
                }
            }
            steps.push(cache);
            outputs.push(next.clone());
            h = next;
        }
        let cache = GruSequenceCache {
            steps,
            mask: mask.to_vec(),
        };
        (outputs, cache)
    }

    /// Backpropagates through time given `∂L/∂h_t` for every step and
    /// returns `∂L/∂x_t` for every step.
    pub fn backward_sequence(
        &self,
        cache: &GruSequenceCache,
        d_outputs: &[Matrix],
        grads: &mut GruCell,
    ) -> Vec<Matrix> {
        assert_eq!(d_outputs.len(), cache.steps.len(), "gradient count mismatch");
        let mut dx_all = vec![Matrix::zeros(0, 0); cache.steps.len()];
        let mut carry: Option<Matrix> = None;
        for t in (0..cache.steps.len()).rev() {
            let mut dh = d_outputs[t].clone();
            if let Some(c) = &carry {
                dh.add_assign(c);
            }
            // padded rows pass the gradient straight to the previous state
            let mut passthrough = Matrix::zeros(dh.rows(), dh.cols());
            for (b, &on) in cache.mask[t].iter().enumerate() {
                if !on {
                    passthrough.row_mut(b).copy_from_slice(dh.row(b));
                    dh.row_mut(b).fill(0.0);
                }
            }
            let (dx, mut dh_prev) = self.backward_step(&cache.steps[t], &dh, grads);
            dh_prev.add_assign(&passthrough);
            dx_all[t] = dx;
            carry = Some(dh_prev);
        }
        dx_all
    }
}

impl Parameterized for GruCell {
    fn parameters(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("w_z".into(), &self.w_z),
            ("w_r".into(), &self.w_r),
            ("w_h".into(), &self.w_h),
            ("u_z".into(), &self.u_z),
            ("u_r".into(), &self.u_r),
            ("u_h".into(), &self.u_h),
            ("b_z".into(), &self.b_z),
            ("b_r".into(), &self.b_r),
            ("b_h".into(), &self.b_h),
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}
