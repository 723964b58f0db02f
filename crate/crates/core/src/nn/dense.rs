use rand::Rng;

use super::{uniform_init, Matrix, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
    Exponential,
    /// Row-wise softmax over the affine scores.
    Softmax,
}

impl Activation {
    fn apply(self, z: &mut Matrix) {
        match self {
            Activation::Relu => z.data_mut().iter_mut().for_each(|x| *x = x.max(0.0)),
            Activation::Identity => {}
            Activation::Exponential => z.data_mut().iter_mut().for_each(|x| *x = x.exp()),
            Activation::Softmax => {
                for r in 0..z.rows() {
                    softmax_in_place(z.row_mut(r));
                }
            }
        }
    }

    /// Gradient wrt the pre-activation given the activation output `y`.
    fn backward(self, y: &Matrix, dy: &Matrix) -> Matrix {
        match self {
            Activation::Relu => y.zip_map(dy, |y, g| if y > 0.0 { g } else { 0.0 }),
            Activation::Identity => dy.clone(),
            Activation::Exponential => y.zip_map(dy, |y, g| y * g),
            Activation::Softmax => {
                let mut dz = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), dy.row(r));
                    let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, &yv), &gv) in dz.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *d = yv * (gv - inner);
                    }
                }
                dz
            }
        }
    }
}

pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    row.iter_mut().for_each(|x| *x /= sum);
}

/// Fully connected layer `y = act(x Wᵀ + b)` over a batch of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out x in`
    pub weight: Matrix,
    /// `1 x out`
    pub bias: Matrix,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    input: Matrix,
    output: Matrix,
    activation: Activation,
}

impl DenseCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: uniform_init(output, input, input, rng),
            bias: uniform_init(1, output, input, rng),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: Matrix::zeros(1, output),
        }
    }

    pub fn from_parts(weight: Matrix, bias: Matrix) -> Self {
        assert_eq!(bias.shape(), (1, weight.rows()), "bias shape mismatch");
        Self { weight, bias }
    }

    pub fn input_size(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_size(&self) -> usize {
        self.weight.rows()
    }

    pub fn apply(&self, x: &Matrix, activation: Activation) -> Matrix {
        assert_eq!(x.cols(), self.input_size(), "dense input width mismatch");
        let mut z = x.matmul_nt(&self.weight);
        z.add_row_broadcast(&self.bias);
        activation.apply(&mut z);
        z
    }

    pub fn forward(&self, x: &Matrix, activation: Activation) -> (Matrix, DenseCache) {
        let y = self.apply(x, activation);
        let cache = DenseCache {
            input: x.clone(),
            output: y.clone(),
            activation,
        };
        (y, cache)
    }

    /// Accumulates parameter gradients into `grads` and returns `∂L/∂x`.
    pub fn backward(&self, cache: &DenseCache, dy: &Matrix, grads: &mut Dense) -> Matrix {
        assert_eq!(dy.shape(), cache.output.shape(), "output gradient shape mismatch");
        let dz = cache.activation.backward(&cache.output, dy);
        dz.matmul_tn_into(&cache.input, &mut grads.weight);
        grads.bias.add_assign(&dz.sum_rows());
        dz.matmul(&self.weight)
    }
}

impl Parameterized for Dense {
    fn parameters(&self) -> Vec<(String, &Matrix)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.weight, &mut self.bias]
    }
}
