use crate::error::{Error, Result};

/// Weights and biases of one trainable layer.
///
/// `weights` is a row-major `rows × cols` matrix: for a dense layer `rows` is
/// the input dimension and `cols` the output dimension; for a 1-D convolution
/// `rows` is the tap count and `cols` the filter count. `bias` has length
/// `cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        LayerParams {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; cols],
        }
    }

    #[inline]
    pub fn w(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    pub fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same_shape(&self, other: &LayerParams) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.weights.len() == other.weights.len()
            && self.bias.len() == other.bias.len()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// An ordered list of per-layer tensors. The same container holds a model,
/// a gradient, a momentum velocity or a running gradient average.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    layers: Vec<LayerParams>,
}

/// Model parameters `[w0,1, w1,1, ..., w0,Q, w1,Q]`.
pub type ModelParams = Params;
/// One gradient tensor per trainable tensor of a [`ModelParams`].
pub type GradientSet = Params;

impl Params {
    pub fn new(layers: Vec<LayerParams>) -> Self {
        Params { layers }
    }

    pub fn zeros_like(other: &Params) -> Self {
        Params {
            layers: other
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(LayerParams::values)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(LayerParams::values_mut)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn check_congruent(&self, other: &Params) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::shape(
                self.layers.len().min(other.layers.len()),
                format!(
                    "layer count {} vs {}",
                    self.layers.len(),
                    other.layers.len()
                ),
            ));
        }
        for (q, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            if !a.same_shape(b) {
                return Err(Error::shape(
                    q,
                    format!("{}x{} vs {}x{}", a.rows, a.cols, b.rows, b.cols),
                ));
            }
        }
        Ok(())
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &Params) -> Result<()> {
        self.check_congruent(x)?;
        for (s, v) in self.values_mut().zip(x.values()) {
            *s += a * v;
        }
        Ok(())
    }

    /// `self += rates[q] * x` on each trainable layer `q`.
    pub fn axpy_layerwise(&mut self, rates: &[f64], x: &Params) -> Result<()> {
        self.check_congruent(x)?;
        if rates.len() != self.layers.len() {
            return Err(Error::arg(format!(
                "{} per-layer rates for {} trainable layers",
                rates.len(),
                self.layers.len()
            )));
        }
        for ((dst, src), &a) in self.layers.iter_mut().zip(&x.layers).zip(rates) {
            for (s, v) in dst.values_mut().zip(src.values()) {
                *s += a * v;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for v in self.values_mut() {
            *v *= a;
        }
    }

    /// `self - other`.
    pub fn sub(&self, other: &Params) -> Result<Params> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean distance over all entries.
    pub fn distance(&self, other: &Params) -> Result<f64> {
        self.check_congruent(other)?;
        Ok(self
            .values()
            .zip(other.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub fn max_abs_diff(&self, other: &Params) -> Result<f64> {
        self.check_congruent(other)?;
        Ok(self
            .values()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// One plain SGD step: every tensor moves by `-mu * grad`.
pub fn sgd_step(model: &ModelParams, grad: &GradientSet, mu: f64) -> Result<ModelParams> {
    if mu < 0.0 || !mu.is_finite() {
        return Err(Error::arg(format!("step size must be >= 0, got {mu}")));
    }
    let mut out = model.clone();
    out.axpy(-mu, grad)?;
    Ok(out)
}

/// Heavy-ball momentum: `v <- rho*v - mu*grad`, `model <- model + v`.
pub fn momentum_step(
    model: &ModelParams,
    velocity: &GradientSet,
    grad: &GradientSet,
    mu: f64,
    rho: f64,
) -> Result<(ModelParams, GradientSet)> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::arg(format!("momentum decay must lie in [0,1), got {rho}")));
    }
    model.check_congruent(velocity)?;
    let mut v = velocity.clone();
    v.scale(rho);
    v.axpy(-mu, grad)?;
    let mut m = model.clone();
    m.axpy(1.0, &v)?;
    Ok((m, v))
}

/// Largest Euclidean distance between any two models.
pub fn max_pairwise_distance(models: &[&ModelParams]) -> Result<f64> {
    let mut best = 0.0f64;
    for (i, a) in models.iter().enumerate() {
        for b in &models[i + 1..] {
            best = best.max(a.distance(b)?);
        }
    }
    Ok(best)
}
