use crate::error::{Error, Result};

/// Chebyshev points `t_j = T/2 + (T/2) cos((2j + 1) pi / (2n + 2))`,
/// `j = 0..=n`, strictly decreasing in `j`.
pub fn chebyshev_nodes(degree: usize, horizon: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    let half = horizon / 2.0;
    Ok((0..=degree)
        .map(|j| half + half * node_angle(j, degree).cos())
        .collect())
}

fn node_angle(j: usize, degree: usize) -> f64 {
    (2 * j + 1) as f64 * std::f64::consts::PI / (2 * degree + 2) as f64
}

/// Coefficients `a` of a lifted curve, one row per basis function
/// (`n + 1` rows) and one column per separable term (`K` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CoeffMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CoeffMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} coefficient matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients must be finite"));
        }
        Ok(CoeffMatrix { rows, cols, data })
    }

    /// Every row equal to `row`, i.e. the constant curve `row`.
    pub fn constant(rows: usize, row: &[f64]) -> Self {
        let cols = row.len();
        let data = row.iter().copied().cycle().take(rows * cols).collect();
        CoeffMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, h: usize, j: usize) -> f64 {
        self.data[h * self.cols + j]
    }

    pub fn set(&mut self, h: usize, j: usize, v: f64) {
        self.data[h * self.cols + j] = v;
    }

    pub fn row(&self, h: usize) -> &[f64] {
        &self.data[h * self.cols..(h + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &CoeffMatrix) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += scale * o;
        }
    }
}

/// Lagrange polynomials `g_0..g_n` at the Chebyshev nodes of `[0, T]`,
/// evaluated with the second barycentric formula.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeBasis {
    degree: usize,
    horizon: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(degree: usize, horizon: f64) -> Result<Self> {
        let nodes = chebyshev_nodes(degree, horizon)?;
        // Barycentric weights of first-kind Chebyshev points, up to a common factor.
        let weights = (0..=degree)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * node_angle(j, degree).sin()
            })
            .collect();
        Ok(LagrangeBasis { degree, horizon, nodes, weights })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `n + 1`.
    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let slack = 1e-12 * self.horizon;
        if t.is_nan() || t < -slack || t > self.horizon + slack {
            return Err(Error::OutOfDomain { t, horizon: self.horizon });
        }
        Ok(())
    }

    /// Writes `g_0(t), ..., g_n(t)` into `out`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        self.check_time(t)?;
        if out.len() != self.len() {
            return Err(Error::Shape(format!("{} slots for {} basis functions", out.len(), self.len())));
        }
        if let Some(hit) = self.nodes.iter().position(|&node| node == t) {
            out.fill(0.0);
            out[hit] = 1.0;
            return Ok(());
        }
        let mut denom = 0.0;
        for ((o, &w), &node) in out.iter_mut().zip(&self.weights).zip(&self.nodes) {
            *o = w / (t - node);
            denom += *o;
        }
        for o in out.iter_mut() {
            *o /= denom;
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(t, &mut out)?;
        Ok(out)
    }

    /// `(L a)(t) = sum_h a_h g_h(t)`.
    pub fn lift(&self, a: &CoeffMatrix, t: f64) -> Result<Vec<f64>> {
        if a.rows() != self.len() {
            return Err(Error::Shape(format!(
                "coefficient matrix has {} rows, basis has {}",
                a.rows(),
                self.len()
            )));
        }
        let g = self.eval(t)?;
        let mut out = vec![0.0; a.cols()];
        for (h, gh) in g.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(a.row(h)) {
                *o += gh * v;
            }
        }
        Ok(out)
    }

    /// Node interpolation: row `j` of the result is `f(t_j)`.
    pub fn interpolate_fn<F>(&self, mut f: F) -> Result<CoeffMatrix>
    where
        F: FnMut(f64) -> Vec<f64>,
    {
        let mut data = Vec::new();
        let mut cols = None;
        for &node in &self.nodes {
            let row = f(node);
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(Error::Shape("curve changes dimension between nodes".into()))
                }
                _ => {}
            }
            data.extend(row);
        }
        CoeffMatrix::from_vec(self.len(), cols.unwrap_or(0), data)
    }
}
