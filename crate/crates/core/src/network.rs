//! DC power flow linearization through injection shift factors.
use crate::instance::SystemInstance;
use nalgebra::DMatrix;
use thiserror::Error;

/// Injections must sum to zero within this many MW.
pub const BALANCE_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("singular network: {0}")]
    Singular(String),
    #[error("injections do not balance (sum = {0} MW)")]
    UnbalancedInjection(f64),
    #[error("expected {expected} injections, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Sensitivity of every line flow to an injection at every node, withdrawn at
/// the reference node. `psi[(line, node)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsfMatrix {
    pub psi: DMatrix<f64>,
    pub reference_node: usize,
}

impl IsfMatrix {
    pub fn num_lines(&self) -> usize {
        self.psi.nrows()
    }

    pub fn num_nodes(&self) -> usize {
        self.psi.ncols()
    }

    pub fn get(&self, line: usize, node: usize) -> f64 {
        self.psi[(line, node)]
    }

    /// Flow on every line for a balanced nodal injection vector.
    pub fn line_flows(&self, injections: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if injections.len() != self.num_nodes() {
            return Err(NetworkError::DimensionMismatch {
                expected: self.num_nodes(),
                got: injections.len(),
            });
        }
        let total: f64 = injections.iter().sum();
        if total.abs() > BALANCE_TOL {
            return Err(NetworkError::UnbalancedInjection(total));
        }
        Ok(self.flows_unchecked(injections))
    }

    pub(crate) fn flows_unchecked(&self, injections: &[f64]) -> Vec<f64> {
        (0..self.num_lines())
            .map(|l| {
                self.psi
                    .row(l)
                    .iter()
                    .zip(injections)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }
}

/// Builds the ISF matrix by inverting the susceptance matrix reduced by the
/// reference node.
pub fn compute_isf(instance: &SystemInstance) -> Result<IsfMatrix, NetworkError> {
    let n = instance.num_nodes();
    let r = instance.reference_node;
    let lines = &instance.lines;
    for l in lines {
        if !(l.reactance.is_finite() && l.reactance != 0.0) {
            return Err(NetworkError::Singular(format!(
                "line {} has zero reactance",
                l.id
            )));
        }
    }
    let reduced = |node: usize| -> Option<usize> {
        match node.cmp(&r) {
            std::cmp::Ordering::Less => Some(node),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(node - 1),
        }
    };

    let mut psi = DMatrix::zeros(lines.len(), n);
    if n == 1 {
        return Ok(IsfMatrix {
            psi,
            reference_node: r,
        });
    }

    let mut b = DMatrix::<f64>::zeros(n - 1, n - 1);
    for l in lines {
        let y = 1.0 / l.reactance;
        let (i, j) = (reduced(l.from), reduced(l.to));
        if let Some(i) = i {
            b[(i, i)] += y;
        }
        if let Some(j) = j {
            b[(j, j)] += y;
        }
        if let (Some(i), Some(j)) = (i, j) {
            b[(i, j)] -= y;
            b[(j, i)] -= y;
        }
    }
    let x = b
        .lu()
        .try_inverse()
        .ok_or_else(|| NetworkError::Singular("reduced susceptance matrix is singular".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NetworkError::Singular(
            "reduced susceptance matrix is singular".into(),
        ));
    }

    // theta = X p; flow = (theta_from - theta_to) / x_l
    for (li, l) in lines.iter().enumerate() {
        for node in 0..n {
            let Some(c) = reduced(node) else { continue };
            let tf = reduced(l.from).map_or(0.0, |i| x[(i, c)]);
            let tt = reduced(l.to).map_or(0.0, |j| x[(j, c)]);
            psi[(li, node)] = (tf - tt) / l.reactance;
        }
    }
    Ok(IsfMatrix {
        psi,
        reference_node: r,
    })
}
