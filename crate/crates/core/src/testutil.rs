//! Independent numerical oracles for unit tests. Everything here recomputes
//! quantities from the loss alone, never through the factored Hessian path.

use nalgebra::DMatrix;

use crate::moments::{loss, DataMoments, LinearNetwork};

/// Central-difference Hessian of the loss, step `h = 1e-5 (1 + |parameter|)`.
pub(crate) fn finite_difference_hessian(net: &LinearNetwork, moments: &DataMoments) -> DMatrix<f64> {
    let dims = net.dims().to_vec();
    let params = net.parameter_vector();
    let n = params.len();
    let eval = |p: &nalgebra::DVector<f64>| -> f64 {
        loss(&LinearNetwork::from_parameter_vector(&dims, p).unwrap(), moments).unwrap()
    };
    let base = eval(&params);
    let step = |i: usize| 1e-5 * (1.0 + params[i].abs());
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let hi = step(i);
        for j in i..n {
            let value = if i == j {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus[i] += hi;
                minus[i] -= hi;
                (eval(&plus) - 2.0 * base + eval(&minus)) / (hi * hi)
            } else {
                let hj = step(j);
                let mut pp = params.clone();
                let mut pm = params.clone();
                let mut mp = params.clone();
                let mut mm = params.clone();
                pp[i] += hi;
                pp[j] += hj;
                pm[i] += hi;
                pm[j] -= hj;
                mp[i] -= hi;
                mp[j] += hj;
                mm[i] -= hi;
                mm[j] -= hj;
                (eval(&pp) - eval(&pm) - eval(&mp) + eval(&mm)) / (4.0 * hi * hj)
            };
            h[(i, j)] = value;
            h[(j, i)] = value;
        }
    }
    h
}
