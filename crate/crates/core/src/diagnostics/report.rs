use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    delta_series, first_order_bound_value, layer_residuals, lipschitz_bound_with, uniform_error_bound_value,
    NetworkGains, WeightPerturbation,
};
use crate::error::Result;
use crate::netmodel::NetworkSpec;
use crate::numerics::Matrix;

/// One block of the error-growth series. `residual_fro` is the residual of
/// the layer producing block `m`, absent for the input block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub m: usize,
    pub delta_m: f64,
    pub residual_fro: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub rows: Vec<SeriesRow>,
    pub bound_u: f64,
    pub uniform_bound: f64,
    pub first_order_bound: f64,
    #[serde(rename = "gain_G")]
    pub gain_g: f64,
    pub ratio_r: f64,
    pub config: BTreeMap<String, String>,
}

impl DiagnosticsReport {
    /// Compares `net_hat` against `net` on inputs `x`.
    pub fn build(
        net: &NetworkSpec,
        net_hat: &NetworkSpec,
        x: &Matrix,
        config: BTreeMap<String, String>,
    ) -> Result<Self> {
        let deltas = delta_series(net, net_hat, x)?;
        let residuals = layer_residuals(net, net_hat, x)?;
        let perturb = WeightPerturbation::between(net, net_hat)?;
        let gains = NetworkGains::new(net);
        gains.check_nondegenerate()?;
        let g = gains.gain_product();
        let x_norm = x.frobenius_norm();
        let r = perturb.ratio_r();
        let mut rows = vec![SeriesRow {
            m: 0,
            delta_m: 0.0,
            residual_fro: None,
        }];
        rows.extend(deltas.iter().zip(&residuals).enumerate().map(|(i, (&d, &res))| SeriesRow {
            m: i + 1,
            delta_m: d,
            residual_fro: Some(res),
        }));
        Ok(Self {
            rows,
            bound_u: lipschitz_bound_with(&gains, &residuals)?,
            uniform_bound: uniform_error_bound_value(net.depth(), r, g, x_norm),
            first_order_bound: first_order_bound_value(net.depth(), r, g, x_norm),
            gain_g: g,
            ratio_r: r,
            config,
        })
    }

    pub fn delta_values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.delta_m).collect()
    }

    pub fn final_delta(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.delta_m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are finite");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Three blank-line separated sections: the series, the scalar bounds,
    /// and the config echo.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,delta_m,residual_fro\n");
        for r in &self.rows {
            let res = r.residual_fro.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", r.m, r.delta_m, res));
        }
        out.push_str("\nbound_u,uniform_bound,first_order_bound,gain_G,ratio_r\n");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            self.bound_u, self.uniform_bound, self.first_order_bound, self.gain_g, self.ratio_r
        ));
        out.push_str("\nkey,value\n");
        for (k, v) in &self.config {
            out.push_str(&format!("{},{}\n", csv_field(k), csv_field(v)));
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{Activation, Layer};

    fn pair() -> (NetworkSpec, NetworkSpec, Matrix) {
        let w = |s: f64| Matrix::from_fn(3, 3, |i, j| ((i * 3 + j) as f64 * s).sin());
        let net = NetworkSpec::new(
            3,
            vec![Layer::new(w(0.7), Activation::Relu), Layer::new(w(1.1), Activation::Identity)],
        )
        .unwrap();
        let hat = NetworkSpec::new(
            3,
            vec![
                Layer::new(w(0.7).map(|v| (v * 8.0).round() / 8.0), Activation::Relu),
                Layer::new(w(1.1).map(|v| (v * 8.0).round() / 8.0), Activation::Identity),
            ],
        )
        .unwrap();
        let x = Matrix::from_fn(3, 5, |i, j| ((i + 3 * j) as f64).cos());
        (net, hat, x)
    }

    #[test]
    fn identical_nets_give_zero_series() {
        let (net, _, x) = pair();
        let r = DiagnosticsReport::build(&net, &net, &x, BTreeMap::new()).unwrap();
        assert!(r.rows.iter().all(|row| row.delta_m == 0.0));
        assert_eq!(r.bound_u, 0.0);
        assert_eq!(r.uniform_bound, 0.0);
    }

    #[test]
    fn series_shape_and_bounds() {
        let (net, hat, x) = pair();
        let r = DiagnosticsReport::build(&net, &hat, &x, BTreeMap::new()).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.rows[0].residual_fro, None);
        let measured = r.final_delta().sqrt();
        assert!(measured <= r.bound_u && measured <= r.uniform_bound);
    }

    #[test]
    fn json_round_trip_and_field_names() {
        let (net, hat, x) = pair();
        let mut cfg = BTreeMap::new();
        cfg.insert("alpha".to_string(), "0.5,1".to_string());
        let r = DiagnosticsReport::build(&net, &hat, &x, cfg).unwrap();
        let json = r.to_json();
        for key in ["\"m\"", "delta_m", "residual_fro", "bound_u", "uniform_bound", "first_order_bound", "gain_G", "ratio_r"] {
            assert!(json.contains(key), "{key}");
        }
        assert_eq!(DiagnosticsReport::from_json(&json).unwrap(), r);
        let csv = r.to_csv();
        assert!(csv.starts_with("m,delta_m,residual_fro\n0,0,\n"));
        assert!(csv.contains("\nalpha,\"0.5,1\"\n"));
    }
}
