//! Mesh quality measures with respect to a metric tensor field:
//! equidistribution, alignment, and a combined single-condition measure.

use super::{Mesh, MeshError};
use crate::metric::MetricField;
use crate::smallmat::{det_one, inv_one};

/// Aggregated mesh quality measures. All measures are >= 1, with value 1
/// characterizing a perfectly equidistributed / aligned mesh.
#[derive(Debug, Clone, Copy)]
pub struct QualityReport {
    /// Alignment measure with the identity metric (pure shape quality).
    pub qgeo: f64,
    /// Equidistribution measure.
    pub qeq: f64,
    /// Alignment measure with respect to the metric.
    pub qali: f64,
    /// Combined equidistribution + alignment measure, max norm.
    pub qmax: f64,
    /// Combined measure, L2 norm over the computational domain.
    pub ql2: f64,
}

/// Edge matrix of the equilateral reference simplex with the given volume,
/// column-major in `out[..d*d]`.
pub(crate) fn equilateral_edges(d: usize, volume: f64, out: &mut [f64]) {
    match d {
        1 => out[0] = volume,
        2 => {
            // vertices (0,0), (1,0), (1/2, sqrt(3)/2); area sqrt(3)/4
            let s = (volume / (3f64.sqrt() / 4.0)).sqrt();
            out[0] = s;
            out[1] = 0.0;
            out[2] = 0.5 * s;
            out[3] = 3f64.sqrt() / 2.0 * s;
        }
        3 => {
            // regular tetrahedron with unit edge; volume sqrt(2)/12
            let s = (volume / (2f64.sqrt() / 12.0)).cbrt();
            let cols = [
                [1.0, 0.0, 0.0],
                [0.5, 3f64.sqrt() / 2.0, 0.0],
                [0.5, 3f64.sqrt() / 6.0, 6f64.sqrt() / 3.0],
            ];
            for (j, col) in cols.iter().enumerate() {
                for r in 0..3 {
                    out[j * 3 + r] = s * col[r];
                }
            }
        }
        _ => unreachable!(),
    }
}

struct ElemQuality {
    q_ali: f64,
    q_geo: f64,
    q_eq: f64,
    xi_frac: f64, // |K_c| / |Omega_c|
}

fn per_element(
    mesh: &Mesh,
    metric: &MetricField,
    xi_ref: Option<&Mesh>,
) -> Result<Vec<ElemQuality>, MeshError> {
    let d = mesh.dim();
    let ne = mesh.n_elements();
    if let Some(xr) = xi_ref {
        if xr.n_elements() != ne || xr.dim() != d {
            return Err(MeshError::Invalid(
                "reference mesh must share the connectivity of the physical mesh".into(),
            ));
        }
    }
    let mvals = metric.values();
    let dd = d * d;
    let mut eq_equil = [0.0; 9];
    equilateral_edges(d, 1.0 / ne as f64, &mut eq_equil);
    let xi_total: f64 = match xi_ref {
        Some(xr) => xr.total_volume(),
        None => 1.0,
    };
    // sigma_h = sum_K |K| sqrt(det M_K)
    let mut mk = vec![0.0; ne * dd];
    let mut det_mk = vec![0.0; ne];
    let mut sigma_h = 0.0;
    for e in 0..ne {
        let vs = mesh.elem(e);
        let row = &mut mk[e * dd..(e + 1) * dd];
        for &v in vs {
            for k in 0..dd {
                row[k] += mvals.row(v)[k];
            }
        }
        for k in row.iter_mut() {
            *k /= (d + 1) as f64;
        }
        let det = det_one(d, row);
        if det <= 0.0 {
            return Err(MeshError::Invalid(format!(
                "metric is not positive definite on element {e}"
            )));
        }
        det_mk[e] = det;
        sigma_h += mesh.volume(e) * det.sqrt();
    }
    let mut out = Vec::with_capacity(ne);
    let mut e_mat = [0.0; 9];
    let mut e_inv = [0.0; 9];
    let mut ehat = [0.0; 9];
    let mut j_mat = [0.0; 9];
    let mut minv = [0.0; 9];
    for e in 0..ne {
        mesh.edge_matrix(e, &mut e_mat);
        inv_one(d, &e_mat[..dd], &mut e_inv);
        let (ehat_slice, xi_vol): (&[f64], f64) = match xi_ref {
            Some(xr) => {
                xr.edge_matrix(e, &mut ehat);
                (&ehat[..dd], xr.volume(e))
            }
            None => (&eq_equil[..dd], 1.0 / ne as f64),
        };
        // J = Ehat * E^{-1}
        for c in 0..d {
            for r in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += ehat_slice[k * d + r] * e_inv[c * d + k];
                }
                j_mat[c * d + r] = s;
            }
        }
        inv_one(d, &mk[e * dd..(e + 1) * dd], &mut minv);
        // tr(J Minv J^T) and tr(J J^T)
        let mut tr_m = 0.0;
        let mut tr_i = 0.0;
        for r in 0..d {
            for c in 0..d {
                let jrc = j_mat[c * d + r];
                tr_i += jrc * jrc;
                for k in 0..d {
                    tr_m += jrc * minv[k * d + c] * j_mat[k * d + r];
                }
            }
        }
        let det_j = det_one(d, &j_mat[..dd]);
        let det_a = det_j * det_j / det_mk[e]; // det(J Minv J^T)
        let q_ali = tr_m / (d as f64 * det_a.powf(1.0 / d as f64));
        let q_geo = tr_i / (d as f64 * (det_j * det_j).powf(1.0 / d as f64));
        let xi_frac = xi_vol / xi_total;
        let q_eq = mesh.volume(e) * det_mk[e].sqrt() / (sigma_h * xi_frac);
        out.push(ElemQuality { q_ali, q_geo, q_eq, xi_frac });
    }
    Ok(out)
}

/// Geometric, equidistribution and alignment measures (max norm when `linf`,
/// otherwise L2 in the computational domain), plus the combined measure.
pub fn quality_measures(
    mesh: &Mesh,
    metric: &MetricField,
    linf: bool,
    xi_ref: Option<&Mesh>,
) -> Result<QualityReport, MeshError> {
    let per = per_element(mesh, metric, xi_ref)?;
    let agg = |f: &dyn Fn(&ElemQuality) -> f64| -> f64 {
        if linf {
            per.iter().map(|q| f(q)).fold(f64::NEG_INFINITY, f64::max)
        } else {
            per.iter().map(|q| q.xi_frac * f(q) * f(q)).sum::<f64>().sqrt()
        }
    };
    let (qmax, ql2) = combined(&per, mesh.dim());
    Ok(QualityReport {
        qgeo: agg(&|q| q.q_geo),
        qeq: agg(&|q| q.q_eq),
        qali: agg(&|q| q.q_ali),
        qmax,
        ql2,
    })
}

/// Maximum and L2 norms of the single combined equidistribution/alignment
/// measure.
pub fn quality_measure2(
    mesh: &Mesh,
    metric: &MetricField,
    xi_ref: Option<&Mesh>,
) -> Result<(f64, f64), MeshError> {
    let per = per_element(mesh, metric, xi_ref)?;
    Ok(combined(&per, mesh.dim()))
}

fn combined(per: &[ElemQuality], d: usize) -> (f64, f64) {
    let p = 1.5;
    let mut qmax = f64::NEG_INFINITY;
    let mut ql2 = 0.0;
    for q in per {
        let comb = q.q_ali.powf(d as f64 * p / 2.0) * q.q_eq.max(1.0 / q.q_eq).powf(p);
        qmax = qmax.max(comb);
        ql2 += q.xi_frac * comb * comb;
    }
    (qmax, ql2.sqrt())
}
