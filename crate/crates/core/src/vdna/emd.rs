use super::histogram::NormalizedVdna;
use super::spec::HistogramSpec;
use crate::error::{Error, Result};

/// Exact 1D Earth Mover's Distance between two mass rows on a shared
/// uniform bin grid: `bin_width × Σ_k |CDF_p(k) − CDF_q(k)|`.
pub fn emd_neuron(p: &[f64], q: &[f64], bin_width: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(format!("histogram lengths differ: {} vs {}", p.len(), q.len())));
    }
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        cdf_gap += a - b;
        total += cdf_gap.abs();
    }
    Ok(total * bin_width)
}

/// Weighted mean of per-neuron EMDs. Bin widths come from `spec`; with no
/// weights every neuron counts equally.
pub fn emd_vdna(a: &NormalizedVdna, b: &NormalizedVdna, spec: &HistogramSpec, weights: Option<&[f64]>) -> Result<f64> {
    for id in [a.spec_id(), b.spec_id()] {
        if id != spec.id() {
            return Err(Error::SpecMismatch { expected: spec.id(), found: id });
        }
    }
    let n = spec.neuron_count();
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::shape(format!("{} weights for {n} neurons", w.len())));
        }
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Config("neuron weights must be finite and non-negative".into()));
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let w = weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        num += w * emd_neuron(a.row(i), b.row(i), spec.bin_width(i))?;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::Config("neuron weights sum to zero".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vdna::{LayerInfo, Vdna};

    #[test]
    fn identical_rows_are_zero() {
        let p = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(emd_neuron(&p, &p, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn single_transport() {
        let mut p = vec![0.0; 10];
        let mut q = vec![0.0; 10];
        p[0] = 1.0;
        q[7] = 1.0;
        assert!((emd_neuron(&p, &q, 0.25).unwrap() - 7.0 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(emd_neuron(&[1.0], &[0.5, 0.5], 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn weighted_aggregation() {
        let spec =
            HistogramSpec::new(vec![LayerInfo::new(1, 3)], 4, vec![(0.0, 4.0), (0.0, 8.0), (-1.0, 1.0)]).unwrap();
        let a = NormalizedVdna::from_mass(
            spec.id(),
            4,
            vec![1.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25, 0.0, 0.5, 0.5, 0.0],
        )
        .unwrap();
        let b =
            NormalizedVdna::from_mass(spec.id(), 4, vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.0, 0.0, 0.5])
                .unwrap();
        let per: Vec<f64> = (0..3).map(|i| emd_neuron(a.row(i), b.row(i), spec.bin_width(i)).unwrap()).collect();
        // neuron 0: 2 bins of width 1; neuron 1: 1.5 bins average of width 2;
        // neuron 2: each half moves one bin of width 0.5
        assert!((per[0] - 2.0).abs() < 1e-12);
        assert!((per[1] - 3.0).abs() < 1e-12);
        assert!((per[2] - 0.5).abs() < 1e-12);
        let mean = emd_vdna(&a, &b, &spec, None).unwrap();
        assert!((mean - per.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        let single = emd_vdna(&a, &b, &spec, Some(&[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(single, per[1]);
        assert_eq!(emd_vdna(&a, &a, &spec, None).unwrap(), 0.0);

        let other = HistogramSpec::with_uniform_range(vec![LayerInfo::new(1, 3)], 4, 0.0, 1.0).unwrap();
        let c = Vdna::empty(&other).normalize();
        assert!(matches!(emd_vdna(&a, &c, &spec, None), Err(Error::SpecMismatch { .. })));
    }
}
