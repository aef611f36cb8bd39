use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};

use super::{EnvironmentGraph, NodeId};
use crate::rng::{self, label};
use crate::tensor::Tensor2;

/// Panorama at one viewpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewpointObservation {
    pub node: NodeId,
    /// `n_views × view_dim`.
    pub views: Tensor2,
    /// Indices of the objects placed at this node.
    pub objects: Vec<usize>,
    /// Category of each entry in `objects`.
    pub categories: Vec<usize>,
    /// `m × object_dim`.
    pub object_features: Tensor2,
}

impl ViewpointObservation {
    /// Sector index of the view facing `heading` (radians).
    pub fn sector(n_views: usize, heading: f64) -> usize {
        let width = 2.0 * PI / n_views as f64;
        (heading.rem_euclid(2.0 * PI) / width).floor() as usize % n_views
    }
}

pub(super) fn heading(from: [f64; 3], to: [f64; 3]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

pub(super) fn build(env: &EnvironmentGraph, node: NodeId) -> ViewpointObservation {
    let spec = env.features();
    let n = spec.n_views;
    let d = spec.category_dim;
    let emb = env.category_embedding();
    let mut views = Tensor2::zeros(n, spec.view_dim());
    for k in 0..n {
        let theta = (k as f64 + 0.5) * 2.0 * PI / n as f64;
        views.set(k, 0, theta.sin());
        views.set(k, 1, theta.cos());
    }
    let mut own_hit = vec![false; n];
    let mut nbr_hit = vec![false; n];

    for &oi in env.objects_at(node) {
        let o = &env.objects()[oi];
        let k = ViewpointObservation::sector(n, o.direction[1].atan2(o.direction[0]));
        own_hit[k] = true;
        for (slot, e) in views.row_mut(k)[2..2 + d].iter_mut().zip(emb.row(o.category)) {
            *slot += e;
        }
    }
    let here = env.position(node);
    for &(nbr, _) in env.neighbors(node) {
        let objs = env.objects_at(nbr);
        if objs.is_empty() {
            continue;
        }
        let k = ViewpointObservation::sector(n, heading(here, env.position(nbr)));
        nbr_hit[k] = true;
        let w = 1.0 / objs.len() as f64;
        for &oi in objs {
            let cat = env.objects()[oi].category;
            for (slot, e) in views.row_mut(k)[2 + d..2 + 2 * d].iter_mut().zip(emb.row(cat)) {
                *slot += w * e;
            }
        }
    }
    if spec.view_noise > 0.0 {
        let normal = Normal::new(0.0, spec.view_noise).expect("finite noise");
        for k in 0..n {
            let mut rng = rng::stream(env.file().seed, &[label::NOISE, spec.seed, node as u64, k as u64]);
            let row = views.row_mut(k);
            if own_hit[k] {
                row[2..2 + d].iter_mut().for_each(|v| *v += normal.sample(&mut rng));
            }
            if nbr_hit[k] {
                row[2 + d..].iter_mut().for_each(|v| *v += normal.sample(&mut rng));
            }
        }
    }

    let objects = env.objects_at(node).to_vec();
    let categories = objects.iter().map(|&i| env.objects()[i].category).collect();
    let rows: Vec<Vec<f64>> = objects.iter().map(|&i| env.object_feature(i)).collect();
    let object_features = if rows.is_empty() {
        Tensor2::zeros(0, spec.object_dim())
    } else {
        Tensor2::from_rows(&rows)
    };
    ViewpointObservation {
        node,
        views,
        objects,
        categories,
        object_features,
    }
}
