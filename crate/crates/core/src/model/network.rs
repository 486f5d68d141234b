use super::params::{AttentionLayer, Network, ParamLayout};
use super::{Architecture, ModelInput, Modality, TileMatrix};
use crate::cohort::NormalizationStats;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A trained (or initialized) risk head with its flat parameter vector.
#[derive(Debug, Clone)]
pub struct RiskModel<T> {
    architecture: Architecture,
    parameters: Vec<T>,
    normalization: Option<NormalizationStats>,
    net: Network,
}

impl<T: Scalar> PartialEq for RiskModel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.architecture == other.architecture
            && self.parameters == other.parameters
            && self.normalization == other.normalization
    }
}

struct AttentionTrace<T> {
    z: Vec<T>,
    weights: Vec<T>,
    pooled: Vec<T>,
}

struct EncoderTrace<T> {
    y1: Vec<T>,
    r1: Vec<T>,
    y2: Vec<T>,
}

pub(crate) struct Trace<T> {
    attention: Option<AttentionTrace<T>>,
    encoder: Option<EncoderTrace<T>>,
    head_in: Vec<T>,
    head_pre: Vec<T>,
    head_act: Vec<T>,
    pub score: T,
}

fn relu<T: Scalar>(v: &[T]) -> Vec<T> {
    v.iter().map(|&x| x.max(T::zero())).collect()
}

fn relu_mask<T: Scalar>(pre: &[T], d: &mut [T]) {
    for (di, &p) in d.iter_mut().zip(pre) {
        if p <= T::zero() {
            *di = T::zero();
        }
    }
}

impl<T: Scalar> RiskModel<T> {
    /// Freshly initialized model (seeded fan-in uniform).
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        architecture.validate()?;
        let net = Network::new(&architecture);
        let parameters = net.initialize(seed);
        Ok(RiskModel {
            architecture,
            parameters,
            normalization: None,
            net,
        })
    }

    pub fn zeros(architecture: Architecture) -> Result<Self> {
        architecture.validate()?;
        let net = Network::new(&architecture);
        Ok(RiskModel {
            architecture,
            parameters: vec![T::zero(); net.layout.len()],
            normalization: None,
            net,
        })
    }

    pub fn from_parameters(
        architecture: Architecture,
        parameters: Vec<T>,
        normalization: Option<NormalizationStats>,
    ) -> Result<Self> {
        architecture.validate()?;
        let net = Network::new(&architecture);
        if parameters.len() != net.layout.len() {
            return Err(Error::Contract(format!(
                "{} parameters for an architecture with {}",
                parameters.len(),
                net.layout.len()
            )));
        }
        if let Some(i) = parameters.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                path: net.layout.path_of(i),
                message: "parameter is not finite".into(),
            });
        }
        if let Some(stats) = &normalization {
            stats.validate()?;
        }
        Ok(RiskModel {
            architecture,
            parameters,
            normalization,
            net,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn modality(&self) -> Modality {
        self.architecture.modality
    }

    pub fn parameters(&self) -> &[T] {
        &self.parameters
    }

    pub(crate) fn parameters_mut(&mut self) -> &mut [T] {
        &mut self.parameters
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.net.layout
    }

    /// Clinical standardization fitted on the training split, if any.
    pub fn normalization(&self) -> Option<&NormalizationStats> {
        self.normalization.as_ref()
    }

    pub fn set_normalization(&mut self, stats: Option<NormalizationStats>) {
        self.normalization = stats;
    }

    pub fn predict(&self, input: &ModelInput<T>) -> Result<T> {
        Ok(self.forward(input)?.score)
    }

    pub fn predict_all(&self, inputs: &[ModelInput<T>]) -> Result<Vec<T>> {
        inputs.iter().map(|x| self.predict(x)).collect()
    }

    fn check_input(&self, input: &ModelInput<T>) -> Result<()> {
        let m = self.modality();
        if m.uses_image() {
            let bag = input
                .bag
                .as_ref()
                .ok_or_else(|| Error::Contract(format!("{m} model needs a tile bag")))?;
            if bag.dim() != self.architecture.image_dim {
                return Err(Error::Contract(format!(
                    "bag dim {} but model expects {}",
                    bag.dim(),
                    self.architecture.image_dim
                )));
            }
        }
        if m.uses_clinical() && input.clinical.is_none() {
            return Err(Error::Contract(format!("{m} model needs clinical features")));
        }
        Ok(())
    }

    fn attention_forward(&self, layer: &AttentionLayer, bag: &TileMatrix<T>) -> AttentionTrace<T> {
        let p = &self.parameters;
        let (h, d, n) = (layer.hidden, layer.dim, bag.n_tiles());
        let v = &p[layer.v..layer.v + h * d];
        let w = &p[layer.w..layer.w + h];
        let mut z = vec![T::zero(); n * h];
        let mut logits = vec![T::zero(); n];
        for k in 0..n {
            let tile = bag.tile(k);
            let zk = &mut z[k * h..(k + 1) * h];
            for (i, zi) in zk.iter_mut().enumerate() {
                let row = &v[i * d..(i + 1) * d];
                *zi = row.iter().zip(tile).map(|(&a, &b)| a * b).sum::<T>().tanh();
            }
            logits[k] = zk.iter().zip(w).map(|(&a, &b)| a * b).sum();
        }
        let order = bag.canonical_order();
        let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let ex: Vec<T> = logits.iter().map(|&e| (e - m).exp()).collect();
        let total: T = order.iter().map(|&k| ex[k]).sum();
        let weights: Vec<T> = ex.iter().map(|&e| e / total).collect();
        let mut pooled = vec![T::zero(); d];
        for &k in order {
            for (pj, &hj) in pooled.iter_mut().zip(bag.tile(k)) {
                *pj += weights[k] * hj;
            }
        }
        AttentionTrace { z, weights, pooled }
    }

    fn attention_backward(
        &self,
        layer: &AttentionLayer,
        bag: &TileMatrix<T>,
        tr: &AttentionTrace<T>,
        dpooled: &[T],
        g: &mut [T],
    ) {
        let p = &self.parameters;
        let (h, d) = (layer.hidden, layer.dim);
        let w = &p[layer.w..layer.w + h];
        let order = bag.canonical_order();
        let da: Vec<T> = (0..bag.n_tiles())
            .map(|k| bag.tile(k).iter().zip(dpooled).map(|(&a, &b)| a * b).sum())
            .collect();
        let mean: T = order.iter().map(|&k| tr.weights[k] * da[k]).sum();
        let mut du = vec![T::zero(); h];
        for &k in order {
            let de = tr.weights[k] * (da[k] - mean);
            if de == T::zero() {
                continue;
            }
            let zk = &tr.z[k * h..(k + 1) * h];
            for i in 0..h {
                g[layer.w + i] += de * zk[i];
                du[i] = de * w[i] * (T::one() - zk[i] * zk[i]);
            }
            let tile = bag.tile(k);
            for (i, &dui) in du.iter().enumerate() {
                let row = &mut g[layer.v + i * d..layer.v + (i + 1) * d];
                for (gv, &hj) in row.iter_mut().zip(tile) {
                    *gv += dui * hj;
                }
            }
        }
    }

    pub(crate) fn forward(&self, input: &ModelInput<T>) -> Result<Trace<T>> {
        self.check_input(input)?;
        let p = &self.parameters;
        let attention = match (&self.net.attention, &input.bag) {
            (Some(layer), Some(bag)) => Some(self.attention_forward(layer, bag)),
            _ => None,
        };
        let encoder = match (&self.net.encoder, &input.clinical) {
            (Some([l1, l2]), Some(x)) => {
                let mut y1 = vec![T::zero(); l1.n_out];
                l1.forward(p, x, &mut y1);
                let r1 = relu(&y1);
                let mut y2 = vec![T::zero(); l2.n_out];
                l2.forward(p, &r1, &mut y2);
                Some(EncoderTrace { y1, r1, y2 })
            }
            _ => None,
        };
        let mut head_in = Vec::with_capacity(self.architecture.head_input());
        if let Some(a) = &attention {
            head_in.extend_from_slice(&a.pooled);
        }
        if let Some(e) = &encoder {
            head_in.extend(relu(&e.y2));
        }
        let [h1, h2] = &self.net.head;
        let mut head_pre = vec![T::zero(); h1.n_out];
        h1.forward(p, &head_in, &mut head_pre);
        let head_act = relu(&head_pre);
        let mut out = [T::zero()];
        h2.forward(p, &head_act, &mut out);
        Ok(Trace {
            attention,
            encoder,
            head_in,
            head_pre,
            head_act,
            score: out[0],
        })
    }

    /// Accumulates `dscore * d(score)/d(params)` into `g`.
    pub(crate) fn backward(&self, input: &ModelInput<T>, tr: &Trace<T>, dscore: T, g: &mut [T]) {
        let p = &self.parameters;
        let [h1, h2] = &self.net.head;
        let mut dact = vec![T::zero(); h2.n_in];
        h2.backward(p, &tr.head_act, &[dscore], g, Some(&mut dact));
        relu_mask(&tr.head_pre, &mut dact);
        let needs_dx = tr.attention.is_some() || tr.encoder.is_some();
        let mut dx = vec![T::zero(); h1.n_in];
        h1.backward(p, &tr.head_in, &dact, g, needs_dx.then_some(&mut dx[..]));
        let image_width = tr.attention.as_ref().map_or(0, |a| a.pooled.len());

        if let (Some(layer), Some(a), Some(bag)) = (&self.net.attention, &tr.attention, &input.bag) {
            self.attention_backward(layer, bag, a, &dx[..image_width], g);
        }
        if let (Some([l1, l2]), Some(e), Some(x)) = (&self.net.encoder, &tr.encoder, &input.clinical) {
            let mut dy2 = dx[image_width..].to_vec();
            relu_mask(&e.y2, &mut dy2);
            let mut dr1 = vec![T::zero(); l2.n_in];
            l2.backward(p, &e.r1, &dy2, g, Some(&mut dr1));
            relu_mask(&e.y1, &mut dr1);
            l1.backward(p, x, &dr1, g, None);
        }
    }
}

/// Attention pooling of one bag: `(pooled, weights)` with weights in the
/// bag's tile order. Pooling sums tiles in a value-sorted order, so any
/// permutation of the same tiles gives bit-identical output.
pub fn attention_pool<T: Scalar>(bag: &TileMatrix<T>, model: &RiskModel<T>) -> Result<(Vec<T>, Vec<T>)> {
    let layer = model
        .net
        .attention
        .as_ref()
        .ok_or_else(|| Error::Contract("clinical-only model has no attention layer".into()))?;
    if bag.dim() != layer.dim {
        return Err(Error::Contract(format!("bag dim {} but attention expects {}", bag.dim(), layer.dim)));
    }
    let tr = model.attention_forward(layer, bag);
    Ok((tr.pooled, tr.weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn small(modality: Modality, dim: usize) -> Architecture {
        let mut a = Architecture::new(modality, dim);
        a.attention_hidden = 5;
        a.head_hidden = 4;
        a.fusion_hidden = 6;
        a
    }

    fn random_bag(n: usize, d: usize, seed: u64) -> TileMatrix<f64> {
        let mut rng = crate::rng::rng_for(seed, &[]);
        TileMatrix::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn single_tile_pools_to_itself() {
        let m = RiskModel::<f64>::new(small(Modality::Image, 3), 1).unwrap();
        let bag = TileMatrix::new(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let (pooled, w) = attention_pool(&bag, &m).unwrap();
        assert_eq!(w, vec![1.0]);
        assert_eq!(pooled, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn identical_tiles_get_equal_weight() {
        let m = RiskModel::<f64>::new(small(Modality::Image, 2), 1).unwrap();
        let bag = TileMatrix::new(4, 2, [0.3, 0.7].repeat(4)).unwrap();
        let (pooled, w) = attention_pool(&bag, &m).unwrap();
        assert!(w.iter().all(|&x| x == 0.25));
        assert_eq!(pooled, vec![0.3, 0.7]);
    }

    #[test]
    fn empty_bag_rejected() {
        assert!(matches!(TileMatrix::<f64>::new(0, 3, vec![]), Err(Error::Precondition(_))));
    }

    #[test]
    fn zero_parameters_score_zero() {
        for modality in Modality::ALL {
            let m = RiskModel::<f64>::zeros(small(modality, 4)).unwrap();
            let input = ModelInput {
                bag: Some(random_bag(3, 4, 2)),
                clinical: Some([0.3, -1.0, 2.0]),
            };
            assert_eq!(m.predict(&input).unwrap(), 0.0);
        }
    }

    #[test]
    fn multimodal_responds_to_clinical_input() {
        let m = RiskModel::<f64>::new(small(Modality::Multimodal, 4), 3).unwrap();
        let bag = random_bag(6, 4, 9);
        let a = m.predict(&ModelInput::multimodal(bag.clone(), [0.0, 0.0, 0.0])).unwrap();
        let b = m.predict(&ModelInput::multimodal(bag, [1.0, -2.0, 0.5])).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn image_model_ignores_clinical() {
        let m = RiskModel::<f64>::new(small(Modality::Image, 4), 3).unwrap();
        let bag = random_bag(6, 4, 9);
        let a = m.predict(&ModelInput::image(bag.clone())).unwrap();
        let b = m.predict(&ModelInput::multimodal(bag, [1.0, -2.0, 0.5])).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn missing_inputs_are_contract_errors() {
        let image = RiskModel::<f64>::new(small(Modality::Image, 4), 3).unwrap();
        assert!(matches!(image.predict(&ModelInput::clinical([0.0; 3])), Err(Error::Contract(_))));
        let clinical = RiskModel::<f64>::new(small(Modality::Clinical, 0), 3).unwrap();
        assert!(matches!(clinical.predict(&ModelInput::image(random_bag(2, 4, 1))), Err(Error::Contract(_))));
        assert!(matches!(image.predict(&ModelInput::image(random_bag(2, 5, 1))), Err(Error::Contract(_))));
    }

    #[test]
    fn from_parameters_rejects_nan() {
        let arch = small(Modality::Clinical, 0);
        let mut p = RiskModel::<f64>::new(arch, 1).unwrap().parameters().to_vec();
        p[7] = f64::NAN;
        match RiskModel::from_parameters(arch, p, None) {
            Err(Error::Numerical { path, .. }) => assert_eq!(path, "clinical.fc1.weight[7]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn f32_and_f64_agree() {
        let arch = small(Modality::Multimodal, 4);
        let m64 = RiskModel::<f64>::new(arch, 8).unwrap();
        let m32 = RiskModel::<f32>::from_parameters(arch, m64.parameters().iter().map(|&v| v as f32).collect(), None).unwrap();
        let bag64 = random_bag(5, 4, 1);
        let bag32 = TileMatrix::new(5, 4, (0..5).flat_map(|k| bag64.tile(k).iter().map(|&v| v as f32).collect::<Vec<_>>()).collect()).unwrap();
        let s64 = m64.predict(&ModelInput::multimodal(bag64, [0.1, 0.2, -0.3])).unwrap();
        let s32 = m32.predict(&ModelInput::multimodal(bag32, [0.1, 0.2, -0.3])).unwrap();
        assert!((s64 - s32 as f64).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn pooling_is_permutation_invariant(n in 1usize..12, seed in any::<u64>()) {
            let m = RiskModel::<f64>::new(small(Modality::Image, 3), seed).unwrap();
            let bag = random_bag(n, 3, seed);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut crate::rng::rng_for(seed, &[1]));
            let shuffled = TileMatrix::new(n, 3, perm.iter().flat_map(|&k| bag.tile(k).to_vec()).collect()).unwrap();
            let (p1, w1) = attention_pool(&bag, &m).unwrap();
            let (p2, w2) = attention_pool(&shuffled, &m).unwrap();
            prop_assert_eq!(p1, p2);
            let total: f64 = w1.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (j, &k) in perm.iter().enumerate() {
                prop_assert_eq!(w2[j], w1[k]);
            }
            let s1 = m.predict(&ModelInput::image(bag)).unwrap();
            let s2 = m.predict(&ModelInput::image(shuffled)).unwrap();
            prop_assert_eq!(s1.to_bits(), s2.to_bits());
        }
    }
}
