use rand::Rng;

use super::attention::edge_scores;
use super::*;
use crate::autodiff::{node_loss, ActivationKind, Tape, Targets, Tensor};
use crate::graph::{generate_sbm, Graph, LabeledDataset, Labels, MaskKind, SbmParams, SplitMask, TaskKind};
use crate::rng::seeded;
use crate::space::{decode, AggregationKind, ArchDescription, AttentionKind, LayerSpec, MergeKind, SkipSpec};

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Six nodes, a mix of degrees, one node with only its self-loop.
fn small_graph(dim: usize, seed: u64) -> Graph<f64> {
    let feats = random(&[6, dim], &mut seeded(seed));
    Graph::undirected(6, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)], feats).unwrap()
}

fn key(attention: AttentionKind, aggregation: AggregationKind, hidden: usize) -> ShareKey {
    ShareKey { layer_index: 1, attention, aggregation, in_dim: 3, heads: 1, hidden, residual: None }
}

#[test]
fn score_examples() {
    let head = HeadParams { attention: vec![], mlp: vec![] };
    let z = [0.3, -2.0];
    assert_eq!(attention_score(AttentionKind::Const, &z, &z, 3, 7, &head).unwrap(), 1.0);
    assert_eq!(attention_score(AttentionKind::Gcn, &z, &z, 4, 1, &head).unwrap(), 0.5);
    assert!(attention_score(AttentionKind::Gat, &z, &z, 1, 1, &head).is_err());
}

#[test]
fn sym_gat_is_sum_of_both_directions() {
    let mut rng = seeded(3);
    let head = LayerParams::<f64>::init(key(AttentionKind::Gat, AggregationKind::Sum, 4), &mut rng).heads.remove(0);
    for _ in 0..20 {
        let zi: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let zj: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gat = |a: &[f64], b: &[f64]| attention_score(AttentionKind::Gat, a, b, 1, 1, &head).unwrap();
        let sym = attention_score(AttentionKind::SymGat, &zi, &zj, 1, 1, &head).unwrap();
        assert!((sym - gat(&zi, &zj) - gat(&zj, &zi)).abs() < 1e-12);
    }
}

#[test]
fn tape_scores_match_scalar_definition() {
    let g = small_graph(4, 1);
    let mut rng = seeded(9);
    for kind in AttentionKind::ALL {
        let params = LayerParams::<f64>::init(key(kind, AggregationKind::Sum, 4), &mut rng);
        let z = random(&[6, 4], &mut rng);
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone());
        let att: Vec<_> = params.heads[0].attention.iter().map(|t| tape.param(t.clone())).collect();
        let e = edge_scores(&mut tape, kind, zv, &att, &g).unwrap();
        for (k, &(j, i)) in g.edges().iter().enumerate() {
            let want =
                attention_score(kind, z.row(i), z.row(j), g.degrees()[i], g.degrees()[j], &params.heads[0]).unwrap();
            assert!((tape.value(e).data()[k] - want).abs() < 1e-12, "{kind:?} edge {k}");
        }
    }
}

/// Gradient of a random linear functional of the edge scores, checked
/// against central differences of the scalar definition.
#[test]
fn attention_gradients_match_finite_differences() {
    let g = small_graph(4, 2);
    let mut rng = seeded(5);
    for kind in AttentionKind::ALL.into_iter().filter(|k| k.is_parameterized()) {
        let params = LayerParams::<f64>::init(key(kind, AggregationKind::Sum, 4), &mut rng);
        let head = params.heads[0].clone();
        let z = random(&[6, 4], &mut rng);
        let c = random(&[g.edge_count(), 1], &mut rng);
        let objective = |z: &Tensor<f64>, head: &HeadParams<f64>| -> f64 {
            g.edges()
                .iter()
                .enumerate()
                .map(|(k, &(j, i))| {
                    c.data()[k]
                        * attention_score(kind, z.row(i), z.row(j), g.degrees()[i], g.degrees()[j], head).unwrap()
                })
                .sum()
        };
        let mut tape = Tape::new();
        let zv = tape.param(z.clone());
        let att: Vec<_> = head.attention.iter().map(|t| tape.param(t.clone())).collect();
        let e = edge_scores(&mut tape, kind, zv, &att, &g).unwrap();
        let cv = tape.constant(c.clone());
        let p = tape.mul(e, cv).unwrap();
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();

        let h = 1e-5;
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        analytic.extend_from_slice(grads.get_or_zeros(zv, z.shape()).data());
        for i in 0..z.numel() {
            let mut zp = z.clone();
            zp.data_mut()[i] += h;
            let mut zm = z.clone();
            zm.data_mut()[i] -= h;
            numeric.push((objective(&zp, &head) - objective(&zm, &head)) / (2.0 * h));
        }
        for (t, &v) in att.iter().enumerate() {
            analytic.extend_from_slice(grads.get_or_zeros(v, head.attention[t].shape()).data());
            for i in 0..head.attention[t].numel() {
                let mut hp = head.clone();
                hp.attention[t].data_mut()[i] += h;
                let mut hm = head.clone();
                hm.attention[t].data_mut()[i] -= h;
                numeric.push((objective(&z, &hp) - objective(&z, &hm)) / (2.0 * h));
            }
        }
        let err = rel_error(&analytic, &numeric);
        assert!(err < 1e-4, "{kind:?}: relative error {err}");
    }
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn loss_of(model: &ChildModel<f64>, g: &Graph<f64>, classes: &[usize]) -> f64 {
    let mut tape = Tape::new();
    let w = model.register(&mut tape);
    let logits = model.forward_on(&mut tape, &w, g, false, 0.0, &mut seeded(0)).unwrap();
    let rows: Vec<usize> = (0..g.node_count()).collect();
    let loss = node_loss(&mut tape, logits, Targets::Classes(classes), &rows, &[], 0.0).unwrap();
    tape.value(loss).item()
}

fn model_fd_error(model: &ChildModel<f64>, g: &Graph<f64>, classes: &[usize]) -> f64 {
    let mut tape = Tape::new();
    let w = model.register(&mut tape);
    let logits = model.forward_on(&mut tape, &w, g, false, 0.0, &mut seeded(0)).unwrap();
    let rows: Vec<usize> = (0..g.node_count()).collect();
    let loss = node_loss(&mut tape, logits, Targets::Classes(classes), &rows, &[], 0.0).unwrap();
    let grads = tape.backward(loss).unwrap();
    let mut analytic = Vec::new();
    for (v, t) in w.iter().zip(model.tensors()) {
        analytic.extend_from_slice(grads.get_or_zeros(*v, t.shape()).data());
    }
    let h = 1e-5;
    let mut numeric = Vec::new();
    let total = model.tensors().len();
    for t in 0..total {
        for i in 0..model.tensors()[t].numel() {
            let mut plus = model.clone();
            plus.tensors_mut()[t].data_mut()[i] += h;
            let mut minus = model.clone();
            minus.tensors_mut()[t].data_mut()[i] -= h;
            numeric.push((loss_of(&plus, g, classes) - loss_of(&minus, g, classes)) / (2.0 * h));
        }
    }
    rel_error(&analytic, &numeric)
}

#[test]
fn every_attention_aggregation_pair_passes_gradient_check() {
    let g = small_graph(3, 4);
    let classes = [0, 1, 2, 0, 1, 2];
    let mut k = 0;
    for attention in AttentionKind::ALL {
        for aggregation in AggregationKind::ALL {
            let activation = ActivationKind::ALL[k % ActivationKind::ALL.len()];
            k += 1;
            let mut first = LayerSpec::new(attention, aggregation, activation, 2, 4);
            let mut second = LayerSpec::new(attention, aggregation, ActivationKind::Linear, 2, 4);
            if k % 2 == 0 {
                first.skip = Some(SkipSpec { from: 0, merge: MergeKind::Concat });
                second.skip = Some(SkipSpec { from: 0, merge: MergeKind::Add });
            }
            let arch = ArchDescription::new(vec![first, second]);
            let model = ChildModel::<f64>::build(&arch, 3, 3, &mut seeded(k as u64)).unwrap();
            let err = model_fd_error(&model, &g, &classes);
            assert!(err < 1e-3, "{attention:?} x {aggregation:?}: relative error {err}");
        }
    }
}

#[test]
fn output_width_is_class_count() {
    let arch = decode("first-order,gat,sum,elu,8,64;first-order,cos,mlp,linear,4,256").unwrap();
    let model = ChildModel::<f64>::build(&arch, 16, 3, &mut seeded(1)).unwrap();
    assert_eq!(model.plans()[0].out_dim, 512);
    assert_eq!(model.plans()[1].key.in_dim, 512);
    assert_eq!(model.plans()[1].out_dim, 3);
    let g = Graph::undirected(5, [(0, 1), (3, 4)], Tensor::zeros(&[5, 16])).unwrap();
    assert_eq!(model.forward(&g, false, 0.0, &mut seeded(0)).unwrap().shape(), &[5, 3]);
}

#[test]
fn parameter_inventory() {
    let arch = decode("first-order,const,sum,relu,2,8;first-order,gcn,mean-pooling,linear,1,4").unwrap();
    let model = ChildModel::<f64>::build(&arch, 16, 3, &mut seeded(1)).unwrap();
    assert_eq!(model.tensors().len(), 2);
    assert_eq!(model.param_count(), 16 * 16 + 16 * 3);

    // gat: W_T 16x8, per head a_l, a_r of 4. Residual 16 -> 8 on layer 1,
    // concat on the last layer is applied as add: 8 -> 3 projection.
    let arch = decode("first-order,gat,mlp,relu,2,4,0,add;first-order,gene-linear,sum,linear,1,4,1,concat").unwrap();
    let model = ChildModel::<f64>::build(&arch, 16, 3, &mut seeded(1)).unwrap();
    let layer1 = 16 * 8 + 2 * (4 + 4 + 16 + 16) + 16 * 8;
    let layer2 = 8 * 3 + (9 + 9 + 3) + 8 * 3;
    assert_eq!(model.param_count(), layer1 + layer2);
    assert_eq!(model.plans()[1].skip, Some((1, MergeKind::Add)));
}

#[test]
fn self_loop_only_graph_is_a_per_node_map() {
    let x = random(&[4, 3], &mut seeded(2));
    let g = Graph::new(4, [], x.clone()).unwrap();
    let arch = decode("first-order,const,sum,tanh,1,4").unwrap();
    let model = ChildModel::<f64>::build(&arch, 3, 2, &mut seeded(3)).unwrap();
    let want = x.matmul(&model.layers()[0].transform).unwrap().map(f64::tanh);
    let got = model.forward(&g, false, 0.0, &mut seeded(0)).unwrap();
    assert!(got.data().iter().zip(want.data()).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn coefficients_sum_to_one_for_every_kind() {
    let g = small_graph(4, 8);
    let mut rng = seeded(4);
    for kind in AttentionKind::ALL {
        let params = LayerParams::<f64>::init(key(kind, AggregationKind::Sum, 4), &mut rng);
        let mut tape = Tape::new();
        let z = tape.constant(random(&[6, 4], &mut rng));
        let att: Vec<_> = params.heads[0].attention.iter().map(|t| tape.param(t.clone())).collect();
        let e = edge_scores(&mut tape, kind, z, &att, &g).unwrap();
        let alpha = tape.segment_softmax(e, g.segments()).unwrap();
        let mut sums = [0.0; 6];
        for (k, &(_, i)) in g.edges().iter().enumerate() {
            sums[i] += tape.value(alpha).data()[k];
        }
        assert!(sums.iter().all(|s| (s - 1.0).abs() < 1e-9), "{kind:?}: {sums:?}");
        // Node 5 has only its self-loop.
        let k5 = g.edges().iter().position(|&e| e == (5, 5)).unwrap();
        assert_eq!(tape.value(alpha).data()[k5], 1.0);
    }
}

#[test]
fn logits_are_permutation_equivariant() {
    let g = small_graph(3, 6);
    let perm = [3, 0, 5, 1, 4, 2];
    let pg = g.permuted(&perm).unwrap();
    for attention in AttentionKind::ALL {
        for aggregation in AggregationKind::ALL {
            let arch = ArchDescription::new(vec![
                LayerSpec::new(attention, aggregation, ActivationKind::Elu, 2, 4),
                LayerSpec::new(attention, aggregation, ActivationKind::Linear, 2, 4),
            ]);
            let model = ChildModel::<f64>::build(&arch, 3, 2, &mut seeded(7)).unwrap();
            let a = model.forward(&g, false, 0.0, &mut seeded(0)).unwrap();
            let b = model.forward(&pg, false, 0.0, &mut seeded(0)).unwrap();
            for v in 0..6 {
                for (x, y) in a.row(v).iter().zip(b.row(perm[v])) {
                    assert!((x - y).abs() < 1e-10, "{attention:?} x {aggregation:?}");
                }
            }
        }
    }
}

#[test]
fn same_seed_same_model() {
    let arch = decode("first-order,gene-linear,max-pooling,elu,4,8;first-order,cos,mlp,linear,2,4").unwrap();
    let a = ChildModel::<f64>::build(&arch, 3, 2, &mut seeded(11)).unwrap();
    let b = ChildModel::<f64>::build(&arch, 3, 2, &mut seeded(11)).unwrap();
    assert_eq!(a, b);
    let g = small_graph(3, 1);
    assert_eq!(a.forward(&g, false, 0.0, &mut seeded(0)).unwrap(), b.forward(&g, false, 0.0, &mut seeded(0)).unwrap());
}

#[test]
fn build_with_rejects_mismatched_parameters() {
    let arch = decode("first-order,gat,sum,relu,1,8").unwrap();
    let err = ChildModel::<f64>::build_with(&arch, 4, 2, |k| {
        Ok(LayerParams::init(ShareKey { attention: AttentionKind::Cos, ..k }, &mut seeded(0)))
    });
    assert!(err.is_err());
}

fn brute_micro_f1(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        for (&a, &b) in p.iter().zip(t) {
            if a && b {
                tp += 1.0;
            } else if a {
                fp += 1.0;
            } else if b {
                fneg += 1.0;
            }
        }
    }
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fneg);
    2.0 * precision * recall / (precision + recall)
}

#[test]
fn micro_f1_matches_confusion_counts() {
    let mut rng = seeded(21);
    for _ in 0..10 {
        let logits = random(&[20, 5], &mut rng);
        let truth: Vec<Vec<bool>> = (0..20).map(|_| (0..5).map(|_| rng.gen_bool(0.4)).collect()).collect();
        let labels = Tensor::new(vec![20, 5], truth.iter().flatten().map(|&b| if b { 1.0 } else { 0.0 }).collect()).unwrap();
        let pred: Vec<Vec<bool>> = (0..20).map(|r| logits.row(r).iter().map(|&x| x > 0.0).collect()).collect();
        let mut counts = MetricCounts::default();
        let rows: Vec<usize> = (0..20).collect();
        count_predictions(&logits, &Labels::Binary(labels), &rows, &mut counts);
        assert!((counts.micro_f1() - brute_micro_f1(&pred, &truth)).abs() < 1e-12);
    }
}

#[test]
fn metric_limits() {
    let logits = Tensor::<f64>::from_f64(&[3, 2], &[1.0, 0.0, 0.0, 1.0, 2.0, -1.0]).unwrap();
    let mut c = MetricCounts::default();
    count_predictions(&logits, &Labels::Classes(vec![0, 1, 0]), &[0, 1, 2], &mut c);
    assert_eq!(c.accuracy(), 1.0);

    let negative = Tensor::full(&[3, 2], -1.0);
    let truth = Tensor::from_f64(&[3, 2], &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
    let mut c = MetricCounts::default();
    count_predictions(&negative, &Labels::Binary(truth), &[0, 1, 2], &mut c);
    assert_eq!(c.micro_f1(), 0.0);
}

fn easy_sbm(seed: u64) -> LabeledDataset<f64> {
    generate_sbm(&SbmParams { p_in: 0.3, p_out: 0.01, signal_strength: 2.0, seed, ..SbmParams::default() }).unwrap()
}

#[test]
fn gcn_learns_easy_sbm() {
    let data = easy_sbm(3);
    let arch = decode("first-order,gcn,sum,relu,1,16;first-order,gcn,sum,linear,1,16").unwrap();
    let mut model = ChildModel::build(&arch, data.feature_dim(), 2, &mut seeded(1)).unwrap();
    let hp = TrainHyperparams { max_epochs: 200, patience: 20, seed: 1, ..TrainHyperparams::default() };
    let r = train_child(&mut model, &data, &hp).unwrap();
    assert!(r.best_val_metric > 0.9, "{r:?}");
    assert!(r.epochs_ran <= 200);
    assert_eq!(evaluate(&model, &data, MaskKind::Val).unwrap(), r.best_val_metric);
}

#[test]
fn training_is_deterministic_and_stops_on_time() {
    let data = easy_sbm(4);
    let arch = decode("first-order,gat,mean-pooling,elu,2,8;first-order,linear,sum,linear,1,8").unwrap();
    let run = |patience| {
        let mut model = ChildModel::build(&arch, data.feature_dim(), 2, &mut seeded(2)).unwrap();
        let hp = TrainHyperparams { max_epochs: 60, patience, seed: 9, ..TrainHyperparams::default() };
        let r = train_child(&mut model, &data, &hp).unwrap();
        (model, r)
    };
    let (m1, r1) = run(5);
    let (m2, r2) = run(5);
    assert_eq!(m1, m2);
    assert_eq!((r1.best_val_metric, r1.best_val_loss, r1.test_metric), (r2.best_val_metric, r2.best_val_loss, r2.test_metric));
    assert_eq!((r1.epochs_ran, r1.best_epoch, r1.optimizer_steps), (r2.epochs_ran, r2.best_epoch, r2.optimizer_steps));
    assert!(r1.epochs_ran == 60 || r1.epochs_ran == r1.best_epoch + 6);

    let (_, r0) = run(0);
    assert!(r0.epochs_ran == 60 || r0.epochs_ran == r0.best_epoch + 1);
}

#[test]
fn zero_epochs_scores_initial_weights() {
    let data = easy_sbm(5);
    let arch = decode("first-order,gcn,sum,relu,1,8;first-order,gcn,sum,linear,1,8").unwrap();
    let mut model = ChildModel::build(&arch, data.feature_dim(), 2, &mut seeded(2)).unwrap();
    let before = model.clone();
    let hp = TrainHyperparams { max_epochs: 0, patience: 0, ..TrainHyperparams::default() };
    let r = train_child(&mut model, &data, &hp).unwrap();
    assert_eq!(model, before);
    assert_eq!((r.epochs_ran, r.optimizer_steps, r.best_epoch), (0, 0, 0));
    assert_eq!(r.best_val_metric, evaluate(&model, &data, MaskKind::Val).unwrap());
}

#[test]
fn divergence_reports_the_epoch() {
    let data = easy_sbm(6);
    let arch = decode("first-order,gcn,sum,relu,1,8;first-order,gcn,sum,linear,1,8").unwrap();
    let mut model = ChildModel::build(&arch, data.feature_dim(), 2, &mut seeded(2)).unwrap();
    model.layers_mut()[0].transform.data_mut()[0] = f64::NAN;
    let hp = TrainHyperparams { max_epochs: 5, patience: 5, ..TrainHyperparams::default() };
    assert!(matches!(train_child(&mut model, &data, &hp), Err(crate::Error::Training { epoch: 1, .. })));
}

#[test]
fn empty_mask_is_rejected() {
    let data = easy_sbm(7);
    let m = &data.masks()[0];
    let data = data.with_masks(vec![SplitMask::new(m.train.clone(), m.val.clone(), vec![])]).unwrap();
    let arch = decode("first-order,gcn,sum,relu,1,8").unwrap();
    let model = ChildModel::build(&arch, data.feature_dim(), 2, &mut seeded(2)).unwrap();
    assert!(evaluate(&model, &data, MaskKind::Test).is_err());
    assert_eq!(data.task(), TaskKind::SingleLabel);
}
