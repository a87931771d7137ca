use super::{linear, GraphInput};
use crate::tensor::{ParamStore, Tape, Var};

/// `h' = MLP((1 + eps) h + sum_{j->i} relu(h_j + phi(e_ji)))`.
pub fn gine_layer(t: &mut Tape, s: &ParamStore, l: usize, h: Var, g: &GraphInput) -> Var {
    let e = t.constant(g.edge_attr.clone());
    let lifted = linear(t, s, &format!("l{l}.edge"), e);
    let hj = t.gather(h, g.src.clone());
    let m = t.add(hj, lifted);
    let m = t.relu(m);
    let agg = t.segment_sum(m, &g.by_dst);
    let eps = t.param(s, &format!("l{l}.eps"));
    let one_eps = t.add_const(eps, 1.0);
    let own = t.mul_scalar(h, one_eps);
    let z = t.add(own, agg);
    let z = linear(t, s, &format!("l{l}.mlp1"), z);
    let z = t.relu(z);
    let z = linear(t, s, &format!("l{l}.mlp2"), z);
    t.relu(z)
}

/// `h' = relu(W2 [h_i || max_{j->i} relu(W1 [h_j || e_ji])])`.
pub fn wcgcn_layer(t: &mut Tape, s: &ParamStore, l: usize, h: Var, g: &GraphInput) -> Var {
    let e = t.constant(g.edge_attr.clone());
    let hj = t.gather(h, g.src.clone());
    let m = t.concat(&[hj, e]);
    let m = linear(t, s, &format!("l{l}.msg"), m);
    let m = t.relu(m);
    let pooled = t.segment_max(m, &g.by_dst);
    let z = t.concat(&[h, pooled]);
    let z = linear(t, s, &format!("l{l}.upd"), z);
    t.relu(z)
}

/// Multi-head attention over in-neighbours plus a self loop. Returns the new
/// embeddings and the attention weights `[edges + n, heads]`.
pub fn gat_layer(t: &mut Tape, s: &ParamStore, l: usize, heads: usize, h: Var, g: &GraphInput) -> (Var, Var) {
    let w = t.param(s, &format!("l{l}.w"));
    let z = t.matmul(h, w);
    let e = t.constant(g.loop_attr.clone());
    let we = t.param(s, &format!("l{l}.we"));
    let phi = t.matmul(e, we);
    let zs = t.gather(z, g.loop_src.clone());
    let zd = t.gather(z, g.loop_dst.clone());
    let a_src = t.param(s, &format!("l{l}.a_src"));
    let a_dst = t.param(s, &format!("l{l}.a_dst"));
    let a_edge = t.param(s, &format!("l{l}.a_edge"));
    let ls = t.head_dot(zs, a_src, heads);
    let ld = t.head_dot(zd, a_dst, heads);
    let le = t.head_dot(phi, a_edge, heads);
    let logits = t.add(ls, ld);
    let logits = t.add(logits, le);
    let logits = t.leaky_relu(logits, 0.2);
    let alpha = t.segment_softmax(logits, &g.loop_by_dst);
    let msg = t.head_scale(zs, alpha, heads);
    let agg = t.segment_sum(msg, &g.loop_by_dst);
    let b = t.param(s, &format!("l{l}.b"));
    let out = t.add_row(agg, b);
    (t.relu(out), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{grad_check, Tensor};

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn set_linear(s: &mut ParamStore, name: &str, w: &[&[f64]], b: &[f64]) {
        s.insert(&format!("{name}.w"), mat(w));
        s.insert(&format!("{name}.b"), Tensor::vector(b.to_vec()));
    }

    fn gine_store(eps: f64) -> ParamStore {
        let mut s = ParamStore::new("gnn");
        set_linear(&mut s, "l0.edge", &[&[1.0, -1.0]], &[0.0, 0.5]);
        set_linear(&mut s, "l0.mlp1", &[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]);
        set_linear(&mut s, "l0.mlp2", &[&[2.0, 0.0], &[1.0, 1.0]], &[0.0, -1.0]);
        s.insert("l0.eps", Tensor::scalar(eps));
        s
    }

    fn run(s: &ParamStore, x: &[Vec<f64>], edges: &[(usize, usize)], attr: &[Vec<f64>], w: usize, f: fn(&mut Tape, &ParamStore, usize, Var, &GraphInput) -> Var) -> Tensor {
        let g = GraphInput::new(x, edges, attr, w).unwrap();
        let mut t = Tape::new();
        let h = t.constant(g.features().clone());
        let y = f(&mut t, s, 0, h, &g);
        t.value(y).clone()
    }

    #[test]
    fn gine_matches_hand_computation_on_a_line() {
        // 0 - 1 - 2, both directions, scalar edge attribute
        let x = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 1.0]];
        let edges = [(0, 1), (1, 0), (1, 2), (2, 1)];
        let attr = vec![vec![1.0], vec![1.0], vec![-1.0], vec![-1.0]];
        let out = run(&gine_store(0.5), &x, &edges, &attr, 1, gine_layer);
        // phi(e=1) = (1, -0.5); phi(e=-1) = (-1, 1.5)
        // node 0: from 1 with e=1 -> relu((0,2)+(1,-0.5)) = (1,1.5)
        //   z = 1.5*(1,0) + (1,1.5) = (2.5,1.5); mlp1 id, relu; mlp2 -> (2*2.5+1.5, 1.5-1) = (6.5,0.5)
        // node 1: from 0 e=1 -> relu((2,-0.5)) = (2,0); from 2 e=-1 -> relu((-2,2.5)) = (0,2.5)
        //   z = 1.5*(0,2) + (2,2.5) = (2,5.5) -> (4+5.5, 5.5-1) = (9.5,4.5)
        // node 2: from 1 e=-1 -> relu((-1,3.5)) = (0,3.5)
        //   z = 1.5*(-1,1) + (0,3.5) = (-1.5,5); relu -> (0,5) -> (5, 4)
        let expected = [[6.5, 0.5], [9.5, 4.5], [5.0, 4.0]];
        for (i, row) in expected.iter().enumerate() {
            for (a, b) in out.row(i).iter().zip(row) {
                assert!((a - b).abs() < 1e-12, "node {i}: {:?}", out.row(i));
            }
        }
    }

    #[test]
    fn gine_isolated_node_is_plain_mlp() {
        let x = vec![vec![0.7, 0.2]];
        let out = run(&gine_store(0.0), &x, &[], &[], 1, gine_layer);
        // mlp1 identity + relu -> (0.7,0.2); mlp2 -> (1.4+0.2, 0.2-1) -> relu
        assert!((out.get(0, 0) - 1.6).abs() < 1e-12);
        assert_eq!(out.get(0, 1), 0.0);
    }

    #[test]
    fn gine_duplicate_edge_doubles_message() {
        let mut s = gine_store(0.0);
        set_linear(&mut s, "l0.mlp2", &[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]);
        let x = vec![vec![0.0, 0.0], vec![1.0, 2.0]];
        let once = run(&s, &x, &[(1, 0)], &[vec![0.0]], 1, gine_layer);
        let twice = run(&s, &x, &[(1, 0), (1, 0)], &[vec![0.0], vec![0.0]], 1, gine_layer);
        for c in 0..2 {
            assert!((twice.get(0, c) - 2.0 * once.get(0, c)).abs() < 1e-12);
        }
    }

    fn wcgcn_store() -> ParamStore {
        let mut s = ParamStore::new("gnn");
        // message = relu(h_j) (identity on the node part, edge ignored)
        set_linear(&mut s, "l0.msg", &[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]], &[0.0, 0.0]);
        // update keeps only the pooled half
        set_linear(&mut s, "l0.upd", &[&[0.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]);
        s
    }

    #[test]
    fn wcgcn_pools_elementwise_max() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 0.0]];
        let out = run(&wcgcn_store(), &x, &[(1, 0), (2, 0)], &[vec![0.0], vec![0.0]], 1, wcgcn_layer);
        assert_eq!(out.row(0), &[3.0, 2.0]);
        assert_eq!(out.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn wcgcn_duplicate_edge_is_invisible() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 0.0]];
        let a = run(&wcgcn_store(), &x, &[(1, 0), (2, 0)], &vec![vec![0.0]; 2], 1, wcgcn_layer);
        let b = run(&wcgcn_store(), &x, &[(1, 0), (2, 0), (2, 0)], &vec![vec![0.0]; 3], 1, wcgcn_layer);
        assert_eq!(a, b);
    }

    #[test]
    fn wcgcn_dominated_neighbour_gets_no_gradient() {
        let mut s = ParamStore::new("x");
        s.insert("h", mat(&[&[0.0, 0.0], &[1.0, 1.0], &[3.0, 2.0]]));
        let g = GraphInput::new(&s.value("h").to_rows(), &[(1, 0), (2, 0)], &vec![vec![0.0]; 2], 1).unwrap();
        let w = wcgcn_store();
        let mut t = Tape::new();
        let h = t.param(&s, "h");
        let y = wcgcn_layer(&mut t, &w, 0, h, &g);
        let l = t.sum(y);
        let grads = t.backward(l);
        let gh = grads.get("x.h").unwrap();
        assert_eq!(gh.row(1), &[0.0, 0.0]);
        assert_eq!(gh.row(2), &[1.0, 1.0]);
    }

    #[test]
    fn sum_separates_multisets_that_max_conflates() {
        // neighbourhoods {a, a, b} and {a, b} around nodes 0 and 3
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        let x = vec![vec![0.0, 0.0], a.clone(), a.clone(), b.clone(), vec![0.0, 0.0], a, b];
        let edges = [(1, 0), (2, 0), (3, 0), (5, 4), (6, 4)];
        let attr = vec![vec![0.0]; 5];
        let mut gs = gine_store(0.0);
        set_linear(&mut gs, "l0.edge", &[&[0.0, 0.0]], &[0.0, 0.0]);
        set_linear(&mut gs, "l0.mlp2", &[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]);
        let sum_out = run(&gs, &x, &edges, &attr, 1, gine_layer);
        let max_out = run(&wcgcn_store(), &x, &edges, &attr, 1, wcgcn_layer);
        assert_ne!(sum_out.row(0), sum_out.row(4));
        assert_eq!(max_out.row(0), max_out.row(4));
    }

    #[test]
    fn relu_of_linear_passes_grad_check() {
        use rand::{Rng, SeedableRng};
        for seed in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut s = ParamStore::new("p");
            let w: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            s.insert("w", Tensor::new(vec![4, 3], w).unwrap());
            let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = Tensor::new(vec![2, 4], x).unwrap();
            let err = grad_check(&mut s, |t, s| {
                let xv = t.constant(x.clone());
                let w = t.param(s, "w");
                let y = t.matmul(xv, w);
                let y = t.relu(y);
                t.sum(y)
            })
            .unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }
}
