use indexmap::IndexMap;

use super::{
    ConvType, ForwardOutput, Mode, ModelConfig, ParamVars, RunningStats, StatsUpdate, BN_EPS,
};
use crate::data::BatchedGraph;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// One forward pass: a tape, bound parameters and the mode.
///
/// Layer methods take a parameter `prefix` such as `layer0.conv` and look up
/// their tensors under it.
pub struct Forward<'a, 'r> {
    pub tape: &'a mut Tape,
    pub vars: &'a ParamVars,
    pub stats: &'a IndexMap<String, RunningStats>,
    pub mode: &'a mut Mode<'r>,
    pub config: &'a ModelConfig,
}

impl Forward<'_, '_> {
    fn p(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("parameter `{name}` not bound")))
    }

    fn one_plus(&mut self, name: &str) -> Result<Var> {
        let eps = self.p(name)?;
        Ok(self.tape.add_scalar(eps, 1.0))
    }

    pub fn linear(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let w = self.p(&format!("{prefix}.weight"))?;
        let b = self.p(&format!("{prefix}.bias"))?;
        let y = self.tape.matmul(x, w)?;
        self.tape.add_row(y, b)
    }

    pub fn batchnorm(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let gamma = self.p(&format!("{prefix}.gamma"))?;
        let beta = self.p(&format!("{prefix}.beta"))?;
        match self.mode {
            Mode::Eval => {
                let s = self.stats.get(prefix).ok_or_else(|| {
                    Error::Checkpoint(format!("no running statistics for `{prefix}`"))
                })?;
                self.tape
                    .batchnorm_eval(x, gamma, beta, &s.mean, &s.var, BN_EPS)
            }
            Mode::Train { updates, .. } | Mode::Calibrate { updates } => {
                let rows = self.tape.value(x).dims2()?.0;
                let (y, mean, var) = self.tape.batchnorm_train(x, gamma, beta, BN_EPS)?;
                updates.push(StatsUpdate {
                    layer: prefix.to_string(),
                    rows,
                    mean,
                    var,
                });
                Ok(y)
            }
        }
    }

    pub fn dropout(&mut self, x: Var) -> Result<Var> {
        match self.mode {
            Mode::Eval | Mode::Calibrate { .. } => Ok(x),
            Mode::Train { rng, .. } => self.tape.dropout(x, self.config.dropout, &mut **rng),
        }
    }

    /// `lin(H -> 2H) -> batchnorm -> relu -> dropout -> lin(2H -> H)`.
    pub fn mlp_forward(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let h = self.linear(&format!("{prefix}.lin1"), x)?;
        let h = self.batchnorm(&format!("{prefix}.bn"), h)?;
        let h = self.tape.relu(h);
        let h = self.dropout(h)?;
        self.linear(&format!("{prefix}.lin2"), h)
    }

    fn check_batch(&self, batch: &BatchedGraph) -> Result<()> {
        let cfg = self.config;
        if batch.node_fields.len() != cfg.node_cardinalities.len()
            || batch.arc_fields.len() != cfg.edge_cardinalities.len()
        {
            return Err(Error::ManifestMismatch(format!(
                "batch has {} node / {} edge fields, model expects {} / {}",
                batch.node_fields.len(),
                batch.arc_fields.len(),
                cfg.node_cardinalities.len(),
                cfg.edge_cardinalities.len()
            )));
        }
        if batch.max_k() < cfg.required_k() {
            return Err(Error::InvalidArgument(format!(
                "batch carries k-hop pairs up to {}, model needs {}",
                batch.max_k(),
                cfg.required_k()
            )));
        }
        Ok(())
    }

    fn embed(&mut self, prefix: &str, fields: &[Vec<usize>], rows: usize) -> Result<Var> {
        let tables = (0..fields.len())
            .map(|f| self.p(&format!("{prefix}.field{f}")))
            .collect::<Result<Vec<_>>>()?;
        self.tape
            .embedding_sum(&tables, fields, rows, self.config.hidden)
    }

    /// `sum_{j in N_1(i)} relu(h_j + E(e_ij))`, each undirected edge
    /// contributing to both endpoints.
    fn edge_aggregate(&mut self, prefix: &str, h: Var, batch: &BatchedGraph) -> Result<Var> {
        let e = self.embed(
            &format!("{prefix}.edge_emb"),
            &batch.arc_fields,
            batch.arc_src.len(),
        )?;
        let hj = self.tape.gather_rows(h, batch.arc_src.clone())?;
        let m = self.tape.add(hj, e)?;
        let m = self.tape.relu(m);
        self.tape
            .segment_sum(m, batch.arc_dst.clone(), batch.num_nodes)
    }

    /// `sum_{j in N_k(i)} relu(h_j)` for `k >= 2`.
    fn ring_aggregate(&mut self, h: Var, k: usize, batch: &BatchedGraph) -> Result<Var> {
        let r = self.tape.relu(h);
        let hj = self.tape.gather_rows(r, batch.khop_member[k - 1].clone())?;
        self.tape
            .segment_sum(hj, batch.khop_center[k - 1].clone(), batch.num_nodes)
    }

    /// GINE: `MLP((1 + eps) h_i + sum_{j in N_1(i)} relu(h_j + E(e_ij)))`.
    pub fn gine_conv(&mut self, prefix: &str, h: Var, batch: &BatchedGraph) -> Result<Var> {
        let a = self.edge_aggregate(prefix, h, batch)?;
        let scale = self.one_plus(&format!("{prefix}.eps"))?;
        let own = self.tape.mul_row(h, scale)?;
        let z = self.tape.add(own, a)?;
        self.mlp_forward(&format!("{prefix}.mlp"), z)
    }

    /// Symmetric-normalised propagation with self loops, then `W x + b`.
    /// Neighbour messages are `h_j + E(e_ij)`.
    pub fn gcn_conv(&mut self, prefix: &str, h: Var, batch: &BatchedGraph) -> Result<Var> {
        let deg: Vec<f64> = batch.degrees().iter().map(|&d| d as f64 + 1.0).collect();
        let e = self.embed(
            &format!("{prefix}.edge_emb"),
            &batch.arc_fields,
            batch.arc_src.len(),
        )?;
        let hj = self.tape.gather_rows(h, batch.arc_src.clone())?;
        let m = self.tape.add(hj, e)?;
        let coeffs = batch
            .arc_src
            .iter()
            .zip(&batch.arc_dst)
            .map(|(&s, &d)| 1.0 / (deg[s] * deg[d]).sqrt())
            .collect();
        let m = self.tape.scale_rows(m, coeffs)?;
        let agg = self
            .tape
            .segment_sum(m, batch.arc_dst.clone(), batch.num_nodes)?;
        let own = self
            .tape
            .scale_rows(h, deg.iter().map(|d| 1.0 / d).collect())?;
        let z = self.tape.add(own, agg)?;
        self.linear(prefix, z)
    }

    fn combine_terms(&mut self, prefix: &str, terms: Vec<(usize, Var)>) -> Result<Var> {
        let mut acc: Option<Var> = None;
        for (k, a) in terms {
            let scale = self.one_plus(&format!("{prefix}.eps{k}"))?;
            let t = self.tape.mul_row(a, scale)?;
            acc = Some(match acc {
                None => t,
                Some(s) => self.tape.add(s, t)?,
            });
        }
        let z = acc.expect("k = 0 term is always present");
        self.mlp_forward(&format!("{prefix}.mlp"), z)
    }

    /// NaiveGINE+: every distance-`k` aggregate reads the previous layer,
    /// so `L` layers see `K * L` hops.
    pub fn naive_gineplus_conv(
        &mut self,
        prefix: &str,
        history: &[Var],
        batch: &BatchedGraph,
    ) -> Result<Var> {
        let h = *history
            .last()
            .ok_or_else(|| Error::InvalidArgument("empty layer history".into()))?;
        let mut terms = vec![(0, h), (1, self.edge_aggregate(prefix, h, batch)?)];
        for k in 2..=self.config.radius {
            terms.push((k, self.ring_aggregate(h, k, batch)?));
        }
        self.combine_terms(prefix, terms)
    }

    /// GINE+: the distance-`k` aggregate reads layer `l - k`, so layer `l`
    /// still only sees `l` hops. Terms with `k > l` have no source layer
    /// and are left out.
    pub fn gineplus_conv(
        &mut self,
        prefix: &str,
        history: &[Var],
        batch: &BatchedGraph,
    ) -> Result<Var> {
        let l = history.len();
        let h = *history
            .last()
            .ok_or_else(|| Error::InvalidArgument("empty layer history".into()))?;
        let mut terms = vec![(0, h), (1, self.edge_aggregate(prefix, h, batch)?)];
        for k in 2..=self.config.radius.min(l) {
            terms.push((k, self.ring_aggregate(history[l - k], k, batch)?));
        }
        self.combine_terms(prefix, terms)
    }

    /// `H' = MLP((1 + eps) H + sum_i h_i)` per graph, then `h_i + H'` for
    /// every node of that graph.
    pub fn virtual_node_update(
        &mut self,
        prefix: &str,
        h_hat: Var,
        vn_prev: Var,
        batch: &BatchedGraph,
    ) -> Result<(Var, Var)> {
        let (rows, _) = self.tape.value(vn_prev).dims2()?;
        if rows != batch.num_graphs {
            return Err(Error::Shape {
                op: "virtual_node_update",
                detail: format!("{rows} virtual states for {} graphs", batch.num_graphs),
            });
        }
        let pooled = self
            .tape
            .segment_sum(h_hat, batch.node_graph.clone(), batch.num_graphs)?;
        let scale = self.one_plus(&format!("{prefix}.eps"))?;
        let own = self.tape.mul_row(vn_prev, scale)?;
        let z = self.tape.add(own, pooled)?;
        let vn = self.mlp_forward(&format!("{prefix}.mlp"), z)?;
        let spread = self.tape.gather_rows(vn, batch.node_graph.clone())?;
        let h = self.tape.add(h_hat, spread)?;
        Ok((h, vn))
    }

    pub fn model(&mut self, batch: &BatchedGraph) -> Result<ForwardOutput> {
        self.check_batch(batch)?;
        let cfg = self.config;
        let h0 = self.embed("node_emb", &batch.node_fields, batch.num_nodes)?;
        let mut history = vec![h0];
        let mut vn = if cfg.virtual_node {
            Some(
                self.tape
                    .constant(Tensor::zeros(vec![batch.num_graphs, cfg.hidden])),
            )
        } else {
            None
        };
        for l in 0..cfg.layers {
            let conv = format!("layer{l}.conv");
            let h_prev = *history.last().expect("starts with h0");
            let h = match cfg.conv {
                ConvType::Gcn => self.gcn_conv(&conv, h_prev, batch)?,
                ConvType::Gine => self.gine_conv(&conv, h_prev, batch)?,
                ConvType::NaiveGinePlus => self.naive_gineplus_conv(&conv, &history, batch)?,
                ConvType::GinePlus => self.gineplus_conv(&conv, &history, batch)?,
            };
            let mut h = self.batchnorm(&format!("layer{l}.norm"), h)?;
            if l + 1 < cfg.layers {
                h = self.tape.relu(h);
            }
            h = self.dropout(h)?;
            if let Some(prev) = vn {
                let (hn, vn_new) =
                    self.virtual_node_update(&format!("layer{l}.vn"), h, prev, batch)?;
                h = hn;
                vn = Some(vn_new);
            }
            history.push(h);
        }
        let last = *history.last().expect("non-empty");
        let graph_emb = self
            .tape
            .segment_mean(last, batch.node_graph.clone(), batch.num_graphs)?;
        let logits = self.linear("classifier", graph_emb)?;
        Ok(ForwardOutput {
            node_layers: history,
            graph_emb,
            logits,
        })
    }
}
