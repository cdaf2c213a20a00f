import numpy as np
import pytest

from conftest import random_graph
from gnnreadout.errors import DimensionError, FormatError
from gnnreadout.gradcheck import check_gradients
from gnnreadout.graphs import Graph, batch, permute
from gnnreadout.layers import (
    GATLayer,
    GCNLayer,
    GINLayer,
    GnnEncoder,
    load_checkpoint,
    save_checkpoint,
)
from gnnreadout.tensor import Tensor, make_rng


def adjacency(g: Graph) -> np.ndarray:
    a = np.zeros((g.num_nodes, g.num_nodes))
    for u, v in g.edges:
        a[u, v] = 1.0
    return a


def dense_gcn(g: Graph, h: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Oracle: D^-1/2 (A + I) D^-1/2 H W + b with dense matrices."""
    a_hat = adjacency(g).T + np.eye(g.num_nodes)  # row u aggregates senders v
    deg = a_hat.sum(axis=1)
    d = np.diag(1.0 / np.sqrt(deg))
    return d @ a_hat @ d @ h @ w + b


def dense_gat(g: Graph, h: np.ndarray, w: np.ndarray, a_src: np.ndarray,
              a_dst: np.ndarray, b: np.ndarray, slope: float = 0.2) -> np.ndarray:
    """Oracle: per-node softmax attention over in-neighbors incl. self."""
    hw = h @ w
    out = np.zeros_like(hw)
    for u in range(g.num_nodes):
        senders = [v for v, t in g.edges if t == u] + [u]
        scores = np.array([
            float(hw[v] @ a_src + hw[u] @ a_dst) for v in senders])
        scores = np.where(scores > 0, scores, slope * scores)
        e = np.exp(scores - scores.max())
        alpha = e / e.sum()
        out[u] = sum(a * hw[v] for a, v in zip(alpha, senders)) + b
    return out


def dense_gin(g: Graph, h: np.ndarray, mlp, eps: float = 0.0) -> np.ndarray:
    agg = (1.0 + eps) * h + adjacency(g).T @ h
    return mlp(agg)


class TestGCN:
    def test_isolated_node_identity(self):
        rng = make_rng(0)
        layer = GCNLayer(2, 2, rng)
        layer.linear.weight.data = np.eye(2)
        layer.bias.data = np.zeros(2)
        g = Graph(1, np.array([[3.0, 4.0]]), np.zeros((0, 2), dtype=np.int64), 0)
        out = layer(batch([g]), batch([g]).node_features)
        np.testing.assert_allclose(out.data, [[3.0, 4.0]])

    def test_two_node_edge(self):
        rng = make_rng(0)
        layer = GCNLayer(1, 1, rng)
        layer.linear.weight.data = np.array([[1.0]])
        layer.bias.data = np.zeros(1)
        g = Graph(2, np.array([[1.0], [0.0]]), np.array([[0, 1], [1, 0]]), 0)
        b = batch([g])
        out = layer(b, b.node_features)
        np.testing.assert_allclose(out.data, [[0.5], [0.5]])

    def test_dense_oracle(self, rng):
        for _ in range(50):
            g = random_graph(rng, max_nodes=6, feat_dim=3)
            layer = GCNLayer(3, 4, rng)
            b = batch([g])
            out = layer(b, b.node_features).data
            oracle = dense_gcn(g, g.node_features, layer.linear.weight.data,
                               layer.bias.data)
            np.testing.assert_allclose(out, oracle, rtol=1e-10, atol=1e-12)


class TestGAT:
    def test_isolated_node_self_attention(self, rng):
        layer = GATLayer(3, 2, rng)
        g = Graph(1, rng.standard_normal((1, 3)), np.zeros((0, 2), dtype=np.int64), 0)
        b = batch([g])
        out = layer(b, b.node_features).data
        expected = g.node_features @ layer.linear.weight.data + layer.bias.data
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_equal_features_uniform_attention(self, rng):
        layer = GATLayer(2, 2, rng)
        g = Graph(3, np.ones((3, 2)),
                  np.array([[0, 1], [1, 0], [1, 2], [2, 1], [0, 2], [2, 0]]), 0)
        b = batch([g])
        out = layer(b, b.node_features).data
        # all nodes identical: output rows must coincide (uniform alpha)
        np.testing.assert_allclose(out[0], out[1], rtol=1e-12)
        np.testing.assert_allclose(out[1], out[2], rtol=1e-12)

    def test_dense_oracle(self, rng):
        for _ in range(50):
            g = random_graph(rng, max_nodes=5, feat_dim=3)
            layer = GATLayer(3, 4, rng)
            b = batch([g])
            out = layer(b, b.node_features).data
            oracle = dense_gat(g, g.node_features, layer.linear.weight.data,
                               layer.att_src.data[:, 0], layer.att_dst.data[:, 0],
                               layer.bias.data)
            np.testing.assert_allclose(out, oracle, rtol=1e-10, atol=1e-12)


class TestGIN:
    def test_isolated_node(self, rng):
        layer = GINLayer(3, 3, rng)
        g = Graph(1, rng.standard_normal((1, 3)), np.zeros((0, 2), dtype=np.int64), 0)
        b = batch([g])
        out = layer(b, b.node_features).data
        h = np.maximum(g.node_features @ layer.lin1.weight.data + layer.lin1.bias.data, 0)
        expected = h @ layer.lin2.weight.data + layer.lin2.bias.data
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_sum_aggregation_with_identity_mlp(self, rng):
        layer = GINLayer(2, 2, rng)
        for lin in (layer.lin1, layer.lin2):
            lin.weight.data = np.eye(2)
            lin.bias.data = np.zeros(2)
        g = Graph(2, np.array([[1.0, 0.0], [0.0, 2.0]]), np.array([[0, 1], [1, 0]]), 0)
        b = batch([g])
        out = layer(b, b.node_features).data
        np.testing.assert_allclose(out, [[1.0, 2.0], [1.0, 2.0]])

    def test_dense_oracle(self, rng):
        for _ in range(50):
            g = random_graph(rng, max_nodes=6, feat_dim=3)
            layer = GINLayer(3, 4, rng)
            b = batch([g])
            out = layer(b, b.node_features).data

            def mlp(x):
                h = np.maximum(x @ layer.lin1.weight.data + layer.lin1.bias.data, 0)
                return h @ layer.lin2.weight.data + layer.lin2.bias.data

            np.testing.assert_allclose(out, dense_gin(g, g.node_features, mlp),
                                       rtol=1e-10, atol=1e-12)


class TestEncoder:
    def test_output_shape(self, rng):
        enc = GnnEncoder("gcn", 3, 8, 3, rng)
        graphs = [random_graph(rng, feat_dim=3) for _ in range(4)]
        b = batch(graphs)
        out = enc(b)
        assert out.shape == (b.num_nodes, 8)

    def test_unknown_conv(self, rng):
        with pytest.raises(DimensionError):
            GnnEncoder("sage", 3, 8, 2, rng)

    @pytest.mark.parametrize("conv", ["gcn", "gat", "gin"])
    def test_permutation_equivariance(self, conv, rng):
        enc = GnnEncoder(conv, 3, 6, 2, rng)
        for _ in range(10):
            g = random_graph(rng, max_nodes=12, feat_dim=3)
            perm = rng.permutation(g.num_nodes)
            out = enc(batch([g])).data
            out_p = enc(batch([permute(g, perm)])).data
            np.testing.assert_allclose(out_p[perm], out, rtol=1e-8, atol=1e-10)

    @pytest.mark.parametrize("conv", ["gcn", "gat", "gin"])
    def test_batching_transparency(self, conv, rng):
        enc = GnnEncoder(conv, 3, 6, 2, rng)
        graphs = [random_graph(rng, max_nodes=8, feat_dim=3) for _ in range(5)]
        together = enc(batch(graphs)).data
        separate = np.concatenate([enc(batch([g])).data for g in graphs])
        np.testing.assert_allclose(together, separate, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("conv", ["gcn", "gat", "gin"])
    def test_gradients_through_layers(self, conv, rng):
        import gnnreadout.tensor as T

        enc = GnnEncoder(conv, 3, 4, 2, rng)
        g = random_graph(rng, max_nodes=6, feat_dim=3)
        b = batch(g and [g])
        params = [p for _, p in enc.named_parameters()]
        check_gradients(lambda: T.sum_all(T.tanh(enc(b))), params, rtol=1e-4)


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path, rng):
        enc = GnnEncoder("gat", 3, 5, 2, rng)
        path = tmp_path / "model.ckpt"
        save_checkpoint(enc, path)
        enc2 = GnnEncoder("gat", 3, 5, 2, make_rng(999))
        load_checkpoint(enc2, path)
        for (n1, p1), (n2, p2) in zip(enc.named_parameters(), enc2.named_parameters()):
            assert n1 == n2
            np.testing.assert_array_equal(p1.data, p2.data)

    def test_rejects_foreign_file(self, tmp_path, rng):
        path = tmp_path / "bogus.ckpt"
        path.write_text("not a checkpoint\n")
        with pytest.raises(FormatError):
            load_checkpoint(GnnEncoder("gcn", 2, 2, 1, rng), path)
