import numpy as np
import pytest

from kegnnflow.engine.gradcheck import grad_check_params
from kegnnflow.engine.tape import Tape
from kegnnflow.errors import ConfigError, DimensionError
from kegnnflow.graph.graph_store import edge_normalization, symmetrize
from kegnnflow.models.base_networks import (
    BN_EPS,
    ModelConfig,
    batch_norm,
    build_model,
    dropout,
    gat_layer_forward,
    gcn_layer_forward,
    mlp_forward,
)
from kegnnflow.train.harness import loss


def random_edges(rng, n, p=0.3):
    dense = rng.random((n, n)) < p
    np.fill_diagonal(dense, False)
    return np.argwhere(dense).astype(np.int64).reshape(-1, 2)


def gat_heads(tape, rng, d_in, d_out, count):
    return [
        {
            "weight": tape.leaf(rng.normal(size=(d_in, d_out)), True, f"h{k}.weight"),
            "att_src": tape.leaf(rng.normal(size=(d_out, 1)), True, f"h{k}.att_src"),
            "att_dst": tape.leaf(rng.normal(size=(d_out, 1)), True, f"h{k}.att_dst"),
        }
        for k in range(count)
    ]


def test_gcn_isolated_node_and_mutual_pair():
    tape = Tape()
    h = tape.constant([[1.0, 2.0]])
    w = tape.constant([[1.0, 0.0], [0.0, 3.0]])
    empty = np.zeros((0, 2), dtype=np.int64)
    out = gcn_layer_forward(h, empty, edge_normalization(empty, 1), w)
    np.testing.assert_array_equal(out.value, [[1.0, 6.0]])

    pair = np.array([[0, 1], [1, 0]])
    h2 = tape.constant([[2.0, 0.0], [0.0, 4.0]])
    out = gcn_layer_forward(h2, pair, edge_normalization(pair, 2), tape.constant(np.eye(2)))
    np.testing.assert_allclose(out.value[0], 0.5 * h2.value[0] + 0.5 * h2.value[1], atol=1e-15)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("normalize", [True, False])
def test_gcn_layer_matches_dense_oracle(seed, normalize):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 11))
    edges = random_edges(rng, n)
    h = rng.normal(size=(n, 3))
    w = rng.normal(size=(3, 2))
    a_tilde = np.eye(n)
    a_tilde[edges[:, 0], edges[:, 1]] = 1.0
    if normalize:
        d = np.diag(1.0 / np.sqrt(a_tilde.sum(axis=1)))
        expected = d @ a_tilde @ d @ h @ w
        norm = edge_normalization(edges, n)
    else:
        expected = a_tilde @ h @ w
        norm = None
    tape = Tape()
    out = gcn_layer_forward(tape.constant(h), edges, norm, tape.constant(w))
    np.testing.assert_allclose(out.value, expected, atol=1e-10)


def test_gcn_shape_mismatch():
    tape = Tape()
    with pytest.raises(DimensionError):
        gcn_layer_forward(tape.constant(np.ones((2, 3))), np.zeros((0, 2), dtype=np.int64), None, tape.constant(np.ones((2, 2))))


def test_gat_self_loop_only_node():
    rng = np.random.default_rng(0)
    tape = Tape()
    h = tape.constant(rng.normal(size=(1, 3)))
    heads = gat_heads(tape, rng, 3, 2, 1)
    out, (_, _, attentions) = gat_layer_forward(h, np.zeros((0, 2), dtype=np.int64), heads, "eval", return_attention=True)
    assert attentions[0].tolist() == [1.0]
    np.testing.assert_allclose(out.value, h.value @ heads[0]["weight"].value, atol=1e-15)


def test_gat_identical_features_give_uniform_attention():
    rng = np.random.default_rng(1)
    tape = Tape()
    edges = symmetrize(np.array([[0, 1], [0, 2], [0, 3], [1, 2]]))
    h = tape.constant(np.tile(rng.normal(size=(1, 3)), (4, 1)))
    _, (targets, _, attentions) = gat_layer_forward(h, edges, gat_heads(tape, rng, 3, 2, 1), "eval", return_attention=True)
    size = np.bincount(targets, minlength=4)
    np.testing.assert_allclose(attentions[0], 1.0 / size[targets], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_gat_attention_sums_to_one_per_node_and_head(seed):
    rng = np.random.default_rng(seed)
    tape = Tape()
    n = 4 + seed
    edges = random_edges(rng, n, 0.4)
    h = tape.constant(rng.normal(size=(n, 5)))
    out, (targets, _, attentions) = gat_layer_forward(h, edges, gat_heads(tape, rng, 5, 3, 3), "eval", return_attention=True)
    assert out.shape == (n, 9)
    for alpha in attentions:
        np.testing.assert_allclose(np.bincount(targets, weights=alpha, minlength=n), 1.0, atol=1e-9)


def test_gat_output_layer_averages_heads():
    rng = np.random.default_rng(2)
    tape = Tape()
    edges = random_edges(rng, 5)
    h = tape.constant(rng.normal(size=(5, 3)))
    heads = gat_heads(tape, rng, 3, 2, 2)
    concat = gat_layer_forward(h, edges, heads, "eval", concat=True).value
    averaged = gat_layer_forward(h, edges, heads, "eval", concat=False).value
    np.testing.assert_allclose(averaged, 0.5 * (concat[:, :2] + concat[:, 2:]), atol=1e-12)


def test_gat_requires_a_head():
    tape = Tape()
    with pytest.raises(ConfigError):
        gat_layer_forward(tape.constant(np.ones((2, 2))), np.zeros((0, 2), dtype=np.int64), [], "eval")


def test_batch_norm_train_and_eval_modes():
    rng = np.random.default_rng(3)
    tape = Tape()
    x = rng.normal(2.0, 3.0, size=(50, 4))
    gamma, beta = tape.constant(np.ones((1, 4))), tape.constant(np.zeros((1, 4)))
    running_mean, running_var = np.zeros((1, 4)), np.ones((1, 4))
    out = batch_norm(tape.constant(x), gamma, beta, running_mean, running_var, "train")
    np.testing.assert_allclose(out.value.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.value.var(axis=0), x.var(axis=0) / (x.var(axis=0) + BN_EPS), rtol=1e-12)
    np.testing.assert_allclose(running_mean, 0.1 * x.mean(axis=0, keepdims=True), rtol=1e-12)
    np.testing.assert_allclose(running_var, 0.9 + 0.1 * x.var(axis=0, keepdims=True), rtol=1e-12)

    frozen = running_mean.copy()
    batch_norm(tape.constant(x), gamma, beta, running_mean, running_var, "train", update_stats=False)
    np.testing.assert_array_equal(running_mean, frozen)

    evaluated = batch_norm(tape.constant(x), gamma, beta, running_mean, running_var, "eval").value
    np.testing.assert_allclose(evaluated, (x - running_mean) / np.sqrt(running_var + BN_EPS), rtol=1e-12)


def test_dropout_is_identity_outside_training_and_rescales_inside():
    tape = Tape()
    h = tape.constant(np.ones((200, 10)))
    assert dropout(h, 0.5, "eval", None) is h
    dropped = dropout(h, 0.5, "train", np.random.default_rng(0)).value
    assert set(np.unique(dropped)) <= {0.0, 2.0}
    assert 0.4 < (dropped == 0.0).mean() < 0.6
    with pytest.raises(ConfigError):
        dropout(h, 0.5, "train", None)


def test_model_config_aliases_and_validation():
    assert ModelConfig(kind="KeGCN").kind == "gcn"
    with pytest.raises(ConfigError):
        ModelConfig(kind="transformer")
    with pytest.raises(ConfigError):
        ModelConfig(hidden_layers=0)
    with pytest.raises(ConfigError):
        ModelConfig(dropout_rate=1.0)


def test_parameter_layout_for_multi_head_gat():
    model = build_model(ModelConfig(kind="gat", hidden_layers=2, hidden_channels=3, attention_heads=2), 5, 4, 0)
    w = model.params.weights
    assert w["layer0.head1.weight"].shape == (5, 3)
    assert w["layer1.head0.weight"].shape == (6, 3)
    assert w["layer1.bn.gamma"].shape == (1, 6)
    assert w["layer2.head1.weight"].shape == (6, 4)
    assert w["layer2.bias"].shape == (1, 4)
    assert "layer2.bn.gamma" not in w
    assert set(model.params.buffers) == {f"layer{i}.bn.running_{s}" for i in (0, 1) for s in ("mean", "var")}


def test_initialization_is_deterministic_per_seed():
    cfg = ModelConfig(kind="gcn", hidden_channels=4)
    a = build_model(cfg, 3, 2, 9).params.weights
    b = build_model(cfg, 3, 2, 9).params.weights
    c = build_model(cfg, 3, 2, 10).params.weights
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["layer0.weight"], c["layer0.weight"])


def test_mlp_ignores_edges(small_graph):
    model = build_model(ModelConfig(kind="mlp", hidden_channels=5), small_graph.num_features, small_graph.num_classes, 1)
    tape = Tape()
    leaves = model.leaves(tape)
    with_edges = model.forward(tape, leaves, small_graph.features, small_graph.edges).value
    without = mlp_forward(model, tape, leaves, small_graph.features).value
    np.testing.assert_array_equal(with_edges, without)
    assert with_edges.shape == (small_graph.num_nodes, small_graph.num_classes)


@pytest.mark.parametrize("kind", ["mlp", "gcn", "gat"])
def test_forward_is_permutation_equivariant(kind, small_graph):
    cfg = ModelConfig(kind=kind, hidden_channels=6, attention_heads=2, dropout_rate=0.0, use_batch_norm=False)
    model = build_model(cfg, small_graph.num_features, small_graph.num_classes, 4)
    perm = np.random.default_rng(8).permutation(small_graph.num_nodes)
    inverse = np.argsort(perm)
    tape = Tape()
    leaves = model.leaves(tape)
    z = model.forward(tape, leaves, small_graph.features, small_graph.edges).value
    z_perm = model.forward(tape, leaves, small_graph.features[perm], inverse[small_graph.edges]).value
    np.testing.assert_allclose(z_perm, z[perm], atol=1e-10)


@pytest.mark.parametrize("kind", ["mlp", "gcn", "gat"])
def test_full_model_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(12)
    n, d, m = 7, 4, 3
    features = rng.normal(size=(n, d))
    edges = symmetrize(random_edges(rng, n, 0.3))
    labels = rng.integers(m, size=n)
    cfg = ModelConfig(kind=kind, hidden_layers=1, hidden_channels=3, attention_heads=2, dropout_rate=0.0)
    model = build_model(cfg, d, m, 5)

    def objective(tape, leaves):
        z = model.forward(tape, leaves, features, edges, "train", update_stats=False)
        return loss(z, labels, np.ones(n, dtype=bool))

    errors = grad_check_params(objective, model.params.weights, eps=1e-6)
    assert max(errors.values()) <= 1e-3
