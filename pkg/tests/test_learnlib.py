import numpy as np
import pytest

from miquant import learnlib as ll
from miquant.errors import EmptyClassError, ShapeError, SingleClassError
from miquant.learnlib.net import Conv2D, NetModel, Softmax


# --- forward path ---

def test_zero_weight_net_outputs_uniform_probabilities():
    net = ll.build_net((1, 3, 1), [("flatten",), ("dense", 2), ("softmax",)], seed=0)
    net.layers[1].w[...] = 0.0
    probs = net.forward(np.random.default_rng(0).normal(size=(5, 1, 3, 1)))
    np.testing.assert_allclose(probs, 0.5)


def test_identity_conv_kernel_reproduces_input():
    w = np.zeros((3, 3, 1, 1))
    w[1, 1, 0, 0] = 1.0
    conv = Conv2D(w, np.zeros(1))
    x = np.random.default_rng(1).normal(size=(2, 6, 6, 1))
    out = conv.forward(x)
    np.testing.assert_allclose(out, x[:, 1:5, 1:5, :])


def naive_conv(x, w, b):
    n, h, wd, cin = x.shape
    kh, kw, _, cout = w.shape
    oh, ow = h - kh + 1, wd - kw + 1
    out = np.zeros((n, oh, ow, cout))
    for s in range(n):
        for i in range(oh):
            for j in range(ow):
                for f in range(cout):
                    acc = b[f]
                    for k in range(kh):
                        for l in range(kw):
                            for c in range(cin):
                                acc += x[s, i + k, j + l, c] * w[k, l, c, f]
                    out[s, i, j, f] = acc
    return out


def test_conv_matches_naive_nested_loop_oracle():
    rng = np.random.default_rng(2)
    w = rng.normal(size=(3, 3, 2, 4))
    b = rng.normal(size=4)
    conv = Conv2D(w.copy(), b.copy())
    x = rng.normal(size=(2, 5, 6, 2))
    np.testing.assert_allclose(conv.forward(x), naive_conv(x, w, b), atol=1e-10)


def test_softmax_rows_are_probability_vectors():
    rng = np.random.default_rng(3)
    net = ll.build_classifier(13, seed=4, widths=(4, 6), fc=8)
    probs = net.forward(rng.normal(size=(7, 13, 13, 1)))
    assert np.all(probs >= 0)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_forward_shape_error():
    net = ll.build_classifier(13, seed=4, widths=(4, 6), fc=8)
    with pytest.raises(ShapeError):
        net.forward(np.zeros((1, 12, 12, 1)))


# --- training ---

def test_zero_learning_rate_keeps_weights():
    rng = np.random.default_rng(5)
    net = ll.build_net((1, 2, 1), [("flatten",), ("dense", 2), ("softmax",)], seed=6)
    before = net.layers[1].w.copy()
    x = rng.normal(size=(8, 1, 2, 1))
    y = rng.integers(0, 2, 8)
    ll.net_train(x, y, net, ll.TrainConfig(learning_rate=0.0, epochs=3, l2=0.0, seed=7))
    np.testing.assert_array_equal(net.layers[1].w, before)


def test_sgdm_update_matches_hand_iteration():
    # two epochs of full-batch SGDM replayed by hand, bitwise identical
    rng = np.random.default_rng(8)
    x = rng.normal(size=(4, 1, 2, 1))
    y = np.array([0, 1, 1, 0])
    cfg = ll.TrainConfig(learning_rate=0.05, momentum=0.6, batch_size=4,
                         l2=0.01, epochs=2, dropout=0.0, seed=9)

    trained = ll.build_net((1, 2, 1), [("flatten",), ("dense", 2), ("softmax",)], seed=10)
    manual = ll.build_net((1, 2, 1), [("flatten",), ("dense", 2), ("softmax",)], seed=10)
    ll.net_train(x, y, trained, cfg)

    dense = manual.layers[1]
    vw = np.zeros_like(dense.w)
    vb = np.zeros_like(dense.b)
    for _ in range(cfg.epochs):
        _, dlogits = ll.net_loss(manual, x, y, train=True)
        manual.backward_from_logits(dlogits)
        vw = cfg.momentum * vw - cfg.learning_rate * (dense.dw + cfg.l2 * dense.w)
        vb = cfg.momentum * vb - cfg.learning_rate * dense.db
        dense.w += vw
        dense.b += vb
    # epoch shuffling permutes the batch rows, so gradient summation order
    # differs from the hand loop by float associativity only
    np.testing.assert_allclose(trained.layers[1].w, dense.w, rtol=0, atol=1e-12)
    np.testing.assert_allclose(trained.layers[1].b, dense.b, rtol=0, atol=1e-12)


def test_fc_net_solves_linearly_separable_toy():
    rng = np.random.default_rng(11)
    n = 60
    x = rng.normal(size=(n, 2))
    y = (x @ np.array([1.5, -2.0]) > 0).astype(int)
    x4 = x.reshape(n, 1, 2, 1)
    net = ll.build_net(
        (1, 2, 1),
        [("flatten",), ("dense", 8), ("relu",), ("dense", 2), ("softmax",)],
        seed=12,
    )
    ll.net_train(x4, y, net, ll.TrainConfig(learning_rate=0.1, momentum=0.9,
                                            batch_size=16, l2=0.0, epochs=50, seed=13))
    pred = net.forward(x4).argmax(axis=1)
    assert (pred == y).mean() == 1.0


def test_l2_decays_weights_with_zero_data_gradient():
    net = ll.build_net((1, 3, 1), [("flatten",), ("dense", 2), ("softmax",)], seed=14)
    cfg = ll.TrainConfig(learning_rate=0.1, momentum=0.0, batch_size=4, l2=0.05,
                         epochs=1, dropout=0.0, seed=15)
    w0 = net.layers[1].w.copy()
    x = np.zeros((4, 1, 3, 1))  # zero inputs kill the data gradient on w
    y = np.array([0, 1, 0, 1])
    ll.net_train(x, y, net, cfg)
    np.testing.assert_allclose(net.layers[1].w, w0 * (1 - 0.1 * 0.05))
    norms = [np.linalg.norm(w0)]
    for _ in range(3):
        ll.net_train(x, y, net, cfg)
        norms.append(np.linalg.norm(net.layers[1].w))
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_training_is_seed_deterministic():
    rng = np.random.default_rng(16)
    x = rng.normal(size=(30, 13, 13, 1))
    y = rng.integers(0, 2, 30)
    docs = []
    for _ in range(2):
        net = ll.build_classifier(13, seed=17, widths=(4, 6), fc=8, dropout=0.5)
        ll.net_train(x, y, net, ll.TrainConfig(epochs=3, batch_size=8, seed=18))
        docs.append(net.to_doc())
    a = [l.get("w", {}).get("data_b64") for l in docs[0]["layers"]]
    b = [l.get("w", {}).get("data_b64") for l in docs[1]["layers"]]
    assert a == b


def test_divergence_error():
    net = ll.build_net((1, 2, 1), [("flatten",), ("dense", 2), ("softmax",)], seed=19)
    net.layers[1].w[...] = 1e308
    x = np.full((2, 1, 2, 1), 1e30)
    with pytest.raises(ll.net.DivergenceError if hasattr(ll, "net") else Exception):
        ll.net_train(x, np.array([0, 1]), net,
                     ll.TrainConfig(learning_rate=1.0, epochs=2, seed=20))


def test_model_doc_roundtrip_bitwise():
    net = ll.build_classifier(13, seed=21, widths=(4, 6), fc=8)
    doc = net.to_doc()
    back = NetModel.from_doc(doc)
    assert back.to_doc() == doc
    x = np.random.default_rng(22).normal(size=(3, 13, 13, 1))
    np.testing.assert_array_equal(net.forward(x), back.forward(x))


# --- gradient checking ---

def test_gradcheck_fc_only_tight():
    rng = np.random.default_rng(23)
    net = ll.build_net(
        (1, 4, 1),
        [("flatten",), ("dense", 6), ("relu",), ("dense", 2), ("softmax",)],
        seed=24,
    )
    x = rng.normal(size=(3, 1, 4, 1))
    y = np.array([0, 1, 1])
    assert ll.grad_check(net, x, y, 1e-5) < 1e-6


def test_gradcheck_conv_pool_net():
    rng = np.random.default_rng(25)
    net = ll.build_classifier(13, seed=26, widths=(3, 4), fc=8, dropout=0.0)
    x = rng.normal(size=(2, 13, 13, 1))
    y = np.array([1, 0])
    assert ll.grad_check(net, x, y, 1e-5) < 1e-4


def test_gradcheck_zero_input_first_layer_grad_vanishes():
    net = ll.build_classifier(13, seed=27, widths=(3, 4), fc=8, dropout=0.0)
    x = np.zeros((2, 13, 13, 1))
    y = np.array([0, 1])
    _, dlogits = ll.net_loss(net, x, y, train=True)
    net.backward_from_logits(dlogits)
    np.testing.assert_array_equal(net.layers[0].dw, 0.0)


# --- PCA ---

def test_pca_rank_one_data():
    rng = np.random.default_rng(28)
    t = rng.normal(size=50)
    direction = np.array([1.0, 2.0, -0.5])
    x = np.array([3.0, -1.0, 0.5]) + t[:, None] * direction
    model = ll.pca_fit(x)
    assert model.k == 1
    proj = ll.pca_project(model, x)
    recon = model.mean + proj @ model.axes.T
    np.testing.assert_allclose(recon, x, atol=1e-10)


def test_pca_isotropic_needs_both_axes():
    rng = np.random.default_rng(29)
    x = rng.normal(size=(4000, 2))
    model = ll.pca_fit(x, var_frac=0.95)
    # sampling keeps eigenvalues near-equal, so one axis holds < 95%
    assert model.k == 2


def test_pca_projections_are_decorrelated():
    rng = np.random.default_rng(30)
    x = rng.normal(size=(200, 6)) @ rng.normal(size=(6, 6))
    model = ll.pca_fit(x, var_frac=1.0)
    proj = ll.pca_project(model, x)
    cov = np.cov(proj, rowvar=False)
    off = cov - np.diag(np.diag(cov))
    assert np.abs(off).max() < 1e-8
    # axes orthonormal, variances sorted, K minimal
    np.testing.assert_allclose(model.axes.T @ model.axes, np.eye(model.k), atol=1e-8)
    assert np.all(np.diff(model.variances) <= 1e-12)


def test_pca_k_is_minimal():
    rng = np.random.default_rng(31)
    base = rng.normal(size=(300, 3)) * np.array([10.0, 3.0, 0.1])
    model = ll.pca_fit(base, var_frac=0.95)
    total = np.linalg.eigvalsh(np.cov(base, rowvar=False)).sum()
    kept = model.variances.sum()
    assert kept / total >= 0.95
    if model.k > 1:
        assert model.variances[:-1].sum() / total < 0.95


def test_pca_degenerate_identical_rows():
    with pytest.raises(Exception):
        ll.pca_fit(np.ones((10, 4)))


# --- margin classifier ---

def test_margin_separable_1d():
    x = np.array([[-2.0], [2.0]])
    y = np.array([-1.0, 1.0])
    model = ll.margin_train(x, y, lam=1e-3, epochs=200, seed=0)
    assert ll.margin_decide(model, np.array([-2.0])) < 0
    assert ll.margin_decide(model, np.array([2.0])) > 0


def test_margin_objective_trace_non_increasing():
    for seed in range(8):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 40))
        x = rng.normal(size=(n, 3))
        y = np.where(x @ rng.normal(size=3) > 0.3, 1.0, -1.0)
        if len(np.unique(y)) < 2:
            continue
        model = ll.margin_train(x, y, lam=1e-2, epochs=250, seed=1)
        trace = np.array(model.objective_trace)
        assert np.max(np.diff(trace)) <= 1e-9


def test_margin_close_to_grid_search_optimum():
    rng = np.random.default_rng(33)
    for _ in range(5):
        x = rng.normal(size=(25, 1)) * 2.0
        y = np.where(x[:, 0] + 0.3 * rng.normal(size=25) > 0.2, 1.0, -1.0)
        if len(np.unique(y)) < 2:
            continue
        lam = 0.05
        model = ll.margin_train(x, y, lam=lam, epochs=800, seed=2)
        ours = ll.hinge_objective(model.w, model.b, x, y, lam)
        grid = np.linspace(-6, 6, 481)
        best = min(
            ll.hinge_objective(np.array([w]), b, x, y, lam)
            for w in grid
            for b in grid
        )
        assert ours <= best * 1.05 + 1e-9


def test_margin_single_class_error():
    with pytest.raises(SingleClassError):
        ll.margin_train(np.ones((4, 2)), np.ones(4), lam=0.1, epochs=10, seed=3)


# --- augmentation ---

def test_identity_params_reproduce_patch_exactly():
    rng = np.random.default_rng(34)
    patch = rng.normal(size=(9, 9))
    out = ll.apply_augment(patch, ll.AugmentParams())
    np.testing.assert_array_equal(out, patch)


def test_double_horizontal_flip_is_involution():
    rng = np.random.default_rng(35)
    patch = rng.normal(size=(8, 8))
    p = ll.AugmentParams(flip_h=True)
    np.testing.assert_allclose(ll.apply_augment(ll.apply_augment(patch, p), p), patch, atol=1e-12)


def test_rotation_90_matches_index_permutation_oracle():
    patch = np.zeros((3, 3))
    patch[0, 1] = 5.0
    patch[1, 2] = 3.0
    out = ll.apply_augment(patch, ll.AugmentParams(rotation_deg=90.0))
    expected = np.zeros((3, 3))
    c = 1.0
    for y in range(3):
        for x in range(3):
            # (x', y') = R90 (x - c, y - c) + c with R90 = [[0, -1], [1, 0]]
            xp = int(round(-(y - c) + c))
            yp = int(round((x - c) + c))
            expected[yp, xp] = patch[y, x]
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_augment_seeded_and_square_only():
    rng_patch = np.random.default_rng(36).normal(size=(7, 7))
    a = ll.augment(rng_patch, seed=5)
    b = ll.augment(rng_patch, seed=5)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (7, 7)
    with pytest.raises(ValueError):
        ll.augment(np.zeros((3, 4)), seed=0)


# --- class balancing ---

def test_balance_already_balanced_unchanged():
    x = np.arange(20).reshape(20, 1)
    y = np.array([0] * 10 + [1] * 10)
    xb, yb = ll.balance_classes(x, y, seed=6)
    np.testing.assert_array_equal(xb, x)
    np.testing.assert_array_equal(yb, y)


def test_balance_subsamples_majority():
    x = np.arange(110).reshape(110, 1)
    y = np.array([0] * 100 + [1] * 10)
    xb, yb = ll.balance_classes(x, y, seed=7)
    assert (yb == 0).sum() == 10
    assert (yb == 1).sum() == 10
    # minority fully retained
    assert set(xb[yb == 1, 0]) == set(range(100, 110))


def test_balance_seed_contract():
    x = np.arange(21).reshape(21, 1)
    y = np.array([0] * 11 + [1] * 10)
    xa, ya = ll.balance_classes(x, y, seed=8)
    xb, yb = ll.balance_classes(x, y, seed=9)
    assert len(ya) == len(yb) == 20
    xa2, _ = ll.balance_classes(x, y, seed=8)
    np.testing.assert_array_equal(xa, xa2)


def test_balance_empty_class_error():
    with pytest.raises(EmptyClassError):
        ll.balance_classes(np.zeros((4, 1)), np.zeros(4), seed=10)
