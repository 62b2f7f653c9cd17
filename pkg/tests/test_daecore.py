import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from slrobust import daecore
from slrobust.daecore import DegenerateVectorError, LatentPair, LossConfig

finite = st.floats(-10, 10, allow_nan=False).filter(lambda v: abs(v) > 1e-3)


def _identity_params(D):
    eye, zero = np.eye(D), np.zeros(D)
    return {
        "enc_w1": eye.copy(), "enc_b1": zero.copy(), "enc_w2": eye.copy(), "enc_b2": zero.copy(),
        "dec_w1": eye.copy(), "dec_b1": zero.copy(), "dec_w2": eye.copy(), "dec_b2": zero.copy(),
    }  # fmt: skip


def test_encode_decode_zero_and_identity():
    rng = np.random.default_rng(0)
    p = daecore.init_dae(6, 4, rng)
    zero = {k: np.zeros_like(v) for k, v in p.items()}
    f = rng.normal(size=(3, 6))
    h = daecore.encode(zero, f)
    assert not h.signer.any() and not h.background.any()
    assert not daecore.decode(zero, h).any()
    ident = _identity_params(6)
    h = daecore.encode(ident, f, activation="identity")
    assert np.array_equal(h.join(), f) and np.array_equal(h.signer, f[:, :3])
    assert np.array_equal(daecore.decode(ident, h, activation="identity"), f)
    assert np.array_equal(daecore.encode(p, f).join(), daecore.encode(p, f).join())


def test_latent_split_rules():
    with pytest.raises(ValueError, match="odd"):
        LatentPair.split(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        daecore.init_dae(4, 3)
    with pytest.raises(ValueError):
        daecore.encode(daecore.init_dae(4), np.zeros((1, 5)))


def test_similarity_examples():
    x = np.array([[1.0, 2.0, -0.5]])
    orth = np.array([[2.0, -1.0, 0.0]])
    assert daecore.sim_pos(x, x)[0] == 0.0
    assert daecore.sim_pos(x, orth)[0] == 1.0
    assert daecore.sim_neg(x, x, 0.5)[0] == 0.5
    assert daecore.sim_neg(x, orth, 0.5)[0] == 0.0
    assert daecore.sim_neg(x, -x, 0.0)[0] == 0.0


@settings(max_examples=80)
@given(arrays(np.float64, 5, elements=finite), st.floats(1e-3, 1e3))
def test_cosine_scale_invariance(x, c):
    x = x[None]
    # not bit-exact: c * x rounds, so allow a few ulps
    assert abs(daecore.sim_pos(x, c * x)[0]) <= 1e-14
    assert abs(daecore.sim_neg(x, c * x, 0.3)[0] - 0.7) <= 1e-14


def test_degenerate_vector_raises():
    with pytest.raises(DegenerateVectorError):
        daecore.cosine(np.zeros((1, 3)), np.ones((1, 3)))


def test_loss_sim_examples():
    a = LatentPair(np.array([[1.0, 2.0]]), np.array([[1.0, 0.0]]))
    assert daecore.loss_sim(a, a, 0.5) == 0.5
    b = LatentPair(np.array([[1.0, 2.0]]), np.array([[0.0, 3.0]]))
    assert daecore.loss_sim(a, b, 0.5) == 0.0
    rng = np.random.default_rng(1)
    p = LatentPair.split(rng.normal(size=(4, 6)))
    q = LatentPair.split(rng.normal(size=(4, 6)))
    assert daecore.loss_sim(p, q, 0.2) == daecore.loss_sim(q, p, 0.2)
    assert daecore.loss_sim(p, q, 0.2) >= 0


def test_swap():
    hq = LatentPair(np.array([["sq"]]), np.array([["bq"]]))
    hk = LatentPair(np.array([["sk"]]), np.array([["bk"]]))
    h_qk, h_kq = daecore.swap(hq, hk)
    assert (h_qk.signer[0, 0], h_qk.background[0, 0]) == ("sq", "bk")
    assert (h_kq.signer[0, 0], h_kq.background[0, 0]) == ("sk", "bq")
    back = daecore.swap(*daecore.swap(hq, hk))
    assert np.array_equal(back[0].join(), hq.join()) and np.array_equal(back[1].join(), hk.join())
    same = daecore.swap(hq, hq)
    assert np.array_equal(same[0].join(), hq.join())


def test_loss_rec_examples():
    f = np.array([[1.0, -2.0]])
    assert daecore.loss_rec(f, f, f, f) == 0.0
    assert daecore.loss_rec(f + [[1.0, 0.0]], f, f, f) == 1.0
    assert daecore.loss_rec(f + [[0.5, -0.5]], f, f, f) == 1.0
    assert daecore.loss_rec(f + [[0.5, -0.5]], f, f, f, reduction="mean") == 0.5


def test_swapped_reconstruction_equals_unswapped_when_latents_match():
    rng = np.random.default_rng(2)
    p = daecore.init_dae(6, 4, rng)
    f = rng.normal(size=(3, 6))
    h = daecore.encode(p, f)
    h_qk, h_kq = daecore.swap(h, h)
    swapped = daecore.loss_rec(daecore.decode(p, h_kq), f, daecore.decode(p, h_qk), f)
    plain = daecore.loss_rec(daecore.decode(p, h), f, daecore.decode(p, h), f)
    assert swapped == plain


def test_momentum_examples_and_contraction():
    t = {"w": np.array([2.0, -1.0])}
    s = {"w": np.array([0.0, 3.0])}
    assert np.array_equal(daecore.momentum_update(t, s, 1.0)["w"], t["w"])
    assert np.array_equal(daecore.momentum_update(t, s, 0.0)["w"], s["w"])
    assert daecore.momentum_update(t, s, 0.5)["w"][0] == 1.0
    out = daecore.momentum_update(t, s, 0.9)["w"]
    np.testing.assert_allclose(np.abs(out - s["w"]), 0.9 * np.abs(t["w"] - s["w"]), rtol=1e-15)
    with pytest.raises(ValueError):
        daecore.momentum_update(t, s, 1.5)


def test_momentum_matches_closed_form_trajectory():
    rng = np.random.default_rng(3)
    m, n = 0.99, 1000
    students = rng.normal(size=n)
    theta0 = 0.7
    teacher = {"w": np.array(theta0)}
    for s in students:
        teacher = daecore.momentum_update(teacher, {"w": np.array(s)}, m)
    closed = m**n * theta0 + (1 - m) * sum(m ** (n - 1 - i) * s for i, s in enumerate(students))
    assert abs(float(teacher["w"]) - closed) <= 1e-12


def test_total_loss():
    assert daecore.total_loss(0, 0, 0) == 0
    assert daecore.total_loss(1, 0.5, 0.25) == 1.75
    assert daecore.total_loss(0, 0, 0, LossConfig(l_va=2, alpha=3)) == 6
    with pytest.raises(ValueError):
        daecore.total_loss(float("nan"), 0, 0)


def test_total_loss_linear_in_alpha():
    base = daecore.total_loss(1.0, 0.5, 0.25, LossConfig(l_va=2.0, alpha=0.0))
    for a in (1.0, 3.0, 5.0, 25.0):
        assert daecore.total_loss(1.0, 0.5, 0.25, LossConfig(l_va=2.0, alpha=a)) == base + a * 2.0


def test_clamp_region_gradients_vanish():
    D = 4
    ident = _identity_params(D)
    f_q = np.array([[1.0, 2.0, 1.0, 0.0]])
    f_k = np.array([[1.0, 2.0, 0.0, 1.0]])  # same signer half, orthogonal backgrounds
    cfg = LossConfig(activation="identity", margin=0.5)
    out = daecore.dae_losses_and_grads(ident, ident, f_q, f_k, cfg)
    assert out.l_rec == 0.0 and out.l_sim == 0.0
    for k, g in out.grads.items():
        np.testing.assert_allclose(g, 0, atol=1e-15, err_msg=k)
    np.testing.assert_allclose(out.d_f_q, 0, atol=1e-15)


def test_teacher_receives_no_gradient():
    rng = np.random.default_rng(4)
    p = daecore.init_dae(6, 4, rng)
    teacher = {k: v + 0.1 for k, v in p.items()}
    snapshot = {k: v.copy() for k, v in teacher.items()}
    out = daecore.dae_losses_and_grads(p, teacher, rng.normal(size=(3, 6)), rng.normal(size=(3, 6)))
    assert set(out.grads) == set(p)
    assert all(np.array_equal(teacher[k], snapshot[k]) for k in teacher)


def test_sim_pos_radial_gradient():
    rng = np.random.default_rng(5)
    x1, x2 = rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    g1, g2 = daecore.sim_pos_grad(x1, x2)
    np.testing.assert_allclose(np.sum(g1 * x1, axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(daecore.sim_pos(2 * x1, x2), daecore.sim_pos(x1, x2), atol=1e-15)


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(margin=2)
    with pytest.raises(ValueError):
        LossConfig(swap_orientation="sideways")
    with pytest.raises(ValueError):
        LossConfig(alpha=-1)


def test_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    p = daecore.init_dae(6, 4, rng)
    p["scalar_like"] = np.array([[1.5]])
    cfg = LossConfig(margin=0.25, alpha=5.0)
    daecore.save_params(tmp_path / "m.bin", p, cfg)
    q, cfg2 = daecore.load_params(tmp_path / "m.bin")
    assert list(q) == list(p)
    assert all(np.array_equal(p[k], q[k]) for k in p)
    assert cfg2 == cfg
    raw = (tmp_path / "m.bin").read_bytes()
    assert int.from_bytes(raw[:4], "little") == daecore.FORMAT_VERSION
    (tmp_path / "m.bin").write_bytes(raw + b"\0")
    with pytest.raises(ValueError):
        daecore.load_params(tmp_path / "m.bin")
