"""Quantizer oracle, straight-through exactness, loss structure, shapes."""

import dataclasses

import numpy as np
import pytest

from pluralfill import codec, nd
from pluralfill.configs import VQConfig, micro_config


def brute_force_indices(z: np.ndarray, cb: np.ndarray, chunks: int) -> np.ndarray:
    """Exhaustive nearest-neighbor search, float64, strict-< keeps first index."""
    k, d = cb.shape
    zc = z.astype(np.float64).reshape(*z.shape[:-1], chunks, d)
    cb64 = cb.astype(np.float64)
    flat = zc.reshape(-1, d)
    out = np.zeros(len(flat), np.int64)
    for i, vec in enumerate(flat):
        best, best_d = 0, np.inf
        for j in range(k):
            dist = float(((vec - cb64[j]) ** 2).sum())
            if dist < best_d:
                best, best_d = j, dist
        out[i] = best
    return out.reshape(zc.shape[:-1])


def test_quantizer_matches_exhaustive_search():
    # 1,000 random cases across chunk counts; exact index agreement required
    rng = np.random.default_rng(42)
    mismatches = 0
    for case in range(1000):
        chunks = (1, 2, 4, 8)[case % 4]
        d = int(rng.integers(1, 4))
        n_z = chunks * d
        k = int(rng.integers(2, 18))
        shape = (1, int(rng.integers(1, 4)), int(rng.integers(1, 4)), n_z)
        z = rng.normal(size=shape).astype(np.float32)
        cb = rng.normal(size=(k, d)).astype(np.float32)
        got = codec.nearest_code_indices(z, cb, chunks)
        want = brute_force_indices(z, cb, chunks)
        mismatches += int((got != want).sum())
    assert mismatches == 0


def test_quantizer_tie_breaks_to_smallest_index():
    cb = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], np.float32)  # rows 0,1 tie
    z = np.array([[[[1.0, 0.0]]]], np.float32)
    idx = codec.nearest_code_indices(z, cb, chunks=1)
    assert idx[0, 0, 0, 0] == 0


def test_quantized_rows_come_from_codebook():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(2, 3, 3, 8)).astype(np.float32)
    cb = rng.normal(size=(11, 2)).astype(np.float32)
    cl = codec.chunk_quantize(z, cb, chunks=4)
    assert cl.indices.shape == (2, 3, 3, 4)
    rows = cl.quantized.data.reshape(2, 3, 3, 4, 2)
    for pos in np.ndindex(2, 3, 3, 4):
        assert np.array_equal(rows[pos], cb[cl.indices[pos]])


def test_quantize_keeps_sequence_length_per_chunks():
    rng = np.random.default_rng(1)
    for chunks in (1, 2, 4, 8):
        z = rng.normal(size=(1, 4, 4, 8)).astype(np.float32)
        cb = rng.normal(size=(7, 8 // chunks)).astype(np.float32)
        cl = codec.chunk_quantize(z, cb, chunks)
        assert cl.indices.shape == (1, 4, 4, chunks)  # grid never flattens wider
        assert cl.quantized.shape == z.shape


def test_straight_through_bits_equal_quantized_100_cases():
    rng = np.random.default_rng(2)
    for _ in range(100):
        scale = 10.0 ** rng.integers(-4, 7)
        z = (rng.normal(size=(1, 2, 2, 8)) * scale).astype(np.float32)
        cb = rng.normal(size=(9, 4)).astype(np.float32)
        tape = nd.Tape()
        zl = tape.leaf(z, trainable=True)
        cl = codec.chunk_quantize(zl, tape.leaf(cb), chunks=2)
        assert cl.straight_through.data.tobytes() == cl.quantized.data.tobytes()


def test_quantizer_gradient_routes_to_encoder_bit_exact_100_cases():
    # d loss/d z through the quantizer must equal d loss/d quantized, bitwise
    rng = np.random.default_rng(3)
    for _ in range(100):
        z = rng.normal(size=(1, 2, 2, 6)).astype(np.float32)
        cb = rng.normal(size=(5, 3)).astype(np.float32)
        proj = rng.normal(size=(1, 2, 2, 6)).astype(np.float32)

        tape = nd.Tape()
        zl = tape.leaf(z, trainable=True)
        cl = codec.chunk_quantize(zl, tape.leaf(cb), chunks=2)
        g_through = nd.backward(nd.sum_(nd.mul(cl.straight_through, proj)))[zl]

        tape2 = nd.Tape()
        ql = tape2.leaf(cl.quantized.data.copy(), trainable=True)
        g_direct = nd.backward(nd.sum_(nd.mul(ql, proj)))[ql]
        assert g_through.tobytes() == g_direct.tobytes()


def test_codebook_gets_no_gradient_through_reconstruction_path():
    rng = np.random.default_rng(4)
    tape = nd.Tape()
    z = tape.leaf(rng.normal(size=(1, 2, 2, 4)).astype(np.float32), trainable=True)
    cb = tape.leaf(rng.normal(size=(6, 2)).astype(np.float32), trainable=True)
    cl = codec.chunk_quantize(z, cb, chunks=2)
    g = nd.backward(nd.sum_(cl.straight_through))
    assert not np.any(g[cb])
    assert np.all(g[z] == 1.0)


def test_encode_decode_shapes_and_range():
    cfg = micro_config().vq
    params = codec.init_codec_params(cfg, seed=0)
    x = np.random.default_rng(5).uniform(-1, 1, (2, 16, 16, 3)).astype(np.float32)
    z = codec.encode(params, x, cfg)
    assert z.shape == (2, 4, 4, 8)
    y = codec.decode(params, z, cfg)
    assert y.shape == (2, 16, 16, 3)
    assert float(np.abs(y.data).max()) <= 1.0


def test_encode_is_deterministic():
    cfg = micro_config().vq
    params = codec.init_codec_params(cfg, seed=0)
    x = np.random.default_rng(6).uniform(-1, 1, (1, 16, 16, 3)).astype(np.float32)
    assert np.array_equal(codec.encode(params, x, cfg).data,
                          codec.encode(params, x, cfg).data)


def test_vq_loss_terms_compose_with_beta():
    cfg = micro_config().vq
    params = codec.init_codec_params(cfg, seed=1)
    disc = codec.init_disc_params(cfg, seed=1)
    x = np.random.default_rng(7).uniform(-1, 1, (2, 16, 16, 3)).astype(np.float32)
    tape = nd.Tape()
    leaves = codec.as_leaves(tape, params)
    out = codec.vq_losses(x, leaves, disc, cfg, adv_weight=0.0)
    vq = float(out["vq"].data[0])
    cb_term = float(out["vq_codebook"].data[0])
    commit = float(out["vq_commit"].data[0])
    assert vq == pytest.approx(cb_term + cfg.beta * commit, rel=1e-5)
    assert "adv_g" not in out

    out_adv = codec.vq_losses(x, leaves, disc, cfg, adv_weight=1.0)
    assert "adv_g" in out_adv


def test_vq_gradient_separation():
    # codebook loss term moves only the codebook; commitment only the encoder side
    rng = np.random.default_rng(8)
    tape = nd.Tape()
    z = tape.leaf(rng.normal(size=(1, 2, 2, 4)).astype(np.float32), trainable=True)
    cb = tape.leaf(rng.normal(size=(6, 2)).astype(np.float32), trainable=True)
    cl = codec.chunk_quantize(z, cb, chunks=2)
    g1 = nd.backward(nd.squared_distance(nd.stop_gradient(z), cl.quantized))
    assert not np.any(g1[z]) and np.any(g1[cb])

    tape2 = nd.Tape()
    z2 = tape2.leaf(z.data.copy(), trainable=True)
    cb2 = tape2.leaf(cb.data.copy(), trainable=True)
    cl2 = codec.chunk_quantize(z2, cb2, chunks=2)
    g2 = nd.backward(nd.squared_distance(z2, nd.stop_gradient(cl2.quantized)))
    assert np.any(g2[z2]) and not np.any(g2[cb2])


def test_disc_hinge_matches_manual_formula():
    cfg = micro_config().vq
    disc = codec.init_disc_params(cfg, seed=2)
    rng = np.random.default_rng(9)
    xr = rng.uniform(-1, 1, (2, 16, 16, 3)).astype(np.float32)
    xf = rng.uniform(-1, 1, (2, 16, 16, 3)).astype(np.float32)
    got = float(codec.disc_hinge_loss(disc, xr, xf).data[0])
    dr = codec.disc_forward(disc, xr).data
    df = codec.disc_forward(disc, xf).data
    want = np.maximum(0, 1 - dr).mean() + np.maximum(0, 1 + df).mean()
    assert got == pytest.approx(float(want), rel=1e-6)


@pytest.mark.slow
def test_training_improves_reconstruction():
    from pluralfill.configs import toy_config
    from pluralfill.data import gen_synthetic_dataset
    from pluralfill.imageops import avgpool2

    rc = toy_config()
    rc = dataclasses.replace(
        rc, data=dataclasses.replace(rc.data, train_count=32))
    ds = gen_synthetic_dataset(rc.data)
    xs = avgpool2(np.stack(ds.train))
    _, _, log = codec.train_codebook_stage(xs, rc, steps=120)
    first = log[0]["probe_psnr"]
    tail = float(np.median([r["probe_psnr"] for r in log[-3:]]))
    assert tail > first + 2.0


def test_training_is_deterministic():
    rc = micro_config()
    from pluralfill.data import gen_synthetic_dataset
    from pluralfill.imageops import avgpool2

    ds = gen_synthetic_dataset(rc.data)
    xs = avgpool2(np.stack(ds.train))
    p1, d1, _ = codec.train_codebook_stage(xs, rc)
    p2, d2, _ = codec.train_codebook_stage(xs, rc)
    for k in p1:
        assert np.array_equal(p1[k], p2[k])
    for k in d1:
        assert np.array_equal(d1[k], d2[k])


def test_plans_cover_arbitrary_pow2_factors():
    cfg8 = VQConfig(image_size=64, latent_size=8, n_z=16, chunks=2, base_channels=8)
    cfg8.validate()
    params = codec.init_codec_params(cfg8, seed=0)
    x = np.zeros((1, 64, 64, 3), np.float32)
    z = codec.encode(params, x, cfg8)
    assert z.shape == (1, 8, 8, 16)
    assert codec.decode(params, z, cfg8).shape == (1, 64, 64, 3)
