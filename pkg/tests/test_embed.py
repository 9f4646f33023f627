"""Embedding pipeline tests: determinism, the per-point condensed
quantization-error bound, distortion reports, width estimation, the p
heuristic, and the packed code format."""

import numpy as np
import pytest

from nsq.condense import eta_bound
from nsq.embed import (
    CODE_MAGIC,
    EmbeddingPipeline,
    code_distance,
    embed_point,
    evaluate_embedding,
    gaussian_width_mc,
    pack_code,
    read_code,
    recommended_p,
    sample_l1_ball_points,
    unpack_code,
    write_code,
)
from nsq.quantize import Beta, MSQ, SigmaDelta


def beta_pipeline(n=16, m=16, p=4, seed=0, **kw):
    return EmbeddingPipeline.create(n, m, p, Beta(10 / 9, 1), seed=seed, **kw)


class TestEmbedPoint:
    def test_zero_point_blocks_identical(self):
        pl = beta_pipeline()
        code = embed_point(pl, np.zeros(16))
        blocks = code.reshape(4, 4)
        for row in blocks[1:]:
            np.testing.assert_array_equal(row, blocks[0])

    def test_determinism(self):
        pl = beta_pipeline(seed=5)
        x = sample_l1_ball_points(16, 1, seed=3)[0]
        np.testing.assert_array_equal(embed_point(pl, x), embed_point(pl, x))

    def test_same_seed_same_pipeline(self):
        a = beta_pipeline(seed=9)
        b = beta_pipeline(seed=9)
        x = sample_l1_ball_points(16, 1, seed=4)[0]
        np.testing.assert_array_equal(embed_point(a, x), embed_point(b, x))

    def test_codes_live_in_alphabet(self):
        pl = beta_pipeline()
        x = sample_l1_ball_points(16, 1, seed=8)[0]
        assert set(np.unique(embed_point(pl, x))) <= {-1.0, 1.0}

    def test_condensed_quantization_error_bound(self):
        for scheme, kwargs in [
            (Beta(10 / 9, 1), {}),
            (SigmaDelta(1), {}),
        ]:
            pl = EmbeddingPipeline.create(16, 16, 4, scheme, seed=2, **kwargs)
            pts = sample_l1_ball_points(16, 6, seed=7)
            codes = embed_point(pl, pts)
            y = pl.project(pts)
            err = np.linalg.norm(
                pl.condenser.apply(y) - pl.condenser.apply(codes), axis=-1
            )
            bound = (9 / 8) * pl.condenser.eta(pl.alphabet.delta)
            assert np.all(err <= bound + 1e-12)

    def test_warns_outside_l1_ball(self):
        pl = beta_pipeline()
        with pytest.warns(UserWarning, match="l1 ball"):
            embed_point(pl, np.ones(16))

    def test_l2_mode_rescales_alphabet(self):
        pl = EmbeddingPipeline.create(
            16, 16, 4, Beta(10 / 9, 1), seed=0, domain_mode="ell2-ball", l2_alpha=0.25
        )
        assert pl.alphabet.delta == pytest.approx(np.sqrt(1.25 * 16))
        x = np.zeros(16)
        x[3] = 1.0  # unit l2 norm, no warning expected in l2 mode
        code = embed_point(pl, x)
        assert set(np.unique(np.abs(code))) == {pl.alphabet.delta}

    def test_dimension_mismatch(self):
        pl = beta_pipeline()
        with pytest.raises(ValueError):
            embed_point(pl, np.zeros(15))

    def test_pipeline_validation(self):
        with pytest.raises(ValueError):
            EmbeddingPipeline.create(16, 15, 4, Beta(10 / 9, 1))  # p does not divide m


class TestCodeDistance:
    def test_zero_for_same_point(self):
        pl = beta_pipeline()
        x = sample_l1_ball_points(16, 1, seed=1)[0]
        c = embed_point(pl, x)
        assert code_distance(pl, c, c) == 0.0

    def test_symmetric(self):
        pl = beta_pipeline()
        pts = sample_l1_ball_points(16, 2, seed=2)
        c1, c2 = embed_point(pl, pts)
        assert code_distance(pl, c1, c2) == code_distance(pl, c2, c1)


class TestEvaluateEmbedding:
    def test_needs_two_points(self):
        pl = beta_pipeline()
        with pytest.raises(ValueError):
            evaluate_embedding(np.zeros((1, 16)), pl)

    def test_duplicate_points_have_zero_embedded_distance(self):
        pl = beta_pipeline()
        x = sample_l1_ball_points(16, 1, seed=3)[0]
        rep = evaluate_embedding(np.stack([x, x]), pl)
        assert rep.d_embedded[0] == 0.0
        assert rep.d_true[0] == 0.0

    def test_antipodal_pair_bookkeeping(self):
        pl = beta_pipeline()
        x = sample_l1_ball_points(16, 1, seed=4)[0] * 0.5
        rep = evaluate_embedding(np.stack([x, -x]), pl)
        assert rep.d_true[0] == pytest.approx(2 * np.linalg.norm(x))

    def test_fit_dominates_all_pairs(self):
        pl = beta_pipeline(n=64, m=32, p=8, seed=6)
        pts = sample_l1_ball_points(64, 12, seed=5)
        rep = evaluate_embedding(pts, pl)
        assert rep.max_violation <= 1e-12
        assert rep.alpha_fit >= 0 and rep.eta_fit >= 0
        resid = np.abs(rep.d_embedded - rep.d_true)
        assert np.all(resid <= rep.alpha_fit * rep.d_true + rep.eta_fit + 1e-12)

    def test_additive_residual_tracks_quantization(self):
        pl = beta_pipeline(n=64, m=32, p=8, seed=7)
        pts = sample_l1_ball_points(64, 8, seed=6)
        rep = evaluate_embedding(pts, pl)
        bound = 2 * (9 / 8) * pl.condenser.eta(pl.alphabet.delta)
        assert np.all(rep.add_residual <= bound + 1e-12)

    def test_quasi_isometry_sandwich(self):
        # |d_code - d| <= 0.5 d + 2*(9/8)*eta for every pair, across 100 runs
        violations = 0
        for seed in range(100):
            pl = beta_pipeline(n=1024, m=256, p=16, seed=seed)
            pts = sample_l1_ball_points(1024, 32, seed=seed + 1000)
            rep = evaluate_embedding(pts, pl, alpha=0.5)
            slack = 2 * (9 / 8) * pl.condenser.eta(pl.alphabet.delta)
            resid = np.abs(rep.d_embedded - rep.d_true)
            violations += int(np.sum(resid > 0.5 * rep.d_true + slack))
        assert violations == 0


class TestGaussianWidth:
    def test_singleton_zero(self):
        est = gaussian_width_mc(np.zeros((1, 4)), samples=100, seed=0)
        assert est.width == 0.0 and est.radius == 0.0

    def test_pm_basis_vector(self):
        pts = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
        est = gaussian_width_mc(pts, samples=40_000, seed=1)
        target = np.sqrt(2 / np.pi)
        assert abs(est.width - target) <= 3 * est.stderr + 1e-3

    def test_radius(self):
        x = np.array([[0.3, -0.4]])
        est = gaussian_width_mc(x, samples=10, seed=2)
        assert est.radius == pytest.approx(0.5)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            gaussian_width_mc(np.zeros((0, 3)), samples=10)


class TestRecommendedP:
    def test_beta_1024(self):
        assert recommended_p(1024, Beta(10 / 9, 1)) == 128

    def test_sd_1024(self):
        assert recommended_p(1024, SigmaDelta(1)) == 16

    def test_beta_8(self):
        assert recommended_p(8, Beta(10 / 9, 1)) == 2

    def test_divides(self):
        for m in (24, 36, 100, 4096):
            for scheme in (SigmaDelta(2), Beta(1.05, 1)):
                assert m % recommended_p(m, scheme) == 0

    def test_small_m_rejected(self):
        with pytest.raises(ValueError):
            recommended_p(3, SigmaDelta(1))
        with pytest.raises(ValueError):
            recommended_p(8, MSQ())


class TestCodeSerialization:
    def test_header_layout(self):
        q = np.array([1.0, -1.0, 1.0])
        blob = pack_code(q, lam=3, p=1, scheme=SigmaDelta(1))
        assert blob[:4] == CODE_MAGIC
        assert len(blob) == 16 + 1
        assert int.from_bytes(blob[4:8], "little") == 3  # m
        assert int.from_bytes(blob[8:10], "little") == 3  # lam
        assert int.from_bytes(blob[10:14], "little") == 1  # p
        assert blob[14] == 1  # sigma-delta tag

    def test_bit_packing_little_endian(self):
        q = np.array([1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0])
        blob = pack_code(q, lam=3, p=3, scheme=Beta(1.2, 3))
        bits = 0b01111001  # LSB-first: entries 0..7
        assert blob[16] == bits
        assert blob[17] == 0b1

    def test_roundtrip(self):
        rng = np.random.default_rng(3)
        q = rng.choice([-1.0, 1.0], size=77)
        code, meta = unpack_code(pack_code(q, lam=7, p=11, scheme=MSQ()))
        np.testing.assert_array_equal(code, q)
        assert meta == {"m": 77, "lam": 7, "p": 11, "scheme_tag": 0, "scheme": "msq"}

    def test_file_roundtrip(self, tmp_path):
        q = np.choose(np.arange(12) % 2, [-1.0, 1.0])
        path = tmp_path / "code.nsqc"
        write_code(path, q, lam=4, p=3, scheme=Beta(10 / 9, 4))
        code, meta = read_code(path)
        np.testing.assert_array_equal(code, q)
        assert meta["scheme"] == "beta" and meta["lam"] == 4

    def test_rejects_non_binary(self):
        with pytest.raises(ValueError):
            pack_code(np.array([1.0, 3.0]), lam=1, p=2, scheme=MSQ())

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            unpack_code(b"NOPE" + bytes(12))
        with pytest.raises(ValueError):
            unpack_code(b"\x00")


class TestL1BallSampler:
    def test_points_in_ball(self):
        pts = sample_l1_ball_points(64, 10, seed=0)
        assert np.all(np.abs(pts).sum(axis=1) <= 1.0 + 1e-12)

    def test_deterministic(self):
        np.testing.assert_array_equal(
            sample_l1_ball_points(16, 4, seed=1), sample_l1_ball_points(16, 4, seed=1)
        )
