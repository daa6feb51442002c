"""Appearance-map container, evaluation, serialization and G-buffer render."""

import numpy as np
import pytest

import damkit.autodiff as ad
from damkit.dam import (DamArchitecture, DamParams, dam_forward_tensor,
                        deserialize_params, eval_dam, eval_dam_batch,
                        init_dam_params, render_gbuffer, serialize_params)
from damkit.errors import ConfigurationError, FormatError, InputError
from damkit.gbuffer import GBuffer

from helpers import finite_difference, random_unit_vectors, rel_err


class TestArchitecture:
    def test_default_param_count_is_3360(self):
        arch = DamArchitecture()
        assert arch.hidden == (48, 58)
        assert arch.exact_param_count() == 3355
        assert arch.param_count() == 3360

    def test_param_count_formula(self):
        arch = DamArchitecture(hidden=(4,))
        # 6*4+4 + 4*3+3 = 43, padded to 48
        assert arch.exact_param_count() == 43
        assert arch.param_count() == 48

    def test_bad_activation_count(self):
        with pytest.raises(ConfigurationError):
            DamArchitecture(hidden=(8,), activations=("relu",))

    def test_theta_length_enforced(self):
        with pytest.raises(ConfigurationError):
            DamParams(theta=np.zeros(10), arch=DamArchitecture())


class TestEval:
    def test_zero_theta_outputs_zero(self):
        params = DamParams(theta=np.zeros(3360))
        rng = np.random.default_rng(0)
        v = random_unit_vectors(rng, 10)
        n = random_unit_vectors(rng, 10)
        out = eval_dam_batch(params, v, n)
        assert np.allclose(out, 0.0)

    def test_single_sample_matches_batch(self):
        params = init_dam_params(seed=3)
        rng = np.random.default_rng(1)
        v = random_unit_vectors(rng, 1)
        n = random_unit_vectors(rng, 1)
        a = eval_dam(params, v[0], n[0])
        b = eval_dam_batch(params, v, n)[0]
        assert np.array_equal(a, b)

    def test_non_unit_input_rejected(self):
        params = init_dam_params(seed=0)
        with pytest.raises(InputError):
            eval_dam(params, np.array([2.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0]))

    def test_determinism_and_continuity(self):
        params = init_dam_params(seed=5)
        rng = np.random.default_rng(2)
        v = random_unit_vectors(rng, 200)
        n = random_unit_vectors(rng, 200)
        a = eval_dam_batch(params, v, n)
        b = eval_dam_batch(params, v, n)
        assert np.array_equal(a, b)
        # small perturbation changes output by less than 1e-2
        dv = v + 1e-5 * random_unit_vectors(rng, 200)
        dv /= np.linalg.norm(dv, axis=1, keepdims=True)
        c = eval_dam_batch(params, dv, n)
        assert np.abs(c - a).max() < 1e-2

    def test_graph_forward_matches_array_forward(self):
        params = init_dam_params(seed=7)
        rng = np.random.default_rng(3)
        v = random_unit_vectors(rng, 16)
        n = random_unit_vectors(rng, 16)
        x = np.concatenate([v, n], axis=1)
        got = dam_forward_tensor(ad.Tensor(params.theta.astype(np.float64)),
                                 ad.Tensor(x)).data
        want = eval_dam_batch(params, v, n)
        assert np.allclose(got, want, atol=1e-6)

    def test_graph_gradient_through_theta(self):
        # composed DAM graph gradient vs finite differences on a tiny arch
        arch = DamArchitecture(hidden=(5, 4))
        rng = np.random.default_rng(4)
        theta = rng.standard_normal(arch.param_count()) * 0.3
        x = np.concatenate([random_unit_vectors(rng, 6),
                            random_unit_vectors(rng, 6)], axis=1)

        def build(theta_):
            out = dam_forward_tensor(theta_, ad.Tensor(x), arch)
            return ad.mean_all(ad.square(out))

        t = ad.Tensor(theta.copy(), requires_grad=True)
        ad.backward(build(t))

        def f(arr):
            return float(build(ad.Tensor(arr)).data)

        want = finite_difference(f, [theta.copy()])[0]
        assert rel_err(t.grad, want) < 1e-4


class TestRenderGBuffer:
    def _flat_gbuffer(self, h, w, covered):
        normal = np.zeros((h, w, 3), dtype=np.float32)
        view = np.zeros((h, w, 3), dtype=np.float32)
        mask = np.zeros((h, w), dtype=np.float32)
        normal[covered] = (0, 0, 1)
        view[covered] = (0, 0, 1)
        mask[covered] = 1
        return GBuffer(rgb=np.zeros((h, w, 3)), position=np.zeros((h, w, 3)),
                       normal=normal, view_dir=view, mask=mask)

    def test_empty_mask_gives_background(self):
        g = self._flat_gbuffer(4, 4, covered=np.zeros((4, 4), dtype=bool))
        img = render_gbuffer(init_dam_params(seed=1), g, background=0.25)
        assert np.allclose(img, 0.25)

    def test_per_pixel_independence(self):
        covered = np.zeros((5, 5), dtype=bool)
        covered[1:4, 1:4] = True
        g = self._flat_gbuffer(5, 5, covered)
        rng = np.random.default_rng(9)
        idx = np.nonzero(covered)
        g.normal[idx] = random_unit_vectors(rng, idx[0].size).astype(np.float32)
        g.view_dir[idx] = random_unit_vectors(rng, idx[0].size).astype(np.float32)
        params = init_dam_params(seed=2)
        img = render_gbuffer(params, g)
        for i, j in zip(*idx):
            want = eval_dam(params, g.view_dir[i, j].astype(np.float64),
                            g.normal[i, j].astype(np.float64))
            assert np.array_equal(img[i, j], want)

    def test_transfer_to_other_buffer_shapes(self):
        # appearance transfer: same params applied to a different G-buffer
        params = init_dam_params(seed=3)
        g1 = self._flat_gbuffer(4, 6, covered=np.ones((4, 6), dtype=bool))
        g2 = self._flat_gbuffer(8, 8, covered=np.ones((8, 8), dtype=bool))
        a = render_gbuffer(params, g1)
        b = render_gbuffer(params, g2)
        assert a.shape == (4, 6, 3) and b.shape == (8, 8, 3)
        assert np.isfinite(a).all() and np.isfinite(b).all()


class TestSerialization:
    def test_round_trip_bit_exact(self):
        params = init_dam_params(seed=11)
        blob = serialize_params(params)
        back = deserialize_params(blob)
        assert back.arch == params.arch
        assert np.array_equal(back.theta, params.theta)
        assert back.theta.dtype == np.float32

    def test_truncated_rejected(self):
        blob = serialize_params(init_dam_params(seed=0))
        with pytest.raises(FormatError):
            deserialize_params(blob[:-5])

    def test_bad_magic_rejected(self):
        blob = serialize_params(init_dam_params(seed=0))
        with pytest.raises(FormatError):
            deserialize_params(b"XXXX" + blob[4:])

    def test_header_count_rule(self):
        # widths (48, 58): exact 3355, header must declare padded 3360
        blob = serialize_params(init_dam_params(seed=0))
        import struct
        nw = struct.unpack_from("<I", blob, 4)[0]
        widths = struct.unpack_from(f"<{nw}I", blob, 8)
        count = struct.unpack_from("<I", blob, 8 + 4 * nw)[0]
        assert widths == (48, 58)
        assert count == 3360

    def test_wrong_count_rejected(self):
        import struct
        params = init_dam_params(seed=0)
        blob = bytearray(serialize_params(params))
        struct.pack_into("<I", blob, 8 + 4 * 2, 3355)  # exact, unpadded
        with pytest.raises(FormatError):
            deserialize_params(bytes(blob))
