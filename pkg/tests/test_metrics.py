"""SSIM/DSSIM against the brute-force windowed oracle, plus report plumbing."""

import numpy as np
import pytest

from damkit.errors import InputError
from damkit.metrics import (EvalReport, dssim, sorted_error_curve, ssim,
                            summary_csv)

WINDOW = 11
SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


def oracle_ssim(a, b):
    """Direct windowed computation from the definition (slow, loops)."""
    a = np.clip(np.asarray(a, dtype=np.float64), 0.0, 1.0)
    b = np.clip(np.asarray(b, dtype=np.float64), 0.0, 1.0)
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    r = np.arange(WINDOW) - (WINDOW - 1) / 2.0
    k1 = np.exp(-(r * r) / (2.0 * SIGMA * SIGMA))
    k1 /= k1.sum()
    kern = np.outer(k1, k1)
    h, w, chans = a.shape
    per_channel = []
    for c in range(chans):
        vals = []
        for i in range(h - WINDOW + 1):
            for j in range(w - WINDOW + 1):
                wa = a[i:i + WINDOW, j:j + WINDOW, c]
                wb = b[i:i + WINDOW, j:j + WINDOW, c]
                mx = (kern * wa).sum()
                my = (kern * wb).sum()
                vx = (kern * wa * wa).sum() - mx * mx
                vy = (kern * wb * wb).sum() - my * my
                vxy = (kern * wa * wb).sum() - mx * my
                num = (2 * mx * my + C1) * (2 * vxy + C2)
                den = (mx * mx + my * my + C1) * (vx + vy + C2)
                vals.append(num / den)
        per_channel.append(np.mean(vals))
    return float(np.mean(per_channel))


class TestSSIM:
    def test_self_similarity_exact(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 1, (20, 20, 3))
        assert ssim(img, img) == 1.0
        assert dssim(img, img) == 0.0

    def test_black_vs_white(self):
        black = np.zeros((16, 16))
        white = np.ones((16, 16))
        got = dssim(black, white)
        want = (1.0 - oracle_ssim(black, white)) / 2.0
        # 0.5 minus a tiny constant-driven offset
        assert abs(got - want) < 1e-12
        assert 0.4995 < got < 0.5

    def test_noise_case_matches_oracle(self):
        rng = np.random.default_rng(1)
        a = np.full((18, 18), 0.5)
        b = np.clip(a + rng.normal(0, 0.1, a.shape), 0, 1)
        assert abs(ssim(a, b) - oracle_ssim(a, b)) < 1e-6

    def test_random_pairs_match_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            a = rng.uniform(0, 1, (14, 17, 3))
            b = rng.uniform(0, 1, (14, 17, 3))
            assert abs(ssim(a, b) - oracle_ssim(a, b)) < 1e-6

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(0, 1, (16, 16, 3))
        b = rng.uniform(0, 1, (16, 16, 3))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12

    def test_monotone_noise_degradation(self):
        rng = np.random.default_rng(4)
        base = rng.uniform(0.2, 0.8, (24, 24))
        prev = 1.0
        for k in range(1, 11):
            noisy = np.clip(base + rng.normal(0, 0.02 * k, base.shape), 0, 1)
            s = ssim(base, noisy)
            assert s < prev + 1e-9
            prev = s

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            ssim(np.zeros((12, 12)), np.zeros((13, 12)))

    def test_too_small_image(self):
        with pytest.raises(InputError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestReports:
    def _report(self):
        rep = EvalReport(task="novel_view", method="dam")
        rep.add("s0", 1, "point_light", 0.3)
        rep.add("s0", 2, "point_light", 0.1)
        rep.add("s1", 1, "envmap", 0.2)
        return rep

    def test_mean_matches_recomputation(self):
        rep = self._report()
        assert abs(rep.mean() - np.mean([0.3, 0.1, 0.2])) < 1e-15

    def test_mean_by_illumination(self):
        groups = self._report().mean_by_illumination()
        assert abs(groups["point_light"] - 0.2) < 1e-15
        assert abs(groups["envmap"] - 0.2) < 1e-15

    def test_sorted_curve(self, tmp_path):
        rep = self._report()
        curve = sorted_error_curve(rep, tmp_path / "curve.csv")
        assert np.all(np.diff(curve) >= 0)
        text = (tmp_path / "curve.csv").read_text().splitlines()
        assert text[0] == "rank,dssim"
        assert len(text) == 4

    def test_single_record_curve(self):
        rep = EvalReport(task="same_view", method="x")
        rep.add("s", 0, "envmap", 0.42)
        assert sorted_error_curve(rep).tolist() == [0.42]

    def test_csv_round_trip(self, tmp_path):
        rep = self._report()
        rep.to_csv(tmp_path / "per_record.csv")
        lines = (tmp_path / "per_record.csv").read_text().splitlines()
        assert lines[0] == "scene,view,method,task,illumination,dssim"
        assert len(lines) == 4
        summary_csv(tmp_path / "summary.csv", [rep])
        s = (tmp_path / "summary.csv").read_text().splitlines()
        assert s[0] == "task,method,illumination,mean_dssim"

    def test_empty_report_rejected(self):
        rep = EvalReport(task="t", method="m")
        with pytest.raises(InputError):
            rep.mean()
