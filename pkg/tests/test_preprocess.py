import numpy as np
import pytest
from scipy import stats

from fallcascade import preprocess as pp
from fallcascade.dataset import Trace


def make_trace(samples, rate=200, label="FALL"):
    return Trace("S1", "T1", label, rate, np.asarray(samples, dtype=float))


class TestNorms:
    def test_norm_xyz_345(self):
        assert pp.norm_xyz((3, 4, 0)) == pytest.approx(5.0)

    def test_norm_xyz_zero(self):
        assert pp.norm_xyz((0, 0, 0)) == 0.0

    def test_norm_xyz_ones(self):
        assert pp.norm_xyz((1, 1, 1)) == pytest.approx(1.7320508, abs=1e-6)

    def test_norm_hori_yz(self):
        assert pp.norm_hori((7, 3, 4)) == pytest.approx(5.0)

    def test_norm_hori_vertical_only(self):
        assert pp.norm_hori((5, 0, 0)) == 0.0

    def test_norm_hori_bounded_by_norm_xyz(self):
        rng = np.random.default_rng(0)
        for s in rng.normal(size=(50, 3)):
            assert pp.norm_hori(s) <= pp.norm_xyz(s) + 1e-12


class TestFindImpact:
    def test_unique_max(self):
        trace = make_trace([[1, 0, 0], [1, 0, 0], [5, 0, 0], [1, 0, 0]])
        assert pp.find_impact(trace) == 2

    def test_tie_breaks_earliest(self):
        trace = make_trace([[5, 0, 0], [0, 5, 0], [1, 0, 0]])
        assert pp.find_impact(trace) == 0

    def test_matches_linear_scan_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            samples = rng.normal(size=(rng.integers(5, 200), 3))
            norms = [pp.norm_xyz(s) for s in samples]
            oracle = int(np.argmax(norms))
            assert pp.find_impact(samples) == oracle


class TestExtractWindow:
    def test_published_window_lengths(self):
        assert pp.WindowSpec(2.0, 1.23).length(200) == 647
        assert pp.WindowSpec(2.0, 1.44).length(200) == 689

    def test_zero_padding_at_front(self):
        samples = np.ones((400, 3)) * 0.1
        samples[10] = [9, 0, 0]
        trace = make_trace(samples)
        window = pp.extract_window(trace, pp.WindowSpec(ws_f_s=0.5, ws_b_s=1.44))
        # WS_b * rate = 288, impact at 10 -> first 278 slots zero-filled
        assert np.all(window.samples[:278] == 0.0)
        assert np.any(window.samples[278] != 0.0)
        assert window.impact_index == 288

    def test_impact_attains_window_max(self, small_dataset):
        spec = pp.WindowSpec(0.6, 0.5)
        for trace in small_dataset.traces:
            window = pp.extract_window(trace, spec)
            norms = np.linalg.norm(window.samples, axis=1)
            assert norms[window.impact_index] == norms.max()

    def test_length_is_pure_function_of_spec_and_rate(self, small_dataset):
        spec = pp.WindowSpec(0.6, 0.5)
        lengths = {len(pp.extract_window(t, spec).samples)
                   for t in small_dataset.traces}
        assert lengths == {spec.length(50)}


class TestNormalization:
    def test_minmax_affine(self):
        assert pp.minmax_normalize([2, 4, 6]).tolist() == [0.0, 0.5, 1.0]

    def test_minmax_constant(self):
        assert pp.minmax_normalize([5, 5, 5]).tolist() == [0.0, 0.0, 0.0]

    def test_minmax_range_and_idempotence(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=100)
        out = pp.minmax_normalize(x)
        assert out.min() == 0.0 and out.max() == 1.0
        assert np.allclose(pp.minmax_normalize(out), out)

    def test_minmax_order_preserving(self):
        x = np.array([3.0, -1.0, 2.0, 10.0])
        out = pp.minmax_normalize(x)
        assert np.array_equal(np.argsort(out), np.argsort(x))

    def test_zscore_two_points(self):
        assert pp.zscore_standardize([1, 3]).tolist() == [-1.0, 1.0]

    def test_zscore_constant(self):
        assert pp.zscore_standardize([0, 0, 0]).tolist() == [0.0, 0.0, 0.0]

    def test_zscore_moments(self):
        rng = np.random.default_rng(2)
        x = rng.normal(3.0, 2.5, size=500)
        out = pp.zscore_standardize(x)
        assert abs(out.mean()) < 1e-9
        assert abs(out.std() - 1.0) < 1e-9


def _oracle_features(window, vertical_axis="x"):
    """Independent re-implementation from textbook formulas (scipy moments)."""
    ch = pp.channel_matrix(window.samples, vertical_axis)
    out = []
    out.extend(np.mean(ch, axis=0))
    out.extend(np.std(ch, axis=0))
    out.extend(np.var(ch, axis=0))
    out.extend(np.max(ch, axis=0))
    out.extend(np.min(ch, axis=0))
    out.extend(np.ptp(ch, axis=0))
    for j in range(6):
        col = ch[:, j]
        if np.var(col) == 0:
            out.append(0.0)
        else:
            out.append(stats.kurtosis(col, fisher=True, bias=True))
    for j in range(6):
        col = ch[:, j]
        if np.var(col) == 0:
            out.append(0.0)
        else:
            out.append(stats.skew(col, bias=True))
    pairs = [(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]
    for i, j in pairs:
        a, b = ch[:, i], ch[:, j]
        if np.var(a) == 0 or np.var(b) == 0:
            out.append(0.0)
        else:
            out.append(np.corrcoef(a, b)[0, 1])
    return np.array(out)


class TestFeatures:
    def test_feature_count_and_names(self):
        assert pp.N_FEATURES == 54
        assert len(pp.FEATURE_NAMES) == 54

    def test_constant_window(self):
        samples = np.tile([1.0, 0.0, 0.0], (20, 1))
        window = pp.Window(samples, 10, "ADL", "S1", "T1", 50)
        f = pp.extract_features(window)
        assert f[0] == 1.0       # mean ax
        assert f[6] == 0.0       # sd ax
        assert f[12] == 0.0      # var ax
        assert f[18] == 1.0 and f[24] == 1.0  # max/min ax
        assert f[30] == 0.0      # range ax
        assert np.all(f[36:48] == 0.0)  # shape stats of constant channels

    def test_equal_axes_perfect_correlation(self):
        rng = np.random.default_rng(4)
        col = rng.normal(size=30)
        samples = np.column_stack([col, col, rng.normal(size=30)])
        window = pp.Window(samples, 0, "ADL", "S1", "T1", 50)
        f = pp.extract_features(window)
        assert f[48] == pytest.approx(1.0)  # corr(ax, ay)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_independent_oracle(self, seed):
        rng = np.random.default_rng(seed)
        samples = rng.normal(scale=2.0, size=(64, 3))
        window = pp.Window(samples, 0, "FALL", "S1", "T1", 50)
        f = pp.extract_features(window)
        oracle = _oracle_features(window)
        np.testing.assert_allclose(f, oracle, rtol=1e-9, atol=1e-12)

    @pytest.mark.parametrize("axis", ["x", "y", "z"])
    def test_vertical_axis_configurable(self, axis):
        rng = np.random.default_rng(9)
        samples = rng.normal(size=(32, 3))
        window = pp.Window(samples, 0, "FALL", "S1", "T1", 50)
        f = pp.extract_features(window, vertical_axis=axis)
        np.testing.assert_allclose(f, _oracle_features(window, axis), rtol=1e-9)
