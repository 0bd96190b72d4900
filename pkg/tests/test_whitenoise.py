import numpy as np
import pytest

from addequiv.basis import approximation_error, build_basis
from addequiv.design import DesignModel, HistogramDensity
from addequiv.diagnostics import gaussian_kl
from addequiv.errors import AlignmentError, AssumptionError, ParameterError
from addequiv.functions import ComponentFunction as C, additive, center_components, panel_function
from addequiv.operator import assemble_gamma, gamma_sqrt, midpoints, split_gamma
from addequiv.whitenoise import (
    export_path_csv,
    export_scores_csv,
    extract_scores,
    grid_to_path,
    h_system,
    score_law,
    sheet_scores,
    simulate_Q,
    simulate_Rn,
    simulate_S,
)

from conftest import fgm_uniform, skewed_pairwise, skewed_product

UNI = [HistogramDensity.uniform(), HistogramDensity.uniform()]


def centered_sine_linear():
    g = additive([C.sine(1.0, 1, 0.3), C.linear(2.0, -0.5)])
    return g, center_components(g, UNI)


def root_for(model, G):
    return gamma_sqrt(assemble_gamma(model, G))


class TestRn:
    def test_driftless_terminal_variance(self, rng):
        root = root_for(DesignModel.uniform(2), 8)
        zero = panel_function("zero", 2)
        ends = np.array([simulate_Rn(root, zero, 50, 2.0, 64, rng).values[-1] for _ in range(10_000)])
        np.testing.assert_allclose(ends.var(axis=0), 4.0 / 50, rtol=0.05)

    def test_centered_drift_uniform(self, rng):
        G, T = 64, 1024
        _, dec = centered_sine_linear()
        path = simulate_Rn(root_for(DesignModel.uniform(2), G), dec, 100, 1.0, T, rng)
        t = path.times
        exact = np.column_stack([
            (-np.cos(2 * np.pi * t + 0.3) + np.cos(0.3)) / (2 * np.pi) - 0.0 * t,
            t ** 2 - t,  # int of 2s - 1
        ])
        # first component is already centered on [0,1]
        assert np.max(np.abs(path.drift - exact)) < 2 / T

    def test_large_n_terminal(self, rng):
        model = skewed_pairwise(0.4)
        root = root_for(model, 32)
        g = panel_function("mixed", 2)
        path = simulate_Rn(root, g, 1e12, 1.0, 256, rng)
        gv = np.stack([c(midpoints(32)) * np.ones(32) for c in g.components])
        expected = root.apply(gv).mean(axis=1)
        np.testing.assert_allclose(path.values[-1], expected, atol=1e-5)

    def test_alignment(self, rng):
        with pytest.raises(AlignmentError):
            simulate_Rn(root_for(DesignModel.uniform(2), 12), panel_function("zero", 2), 10, 1.0, 64, rng)
        with pytest.raises(AlignmentError):
            grid_to_path(np.zeros((1, 3)), 8)

    def test_needs_root(self, rng):
        with pytest.raises(ParameterError):
            simulate_Rn(assemble_gamma(DesignModel.uniform(2), 8), panel_function("zero", 2), 10, 1.0, 64, rng)


class TestQ:
    def test_zero_components(self, rng):
        g = additive([C.constant(0.5), C.constant(0.25)])
        dec = center_components(g, UNI)
        shifts = []
        for _ in range(4000):
            out = simulate_Q(dec, UNI, 25, 1.0, 16, rng)
            np.testing.assert_allclose(out["paths"].drift, 0.0, atol=1e-12)
            shifts.append(out["shift_obs"])
        assert np.mean(shifts) == pytest.approx(0.75, abs=4 * 0.2 / np.sqrt(4000))
        assert np.std(shifts) == pytest.approx(0.2, rel=0.05)

    def test_matches_Rn_drift(self, rng):
        T = 1024
        _, dec = centered_sine_linear()
        q = simulate_Q(dec, UNI, 100, 1.0, T, rng)["paths"]
        r = simulate_Rn(root_for(DesignModel.uniform(2), 64), dec, 100, 1.0, T, rng)
        assert np.max(np.abs(q.drift - r.drift)) < 2 / T

    def test_h1_score_vanishes(self):
        margs = [HistogramDensity.from_weights([1, 3, 2, 2]), HistogramDensity.from_weights([2, 1, 1, 2])]
        model = DesignModel.product(margs)
        dec = center_components(panel_function("mixed", 2), margs)
        G = 128
        root = root_for(model, G)
        h1 = h_system(root, 1)[0]
        gstar = np.stack([c(midpoints(G)) for c in dec.centered_components])
        assert abs(root.inner(h1, root.apply(gstar))) < 1e-3

    def test_requires_product(self, rng):
        _, dec = centered_sine_linear()
        with pytest.raises(AssumptionError):
            simulate_Q(dec, fgm_uniform(0.3), 10, 1.0, 16, rng)

    def test_component_independence(self, rng):
        _, dec = centered_sine_linear()
        incs = np.array([simulate_Q(dec, UNI, 10, 1.0, 8, rng)["paths"].noise_increments()[3] for _ in range(10_000)])
        assert abs(np.corrcoef(incs.T)[0, 1]) < 0.05


class TestS:
    def test_driftless(self, rng):
        p = simulate_S(panel_function("zero", 2), UNI, 10, 1.0, 32, rng)
        np.testing.assert_array_equal(p.drift, 0.0)

    def test_terminal_drift_uniform(self, rng):
        g = panel_function("mixed", 2)
        T = 1024
        p = simulate_S(g, UNI, 10, 1.0, T, rng)
        expected = [0.5, 0.0]  # int t, int 0.5 sin(2 pi t + 0.7)
        np.testing.assert_allclose(p.drift[-1], expected, atol=2 / T)

    def test_drift_error_halves(self, rng):
        g = additive([C.linear(1.0)])
        errs = [abs(simulate_S(g, UNI[:1], 10, 1.0, T, rng).drift[-1, 0] - 0.5) for T in (64, 128, 256)]
        np.testing.assert_allclose(np.array(errs) * [64, 128, 256], 0.5, rtol=1e-10)

    def test_gamma_M_consistency(self, rng):
        model = skewed_pairwise(0.4)
        margs = model.marginals
        g = panel_function("mixed", 2)
        T = 512
        t = np.arange(T) / T
        f = [lambda s: np.cos(2 * np.pi * s), lambda s: 1.0 + s]
        sqrt_p = np.stack([np.sqrt(p.pdf(t)) for p in margs], axis=1)
        tests = [np.stack([fk(t) * np.ones(T) for fk in f], axis=1) * sqrt_p]
        reps, n, sigma = 4000, 50, 1.0
        vals = np.array([extract_scores(simulate_S(g, model, n, sigma, T, rng), tests).values[0] for _ in range(reps)])
        # reference <f, Gamma_M g> from the operator discretization
        G = 512
        gm, _, _ = split_gamma(model, G)
        tm = midpoints(G)
        fv = np.stack([fk(tm) * np.ones(G) for fk in f])
        gv = np.stack([c(tm) for c in g.components])
        ref = gm.inner(fv, gm.apply(gv))
        se = vals.std(ddof=1) / np.sqrt(reps)
        assert abs(vals.mean() - ref) < 4 * se + 5 / T

    def test_component_independence(self, rng):
        model = skewed_pairwise(0.4)
        incs = np.array([simulate_S(panel_function("sine", 2), model, 10, 1.0, 8, rng).noise_increments()[0] for _ in range(10_000)])
        assert abs(np.corrcoef(incs.T)[0, 1]) < 0.05


class TestScores:
    def test_h1_variance(self, rng):
        G, T = 16, 128
        root = root_for(fgm_uniform(0.5), G)
        h = grid_to_path(h_system(root, 1)[0], T)
        vals = np.array([
            extract_scores(simulate_Rn(root, panel_function("zero", 2), 20, 1.0, T, rng), [h]).values[0]
            for _ in range(10_000)
        ])
        assert vals.var() == pytest.approx(1 / 20, rel=0.10)

    def test_orthogonal_uncorrelated(self, rng):
        G, T = 16, 128
        root = root_for(fgm_uniform(0.5), G)
        hs = [grid_to_path(h, T) for h in h_system(root, 3)]
        vals = np.array([
            extract_scores(simulate_Rn(root, panel_function("sine", 2), 20, 1.0, T, rng), hs).values
            for _ in range(10_000)
        ])
        r = np.corrcoef(vals.T)
        assert np.max(np.abs(r - np.eye(3))) < 0.05

    def test_step_telescopes(self, rng):
        path = simulate_S(panel_function("mixed", 2), UNI, 10, 1.0, 64, rng)
        step = np.zeros((64, 2))
        step[10:30, 1] = 1.0
        s = extract_scores(path, [step]).values[0]
        assert s == pytest.approx(path.values[30, 1] - path.values[10, 1], abs=1e-12)

    def test_h_system_orthonormal(self):
        G = 32
        H = h_system(root_for(skewed_pairwise(0.3), G), 10)
        gram = np.einsum("adg,bdg->ab", H, H) / G
        np.testing.assert_allclose(gram, np.eye(10), atol=1e-10)

    def test_increment_whiteness(self, rng):
        root = root_for(skewed_pairwise(0.3), 16)
        T, reps = 64, 500
        z = np.concatenate([
            simulate_Rn(root, panel_function("mixed", 2), 30, 1.5, T, rng).noise_increments().ravel()
            for _ in range(reps)
        ]) / (1.5 / np.sqrt(30) / np.sqrt(T))
        assert abs(z.mean()) < 4 / np.sqrt(z.size)
        assert abs(z.var() - 1) < 0.05

    def test_decomposition_consistency(self, rng):
        # independent uniform design: scores of R_n against {h_j} versus the
        # shift observation and the Q paths
        G, T, n, sigma, reps = 32, 256, 100, 1.0, 2000
        g, dec = centered_sine_linear()
        root = root_for(DesignModel.uniform(2), G)
        H = h_system(root, 5)
        tests = [grid_to_path(h, T) for h in H]
        a = np.array([extract_scores(simulate_Rn(root, g, n, sigma, T, rng), tests).values for _ in range(reps)])
        b = []
        for _ in range(reps):
            out = simulate_Q(dec, UNI, n, sigma, T, rng)
            b.append(np.concatenate([[out["shift_obs"]], extract_scores(out["paths"], tests[1:]).values]))
        b = np.array(b)
        se = np.sqrt(a.var(0, ddof=1) / reps + b.var(0, ddof=1) / reps)
        assert np.all(np.abs(a.mean(0) - b.mean(0)) < 3 * se)
        np.testing.assert_allclose(a.var(0), b.var(0), rtol=0.15)


class TestSheet:
    def test_sieve_function_same_law(self):
        model = skewed_product(2)
        basis = build_basis(4, model)
        g = additive([C.piecewise_constant([1, 0, 2, 1]), C.piecewise_constant([0, 0, -1, 3])])
        mJ, cJ = score_law(g, model, basis, 100, 1.0, "J", extended=True)
        mK, cK = score_law(g, model, basis, 100, 1.0, "K", extended=True)
        np.testing.assert_allclose(mJ, mK, atol=1e-10)
        np.testing.assert_array_equal(cJ, cK)

    @pytest.mark.parametrize("panel_id", ["linear", "sine", "bump", "mixed"])
    def test_kl_closed_form(self, panel_id):
        model = fgm_uniform(0.5)
        basis = build_basis(8, model)
        g = panel_function(panel_id, 2, 0.5)
        n, sigma = 2000, 0.7
        err, _ = approximation_error(g, basis, model)
        mJ, cJ = score_law(g, model, basis, n, sigma, "J", extended=True)
        mK, cK = score_law(g, model, basis, n, sigma, "K", extended=True)
        assert gaussian_kl(mJ, cJ, mK, cK) == pytest.approx(n * err / (2 * sigma ** 2), abs=1e-10)

    def test_draw_moments(self, rng):
        model = DesignModel.uniform(2)
        basis = build_basis(4, model)
        g = panel_function("sine", 2)
        mean, _ = score_law(g, model, basis, 50, 1.0)
        draws = np.array([sheet_scores(g, model, basis, 50, 1.0, rng).values for _ in range(10_000)])
        assert np.all(np.abs(draws.mean(0) - mean) < 4 / np.sqrt(50 * 10_000))
        np.testing.assert_allclose(draws.var(0), 1 / 50, rtol=0.1)

    def test_bad_stage(self):
        model = DesignModel.uniform(1)
        with pytest.raises(ParameterError):
            score_law(panel_function("zero", 1), model, build_basis(2, model), 10, 1.0, "Q")


def test_exports(tmp_path, rng):
    path = simulate_S(panel_function("zero", 2), UNI, 10, 1.0, 8, rng)
    export_path_csv(path, tmp_path / "p.csv")
    assert len((tmp_path / "p.csv").read_text().splitlines()) == 1 + 9 * 2
    obs = [extract_scores(path, [np.ones((8, 2))])] * 3
    export_scores_csv(obs, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "test_index,replicate,value"
