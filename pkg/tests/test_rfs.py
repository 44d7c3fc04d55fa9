import numpy as np
import pytest

from searchtrack.rfs import (
    GaussianMixture,
    GlmbDensity,
    GlmbHypothesis,
    LmbDensity,
    TrackLabel,
    expected_cardinality,
    glmb_to_lmb,
    gm_moment_match,
    make_multi_object_state,
    LabelledState,
)

from conftest import random_gm, random_spd


L = TrackLabel


def unit_gm(mean):
    dim = len(mean)
    return GaussianMixture.single(np.asarray(mean, float), np.eye(dim))


class TestTrackLabel:
    def test_lexicographic_order(self):
        assert L(1, 0) < L(1, 1) < L(2, 0)
        assert sorted([L(2, 0), L(1, 1), L(1, 0)]) == [L(1, 0), L(1, 1), L(2, 0)]

    def test_structural_equality(self):
        assert L(3, 4) == L(3, 4)
        assert hash(L(3, 4)) == hash(L(3, 4))

    def test_immutable(self):
        with pytest.raises(AttributeError):
            L(0, 0).birth_time = 5


def test_multi_object_state_rejects_duplicate_labels():
    a = LabelledState(L(0, 0), (0.0, 0.0, 0.0, 0.0))
    b = LabelledState(L(0, 0), (1.0, 0.0, 1.0, 0.0))
    with pytest.raises(ValueError):
        make_multi_object_state([a, b])


class TestGaussianMixture:
    def test_weights_must_normalize(self):
        with pytest.raises(ValueError):
            GaussianMixture([0.5, 0.4], np.zeros((2, 2)), np.stack([np.eye(2)] * 2))

    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            GaussianMixture([1.5, -0.5], np.zeros((2, 2)), np.stack([np.eye(2)] * 2))

    def test_rejects_asymmetric_covariance(self):
        cov = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError):
            GaussianMixture([1.0], np.zeros((1, 2)), cov[None])

    def test_rejects_indefinite_covariance(self):
        cov = np.diag([1.0, -1.0])
        with pytest.raises(ValueError):
            GaussianMixture([1.0], np.zeros((1, 2)), cov[None])

    def test_jitter_saves_borderline_psd(self):
        cov = np.diag([1.0, 0.0])  # singular, fixable with 1e-9 jitter
        gm = GaussianMixture([1.0], np.zeros((1, 2)), cov[None])
        assert np.all(np.linalg.eigvalsh(gm.covs[0]) > 0)

    def test_compacted_prunes_and_caps(self, rng):
        n = 30
        w = np.full(n, 1.0 / n)
        means = rng.normal(size=(n, 2))
        covs = np.stack([np.eye(2)] * n)
        gm = GaussianMixture(w, means, covs).compacted(max_components=20)
        assert len(gm) == 20
        assert abs(gm.weights.sum() - 1.0) < 1e-12

    def test_compacted_preserves_moments(self, rng):
        gm = random_gm(rng, dim=3, n_comp=25)
        capped = gm.compacted(prune_weight=0.0, max_components=5)
        assert np.allclose(capped.mean(), gm.mean(), atol=1e-12)
        assert np.allclose(capped.covariance(), gm.covariance(), atol=1e-10)


class TestExpectedCardinality:
    def test_empty(self):
        assert expected_cardinality(LmbDensity({})) == 0.0

    def test_two_halves(self):
        lmb = LmbDensity({L(0, 0): (0.5, unit_gm([0, 0])), L(0, 1): (0.5, unit_gm([1, 1]))})
        assert expected_cardinality(lmb) == pytest.approx(1.0, abs=1e-15)

    def test_three_tracks(self):
        lmb = LmbDensity(
            {
                L(0, 0): (0.2, unit_gm([0, 0])),
                L(0, 1): (0.3, unit_gm([1, 1])),
                L(0, 2): (0.9, unit_gm([2, 2])),
            }
        )
        assert expected_cardinality(lmb) == pytest.approx(1.4, abs=1e-15)

    def test_existence_outside_unit_interval_rejected(self):
        with pytest.raises(ValueError):
            LmbDensity({L(0, 0): (1.2, unit_gm([0, 0]))})


class TestGlmbToLmb:
    def test_single_hypothesis_collapses(self):
        p = unit_gm([1.0, 2.0])
        glmb = GlmbDensity([GlmbHypothesis({L(0, 0)}, (), 1.0, {L(0, 0): p})])
        lmb = glmb_to_lmb(glmb)
        assert lmb.existence(L(0, 0)) == pytest.approx(1.0)
        assert np.allclose(lmb.density(L(0, 0)).means, p.means)

    def test_two_hypotheses_marginal(self):
        p = unit_gm([0.0, 0.0])
        glmb = GlmbDensity(
            [
                GlmbHypothesis(set(), (), 0.4, {}),
                GlmbHypothesis({L(0, 0)}, (), 0.6, {L(0, 0): p}),
            ]
        )
        lmb = glmb_to_lmb(glmb)
        assert set(lmb.labels()) == {L(0, 0)}
        assert lmb.existence(L(0, 0)) == pytest.approx(0.6, abs=1e-15)

    def test_rejects_unnormalized(self):
        p = unit_gm([0.0, 0.0])
        bad = GlmbDensity.empty()
        bad.hypotheses = [GlmbHypothesis({L(0, 0)}, (), 0.5, {L(0, 0): p})]
        with pytest.raises(ValueError):
            glmb_to_lmb(bad)

    def test_three_hypothesis_first_moment_vs_enumeration(self, rng):
        # brute force: r(l) = sum of weights of hypotheses containing l
        pa, pb = unit_gm([0.0, 0.0]), unit_gm([5.0, 5.0])
        pa2 = unit_gm([1.0, 1.0])
        la, lb = L(0, 0), L(0, 1)
        hyps = [
            GlmbHypothesis({la}, ("x",), 0.3, {la: pa}),
            GlmbHypothesis({la, lb}, ("y",), 0.5, {la: pa2, lb: pb}),
            GlmbHypothesis(set(), ("z",), 0.2, {}),
        ]
        glmb = GlmbDensity(hyps)
        lmb = glmb_to_lmb(glmb)
        r_expected = {la: 0.0, lb: 0.0}
        for h in hyps:
            for lab in h.labels:
                r_expected[lab] += h.weight
        assert lmb.existence(la) == pytest.approx(r_expected[la], abs=1e-12)
        assert lmb.existence(lb) == pytest.approx(r_expected[lb], abs=1e-12)
        # mixed density of la: 0.3*pa + 0.5*pa2, renormalized
        gm = lmb.density(la)
        mix_mean = (0.3 * pa.means[0] + 0.5 * pa2.means[0]) / 0.8
        assert np.allclose(gm.mean(), mix_mean, atol=1e-12)

    def test_preserves_expected_cardinality(self, rng):
        for trial in range(20):
            n_labels = rng.integers(1, 5)
            labels = [L(0, i) for i in range(n_labels)]
            hyps = []
            n_hyps = rng.integers(1, 6)
            w = rng.random(n_hyps) + 0.01
            w /= w.sum()
            for i in range(n_hyps):
                subset = {lab for lab in labels if rng.random() < 0.6}
                hyps.append(
                    GlmbHypothesis(
                        subset, (i,), w[i], {lab: random_gm(rng, 2) for lab in subset}
                    )
                )
            glmb = GlmbDensity(hyps)
            lmb = glmb_to_lmb(glmb)
            assert expected_cardinality(lmb) == pytest.approx(
                glmb.expected_cardinality(), abs=1e-9
            )


class TestMomentMatch:
    def test_single_component_identity(self):
        gm = unit_gm([1.0, 2.0])
        out = gm_moment_match(gm)
        assert np.allclose(out.means, gm.means)
        assert np.allclose(out.covs, gm.covs)

    def test_two_component_spread(self):
        gm = GaussianMixture(
            [0.5, 0.5], np.array([[-1.0], [1.0]]), np.array([[[1.0]], [[1.0]]])
        )
        out = gm_moment_match(gm)
        assert out.means[0][0] == pytest.approx(0.0, abs=1e-15)
        assert out.covs[0][0, 0] == pytest.approx(2.0, abs=1e-15)

    def test_exact_moment_preservation(self, rng):
        for _ in range(10):
            gm = random_gm(rng, dim=3, n_comp=6)
            out = gm_moment_match(gm)
            assert np.allclose(out.means[0], gm.mean(), atol=1e-12)
            assert np.allclose(out.covs[0], gm.covariance(), atol=1e-12)

    def test_against_monte_carlo(self, rng):
        gm = random_gm(rng, dim=2, n_comp=5, spread=3.0)
        out = gm_moment_match(gm)
        draws = gm.sample(rng, 10**6)
        mc_mean = draws.mean(axis=0)
        mc_cov = np.cov(draws.T)
        scale = np.sqrt(np.diag(gm.covariance()).max())
        assert np.allclose(out.means[0], mc_mean, atol=0.01 * scale * 3)
        assert np.allclose(out.covs[0], mc_cov, rtol=0.01 * 3, atol=0.05)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            GaussianMixture([], np.zeros((0, 2)), np.zeros((0, 2, 2)))
