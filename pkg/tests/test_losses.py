import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anchorpose import anchors, losses, model_io, so3
from anchorpose.losses import AnchorPrediction, LossWeights


@pytest.fixture(scope="module")
def blob():
    return model_io.generate(model_io.ShapeSpec("blob", (0.05,), 200), np.random.default_rng(0))


@pytest.fixture(scope="module")
def blob_sym(blob):
    return model_io.ObjectModel.from_points("blob_s", blob.points, symmetric=True)


def zero_prediction(n, sigma=0.5):
    return AnchorPrediction(np.tile(so3.IDENTITY, (n, 1)), np.full(n, sigma))


def test_shape_match_zero_at_gt(rng, blob, blob_sym):
    gt = so3.random_rotation(rng)
    assert losses.shape_match_loss(gt, gt, blob) == pytest.approx(0.0, abs=1e-15)
    assert losses.shape_match_loss(gt, gt, blob_sym) == pytest.approx(0.0, abs=1e-15)
    assert losses.shape_match_loss(so3.negate(gt), gt, blob) == pytest.approx(0.0, abs=1e-15)


def test_shape_match_oracle(rng, blob):
    r, gt = so3.random_rotation(rng, size=2)
    ref = np.linalg.norm(so3.rotate(r, blob.points) - so3.rotate(gt, blob.points), axis=1).mean()
    assert losses.shape_match_loss(r, gt, blob) == pytest.approx(ref, rel=1e-12)
    assert losses.normalized_shape_match(r, gt, blob) == pytest.approx(ref / blob.diameter, rel=1e-12)


def test_symmetric_never_exceeds_asymmetric(rng, blob, blob_sym):
    for r, gt in so3.random_rotation(rng, size=2000).reshape(1000, 2, 4):
        assert losses.shape_match_loss(r, gt, blob_sym) <= losses.shape_match_loss(r, gt, blob) + 1e-15


def test_cylinder_invariance_under_sampling_symmetries():
    m = model_io.generate(model_io.ShapeSpec("cylinder", (0.05, 0.2), 2000), np.random.default_rng(4))
    for q in m.symmetries:
        assert losses.shape_match_loss(q, so3.identity(), m) < 1e-6 * m.diameter


def test_cylinder_near_invariance_at_any_angle():
    m = model_io.generate(model_io.ShapeSpec("cylinder", (0.05, 0.2), 2000), np.random.default_rng(4))
    for deg in (5, 37, 123):
        r = so3.from_axis_angle([0, 0, 1], np.radians(deg))
        assert losses.shape_match_loss(r, so3.identity(), m) < 1e-2 * m.diameter


@pytest.mark.parametrize("d", [1e-6, 1e-3, 0.05, 0.3, 0.999])
def test_uncertainty_term_minimized_at_distance(d):
    # coarse scan lands next to d ...
    grid = np.geomspace(1e-7, 1.0, 200_001)
    best = grid[np.argmin(losses.uncertainty_terms(grid, d))]
    assert abs(best - d) <= np.diff(grid).max() / d * d
    # ... and the slope changes sign within 1e-9 of it
    assert losses.uncertainty_grad(d - 1e-9, d) < 0 < losses.uncertainty_grad(d + 1e-9, d)
    assert losses.uncertainty_grad(d, d) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(0.0, 1.0))
def test_uncertainty_grad_matches_fd(sigma, d):
    fd = losses.grad_fd(lambda s: float(losses.uncertainty_terms(s[0], d)), np.array([sigma]), eps=1e-6)[0]
    an = losses.uncertainty_grad(sigma, d)
    # relative to the size of the two gradient terms, which stays meaningful where they cancel
    scale = 1.0 / sigma + d / sigma**2
    assert abs(fd - an) <= 1e-4 * scale


def test_probabilistic_loss_oracle(rng, blob):
    s = anchors.generate("tetra12")
    dev = so3.exp_map(rng.normal(scale=0.2, size=(12, 3)))
    sig = rng.uniform(0.01, 1.0, 12)
    gt = so3.random_rotation(rng)
    total, evals = losses.probabilistic_loss(AnchorPrediction(dev, sig), gt, s, blob)
    ref = 0.0
    for i in range(12):
        r = so3.compose(dev[i], s.quats[i])
        d = losses.shape_match_loss(r, gt, blob) / blob.diameter
        assert evals[i].index == i and evals[i].normalized == pytest.approx(d, rel=1e-12)
        ref += np.log(sig[i]) + d / sig[i]
    assert total == pytest.approx(ref, rel=1e-12)


def test_probabilistic_loss_rejects_bad_sigma(blob):
    s = anchors.generate("tetra12")
    for bad in (0.0, 1e-7, 1.5, np.nan):
        pred = zero_prediction(12)
        sig = pred.sigmas.copy()
        sig[3] = bad
        with pytest.raises(ValueError, match=r"sigma\[3\]"):
            losses.probabilistic_loss(AnchorPrediction(pred.deviations, sig), so3.identity(), s, blob)


def test_length_mismatch(blob):
    with pytest.raises(ValueError, match="11 anchors"):
        losses.evaluate_anchors(zero_prediction(11), so3.identity(), anchors.generate("tetra12"), blob)
    with pytest.raises(ValueError, match="deviations"):
        AnchorPrediction(np.tile(so3.IDENTITY, (3, 1)), [0.5, 0.5])


@pytest.mark.parametrize("name", anchors.GROUP_NAMES)
def test_regularization_zero_at_zero_deviation(name):
    s = anchors.generate(name)
    assert losses.regularization_loss(zero_prediction(len(s)), s) == 0.0


def test_regularization_positive_outside_cell():
    s = anchors.generate("octa24")
    dev = np.tile(so3.IDENTITY, (24, 1))
    dev[0] = so3.from_axis_angle([0, 0, 1], np.radians(80))  # past the 45 deg cell boundary
    reg = losses.regularization_loss(AnchorPrediction(dev, np.full(24, 0.5)), s)
    own = abs(dev[0] @ s.quats[0])
    assert reg == pytest.approx(np.abs(s.quats[1:] @ dev[0]).max() - own, rel=1e-12)
    assert reg > 0


def test_total_rotation_and_select_best():
    s = anchors.generate("tetra12")
    dev = so3.exp_map(np.tile([0.0, 0.0, 0.1], (12, 1)))
    sig = np.full(12, 0.4)
    sig[[5, 7]] = 0.1  # tie: lowest index wins
    i, r = losses.select_best(AnchorPrediction(dev, sig), s)
    assert i == 5
    np.testing.assert_allclose(r, so3.compose(dev[5], s.quats[5]), atol=1e-15)
    with pytest.raises(IndexError):
        losses.total_rotation(12, dev[0], s)


def test_smooth_l1():
    assert losses.smooth_l1_vectors([[0.5, 0, 0]], [[0, 0, 0]]) == pytest.approx(0.125 / 3)
    assert losses.smooth_l1_vectors([[3.0, 0, 0]], [[0, 0, 0]]) == pytest.approx(2.5 / 3)
    assert losses.smooth_l1_vectors([[1.0, 2, 3]], [[1.0, 2, 3]]) == 0.0
    with pytest.raises(ValueError, match="shape"):
        losses.smooth_l1_vectors(np.zeros((2, 3)), np.zeros((3, 3)))


def test_total_loss_weights():
    assert losses.total_loss(1.0, 0.5, 0.2) == pytest.approx(1.0 + 2 * 0.5 + 5 * 0.2)
    assert losses.total_loss(1.0, 0.5, 0.2, LossWeights(reg=1, trans=1)) == pytest.approx(1.7)
    with pytest.raises(ValueError):
        LossWeights(reg=0)


def test_grad_fd_on_quadratic():
    g = losses.grad_fd(lambda x: float(x @ x), np.array([1.0, -2.0, 3.0]))
    np.testing.assert_allclose(g, [2.0, -4.0, 6.0], rtol=1e-8)
    with pytest.raises(ValueError, match="not finite"), np.errstate(invalid="ignore", divide="ignore"):
        losses.grad_fd(lambda x: float(np.log(x[0])), np.array([0.0]))


def test_single_point_chord_length():
    r0 = 0.3
    # two antipodal points: each moves along the same chord (one point has no diameter)
    model = model_io.ObjectModel.from_points("pt", np.array([[r0, 0.0, 0.0], [-r0, 0.0, 0.0]]), symmetric=False)
    for phi in (0.1, 1.0, 2.5, np.pi):
        r = so3.from_axis_angle([0, 0, 1], phi)
        assert losses.shape_match_loss(r, so3.identity(), model) == pytest.approx(2 * r0 * np.sin(phi / 2), rel=1e-12)


def test_total_rotation_cases(rng):
    s = anchors.generate("tetra12")
    for i in range(12):
        np.testing.assert_allclose(losses.total_rotation(i, so3.identity(), s), s.quats[i], atol=1e-15)
    half_y = anchors.nearest_anchor(so3.from_axis_angle([0, 1, 0], np.pi), s)
    total = losses.total_rotation(int(half_y), so3.from_axis_angle([1, 0, 0], np.pi), s)
    assert so3.geodesic_angle(total, so3.from_axis_angle([0, 0, 1], np.pi)) < 1e-12
    assert so3.geodesic_angle(s.quats, total).min() < 1e-9
    dev = so3.random_rotation(rng, size=12)
    for i in range(12):
        total = losses.total_rotation(i, dev[i], s)
        assert so3.geodesic_angle(total, s.quats[i]) == pytest.approx(so3.angle(dev[i]), abs=1e-10)


def test_probabilistic_loss_at_sigma_equal_distance(rng, blob):
    s = anchors.generate("tetra12")
    dev = so3.exp_map(rng.normal(scale=0.3, size=(12, 3)))
    gt = so3.random_rotation(rng)
    d = np.array([e.normalized for e in losses.evaluate_anchors(AnchorPrediction(dev, np.full(12, 0.5)), gt, s, blob)])
    d = np.clip(d, losses.SIGMA_MIN, 1.0)
    best, _ = losses.probabilistic_loss(AnchorPrediction(dev, d), gt, s, blob)
    assert best == pytest.approx(np.sum(np.log(d) + 1.0), rel=1e-12)
    for i in range(12):
        for factor in (0.9, 1.1):
            sig = d.copy()
            sig[i] = np.clip(sig[i] * factor, losses.SIGMA_MIN, 1.0)
            if sig[i] == d[i]:
                continue
            worse, _ = losses.probabilistic_loss(AnchorPrediction(dev, sig), gt, s, blob)
            assert worse > best


def test_regularization_term_on_foreign_anchor():
    s = anchors.generate("octa24")
    i, j = 0, 5
    dev = np.tile(so3.IDENTITY, (24, 1))
    # deviation that carries anchor i exactly onto anchor j
    dev[i] = so3.compose(s.quats[j], so3.inverse(s.quats[i]))
    reg = losses.regularization_loss(AnchorPrediction(dev, np.full(24, 0.5)), s)
    assert reg == pytest.approx(1.0 - abs(s.quats[j] @ s.quats[i]), abs=1e-12)
    assert reg > 0


def _regularization_scalar(dev, quats):
    total = 0.0
    n = len(quats)
    for i in range(n):
        q = so3.canonicalize(so3.compose(dev[i], quats[i]))
        own = abs(sum(float(q[c]) * float(quats[i][c]) for c in range(4)))
        other = max(abs(sum(float(q[c]) * float(quats[j][c]) for c in range(4))) for j in range(n) if j != i)
        total += max(0.0, other - own)
    return total


@pytest.mark.parametrize("name", anchors.GROUP_NAMES)
def test_regularization_matches_scalar_oracle(name, rng):
    s = anchors.generate(name)
    dev = so3.exp_map(rng.normal(scale=0.8, size=(len(s), 3)))
    got = losses.regularization_loss(AnchorPrediction(dev, np.full(len(s), 0.5)), s)
    assert got == pytest.approx(_regularization_scalar(dev, s.quats), abs=1e-12)


def test_loss_spec_arithmetic():
    assert losses.total_loss(0.0, 0.0, 0.0) == 0.0
    assert losses.total_loss(1.0, 1.0, 1.0) == pytest.approx(8.0)
    assert losses.total_loss(1.0, 0.5, 0.2) == pytest.approx(3.0)
    assert losses.smooth_l1_vectors([[2.0, 0, 0]], [[0, 0, 0]]) == pytest.approx(1.5 / 3)


def test_select_best_examples():
    s = anchors.generate("tetra12")
    dev = np.tile(so3.IDENTITY, (12, 1))
    sig = np.full(12, 0.7)
    sig[:3] = [0.5, 0.1, 0.9]
    assert losses.select_best(AnchorPrediction(dev, sig), s)[0] == 1
    assert losses.select_best(AnchorPrediction(dev, np.full(12, 0.3)), s)[0] == 0


def test_grad_fd_constant_and_sigma_gradient(blob, rng):
    np.testing.assert_array_equal(losses.grad_fd(lambda x: 4.0, np.ones(5)), np.zeros(5))
    s = anchors.generate("tetra12")
    dev = so3.exp_map(rng.normal(scale=0.3, size=(12, 3)))
    gt = so3.random_rotation(rng)
    sig = rng.uniform(0.05, 0.9, 12)

    def total(x):
        return losses.probabilistic_loss(AnchorPrediction(dev, x), gt, s, blob)[0]

    d = np.array([e.normalized for e in losses.evaluate_anchors(AnchorPrediction(dev, sig), gt, s, blob)])
    np.testing.assert_allclose(losses.grad_fd(total, sig), losses.uncertainty_grad(sig, d), rtol=1e-4)
