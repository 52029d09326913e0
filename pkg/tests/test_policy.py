import pytest

from backend.augment_ops import ALL_KINDS, OpApplication, OpKind, apply_op
from backend.errors import ContractViolation
from backend.policy import (
    PolicyConfig,
    PolicyStreams,
    RaBaselineConfig,
    SubPolicy,
    augment_image,
    operator_ablation_subsets,
    sample_explore,
    sample_ra_baseline,
    sample_refine,
)


def streams(i=0, purpose="policy"):
    return PolicyStreams.derive(0, 1, 2, i, purpose)


def test_explore_length_and_ranges():
    for i in range(50):
        sub = sample_explore(PolicyConfig(depth=2), streams(i))
        assert len(sub) == 2
        assert all(0.0 <= m < 1.0 for m in sub.magnitudes)
        assert set(sub.signs) <= {1, -1}
        assert set(sub.kinds) <= set(ALL_KINDS)


def test_explore_is_deterministic():
    a = sample_explore(PolicyConfig(depth=3), streams(4))
    b = sample_explore(PolicyConfig(depth=3), streams(4))
    assert a == b


def test_explore_respects_subset():
    subset = (OpKind.ROTATE, OpKind.SOLARIZE)
    for i in range(30):
        sub = sample_explore(PolicyConfig(depth=4, operator_subset=subset), streams(i))
        assert set(sub.kinds) <= set(subset)


def test_refine_shares_the_mis():
    sub = sample_refine(PolicyConfig(depth=3), 0.37, streams())
    assert sub.magnitudes == (0.37, 0.37, 0.37)


def test_refine_zero_mis_is_neutral_except_parameterless(image_factory):
    cfg = PolicyConfig(depth=2, operator_subset=tuple(
        k for k in ALL_KINDS if k not in (OpKind.EQUALIZE, OpKind.AUTO_CONTRAST)))
    img = image_factory(9, 16)
    for i in range(20):
        assert augment_image(img, sample_refine(cfg, 0.0, streams(i))) == img


def test_refine_kinds_do_not_depend_on_mis():
    low = sample_refine(PolicyConfig(depth=4), 0.1, streams(3))
    high = sample_refine(PolicyConfig(depth=4), 0.9, streams(3))
    assert low.kinds == high.kinds
    assert low.signs == high.signs
    assert low.magnitudes != high.magnitudes


@pytest.mark.parametrize("mis", [-0.1, 1.2])
def test_refine_rejects_mis_out_of_range(mis):
    with pytest.raises(ContractViolation):
        sample_refine(PolicyConfig(), mis, streams())


@pytest.mark.parametrize("level,expected", [(9.0, 0.3), (30.0, 1.0), (0.0, 0.0)])
def test_ra_baseline_fixed_magnitude(level, expected):
    sub = sample_ra_baseline(RaBaselineConfig(n_ops=2, magnitude_level=level), streams())
    assert len(sub) == 2
    assert sub.magnitudes == pytest.approx((expected, expected))


def test_ra_noisy_magnitude_stays_clamped():
    cfg = RaBaselineConfig(n_ops=3, magnitude_level=29.0, magnitude_std=5.0)
    for i in range(40):
        sub = sample_ra_baseline(cfg, streams(i, "ra"))
        assert all(0.0 <= m <= 1.0 for m in sub.magnitudes)


def test_config_validation():
    with pytest.raises(ContractViolation):
        PolicyConfig(depth=0)
    with pytest.raises(ContractViolation):
        PolicyConfig(operator_subset=())
    with pytest.raises(ContractViolation):
        RaBaselineConfig(magnitude_level=31.0)


def test_identity_sub_policy_is_neutral(image_factory):
    img = image_factory(1, 8)
    sub = SubPolicy([OpApplication(OpKind.IDENTITY), OpApplication(OpKind.IDENTITY)])
    assert augment_image(img, sub) == img


def test_leave_one_out_subsets():
    subsets = operator_ablation_subsets()
    assert len(subsets) == 14
    for dropped, subset in subsets:
        assert len(subset) == 13
        assert dropped not in subset


# ---------------- Distributions ----------------
def test_kind_frequencies_are_uniform_per_slot():
    draws = 14_000
    counts = [dict.fromkeys(ALL_KINDS, 0) for _ in range(2)]
    for i in range(draws):
        sub = sample_explore(PolicyConfig(depth=2), PolicyStreams.derive(5, 0, 0, i, "frequency"))
        for slot, kind in enumerate(sub.kinds):
            counts[slot][kind] += 1
    for slot in counts:
        for kind, n in slot.items():
            assert n / draws == pytest.approx(1 / 14, abs=0.01), kind.value


def test_ra_noisy_magnitude_mean():
    cfg = RaBaselineConfig(n_ops=2, magnitude_level=9.0, magnitude_std=0.5)
    magnitudes = []
    for i in range(10_000):
        magnitudes.extend(sample_ra_baseline(cfg, PolicyStreams.derive(6, 0, 0, i, "ra")).magnitudes)
    assert sum(magnitudes) / len(magnitudes) == pytest.approx(0.3, abs=0.005)
    assert sum(m in (0.0, 1.0) for m in magnitudes) == 0


# ---------------- Application ----------------
def test_operator_order_matters(image_factory):
    img = image_factory(11, 16)
    rotate = OpApplication(OpKind.ROTATE, 1.0, 1)
    solarize = OpApplication(OpKind.SOLARIZE, 1.0)
    forward = augment_image(img, SubPolicy([rotate, solarize]))
    backward = augment_image(img, SubPolicy([solarize, rotate]))
    assert forward != backward


def test_single_operator_sub_policy_matches_apply_op(image_factory):
    img = image_factory(12, 16)
    for i in range(30):
        sub = sample_explore(PolicyConfig(depth=1), streams(i, "single"))
        assert augment_image(img, sub) == apply_op(img, sub.apps[0])


def test_identity_only_subset_leaves_the_batch_raw(image_factory):
    cfg = PolicyConfig(depth=3, operator_subset=(OpKind.IDENTITY,))
    batch = [image_factory(seed, 16, purpose="identity-batch") for seed in range(16)]
    explored = [augment_image(img, sample_explore(cfg, streams(i, "explore"))) for i, img in enumerate(batch)]
    refined = [augment_image(img, sample_refine(cfg, 0.8, streams(i, "refine"))) for i, img in enumerate(batch)]
    for raw, a, b in zip(batch, explored, refined):
        assert a.pixels.tobytes() == raw.pixels.tobytes()
        assert b.pixels.tobytes() == raw.pixels.tobytes()
