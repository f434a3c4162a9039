import math

import pytest

from vlsfopt import ChannelModel, parse_channel_spec
from vlsfopt.channels import (
    awgn_tilt_limit,
    cgf,
    moments,
    single_letter_law,
    success_prob,
)
from vlsfopt.errors import OutOfConvergenceRegion, UnsupportedLaw

AWGN = ChannelModel("awgn", 1.0)
BSC = ChannelModel("bsc", 0.11)
BEC = ChannelModel("bec", 0.5)


def test_parse_channel_spec_round_trips():
    for text, variant, param in [
        ("awgn:snr=1.0", "awgn", 1.0),
        ("bsc:delta=0.11", "bsc", 0.11),
        ("bec:delta=0.5", "bec", 0.5),
        ("  AWGN:snr=2.5 ", "awgn", 2.5),
    ]:
        ch = parse_channel_spec(text)
        assert ch.variant == variant
        assert ch.param == param
        assert parse_channel_spec(ch.describe()) == ch


@pytest.mark.parametrize(
    "text",
    [
        "awgn",
        "awgn:delta=1.0",
        "bsc:snr=0.11",
        "laplace:b=1",
        "bsc:delta=abc",
        "bsc:delta=0.6",
        "bec:delta=1.5",
        "awgn:snr=0",
        "",
    ],
)
def test_parse_channel_spec_rejects_malformed(text):
    with pytest.raises(ValueError):
        parse_channel_spec(text)


def test_channel_model_validates_parameter_ranges():
    with pytest.raises(ValueError):
        ChannelModel("awgn", -1.0)
    with pytest.raises(ValueError):
        ChannelModel("bsc", 0.5)
    with pytest.raises(ValueError):
        ChannelModel("bec", 0.0)
    with pytest.raises(ValueError):
        ChannelModel("nonsense", 0.1)


def test_single_letter_law_geometry():
    """The per-symbol laws carry the documented shift and lattice constants."""
    law_a = single_letter_law(AWGN)
    assert law_a.lattice is None
    assert not law_a.is_lattice
    assert law_a.shift == pytest.approx(0.5 * math.log(2.0))

    law_b = single_letter_law(BSC)
    assert law_b.is_lattice
    assert law_b.lattice.origin == pytest.approx(math.log(0.22))
    assert law_b.lattice.step == pytest.approx(math.log(0.89 / 0.11))
    assert law_b.shift == pytest.approx(math.log(0.22))
    assert success_prob(law_b) == pytest.approx(0.89)

    law_e = single_letter_law(BEC)
    assert law_e.lattice.origin == 0.0
    assert law_e.lattice.step == 1.0
    assert law_e.shift == 0.0
    assert success_prob(law_e) == pytest.approx(0.5)


def test_success_prob_rejects_continuous_law():
    with pytest.raises(UnsupportedLaw):
        success_prob(single_letter_law(AWGN))


def test_moments_match_direct_bernoulli_cumulants():
    """Lattice moments equal the binomial cumulants computed by hand."""
    d = 0.11
    law = single_letter_law(BSC)
    n = 37
    p, b, a = 1.0 - d, law.lattice.step, law.lattice.origin
    m = moments(law, n)
    assert m.mean == pytest.approx(n * (a + b * p), rel=1e-14)
    assert m.variance == pytest.approx(n * b * b * p * (1.0 - p), rel=1e-14)
    assert m.third_cumulant == pytest.approx(
        n * b ** 3 * p * (1.0 - p) * (1.0 - 2.0 * p), rel=1e-13
    )


def test_moments_awgn_mean_and_variance():
    law = single_letter_law(AWGN)
    n = 64
    m = moments(law, n)
    assert m.mean == pytest.approx(n * 0.5 * math.log(2.0), rel=1e-14)
    assert m.variance == pytest.approx(n * 0.5, rel=1e-14)
    assert m.third_cumulant == 0.0


@pytest.mark.parametrize("channel", [AWGN, BSC, BEC])
@pytest.mark.parametrize("s", [-0.9, -0.3, 0.0, 0.4, 0.8])
def test_cgf_derivatives_match_finite_differences(channel, s):
    """K', K'', K''' agree with central differences of K to 1e-6 relative."""
    law = single_letter_law(channel)
    n = 50.0
    h = 1e-5
    vals = cgf(law, s, n)
    up, dn = cgf(law, s + h, n), cgf(law, s - h, n)
    scale1 = max(1.0, abs(vals.K1))
    assert (up.K - dn.K) / (2 * h) == pytest.approx(vals.K1, abs=1e-6 * scale1)
    scale2 = max(1.0, abs(vals.K2))
    assert (up.K1 - dn.K1) / (2 * h) == pytest.approx(vals.K2, abs=1e-6 * scale2)
    scale3 = max(1.0, abs(vals.K3))
    assert (up.K2 - dn.K2) / (2 * h) == pytest.approx(vals.K3, abs=1e-6 * scale3)


def test_cgf_zero_tilt_is_centered():
    for channel in (AWGN, BSC, BEC):
        vals = cgf(single_letter_law(channel), 0.0, 25.0)
        assert vals.K == 0.0
        assert vals.K1 == pytest.approx(
            moments(single_letter_law(channel), 25.0).mean
            - 25.0 * single_letter_law(channel).shift,
            abs=1e-12,
        )
        assert vals.K2 > 0.0


def test_awgn_cgf_convergence_strip():
    law = single_letter_law(AWGN)
    limit = awgn_tilt_limit(AWGN)
    assert limit == pytest.approx(math.sqrt(2.0))
    cgf(law, 0.999 * limit, 10.0)
    with pytest.raises(OutOfConvergenceRegion):
        cgf(law, limit, 10.0)
    with pytest.raises(OutOfConvergenceRegion):
        cgf(law, -1.1 * limit, 10.0)


def test_lattice_cgf_finite_at_large_tilts():
    """Log-space evaluation keeps extreme tilts finite for lattice laws."""
    law = single_letter_law(BSC)
    for s in (-200.0, 200.0):
        vals = cgf(law, s, 30.0)
        assert math.isfinite(vals.K)
        assert math.isfinite(vals.K1)
        assert vals.K2 >= 0.0
