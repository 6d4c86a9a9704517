import pytest

from supersum.params import FORMATS, FpParams, derive_params


# (precision, w) -> (alpha, beta, gamma, delta, k, l)
KNOWN_SIZES = {
    ("single", 16): (18, 3, 4, 5, 32, 48),
    ("single", 32): (9, 2, 5, 4, 64, 64),
    ("double", 16): (132, 5, 4, 8, 32, 80),
    ("double", 32): (66, 3, 5, 7, 64, 96),
}


@pytest.mark.parametrize("prec,w", sorted(KNOWN_SIZES))
def test_known_sizes(prec, w):
    prm = derive_params(prec, w)
    assert (prm.alpha, prm.beta, prm.gamma, prm.delta, prm.k, prm.l) == KNOWN_SIZES[
        (prec, w)
    ]


def test_formats_table():
    assert FORMATS["single"] == (8, 23)
    assert FORMATS["double"] == (11, 52)
    assert FORMATS["half"] == (5, 10)
    assert FORMATS["quad"] == (15, 112)


def test_tuple_precision_matches_name():
    assert derive_params((8, 23), 16) == derive_params("single", 16)


@pytest.mark.parametrize("prec", ["half", "single", "double", "quad"])
@pytest.mark.parametrize("w", [16, 32])
def test_derived_invariants(prec, w):
    prm = derive_params(prec, w)
    # grid coverage: alpha blocks span the whole exponent + mantissa range
    assert prm.alpha * prm.w >= (1 << prm.e) + prm.m
    assert (prm.alpha - 1) * prm.w < (1 << prm.e) + prm.m
    # a mantissa shifted by up to w-1 bits stays inside beta blocks
    assert (prm.m + 1) + (prm.w - 1) <= prm.w * prm.beta
    # an exponent-0 significand (m+3 bits after the subnormal scaling)
    # fits the window's lower beta-1 blocks
    assert prm.m + 3 <= prm.w * (prm.beta - 1)
    assert prm.e_bits <= prm.k
    assert prm.k == 2 * prm.w
    assert prm.l == prm.w * prm.beta
    assert 1 << prm.gamma == prm.w
    assert 1 << prm.delta >= prm.alpha > 1 << (prm.delta - 1)


def test_exponent_frame_properties():
    prm = derive_params("single", 16)
    assert prm.bias == 127
    assert prm.grid_offset == -152
    assert prm.p_max == 256
    assert prm.e_bits == 9
    prm = derive_params("double", 32)
    assert prm.grid_offset == -1077
    assert prm.p_max == 2048


@pytest.mark.parametrize("w", [3, 6, 12, 24, 0, 33])
def test_rejects_non_power_of_two_w(w):
    with pytest.raises(ValueError):
        derive_params("single", w)


def test_rejects_oversized_ring():
    with pytest.raises(ValueError):
        derive_params("single", 64)  # k = 128 > machine word


def test_rejects_unknown_precision():
    with pytest.raises(ValueError):
        derive_params("octuple", 16)


def test_params_frozen():
    prm = derive_params("single", 16)
    with pytest.raises(Exception):
        prm.w = 8


def test_direct_construction_for_toy_widths():
    # small-w plaintext studies build params by hand; the dataclass itself
    # stays permissive (derive_params owns the validation)
    prm = FpParams(e=4, m=3, w=4, alpha=8, beta=3, gamma=2, delta=3, k=8, l=12)
    assert prm.w == 4 and prm.alpha == 8
