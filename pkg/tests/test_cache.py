import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsdelab import FiltrationModel, build_uniform_grid, cache_load, cache_save, simulate_ensemble
from bsdelab.errors import CacheFormatError

MODELS = [FiltrationModel.natural(), FiltrationModel.enlarged(),
          FiltrationModel.initial("normal"), FiltrationModel.initial("bernoulli", 0.3),
          FiltrationModel.initial("uniform", -2, 5)]


def _same(a, b):
    assert a.N == b.N and a.J == b.J and a.seed == b.seed and a.model == b.model
    assert np.array_equal(a.grid.knots, b.grid.knots)
    assert np.array_equal(a.dw, b.dw)
    for x, y in ((a.dwp, b.dwp), (a.xi, b.xi)):
        assert (x is None) == (y is None)
        if x is not None:
            assert np.array_equal(x, y)


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.kind}-{m.xi_dist}")
def test_round_trip_bit_exact(tmp_path, model):
    ens = simulate_ensemble(build_uniform_grid(1.5, 12), model, 37, 2 ** 40 + 3)
    p = tmp_path / "e.bin"
    cache_save(ens, p)
    back = cache_load(p)
    _same(ens, back)
    assert back.same_scenarios(ens)


def test_header_layout(tmp_path):
    ens = simulate_ensemble(build_uniform_grid(1.0, 4), FiltrationModel.enlarged(), 3, 7)
    p = tmp_path / "e.bin"
    cache_save(ens, p)
    raw = p.read_bytes()
    magic, version, N, J, seed, tag = struct.unpack_from("<4sIQQQB", raw)
    assert (magic, version, N, J, seed, tag) == (b"BSDE", 1, 3, 4, 7, 1)
    (plen,) = struct.unpack_from("<I", raw, 33)
    assert len(raw) == 37 + plen + 8 * (5 + 2 * 3 * 4)


def _saved(tmp_path):
    ens = simulate_ensemble(build_uniform_grid(1.0, 4), FiltrationModel.initial(), 5, 1)
    p = tmp_path / "e.bin"
    cache_save(ens, p)
    return p, bytearray(p.read_bytes())


def test_bad_magic(tmp_path):
    p, raw = _saved(tmp_path)
    raw[:4] = b"XXXX"
    p.write_bytes(raw)
    with pytest.raises(CacheFormatError, match="magic"):
        cache_load(p)


def test_incompatible_version(tmp_path):
    p, raw = _saved(tmp_path)
    raw[4:8] = struct.pack("<I", 2)
    p.write_bytes(raw)
    with pytest.raises(CacheFormatError, match="version 2"):
        cache_load(p)


@pytest.mark.parametrize("cut", [10, 36, 40, -1])
def test_truncation(tmp_path, cut):
    p, raw = _saved(tmp_path)
    p.write_bytes(bytes(raw[:cut]))
    with pytest.raises(CacheFormatError, match="truncated"):
        cache_load(p)


def test_trailing_bytes(tmp_path):
    p, raw = _saved(tmp_path)
    p.write_bytes(bytes(raw) + b"\0" * 8)
    with pytest.raises(CacheFormatError, match="trailing"):
        cache_load(p)


def test_unknown_tag_and_bad_params(tmp_path):
    p, raw = _saved(tmp_path)
    bad = bytearray(raw)
    bad[32] = 9
    p.write_bytes(bad)
    with pytest.raises(CacheFormatError, match="model tag"):
        cache_load(p)
    bad = bytearray(raw)
    bad[37] = ord("#")
    p.write_bytes(bad)
    with pytest.raises(CacheFormatError, match="model parameters"):
        cache_load(p)


def test_decreasing_knots_rejected(tmp_path):
    p, raw = _saved(tmp_path)
    (plen,) = struct.unpack_from("<I", raw, 33)
    off = 37 + plen + 8
    raw[off:off + 8] = struct.pack("<d", 5.0)
    p.write_bytes(raw)
    with pytest.raises(CacheFormatError, match="invalid contents"):
        cache_load(p)


@settings(max_examples=25, deadline=None)
@given(N=st.integers(1, 20), J=st.integers(1, 10), seed=st.integers(0, 2 ** 64 - 1),
       m=st.sampled_from(range(len(MODELS))))
def test_round_trip_property(tmp_path_factory, N, J, seed, m):
    ens = simulate_ensemble(build_uniform_grid(1.0, J), MODELS[m], N, seed)
    p = tmp_path_factory.mktemp("c") / "e.bin"
    cache_save(ens, p)
    _same(ens, cache_load(p))
